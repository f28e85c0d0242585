"""Delay-coordinate embedding of scalar observable series."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

__all__ = ["EmbeddedSeries", "Dataset", "embed", "estimate_min_embedding"]


@dataclass
class EmbeddedSeries:
    """Sliding-window matrix of a uniformly sampled scalar series.

    Column ``j`` is ``[s(t_j), s(t_j + T_s), ..., s(t_j + (m-1) T_s)]`` where
    ``T_s = stride * dt`` and ``t_j`` advances by the raw sampling step.
    """

    m_delays: int
    stride: int
    vectors: np.ndarray          # (m_delays, n_columns)
    timestamps: np.ndarray       # (n_columns,)

    def __post_init__(self):
        if self.vectors.shape[0] != self.m_delays:
            raise ValueError("vectors row count must equal m_delays")
        if self.vectors.shape[1] != len(self.timestamps):
            raise ValueError("one timestamp per column required")

    @property
    def n_columns(self) -> int:
        return self.vectors.shape[1]


def embed(
    series,
    m: int,
    stride: int = 1,
    dt: Optional[float] = None,
    t0: float = 0.0,
) -> EmbeddedSeries:
    """Build the delay-coordinate matrix of a scalar series.

    ``series`` must contain at least ``(m - 1) * stride + 1`` samples.
    """
    s = np.asarray(series, dtype=float).ravel()
    if m < 1 or stride < 1:
        raise ValueError("m and stride must be positive integers")
    span = (m - 1) * stride
    n_cols = len(s) - span
    if n_cols < 1:
        raise ValueError("insufficient samples for embedding")
    vectors = np.empty((m, n_cols))
    for row in range(m):
        vectors[row] = s[row * stride : row * stride + n_cols]
    step = 1.0 if dt is None else dt
    timestamps = t0 + step * np.arange(n_cols)
    return EmbeddedSeries(m_delays=m, stride=stride, vectors=vectors, timestamps=timestamps)


def estimate_min_embedding(d_ssm: int) -> int:
    """Smallest embedding dimension guaranteeing a generic embedding: 2d + 1."""
    if d_ssm < 1:
        raise ValueError("d_ssm must be >= 1")
    return 2 * d_ssm + 1


@dataclass
class Dataset:
    """Embedded series split into train/test, anchored at the equilibrium.

    The anchor (the delay-embedded image of the fixed point the model is
    attached to) is subtracted from every column so the equilibrium maps to
    the origin of the embedding space.  For a zero observable at the
    equilibrium the anchor is the zero vector.
    """

    train: list
    test: list = field(default_factory=list)
    anchor: Optional[np.ndarray] = None

    def __post_init__(self):
        if not self.train:
            raise ValueError("at least one training series required")
        m = self.train[0].m_delays
        stride = self.train[0].stride
        for es in list(self.train) + list(self.test):
            if es.m_delays != m or es.stride != stride:
                raise ValueError("all series must share m_delays and stride")
        if self.anchor is None:
            self.anchor = np.zeros(m)
        else:
            self.anchor = np.asarray(self.anchor, dtype=float).ravel()
            if len(self.anchor) != m:
                raise ValueError("anchor length must equal m_delays")

    @property
    def m_delays(self) -> int:
        return self.train[0].m_delays

    def anchored(self, es: EmbeddedSeries) -> np.ndarray:
        return es.vectors - self.anchor[:, None]

    def train_matrices(self) -> list:
        return [self.anchored(es) for es in self.train]

    def test_matrices(self) -> list:
        return [self.anchored(es) for es in self.test]

    def train_matrix(self) -> np.ndarray:
        return np.hstack(self.train_matrices())
