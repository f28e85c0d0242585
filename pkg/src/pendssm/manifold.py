"""Invariant-manifold geometry: tangent space plus polynomial graph.

The manifold is parametrized as ``M(eta) = V1 eta + sum_k V_k eta^k`` with an
orthonormal tangent basis ``V1`` and nonlinear coefficients orthogonal to it,
so that the reduced coordinate ``eta = V1^T y`` inverts the parametrization
exactly on the manifold.  Fitting is a two-stage scheme: ``V1`` from the
leading singular vectors of the data, nonlinear coefficients by linear least
squares in monomial features, with optional alternating refinement of the
tangent space (the refinement keeps the best iterate, so the reported
residual never increases).
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .embedding import Dataset
from .polynomials import evaluate_monomials, monomial_exponents

__all__ = ["ManifoldModel", "DegenerateDataError", "fit_geometry", "project", "lift"]

ORTHONORMALITY_TOL = 1e-10
ORTHOGONALITY_TOL = 1e-8


class DegenerateDataError(ValueError):
    """Training data does not determine the requested coefficients."""


@dataclass
class ManifoldModel:
    """Polynomial manifold parametrization in anchored embedding coordinates."""

    V1: np.ndarray                 # (m, d), orthonormal columns
    exponents: list                # tuples, total degree 2..order
    V_nl: np.ndarray               # (m, n_monomials)
    order: int
    residual: float = 0.0
    amp_max: float = 0.0           # largest |eta| seen in training

    def __post_init__(self):
        self.V1 = np.asarray(self.V1, dtype=float)
        self.V_nl = np.asarray(self.V_nl, dtype=float)
        self.check_constraints()

    @property
    def m_dim(self) -> int:
        return self.V1.shape[0]

    @property
    def d(self) -> int:
        return self.V1.shape[1]

    def check_constraints(self) -> None:
        gram = self.V1.T @ self.V1
        err = np.max(np.abs(gram - np.eye(self.d)))
        if err > ORTHONORMALITY_TOL:
            raise ValueError(f"tangent basis not orthonormal (max err {err:.2e})")
        if self.V_nl.size:
            cross = np.max(np.abs(self.V1.T @ self.V_nl))
            if cross > ORTHOGONALITY_TOL:
                raise ValueError(
                    f"nonlinear coefficients not orthogonal to tangent (max {cross:.2e})"
                )

    def project(self, y: np.ndarray) -> np.ndarray:
        """Reduced coordinates ``V1^T y`` (single vector or columnwise)."""
        return self.V1.T @ np.asarray(y, dtype=float)

    def lift(self, eta: np.ndarray) -> np.ndarray:
        """Evaluate the parametrization at reduced coordinates."""
        eta = np.asarray(eta, dtype=float)
        single = eta.ndim == 1
        cols = eta[:, None] if single else eta
        if self.amp_max > 0.0:
            worst = float(np.max(np.linalg.norm(cols, axis=0)))
            if worst > 1.25 * self.amp_max:
                warnings.warn(
                    "lifting outside the fitted amplitude range "
                    f"(|eta|={worst:.3g} vs max {self.amp_max:.3g})",
                    stacklevel=2,
                )
        out = self.V1 @ cols
        if self.exponents:
            out = out + self.V_nl @ evaluate_monomials(cols, self.exponents)
        return out[:, 0] if single else out

    def to_dict(self) -> dict:
        return {
            "kind": "manifold",
            "order": self.order,
            "residual": self.residual,
            "amp_max": self.amp_max,
            "exponents": [list(e) for e in self.exponents],
            "V1": self.V1.tolist(),
            "V_nl": self.V_nl.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ManifoldModel":
        return cls(
            V1=np.asarray(data["V1"], dtype=float),
            exponents=[tuple(e) for e in data["exponents"]],
            V_nl=np.asarray(data["V_nl"], dtype=float),
            order=int(data["order"]),
            residual=float(data.get("residual", 0.0)),
            amp_max=float(data.get("amp_max", 0.0)),
        )

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path) -> "ManifoldModel":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def _as_matrix(data) -> np.ndarray:
    if isinstance(data, Dataset):
        return data.train_matrix()
    return np.asarray(data, dtype=float)


def _fit_nonlinear(Y, V1, exponents, check_rank=True):
    """Least-squares graph coefficients for fixed tangent space."""
    eta = V1.T @ Y
    resid = Y - V1 @ eta
    if not exponents:
        return eta, np.zeros((Y.shape[0], 0)), float(np.sum(resid**2))
    feats = evaluate_monomials(eta, exponents)
    sol, _, rank, _ = np.linalg.lstsq(feats.T, resid.T, rcond=None)
    if check_rank and rank < feats.shape[0]:
        raise DegenerateDataError("degenerate data: enrich trajectories")
    V_nl = sol.T
    # residual columns are already orthogonal to span(V1); the explicit
    # projection removes round-off leakage so the constraint holds bit-level
    V_nl = V_nl - V1 @ (V1.T @ V_nl)
    res = float(np.sum((resid - V_nl @ feats) ** 2))
    return eta, V_nl, res


def _orient(V1: np.ndarray) -> np.ndarray:
    """Deterministic sign convention: largest component of each column > 0."""
    V1 = V1.copy()
    for j in range(V1.shape[1]):
        k = int(np.argmax(np.abs(V1[:, j])))
        if V1[k, j] < 0:
            V1[:, j] = -V1[:, j]
    return V1


def _procrustes_align(V1: np.ndarray, reference: np.ndarray) -> np.ndarray:
    """Rotate the basis within its span to best match ``reference``."""
    u, _, vt = np.linalg.svd(V1.T @ reference)
    return V1 @ (u @ vt)


def fit_geometry(
    data,
    d: int,
    order: int = 3,
    refine_iters: int = 10,
    tol: float = 1e-9,
    reference_tangent: Optional[np.ndarray] = None,
) -> ManifoldModel:
    """Fit tangent space and polynomial graph to embedded data.

    ``data`` is a Dataset or an anchored ``(m, N)`` matrix with columns as
    points.  ``reference_tangent`` rotates the fitted basis within its span
    to best agree with a previous fit, which keeps reduced coordinates
    comparable across models trained at nearby parameter values.
    """
    Y = _as_matrix(data)
    m, n_pts = Y.shape
    if d < 1 or d > m:
        raise ValueError("d must be between 1 and the embedding dimension")
    if m <= 2 * d:
        warnings.warn(
            f"embedding dimension {m} does not exceed 2*d={2*d}; "
            "the delay map may fail to embed the manifold",
            stacklevel=2,
        )
    exponents = monomial_exponents(d, range(2, order + 1)) if order >= 2 else []
    n_unknown = d + len(exponents)
    if n_pts < n_unknown:
        raise DegenerateDataError("degenerate data: enrich trajectories")

    U, _, _ = np.linalg.svd(Y, full_matrices=False)
    V1 = U[:, :d]
    if reference_tangent is not None:
        V1 = _procrustes_align(V1, np.asarray(reference_tangent, dtype=float))
    else:
        V1 = _orient(V1)

    eta, V_nl, best_res = _fit_nonlinear(Y, V1, exponents)
    best = (V1, V_nl, eta)
    for _ in range(max(0, refine_iters)):
        # re-estimate the tangent space with the current graph removed
        feats = evaluate_monomials(best[2], exponents) if exponents else None
        Y_lin = Y - best[1] @ feats if exponents else Y
        U, _, _ = np.linalg.svd(Y_lin, full_matrices=False)
        V1_new = _procrustes_align(U[:, :d], best[0])
        eta_new, V_nl_new, res_new = _fit_nonlinear(Y, V1_new, exponents)
        if res_new < best_res - tol * max(1.0, best_res):
            best = (V1_new, V_nl_new, eta_new)
            best_res = res_new
        else:
            break
    V1, V_nl, eta = best
    amp_max = float(np.max(np.linalg.norm(eta, axis=0))) if eta.size else 0.0
    return ManifoldModel(
        V1=V1,
        exponents=exponents,
        V_nl=V_nl,
        order=order,
        residual=best_res,
        amp_max=amp_max,
    )


def project(model: ManifoldModel, y: np.ndarray) -> np.ndarray:
    return model.project(y)


def lift(model: ManifoldModel, eta: np.ndarray) -> np.ndarray:
    return model.lift(eta)
