"""Chaos statistics and model-validation metrics.

Conventions: time-ordered point sequences are passed as ``(N, d)`` arrays
(rows are samples); reduced trajectories from the dynamics module are
``(d, N)`` and should be transposed at the call site.  Exponents are
reported both per unit time and per sample wherever a sampling step is
known, since the two conventions differ only by that factor and published
values rarely state which one they use.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np
from scipy.signal import find_peaks
from scipy.spatial import cKDTree
from scipy.spatial.distance import cdist

__all__ = [
    "CorrelationDimensionResult",
    "LyapunovResult",
    "correlation_dimension",
    "lyapunov_model",
    "lyapunov_data",
    "pdf_histograms",
    "ks_statistic",
    "fft_spectrum",
    "dtw_path",
    "dtw_nmte",
]


@dataclass
class CorrelationDimensionResult:
    dimension: float
    stderr: float
    r_squared: float
    eps_range: tuple
    reliable: bool
    eps: np.ndarray = field(default_factory=lambda: np.empty(0))
    corr_sum: np.ndarray = field(default_factory=lambda: np.empty(0))


def _pair_distance_histogram(points: np.ndarray, theiler: int, edges: np.ndarray) -> np.ndarray:
    """Histogram of pairwise distances with a Theiler exclusion window."""
    n = len(points)
    counts = np.zeros(len(edges) - 1, dtype=np.int64)
    block = max(1, int(2e7 // max(n, 1)))
    for start in range(0, n, block):
        stop = min(n, start + block)
        d = cdist(points[start:stop], points)
        ii = np.arange(start, stop)[:, None]
        jj = np.arange(n)[None, :]
        mask = (jj - ii) > theiler
        counts += np.histogram(d[mask], bins=edges)[0]
    return counts


def correlation_dimension(
    points: np.ndarray,
    theiler: int = 0,
    n_eps: int = 48,
    min_decades: float = 1.0,
    r2_threshold: float = 0.98,
) -> CorrelationDimensionResult:
    """Correlation-sum slope estimate of the fractal dimension.

    Counts pairs closer than log-spaced radii (excluding pairs within the
    Theiler window), then fits the slope of ``log C`` against ``log eps``
    over the contiguous window with the best linearity among those spanning
    at least ``min_decades`` decades.  Results with best-window R^2 below
    ``r2_threshold`` are flagged unreliable.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    n = len(pts)
    if n < 2000:
        warnings.warn(f"only {n} points; at least 2000 recommended", stacklevel=2)
    # distance scale from a subsample
    sub = pts[:: max(1, n // 1000)]
    dsub = cdist(sub, sub)
    dmax = float(dsub.max())
    positive = dsub[dsub > 0]
    dmin = float(np.percentile(positive, 0.5)) if positive.size else 1e-6
    edges = np.geomspace(max(dmin * 0.25, dmax * 1e-6), dmax, n_eps + 1)
    counts = _pair_distance_histogram(pts, theiler, edges)
    cum = np.cumsum(counts).astype(float)
    n_pairs_total = cum[-1]
    eps = edges[1:]
    valid = cum > 0
    if n_pairs_total <= 0 or valid.sum() < 5:
        return CorrelationDimensionResult(np.nan, np.nan, 0.0, (np.nan, np.nan), False)
    C = cum / n_pairs_total
    # saturated bins carry no slope information
    usable = valid & (C < 0.9)
    log_e = np.log(eps[usable])
    log_c = np.log(C[usable])
    best = None
    n_use = len(log_e)
    for a in range(n_use - 4):
        for b in range(a + 4, n_use):
            span = log_e[b] - log_e[a]
            if span < min_decades * np.log(10.0):
                continue
            x, y = log_e[a : b + 1], log_c[a : b + 1]
            slope, intercept = np.polyfit(x, y, 1)
            resid = y - (slope * x + intercept)
            ss_res = float(resid @ resid)
            ss_tot = float(((y - y.mean()) ** 2).sum())
            r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 0.0
            nw = len(x)
            se = np.sqrt(ss_res / max(nw - 2, 1) / float(((x - x.mean()) ** 2).sum()))
            score = (r2, span)
            if best is None or score > best[0]:
                best = (score, slope, se, r2, (float(np.exp(x[0])), float(np.exp(x[-1]))))
    if best is None:
        # no window spans the required decades; fall back to the widest one
        x, y = log_e, log_c
        slope, intercept = np.polyfit(x, y, 1)
        resid = y - (slope * x + intercept)
        se = np.sqrt(
            float(resid @ resid) / max(len(x) - 2, 1) / float(((x - x.mean()) ** 2).sum())
        )
        ss_tot = float(((y - y.mean()) ** 2).sum())
        r2 = 1.0 - float(resid @ resid) / ss_tot if ss_tot > 0 else 0.0
        return CorrelationDimensionResult(
            slope, se, r2, (float(eps[usable][0]), float(eps[usable][-1])), False,
            eps=eps, corr_sum=C,
        )
    _, slope, se, r2, rng = best
    return CorrelationDimensionResult(
        dimension=float(slope),
        stderr=float(se),
        r_squared=float(r2),
        eps_range=rng,
        reliable=bool(r2 >= r2_threshold),
        eps=eps,
        corr_sum=C,
    )


@dataclass
class LyapunovResult:
    per_time: float
    per_sample: float
    dt: float
    reliable: bool = True
    details: dict = field(default_factory=dict)


def lyapunov_model(
    step: Union[Callable, object],
    x0: np.ndarray,
    n_steps: int,
    dt: float = 1.0,
    delta0_rel: float = 1e-8,
    discard_frac: float = 0.1,
    seed: int = 0,
) -> LyapunovResult:
    """Leading exponent of an iterated map by two-trajectory renormalization.

    ``step`` is either a callable ``x -> x_next`` or an object with a
    ``predict`` method (one-step map).  A perturbed companion trajectory is
    renormalized to fixed separation after every step; the exponent is the
    mean log stretching per step, skipping the initial ``discard_frac`` of
    the iteration as transient.
    """
    f = step.predict if hasattr(step, "predict") else step
    x = np.atleast_1d(np.asarray(x0, dtype=float)).copy()
    rng = np.random.default_rng(seed)
    direction = rng.normal(size=x.shape)
    direction /= np.linalg.norm(direction)
    scale = max(float(np.linalg.norm(x)), 1.0)
    delta0 = delta0_rel * scale
    y = x + delta0 * direction
    logs = []
    for _ in range(n_steps):
        x = np.atleast_1d(np.asarray(f(x), dtype=float))
        y = np.atleast_1d(np.asarray(f(y), dtype=float))
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise ValueError("trajectory became unbounded during the estimate")
        d = float(np.linalg.norm(y - x))
        if d == 0.0:
            logs.append(-np.inf)
            y = x + delta0 * direction
            continue
        logs.append(np.log(d / delta0))
        y = x + (delta0 / d) * (y - x)
    logs = np.asarray(logs[int(discard_frac * n_steps):])
    lam = float(np.mean(logs))
    return LyapunovResult(per_time=lam / dt, per_sample=lam, dt=dt)


def lyapunov_data(
    points: np.ndarray,
    dt: float,
    theiler: int = 10,
    n_follow: int = 0,
    min_neighbors: int = 50,
    fit_start: int = 1,
) -> LyapunovResult:
    """Nearest-neighbor divergence-rate estimate on a measured sequence.

    ``points`` is the time-ordered ``(N, d)`` sequence (a delay embedding or
    reduced coordinates).  For every point the nearest neighbor outside the
    Theiler window is found, the mean log separation is tracked over
    ``n_follow`` subsequent steps, and the exponent is the slope of the
    steepest linear stretch of that curve.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    n = len(pts)
    if n < 200:
        raise ValueError("need at least 200 points")
    if n_follow <= 0:
        n_follow = max(10, min(60, n // 20))
    usable = n - n_follow
    tree = cKDTree(pts[:usable])
    # query enough neighbors to escape the Theiler window
    k_query = min(usable, 2 * theiler + 8)
    dist, idx = tree.query(pts[:usable], k=k_query)
    nn = np.full(usable, -1)
    nn_dist = np.full(usable, np.inf)
    for col in range(1, k_query):
        cand = idx[:, col]
        ok = (np.abs(cand - np.arange(usable)) > theiler) & (nn < 0) & (dist[:, col] > 0)
        nn[ok] = cand[ok]
        nn_dist[ok] = dist[ok, col]
    valid = nn >= 0
    if valid.sum() < min_neighbors:
        return LyapunovResult(np.nan, np.nan, dt, reliable=False,
                              details={"n_pairs": int(valid.sum())})
    i0 = np.flatnonzero(valid)
    j0 = nn[valid]
    curve = np.empty(n_follow + 1)
    for k in range(n_follow + 1):
        seps = np.linalg.norm(pts[i0 + k] - pts[j0 + k], axis=1)
        good = seps > 0
        curve[k] = np.mean(np.log(seps[good])) if good.any() else np.nan
    ks = np.arange(n_follow + 1)
    finite = np.isfinite(curve)
    best = None
    for a in range(fit_start, n_follow - 3):
        for b in range(a + 3, n_follow + 1):
            if not finite[a : b + 1].all():
                continue
            x = ks[a : b + 1] * dt
            y = curve[a : b + 1]
            slope, intercept = np.polyfit(x, y, 1)
            resid = y - (slope * x + intercept)
            ss_tot = float(((y - y.mean()) ** 2).sum())
            r2 = 1.0 - float(resid @ resid) / ss_tot if ss_tot > 0 else 0.0
            score = r2 * np.sqrt(b - a)
            if best is None or score > best[0]:
                best = (score, slope, r2, (a, b))
    if best is None:
        return LyapunovResult(np.nan, np.nan, dt, reliable=False, details={})
    _, slope, r2, window = best
    return LyapunovResult(
        per_time=float(slope),
        per_sample=float(slope * dt),
        dt=dt,
        reliable=bool(r2 > 0.9),
        details={"r_squared": float(r2), "fit_window": window,
                 "n_pairs": int(valid.sum()), "curve": curve.tolist()},
    )


def pdf_histograms(etas: np.ndarray, bins: int = 50, ranges: Optional[list] = None):
    """Per-coordinate normalized histograms over symmetric ranges.

    ``etas`` is a ``(d, N)`` reduced trajectory.  Returns a list of
    ``(edges, density)`` pairs; each density integrates to one.
    """
    if bins < 10:
        raise ValueError("bins must be >= 10")
    etas = np.atleast_2d(np.asarray(etas, dtype=float))
    out = []
    for i, row in enumerate(etas):
        if ranges is not None:
            lim = ranges[i]
        else:
            lim = float(np.max(np.abs(row))) or 1.0
        density, edges = np.histogram(row, bins=bins, range=(-lim, lim), density=True)
        out.append((edges, density))
    return out


def ks_statistic(sample_a: np.ndarray, sample_b: np.ndarray) -> float:
    """Two-sample Kolmogorov-Smirnov statistic from empirical CDFs."""
    a = np.sort(np.asarray(sample_a, dtype=float).ravel())
    b = np.sort(np.asarray(sample_b, dtype=float).ravel())
    if not len(a) or not len(b):
        raise ValueError("empty sample")
    grid = np.concatenate([a, b])
    cdf_a = np.searchsorted(a, grid, side="right") / len(a)
    cdf_b = np.searchsorted(b, grid, side="right") / len(b)
    return float(np.max(np.abs(cdf_a - cdf_b)))


def fft_spectrum(series: np.ndarray, dt: float, top_k: int = 8, prominence_frac: float = 0.05):
    """Hann-windowed one-sided amplitude spectrum with a peak list.

    Returns ``(frequencies, amplitudes, peaks)`` where ``peaks`` holds up to
    ``top_k`` ``(frequency, amplitude)`` pairs of local maxima whose
    prominence exceeds ``prominence_frac`` times the largest nonzero-frequency
    amplitude.
    """
    x = np.asarray(series, dtype=float).ravel()
    if len(x) < 256:
        raise ValueError("need at least 256 samples")
    w = np.hanning(len(x))
    spec = np.abs(np.fft.rfft((x - x.mean()) * w)) * 2.0 / w.sum()
    freqs = np.fft.rfftfreq(len(x), dt)
    ref = float(spec[1:].max()) if len(spec) > 1 else 0.0
    idx, _ = find_peaks(spec, prominence=prominence_frac * ref)
    order = idx[np.argsort(spec[idx])[::-1]][:top_k]
    peaks = [(float(freqs[i]), float(spec[i])) for i in sorted(order)]
    return freqs, spec, peaks


def dtw_path(x: np.ndarray, y: np.ndarray):
    """Optimal symmetric-step alignment (diagonal/vertical/horizontal moves).

    Local cost is the Euclidean distance; each cell's cost is added once.
    Returns ``(total_cost, path)`` with the path as an ``(L, 2)`` index
    array.
    """
    X = np.atleast_2d(np.asarray(x, dtype=float))
    Y = np.atleast_2d(np.asarray(y, dtype=float))
    if X.ndim == 1 or X.shape[0] == 1 and x is not None and np.asarray(x).ndim == 1:
        X = np.asarray(x, dtype=float).reshape(-1, 1)
        Y = np.asarray(y, dtype=float).reshape(-1, 1)
    n, m_ = len(X), len(Y)
    if n == 0 or m_ == 0:
        raise ValueError("empty input")
    cost = cdist(X, Y)
    D = np.full((n, m_), np.inf)
    D[0, 0] = cost[0, 0]
    D[1:, 0] = np.cumsum(cost[1:, 0]) + cost[0, 0]
    D[0, 1:] = np.cumsum(cost[0, 1:]) + cost[0, 0]
    for i in range(1, n):
        row_prev = D[i - 1]
        row = D[i]
        for j in range(1, m_):
            row[j] = cost[i, j] + min(row_prev[j - 1], row_prev[j], row[j - 1])
    i, j = n - 1, m_ - 1
    path = [(i, j)]
    while i > 0 or j > 0:
        if i == 0:
            j -= 1
        elif j == 0:
            i -= 1
        else:
            choices = (D[i - 1, j - 1], D[i - 1, j], D[i, j - 1])
            k = int(np.argmin(choices))
            if k == 0:
                i, j = i - 1, j - 1
            elif k == 1:
                i -= 1
            else:
                j -= 1
        path.append((i, j))
    path.reverse()
    return float(D[n - 1, m_ - 1]), np.asarray(path, dtype=int)


def dtw_nmte(reference: np.ndarray, prediction: np.ndarray):
    """Normalized mean trajectory error, raw and DTW-aligned.

    The raw variant averages pointwise distances over paired samples (the
    sequences must have equal length) and normalizes by the largest
    reference norm; the aligned variant evaluates the same functional along
    the optimal warping path, normalized by the path length.
    """
    ref = np.asarray(reference, dtype=float)
    pred = np.asarray(prediction, dtype=float)
    if ref.ndim == 1:
        ref = ref[:, None]
    if pred.ndim == 1:
        pred = pred[:, None]
    if len(ref) == 0 or len(pred) == 0:
        raise ValueError("empty trajectory")
    if ref.shape[1] != pred.shape[1]:
        raise ValueError("channel count mismatch")
    norm = float(np.max(np.linalg.norm(ref, axis=1)))
    if norm == 0.0:
        raise ValueError("reference trajectory is identically zero")
    if len(ref) != len(pred):
        raise ValueError("raw error requires equal-length trajectories")
    raw = float(np.mean(np.linalg.norm(ref - pred, axis=1))) / norm
    total, path = dtw_path(ref, pred)
    aligned = float(total / len(path)) / norm
    return raw, aligned
