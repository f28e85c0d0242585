"""Parameter-dependent reduced models and bifurcation analysis.

A parametric model stores per-node manifold and normal-form models sharing a
common monomial basis and interpolates every coefficient across the control
parameter (here the sampling time).  Portrait analysis works on the
two-dimensional polar amplitude system: fixed points on the axes correspond
to limit cycles of the underlying dynamics, interior fixed points to
two-frequency tori, and closed orbits of the amplitude flow to three-frequency
tori.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.integrate import solve_ivp
from scipy.spatial import cKDTree

from .dynamics import NormalFormModel
from .manifold import ManifoldModel

__all__ = [
    "ParametricModel",
    "FixedPointInfo",
    "PortraitAnalysis",
    "find_fixed_points",
    "detect_heteroclinic",
    "find_closed_orbit",
    "scan_bifurcations",
]

FP_RESIDUAL_TOL = 1e-10


class ExtrapolationError(ValueError):
    """Queried parameter lies outside the trained node range."""


@dataclass
class ParametricModel:
    """Coefficient-interpolated family of reduced-order models."""

    nodes: np.ndarray
    normal_forms: list
    manifolds: list = field(default_factory=list)
    mode: str = "linear"

    def __post_init__(self):
        self.nodes = np.asarray(self.nodes, dtype=float)
        if len(self.nodes) < 2:
            raise ValueError("need at least two parameter nodes")
        if np.any(np.diff(self.nodes) <= 0):
            raise ValueError("nodes must be strictly increasing")
        if len(self.normal_forms) != len(self.nodes):
            raise ValueError("one normal form per node required")
        if self.manifolds and len(self.manifolds) != len(self.nodes):
            raise ValueError("one manifold per node required when present")
        if self.mode not in ("linear", "spline"):
            raise ValueError("mode must be 'linear' or 'spline'")
        ref = self.normal_forms[0]
        for nf in self.normal_forms[1:]:
            if nf.amp_exponents != ref.amp_exponents or nf.d != ref.d:
                raise ValueError("all node models must share basis and dimension")
        if self.manifolds:
            mref = self.manifolds[0]
            for mm in self.manifolds[1:]:
                if mm.exponents != mref.exponents or mm.V1.shape != mref.V1.shape:
                    raise ValueError("all node manifolds must share basis and shape")

    def _check_range(self, mu: float) -> None:
        if mu < self.nodes[0] - 1e-12 or mu > self.nodes[-1] + 1e-12:
            raise ExtrapolationError(
                f"extrapolation not supported: mu={mu} outside "
                f"[{self.nodes[0]}, {self.nodes[-1]}]"
            )

    def _interp_arrays(self, mu: float, arrays: list) -> np.ndarray:
        stack = np.stack([np.asarray(a) for a in arrays])
        if self.mode == "linear":
            j = int(np.clip(np.searchsorted(self.nodes, mu) - 1, 0, len(self.nodes) - 2))
            x0, x1 = self.nodes[j], self.nodes[j + 1]
            w = (mu - x0) / (x1 - x0)
            return (1.0 - w) * stack[j] + w * stack[j + 1]
        from scipy.interpolate import CubicSpline

        return CubicSpline(self.nodes, stack, axis=0)(mu)

    def _interp_cloud(self, mu: float) -> np.ndarray:
        clouds = [nf.train_amp_cloud for nf in self.normal_forms]
        if any(c.size == 0 for c in clouds):
            return np.zeros((0, 0))
        k = min(c.shape[0] for c in clouds)
        clouds = [c[:k] for c in clouds]
        return self._interp_arrays(mu, clouds)

    def interpolate(self, mu: float) -> NormalFormModel:
        """Normal-form model at ``mu``; exact at the nodes."""
        self._check_range(mu)
        nfs = self.normal_forms
        exact = np.where(np.abs(self.nodes - mu) < 1e-12)[0]
        if exact.size:
            return nfs[int(exact[0])]
        ref = nfs[0]
        return NormalFormModel(
            eigenvalues=self._interp_arrays(mu, [nf.eigenvalues for nf in nfs]),
            modal_matrix=self._interp_arrays(mu, [nf.modal_matrix for nf in nfs]),
            amp_exponents=ref.amp_exponents,
            amp_coeffs=self._interp_arrays(mu, [nf.amp_coeffs for nf in nfs]),
            phase_coeffs=self._interp_arrays(mu, [nf.phase_coeffs for nf in nfs]),
            order=ref.order,
            resonance_tol=ref.resonance_tol,
            train_amp_max=self._interp_arrays(mu, [nf.train_amp_max for nf in nfs]),
            train_dt=float(self._interp_arrays(mu, [[nf.train_dt] for nf in nfs])[0]),
            train_amp_cloud=self._interp_cloud(mu),
        )

    def interpolate_manifold(self, mu: float) -> ManifoldModel:
        """Manifold at ``mu``; tangent re-orthonormalized between nodes."""
        if not self.manifolds:
            raise ValueError("this parametric model carries no manifold data")
        self._check_range(mu)
        exact = np.where(np.abs(self.nodes - mu) < 1e-12)[0]
        if exact.size:
            return self.manifolds[int(exact[0])]
        mms = self.manifolds
        V1 = self._interp_arrays(mu, [mm.V1 for mm in mms])
        # nearest orthonormal basis (polar factor); exact at the nodes
        u, _, vt = np.linalg.svd(V1, full_matrices=False)
        V1 = u @ vt
        V_nl = self._interp_arrays(mu, [mm.V_nl for mm in mms])
        V_nl = V_nl - V1 @ (V1.T @ V_nl)
        ref = mms[0]
        return ManifoldModel(
            V1=V1,
            exponents=ref.exponents,
            V_nl=V_nl,
            order=ref.order,
            residual=float(self._interp_arrays(mu, [[mm.residual] for mm in mms])[0]),
            amp_max=float(self._interp_arrays(mu, [[mm.amp_max] for mm in mms])[0]),
        )

    def to_dict(self) -> dict:
        return {
            "kind": "parametric",
            "mode": self.mode,
            "nodes": self.nodes.tolist(),
            "normal_forms": [nf.to_dict() for nf in self.normal_forms],
            "manifolds": [mm.to_dict() for mm in self.manifolds],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ParametricModel":
        return cls(
            nodes=np.asarray(data["nodes"], dtype=float),
            normal_forms=[NormalFormModel.from_dict(d) for d in data["normal_forms"]],
            manifolds=[ManifoldModel.from_dict(d) for d in data.get("manifolds", [])],
            mode=data.get("mode", "linear"),
        )

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path) -> "ParametricModel":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class FixedPointInfo:
    """One amplitude-plane fixed point with its classification."""

    rho: np.ndarray
    eigenvalues: np.ndarray
    kind: str            # "origin" | "limit-cycle" | "torus2"
    stable: bool
    saddle: bool

    def to_dict(self) -> dict:
        return {
            "rho": self.rho.tolist(),
            "eigenvalues": [[z.real, z.imag] for z in np.atleast_1d(self.eigenvalues)],
            "kind": self.kind,
            "stable": self.stable,
            "saddle": self.saddle,
        }


@dataclass
class PortraitAnalysis:
    """Fixed points, optional closed orbit and heteroclinic gap at one mu."""

    fixed_points: list
    closed_orbit: Optional[np.ndarray] = None
    heteroclinic_gap: Optional[float] = None

    @property
    def saddles(self) -> list:
        return [fp for fp in self.fixed_points if fp.saddle and fp.kind != "origin"]

    @property
    def interior(self) -> list:
        return [fp for fp in self.fixed_points if fp.kind == "torus2"]

    def to_dict(self) -> dict:
        return {
            "fixed_points": [fp.to_dict() for fp in self.fixed_points],
            "closed_orbit": None if self.closed_orbit is None else self.closed_orbit.tolist(),
            "heteroclinic_gap": self.heteroclinic_gap,
        }


def _classify(nf: NormalFormModel, rho: np.ndarray) -> FixedPointInfo:
    ev = np.linalg.eigvals(nf.amplitude_jacobian(rho))
    axis_tol = 1e-8 * max(1.0, float(np.max(np.abs(rho))))
    on_axis = rho < axis_tol
    if np.all(on_axis):
        kind = "origin"
    elif np.any(on_axis):
        kind = "limit-cycle"
    else:
        kind = "torus2"
    stable = bool(np.all(ev.real < 0))
    saddle = bool(np.any(ev.real > 0) and np.any(ev.real < 0))
    return FixedPointInfo(
        rho=np.where(on_axis, 0.0, rho), eigenvalues=ev, kind=kind, stable=stable, saddle=saddle
    )


def _axis_fixed_points(nf: NormalFormModel, i: int, rho_cap: float) -> list:
    """Roots of the growth factor restricted to the ``rho_i`` axis."""
    degs, coeffs = [], []
    for exp, c in zip(nf.amp_exponents, nf.amp_coeffs[i]):
        if all(k == 0 for j, k in enumerate(exp) if j != i):
            degs.append(exp[i] // 2)
            coeffs.append(c)
    poly = np.zeros(max(degs) + 1)
    for d_, c in zip(degs, coeffs):
        poly[d_] = c
    if np.allclose(poly[1:], 0.0):
        return []
    roots = np.roots(poly[::-1])
    out = []
    for z in roots:
        if abs(z.imag) > 1e-9 or z.real <= 0:
            continue
        r = float(np.sqrt(z.real))
        if r > rho_cap:
            continue
        rho = np.zeros(nf.p)
        rho[i] = r
        out.append(rho)
    return out


def _newton_batch(nf: NormalFormModel, seeds: np.ndarray, box: np.ndarray, iters: int = 60):
    """Damped Newton on the 2D amplitude field, vectorized over seeds."""
    X = seeds.copy()
    for _ in range(iters):
        F = nf.amplitude_rhs(X)
        J = nf.amplitude_jacobian_batch(X)
        det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
        bad = np.abs(det) < 1e-300
        det[bad] = 1.0
        dx0 = (J[:, 1, 1] * F[0] - J[:, 0, 1] * F[1]) / det
        dx1 = (-J[:, 1, 0] * F[0] + J[:, 0, 0] * F[1]) / det
        X = X - np.vstack([dx0, dx1])
        X[:, bad] = np.nan
        off = (
            ~np.isfinite(X).all(axis=0)
            | (X.min(axis=0) < -0.2 * box.max())
            | (X[0] > 2.0 * box[0])
            | (X[1] > 2.0 * box[1])
        )
        X[:, off] = np.nan
    return X


def _supported(nf: NormalFormModel, rho: np.ndarray, radius: float) -> bool:
    """Whether an amplitude point lies near the training data cloud."""
    cloud = nf.train_amp_cloud
    if cloud.size == 0 or radius <= 0:
        return True
    scale = np.maximum(np.max(cloud, axis=0), 1e-12)
    dist = np.linalg.norm((cloud - rho[None, :]) / scale[None, :], axis=1)
    return bool(np.min(dist) <= radius)


def find_fixed_points(
    nf: NormalFormModel,
    grid: int = 24,
    rho_max: Optional[np.ndarray] = None,
    support_radius: float = 0.3,
) -> PortraitAnalysis:
    """Locate and classify amplitude-plane fixed points.

    Axis roots come from the even polynomial restricted to each axis
    (polynomial root finding plus a residual check); interior roots from
    Newton iterations seeded on a grid over ``[0, rho_max]^2``.  All reported
    points satisfy an absolute residual below 1e-10.  Roots farther than
    ``support_radius`` (in per-mode normalized amplitude units) from the
    training-data cloud are discarded: a polynomial model extrapolated into
    unexplored regions routinely produces spurious equilibria there.
    """
    if nf.p != 2:
        raise ValueError("portrait analysis requires a two-mode amplitude system")
    if rho_max is None:
        if nf.train_amp_cloud.size:
            rho_max = 1.5 * np.quantile(nf.train_amp_cloud, 0.995, axis=0)
        else:
            rho_max = 1.5 * nf.train_amp_max
    rho_max = np.asarray(rho_max, dtype=float)
    found = [np.zeros(2)]
    for i in range(2):
        found.extend(_axis_fixed_points(nf, i, rho_max[i]))
    g1 = np.linspace(rho_max[0] / grid, rho_max[0], grid)
    g2 = np.linspace(rho_max[1] / grid, rho_max[1], grid)
    seeds = np.array(np.meshgrid(g1, g2)).reshape(2, -1)
    X = _newton_batch(nf, seeds, rho_max)
    ok = np.isfinite(X).all(axis=0)
    X = X[:, ok]
    resid = np.linalg.norm(nf.amplitude_rhs(X), axis=0) if X.size else np.empty(0)
    X = X[:, resid < FP_RESIDUAL_TOL]
    scale = max(1e-12, float(np.max(rho_max)))
    for k in range(X.shape[1]):
        x = np.maximum(X[:, k], 0.0)
        if x[0] > rho_max[0] + 1e-9 or x[1] > rho_max[1] + 1e-9:
            continue
        if any(np.linalg.norm(x - f) < 1e-6 * scale for f in found):
            continue
        found.append(x)
    infos = []
    for x in found:
        if float(np.linalg.norm(nf.amplitude_rhs(x))) > FP_RESIDUAL_TOL:
            continue
        if np.any(x > 1e-9) and not _supported(nf, x, support_radius):
            continue
        infos.append(_classify(nf, x))
    return PortraitAnalysis(fixed_points=infos)


def _trace_manifold(
    nf: NormalFormModel,
    x0: np.ndarray,
    direction: int,
    stable_points: list,
    cap: float,
    t_max: float,
):
    """Integrate the amplitude flow from ``x0``; returns (polyline, outcome).

    ``direction`` +1 traces forward, -1 backward.  Outcomes: "capture"
    (entered a small ball around a stable fixed point), "escape" (left the
    amplitude box), "maxtime".
    """
    scale = cap
    delta = 1e-3 * scale

    def rhs(_t, x):
        return direction * nf.amplitude_rhs(x)

    events = []

    def make_capture(target):
        def ev(_t, x):
            return np.linalg.norm(x - target) - delta

        ev.terminal = True
        ev.direction = -1
        return ev

    for spt in stable_points:
        events.append(make_capture(np.asarray(spt)))

    def escape(_t, x):
        return float(np.max(np.abs(x))) - 2.5 * scale

    escape.terminal = True
    escape.direction = 1
    events.append(escape)

    def negative(_t, x):
        return float(np.min(x)) + 0.05 * scale

    negative.terminal = True
    negative.direction = -1
    events.append(negative)

    sol = solve_ivp(
        rhs,
        (0.0, t_max),
        x0,
        method="RK45",
        rtol=1e-10,
        atol=1e-13 * scale,
        events=events,
        dense_output=True,
        max_step=1.0,
    )
    t_end = sol.t[-1]
    ts = np.linspace(0.0, t_end, 8000)
    path = sol.sol(ts)
    n_stable = len(stable_points)
    outcome = "maxtime"
    if sol.status == 1:
        hit = [k for k, te in enumerate(sol.t_events) if len(te)]
        if hit and hit[0] < n_stable:
            outcome = "capture"
        else:
            outcome = "escape"
    return path.T, outcome


def detect_heteroclinic(
    nf: NormalFormModel,
    portrait: Optional[PortraitAnalysis] = None,
    t_max: float = 2500.0,
    eps_rel: float = 1e-5,
) -> float:
    """Signed distance between the connecting invariant manifolds.

    Traces the unstable manifold of the saddle nearest the fast-mode axis
    forward and the stable manifold of the other saddle backward, and returns
    the minimal distance between the two curves.  The sign encodes the
    outcome of the forward branch: negative while it is captured by a stable
    fixed point (pre-connection), positive once it escapes past the second
    saddle (post-connection); the magnitude crosses zero at the heteroclinic
    connection.
    """
    if portrait is None:
        portrait = find_fixed_points(nf)
    saddles = portrait.saddles
    if len(saddles) < 2:
        raise ValueError("no saddle pair")
    if len(saddles) > 2:
        # keep the two closest to the training amplitudes (spurious roots can
        # appear near the search boundary)
        saddles = sorted(
            saddles, key=lambda fp: float(np.linalg.norm(fp.rho / nf.train_amp_max))
        )[:2]
    saddles = sorted(saddles, key=lambda fp: fp.rho[0])
    A, B = saddles[0], saddles[1]
    stable_pts = [fp.rho for fp in portrait.fixed_points if fp.stable]
    cap = float(np.max(1.5 * nf.train_amp_max))
    scale = float(np.linalg.norm(nf.train_amp_max))
    eps = eps_rel * scale

    JA = nf.amplitude_jacobian(A.rho)
    evA, VA = np.linalg.eig(JA)
    du = np.real(VA[:, int(np.argmax(evA.real))])
    du /= np.linalg.norm(du)
    if du[0] < 0:
        du = -du
    JB = nf.amplitude_jacobian(B.rho)
    evB, VB = np.linalg.eig(JB)
    ds = np.real(VB[:, int(np.argmin(evB.real))])
    ds /= np.linalg.norm(ds)
    if ds[1] < 0:
        ds = -ds

    unstable_path, outcome = _trace_manifold(
        nf, A.rho + eps * du, +1, stable_pts, cap, t_max
    )
    stable_path, _ = _trace_manifold(nf, B.rho + eps * ds, -1, [], cap, t_max)
    gap = float(cKDTree(stable_path).query(unstable_path)[0].min())
    if outcome == "capture":
        return -gap
    if outcome == "escape":
        return gap
    return float("nan")


def find_closed_orbit(
    nf: NormalFormModel,
    portrait: Optional[PortraitAnalysis] = None,
    n_ray: int = 12,
) -> Optional[np.ndarray]:
    """Closed orbit of the amplitude flow around the interior fixed point.

    Searches a radial section through backward-time return maps (the orbit of
    interest is unstable forward in time, hence attracting in reverse).
    Returns the orbit polyline ``(N, 2)`` or None.
    """
    if portrait is None:
        portrait = find_fixed_points(nf)
    interior = portrait.interior
    if not interior:
        return None
    center = min(interior, key=lambda fp: float(np.linalg.norm(fp.rho)))
    c = center.rho
    ray = c / np.linalg.norm(c)
    cap = float(np.max(1.5 * nf.train_amp_max))
    s_max = min(
        (1.5 * nf.train_amp_max[0] - c[0]) / ray[0],
        (1.5 * nf.train_amp_max[1] - c[1]) / ray[1],
        np.linalg.norm(c) * 0.98,
    )
    if s_max <= 0:
        return None

    def return_map(s: float):
        x0 = c + s * ray
        sol = solve_ivp(
            lambda _t, x: -nf.amplitude_rhs(x),
            (0.0, 4000.0),
            x0,
            method="RK45",
            rtol=1e-10,
            atol=1e-14,
            dense_output=True,
            max_step=4.0,
        )
        ts = np.linspace(0.0, sol.t[-1], 20000)
        xs = sol.sol(ts)
        rel = xs - c[:, None]
        ang = np.unwrap(np.arctan2(rel[1], rel[0]))
        ang -= ang[0]
        full = np.where(np.abs(ang) >= 2.0 * np.pi)[0]
        if not full.size:
            return None, None
        k = int(full[0])
        # linear interpolation to the exact section crossing
        a0, a1 = ang[k - 1], ang[k]
        target = 2.0 * np.pi * np.sign(a1)
        w = (target - a0) / (a1 - a0)
        x_cross = xs[:, k - 1] * (1 - w) + xs[:, k] * w
        if np.any(x_cross < 0) or np.max(np.abs(x_cross)) > 2.5 * cap:
            return None, None
        s_ret = float(np.dot(x_cross - c, ray))
        return s_ret, (ts[k - 1] * (1 - w) + ts[k] * w)

    ss = np.linspace(s_max / n_ray, s_max, n_ray)
    vals = []
    for s in ss:
        r, _ = return_map(s)
        vals.append(np.nan if r is None else r - s)
    vals = np.asarray(vals)
    sign_change = None
    for k in range(len(ss) - 1):
        if np.isfinite(vals[k]) and np.isfinite(vals[k + 1]) and vals[k] * vals[k + 1] < 0:
            sign_change = (ss[k], ss[k + 1])
            break
    if sign_change is None:
        return None
    lo, hi = sign_change
    flo = vals[np.where(ss == lo)[0][0]]
    for _ in range(40):
        mid = 0.5 * (lo + hi)
        fm, _ = return_map(mid)
        if fm is None:
            return None
        fm = fm - mid
        if abs(fm) < 1e-12:
            lo = hi = mid
            break
        if flo * fm < 0:
            hi = mid
        else:
            lo, flo = mid, fm
    s_star = 0.5 * (lo + hi)
    x0 = c + s_star * ray
    sol = solve_ivp(
        lambda _t, x: -nf.amplitude_rhs(x),
        (0.0, 4000.0),
        x0,
        method="RK45",
        rtol=1e-11,
        atol=1e-14,
        dense_output=True,
        max_step=2.0,
    )
    ts = np.linspace(0.0, sol.t[-1], 20000)
    xs = sol.sol(ts)
    rel = xs - c[:, None]
    ang = np.unwrap(np.arctan2(rel[1], rel[0]))
    ang -= ang[0]
    full = np.where(np.abs(ang) >= 2.0 * np.pi)[0]
    if not full.size:
        return None
    return xs[:, : full[0] + 1].T


def analyze_portrait(
    nf: NormalFormModel,
    grid: int = 24,
    with_heteroclinic: bool = True,
    with_orbit: bool = False,
) -> PortraitAnalysis:
    """Fixed points plus optional heteroclinic gap and closed orbit."""
    portrait = find_fixed_points(nf, grid=grid)
    if with_heteroclinic:
        try:
            portrait.heteroclinic_gap = detect_heteroclinic(nf, portrait)
        except ValueError:
            portrait.heteroclinic_gap = None
    if with_orbit:
        portrait.closed_orbit = find_closed_orbit(nf, portrait)
    return portrait


def _tracked_interior_real(nf: NormalFormModel, ref_rho: Optional[np.ndarray]):
    """Max real part of the interior point continuing from ``ref_rho``."""
    portrait = find_fixed_points(nf)
    interior = portrait.interior
    if not interior:
        return None, None, portrait
    if ref_rho is None:
        stable = [fp for fp in interior if fp.stable]
        pick = min(
            stable or interior, key=lambda fp: float(np.linalg.norm(fp.rho))
        )
    else:
        pick = min(interior, key=lambda fp: float(np.linalg.norm(fp.rho - ref_rho)))
    return float(np.max(pick.eigenvalues.real)), pick.rho, portrait


def scan_bifurcations(
    pmodel: ParametricModel,
    mu_range,
    steps: int = 40,
    mu_tol: float = 1e-6,
    with_orbit: bool = True,
) -> list:
    """Sweep the parameter and locate bifurcation events.

    Records (a) sign changes of the heteroclinic gap, (b) stability changes
    of the tracked interior fixed point (Hopf of the two-torus), and (c)
    appearance/disappearance of closed amplitude orbits (three-torus), each
    refined by bisection to ``mu_tol``.
    """
    mu_lo, mu_hi = float(mu_range[0]), float(mu_range[1])
    mus = np.linspace(mu_lo, mu_hi, steps + 1)
    gaps, reals, orbits, ref = [], [], [], None
    for mu in mus:
        nf = pmodel.interpolate(mu)
        real, ref_new, portrait = _tracked_interior_real(nf, ref)
        if ref_new is not None:
            ref = ref_new
        try:
            gap = detect_heteroclinic(nf, portrait)
        except ValueError:
            gap = None
        orbit_present = None
        if with_orbit:
            orbit_present = find_closed_orbit(nf, portrait) is not None
        gaps.append(gap)
        reals.append(real)
        orbits.append(orbit_present)

    events = []

    def bisect(lo, hi, crit, f_lo):
        for _ in range(200):
            if hi - lo <= mu_tol:
                break
            mid = 0.5 * (lo + hi)
            val = crit(mid)
            if val is None:
                lo = mid  # treat undefined as not-yet-crossed
                continue
            if (val > 0) == (f_lo > 0):
                lo = mid
            else:
                hi = mid
        return 0.5 * (lo + hi)

    # (a) heteroclinic gap zero crossings
    def gap_at(mu):
        nf = pmodel.interpolate(mu)
        try:
            g = detect_heteroclinic(nf)
        except ValueError:
            return None
        return None if (g is None or not np.isfinite(g)) else g

    for k in range(len(mus) - 1):
        a, b = gaps[k], gaps[k + 1]
        if a is None or b is None or not (np.isfinite(a) and np.isfinite(b)):
            continue
        if a * b < 0:
            mu_star = bisect(mus[k], mus[k + 1], gap_at, a)
            events.append({"mu": mu_star, "type": "heteroclinic", "location": None})

    # (b) interior stability change (Hopf of the 2-torus)
    def real_at(mu, ref_rho):
        nf = pmodel.interpolate(mu)
        real, _, _ = _tracked_interior_real(nf, ref_rho)
        return real

    ref = None
    for k in range(len(mus) - 1):
        a, b = reals[k], reals[k + 1]
        if a is None or b is None:
            continue
        if a * b < 0:
            nf_lo = pmodel.interpolate(mus[k])
            _, rho_lo, _ = _tracked_interior_real(nf_lo, None)
            mu_star = bisect(mus[k], mus[k + 1], lambda m: real_at(m, rho_lo), a)
            nf_star = pmodel.interpolate(mu_star)
            _, rho_star, _ = _tracked_interior_real(nf_star, rho_lo)
            events.append(
                {
                    "mu": mu_star,
                    "type": "hopf",
                    "location": None if rho_star is None else rho_star.tolist(),
                }
            )

    # (c) closed-orbit appearance / disappearance
    if with_orbit:
        def orbit_at(mu):
            nf = pmodel.interpolate(mu)
            return 1.0 if find_closed_orbit(nf) is not None else -1.0

        for k in range(len(mus) - 1):
            a, b = orbits[k], orbits[k + 1]
            if a is None or b is None or a == b:
                continue
            f_lo = 1.0 if a else -1.0
            mu_star = bisect(mus[k], mus[k + 1], orbit_at, f_lo)
            events.append(
                {
                    "mu": mu_star,
                    "type": "torus3-appear" if b else "torus3-disappear",
                    "location": None,
                }
            )

    events.sort(key=lambda e: e["mu"])
    return events
