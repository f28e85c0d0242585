"""Reduced dynamics on the fitted manifold.

Three model families:

- ``PolyReducedModel``: continuous polynomial vector field fitted by least
  squares to finite-difference derivatives of reduced trajectories.
- ``NormalFormModel``: polar amplitude/phase equations in modal coordinates of
  the fitted linear part.  Amplitude equations contain only odd monomials
  (``rho_i`` times an even polynomial in all amplitudes), so every coordinate
  plane ``rho_i = 0`` is invariant by construction.
- ``RBFModel``: discrete one-step map interpolated with a linear radial
  kernel, exact on its training transitions up to the ridge regularization.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.spatial.distance import cdist

from .polynomials import evaluate_monomials, monomial_exponents

__all__ = [
    "PolyReducedModel",
    "NormalFormModel",
    "RBFModel",
    "AdvectResult",
    "differentiate",
    "fit_poly_dynamics",
    "to_normal_form",
    "fit_rbf_map",
    "advect",
]


def _as_trajectory_list(etas) -> list:
    if isinstance(etas, np.ndarray):
        return [np.atleast_2d(np.asarray(etas, dtype=float))]
    return [np.atleast_2d(np.asarray(e, dtype=float)) for e in etas]


def differentiate(series: np.ndarray, dt: float):
    """Fourth-order central differences along axis 1; endpoints dropped.

    Returns the trimmed values and their time derivatives, both of shape
    ``(d, N - 4)``.
    """
    x = np.atleast_2d(np.asarray(series, dtype=float))
    if x.shape[1] < 5:
        raise ValueError("need at least 5 samples for fourth-order differences")
    d = (-x[:, 4:] + 8.0 * x[:, 3:-1] - 8.0 * x[:, 1:-3] + x[:, :-4]) / (12.0 * dt)
    return x[:, 2:-2], d


@dataclass
class PolyReducedModel:
    """Polynomial vector field ``eta_dot = sum_k R_k eta^k``."""

    exponents: list               # tuples, total degree 1..order
    coeffs: np.ndarray            # (d, n_monomials)
    order: int
    train_dt: float
    train_radius: float = 0.0

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=float)

    @property
    def d(self) -> int:
        return self.coeffs.shape[0]

    @property
    def linear_part(self) -> np.ndarray:
        """The d x d matrix of degree-one coefficients."""
        R1 = np.zeros((self.d, self.d))
        for i, exp in enumerate(self.exponents):
            if sum(exp) == 1:
                R1[:, exp.index(1)] = self.coeffs[:, i]
        return R1

    def rhs(self, eta: np.ndarray) -> np.ndarray:
        eta = np.asarray(eta, dtype=float)
        single = eta.ndim == 1
        cols = eta[:, None] if single else eta
        out = self.coeffs @ evaluate_monomials(cols, self.exponents)
        return out[:, 0] if single else out

    def to_dict(self) -> dict:
        return {
            "kind": "poly-reduced",
            "order": self.order,
            "train_dt": self.train_dt,
            "train_radius": self.train_radius,
            "exponents": [list(e) for e in self.exponents],
            "coeffs": self.coeffs.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PolyReducedModel":
        return cls(
            exponents=[tuple(e) for e in data["exponents"]],
            coeffs=np.asarray(data["coeffs"], dtype=float),
            order=int(data["order"]),
            train_dt=float(data["train_dt"]),
            train_radius=float(data.get("train_radius", 0.0)),
        )


def fit_poly_dynamics(etas, dt: float, order: int = 3) -> PolyReducedModel:
    """Least-squares polynomial fit of the reduced vector field.

    ``etas`` is one ``(d, N)`` trajectory or a list of them, all uniformly
    sampled with step ``dt``.  Derivatives come from fourth-order central
    differences, so each trajectory loses two samples at both ends.
    """
    trajs = _as_trajectory_list(etas)
    d = trajs[0].shape[0]
    exponents = monomial_exponents(d, range(1, order + 1))
    xs, dxs = [], []
    for tr in trajs:
        x, dx = differentiate(tr, dt)
        xs.append(x)
        dxs.append(dx)
    X = np.hstack(xs)
    dX = np.hstack(dxs)
    if X.shape[1] < len(exponents):
        raise ValueError("not enough samples for the requested order")
    feats = evaluate_monomials(X, exponents)
    scale = np.max(np.abs(feats), axis=1)
    if np.min(scale) == 0.0:
        raise np.linalg.LinAlgError("degenerate features: rank-deficient data")
    sol, _, rank, sv = np.linalg.lstsq((feats / scale[:, None]).T, dX.T, rcond=None)
    if rank < len(exponents):
        raise np.linalg.LinAlgError("degenerate features: rank-deficient data")
    if sv[0] / sv[-1] > 1e12:
        raise np.linalg.LinAlgError(
            "ill-conditioned features: rescale reduced coordinates"
        )
    coeffs = (sol / scale[:, None]).T
    radius = float(np.max(np.linalg.norm(X, axis=0)))
    return PolyReducedModel(
        exponents=exponents,
        coeffs=coeffs,
        order=order,
        train_dt=dt,
        train_radius=radius,
    )


def _pair_eigenvalues(R1: np.ndarray):
    """Conjugate eigenvalue pairs of the linear part, ordered by real part.

    Returns (pair eigenvalues with positive imaginary part, unit-norm
    eigenvectors with a deterministic phase).
    """
    vals, vecs = np.linalg.eig(R1)
    d = len(vals)
    if d % 2 != 0:
        raise ValueError("mixed-mode normal form not supported; fit polynomial model instead")
    imag_scale = np.max(np.abs(vals))
    if np.any(np.abs(vals.imag) < 1e-9 * max(imag_scale, 1e-30)):
        raise ValueError("mixed-mode normal form not supported; fit polynomial model instead")
    pos = np.where(vals.imag > 0)[0]
    if len(pos) != d // 2:
        raise ValueError("mixed-mode normal form not supported; fit polynomial model instead")
    order = pos[np.argsort(vals[pos].real)]
    lams, ws = [], []
    for idx in order:
        lam = vals[idx]
        w = vecs[:, idx]
        w = w / np.linalg.norm(w)
        k = int(np.argmax(np.abs(w)))
        w = w * np.exp(-1j * np.angle(w[k]))
        lams.append(lam)
        ws.append(w)
    return np.asarray(lams), ws


def _even_exponents(p: int, max_degree: int) -> list:
    """All-even exponent tuples with total degree 0..max_degree."""
    full = monomial_exponents(p, range(0, max_degree + 1))
    return [e for e in full if all(k % 2 == 0 for k in e)]


@dataclass
class NormalFormModel:
    """Extended normal form in polar modal coordinates.

    For mode ``i`` the dynamics are
    ``rho_i' = rho_i * sum_k a_ik rho^k`` and ``theta_i' = sum_k b_ik rho^k``
    over the all-even exponent tuples ``k`` stored in ``amp_exponents``.
    """

    eigenvalues: np.ndarray        # (p,) complex pair representatives
    modal_matrix: np.ndarray       # (d, d) complex, columns (w1, conj w1, ...)
    amp_exponents: list            # even tuples over p amplitude variables
    amp_coeffs: np.ndarray         # (p, n_features)
    phase_coeffs: np.ndarray       # (p, n_features)
    order: int
    resonance_tol: float = 0.1
    train_amp_max: np.ndarray = field(default_factory=lambda: np.zeros(0))
    train_dt: float = 0.0
    train_amp_cloud: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))

    def __post_init__(self):
        self.eigenvalues = np.asarray(self.eigenvalues, dtype=complex)
        self.modal_matrix = np.asarray(self.modal_matrix, dtype=complex)
        self.amp_coeffs = np.asarray(self.amp_coeffs, dtype=float)
        self.phase_coeffs = np.asarray(self.phase_coeffs, dtype=float)
        self.train_amp_max = np.asarray(self.train_amp_max, dtype=float)
        self.train_amp_cloud = np.asarray(self.train_amp_cloud, dtype=float)

    @property
    def p(self) -> int:
        return len(self.eigenvalues)

    @property
    def d(self) -> int:
        return self.modal_matrix.shape[0]

    @property
    def near_resonant(self) -> bool:
        w = np.abs(self.eigenvalues.imag)
        if len(w) < 2:
            return False
        gaps = np.abs(w[:, None] - w[None, :])[np.triu_indices(len(w), 1)]
        return bool(np.min(gaps) < self.resonance_tol * np.max(w))

    # -- coordinate maps -------------------------------------------------

    def to_modal(self, eta: np.ndarray) -> np.ndarray:
        """Complex modal representatives, shape ``(p, N)``."""
        eta = np.atleast_2d(np.asarray(eta, dtype=float))
        xi = np.linalg.solve(self.modal_matrix, eta)
        return xi[0::2]

    def to_polar(self, eta: np.ndarray):
        xi = self.to_modal(eta)
        return np.abs(xi), np.angle(xi)

    def eta_of_polar(self, rho: np.ndarray, theta: np.ndarray) -> np.ndarray:
        rho = np.atleast_2d(np.asarray(rho, dtype=float))
        theta = np.atleast_2d(np.asarray(theta, dtype=float))
        xi = np.empty((self.d, rho.shape[1]), dtype=complex)
        xi[0::2] = rho * np.exp(1j * theta)
        xi[1::2] = np.conj(xi[0::2])
        eta = self.modal_matrix @ xi
        return eta.real

    # -- vector field ----------------------------------------------------

    def _features(self, rho: np.ndarray) -> np.ndarray:
        return evaluate_monomials(rho, self.amp_exponents)

    def amplitude_growth(self, rho: np.ndarray) -> np.ndarray:
        """The even factors ``g_i(rho) = rho_i' / rho_i``."""
        rho = np.atleast_2d(np.asarray(rho, dtype=float))
        return self.amp_coeffs @ self._features(rho)

    def amplitude_rhs(self, rho: np.ndarray) -> np.ndarray:
        rho = np.asarray(rho, dtype=float)
        single = rho.ndim == 1
        cols = rho[:, None] if single else rho
        out = cols * self.amplitude_growth(cols)
        return out[:, 0] if single else out

    def amplitude_jacobian(self, rho: np.ndarray) -> np.ndarray:
        return self.amplitude_jacobian_batch(np.asarray(rho, dtype=float).ravel()[:, None])[0]

    def amplitude_jacobian_batch(self, rho: np.ndarray) -> np.ndarray:
        """Analytic Jacobians of the amplitude field at points columnwise.

        Returns shape ``(N, p, p)``.
        """
        rho = np.atleast_2d(np.asarray(rho, dtype=float))
        p, n = rho.shape
        g = self.amp_coeffs @ self._features(rho)          # (p, N)
        J = np.zeros((n, p, p))
        for i in range(p):
            J[:, i, i] = g[i]
        for j in range(p):
            # derivative exponents k - e_j with multiplier k_j
            dexps, mult, cols = [], [], []
            for idx, exp in enumerate(self.amp_exponents):
                if exp[j] == 0:
                    continue
                e = list(exp)
                e[j] -= 1
                dexps.append(tuple(e))
                mult.append(exp[j])
                cols.append(idx)
            if not dexps:
                continue
            dfeat = evaluate_monomials(rho, dexps) * np.asarray(mult, dtype=float)[:, None]
            dg = self.amp_coeffs[:, cols] @ dfeat          # (p, N) = d g_i / d rho_j
            J[:, :, j] += (rho * dg).T
        return J

    def phase_rhs(self, rho: np.ndarray) -> np.ndarray:
        rho = np.asarray(rho, dtype=float)
        single = rho.ndim == 1
        cols = rho[:, None] if single else rho
        out = self.phase_coeffs @ self._features(cols)
        return out[:, 0] if single else out

    def rhs(self, eta: np.ndarray) -> np.ndarray:
        """Vector field pulled back to reduced coordinates."""
        eta = np.asarray(eta, dtype=float)
        single = eta.ndim == 1
        cols = eta[:, None] if single else eta
        rho, theta = self.to_polar(cols)
        drho = rho * (self.amp_coeffs @ self._features(rho))
        dtheta = self.phase_coeffs @ self._features(rho)
        xi = rho * np.exp(1j * theta)
        dxi = (drho + 1j * rho * dtheta) * np.exp(1j * theta)
        full = np.empty((self.d, cols.shape[1]), dtype=complex)
        full[0::2] = dxi
        full[1::2] = np.conj(dxi)
        out = (self.modal_matrix @ full).real
        return out[:, 0] if single else out

    # -- serialization ----------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "kind": "normal-form",
            "order": self.order,
            "resonance_tol": self.resonance_tol,
            "train_dt": self.train_dt,
            "eigenvalues": [[lam.real, lam.imag] for lam in self.eigenvalues],
            "modal_matrix_real": self.modal_matrix.real.tolist(),
            "modal_matrix_imag": self.modal_matrix.imag.tolist(),
            "amp_exponents": [list(e) for e in self.amp_exponents],
            "amp_coeffs": self.amp_coeffs.tolist(),
            "phase_coeffs": self.phase_coeffs.tolist(),
            "train_amp_max": self.train_amp_max.tolist(),
            "train_amp_cloud": self.train_amp_cloud.tolist(),
            # redundant human-readable table keyed by exponent tuples
            "amplitude_table": [
                {str(tuple(e)): c for e, c in zip(self.amp_exponents, row)}
                for row in self.amp_coeffs.tolist()
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "NormalFormModel":
        lam = np.asarray([complex(re, im) for re, im in data["eigenvalues"]])
        W = np.asarray(data["modal_matrix_real"], dtype=float) + 1j * np.asarray(
            data["modal_matrix_imag"], dtype=float
        )
        return cls(
            eigenvalues=lam,
            modal_matrix=W,
            amp_exponents=[tuple(e) for e in data["amp_exponents"]],
            amp_coeffs=np.asarray(data["amp_coeffs"], dtype=float),
            phase_coeffs=np.asarray(data["phase_coeffs"], dtype=float),
            order=int(data["order"]),
            resonance_tol=float(data.get("resonance_tol", 0.1)),
            train_amp_max=np.asarray(data.get("train_amp_max", []), dtype=float),
            train_dt=float(data.get("train_dt", 0.0)),
            train_amp_cloud=np.asarray(data.get("train_amp_cloud", np.zeros((0, 0))), dtype=float),
        )

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path) -> "NormalFormModel":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def _balance_indices(rho: np.ndarray, bins: int, rng_seed: int = 0) -> np.ndarray:
    """Density-balancing subsample over the amplitude box.

    Caps the number of samples kept per amplitude-space cell so regions the
    trajectories merely linger in (attractors) do not drown out transients.
    """
    p, n = rho.shape
    edges = [np.linspace(0.0, rho[i].max() * (1 + 1e-12), bins + 1) for i in range(p)]
    cell = np.zeros(n, dtype=np.int64)
    for i in range(p):
        cell = cell * bins + np.clip(np.digitize(rho[i], edges[i]) - 1, 0, bins - 1)
    order = np.argsort(cell, kind="stable")
    sorted_cells = cell[order]
    boundaries = np.flatnonzero(np.diff(sorted_cells)) + 1
    groups = np.split(order, boundaries)
    cap = max(30, n // (4 * len(groups)))
    rng = np.random.default_rng(rng_seed)
    keep = []
    for g in groups:
        if len(g) <= cap:
            keep.append(g)
        else:
            keep.append(rng.choice(g, size=cap, replace=False))
    return np.sort(np.concatenate(keep))


def _complex_monomial_features(xi, exponents, order: int) -> np.ndarray:
    """Monomials of ``(xi_1, conj xi_1, xi_2, conj xi_2, ...)`` columnwise."""
    p, n = xi.shape
    d = 2 * p
    z = np.empty((d, n), dtype=complex)
    z[0::2] = xi
    z[1::2] = np.conj(xi)
    pows = []
    for v in range(d):
        pv = [np.ones(n, dtype=complex)]
        for _ in range(order):
            pv.append(pv[-1] * z[v])
        pows.append(pv)
    out = np.empty((len(exponents), n), dtype=complex)
    for i, exp in enumerate(exponents):
        acc = np.ones(n, dtype=complex)
        for v, q in enumerate(exp):
            if q:
                acc = acc * pows[v][q]
        out[i] = acc
    return out


def to_normal_form(
    model: PolyReducedModel,
    etas,
    dt: Optional[float] = None,
    order: int = 5,
    resonance_tol: float = 0.1,
    method: str = "modal",
    amp_floor: float = 1e-2,
    pin_linear: bool = True,
    weight_power: float = 1.0,
    balance_bins: int = 24,
    ridge: float = 0.0,
) -> NormalFormModel:
    """Polar normal form of the reduced dynamics, regressed from data.

    Trajectories are mapped to modal coordinates of the fitted linear part
    and the polar amplitude/phase coefficients on the all-even monomial basis
    (total degree up to ``order - 1``) are estimated by regression.

    Two estimators of the same coefficient set are available:

    - ``method="modal"`` (default): complex least squares of the modal rates
      ``xi_i'`` on the complete complex monomial basis up to ``order``; the
      polar coefficients are the real/imaginary parts of the resonant
      monomials ``xi_i |xi_1|^2m_1 |xi_2|^2m_2 ...``.  Non-resonant monomials
      stay in the basis and absorb the oscillatory content of the rates,
      which would otherwise act as correlated noise on the polar estimates.
    - ``method="polar"``: direct regression of the relative amplitude rates
      ``rho_i'/rho_i`` and phase rates on the even monomials, with rows
      weighted by ``rho_i**weight_power`` and samples below ``amp_floor``
      times the mode's maximum amplitude dropped.

    With ``pin_linear`` (default) the constant coefficients are fixed to the
    real/imaginary parts of the eigenvalues of the fitted linear part, which
    the trajectory ensemble determines far more reliably than pointwise
    rates do.  ``balance_bins > 0`` caps the sample count per amplitude-space
    cell so long dwell times near attractors do not dominate the fit, and
    ``ridge`` adds Tikhonov damping in unit-scaled feature space.
    """
    if dt is None:
        dt = model.train_dt
    if method not in ("modal", "polar"):
        raise ValueError("method must be 'modal' or 'polar'")
    lams, ws = _pair_eigenvalues(model.linear_part)
    d = model.d
    p = d // 2
    W = np.empty((d, d), dtype=complex)
    for i, w in enumerate(ws):
        W[:, 2 * i] = w
        W[:, 2 * i + 1] = np.conj(w)
    exponents = _even_exponents(p, order - 1)
    nf = NormalFormModel(
        eigenvalues=lams,
        modal_matrix=W,
        amp_exponents=exponents,
        amp_coeffs=np.zeros((p, len(exponents))),
        phase_coeffs=np.zeros((p, len(exponents))),
        order=order,
        resonance_tol=resonance_tol,
        train_dt=dt,
    )

    def solve_scaled(A, y, w=None):
        scale = np.max(np.abs(A), axis=0)
        scale[scale == 0] = 1.0
        Aw = A / scale
        yw = y
        if w is not None:
            Aw = Aw * w[:, None]
            yw = y * w
        if ridge > 0.0:
            gram = Aw.conj().T @ Aw
            lam_r = ridge * np.trace(gram).real / gram.shape[0]
            sol = np.linalg.solve(gram + lam_r * np.eye(gram.shape[0]), Aw.conj().T @ yw)
        else:
            sol = np.linalg.lstsq(Aw, yw, rcond=None)[0]
        return sol / scale

    if method == "modal":
        xis, dxis = [], []
        for tr in _as_trajectory_list(etas):
            xi_full = np.linalg.solve(W, tr)[0::2]
            xr, dxr = differentiate(xi_full.real, dt)
            xi_im, dxi_im = differentiate(xi_full.imag, dt)
            xis.append(xr + 1j * xi_im)
            dxis.append(dxr + 1j * dxi_im)
        xi = np.hstack(xis)
        dxi = np.hstack(dxis)
        if balance_bins and xi.shape[1] > 4000:
            idx = _balance_indices(np.abs(xi), balance_bins)
            xi, dxi = xi[:, idx], dxi[:, idx]
        full_exps = monomial_exponents(d, range(1, order + 1))
        if xi.shape[1] < len(full_exps):
            raise ValueError("not enough samples for the modal regression")
        feats = _complex_monomial_features(xi, full_exps, order)
        amp_coeffs = np.zeros((p, len(exponents)))
        phase_coeffs = np.zeros((p, len(exponents)))
        for i in range(p):
            y = dxi[i].copy()
            lin_exp = tuple(1 if v == 2 * i else 0 for v in range(d))
            lin_idx = full_exps.index(lin_exp)
            cols = list(range(len(full_exps)))
            if pin_linear:
                y = y - lams[i] * feats[lin_idx]
                cols.remove(lin_idx)
            sol = solve_scaled(feats[cols].T, y)
            c = np.zeros(len(full_exps), dtype=complex)
            c[cols] = sol
            if pin_linear:
                c[lin_idx] = lams[i]
            for j, even in enumerate(exponents):
                t = [0] * d
                for v in range(p):
                    t[2 * v] = even[v] // 2
                    t[2 * v + 1] = even[v] // 2
                t[2 * i] += 1
                ck = c[full_exps.index(tuple(t))]
                amp_coeffs[i, j] = ck.real
                phase_coeffs[i, j] = ck.imag
        rho_all = np.abs(xi)
    else:
        rhos, drhos, dthetas = [], [], []
        for tr in _as_trajectory_list(etas):
            rho, theta = nf.to_polar(tr)
            theta = np.unwrap(theta, axis=1)
            rho_m, drho = differentiate(rho, dt)
            _, dtheta = differentiate(theta, dt)
            rhos.append(rho_m)
            drhos.append(drho)
            dthetas.append(dtheta)
        rho = np.hstack(rhos)
        drho = np.hstack(drhos)
        dtheta = np.hstack(dthetas)
        if balance_bins and rho.shape[1] > 4000:
            idx = _balance_indices(rho, balance_bins)
            rho, drho, dtheta = rho[:, idx], drho[:, idx], dtheta[:, idx]
        feats = evaluate_monomials(rho, exponents)
        const_col = next(i for i, e in enumerate(exponents) if sum(e) == 0)
        nl_cols = [i for i in range(len(exponents)) if i != const_col]
        amp_coeffs = np.zeros((p, len(exponents)))
        phase_coeffs = np.zeros((p, len(exponents)))
        for i in range(p):
            keep = rho[i] > amp_floor * np.max(rho[i])
            if np.count_nonzero(keep) < len(exponents):
                raise ValueError("not enough usable samples for the polar regression")
            w = rho[i, keep] ** weight_power if weight_power else np.ones(keep.sum())
            amp_target = drho[i, keep] / rho[i, keep]
            phase_target = dtheta[i, keep]
            if pin_linear:
                A = feats[nl_cols][:, keep].T
                amp_coeffs[i, nl_cols] = solve_scaled(A, amp_target - lams[i].real, w)
                amp_coeffs[i, const_col] = lams[i].real
                phase_coeffs[i, nl_cols] = solve_scaled(A, phase_target - lams[i].imag, w)
                phase_coeffs[i, const_col] = lams[i].imag
            else:
                A = feats[:, keep].T
                amp_coeffs[i] = solve_scaled(A, amp_target, w)
                phase_coeffs[i] = solve_scaled(A, phase_target, w)
        rho_all = rho
    nf.amp_coeffs = amp_coeffs
    nf.phase_coeffs = phase_coeffs
    nf.train_amp_max = np.max(rho_all, axis=1)
    # evenly thinned amplitude samples; used to restrict portrait analysis to
    # the data-supported region
    n_cloud = min(400, rho_all.shape[1])
    pick = np.linspace(0, rho_all.shape[1] - 1, n_cloud).astype(int)
    nf.train_amp_cloud = rho_all[:, pick].T.copy()
    return nf


@dataclass
class RBFModel:
    """Discrete map interpolated with the linear radial kernel ``k(r) = r``."""

    centers: np.ndarray            # (K, d)
    weights: np.ndarray            # (K, d)
    step: float
    ridge: float = 1e-10

    def __post_init__(self):
        self.centers = np.asarray(self.centers, dtype=float)
        self.weights = np.asarray(self.weights, dtype=float)
        if self.centers.shape[0] != self.weights.shape[0]:
            raise ValueError("center count must equal weight row count")

    @property
    def d(self) -> int:
        return self.centers.shape[1]

    @property
    def train_radius(self) -> float:
        return float(np.max(np.linalg.norm(self.centers, axis=1)))

    def predict(self, eta: np.ndarray) -> np.ndarray:
        """One-step image of a point ``(d,)`` or points ``(d, N)``."""
        eta = np.asarray(eta, dtype=float)
        single = eta.ndim == 1
        pts = eta[None, :] if single else eta.T
        k = cdist(pts, self.centers)
        out = (k @ self.weights).T
        return out[:, 0] if single else out

    def to_dict(self) -> dict:
        return {
            "kind": "rbf-map",
            "step": self.step,
            "ridge": self.ridge,
            "centers": self.centers.tolist(),
            "weights": self.weights.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RBFModel":
        return cls(
            centers=np.asarray(data["centers"], dtype=float),
            weights=np.asarray(data["weights"], dtype=float),
            step=float(data["step"]),
            ridge=float(data.get("ridge", 1e-10)),
        )

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path) -> "RBFModel":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def fit_rbf_map(etas, step: float, ridge: float = 1e-10) -> RBFModel:
    """Interpolate the one-step map on consecutive sample pairs.

    Exact duplicates among the source points are removed (keeping the first
    occurrence) with a warning; interpolation through inconsistent duplicate
    transitions is impossible.
    """
    xs, ys = [], []
    for tr in _as_trajectory_list(etas):
        if tr.shape[1] < 2:
            raise ValueError("each trajectory must contain at least one transition")
        xs.append(tr[:, :-1].T)
        ys.append(tr[:, 1:].T)
    X = np.vstack(xs)
    Y = np.vstack(ys)
    _, unique_idx = np.unique(X, axis=0, return_index=True)
    if len(unique_idx) < X.shape[0]:
        warnings.warn(
            f"removed {X.shape[0] - len(unique_idx)} duplicate training centers",
            stacklevel=2,
        )
        unique_idx = np.sort(unique_idx)
        X, Y = X[unique_idx], Y[unique_idx]
    if X.shape[0] < 2:
        raise ValueError(
            "kernel matrix is singular: need at least two distinct training pairs"
        )
    K = cdist(X, X)
    K[np.diag_indices_from(K)] += ridge
    weights = np.linalg.solve(K, Y)
    return RBFModel(centers=X, weights=weights, step=step, ridge=ridge)


@dataclass
class AdvectResult:
    """Reduced trajectory produced by ``advect``."""

    t: np.ndarray
    states: np.ndarray             # (d, N)
    truncated: bool = False


def _rk4_flow(rhs, x0: np.ndarray, t_end: float, dt: float, radius_cap: float):
    n = max(1, int(round(t_end / dt)))
    d = len(x0)
    out = np.empty((d, n + 1))
    out[:, 0] = x0
    x = x0.astype(float).copy()
    truncated = False
    k = 0
    for k in range(n):
        k1 = rhs(x)
        k2 = rhs(x + 0.5 * dt * k1)
        k3 = rhs(x + 0.5 * dt * k2)
        k4 = rhs(x + dt * k3)
        x = x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        out[:, k + 1] = x
        if not np.all(np.isfinite(x)) or np.linalg.norm(x) > radius_cap:
            truncated = True
            break
    n_done = k + 2 if truncated else n + 1
    return out[:, :n_done], truncated


def advect(model, eta0: np.ndarray, t_end: float, dt: Optional[float] = None) -> AdvectResult:
    """Advance a reduced state.

    Continuous models are integrated with fixed-step RK4 (default step: one
    tenth of the training sampling step); the RBF map is iterated discretely,
    requiring ``t_end`` to be a whole number of steps.  Trajectories leaving
    ten times the training radius are truncated and flagged.
    """
    eta0 = np.asarray(eta0, dtype=float).ravel()
    if isinstance(model, RBFModel):
        ratio = t_end / model.step
        n = int(round(ratio))
        if abs(ratio - n) > 1e-9 or n < 1:
            raise ValueError("t_end must be a positive multiple of the training step")
        cap = 10.0 * model.train_radius
        out = np.empty((model.d, n + 1))
        out[:, 0] = eta0
        x = eta0
        truncated = False
        k = 0
        for k in range(n):
            x = model.predict(x)
            out[:, k + 1] = x
            if not np.all(np.isfinite(x)) or np.linalg.norm(x) > cap:
                truncated = True
                break
        n_done = k + 2 if truncated else n + 1
        t = model.step * np.arange(n_done)
        return AdvectResult(t=t, states=out[:, :n_done], truncated=truncated)
    if isinstance(model, PolyReducedModel):
        step = dt if dt is not None else model.train_dt / 10.0
        cap = 10.0 * max(model.train_radius, np.linalg.norm(eta0))
        states, truncated = _rk4_flow(model.rhs, eta0, t_end, step, cap)
        return AdvectResult(
            t=step * np.arange(states.shape[1]), states=states, truncated=truncated
        )
    if isinstance(model, NormalFormModel):
        step = dt if dt is not None else (model.train_dt / 10.0 if model.train_dt else t_end / 1000.0)
        rho0, theta0 = model.to_polar(eta0[:, None])
        x0 = np.concatenate([rho0[:, 0], theta0[:, 0]])
        p = model.p
        amp_max = np.max(model.train_amp_max) if model.train_amp_max.size else np.inf
        cap = 10.0 * max(amp_max, np.max(np.abs(rho0)), 1e-12)

        def rhs(x):
            rho, theta = x[:p], x[p:]
            g = model.amplitude_growth(rho[:, None])[:, 0]
            dphi = model.phase_rhs(rho)
            return np.concatenate([rho * g, dphi])

        polar, truncated = _rk4_flow(
            rhs, x0, t_end, step, radius_cap=np.sqrt(cap**2 + 1e6)
        )
        # the cap above is on the combined vector; enforce the amplitude cap
        amp_norm = np.linalg.norm(polar[:p], axis=0)
        over = np.where(amp_norm > cap)[0]
        if over.size:
            polar = polar[:, : over[0] + 1]
            truncated = True
        states = model.eta_of_polar(polar[:p], polar[p:])
        return AdvectResult(
            t=step * np.arange(states.shape[1]), states=states, truncated=truncated
        )
    raise TypeError(f"cannot advect model of type {type(model).__name__}")
