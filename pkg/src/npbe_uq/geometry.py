"""Reference domain, analytic domain maps, and Jacobian-level quantities.

The reference box holds two nested spheres (molecular surface and
ion-exclusion surface), splitting it into regions U1 (inner ball),
U2 (shell), and U3 (solvent out to the box boundary).  Domain maps are
finite expansions ``F(r; y) = r + sum_k sqrt(mu_k) b_k(r) y_k`` with
closed-form displacement fields, so Jacobians and their derivatives are
available analytically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, MapOrientationError

U1, U2, U3 = "U1", "U2", "U3"


# ---------------------------------------------------------------------------
# Reference domain
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ReferenceDomain:
    """Box with two concentric spheres defining a nested 3-region split."""

    box_min: np.ndarray
    box_max: np.ndarray
    sphere_center: np.ndarray
    radii: tuple[float, float]  # (r1, r2), r1 < r2

    def __post_init__(self):
        object.__setattr__(self, "box_min", np.asarray(self.box_min, dtype=float))
        object.__setattr__(self, "box_max", np.asarray(self.box_max, dtype=float))
        object.__setattr__(self, "sphere_center", np.asarray(self.sphere_center, dtype=float))
        r1, r2 = self.radii
        if not 0.0 < r1 < r2:
            raise DomainError(f"sphere radii must satisfy 0 < r1 < r2, got {self.radii}")
        # spheres must sit strictly inside the box for proper nesting
        if np.any(self.sphere_center - r2 <= self.box_min) or np.any(
            self.sphere_center + r2 >= self.box_max
        ):
            raise DomainError("outer sphere not compactly contained in box")

    def levels(self, r):
        """Signed distances to the two sphere interfaces, vectorized."""
        r = np.asarray(r, dtype=float)
        d = np.linalg.norm(r - self.sphere_center, axis=-1)
        return d - self.radii[0], d - self.radii[1]

    def contains(self, r):
        r = np.asarray(r, dtype=float)
        return np.all((r >= self.box_min) & (r <= self.box_max), axis=-1)


def classify_point(domain: ReferenceDomain, r, band: float = 0.0):
    """Classify a point (or array of points) into U1/U2/U3.

    Returns the label for a single point, or an integer array with values
    0/1/2 for stacked points.  With ``band > 0`` a second return value flags
    points within ``band`` of either sphere interface.
    """
    r = np.asarray(r, dtype=float)
    single = r.ndim == 1
    if not np.all(domain.contains(r)):
        raise DomainError("point outside reference box")
    phi1, phi2 = domain.levels(r)
    tag = np.where(phi1 <= 0.0, 0, np.where(phi2 <= 0.0, 1, 2))
    adjacent = (np.abs(phi1) <= band) | (np.abs(phi2) <= band)
    if single:
        label = (U1, U2, U3)[int(tag)]
        return (label, bool(adjacent)) if band > 0.0 else label
    return (tag, adjacent) if band > 0.0 else tag


# ---------------------------------------------------------------------------
# Displacement fields
# ---------------------------------------------------------------------------

_AXES = {"x": 0, "y": 1, "z": 2}


def _quintic_step(t):
    """C^2 smoothstep on [0, 1] with value, first and second derivative."""
    t = np.clip(t, 0.0, 1.0)
    s = t * t * t * (10.0 + t * (-15.0 + 6.0 * t))
    ds = 30.0 * t * t * (1.0 + t * (-2.0 + t))
    d2s = 60.0 * t * (1.0 + t * (-3.0 + 2.0 * t))
    return s, ds, d2s


class ConstantShift:
    """Unit translation along one axis; B = 0 everywhere."""

    def __init__(self, axis: int):
        self.axis = axis

    def value(self, r):
        r = np.asarray(r, dtype=float)
        out = np.zeros(r.shape)
        out[..., self.axis] = 1.0
        return out

    def jac(self, r):
        r = np.asarray(r, dtype=float)
        return np.zeros(r.shape[:-1] + (3, 3))

    def jac_deriv(self, r):
        """d(B)/dr_i for i=0,1,2, shape (..., 3, 3, 3) indexed [..., i, :, :]."""
        r = np.asarray(r, dtype=float)
        return np.zeros(r.shape[:-1] + (3, 3, 3))


class CutoffShift:
    """Unit axis shift scaled by a C^2 separable cutoff.

    The cutoff is 1 on the inner plateau of the box and decays to 0 over a
    margin of width ``margin`` at each box face, so the box boundary stays
    fixed while interior interfaces move.
    """

    def __init__(self, axis: int, box_min, box_max, margin: float):
        self.axis = axis
        self.box_min = np.asarray(box_min, dtype=float)
        self.box_max = np.asarray(box_max, dtype=float)
        if margin <= 0.0 or np.any(2.0 * margin >= self.box_max - self.box_min):
            raise DomainError("cutoff margin must be positive and below half the box width")
        self.margin = float(margin)

    def _axis_factors(self, r):
        """Per-axis cutoff q, q', q'' at each point; shapes (..., 3)."""
        r = np.asarray(r, dtype=float)
        lo = (r - self.box_min) / self.margin
        hi = (self.box_max - r) / self.margin
        s_lo, ds_lo, d2s_lo = _quintic_step(lo)
        s_hi, ds_hi, d2s_hi = _quintic_step(hi)
        q = s_lo * s_hi
        dq = (ds_lo * s_hi - s_lo * ds_hi) / self.margin
        d2q = (d2s_lo * s_hi - 2.0 * ds_lo * ds_hi + s_lo * d2s_hi) / self.margin**2
        return q, dq, d2q

    def _chi(self, r):
        q, dq, d2q = self._axis_factors(r)
        chi = np.prod(q, axis=-1)
        grad = np.empty(q.shape)
        hess = np.empty(q.shape[:-1] + (3, 3))
        for i in range(3):
            others = [d for d in range(3) if d != i]
            grad[..., i] = dq[..., i] * q[..., others[0]] * q[..., others[1]]
        for i in range(3):
            for j in range(3):
                if i == j:
                    others = [d for d in range(3) if d != i]
                    hess[..., i, i] = d2q[..., i] * q[..., others[0]] * q[..., others[1]]
                else:
                    k = 3 - i - j
                    hess[..., i, j] = dq[..., i] * dq[..., j] * q[..., k]
        return chi, grad, hess

    def value(self, r):
        r = np.asarray(r, dtype=float)
        chi, _, _ = self._chi(r)
        out = np.zeros(r.shape)
        out[..., self.axis] = chi
        return out

    def jac(self, r):
        r = np.asarray(r, dtype=float)
        _, grad, _ = self._chi(r)
        out = np.zeros(r.shape[:-1] + (3, 3))
        out[..., self.axis, :] = grad
        return out

    def jac_deriv(self, r):
        r = np.asarray(r, dtype=float)
        _, _, hess = self._chi(r)
        out = np.zeros(r.shape[:-1] + (3, 3, 3))
        for i in range(3):
            out[..., i, self.axis, :] = hess[..., i, :]
        return out


def field_from_template(name: str, domain: ReferenceDomain, cutoff_margin: float = None):
    """Build a displacement field from its config template name."""
    kind, _, axis = name.rpartition("_")
    if axis not in _AXES:
        raise DomainError(f"unknown displacement template {name!r}")
    ax = _AXES[axis]
    if kind == "constant_shift":
        return ConstantShift(ax)
    if kind == "cutoff_shift":
        if cutoff_margin is None:
            cutoff_margin = 0.1 * float(np.min(domain.box_max - domain.box_min))
        return CutoffShift(ax, domain.box_min, domain.box_max, cutoff_margin)
    raise DomainError(f"unknown displacement template {name!r}")


# ---------------------------------------------------------------------------
# Domain map
# ---------------------------------------------------------------------------

@dataclass
class DomainMap:
    """Analytic family F(r; y) = r + sum_k sqrt(mu_k) b_k(r) y_k."""

    modes: list  # list of (mu_k, field)

    def __post_init__(self):
        mus = [m for m, _ in self.modes]
        if any(m < 0.0 for m in mus):
            raise DomainError("mode amplitudes mu_k must be nonnegative")
        if any(mus[i] < mus[i + 1] for i in range(len(mus) - 1)):
            raise DomainError("mode amplitudes mu_k must be nonincreasing")

    @property
    def n_modes(self) -> int:
        return len(self.modes)

    def check_normalization(self, domain: ReferenceDomain, n: int = 24, tol: float = 1e-6):
        """Dense-sample check that ||b_k||_Linf(U) = 1 for every mode."""
        pts = _box_grid(domain, n)
        for k, (_, fld) in enumerate(self.modes):
            sup = np.max(np.linalg.norm(fld.value(pts), axis=-1))
            if abs(sup - 1.0) > tol:
                raise DomainError(f"mode {k} violates ||b_k||_Linf = 1 (sampled sup {sup:.8f})")


def _box_grid(domain: ReferenceDomain, n: int):
    axes = [np.linspace(domain.box_min[d], domain.box_max[d], n) for d in range(3)]
    g = np.meshgrid(*axes, indexing="ij")
    return np.stack([a.ravel() for a in g], axis=-1)


def map_forward(dmap: DomainMap, r, y):
    """Evaluate F(r; y).  Complex y is allowed for analyticity probes."""
    r = np.asarray(r, dtype=float)
    y = np.asarray(y)
    out = r.astype(complex) if np.iscomplexobj(y) else r.copy()
    for k, (mu, fld) in enumerate(dmap.modes):
        out = out + math.sqrt(mu) * y[k] * fld.value(r)
    return out


def jacobian(dmap: DomainMap, r, y):
    """J(r; y) = I + sum_k sqrt(mu_k) B_k(r) y_k, shape (..., 3, 3)."""
    r = np.asarray(r, dtype=float)
    y = np.asarray(y)
    dtype = complex if np.iscomplexobj(y) else float
    J = np.zeros(r.shape[:-1] + (3, 3), dtype=dtype)
    J[...] = np.eye(3)
    for k, (mu, fld) in enumerate(dmap.modes):
        J = J + math.sqrt(mu) * y[k] * fld.jac(r)
    return J


def det3(J):
    """Determinant of stacked 3x3 matrices by cofactor expansion."""
    a = J[..., 0, 0] * (J[..., 1, 1] * J[..., 2, 2] - J[..., 1, 2] * J[..., 2, 1])
    b = J[..., 0, 1] * (J[..., 1, 0] * J[..., 2, 2] - J[..., 1, 2] * J[..., 2, 0])
    c = J[..., 0, 2] * (J[..., 1, 0] * J[..., 2, 1] - J[..., 1, 1] * J[..., 2, 0])
    return a - b + c


def adjugate3(J):
    """Adjugate of stacked 3x3 matrices (J^-1 = adj(J) / det(J))."""
    adj = np.empty_like(J)
    adj[..., 0, 0] = J[..., 1, 1] * J[..., 2, 2] - J[..., 1, 2] * J[..., 2, 1]
    adj[..., 0, 1] = J[..., 0, 2] * J[..., 2, 1] - J[..., 0, 1] * J[..., 2, 2]
    adj[..., 0, 2] = J[..., 0, 1] * J[..., 1, 2] - J[..., 0, 2] * J[..., 1, 1]
    adj[..., 1, 0] = J[..., 1, 2] * J[..., 2, 0] - J[..., 1, 0] * J[..., 2, 2]
    adj[..., 1, 1] = J[..., 0, 0] * J[..., 2, 2] - J[..., 0, 2] * J[..., 2, 0]
    adj[..., 1, 2] = J[..., 0, 2] * J[..., 1, 0] - J[..., 0, 0] * J[..., 1, 2]
    adj[..., 2, 0] = J[..., 1, 0] * J[..., 2, 1] - J[..., 1, 1] * J[..., 2, 0]
    adj[..., 2, 1] = J[..., 0, 1] * J[..., 2, 0] - J[..., 0, 0] * J[..., 2, 1]
    adj[..., 2, 2] = J[..., 0, 0] * J[..., 1, 1] - J[..., 0, 1] * J[..., 1, 0]
    return adj


def det_jacobian(dmap: DomainMap, r, y):
    return det3(jacobian(dmap, r, y))


def is_translation(dmap: DomainMap) -> bool:
    """True when every mode has B_k = 0, so J = I for all y."""
    return all(isinstance(fld, ConstantShift) for _, fld in dmap.modes)


# ---------------------------------------------------------------------------
# Norms and assumption checks
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MapBoundsProfile:
    """Sampled lower estimates of the displacement-expansion norms."""

    b_norm_1: float
    b_norm_inf: float
    b_norm_p: float
    p: float
    mode_c1_norms: tuple = field(default=())


def _spectral_norms(mats):
    return np.linalg.svd(mats, compute_uv=False)[..., 0]


def mode_c1_norm(fld, domain: ReferenceDomain, n: int = 64) -> float:
    """Sampled sup over U of the spectral norms of B and its first derivatives."""
    pts = _box_grid(domain, n)
    sup = float(np.max(_spectral_norms(fld.jac(pts))))
    dB = fld.jac_deriv(pts)
    for i in range(3):
        sup = max(sup, float(np.max(_spectral_norms(dB[:, i]))))
    return sup


def b_norms(dmap: DomainMap, domain: ReferenceDomain, p: float = 2.0, n: int = 64) -> MapBoundsProfile:
    """Sampled estimates of ||B||_1, ||B||_inf, ||B||_p (lower estimates of the sup)."""
    if not dmap.modes:
        return MapBoundsProfile(0.0, 0.0, 0.0, p)
    c1 = [mode_c1_norm(fld, domain, n=n) for _, fld in dmap.modes]
    terms = [math.sqrt(mu) * c for (mu, _), c in zip(dmap.modes, c1)]
    norm_1 = sum(terms)
    norm_inf = max(terms)
    norm_p = sum(t**p for t in terms) ** (1.0 / p)
    return MapBoundsProfile(norm_1, norm_inf, norm_p, p, tuple(c1))


@dataclass(frozen=True)
class AssumptionReport:
    c1: float       # lower bound on epsilon over U
    c2: float       # sampled lower bound on det J over Gamma x U
    kappa_ok: bool  # kappa^2 >= 0 in every region
    b_small: bool   # ||B||_1 < 1/4
    b_norm_1: float


def check_assumptions(domain: ReferenceDomain, dmap: DomainMap, eps, kappa2,
                      n_space: int = 9, n_random_y: int = 32, seed: int = 0,
                      norm_samples: int = 32) -> AssumptionReport:
    """Sample det J over corner and random y to estimate c2; check signs.

    det J is multilinear in y for this map family, so extrema sit near the
    corners of Gamma; a 5-point tensor grid per dimension plus random interior
    draws covers both.
    """
    eps = np.asarray(eps, dtype=float)
    kappa2 = np.asarray(kappa2, dtype=float)
    if np.any(eps <= 0.0):
        raise DomainError("epsilon must be positive in every region")
    profile = b_norms(dmap, domain, p=1.0, n=norm_samples)
    pts = _box_grid(domain, n_space)
    N = dmap.n_modes
    if N == 0 or is_translation(dmap):
        c2 = 1.0
    else:
        levels = np.array([-1.0, -0.5, 0.0, 0.5, 1.0])
        grids = np.meshgrid(*([levels] * N), indexing="ij")
        ys = np.stack([g.ravel() for g in grids], axis=-1)
        rng = np.random.default_rng(seed)
        ys = np.vstack([ys, rng.uniform(-1.0, 1.0, size=(n_random_y, N))])
        c2 = math.inf
        for y in ys:
            c2 = min(c2, float(np.min(det_jacobian(dmap, pts, y))))
    if c2 <= 0.0:
        raise MapOrientationError(f"det J <= 0 sampled (min {c2:.3e}); map rejected")
    return AssumptionReport(
        c1=float(np.min(eps)),
        c2=c2,
        kappa_ok=bool(np.all(kappa2 >= 0.0)),
        b_small=profile.b_norm_1 < 0.25,
        b_norm_1=profile.b_norm_1,
    )
