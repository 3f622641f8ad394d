"""Closed-form analyticity-radius estimates and sparse-grid error constants.

Given a sup bound M on the residual functional over a ball of radius R and
a bound a on the inverse linearization, the quantitative implicit function
theorem yields an analyticity radius Theta and a solution-norm bound Xi in
closed form.  The largest Bernstein polyellipse inside the union of
Theta-balls around [-1, 1] has log-parameter sigma* = asinh(Theta), which
feeds the sub-exponential / algebraic convergence bounds of the sparse grid.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError


# ---------------------------------------------------------------------------
# Implicit-function-theorem region
# ---------------------------------------------------------------------------

def _s_factor(M: float, a: float, R: float) -> float:
    # common radical sqrt(aMR^2(aM+R)), factored to avoid cancellation
    return R * math.sqrt(a * M * (a * M + R))


def theta(M: float, a: float, R: float) -> float:
    """Radius of the guaranteed analyticity ball around each parameter point."""
    _require_positive(M=M, a=a, R=R)
    s = _s_factor(M, a, R)
    num = (a * M * R - s) * (a * M * R + R * R - s)
    den = 2 * a * a * M * M * R - R * s + a * M * (2 * R * R - 3 * s)
    return num / den


def xi(M: float, a: float, R: float) -> float:
    """Bound on the solution-perturbation norm inside the Theta-ball."""
    _require_positive(M=M, a=a, R=R)
    s = _s_factor(M, a, R)
    return (a * M * R + R * R - s) / (a * M + R)


def sigma_star(theta_value: float) -> float:
    """Log-parameter of the largest inscribed Bernstein polyellipse."""
    if theta_value < 0.0:
        raise DomainError("theta must be nonnegative")
    return math.asinh(theta_value)


@dataclass(frozen=True)
class RegionEstimate:
    M: float
    a: float
    R: float
    theta: float
    xi: float
    sigma_star: float


def region_estimate(M: float, a: float, R: float) -> RegionEstimate:
    t = theta(M, a, R)
    return RegionEstimate(M, a, R, t, xi(M, a, R), sigma_star(t))


def _require_positive(**kwargs):
    for name, v in kwargs.items():
        if not v > 0.0:
            raise DomainError(f"{name} must be positive, got {v}")


# ---------------------------------------------------------------------------
# Polyellipse sampling
# ---------------------------------------------------------------------------

def polyellipse_boundary(sigma: float, samples: int = 64) -> np.ndarray:
    """Boundary of the Bernstein ellipse E_sigma: cosh(s)cos t + i sinh(s)sin t."""
    if sigma <= 0.0:
        raise DomainError("sigma must be positive")
    t = np.linspace(0.0, 2.0 * math.pi, samples, endpoint=False)
    return math.cosh(sigma) * np.cos(t) + 1j * math.sinh(sigma) * np.sin(t)


def distance_to_segment(z) -> np.ndarray:
    """Distance from complex points to the real segment [-1, 1]."""
    z = np.asarray(z, dtype=complex)
    x = np.clip(z.real, -1.0, 1.0)
    return np.abs(z - x)


def m_tilde(evaluator, sigma: float, N: int, samples: int = 64) -> float:
    """Sampled sup of |nu| over the distinguished boundary of the polyellipse.

    By the maximum modulus principle the sup over the closed polyellipse is
    attained on the boundary product; sampling gives a lower estimate.
    """
    ring = polyellipse_boundary(sigma, samples)
    best = 0.0
    # tensor sampling in chunks along the first dimension to bound memory
    for first in ring:
        if N == 1:
            pts = np.array([[first]])
        else:
            rest = itertools.product(*([ring] * (N - 1)))
            pts = np.array([(first,) + tail for tail in rest])
        vals = np.abs(np.asarray(evaluator(pts), dtype=complex))
        best = max(best, float(np.max(vals)))
    return best


# ---------------------------------------------------------------------------
# Sparse-grid error-bound constants
# ---------------------------------------------------------------------------

LOG2 = math.log(2.0)


@dataclass(frozen=True)
class ErrorBoundConstants:
    sigma: float
    c2_tilde: float
    delta_star: float
    mu1: float
    mu2: float
    mu3: float
    a_delta_sigma: float
    C1: float
    Q: float
    N: int
    M_tilde: float
    c1_perturbed: bool  # C1 landed exactly on 1 and was nudged by 1e-12


@dataclass(frozen=True)
class ErrorBound:
    constants: ErrorBoundConstants
    w: int
    eta: int
    regime: str            # "subexponential" or "algebraic"
    subexp_bound: float
    algebraic_bound: float

    @property
    def bound(self) -> float:
        return self.subexp_bound if self.regime == "subexponential" else self.algebraic_bound


def error_constants(sigma_star_value: float, N: int, M_tilde: float) -> ErrorBoundConstants:
    """Evaluate the full constant block feeding both convergence bounds.

    The undefined prefactor C(sigma) inside C1 is taken equal to the
    adjacent constant C2~(sigma); intermediate values are all exposed for
    auditability.
    """
    if sigma_star_value <= 0.0:
        raise DomainError("sigma_star must be positive")
    if N < 1:
        raise DomainError("N must be >= 1")
    sigma = sigma_star_value / 2.0
    c2t = 1.0 + math.sqrt(math.pi / (2.0 * sigma)) / LOG2
    delta = (math.e * LOG2 - 1.0) / c2t
    mu1 = sigma / (1.0 + math.log(2.0 * N))
    mu2 = LOG2 / (N * (1.0 + math.log(2.0 * N)))
    mu3 = sigma * delta * c2t / (1.0 + 2.0 * math.log(2.0 * N))
    a_ds = math.exp(
        delta * sigma * (
            1.0 / (sigma * LOG2**2)
            + 1.0 / (LOG2 * math.sqrt(2.0 * sigma))
            + 2.0 * (1.0 + math.sqrt(math.pi / (2.0 * sigma)) / LOG2)
        )
    )
    C1 = 4.0 * M_tilde * c2t * a_ds / (math.e * delta * sigma)
    perturbed = C1 == 1.0
    if perturbed:
        C1 += 1e-12
    Q = (C1 / math.exp(sigma * delta * c2t)) * (max(1.0, C1) ** N / abs(1.0 - C1))
    return ErrorBoundConstants(sigma, c2t, delta, mu1, mu2, mu3, a_ds, C1, Q, N,
                               M_tilde, perturbed)


def error_bound(sigma_star_value: float, N: int, M_tilde: float, w: int, eta: int) -> ErrorBound:
    """A priori sup-error bound for a level-w plan with eta knots.

    The sub-exponential form applies when w > N / log 2; otherwise only the
    algebraic bound holds.  Both are reported.
    """
    c = error_constants(sigma_star_value, N, M_tilde)
    subexp = c.Q * eta**c.mu3 * math.exp(-(N * c.sigma / 2 ** (1.0 / N)) * eta**c.mu2)
    algebraic = (c.C1 * max(1.0, c.C1) ** N / abs(1.0 - c.C1)) * eta ** (-c.mu1)
    regime = "subexponential" if w > N / LOG2 else "algebraic"
    return ErrorBound(c, w, eta, regime, subexp, algebraic)


# ---------------------------------------------------------------------------
# Discrete estimate of the inverse-linearization norm
# ---------------------------------------------------------------------------

def estimate_inverse_norm(matvec_solve, n: int, iters: int = 30, seed: int = 0) -> float:
    """Inverse power iteration estimate of ||A^-1||_2 via repeated solves.

    matvec_solve(b) must return an (approximate) solution of A x = b.  The
    result is an h-dependent discrete proxy, not a continuum bound.
    """
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(n)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(iters):
        x = matvec_solve(v)
        lam = np.linalg.norm(x)
        if lam == 0.0:
            return 0.0
        v = x / lam
    return float(lam)
