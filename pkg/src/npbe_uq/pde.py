"""Pulled-back nonlinear Poisson-Boltzmann solver on a Cartesian grid.

The diffusion tensor eps* J^-1 J^-T det J is discretized flux-conservatively:
axis-aligned fluxes use face coefficients with harmonic averaging of the
dielectric across interfaces, and the mixed-derivative part is split along
the two diagonal directions of each coordinate plane, which keeps the
assembled matrix symmetric.  For a pure translation map the tensor reduces
to eps*I and the stencil degenerates to the classic 7-point one.

The sinh nonlinearity is handled by damped Newton iteration with residual
backtracking; inner linear systems are solved by Jacobi-preconditioned
conjugate gradients.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import geometry
from .errors import AssemblyError, ConvergenceError, DomainError


# ---------------------------------------------------------------------------
# Grid and fields
# ---------------------------------------------------------------------------

class Grid3D:
    """Uniform node-centered grid over the reference box with subdomain tags."""

    def __init__(self, domain: geometry.ReferenceDomain, shape):
        if np.isscalar(shape):
            shape = (int(shape),) * 3
        self.shape = tuple(int(n) for n in shape)
        if any(n < 2 for n in self.shape):
            raise DomainError("grid needs at least 2 nodes per axis")
        self.domain = domain
        spacings = (domain.box_max - domain.box_min) / (np.array(self.shape) - 1)
        if not np.allclose(spacings, spacings[0], rtol=1e-12):
            raise DomainError("grid spacing must be equal along all axes")
        self.h = float(spacings[0])
        self.axes = [
            np.linspace(domain.box_min[d], domain.box_max[d], self.shape[d])
            for d in range(3)
        ]
        mesh = np.meshgrid(*self.axes, indexing="ij")
        self.points = np.stack([m.ravel() for m in mesh], axis=-1)
        self.subdomain_tag = geometry.classify_point(domain, self.points).reshape(self.shape)
        interior = np.zeros(self.shape, dtype=bool)
        interior[1:-1, 1:-1, 1:-1] = True
        self.interior_mask = interior.ravel()
        self.boundary_mask = ~self.interior_mask
        self.interior_idx = np.flatnonzero(self.interior_mask)
        self.boundary_idx = np.flatnonzero(self.boundary_mask)

    @property
    def n_nodes(self) -> int:
        return int(np.prod(self.shape))

    def node_weights(self) -> np.ndarray:
        """Node-centered cell volumes: h per axis, halved at the endpoints."""
        per_axis = []
        for n in self.shape:
            w = np.full(n, self.h)
            w[0] *= 0.5
            w[-1] *= 0.5
            per_axis.append(w)
        wx, wy, wz = per_axis
        return (wx[:, None, None] * wy[None, :, None] * wz[None, None, :]).ravel()


@dataclass
class GridField:
    """Scalar field on a Grid3D (solution, forcing, residuals)."""

    grid: Grid3D
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).reshape(self.grid.shape)
        if not np.all(np.isfinite(self.values)):
            raise DomainError("grid field contains non-finite values")

    @property
    def dims(self):
        return self.grid.shape

    @property
    def h(self) -> float:
        return self.grid.h

    @property
    def flat(self) -> np.ndarray:
        return self.values.ravel()


@dataclass(frozen=True)
class Charge:
    position: np.ndarray  # Angstrom
    magnitude: float
    width: float          # Gaussian std-dev s, Angstrom

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float))
        if self.width <= 0.0:
            raise DomainError("charge width must be positive")


@dataclass
class PBECoefficients:
    eps: np.ndarray      # dielectric per subdomain (U1, U2, U3)
    kappa2: np.ndarray   # modified Debye-Hueckel squared per subdomain
    charges: list = field(default_factory=list)
    boundary: object = 0.0  # scalar or callable(points) -> values

    def __post_init__(self):
        self.eps = np.asarray(self.eps, dtype=float)
        self.kappa2 = np.asarray(self.kappa2, dtype=float)
        if self.eps.shape != (3,) or np.any(self.eps <= 0.0):
            raise DomainError("eps must be 3 positive values")
        if self.kappa2.shape != (3,) or np.any(self.kappa2 < 0.0):
            raise DomainError("kappa2 must be 3 nonnegative values")


def boundary_values(grid: Grid3D, g) -> np.ndarray:
    """Dirichlet data sampled at the boundary nodes."""
    if callable(g):
        return np.asarray(g(grid.points[grid.boundary_idx]), dtype=float)
    return np.full(len(grid.boundary_idx), float(g))


# ---------------------------------------------------------------------------
# Operator assembly
# ---------------------------------------------------------------------------

@dataclass
class AssembledOperator:
    """Interior diffusion matrix plus boundary coupling for Dirichlet data."""

    grid: Grid3D
    matrix: sp.csr_matrix          # interior x interior, symmetric PSD
    boundary_coupling: sp.csr_matrix  # interior x boundary

    def rhs_interior(self, f_flat: np.ndarray, g_bnd: np.ndarray) -> np.ndarray:
        return f_flat[self.grid.interior_idx] - self.boundary_coupling @ g_bnd


def _face_tensor(dmap, y, midpoints, translation: bool):
    """eps-free part of the pulled-back tensor J^-1 J^-T det J at face midpoints."""
    if translation:
        P = len(midpoints)
        T = np.zeros((P, 3, 3))
        T[:] = np.eye(3)
        det = np.ones(P)
        return T, det
    J = geometry.jacobian(dmap, midpoints, y)
    det = geometry.det3(J)
    adj = geometry.adjugate3(J)
    # J^-1 J^-T det J = adj adj^T / det
    T = np.einsum("pij,pkj->pik", adj, adj) / det[:, None, None]
    return T, det


def assemble_pulled_back_operator(domain, dmap, coeffs: PBECoefficients, y,
                                  grid: Grid3D) -> AssembledOperator:
    """Assemble the pulled-back diffusion operator in per-volume form.

    Face dielectric values use the harmonic mean of the two nodal values, so
    flux continuity holds weakly across the interfaces where eps jumps.
    """
    y = np.zeros(dmap.n_modes) if y is None else np.asarray(y, dtype=float)
    translation = geometry.is_translation(dmap) or dmap.n_modes == 0
    shape = grid.shape
    n = grid.n_nodes
    strides = (shape[1] * shape[2], shape[2], 1)
    eps_node = coeffs.eps[grid.subdomain_tag].ravel()
    h2 = grid.h * grid.h

    rows, cols, vals = [], [], []

    def add_faces(p_idx, q_idx, coeff):
        rows.extend((p_idx, q_idx, p_idx, q_idx))
        cols.extend((p_idx, q_idx, q_idx, p_idx))
        vals.extend((coeff, coeff, -coeff, -coeff))

    idx = np.arange(n).reshape(shape)

    # axis-aligned fluxes
    for d in range(3):
        sl_lo = [slice(None)] * 3
        sl_lo[d] = slice(0, shape[d] - 1)
        p = idx[tuple(sl_lo)].ravel()
        q = p + strides[d]
        mid = 0.5 * (grid.points[p] + grid.points[q])
        T, det = _face_tensor(dmap, y, mid, translation)
        if np.any(det <= 0.0):
            raise AssemblyError("det J <= 0 at an axis face midpoint")
        eps_face = 2.0 * eps_node[p] * eps_node[q] / (eps_node[p] + eps_node[q])
        add_faces(p, q, eps_face * T[:, d, d] / h2)

    # mixed-derivative part, split along the plane diagonals
    if not translation:
        for d in range(3):
            for e in range(d + 1, 3):
                for sign in (+1, -1):  # +1: d+e diagonal, -1: d-e diagonal
                    sl = [slice(None)] * 3
                    sl[d] = slice(0, shape[d] - 1)
                    sl[e] = slice(0, shape[e] - 1) if sign > 0 else slice(1, shape[e])
                    p = idx[tuple(sl)].ravel()
                    q = p + strides[d] + sign * strides[e]
                    mid = 0.5 * (grid.points[p] + grid.points[q])
                    T, det = _face_tensor(dmap, y, mid, translation)
                    if np.any(det <= 0.0):
                        raise AssemblyError("det J <= 0 at a diagonal face midpoint")
                    eps_face = 2.0 * eps_node[p] * eps_node[q] / (eps_node[p] + eps_node[q])
                    add_faces(p, q, sign * eps_face * T[:, d, e] / (2.0 * h2))

    rows = np.concatenate([np.atleast_1d(r) for r in rows])
    cols = np.concatenate([np.atleast_1d(c) for c in cols])
    vals = np.concatenate([np.atleast_1d(v) for v in vals])
    full = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    ii = grid.interior_idx
    bb = grid.boundary_idx
    return AssembledOperator(grid, full[ii][:, ii].tocsr(), full[ii][:, bb].tocsr())


def assemble_rhs(domain, dmap, coeffs: PBECoefficients, y, grid: Grid3D) -> GridField:
    """Nodal values of f*(r; y) det J(r; y) for the Gaussian charge model."""
    y = np.zeros(dmap.n_modes) if y is None else np.asarray(y, dtype=float)
    translation = geometry.is_translation(dmap) or dmap.n_modes == 0
    vals = np.zeros(grid.n_nodes)
    if coeffs.charges:
        det = 1.0 if translation else geometry.det3(geometry.jacobian(dmap, grid.points, y))
        for c in coeffs.charges:
            # charge centers ride along with the map; taking the displacement
            # difference mode by mode makes translation cancellation exact
            delta = grid.points - c.position
            for k, (mu, fld) in enumerate(dmap.modes):
                delta = delta + math.sqrt(mu) * y[k] * (
                    fld.value(grid.points) - fld.value(c.position))
            d2 = np.sum(delta**2, axis=-1)
            s2 = c.width**2
            amp = c.magnitude / (2.0 * math.pi * s2) ** 1.5
            vals += amp * np.exp(-0.5 * d2 / s2)
        vals = vals * det
    return GridField(grid, vals)


def reaction_profile(domain, dmap, coeffs: PBECoefficients, y, grid: Grid3D) -> GridField:
    """Nodal kappa^2(r) det J(r; y), the coefficient of sinh(u) in the residual."""
    y = np.zeros(dmap.n_modes) if y is None else np.asarray(y, dtype=float)
    kap = coeffs.kappa2[grid.subdomain_tag].ravel()
    if not (geometry.is_translation(dmap) or dmap.n_modes == 0):
        kap = kap * geometry.det3(geometry.jacobian(dmap, grid.points, y))
    return GridField(grid, kap)


# ---------------------------------------------------------------------------
# Linear solver
# ---------------------------------------------------------------------------

@dataclass
class CGInfo:
    iterations: int
    residual: float       # final absolute residual norm
    relative_residual: float


def _pcg(A, b, diag_precond, x0=None, tol=1e-10, maxiter=20000):
    x = np.zeros_like(b) if x0 is None else x0.copy()
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros_like(b), CGInfo(0, 0.0, 0.0)
    minv = 1.0 / diag_precond
    r = b - A @ x
    z = minv * r
    p = z.copy()
    rz = float(r @ z)
    it = 0
    rnorm = np.linalg.norm(r)
    while rnorm > tol * bnorm and it < maxiter:
        Ap = A @ p
        alpha = rz / float(p @ Ap)
        x += alpha * p
        r -= alpha * Ap
        z = minv * r
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new
        rnorm = np.linalg.norm(r)
        it += 1
    if rnorm > tol * bnorm:
        raise ConvergenceError(
            f"CG failed to reach tol {tol} in {maxiter} iterations", residual=float(rnorm)
        )
    return x, CGInfo(it, float(rnorm), float(rnorm / bnorm))


def interface_jump_source(grid: Grid3D, g1=0.0, g2=0.0) -> GridField:
    """Volume source approximating co-normal jump data on the two interfaces.

    Surface data g_k (scalar or callable on points) is smeared onto the nodes
    within h/2 of interface k with weight 1/h, a first-order surface delta.
    Add the result to the rhs of solve_linear_interface; zero data gives the
    default zero-jump transmission conditions.
    """
    vals = np.zeros(grid.n_nodes)
    phi1, phi2 = grid.domain.levels(grid.points)
    for g, phi in ((g1, phi1), (g2, phi2)):
        band = np.abs(phi) <= 0.5 * grid.h
        if np.any(band):
            gv = g(grid.points[band]) if callable(g) else float(g)
            vals[band] += np.asarray(gv) / grid.h
    return GridField(grid, vals)


def solve_linear_interface(op: AssembledOperator, reaction, rhs: GridField, g=0.0,
                           tol=1e-10, maxiter=20000, x0=None):
    """Solve (diffusion + reaction) u = rhs with Dirichlet data g.

    reaction is a GridField of nonnegative nodal coefficients (or None);
    returns the full-grid solution and the CG report.
    """
    grid = op.grid
    react = np.zeros(grid.n_nodes) if reaction is None else reaction.flat
    if np.any(react < 0.0):
        raise DomainError("reaction coefficient must be nonnegative")
    g_b = boundary_values(grid, g)
    b = op.rhs_interior(rhs.flat, g_b)
    A = op.matrix + sp.diags(react[grid.interior_idx])
    diag = A.diagonal()
    u_int, info = _pcg(A, b, diag, x0=x0, tol=tol, maxiter=maxiter)
    full = np.empty(grid.n_nodes)
    full[grid.interior_idx] = u_int
    full[grid.boundary_idx] = g_b
    return GridField(grid, full), info


# ---------------------------------------------------------------------------
# Newton solver for the NPBE
# ---------------------------------------------------------------------------

@dataclass
class NewtonInfo:
    iterations: int
    residual_history: list
    step_sizes: list
    converged: bool


def newton_solve_npbe(domain, dmap, coeffs: PBECoefficients, y, grid: Grid3D,
                      u0: GridField = None, tol=1e-9, max_iter=50,
                      cg_tol=1e-12, cg_maxiter=20000, op: AssembledOperator = None,
                      rhs: GridField = None, reaction: GridField = None):
    """Damped Newton iteration for the pulled-back NPBE.

    Each step solves the linearization with reaction kappa^2 cosh(u) det J and
    backtracks on the l2 residual (halving, floor 1e-3).  Terminates when the
    residual drops below tol * (1 + ||rhs||).
    """
    if op is None:
        op = assemble_pulled_back_operator(domain, dmap, coeffs, y, grid)
    if rhs is None:
        rhs = assemble_rhs(domain, dmap, coeffs, y, grid)
    if reaction is None:
        reaction = reaction_profile(domain, dmap, coeffs, y, grid)
    g_b = boundary_values(grid, coeffs.boundary)
    ii = grid.interior_idx
    kd = reaction.flat[ii]
    b = op.rhs_interior(rhs.flat, g_b)
    A = op.matrix

    if u0 is None:
        u = np.zeros(len(ii))
    else:
        u = u0.flat[ii].copy()

    def residual(v):
        with np.errstate(over="ignore", invalid="ignore"):
            r = A @ v + kd * np.sinh(v) - b
        return r

    target = tol * (1.0 + np.linalg.norm(b))
    r = residual(u)
    rnorm = float(np.linalg.norm(r))
    history = [rnorm]
    steps = []
    it = 0
    while rnorm > target and it < max_iter:
        jac_diag = kd * np.cosh(u)
        Ait = A + sp.diags(jac_diag)
        delta, _ = _pcg(Ait, -r, Ait.diagonal(), tol=cg_tol, maxiter=cg_maxiter)
        step = 1.0
        while True:
            trial = u + step * delta
            rt = residual(trial)
            tnorm = float(np.linalg.norm(rt)) if np.all(np.isfinite(rt)) else math.inf
            if tnorm < rnorm:
                break
            if step <= 1e-3:
                raise ConvergenceError(
                    "Newton line search stagnated", residual=rnorm, history=history
                )
            step *= 0.5
        u, r, rnorm = trial, rt, tnorm
        history.append(rnorm)
        steps.append(step)
        it += 1
    if rnorm > target:
        raise ConvergenceError(
            f"Newton failed to converge in {max_iter} iterations",
            residual=rnorm, history=history,
        )
    full = np.empty(grid.n_nodes)
    full[ii] = u
    full[grid.boundary_idx] = g_b
    return GridField(grid, full), NewtonInfo(it, history, steps, True)


# ---------------------------------------------------------------------------
# Quantity of interest and residual checks
# ---------------------------------------------------------------------------

def qoi_integral(u: GridField) -> float:
    """Integral of u over the box: node values times node-centered cell volumes."""
    return float(u.grid.node_weights() @ u.flat)


def operator_residual(domain, dmap, coeffs: PBECoefficients, y, u: GridField,
                      op: AssembledOperator = None) -> GridField:
    """Apply the assembled nonlinear operator to u and subtract the forcing.

    Acts as the data -> solution -> data consistency check; boundary nodes
    carry zero residual by convention.
    """
    grid = u.grid
    if op is None:
        op = assemble_pulled_back_operator(domain, dmap, coeffs, y, grid)
    rhs = assemble_rhs(domain, dmap, coeffs, y, grid)
    reaction = reaction_profile(domain, dmap, coeffs, y, grid)
    ii = grid.interior_idx
    g_b = boundary_values(grid, coeffs.boundary)
    r_int = (op.matrix @ u.flat[ii] + reaction.flat[ii] * np.sinh(u.flat[ii])
             - op.rhs_interior(rhs.flat, g_b))
    full = np.zeros(grid.n_nodes)
    full[ii] = r_int
    return GridField(grid, full)
