"""Isotropic Smolyak sparse grids on nested Clenshaw-Curtis abscissas.

The sparse operator is expanded with the combination technique: an
integer-weighted sum of full tensor Lagrange interpolants over an
admissible (downward-closed) set of level multi-indices.  Nodes are keyed
by exact dyadic fractions of the Chebyshev angle, so nesting and knot
deduplication are exact rather than tolerance-based.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import mpmath
import numpy as np

from .errors import DomainError, IncompleteStoreError

RULES = ("SM", "TD", "HC")


# ---------------------------------------------------------------------------
# 1D building blocks
# ---------------------------------------------------------------------------

def growth(i: int) -> int:
    """Number of Clenshaw-Curtis points at level i: m(0)=0, m(1)=1, m(i)=2^(i-1)+1."""
    if i < 0:
        raise DomainError("level must be nonnegative")
    if i == 0:
        return 0
    if i == 1:
        return 1
    return 2 ** (i - 1) + 1


def f_degree(p: int) -> int:
    """Level budget consumed by polynomial degree p in the Smolyak index set."""
    if p < 0:
        raise DomainError("degree must be nonnegative")
    if p <= 1:
        return p
    return math.ceil(math.log2(p))


def node_keys(m: int) -> tuple[Fraction, ...]:
    """Exact angle-fraction keys of the m closed CC nodes, sorted ascending.

    A key t stands for the abscissa -cos(pi * t).  The midpoint key 1/2 is
    the single node of the m=1 rule, which keeps nesting exact across levels.
    """
    if m == 1:
        return (Fraction(1, 2),)
    if m < 3 or m % 2 == 0:
        raise DomainError(f"node count must be 1 or odd >= 3, got {m}")
    return tuple(Fraction(j, m - 1) for j in range(m))


def node_value(key: Fraction) -> float:
    # exact zero at the midpoint and exact antisymmetry about it
    if 2 * key == 1:
        return 0.0
    if 2 * key > 1:
        return -node_value(1 - key)
    return -math.cos(math.pi * float(key))


def cc_nodes(m: int) -> np.ndarray:
    """Closed Clenshaw-Curtis abscissas on [-1, 1], sorted ascending."""
    return np.array([node_value(k) for k in node_keys(m)])


@lru_cache(maxsize=None)
def _nodes_and_bary(m: int):
    """Nodes plus barycentric weights for the m-point CC rule."""
    x = cc_nodes(m)
    if m == 1:
        return x, np.array([1.0])
    # classic closed-Chebyshev barycentric weights: (-1)^j, halved at the ends
    w = np.array([(-1.0) ** j for j in range(m)])
    w[0] *= 0.5
    w[-1] *= 0.5
    return x, w


@lru_cache(maxsize=None)
def _quadrature_weights(m: int, density: str = "uniform") -> tuple[float, ...]:
    """1D weights integrating the Lagrange basis against the density.

    Solved once per node count from the Vandermonde moment system in
    extended precision; the density is a probability weight on [-1, 1]
    (uniform means 1/2 everywhere).
    """
    if density != "uniform":
        raise DomainError(f"unsupported density {density!r}")
    x = cc_nodes(m)
    with mpmath.workdps(60):
        V = mpmath.matrix(m, m)
        rhs = mpmath.matrix(m, 1)
        for k in range(m):
            for j in range(m):
                V[k, j] = mpmath.mpf(x[j]) ** k
            rhs[k] = mpmath.mpf(1) / (k + 1) if k % 2 == 0 else mpmath.mpf(0)
        w = mpmath.lu_solve(V, rhs)
    return tuple(float(wi) for wi in w)


def lagrange_eval_matrix(m: int, pts: np.ndarray) -> np.ndarray:
    """Values of the m Lagrange basis polynomials at pts, shape (len(pts), m)."""
    x, w = _nodes_and_bary(m)
    pts = np.asarray(pts)
    if m == 1:
        return np.ones(pts.shape + (1,), dtype=pts.dtype if np.iscomplexobj(pts) else float)
    diff = pts[..., None] - x
    exact = diff == 0
    diff = np.where(exact, 1.0, diff)
    terms = w / diff
    out = terms / np.sum(terms, axis=-1, keepdims=True)
    hit = np.any(exact, axis=-1)
    if np.any(hit):
        out = np.where(hit[..., None], exact.astype(out.dtype), out)
    return out


# ---------------------------------------------------------------------------
# Index sets
# ---------------------------------------------------------------------------

def _level_admissible(rule: str, i: tuple[int, ...], w: int) -> bool:
    p = [growth(ik) - 1 for ik in i]
    if rule == "SM":
        return sum(ik - 1 for ik in i) <= w
    if rule == "TD":
        return sum(p) <= w
    if rule == "HC":
        return math.prod(pk + 1 for pk in p) <= w + 1
    raise DomainError(f"unknown rule {rule!r}")


def index_set(rule: str, w: int, N: int) -> list[tuple[int, ...]]:
    """Admissible level multi-indices (components >= 1) for the given rule."""
    if w < 0 or N < 1:
        raise DomainError("need w >= 0 and N >= 1")
    if rule not in RULES:
        raise DomainError(f"unknown rule {rule!r}")
    out = []

    def rec(prefix):
        if len(prefix) == N:
            out.append(tuple(prefix))
            return
        i = 1
        while _level_admissible(rule, tuple(prefix) + (i,) + (1,) * (N - len(prefix) - 1), w):
            rec(prefix + [i])
            i += 1

    rec([])
    return sorted(out)


def polynomial_index_set(rule: str, w: int, N: int) -> set[tuple[int, ...]]:
    """Degree multi-indices spanned exactly by the sparse interpolant.

    For SM this is the set with sum_n f(p_n) <= w; for TD total degree <= w;
    for HC product (p_n + 1) <= w + 1.
    """
    degs = set()
    for i in index_set(rule, w, N):
        ranges = [range(growth(ik)) for ik in i]
        degs.update(itertools.product(*ranges))
    return degs


# ---------------------------------------------------------------------------
# Plans
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SparseGridPlan:
    rule: str
    w: int
    N: int
    terms: tuple            # ((level multi-index, combination coefficient), ...)
    knots: tuple            # canonical knot keys: tuples of (level-count, Fraction)
    knot_values: np.ndarray  # (eta, N) float abscissas, same order as knots

    @property
    def n_knots(self) -> int:
        return len(self.knots)


def _tensor_keys(i: tuple[int, ...]):
    per_dim = [node_keys(growth(ik)) for ik in i]
    return itertools.product(*per_dim)


def build_plan(rule: str, w: int, N: int) -> SparseGridPlan:
    """Combination-technique plan: terms with nonzero coefficient plus the knot union."""
    levels = set(index_set(rule, w, N))
    terms = []
    for i in sorted(levels):
        coeff = 0
        for e in itertools.product((0, 1), repeat=N):
            j = tuple(ik + ek for ik, ek in zip(i, e))
            if j in levels:
                coeff += (-1) ** sum(e)
        if coeff != 0:
            terms.append((i, coeff))
    knots = set()
    for i, _ in terms:
        knots.update(_tensor_keys(i))
    knots = tuple(sorted(knots))
    values = np.array([[node_value(k) for k in knot] for knot in knots]).reshape(len(knots), N)
    return SparseGridPlan(rule, w, N, tuple(terms), knots, values)


class SurplusStore:
    """Map from canonical knot key to an evaluated scalar."""

    def __init__(self):
        self._data = {}

    def __contains__(self, key):
        return key in self._data

    def __len__(self):
        return len(self._data)

    def set(self, key, value):
        self._data[key] = value

    def get(self, key):
        if key not in self._data:
            raise IncompleteStoreError(f"knot {key} has not been evaluated")
        return self._data[key]


def evaluate_plan(plan: SparseGridPlan, func, store: SurplusStore = None) -> SurplusStore:
    """Fill a store by calling func(y) at every knot not already present."""
    store = store if store is not None else SurplusStore()
    for key, y in zip(plan.knots, plan.knot_values):
        if key not in store:
            store.set(key, func(y))
    return store


def _term_values(plan: SparseGridPlan, store: SurplusStore, i: tuple[int, ...]) -> np.ndarray:
    ms = [growth(ik) for ik in i]
    vals = np.empty(ms)
    for idx, key in zip(itertools.product(*[range(m) for m in ms]), _tensor_keys(i)):
        vals[idx] = store.get(key)
    return vals


def interpolate(plan: SparseGridPlan, store: SurplusStore, y) -> np.ndarray:
    """Evaluate the sparse interpolant at one point (N,) or a batch (Q, N).

    Complex coordinates are supported componentwise for polyellipse sampling.
    """
    y = np.asarray(y)
    single = y.ndim == 1
    pts = y[None, :] if single else y
    if pts.shape[-1] != plan.N:
        raise DomainError(f"point dimension {pts.shape[-1]} != plan N {plan.N}")
    dtype = complex if np.iscomplexobj(pts) else float
    total = np.zeros(pts.shape[0], dtype=dtype)
    for i, coeff in plan.terms:
        vals = _term_values(plan, store, i).astype(dtype)
        acc = np.broadcast_to(vals, (pts.shape[0],) + vals.shape)
        for n in range(plan.N):
            L = lagrange_eval_matrix(growth(i[n]), pts[:, n].astype(dtype))
            acc = np.einsum("qm...,qm->q...", acc, L)
        total += coeff * acc
    return total[0] if single else total


def integrate(plan: SparseGridPlan, store: SurplusStore, density: str = "uniform") -> float:
    """Integral of the sparse interpolant against a product probability density."""
    total = 0.0
    for i, coeff in plan.terms:
        vals = _term_values(plan, store, i)
        acc = vals
        for n in range(plan.N):
            wts = np.array(_quadrature_weights(growth(i[n]), density))
            acc = np.tensordot(wts, acc, axes=(0, 0))
        total += coeff * float(acc)
    return total


# ---------------------------------------------------------------------------
# Manifest export/import
# ---------------------------------------------------------------------------

def export_manifest(plan: SparseGridPlan) -> str:
    """Text manifest (rule, w, N, knot list) so solves can be farmed out."""
    lines = [f"rule {plan.rule}", f"w {plan.w}", f"N {plan.N}", f"knots {plan.n_knots}"]
    for key, val in zip(plan.knots, plan.knot_values):
        frac = " ".join(f"{k.numerator}/{k.denominator}" for k in key)
        coords = " ".join(f"{v:.17g}" for v in val)
        lines.append(f"{frac} : {coords}")
    return "\n".join(lines) + "\n"


def import_manifest(text: str) -> SparseGridPlan:
    """Rebuild a plan from its manifest and verify the knot list matches."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    header = dict(ln.split() for ln in lines[:4])
    plan = build_plan(header["rule"], int(header["w"]), int(header["N"]))
    if plan.n_knots != int(header["knots"]):
        raise DomainError("manifest knot count does not match rebuilt plan")
    for ln, key in zip(lines[4:], plan.knots):
        fracs = tuple(Fraction(tok) for tok in ln.split(":")[0].split())
        if fracs != key:
            raise DomainError(f"manifest knot {fracs} does not match plan knot {key}")
    return plan
