"""Desk-scale convergence-study orchestration.

Builds the rigid-shift experiment: Gaussian charges inside the inner sphere
are translated by sum_k alpha_k e_k Y_k with Y_k uniform on [-sqrt(3),
sqrt(3)], the NPBE is solved at every sparse-grid knot, and the expected
quantity of interest is compared against a higher-level reference.  Knots
are cached across levels by their canonical keys, so the nesting of the
Clenshaw-Curtis family is exploited exactly.
"""

from __future__ import annotations

import math
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
import yaml

from . import geometry, pde, smolyak
from .errors import ConfigError, ParseError

SQRT3 = math.sqrt(3.0)


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

@dataclass
class RunConfig:
    # geometry
    box_min: np.ndarray = None
    box_max: np.ndarray = None
    sphere_center: np.ndarray = None
    radii: tuple = (15.0, 25.0)
    # coefficients
    eps: tuple = (70.0, 70.0, 1.0)
    kappa2: tuple = (0.0, 0.0, 0.5)
    boundary_value: float = 0.0
    # charges
    charges_inline: list = field(default_factory=list)  # [[x, y, z, q], ...]
    charges_path: str = None
    charge_width: float = None  # default 2h, clamped >= 1 Angstrom
    recenter_charges: bool = True
    # stochastic shift model
    N: int = 2
    alpha: tuple = None  # Angstrom amplitudes, default 2.0 each
    # discretization
    grid_n: int = 33
    # sparse grid
    rule: str = "SM"
    levels: tuple = (1, 2, 3, 4)
    reference_level: int = 6
    # solver
    newton_tol: float = 1e-9
    cg_tol: float = 1e-12
    max_newton: int = 50
    workers: int = 1
    # output
    csv_path: str = None
    svg_path: str = None
    deterministic_csv: bool = True

    def __post_init__(self):
        if self.box_min is None:
            self.box_min = np.zeros(3)
        if self.box_max is None:
            self.box_max = np.full(3, 70.0)
        self.box_min = np.asarray(self.box_min, dtype=float)
        self.box_max = np.asarray(self.box_max, dtype=float)
        if self.sphere_center is None:
            self.sphere_center = 0.5 * (self.box_min + self.box_max)
        self.sphere_center = np.asarray(self.sphere_center, dtype=float)
        if self.N not in (1, 2, 3):
            raise ConfigError("shift model supports N in {1, 2, 3}")
        if self.alpha is None:
            self.alpha = (2.0,) * self.N
        self.alpha = tuple(float(a) for a in self.alpha)
        if len(self.alpha) != self.N:
            raise ConfigError("alpha must list one amplitude per dimension")
        if any(a <= 0.0 for a in self.alpha):
            raise ConfigError("shift amplitudes must be positive")
        if any(self.reference_level <= w for w in self.levels):
            raise ConfigError("reference level must exceed every study level")
        if self.rule not in smolyak.RULES:
            raise ConfigError(f"unknown sparse-grid rule {self.rule!r}")

    @property
    def domain(self) -> geometry.ReferenceDomain:
        return geometry.ReferenceDomain(self.box_min, self.box_max,
                                        self.sphere_center, tuple(self.radii))

    def grid(self) -> pde.Grid3D:
        return pde.Grid3D(self.domain, self.grid_n)

    def width(self, grid: pde.Grid3D) -> float:
        if self.charge_width is not None:
            return float(self.charge_width)
        return max(2.0 * grid.h, 1.0)


_BLOCK_KEYS = {
    "geometry": {"box_min", "box_max", "sphere_center", "radii"},
    "coefficients": {"eps", "kappa2", "boundary_value"},
    "charges": {"charges_inline", "charges_path", "charge_width", "recenter_charges"},
    "stochastic": {"N", "alpha"},
    "grid": {"grid_n"},
    "sparse_grid": {"rule", "levels", "reference_level"},
    "solver": {"newton_tol", "cg_tol", "max_newton", "workers"},
    "output": {"csv_path", "svg_path", "deterministic_csv"},
}

_ALIASES = {"inline": "charges_inline", "path": "charges_path",
            "width": "charge_width", "recenter": "recenter_charges", "n": "grid_n"}


def config_from_dict(raw: dict) -> RunConfig:
    kwargs = {}
    for block, entries in raw.items():
        if block in ("bounds", "region"):
            continue  # consumed by the respective CLI subcommands
        if block not in _BLOCK_KEYS:
            raise ConfigError(f"unknown config block {block!r}")
        if not isinstance(entries, dict):
            raise ConfigError(f"config block {block!r} must be a mapping")
        for key, val in entries.items():
            key = _ALIASES.get(key, key)
            if key not in _BLOCK_KEYS[block]:
                raise ConfigError(f"unknown key {key!r} in block {block!r}")
            kwargs[key] = val
    for key in ("levels", "radii", "alpha", "eps", "kappa2"):
        if key in kwargs and kwargs[key] is not None:
            kwargs[key] = tuple(kwargs[key])
    return RunConfig(**kwargs)


def load_config(path: str) -> RunConfig:
    with open(path) as fh:
        raw = yaml.safe_load(fh)
    if not isinstance(raw, dict):
        raise ConfigError(f"config file {path} is not a mapping")
    return config_from_dict(raw)


# ---------------------------------------------------------------------------
# Charge ingestion
# ---------------------------------------------------------------------------

def parse_pqr(text: str) -> list:
    """Parse ATOM lines of a PQR-subset file into (position, charge) pairs.

    Expected layout per line: ATOM id name res x y z charge radius; extra
    trailing fields are ignored.  Malformed ATOM lines raise with the
    1-based line number.
    """
    out = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip().startswith("ATOM"):
            continue
        tok = line.split()
        if len(tok) < 8:
            raise ParseError(f"line {lineno}: ATOM record has {len(tok)} fields, need 8")
        try:
            x, y, z, q = (float(t) for t in tok[4:8])
        except ValueError as exc:
            raise ParseError(f"line {lineno}: non-numeric coordinate or charge ({exc})")
        out.append((np.array([x, y, z]), q))
    return out


def ingest_charges(config: RunConfig, grid: pde.Grid3D = None) -> list:
    """Charge list from the config: inline entries or a PQR-subset file.

    Positions are recentred so their centroid sits at the sphere center;
    charges still landing outside the box are dropped with a warning.
    """
    width = config.width(grid if grid is not None else config.grid())
    if config.charges_path:
        with open(config.charges_path) as fh:
            pairs = [(p, q) for p, q in parse_pqr(fh.read())]
    else:
        pairs = []
        for entry in config.charges_inline:
            entry = list(entry)
            if len(entry) != 4:
                raise ConfigError(f"inline charge needs [x, y, z, q], got {entry}")
            pairs.append((np.array(entry[:3], dtype=float), float(entry[3])))
    if not pairs:
        raise ParseError("no valid charges found")
    positions = np.array([p for p, _ in pairs])
    if config.recenter_charges:
        positions = positions - positions.mean(axis=0) + config.sphere_center
    domain = config.domain
    charges, rejected = [], []
    for pos, (_, q) in zip(positions, pairs):
        if not domain.contains(pos):
            rejected.append(pos)
            continue
        charges.append(pde.Charge(pos, q, width))
    if rejected:
        warnings.warn(f"dropped {len(rejected)} charges outside the box after recentring")
    if not charges:
        raise ParseError("all charges fell outside the box after recentring")
    return charges


def shifted_charges(charges: list, alpha, y, domain: geometry.ReferenceDomain = None,
                    margin: float = 0.0) -> list:
    """Rigid shift of every charge by sum_k alpha_k e_k y_k."""
    y = np.asarray(y, dtype=float)
    shift = np.zeros(3)
    for k, (a, yk) in enumerate(zip(alpha, y)):
        shift[k] = a * yk
    out = [replace(c, position=c.position + shift) for c in charges]
    if domain is not None:
        lo = domain.box_min + margin
        hi = domain.box_max - margin
        for c in out:
            if np.any(c.position < lo) or np.any(c.position > hi):
                raise ConfigError(
                    "shifted charge support leaves the box interior margin; reduce alpha"
                )
    return out


# ---------------------------------------------------------------------------
# Convergence study
# ---------------------------------------------------------------------------

@dataclass
class ConvergenceRecord:
    w: int
    eta: int
    qoi_mean: float
    error: float
    wall_time: float
    failed: bool = False


@dataclass
class StudyResult:
    records: list
    reference_qoi: float
    reference_level: int
    reference_eta: int
    csv_text: str


def _csv_text(records, deterministic: bool) -> str:
    lines = ["w,eta,qoi_mean,error,wall_time_s"]
    for r in records:
        wall = 0.0 if deterministic else r.wall_time
        lines.append(f"{r.w},{r.eta},{r.qoi_mean:.17g},{r.error:.17g},{wall:.3f}")
    return "\n".join(lines) + "\n"


def run_study(config: RunConfig, progress=None) -> StudyResult:
    """Execute the shift-model convergence study described by the config.

    Every sparse-grid knot is solved at most once; study levels and the
    reference level share the store.  A knot whose Newton iteration fails is
    recorded as NaN and poisons only the levels that use it.
    """
    domain = config.domain
    grid = config.grid()
    charges = ingest_charges(config, grid)
    modes = [(3.0 * a * a, geometry.ConstantShift(k)) for k, a in enumerate(config.alpha)]
    dmap = geometry.DomainMap(sorted(modes, key=lambda m: -m[0]))
    geometry.check_assumptions(domain, dmap, config.eps, config.kappa2)
    coeffs = pde.PBECoefficients(np.array(config.eps), np.array(config.kappa2),
                                 charges, config.boundary_value)
    # the shift model has J = I, so the operator is assembled once
    op = pde.assemble_pulled_back_operator(domain, dmap, coeffs, None, grid)
    reaction = pde.reaction_profile(domain, dmap, coeffs, None, grid)

    def qoi_at(y):
        ch = shifted_charges(charges, config.alpha, SQRT3 * np.asarray(y), domain)
        ck = pde.PBECoefficients(coeffs.eps, coeffs.kappa2, ch, coeffs.boundary)
        rhs = pde.assemble_rhs(domain, dmap, ck, None, grid)
        try:
            u, _ = pde.newton_solve_npbe(
                domain, dmap, ck, None, grid, tol=config.newton_tol,
                cg_tol=config.cg_tol, max_iter=config.max_newton,
                op=op, rhs=rhs, reaction=reaction,
            )
        except Exception:
            return math.nan
        return pde.qoi_integral(u)

    plans = {w: smolyak.build_plan(config.rule, w, config.N)
             for w in list(config.levels) + [config.reference_level]}
    store = smolyak.SurplusStore()
    # reference knots are a superset under nesting; evaluate its union once
    order = sorted(plans)
    pending = []
    for w in order:
        for key, y in zip(plans[w].knots, plans[w].knot_values):
            if key not in store and all(key != k for k, _ in pending):
                pending.append((key, y))
    if config.workers > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            values = list(pool.map(lambda ky: qoi_at(ky[1]), pending))
    else:
        values = []
        for idx, (key, y) in enumerate(pending):
            values.append(qoi_at(y))
            if progress is not None:
                progress(idx + 1, len(pending))
    for (key, _), val in zip(pending, values):
        store.set(key, val)

    def level_mean(w):
        vals = [store.get(k) for k in plans[w].knots]
        if any(math.isnan(v) for v in vals):
            return math.nan
        return smolyak.integrate(plans[w], store)

    ref_qoi = level_mean(config.reference_level)
    records = []
    for w in config.levels:
        t0 = time.perf_counter()
        mean = level_mean(w)
        failed = math.isnan(mean) or math.isnan(ref_qoi)
        err = math.nan if failed else abs(mean - ref_qoi)
        records.append(ConvergenceRecord(w, plans[w].n_knots, mean, err,
                                         time.perf_counter() - t0, failed))
    csv = _csv_text(records, config.deterministic_csv)
    if config.csv_path:
        with open(config.csv_path, "w") as fh:
            fh.write(csv)
    if config.svg_path:
        with open(config.svg_path, "w") as fh:
            fh.write(convergence_svg(records))
    return StudyResult(records, ref_qoi, config.reference_level,
                       plans[config.reference_level].n_knots, csv)


# ---------------------------------------------------------------------------
# Rate fitting and plotting
# ---------------------------------------------------------------------------

@dataclass
class RateFit:
    slope: float
    r_squared: float
    excluded: list  # levels skipped for nonpositive error


def fit_rate(records: list) -> RateFit:
    """Least-squares slope of log error versus log knot count."""
    pts, excluded = [], []
    for r in records:
        if r.error > 0.0 and math.isfinite(r.error):
            pts.append((math.log(r.eta), math.log(r.error)))
        else:
            excluded.append(r.w)
    if len(pts) < 2:
        raise ConfigError("need at least 2 positive errors to fit a rate")
    x = np.array([p[0] for p in pts])
    yv = np.array([p[1] for p in pts])
    A = np.stack([x, np.ones_like(x)], axis=-1)
    sol, *_ = np.linalg.lstsq(A, yv, rcond=None)
    fitted = A @ sol
    ss_res = float(np.sum((yv - fitted) ** 2))
    ss_tot = float(np.sum((yv - yv.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return RateFit(float(sol[0]), r2, excluded)


def convergence_svg(records: list, width: int = 480, height: int = 360) -> str:
    """Minimal standalone SVG of log10 error versus log10 knot count."""
    pts = [(math.log10(r.eta), math.log10(r.error))
           for r in records if r.error > 0.0 and math.isfinite(r.error)]
    body = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
            f'viewBox="0 0 {width} {height}">',
            f'<rect width="{width}" height="{height}" fill="white"/>']
    if pts:
        xs = [p[0] for p in pts]
        ys = [p[1] for p in pts]
        pad = 40
        xr = (max(xs) - min(xs)) or 1.0
        yr = (max(ys) - min(ys)) or 1.0

        def sx(v):
            return pad + (v - min(xs)) / xr * (width - 2 * pad)

        def sy(v):
            return height - pad - (v - min(ys)) / yr * (height - 2 * pad)

        poly = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in pts)
        body.append(f'<polyline points="{poly}" fill="none" stroke="steelblue" stroke-width="2"/>')
        for x, y in pts:
            body.append(f'<circle cx="{sx(x):.2f}" cy="{sy(y):.2f}" r="4" fill="steelblue"/>')
        body.append(f'<text x="{width / 2:.0f}" y="{height - 8}" text-anchor="middle" '
                    f'font-size="12">log10 knots</text>')
        body.append(f'<text x="14" y="{height / 2:.0f}" text-anchor="middle" font-size="12" '
                    f'transform="rotate(-90 14 {height / 2:.0f})">log10 error</text>')
    body.append("</svg>")
    return "\n".join(body) + "\n"
