"""Convergence experiments: LOD-GFEM and coarse P1-FEM against a fine reference.

Config files are flat ``key = value`` text, ``#`` starts a comment, lists are
comma separated. Recognised keys (defaults in ``ExperimentConfig``)::

    problem          linear | semilinear
    fine_level       int
    coarse_levels    e.g. 2,3,4
    k_schedule       e.g. 1,2,2
    tau, n_steps
    coefficient      constant | random | file
    coeff_value      (constant)
    coeff_grid_level, coeff_lo, coeff_hi, coeff_seed   (random)
    coeff_file       (file)
    output           CSV report path
    corrector_tol, step_tol
    cache_dir        optional corrector cache directory
    decay_coarse_level, decay_node, decay_k_max        (decay study)

The linear problem uses f(x, t) = t and u0 = 1 (clipped to zero on the
boundary); the semilinear problem is Allen-Cahn, f(u) = -(u^3 - u), with
u0 = x(1-x)y(1-y).
"""

import logging
import math
import os
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .assembly import assemble, clement, coarse_galerkin_operators, interpolate
from .coeff import constant_field, load_field, random_field
from .errors import ConfigParseError, ConfigurationError, DomainError, LodError, StageError
from .linalg import CORRECTOR_TOL, STEP_TOL, JacobiCG, l2_norm
from .lod import build_space, cached_correctors, corrector_decay
from .mesh import build_mesh, build_pair
from .timestep import (Schedule, allen_cahn, backward_euler_linear, backward_euler_semilinear,
                       ms_initial_projection)

log = logging.getLogger(__name__)

PROBLEMS = ("linear", "semilinear")
COEFFICIENTS = ("constant", "random", "file")
REPORT_HEADER = "level,H,dofs,k,rel_err_lod,rel_err_p1"


@dataclass
class ExperimentConfig:
    problem: str = "linear"
    fine_level: int = 6
    coarse_levels: tuple = (2, 3, 4)
    k_schedule: tuple = (1, 2, 2)
    tau: float = 0.01
    n_steps: int = 100
    coefficient: str = "constant"
    coeff_value: float = 1.0
    coeff_grid_level: int = 4
    coeff_lo: float = 0.1
    coeff_hi: float = 1e5
    coeff_seed: int = 1
    coeff_file: str = ""
    output: str = "report.csv"
    corrector_tol: float = CORRECTOR_TOL
    step_tol: float = STEP_TOL
    cache_dir: str = ""
    decay_coarse_level: int = 3
    decay_node: tuple = (0.25, 0.25)
    decay_k_max: int = 5

    def validate(self):
        if self.problem not in PROBLEMS:
            raise ConfigurationError(f"problem must be one of {PROBLEMS}, got {self.problem!r}")
        if self.coefficient not in COEFFICIENTS:
            raise ConfigurationError(
                f"coefficient must be one of {COEFFICIENTS}, got {self.coefficient!r}")
        if not self.coarse_levels:
            raise ConfigurationError("coarse_levels is empty")
        if len(self.k_schedule) != len(self.coarse_levels):
            raise ConfigurationError("k_schedule and coarse_levels differ in length")
        if any(k < 0 for k in self.k_schedule):
            raise ConfigurationError("patch sizes must be nonnegative")
        if min(self.coarse_levels) < 1 or self.fine_level <= max(self.coarse_levels):
            raise ConfigurationError("need 1 <= coarse levels < fine_level")
        if self.fine_level > 10:
            raise ConfigurationError("fine_level above 10 is not supported")
        if self.coefficient == "random" and self.coeff_grid_level > self.fine_level:
            raise ConfigurationError("coefficient grid is finer than the fine mesh")
        if self.coefficient == "file" and not self.coeff_file:
            raise ConfigurationError("coefficient = file needs coeff_file")
        if not self.tau > 0 or self.n_steps < 1:
            raise ConfigurationError("need tau > 0 and n_steps >= 1")
        if not (self.corrector_tol > 0 and self.step_tol > 0):
            raise ConfigurationError("solver tolerances must be positive")
        return self


_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}


def _parse_value(key, raw):
    kind = _TYPES[key]
    if kind is tuple:
        parts = [p.strip() for p in raw.split(",") if p.strip()]
        conv = float if key == "decay_node" else int
        return tuple(conv(p) for p in parts)
    if kind is int:
        return int(raw)
    if kind is float:
        return float(raw)
    return raw


def parse_config(text, path="<config>"):
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigParseError(f"expected 'key = value', got {line!r}", path, lineno)
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in _TYPES:
            raise ConfigParseError(f"unknown key {key!r}", path, lineno)
        if key in values:
            raise ConfigParseError(f"duplicate key {key!r}", path, lineno)
        try:
            values[key] = _parse_value(key, raw)
        except ValueError:
            raise ConfigParseError(f"bad value for {key}: {raw!r}", path, lineno) from None
    cfg = ExperimentConfig(**values)
    try:
        return cfg.validate()
    except ConfigurationError as exc:
        raise ConfigParseError(str(exc), path) from None


def read_config(path):
    with open(path) as fh:
        text = fh.read()
    cfg = parse_config(text, path)
    base = os.path.dirname(os.path.abspath(path))
    if cfg.coeff_file and not os.path.isabs(cfg.coeff_file):
        cfg.coeff_file = os.path.join(base, cfg.coeff_file)
    return cfg


def format_config(cfg):
    lines = []
    for key, value in asdict(cfg).items():
        if isinstance(value, (tuple, list)):
            value = ",".join(repr(v) if isinstance(v, float) else str(v) for v in value)
        elif isinstance(value, float):
            value = repr(value)
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"


def write_config(cfg, path):
    _atomic_write(path, format_config(cfg))


def _atomic_write(path, text):
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", text=True)
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def make_field(cfg):
    if cfg.coefficient == "constant":
        return constant_field(cfg.coeff_value)
    if cfg.coefficient == "random":
        return random_field(cfg.coeff_grid_level, cfg.coeff_lo, cfg.coeff_hi, cfg.coeff_seed)
    return load_field(cfg.coeff_file)


@dataclass
class LevelResult:
    level: int
    H: float
    dofs: int
    k: int
    rel_err_lod: float
    rel_err_p1: float


@dataclass
class ConvergenceReport:
    rows: list = field(default_factory=list)
    order_lod: float = float("nan")
    order_p1: float = float("nan")


def fit_order(pairs):
    """Least-squares slope of log(err) against log(H)."""
    pairs = list(pairs)
    if len(pairs) < 2:
        raise DomainError("need at least two (H, err) pairs to fit an order")
    H = np.array([p[0] for p in pairs], dtype=np.float64)
    err = np.array([p[1] for p in pairs], dtype=np.float64)
    if np.any(H <= 0) or np.any(err <= 0):
        raise DomainError("H and error values must be positive")
    x = np.log(H)
    y = np.log(err)
    xc = x - x.mean()
    return float(xc @ (y - y.mean()) / (xc @ xc))


class Problem:
    """Initial data, loads and stepping routine for one experiment."""

    def __init__(self, cfg, fem):
        self.cfg = cfg
        self.fem = fem
        self.schedule = Schedule(cfg.tau, cfg.n_steps)
        if cfg.problem == "linear":
            self.u0 = fem.restrict(interpolate(fem.mesh, lambda x, y: np.ones_like(x)))
            self._unit_load = np.asarray(fem.full_mass.sum(axis=1)).ravel()[fem.interior]
        else:
            self.u0 = fem.restrict(interpolate(fem.mesh, lambda x, y: x * (1 - x) * y * (1 - y)))

    def run(self, stiffness, mass, c0, basis=None, space="fine"):
        cfg = self.cfg
        if cfg.problem == "linear":
            unit = self._unit_load if basis is None else basis.T @ self._unit_load
            traj = backward_euler_linear(stiffness, mass, lambda t: t * unit, c0, self.schedule,
                                         space=space, tol=cfg.step_tol)
            if basis is not None:
                traj.final_fine = basis @ traj.final
            return traj
        return backward_euler_semilinear(stiffness, mass, allen_cahn, c0, self.schedule,
                                         fine=self.fem, basis=basis, space=space,
                                         tol=cfg.step_tol)


def _stage(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except StageError:
        raise
    except (LodError, ArithmeticError, np.linalg.LinAlgError) as exc:
        raise StageError(name, exc) from exc


def _run_level(cfg, problem, fem, ref, ref_norm, level, k):
    pair = build_pair(level, cfg.fine_level)
    cl = clement(pair, fem)
    cache = cfg.cache_dir or None
    cs = cached_correctors(pair, fem, cl, k, cache_dir=cache, tol=cfg.corrector_tol)
    space = build_space(cs, pair, fem)
    c0 = ms_initial_projection(space, fem, problem.u0)
    lod = problem.run(space.ms_stiffness, space.ms_mass, c0, basis=space.basis, space="multiscale")
    err_lod = l2_norm(fem.mass, lod.final_fine - ref) / ref_norm

    KH, MH, E = coarse_galerkin_operators(pair, fem)
    cH0 = JacobiCG(MH, 1e-13).solve(E.T @ (fem.mass @ problem.u0))[0]
    p1 = problem.run(KH, MH, cH0, basis=E, space="coarse-p1")
    err_p1 = l2_norm(fem.mass, p1.final_fine - ref) / ref_norm
    H = math.sqrt(2.0) * 2.0 ** -level
    dofs = (2 ** level - 1) ** 2
    log.info("level %d: H=%.4g k=%d lod=%.3e p1=%.3e", level, H, k, err_lod, err_p1)
    return LevelResult(level, H, dofs, k, err_lod, err_p1)


def run_experiment(cfg, threads=1):
    cfg.validate()
    field_ = _stage("coefficient", make_field, cfg)
    fine = _stage("mesh", build_mesh, cfg.fine_level)
    fem = _stage("assembly", assemble, fine, field_)
    problem = Problem(cfg, fem)
    ref_traj = _stage("reference", problem.run, fem.stiffness, fem.mass, problem.u0)
    ref = ref_traj.final
    ref_norm = l2_norm(fem.mass, ref)
    if ref_norm == 0.0:
        raise StageError("reference", "reference solution vanishes identically")

    jobs = list(zip(cfg.coarse_levels, cfg.k_schedule))

    def work(job):
        level, k = job
        return _stage(f"level {level}", _run_level, cfg, problem, fem, ref, ref_norm, level, k)

    if threads > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(work, jobs))
    else:
        rows = [work(job) for job in jobs]

    report = ConvergenceReport(rows)
    if len(rows) >= 2:
        report.order_lod = fit_order([(r.H, r.rel_err_lod) for r in rows])
        report.order_p1 = fit_order([(r.H, r.rel_err_p1) for r in rows])
    return report


def format_report(report):
    out = [REPORT_HEADER]
    for r in report.rows:
        out.append(f"{int(r.level)},{float(r.H)!r},{int(r.dofs)},{int(r.k)},"
                   f"{float(r.rel_err_lod)!r},{float(r.rel_err_p1)!r}")
    out.append(f"# order_lod={float(report.order_lod)!r} order_p1={float(report.order_p1)!r}")
    return "\n".join(out) + "\n"


def write_report(report, path):
    _atomic_write(path, format_report(report))


def read_report(path):
    rows = []
    order_lod = order_p1 = float("nan")
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != REPORT_HEADER:
        raise ConfigParseError("missing report header", path, 1)
    for lineno, line in enumerate(lines[1:], start=2):
        if line.startswith("#"):
            parts = dict(tok.split("=", 1) for tok in line[1:].split())
            order_lod = float(parts["order_lod"])
            order_p1 = float(parts["order_p1"])
            continue
        try:
            level, H, dofs, k, e1, e2 = line.split(",")
            rows.append(LevelResult(int(level), float(H), int(dofs), int(k), float(e1), float(e2)))
        except ValueError:
            raise ConfigParseError(f"bad report row {line!r}", path, lineno) from None
    return ConvergenceReport(rows, order_lod, order_p1)


def nearest_coarse_node(mesh, point):
    inner = mesh.interior_nodes
    d = np.linalg.norm(mesh.nodes[inner] - np.asarray(point, dtype=np.float64), axis=1)
    return int(inner[np.argmin(d)])


def decay_study(cfg):
    """Energy error of localized vs global correctors for one coarse node, k = 1..decay_k_max.

    Returns rows ``(k, energy_error, ratio_to_previous)``.
    """
    cfg.validate()
    if cfg.decay_coarse_level >= cfg.fine_level:
        raise ConfigurationError("decay_coarse_level must be below fine_level")
    pair = build_pair(cfg.decay_coarse_level, cfg.fine_level)
    fem = _stage("assembly", assemble, pair.fine, make_field(cfg))
    cl = clement(pair, fem)
    node = nearest_coarse_node(pair.coarse, cfg.decay_node)
    ks = list(range(1, cfg.decay_k_max + 1))
    errs = _stage("decay", corrector_decay, pair, fem, cl, node, ks, tol=cfg.corrector_tol)
    rows = []
    for i, (k, e) in enumerate(zip(ks, errs)):
        ratio = errs[i] / errs[i - 1] if i > 0 and errs[i - 1] > 0 else float("nan")
        rows.append((k, e, ratio))
    return rows
