"""Drivers behind the command line: matrix assembly runs, the 1D convergence
study and the WQ-vs-SGQ timing benchmark."""
import csv
from dataclasses import dataclass, field, asdict
import logging
import math
import os
import time

import numpy as np
import scipy.linalg

from .assembly import (Timings, WqAssembler, assemble_mass_sgq, assemble_mass_wq,
                       assemble_stiffness_sgq, assemble_stiffness_wq, write_matrix_market)
from .bspline import KnotVector, SplineSpace, basis_and_derivs
from .geometry import (CallableMap, IdentityMap, eval_mass_coefficient_grid,
                       eval_stiffness_coefficient_grid, load_geometry)
from .quadrature import dump_rules, exactness_residual, gauss_rule

log = logging.getLogger(__name__)

COMMANDS = ('assemble', 'convergence', 'bench')
RULES = ('wq', 'sgq')


@dataclass
class RunConfig:
    command: str = 'assemble'
    d: int = 1
    p: list = field(default_factory=lambda: [2])
    nel: list = field(default_factory=lambda: [10])
    geometry: str = 'identity'
    rule: str = 'wq'
    matrix: str = 'mass'
    out: str = 'out'
    threads: int = 1
    trials: int = 3
    dump_rules: str = None
    seed: int = 0

    def validate(self):
        if self.command not in COMMANDS:
            raise ValueError('unknown command %r, expected one of %s' % (self.command, ', '.join(COMMANDS)))
        if self.d not in (1, 2, 3):
            raise ValueError('--d must be 1, 2 or 3, got %d' % self.d)
        if self.rule not in RULES + ('both',):
            raise ValueError('--rule must be wq, sgq or both, got %r' % self.rule)
        if self.matrix not in ('mass', 'stiffness', 'both'):
            raise ValueError('--matrix must be mass, stiffness or both')
        if not self.p or min(self.p) < 1:
            raise ValueError('degrees must be >= 1, got %s' % self.p)
        if not self.nel or min(self.nel) < 1:
            raise ValueError('element counts must be >= 1, got %s' % self.nel)
        if self.threads < 1 or self.trials < 1:
            raise ValueError('--threads and --trials must be positive')
        if self.command == 'convergence':
            if self.d != 1:
                raise ValueError('the convergence study is one-dimensional; use --d 1')
            if max(self.p) > 10:
                raise ValueError('convergence study supports p <= 10')
            if len(self.nel) < 2:
                raise ValueError('convergence needs a ladder of at least two --nel values')
        if self.geometry != 'identity' and not os.path.exists(self.geometry):
            raise ValueError('geometry file not found: %s' % self.geometry)
        return self


def _geometry(cfg):
    if cfg.geometry == 'identity':
        return IdentityMap(cfg.d)
    geo = load_geometry(cfg.geometry)
    if geo.dim != cfg.d:
        raise ValueError('geometry %s has dimension %d but --d is %d'
                         % (cfg.geometry, geo.dim, cfg.d))
    return geo


def write_csv(path, records):
    records = list(records)
    if not records:
        return
    with open(path, 'w', newline='') as f:
        w = csv.DictWriter(f, fieldnames=list(records[0].keys()))
        w.writeheader()
        w.writerows(records)


# ---------------------------------------------------------------------------
# 1D convergence study: u'' + u = f on [0, pi/6], x = arcsin(t/2)

X_END = math.pi / 6


def exact_solution(x):
    return (np.exp(2 * x) - 1) / 4


def exact_derivative(x):
    return np.exp(2 * x) / 2


def source(x):
    return (5 * np.exp(2 * x) - 1) / 4


def arcsine_map():
    """Parametric [0, 1] onto [0, pi/6]; the inverse of t = 2 sin(x)."""
    return CallableMap(1, lambda t: np.arcsin(t / 2)[..., None],
                       lambda t: (1 / np.sqrt(4 - t ** 2))[..., None, None])


@dataclass
class ConvergenceRecord:
    rule: str
    p: int
    nel: int
    h: float
    linf: float
    l2: float
    h1: float
    rate_linf: float = float('nan')
    rate_l2: float = float('nan')
    rate_h1: float = float('nan')


def _system_1d(kv, rule, geo):
    space = SplineSpace([kv])
    if rule == 'wq':
        wq = WqAssembler.build(space)
        M = assemble_mass_wq(wq, eval_mass_coefficient_grid(geo, wq.grid))
        S = assemble_stiffness_wq(wq, eval_stiffness_coefficient_grid(geo, wq.grid))
    else:
        M = assemble_mass_sgq(space, geo)
        S = assemble_stiffness_sgq(space, geo)
    return M, S


def _load_1d(kv, geo, fun):
    rule = gauss_rule(kv, kv.p + 2)
    t = rule.points.ravel()
    x = geo.evaluate_grid((t,))[..., 0]
    dx = geo.jacobian_grid((t,))[..., 0, 0]
    first, vals, _ = basis_and_derivs(kv, t)
    b = np.zeros(kv.ndof)
    contrib = (rule.weights.ravel() * fun(x) * dx)[:, None] * vals
    np.add.at(b, first[:, None] + np.arange(kv.p + 1), contrib)
    return b


def _spline_values(kv, coefs, t):
    first, vals, ders = basis_and_derivs(kv, t)
    idx = first[:, None] + np.arange(kv.p + 1)
    return (vals * coefs[idx]).sum(1), (ders * coefs[idx]).sum(1)


def solve_poisson_1d(p, nel, rule='wq'):
    """Solve the 1D model problem; returns ``(kv, coefficients)``."""
    geo = arcsine_map()
    kv = KnotVector.uniform(p, nel)
    M, S = _system_1d(kv, rule, geo)
    # weak form of u'' + u = f: (M - S) u = b
    K = (M - S).toarray()
    b = _load_1d(kv, geo, source)
    n = kv.ndof
    u = np.zeros(n)
    u[-1] = exact_solution(X_END)
    inner = np.arange(1, n - 1)
    rhs = b[inner] - K[inner][:, [0, n - 1]] @ u[[0, n - 1]]
    try:
        u[inner] = scipy.linalg.solve(K[np.ix_(inner, inner)], rhs)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError('singular system for p=%d nel=%d rule=%s: %s'
                                    % (p, nel, rule, exc)) from exc
    return kv, u


def solution_errors(kv, u, samples_per_span=50):
    """Max-norm, L2 and H1-seminorm errors measured in the physical domain."""
    geo = arcsine_map()
    rule = gauss_rule(kv, kv.p + 2)
    t = rule.points.ravel()
    x = geo.evaluate_grid((t,))[..., 0]
    dx = geo.jacobian_grid((t,))[..., 0, 0]
    uh, duh = _spline_values(kv, u, t)
    w = rule.weights.ravel() * dx
    l2 = math.sqrt(np.sum(w * (exact_solution(x) - uh) ** 2))
    h1 = math.sqrt(np.sum(w * (exact_derivative(x) - duh / dx) ** 2))
    ts = np.concatenate([np.linspace(a, b, samples_per_span, endpoint=False)
                         for a, b in zip(kv.breakpoints[:-1], kv.breakpoints[1:])] + [[1.0]])
    xs = geo.evaluate_grid((ts,))[..., 0]
    linf = float(np.max(np.abs(exact_solution(xs) - _spline_values(kv, u, ts)[0])))
    return linf, l2, h1


def _rate(e0, e1, h0, h1):
    if e0 <= 0 or e1 <= 0:
        return float('nan')
    return math.log(e0 / e1) / math.log(h0 / h1)


def run_convergence_1d(cfg):
    """Errors and observed rates for every (rule, p, nel) of the configuration."""
    rules = RULES if cfg.rule == 'both' else (cfg.rule,)
    records = []
    for rule in rules:
        for p in cfg.p:
            prev = None
            for nel in sorted(cfg.nel):
                kv, u = solve_poisson_1d(p, nel, rule)
                h = X_END / nel
                rec = ConvergenceRecord(rule, p, nel, h, *solution_errors(kv, u))
                if prev is not None:
                    rec.rate_linf = _rate(prev.linf, rec.linf, prev.h, h)
                    rec.rate_l2 = _rate(prev.l2, rec.l2, prev.h, h)
                    rec.rate_h1 = _rate(prev.h1, rec.h1, prev.h, h)
                records.append(rec)
                prev = rec
                log.info('%s p=%d nel=%d  L2 %.3e (rate %.2f)  H1 %.3e (rate %.2f)',
                         rule, p, nel, rec.l2, rec.rate_l2, rec.h1, rec.rate_h1)
    if cfg.out:
        os.makedirs(cfg.out, exist_ok=True)
        write_csv(os.path.join(cfg.out, 'convergence.csv'), (asdict(r) for r in records))
    return records


# ---------------------------------------------------------------------------
# benchmark

@dataclass
class BenchRecord:
    p: int
    d: int
    nel: int
    ndof: int
    nnz: int
    wq_rules: float
    wq_coefficients: float
    wq_products: float
    wq_sparse: float
    wq_total: float
    wq_flops: int
    sgq_total: float


def _time_wq(space, geo, threads):
    t0 = time.perf_counter()
    wq = WqAssembler.build(space)
    t1 = time.perf_counter()
    coeff = eval_mass_coefficient_grid(geo, wq.grid)
    t2 = time.perf_counter()
    timings = Timings()
    M = assemble_mass_wq(wq, coeff, timings, threads=threads)
    t3 = time.perf_counter()
    return M, dict(wq_rules=t1 - t0, wq_coefficients=t2 - t1, wq_products=timings.products,
                   wq_sparse=timings.sparse, wq_total=t3 - t0, wq_flops=timings.flops)


def run_bench(cfg, sgq=True):
    """Mass-matrix formation times, min over ``cfg.trials`` repetitions.

    Phases are timed in memory; the CSV is written after all runs.
    """
    geo = _geometry(cfg)
    records = []
    for nel in cfg.nel:
        for p in cfg.p:
            space = SplineSpace.uniform(p, nel, cfg.d)
            best = None
            nnz = 0
            for _ in range(cfg.trials):
                M, t = _time_wq(space, geo, cfg.threads)
                nnz = M.nnz
                best = t if best is None else {k: min(best[k], t[k]) for k in t}
            sgq_time = float('nan')
            if sgq:
                sgq_time = math.inf
                for _ in range(cfg.trials):
                    t0 = time.perf_counter()
                    assemble_mass_sgq(space, geo)
                    sgq_time = min(sgq_time, time.perf_counter() - t0)
            rec = BenchRecord(p, cfg.d, nel, space.ndof, nnz, sgq_total=sgq_time, **best)
            log.info('p=%d nel=%d  WQ %.3fs (products %.3fs, sparse %.3fs)  SGQ %.3fs',
                     p, nel, rec.wq_total, rec.wq_products, rec.wq_sparse, sgq_time)
            records.append(rec)
    if cfg.out:
        os.makedirs(cfg.out, exist_ok=True)
        write_csv(os.path.join(cfg.out, 'bench.csv'), (asdict(r) for r in records))
    return records


def fit_exponent(ps, values):
    """Least-squares slope of log(values) against log(p)."""
    return float(np.polyfit(np.log(np.asarray(ps, float)), np.log(np.asarray(values, float)), 1)[0])


# ---------------------------------------------------------------------------
# assembly runs

def run_assemble(cfg):
    """Assemble the requested matrices and write them as Matrix Market files.

    Returns a list of summary dicts (one per matrix).
    """
    geo = _geometry(cfg)
    rules = RULES if cfg.rule == 'both' else (cfg.rule,)
    kinds = ('mass', 'stiffness') if cfg.matrix == 'both' else (cfg.matrix,)
    os.makedirs(cfg.out, exist_ok=True)
    summary = []
    for p in cfg.p:
        for nel in cfg.nel:
            space = SplineSpace.uniform(p, nel, cfg.d)
            wq = None
            for rule in rules:
                for kind in kinds:
                    t0 = time.perf_counter()
                    residual = float('nan')
                    if rule == 'wq':
                        wq = wq or WqAssembler.build(space)
                        residual = max(exactness_residual(r) for r in wq.rules)
                        if kind == 'mass':
                            M = assemble_mass_wq(wq, eval_mass_coefficient_grid(geo, wq.grid),
                                                 threads=cfg.threads)
                        else:
                            M = assemble_stiffness_wq(
                                wq, eval_stiffness_coefficient_grid(geo, wq.grid),
                                threads=cfg.threads)
                    else:
                        fn = assemble_mass_sgq if kind == 'mass' else assemble_stiffness_sgq
                        M = fn(space, geo)
                    elapsed = time.perf_counter() - t0
                    path = os.path.join(cfg.out, '%s_%s_d%d_p%d_nel%d.mtx'
                                        % (kind, rule, cfg.d, p, nel))
                    try:
                        write_matrix_market(path, M, p=p, d=cfg.d, nel=nel,
                                            rule=rule.upper(), matrix=kind)
                    except OSError as exc:
                        raise OSError('cannot write %s: %s' % (path, exc)) from exc
                    info = dict(path=path, rule=rule, matrix=kind, p=p, nel=nel, d=cfg.d,
                                ndof=space.ndof, nnz=M.nnz, seconds=elapsed,
                                exactness_residual=residual)
                    summary.append(info)
            if cfg.dump_rules:
                wq = wq or WqAssembler.build(space)
                dump_rules(wq.rules, cfg.dump_rules)
    return summary
