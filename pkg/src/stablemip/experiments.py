"""Scenario-driven experiments: density, pathwise and weak convergence in N.

Replications are independent jobs keyed by ``(N, rep)``; each draws all of
its randomness from a counter-based stream family derived from
``(seed, N, rep)``, and results are merged on sorted keys.  Outputs are
therefore identical for any thread budget.
"""
from __future__ import annotations

import json
import logging
import math
import os
import subprocess
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .densities import Profile
from .error_metrics import (ErrorRecord, RateFit, TVEstimate, density_sup_error, fit_rate, lm_omega_norm,
                            theoretical_slope, tv_error, write_records)
from .errors import NumericalAbort, ValidationError
from .fpe_solver import DensityPath, FpeConfig, solve_fpe
from .mollifier import make_bump_kernel, scale_kernel
from .particle_system import (DriftSpec, SimulationPlan, pathwise_error, simulate, simulate_limit_sde)
from .scenarios import ScenarioSpec, get_scenario
from .stable_noise import GridField, StableNoiseConfig

log = logging.getLogger(__name__)

CONFIG_KEYS = ("scenario", "alpha", "theta", "m", "n_list", "replications", "dt", "dt_pde", "t_end",
               "snapshot_times", "grid_n", "domain_length", "seed")
OPTIONAL_KEYS = ("kernel_radius",)


@dataclass
class ExperimentConfig:
    scenario: str = "fractional_burgers"
    # a list of values is accepted by the cross-alpha experiment only
    alpha: float | list = 1.5
    theta: float = 0.25
    m: tuple = (1, 2)
    n_list: tuple = (256, 512, 1024, 2048, 4096, 8192, 16384)
    replications: int = 32
    dt: float = 1e-3
    dt_pde: float = 2.5e-4
    t_end: float = 0.5
    snapshot_times: tuple = (0.25, 0.5)
    grid_n: int = 1024
    domain_length: float = 20.0
    seed: int = 12345
    kernel_radius: float = 0.25
    dim: int = 1
    out_dir: str | None = None
    threads: int = 1

    def __post_init__(self):
        self.m = tuple(int(v) for v in np.atleast_1d(self.m))
        self.n_list = tuple(int(v) for v in self.n_list)
        self.snapshot_times = tuple(float(v) for v in np.atleast_1d(self.snapshot_times))
        if isinstance(self.alpha, (list, tuple)):
            self.alpha = [float(a) for a in self.alpha]
        else:
            self.alpha = float(self.alpha)

    def validate(self, allow_alpha_list: bool = False) -> None:
        get_scenario(self.scenario)
        alphas = self.alpha if isinstance(self.alpha, list) else [self.alpha]
        if isinstance(self.alpha, list) and not allow_alpha_list:
            raise ValidationError("a list of alphas is only accepted by the cross-alpha experiment")
        for a in alphas:
            StableNoiseConfig(a, self.dim)
        if not (0.0 < self.theta < 1.0 / (2 * self.dim)):
            raise ValidationError(f"theta must lie in (0, 1/(2d)), got {self.theta}")
        if not self.n_list or any(b <= a for a, b in zip(self.n_list, self.n_list[1:])) or self.n_list[0] < 1:
            raise ValidationError("n_list must be a strictly increasing list of positive integers")
        if self.replications < 1:
            raise ValidationError("replications must be >= 1")
        if not self.m or min(self.m) < 1:
            raise ValidationError("moment orders must be >= 1")
        if self.threads < 1:
            raise ValidationError("threads must be >= 1")
        if not self.kernel_radius > 0:
            raise ValidationError("kernel_radius must be positive")
        # grid/time compatibility is checked by the plan and solver constructors
        ratio = self.dt / self.dt_pde
        if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
            raise ValidationError("dt must be a positive integer multiple of dt_pde")
        for t in self.snapshot_times:
            if not (0.0 < t <= self.t_end + 1e-12):
                raise ValidationError(f"snapshot time {t} outside (0, t_end]")

    @classmethod
    def from_mapping(cls, data: dict, **overrides) -> "ExperimentConfig":
        unknown = set(data) - set(CONFIG_KEYS) - set(OPTIONAL_KEYS)
        if unknown:
            raise ValidationError(f"unknown config keys: {sorted(unknown)}")
        kw = dict(data)
        kw.update({k: v for k, v in overrides.items() if v is not None})
        try:
            return cls(**kw)
        except TypeError as exc:
            raise ValidationError(str(exc)) from None

    @classmethod
    def from_file(cls, path, **overrides) -> "ExperimentConfig":
        import yaml

        with open(path, encoding="utf-8") as fh:
            data = yaml.safe_load(fh) or {}
        if not isinstance(data, dict):
            raise ValidationError(f"{path}: expected a mapping of config keys")
        return cls.from_mapping(data, **overrides)

    def echo(self) -> dict:
        d = {k: getattr(self, k) for k in CONFIG_KEYS + OPTIONAL_KEYS}
        return json.loads(json.dumps(d))


def git_revision() -> str:
    try:
        out = subprocess.run(["git", "rev-parse", "HEAD"], capture_output=True, text=True, timeout=5,
                             cwd=Path(__file__).resolve().parent)
        return out.stdout.strip() or "unknown"
    except (OSError, subprocess.SubprocessError):
        return "unknown"


# ---------------------------------------------------------------------------
# shared machinery


@dataclass
class Context:
    config: ExperimentConfig
    scenario: ScenarioSpec
    alpha: float
    noise: StableNoiseConfig
    drift: DriftSpec
    rho0: Profile
    path: DensityPath

    @property
    def stride(self) -> int:
        return int(round(self.config.dt / self.config.dt_pde))


def boundary_mass(field: GridField) -> float:
    """Mass of ``field`` within ``L/4`` of the domain boundary (per axis union)."""
    L = field.domain_length
    near = np.zeros(field.shape, dtype=bool)
    for c in field.coords():
        near |= (c < L / 4) | (c >= 3 * L / 4)
    return float(np.sum(np.abs(field.values[near])) * field.cell_volume)


def build_context(config: ExperimentConfig, alpha: float) -> Context:
    sc = get_scenario(config.scenario)
    L = config.domain_length
    drift = sc.drift(L, config.dim)
    drift.spot_check(L, config.dim)
    rho0 = sc.rho0(L)
    noise = StableNoiseConfig(alpha, config.dim)
    fcfg = FpeConfig(noise, drift, L, config.grid_n, config.dt_pde, config.t_end)
    grid = fcfg.grid()
    path = solve_fpe(fcfg, rho0.density_grid(grid))
    bm = boundary_mass(path.field(len(path.times) - 1))
    if bm > 1e-8:
        log.info("reference density has mass %.2e within L/4 of the boundary (torus model)", bm)
    return Context(config, sc, alpha, noise, drift, rho0, path)


@dataclass
class JobResult:
    N: int
    rep: int
    density: dict = field(default_factory=dict)
    pathwise: float | None = None
    x1_final: np.ndarray | None = None
    seconds: float = 0.0
    mean_neighbors: float = 0.0


def mean_neighbors(ensemble, radius: float) -> float:
    """Average number of other particles within ``radius`` (torus metric)."""
    from scipy.spatial import cKDTree

    x = ensemble.positions
    tree = cKDTree(x, boxsize=ensemble.domain_length)
    pairs = tree.count_neighbors(tree, radius) - x.shape[0]
    return float(pairs) / x.shape[0]


def replication_key(N: int, rep: int) -> int:
    return (int(N) << 32) | int(rep)


def run_job(ctx: Context, N: int, rep: int, density: bool = True, pathwise: bool = False,
            weak: bool = False) -> JobResult:
    try:
        return _run_job(ctx, N, rep, density, pathwise, weak)
    except (ValidationError, NumericalAbort) as exc:
        where = f"[scenario={ctx.config.scenario} alpha={ctx.alpha:g} N={N} rep={rep} seed={ctx.config.seed}]"
        raise type(exc)(f"{exc} {where}") from exc


def _run_job(ctx: Context, N: int, rep: int, density: bool, pathwise: bool, weak: bool) -> JobResult:
    cfg = ctx.config
    start = time.perf_counter()
    kernel = scale_kernel(make_bump_kernel(cfg.kernel_radius, cfg.dim), N, cfg.theta)
    snaps = tuple(cfg.snapshot_times) if density else ()
    if weak:
        snaps = tuple(sorted(set(snaps) | {cfg.t_end}))
    plan = SimulationPlan(ctx.noise, ctx.drift, kernel, N, cfg.dt, cfg.t_end, cfg.domain_length, ctx.rho0,
                          seed=cfg.seed, replication=replication_key(N, rep),
                          record_particle1_noise=pathwise, snapshot_times=tuple(snaps))
    out = JobResult(N, rep)

    def on_snapshot(ens):
        if ens.time <= 0:
            return
        ref = ctx.path.at(ens.time)
        out.density[round(ens.time, 12)] = density_sup_error(ref, ens, kernel)

    res = simulate(plan, on_snapshot=on_snapshot if density else None)
    if pathwise:
        limit = simulate_limit_sde(ctx.path, ctx.drift, res.tape, res.initial.positions[0], cfg.domain_length, cfg.dt)
        out.pathwise = pathwise_error(res.particle1_path, limit, cfg.domain_length)
    final = res.snapshots[-1] if res.snapshots else None
    if final is not None:
        out.mean_neighbors = mean_neighbors(final, kernel.radius)
    if weak:
        if final is None or abs(final.time - cfg.t_end) > 1e-9:
            raise ValidationError("weak experiment needs the final snapshot")
        out.x1_final = final.positions[0].copy()
    out.seconds = time.perf_counter() - start
    return out


def run_jobs(ctx: Context, jobs, threads: int, **kinds) -> list[JobResult]:
    jobs = sorted(jobs)
    if threads <= 1:
        results = [run_job(ctx, N, rep, **kinds) for N, rep in jobs]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda j: run_job(ctx, j[0], j[1], **kinds), jobs))
    return sorted(results, key=lambda r: (r.N, r.rep))


def decreasing_within_se(values, ses) -> bool:
    """True when each value is below its predecessor up to one standard error."""
    v = np.asarray(values, dtype=float)
    s = np.asarray(ses, dtype=float)
    return bool(np.all(v[1:] < v[:-1] + np.maximum(s[1:], s[:-1])))


def nonincreasing_within_se(values, ses) -> bool:
    v = np.asarray(values, dtype=float)
    s = np.asarray(ses, dtype=float)
    return bool(np.all(v[1:] <= v[:-1] + np.maximum(s[1:], s[:-1])))


def _dump_json(path: Path, data) -> None:
    path.write_text(json.dumps(data, indent=2, sort_keys=True, default=_json_default) + "\n", encoding="utf-8")


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, RateFit):
        return o.to_dict()
    raise TypeError(type(o))


def _out_dir(config: ExperimentConfig, sub: str | None = None) -> Path | None:
    if config.out_dir is None:
        return None
    p = Path(config.out_dir) / sub if sub else Path(config.out_dir)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _timing(results: list[JobResult]) -> dict:
    by_n = {}
    for r in results:
        by_n.setdefault(r.N, []).append(r)
    return {str(n): {"mean_seconds": float(np.mean([r.seconds for r in v])),
                     "mean_neighbors": float(np.mean([r.mean_neighbors for r in v])),
                     "replications": len(v)} for n, v in sorted(by_n.items())}


# ---------------------------------------------------------------------------
# experiments


@dataclass
class ConvergenceResult:
    alpha: float
    records: list
    # (t, m) -> RateFit
    fits: dict
    # (N, t, m) -> (norm, bootstrap se)
    norms: dict
    summary: dict


@dataclass
class PathwiseResult:
    alpha: float
    records: list
    fits: dict
    norms: dict
    medians: dict
    summary: dict


def _density_records(ctx: Context, results) -> list[ErrorRecord]:
    cfg = ctx.config
    recs = []
    for r in results:
        for t, v in sorted(r.density.items()):
            recs.append(ErrorRecord(cfg.scenario, ctx.alpha, cfg.theta, ctx.scenario.beta, r.N, r.rep, t,
                                    "density_sup", v, cfg.seed))
    return recs


def _aggregate(config: ExperimentConfig, beta: float, recs: list[ErrorRecord], times) -> tuple[dict, dict]:
    norms, fits = {}, {}
    for t in times:
        for m in config.m:
            vals = []
            for N in config.n_list:
                v = [r.value for r in recs if r.N == N and abs(r.t - t) < 1e-12]
                norms[(N, t, m)] = lm_omega_norm(v, m, seed=config.seed % (2**32))
                vals.append(norms[(N, t, m)][0])
            if len(config.n_list) >= 3 and min(vals) > 0:
                fits[(t, m)] = fit_rate(config.n_list, vals, config.theta, beta, config.dim)
    return norms, fits


def _norms_table(config, norms, times):
    return [{"N": N, "t": t, "m": m, "norm": norms[(N, t, m)][0], "bootstrap_se": norms[(N, t, m)][1]}
            for t in times for m in config.m for N in config.n_list]


def _fits_table(fits):
    return [dict(t=t, m=m, **f.to_dict()) for (t, m), f in sorted(fits.items())]


def _provenance(config: ExperimentConfig, ctx: Context) -> dict:
    return {"git": git_revision(), "config": config.echo(), "alpha": ctx.alpha,
            "scenario": {"name": ctx.scenario.name, "beta": ctx.scenario.beta, "q": ctx.scenario.q,
                         "branch": ctx.scenario.branch, "notes": ctx.scenario.notes,
                         "rho0": ctx.rho0.describe()},
            "kernel_radius": config.kernel_radius,
            "reference_boundary_mass": boundary_mass(ctx.path.field(len(ctx.path.times) - 1))}


def run_experiment(config: ExperimentConfig, alpha: float | None = None, density: bool = True,
                   pathwise: bool = False, ctx: Context | None = None):
    """Run the replications once and return density and/or pathwise results."""
    config.validate()
    alpha = config.alpha if alpha is None else alpha
    ctx = ctx or build_context(config, alpha)
    if pathwise:
        _check_pathwise_hypothesis(ctx)
    jobs = [(N, rep) for N in config.n_list for rep in range(config.replications)]
    results = run_jobs(ctx, jobs, config.threads, density=density, pathwise=pathwise)
    conv = _convergence_from(ctx, results) if density else None
    pw = _pathwise_from(ctx, results) if pathwise else None
    return conv, pw, results


def _convergence_from(ctx: Context, results) -> ConvergenceResult:
    config = ctx.config
    recs = _density_records(ctx, results)
    times = sorted({r.t for r in recs})
    norms, fits = _aggregate(config, ctx.scenario.beta, recs, times)
    summary = _provenance(config, ctx)
    summary["theoretical_slope"] = theoretical_slope(config.theta, ctx.scenario.beta, config.dim)
    summary["norms"] = _norms_table(config, norms, times)
    summary["fits"] = _fits_table(fits)
    summary["decreasing_within_se"] = {
        f"t={t},m={m}": decreasing_within_se([norms[(N, t, m)][0] for N in config.n_list],
                                             [norms[(N, t, m)][1] for N in config.n_list])
        for t in times for m in config.m}
    return ConvergenceResult(ctx.alpha, recs, fits, norms, summary)


def _check_pathwise_hypothesis(ctx: Context) -> None:
    beta = ctx.scenario.beta
    if not beta > 1.0 - ctx.alpha / 2.0:
        raise ValidationError(f"pathwise experiment needs beta > 1 - alpha/2 ({beta} vs {1 - ctx.alpha / 2})")
    if ctx.rho0.holder_index < beta:
        raise ValidationError(f"rho0 is only {ctx.rho0.holder_index}-Hölder, scenario declares beta={beta}")


def _median_se(v: np.ndarray, n_boot: int = 1000, seed: int = 0) -> float:
    if v.size < 2:
        return 0.0
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, v.size, size=(n_boot, v.size))
    return float(np.std(np.median(v[idx], axis=1), ddof=1))


def _pathwise_from(ctx: Context, results) -> PathwiseResult:
    config = ctx.config
    recs = [ErrorRecord(config.scenario, ctx.alpha, config.theta, ctx.scenario.beta, r.N, r.rep, config.t_end,
                        "pathwise", r.pathwise, config.seed) for r in results]
    norms, fits = {}, {}
    medians = {}
    for N in config.n_list:
        v = np.array([r.value for r in recs if r.N == N])
        medians[N] = (float(np.median(v)), _median_se(v, seed=config.seed % (2**32)))
        for m in config.m:
            norms[(N, m)] = lm_omega_norm(v, m, seed=config.seed % (2**32))
    for m in config.m:
        vals = [norms[(N, m)][0] for N in config.n_list]
        if len(config.n_list) >= 3 and min(vals) > 0:
            fits[m] = fit_rate(config.n_list, vals, config.theta, ctx.scenario.beta, config.dim)
    summary = _provenance(config, ctx)
    summary["norms"] = [{"N": N, "m": m, "norm": norms[(N, m)][0], "bootstrap_se": norms[(N, m)][1]}
                        for m in config.m for N in config.n_list]
    summary["medians"] = [{"N": N, "median": medians[N][0], "bootstrap_se": medians[N][1]} for N in config.n_list]
    summary["fits"] = [dict(m=m, **f.to_dict()) for m, f in sorted(fits.items())]
    summary["median_nonincreasing_within_se"] = nonincreasing_within_se(
        [medians[N][0] for N in config.n_list], [medians[N][1] for N in config.n_list])
    summary["lm_nonincreasing_within_se"] = {
        f"m={m}": nonincreasing_within_se([norms[(N, m)][0] for N in config.n_list],
                                          [norms[(N, m)][1] for N in config.n_list]) for m in config.m}
    return PathwiseResult(ctx.alpha, recs, fits, norms, medians, summary)


def run_convergence(config: ExperimentConfig, ctx: Context | None = None) -> ConvergenceResult:
    """Density error ``||rho_t - rho^N_t||_{L^m(Omega; L^inf)}`` against N, with rate fits."""
    conv, _, results = run_experiment(config, density=True, pathwise=False, ctx=ctx)
    out = _out_dir(config)
    if out is not None:
        write_records(out / "density_sup.csv", conv.records)
        _dump_json(out / "summary_convergence.json", conv.summary)
        _dump_json(out / "timing_convergence.json", _timing(results))
    return conv


def run_pathwise(config: ExperimentConfig, ctx: Context | None = None) -> PathwiseResult:
    """``sup_t |X^{N,1}_t - X_t|`` for the particle and limit paths driven by the same noise."""
    _, pw, results = run_experiment(config, density=False, pathwise=True, ctx=ctx)
    out = _out_dir(config)
    if out is not None:
        write_records(out / "pathwise.csv", pw.records)
        _dump_json(out / "summary_pathwise.json", pw.summary)
        _dump_json(out / "timing_pathwise.json", _timing(results))
    return pw


@dataclass
class WeakResult:
    alpha: float
    records: list
    estimates: dict
    summary: dict


def run_weak(config: ExperimentConfig, ctx: Context | None = None) -> WeakResult:
    """Total-variation distance between the law of ``X^{N,1}_T`` and ``rho_T``.

    One sample of particle 1 is taken per replication, so ``replications``
    is the sample size of every TV estimate.
    """
    config.validate()
    if config.dim != 1:
        raise ValidationError("the weak experiment is one-dimensional")
    if config.replications < 1000:
        raise ValidationError(f"weak experiment needs >= 1000 replications, got {config.replications}")
    ctx = ctx or build_context(config, config.alpha)
    cfg = replace(config, snapshot_times=(config.t_end,))
    ctx = replace(ctx, config=cfg)
    jobs = [(N, rep) for N in config.n_list for rep in range(config.replications)]
    results = run_jobs(ctx, jobs, config.threads, density=False, weak=True)
    ref = ctx.path.at(config.t_end)
    estimates: dict[int, TVEstimate] = {}
    recs = []
    for N in config.n_list:
        x = np.array([r.x1_final[0] for r in results if r.N == N])
        est = tv_error(x, ref, seed=config.seed % (2**32))
        estimates[N] = est
        recs.append(ErrorRecord(config.scenario, ctx.alpha, config.theta, ctx.scenario.beta, N, -1,
                                config.t_end, "tv", est.value, config.seed))
    summary = _provenance(config, ctx)
    summary["estimates"] = [{"N": N, "value": e.value, "raw": e.raw, "null_floor": e.null_floor,
                             "bootstrap_se": e.bootstrap_se, "band": list(e.band), "n_samples": e.n_samples}
                            for N, e in estimates.items()]
    first, last = estimates[config.n_list[0]], estimates[config.n_list[-1]]
    summary["trend"] = {"drop": first.value - last.value,
                        "band_width": max(first.band_width, last.band_width),
                        "decrease_exceeds_band": (first.value - last.value) > max(first.band_width, last.band_width)}
    out = _out_dir(config)
    if out is not None:
        write_records(out / "tv.csv", recs)
        _dump_json(out / "summary_weak.json", summary)
        _dump_json(out / "timing_weak.json", _timing(results))
    return WeakResult(ctx.alpha, recs, estimates, summary)


@dataclass
class CrossAlphaResult:
    results: dict
    slopes: dict
    max_slope_difference: float
    summary: dict


def run_cross_alpha(config: ExperimentConfig, t: float | None = None, m: int | None = None) -> CrossAlphaResult:
    """Run the density experiment for every alpha with shared seeds and compare fitted slopes."""
    alphas = config.alpha if isinstance(config.alpha, list) else [config.alpha]
    if len(alphas) < 2:
        raise ValidationError("cross-alpha comparison needs at least two alphas")
    if 2.0 not in alphas:
        raise ValidationError("cross-alpha comparison must include alpha = 2")
    config.validate(allow_alpha_list=True)
    t = config.t_end if t is None else t
    m = max(config.m) if m is None else m
    results, slopes = {}, {}
    for a in alphas:
        sub = replace(config, alpha=a,
                      out_dir=None if config.out_dir is None else str(Path(config.out_dir) / f"alpha_{a:g}"))
        res = run_convergence(sub)
        results[a] = res
        slopes[a] = res.fits[(t, m)].slope
    diff = max(slopes.values()) - min(slopes.values())
    summary = {"git": git_revision(), "config": config.echo(), "t": t, "m": m,
               "slopes": {f"{a:g}": s for a, s in slopes.items()}, "max_slope_difference": diff}
    out = _out_dir(config)
    if out is not None:
        _dump_json(out / "summary_cross_alpha.json", summary)
    return CrossAlphaResult(results, slopes, diff, summary)


def brute_force_kde(positions, queries, kernel, domain_length: float) -> np.ndarray:
    """Direct ``O(N Q)`` minimal-image KDE, chunked over queries."""
    x = np.asarray(positions, dtype=float).reshape(len(positions), -1)
    q = np.asarray(queries, dtype=float).reshape(len(queries), -1)
    out = np.empty(q.shape[0])
    step = max(1, 2**22 // max(1, x.shape[0]))
    for s in range(0, q.shape[0], step):
        d = q[s:s + step, None, :] - x[None, :, :]
        d -= domain_length * np.round(d / domain_length)
        out[s:s + step] = kernel(d).sum(axis=1)
    return out / x.shape[0]


def kernel_check(config: ExperimentConfig, n_samples: int = 200_000) -> dict:
    """Quick self-test of the noise, heat-kernel and KDE building blocks for ``config``.

    Returns a report whose ``passed`` flag is the conjunction of all checks.
    """
    from .mollifier import ParticleEnsemble, kde_at_particles
    from .stable_noise import heat_kernel_grid, sample_stable_increment, empirical_char_function

    alphas = config.alpha if isinstance(config.alpha, list) else [config.alpha]
    checks = {}

    def record(name, value, tol):
        checks[name] = {"value": float(value), "tol": float(tol), "passed": bool(value <= tol)}

    rng = np.random.default_rng(config.seed % (2**32))
    for a in alphas:
        noise = StableNoiseConfig(a, config.dim)
        x = sample_stable_increment(noise, 1.0, rng, size=n_samples)
        err = 0.0
        for s in (0.25, 0.5, 1.0, 2.0):
            xi = np.zeros(config.dim)
            xi[0] = s
            err = max(err, abs(empirical_char_function(x, xi) - math.exp(-s**a)))
        # ~5 standard deviations of a mean of unit-modulus terms
        record(f"char_function_alpha={a:g}", err, 5.0 / math.sqrt(n_samples))

        grid = GridField(config.domain_length, config.grid_n, config.dim)
        t1, t2 = 0.5 * config.t_end, config.t_end
        q1, q2 = heat_kernel_grid(noise, t1, grid), heat_kernel_grid(noise, t2, grid)
        record(f"heat_kernel_mass_alpha={a:g}", abs(q2.mass() - 1.0), 1e-10)
        conv = np.fft.ifftn(np.fft.fftn(q1.values) * np.fft.fftn(q1.values)).real * grid.cell_volume
        record(f"chapman_kolmogorov_alpha={a:g}", float(np.max(np.abs(conv - q2.values))), 1e-12)

    base = make_bump_kernel(config.kernel_radius, config.dim)
    N = min(config.n_list[0], 2048)
    kern = scale_kernel(base, N, config.theta)
    pos = rng.random((N, config.dim)) * config.domain_length
    ens = ParticleEnsemble(pos, config.domain_length)
    fast = kde_at_particles(ens, kern)
    slow = brute_force_kde(pos, pos, kern, config.domain_length)
    record("kde_vs_brute_force", float(np.max(np.abs(fast - slow))), 1e-12 * max(1.0, float(np.max(slow))))
    n_fine = 1 << int(math.ceil(math.log2(max(config.grid_n, 128 * config.domain_length / kern.radius))))
    grid = GridField(config.domain_length, n_fine, 1)
    xs = grid.axis() - config.domain_length / 2
    if config.dim == 1:
        record("kernel_mass", abs(float(np.sum(kern(xs))) * grid.spacing - 1.0), 1e-8)
    return {"config": config.echo(), "checks": checks, "passed": all(c["passed"] for c in checks.values())}


def run_kernel_check(config: ExperimentConfig) -> dict:
    rep = kernel_check(config)
    out = _out_dir(config)
    if out is not None:
        _dump_json(out / "kernel_check.json", rep)
    return rep
