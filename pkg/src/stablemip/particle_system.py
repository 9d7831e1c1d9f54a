"""Euler scheme for the moderately interacting particle system and the coupled limit SDE.

Each step first evaluates the mollified empirical density at every particle
from the time-``t`` snapshot, then moves all particles at once::

    X_i <- wrap(X_i + b(t, X_i, u_i) dt + dL_i)

Particle ``i`` draws its noise from stream ``streams[i]`` of a counter-based
family, so permuting the stream assignment permutes the trajectories.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import rng as crng
from .densities import Profile
from .errors import NumericalAbort, ValidationError
from .mollifier import MollifierKernel, ParticleEnsemble, kde_at_particles, scale_kernel
from .stable_noise import StableNoiseConfig, increments_from_uniforms, uniforms_per_increment

log = logging.getLogger(__name__)


@dataclass
class DriftSpec:
    """Bounded drift ``b(t, x, u)`` with ``|b| <= kappa`` and
    ``|b(t,x,u) - b(t,y,v)| <= kappa (|x-y|^beta + |u-v|)``.

    ``eval`` is vectorized: ``x`` is ``(n, d)``, ``u`` is ``(n,)``, result ``(n, d)``.
    """

    eval: Callable[[float, np.ndarray, np.ndarray], np.ndarray]
    kappa: float
    beta: float
    lip_u: float
    name: str = "drift"
    # True when b does not depend on u; the pathwise coupling is then exact
    density_free: bool = False
    # True when b is identically zero
    is_zero: bool = False

    def __call__(self, t, x, u):
        return self.eval(t, x, u)

    def spot_check(self, domain_length: float, dim: int = 1, n: int = 10_000, u_max: float = 5.0,
                   seed: int = 0) -> None:
        """Randomized check of the bound and the Hölder/Lipschitz condition; raises on violation."""
        rng = np.random.default_rng(seed)
        t = rng.uniform(0.0, 1.0)
        x = rng.uniform(0.0, domain_length, (n, dim))
        # mix far pairs and near pairs, the latter probe the Hölder exponent
        y = x + rng.normal(size=(n, dim)) * np.where(rng.random((n, 1)) < 0.5, 1e-3, domain_length / 4)
        u = rng.uniform(0.0, u_max, n)
        v = np.where(rng.random(n) < 0.5, u + rng.normal(0.0, 1e-3, n), rng.uniform(0.0, u_max, n))
        v = np.abs(v)
        bx = np.asarray(self.eval(t, x, u), dtype=float)
        by = np.asarray(self.eval(t, y, v), dtype=float)
        if bx.shape != (n, dim):
            raise ValidationError(f"drift {self.name} returned shape {bx.shape}, expected {(n, dim)}")
        slack = 1e-12
        if np.max(np.linalg.norm(bx, axis=1)) > self.kappa * (1 + slack):
            raise ValidationError(f"drift {self.name} exceeds its bound kappa={self.kappa}")
        lhs = np.linalg.norm(bx - by, axis=1)
        rhs = self.kappa * (np.linalg.norm(x - y, axis=1) ** self.beta + np.abs(u - v))
        if np.any(lhs > rhs * (1 + slack) + slack):
            raise ValidationError(f"drift {self.name} violates the Hölder/Lipschitz condition")


def zero_drift(dim: int = 1) -> DriftSpec:
    return DriftSpec(lambda t, x, u: np.zeros_like(x), kappa=1.0, beta=0.99, lip_u=0.0,
                     name="zero", density_free=True, is_zero=True)


def constant_drift(c, dim: int = 1) -> DriftSpec:
    c = np.broadcast_to(np.asarray(c, dtype=float), (dim,)).copy()
    return DriftSpec(lambda t, x, u: np.broadcast_to(c, x.shape).copy(),
                     kappa=max(float(np.linalg.norm(c)), 1e-300), beta=0.99, lip_u=0.0,
                     name="constant", density_free=True)


@dataclass
class NoiseTape:
    """Noise increments of one particle, one row per step."""

    dt: float
    alpha: float
    increments: list = field(default_factory=list)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.increments, dtype=float).reshape(len(self.increments), -1)

    def __len__(self):
        return len(self.increments)


@dataclass
class SimulationPlan:
    noise: StableNoiseConfig
    drift: DriftSpec
    kernel: MollifierKernel
    n_particles: int
    dt: float
    t_end: float
    domain_length: float
    rho0: Profile
    seed: int = 0
    replication: int = 0
    record_particle1_noise: bool = False
    snapshot_times: tuple = ()
    # stream id per particle; None means particle i uses stream i
    streams: np.ndarray | None = None

    def __post_init__(self):
        if not self.dt > 0:
            raise ValidationError("dt must be positive")
        if self.t_end < 0:
            raise ValidationError("t_end must be non-negative")
        if self.n_particles < 1:
            raise ValidationError("n_particles must be >= 1")
        steps = self.t_end / self.dt
        if abs(steps - round(steps)) > 1e-9 * max(1.0, steps):
            raise ValidationError(f"t_end={self.t_end} is not a multiple of dt={self.dt}")
        for t in self.snapshot_times:
            k = t / self.dt
            if abs(k - round(k)) > 1e-9 * max(1.0, k) or t > self.t_end + 1e-12 or t < 0:
                raise ValidationError(f"snapshot time {t} is not on the step grid")
        if self.kernel.n_particles != self.n_particles:
            self.kernel = scale_kernel(self.kernel, self.n_particles, self.kernel.theta) \
                if self.kernel.theta > 0 else self.kernel
        if self.streams is None:
            self.streams = np.arange(self.n_particles, dtype=np.uint64)
        else:
            self.streams = np.asarray(self.streams, dtype=np.uint64)
            if self.streams.shape != (self.n_particles,):
                raise ValidationError("one stream id per particle is required")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))

    @property
    def snapshot_steps(self) -> list[int]:
        return sorted({int(round(t / self.dt)) for t in self.snapshot_times})

    @property
    def family(self) -> crng.StreamFamily:
        return crng.StreamFamily(self.seed, self.replication)


def wrap(x: np.ndarray, domain_length: float) -> np.ndarray:
    y = np.mod(x, domain_length)
    # np.mod can round tiny negatives up to exactly L
    y[y >= domain_length] = 0.0
    return y


def init_particles(rho0: Profile, n: int, rng, dim: int = 1, streams=None) -> ParticleEnsemble:
    """Draw ``n`` i.i.d. positions from ``rho0`` (a per-axis product density).

    ``rng`` is a :class:`numpy.random.Generator` or a
    :class:`~stablemip.rng.StreamFamily`; with the latter, particle ``i`` uses
    stream ``streams[i]``.
    """
    if n < 1:
        raise ValidationError("need at least one particle")
    rho0.check_normalized()
    if isinstance(rng, crng.StreamFamily):
        streams = np.arange(n, dtype=np.uint64) if streams is None else streams
        u = rng.uniforms(crng.TAG_INITIAL, 0, streams, dim)
    else:
        u = rng.random((n, dim))
        u = np.where(u == 0.0, 0.5 / 2**53, u)
    return ParticleEnsemble(wrap(rho0.sample(u), rho0.domain_length), rho0.domain_length, 0.0)


def draw_increments(noise: StableNoiseConfig, dt: float, family: crng.StreamFamily, step: int, streams) -> np.ndarray:
    m = uniforms_per_increment(noise.alpha, noise.dim)
    u = family.uniforms(crng.TAG_DYNAMICS, step, streams, m)
    return increments_from_uniforms(float(noise.alpha), int(noise.dim), float(dt), u)


def step_euler(ensemble: ParticleEnsemble, plan: SimulationPlan, step_index: int,
               tape: NoiseTape | None = None, log_inputs: dict | None = None) -> ParticleEnsemble:
    """Advance all particles by one synchronous Euler step."""
    kernel = plan.kernel
    t = step_index * plan.dt
    x = ensemble.positions
    if plan.drift.is_zero:
        drift = np.zeros_like(x)
        u = None
    else:
        u = kde_at_particles(ensemble, kernel)
        drift = np.asarray(plan.drift(t, x, u), dtype=float)
    disp = drift * plan.dt
    if not np.all(np.linalg.norm(disp, axis=1) <= plan.drift.kappa * plan.dt * (1 + 1e-12)):
        raise NumericalAbort(f"drift displacement exceeds kappa*dt at step {step_index}")
    inc = draw_increments(plan.noise, plan.dt, plan.family, step_index, plan.streams)
    new = wrap(x + disp + inc, plan.domain_length)
    if not np.all(np.isfinite(new)):
        raise NumericalAbort(f"non-finite particle position at step {step_index}")
    if tape is not None:
        tape.increments.append(inc[0].copy())
    if log_inputs is not None:
        log_inputs["u"] = u
        log_inputs["drift"] = drift
    return ParticleEnsemble(new, plan.domain_length, (step_index + 1) * plan.dt)


@dataclass
class SimulationResult:
    snapshots: list
    tape: NoiseTape | None = None
    # particle-1 position after every step (including t=0), when a tape is recorded
    particle1_path: np.ndarray | None = None
    initial: ParticleEnsemble | None = None


def simulate(plan: SimulationPlan, on_snapshot=None) -> SimulationResult:
    """Run the particle system from ``t = 0`` to ``t_end``.

    Snapshots are taken at ``plan.snapshot_times`` (the initial ensemble is
    always included first).  ``on_snapshot(ensemble)`` is called for each
    snapshot, if given.
    """
    ens = init_particles(plan.rho0, plan.n_particles, plan.family, plan.noise.dim, plan.streams)
    initial = ens
    wanted = set(plan.snapshot_steps)
    snaps = [ens] if 0 in wanted or not wanted else []
    if on_snapshot and snaps:
        on_snapshot(ens)
    tape = NoiseTape(plan.dt, plan.noise.alpha) if plan.record_particle1_noise else None
    path = [ens.positions[0].copy()] if tape is not None else None
    for k in range(plan.n_steps):
        ens = step_euler(ens, plan, k, tape)
        if path is not None:
            path.append(ens.positions[0].copy())
        if k + 1 in wanted:
            snaps.append(ens)
            if on_snapshot:
                on_snapshot(ens)
    return SimulationResult(snaps, tape, np.asarray(path) if path is not None else None, initial)


def simulate_limit_sde(rho_path, drift: DriftSpec, tape: NoiseTape, x0, domain_length: float,
                       dt: float | None = None) -> np.ndarray:
    """Euler path of the limit SDE driven by a recorded noise tape.

    ``rho_path`` is a :class:`~stablemip.fpe_solver.DensityPath`; the density is
    read off by :func:`~stablemip.fpe_solver.interpolate_density`.
    """
    from .fpe_solver import interpolate_density

    if tape is None:
        raise ValidationError("a noise tape is required for the coupled limit path")
    if dt is not None and abs(dt - tape.dt) > 1e-15:
        raise ValidationError(f"tape dt {tape.dt} differs from plan dt {dt}")
    inc = tape.as_array()
    x = np.atleast_1d(np.asarray(x0, dtype=float)).copy()[None, :]
    if len(tape) and rho_path is not None and rho_path.times[-1] < len(tape) * tape.dt - 1e-9:
        raise ValidationError("density path does not cover the tape horizon")
    out = [x[0].copy()]
    for k in range(len(tape)):
        t = k * tape.dt
        if drift.is_zero:
            b = np.zeros_like(x)
        else:
            u = np.zeros(1) if drift.density_free else interpolate_density(rho_path, t, x)
            b = np.asarray(drift(t, x, np.atleast_1d(u)), dtype=float)
        x = wrap(x + b * tape.dt + inc[k][None, :], domain_length)
        out.append(x[0].copy())
    return np.asarray(out)


def torus_distance(a, b, domain_length: float) -> np.ndarray:
    d = np.abs(np.asarray(a, dtype=float) - np.asarray(b, dtype=float))
    d = np.minimum(d, domain_length - d)
    return np.sqrt(np.sum(d * d, axis=-1)) if d.ndim > 1 else d


def pathwise_error(path_a, path_b, domain_length: float) -> float:
    """``max_k |a_k - b_k|`` in the torus metric."""
    a = np.asarray(path_a, dtype=float)
    b = np.asarray(path_b, dtype=float)
    if a.shape != b.shape:
        raise ValidationError(f"path shapes differ: {a.shape} vs {b.shape}")
    if a.ndim == 1:
        a, b = a[:, None], b[:, None]
    return float(np.max(torus_distance(a, b, domain_length)))


def write_snapshot(path, ensemble: ParticleEnsemble, *, alpha: float, theta: float, seed: int) -> None:
    """CSV dump: one ``# key=value`` header line, then one row per particle."""
    header = (f"# t={ensemble.time!r} N={ensemble.n_particles} d={ensemble.dim} "
              f"L={ensemble.domain_length!r} alpha={alpha!r} theta={theta!r} seed={seed}")
    cols = ",".join(f"x{k}" for k in range(ensemble.dim))
    np.savetxt(path, ensemble.positions, delimiter=",", header=header + "\n" + cols, comments="", fmt="%.17g")


def read_snapshot(path) -> tuple[dict, ParticleEnsemble]:
    with open(path) as fh:
        first = fh.readline().lstrip("#").split()
    meta = dict(item.split("=", 1) for item in first)
    pos = np.loadtxt(path, delimiter=",", skiprows=2, ndmin=2)
    info = {"t": float(meta["t"]), "N": int(meta["N"]), "d": int(meta["d"]), "L": float(meta["L"]),
            "alpha": float(meta["alpha"]), "theta": float(meta["theta"]), "seed": int(meta["seed"])}
    if pos.shape != (info["N"], info["d"]):
        raise ValidationError("snapshot body does not match its header")
    return info, ParticleEnsemble(pos, info["L"], info["t"])
