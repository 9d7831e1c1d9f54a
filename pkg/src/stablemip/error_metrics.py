"""Error functionals for particle-vs-PDE comparisons and log-log rate fits."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import stats

from .errors import ValidationError
from .fpe_solver import interpolate_grid
from .mollifier import CellList, MollifierKernel, ParticleEnsemble, kde_at_points
from .stable_noise import GridField

ERROR_KINDS = ("density_sup", "tv", "pathwise")
CSV_COLUMNS = ("scenario", "alpha", "theta", "beta", "N", "rep", "t", "kind", "value", "seed")


@dataclass(frozen=True)
class ErrorRecord:
    scenario: str
    alpha: float
    theta: float
    beta: float
    N: int
    rep: int
    t: float
    kind: str
    value: float
    seed: int

    def __post_init__(self):
        if self.kind not in ERROR_KINDS:
            raise ValidationError(f"unknown error kind {self.kind!r}")
        if not (math.isfinite(self.value) and self.value >= 0):
            raise ValidationError(f"error values must be finite and non-negative, got {self.value}")

    @property
    def sort_key(self):
        return (self.kind, self.scenario, self.alpha, self.N, self.t, self.rep)


def format_records(records) -> str:
    """CSV text with the fixed column order; floats in shortest round-trip form."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in sorted(records, key=lambda r: r.sort_key):
        w.writerow([r.scenario, repr(float(r.alpha)), repr(float(r.theta)), repr(float(r.beta)), r.N, r.rep,
                    repr(float(r.t)), r.kind, repr(float(r.value)), r.seed])
    return buf.getvalue()


def write_records(path, records) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(format_records(records))


def read_records(path) -> list[ErrorRecord]:
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [ErrorRecord(r["scenario"], float(r["alpha"]), float(r["theta"]), float(r["beta"]), int(r["N"]),
                        int(r["rep"]), float(r["t"]), r["kind"], float(r["value"]), int(r["seed"])) for r in rows]


# ---------------------------------------------------------------------------


def _query_set(grid: GridField, ensemble: ParticleEnsemble, refine: bool = True) -> np.ndarray:
    nodes = grid.nodes()
    parts = [nodes]
    if refine:
        parts.append(nodes + 0.5 * grid.spacing)
    parts.append(ensemble.positions)
    return np.mod(np.concatenate(parts, axis=0), grid.domain_length)


def density_sup_error(rho_ref: GridField, ensemble: ParticleEnsemble, kernel: MollifierKernel) -> float:
    """Max of ``|rho_ref - rho^N|`` over grid nodes, half-cell midpoints and particle positions."""
    if abs(rho_ref.domain_length - ensemble.domain_length) > 1e-12 or rho_ref.dim != ensemble.dim:
        raise ValidationError("reference field and ensemble live on different domains")
    q = _query_set(rho_ref, ensemble)
    n_nodes = rho_ref.values.size
    ref = np.empty(q.shape[0])
    ref[:n_nodes] = rho_ref.values.ravel()
    ref[n_nodes:] = interpolate_grid(rho_ref.values, rho_ref.domain_length, q[n_nodes:])
    cells = CellList(ensemble.positions, ensemble.domain_length, kernel.radius)
    est = kde_at_points(ensemble, kernel, q, cells=cells)
    return float(np.max(np.abs(ref - est)))


def lm_omega_norm(values, m: float, n_boot: int = 1000, seed: int = 0) -> tuple[float, float]:
    """``(mean v^m)^(1/m)`` and its bootstrap standard error."""
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise ValidationError("no replications to aggregate")
    if m < 1:
        raise ValidationError("moment order must be >= 1")
    # scale by the largest value so that v**m neither underflows nor overflows
    scale = float(np.max(np.abs(v)))
    if scale == 0.0 or not math.isfinite(scale):
        scale = 1.0
    w = v / scale
    norm = float(scale * np.mean(w**m) ** (1.0 / m))
    if v.size == 1:
        return norm, 0.0
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, v.size, size=(n_boot, v.size))
    boot = scale * np.mean(w[idx] ** m, axis=1) ** (1.0 / m)
    return norm, float(np.std(boot, ddof=1))


# ---------------------------------------------------------------------------
# total variation


def _bin_probs_ref(rho_ref: GridField, factor: float) -> np.ndarray:
    """Reference mass per bin for bins of width ``factor * h`` centred on refined nodes (1-D)."""
    v = rho_ref.values
    n = v.size
    h = rho_ref.spacing
    if factor == 1.0:
        p = v * h
    elif factor == 2.0:
        # bin j covers nodes 2j and 2j+1 (centre at node 2j + 1/2)
        p = (v[0::2] + v[1::2]) * h
    elif factor == 0.5:
        mids = interpolate_grid(v, rho_ref.domain_length, ((np.arange(n) + 0.5) * h)[:, None])
        fine = np.empty(2 * n)
        fine[0::2] = v
        fine[1::2] = mids
        p = fine * (0.5 * h)
    else:
        raise ValidationError("bin width factor must be 0.5, 1 or 2")
    p = np.clip(p, 0.0, None)
    return p / p.sum()


def _bin_counts(samples: np.ndarray, L: float, n: int, factor: float) -> np.ndarray:
    h = L / n
    width = factor * h
    nb = int(round(L / width))
    # bins are centred on (refined) nodes: bin j = [ (j - 1/2) w, (j + 1/2) w ) for factor <= 1
    offset = 0.5 * width if factor <= 1.0 else 0.5 * h
    idx = np.floor(np.mod(samples + offset, L) / width).astype(np.int64) % nb
    return np.bincount(idx, minlength=nb)


def _null_tv(p: np.ndarray, n: int) -> float:
    """Expected raw TV of an ``n``-sample histogram drawn from ``p`` itself (exact binomial MAD)."""
    m = np.floor(n * p).astype(np.int64) + 1
    mad = 2.0 * m * (1.0 - p) * stats.binom.pmf(m, n, p) / n
    return 0.5 * float(np.sum(mad))


def _tv_raw(counts: np.ndarray, p: np.ndarray) -> float:
    return 0.5 * float(np.sum(np.abs(counts / counts.sum() - p)))


def _debias(raw: float, null: float) -> float:
    # maps the sampling floor to 0 while keeping 1 fixed
    if null >= 1.0:
        return 0.0
    return float(min(1.0, max(0.0, (raw - null) / (1.0 - null))))


@dataclass
class TVEstimate:
    value: float
    raw: float
    null_floor: float
    bootstrap_se: float
    band: tuple
    n_samples: int

    @property
    def band_width(self) -> float:
        return self.band[1] - self.band[0]


MIN_TV_SAMPLES = 1000


def tv_error(samples, rho_ref: GridField, n_boot: int = 200, seed: int = 0,
             min_samples: int = MIN_TV_SAMPLES) -> TVEstimate:
    """Histogram estimate of the total-variation distance between a sample and ``rho_ref`` (1-D).

    Bins have the reference grid spacing.  The raw binned distance carries a
    positive sampling floor of order ``(bins / n)^(1/2)``; the reported value
    subtracts the exact expected floor under the reference law and rescales
    so that disjoint laws still give 1.  The band holds the estimates at half
    and double bin width.
    """
    x = np.asarray(samples, dtype=float).reshape(-1)
    if rho_ref.dim != 1:
        raise ValidationError("tv_error supports one-dimensional references")
    if x.size < min_samples:
        raise ValidationError(f"tv_error needs at least {min_samples} samples, got {x.size}")
    L, n = rho_ref.domain_length, rho_ref.points_per_axis
    ests = {}
    for factor in (1.0, 0.5, 2.0):
        p = _bin_probs_ref(rho_ref, factor)
        raw = _tv_raw(_bin_counts(x, L, n, factor), p)
        null = _null_tv(p, x.size)
        ests[factor] = (_debias(raw, null), raw, null)
    value, raw, null = ests[1.0]
    p = _bin_probs_ref(rho_ref, 1.0)
    rng = np.random.default_rng(seed)
    boot = np.empty(n_boot)
    for b in range(n_boot):
        xb = x[rng.integers(0, x.size, x.size)]
        boot[b] = _debias(_tv_raw(_bin_counts(xb, L, n, 1.0), p), null)
    se = float(np.std(boot, ddof=1))
    band_vals = [ests[f][0] for f in (0.5, 1.0, 2.0)]
    return TVEstimate(value, raw, null, se, (min(band_vals), max(band_vals)), int(x.size))


# ---------------------------------------------------------------------------


@dataclass
class RateFit:
    slope: float
    intercept: float
    r_squared: float
    n_points: int
    theoretical_slope: float
    slope_stderr: float = float("nan")

    def to_dict(self) -> dict:
        return asdict(self)


def theoretical_slope(theta: float, beta: float, dim: int = 1) -> float:
    return -min(theta * beta, 0.5 - theta * dim)


def fit_rate(ns, errors, theta: float = float("nan"), beta: float = float("nan"), dim: int = 1) -> RateFit:
    """Least-squares fit of ``log(error)`` against ``log(N)``."""
    ns = np.asarray(ns, dtype=float)
    e = np.asarray(errors, dtype=float)
    if ns.shape != e.shape:
        raise ValidationError("N list and error list differ in length")
    if np.unique(ns).size < 3:
        raise ValidationError("a rate fit needs at least three distinct N")
    if np.any(e <= 0) or not np.all(np.isfinite(e)):
        raise ValidationError("errors must be positive and finite for a log-log fit")
    res = stats.linregress(np.log(ns), np.log(e))
    r2 = res.rvalue**2 if np.ptp(np.log(e)) > 0 else 1.0
    return RateFit(float(res.slope), float(res.intercept), float(r2), int(ns.size),
                   theoretical_slope(theta, beta, dim), float(res.stderr))
