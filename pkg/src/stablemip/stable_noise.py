"""Isotropic alpha-stable increments and the periodized stable heat semigroup.

Increments are produced by subordination: for ``alpha < 2`` an increment over
``dt`` is ``sqrt(2 S) * Z`` with ``S`` a positive ``alpha/2``-stable variable
(Laplace transform ``exp(-dt * lam**(alpha/2))``) and ``Z`` standard normal, so
the characteristic function is exactly ``exp(-dt |xi|**alpha)``.  For
``alpha == 2`` the increment is Gaussian with covariance ``2 dt I``.

The same normalization is used for the Fourier multiplier of the fractional
Laplacian, which keeps particle noise and PDE semigroup consistent.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .errors import ValidationError

NYQUIST_TOL = 1e-14
NEGATIVE_TOL = 1e-12


@dataclass(frozen=True)
class StableNoiseConfig:
    alpha: float
    dim: int = 1

    def __post_init__(self):
        if not (1.0 < self.alpha <= 2.0):
            raise ValidationError(f"alpha must lie in (1, 2], got {self.alpha}")
        if int(self.dim) != self.dim or self.dim < 1:
            raise ValidationError(f"dim must be a positive integer, got {self.dim}")

    @property
    def is_gaussian(self) -> bool:
        return self.alpha == 2.0


# ---------------------------------------------------------------------------
# uniforms -> increments (shared by the Generator API and the particle engine)


@njit(cache=True, nogil=True)
def _subordinator_from_uniforms(a, dt, u_angle, u_exp):
    # Kanter's representation of the positive a-stable law, 0 < a < 1
    v = math.pi * u_angle
    w = -math.log(u_exp)
    num = math.sin(a * v) ** (a / (1.0 - a)) * math.sin((1.0 - a) * v)
    den = math.sin(v) ** (1.0 / (1.0 - a))
    kanter = num / den
    return dt ** (1.0 / a) * (kanter / w) ** ((1.0 - a) / a)


@njit(cache=True, nogil=True)
def subordinator_from_uniforms(a, dt, u):
    """``u`` is ``(n, 2)``; returns ``n`` subordinator increments."""
    n = u.shape[0]
    out = np.empty(n)
    for i in range(n):
        out[i] = _subordinator_from_uniforms(a, dt, u[i, 0], u[i, 1])
    return out


@njit(cache=True, nogil=True)
def _normals_from_uniforms(u, col0, dim, out_row):
    # Box-Muller on consecutive uniform pairs starting at column col0
    k = 0
    c = col0
    while k < dim:
        r = math.sqrt(-2.0 * math.log(u[c]))
        ang = 2.0 * math.pi * u[c + 1]
        out_row[k] = r * math.cos(ang)
        if k + 1 < dim:
            out_row[k + 1] = r * math.sin(ang)
        k += 2
        c += 2


def uniforms_per_increment(alpha: float, dim: int) -> int:
    gauss = 2 * ((dim + 1) // 2)
    return gauss if alpha == 2.0 else gauss + 2


@njit(cache=True, nogil=True)
def increments_from_uniforms(alpha, dim, dt, u):
    """Map rows of uniforms to stable increments (``n x dim``)."""
    n = u.shape[0]
    out = np.empty((n, dim))
    if alpha == 2.0:
        scale = math.sqrt(2.0 * dt)
        for i in range(n):
            _normals_from_uniforms(u[i], 0, dim, out[i])
            for k in range(dim):
                out[i, k] *= scale
    else:
        a = 0.5 * alpha
        for i in range(n):
            s = _subordinator_from_uniforms(a, dt, u[i, 0], u[i, 1])
            _normals_from_uniforms(u[i], 2, dim, out[i])
            scale = math.sqrt(2.0 * s)
            for k in range(dim):
                out[i, k] *= scale
    return out


def _open_uniforms(rng: np.random.Generator, shape) -> np.ndarray:
    u = rng.random(shape)
    # Generator.random is on [0, 1); shift zeros into the open interval
    return np.where(u == 0.0, 0.5 / 2**53, u)


def sample_subordinator_increment(alpha_half: float, dt: float, rng: np.random.Generator, size=None):
    """Draw increments of the ``alpha_half``-stable subordinator over ``dt``.

    Returns a float when ``size`` is None, otherwise an array of that many
    draws.  The law has Laplace transform ``exp(-dt * lam**alpha_half)``.
    """
    # alpha in (1, 2) maps to alpha_half in (1/2, 1)
    if not (0.5 < alpha_half < 1.0):
        raise ValidationError(f"alpha_half must lie in (1/2, 1), got {alpha_half}")
    if not dt > 0:
        raise ValidationError(f"dt must be positive, got {dt}")
    n = 1 if size is None else int(size)
    s = subordinator_from_uniforms(float(alpha_half), float(dt), _open_uniforms(rng, (n, 2)))
    return float(s[0]) if size is None else s


def sample_stable_increment(cfg: StableNoiseConfig, dt: float, rng: np.random.Generator, size=None):
    """Draw increments of the isotropic stable process over ``dt``.

    Shape is ``(dim,)`` when ``size`` is None, else ``(size, dim)``.
    """
    if not dt > 0:
        raise ValidationError(f"dt must be positive, got {dt}")
    n = 1 if size is None else int(size)
    m = uniforms_per_increment(cfg.alpha, cfg.dim)
    x = increments_from_uniforms(float(cfg.alpha), int(cfg.dim), float(dt), _open_uniforms(rng, (n, m)))
    return x[0] if size is None else x


def empirical_char_function(samples, xi) -> complex:
    """Mean of ``exp(i xi . x)`` over the rows of ``samples``."""
    samples = np.asarray(samples, dtype=float)
    if samples.size == 0:
        raise ValidationError("empirical characteristic function needs at least one sample")
    if samples.ndim == 1:
        samples = samples[:, None]
    phase = samples @ np.atleast_1d(np.asarray(xi, dtype=float))
    return complex(np.mean(np.cos(phase)), np.mean(np.sin(phase)))


# ---------------------------------------------------------------------------
# periodic grids


@dataclass
class GridField:
    """Real values on a uniform periodic grid ``x_j = j * L / n`` per axis."""

    domain_length: float
    points_per_axis: int
    dim: int = 1
    values: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        n = int(self.points_per_axis)
        if n < 2 or n & (n - 1):
            raise ValidationError(f"points_per_axis must be a power of two, got {n}")
        if not self.domain_length > 0:
            raise ValidationError("domain_length must be positive")
        if self.values is not None:
            self.values = np.asarray(self.values, dtype=float)
            if self.values.shape != self.shape:
                raise ValidationError(f"values shape {self.values.shape} != grid shape {self.shape}")

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.points_per_axis,) * self.dim

    @property
    def spacing(self) -> float:
        return self.domain_length / self.points_per_axis

    @property
    def cell_volume(self) -> float:
        return self.spacing**self.dim

    def axis(self) -> np.ndarray:
        return np.arange(self.points_per_axis) * self.spacing

    def coords(self) -> list[np.ndarray]:
        return np.meshgrid(*([self.axis()] * self.dim), indexing="ij")

    def nodes(self) -> np.ndarray:
        """All grid nodes as an ``(n**d, d)`` array."""
        return np.stack([c.ravel() for c in self.coords()], axis=1)

    def with_values(self, values) -> "GridField":
        return GridField(self.domain_length, self.points_per_axis, self.dim, values)

    def mass(self) -> float:
        # trapezoid rule on a periodic grid
        return float(np.sum(self.values) * self.cell_volume)

    def wavenumbers(self) -> list[np.ndarray]:
        k = 2.0 * np.pi * np.fft.fftfreq(self.points_per_axis, d=self.spacing)
        return np.meshgrid(*([k] * self.dim), indexing="ij")

    def wavenumber_norm(self) -> np.ndarray:
        return np.sqrt(sum(k**2 for k in self.wavenumbers()))

    @property
    def nyquist(self) -> float:
        return np.pi * self.points_per_axis / self.domain_length

    def check_density(self, mass_tol: float = 1e-8, neg_tol: float = NEGATIVE_TOL):
        v = self.values
        if not np.all(np.isfinite(v)):
            raise ValidationError("density has non-finite values")
        if v.min() < -neg_tol:
            raise ValidationError(f"density has negative values down to {v.min():.3e}")
        if abs(self.mass() - 1.0) > mass_tol:
            raise ValidationError(f"density mass {self.mass():.12f} differs from 1")


def stable_multiplier(alpha: float, t: float, grid: GridField) -> np.ndarray:
    """Fourier multiplier ``exp(-t |k|**alpha)`` on the grid's wavenumbers."""
    return np.exp(-t * grid.wavenumber_norm() ** alpha)


def check_resolution(alpha: float, t: float, grid: GridField) -> None:
    decay = math.exp(-t * grid.nyquist**alpha)
    if decay >= NYQUIST_TOL:
        raise ValidationError(
            f"grid under-resolved: exp(-t k_max^alpha) = {decay:.2e} at t={t}, "
            f"k_max={grid.nyquist:.3g}; refine the grid or shorten the domain"
        )


def heat_kernel_grid(cfg: StableNoiseConfig, t: float, grid: GridField) -> GridField:
    """Periodized stable heat kernel ``sum_k q(t, x + k L)`` sampled at the grid nodes."""
    if not t > 0:
        raise ValidationError(f"t must be positive, got {t}")
    if grid.dim != cfg.dim:
        raise ValidationError("grid dimension does not match noise dimension")
    check_resolution(cfg.alpha, t, grid)
    mult = stable_multiplier(cfg.alpha, t, grid)
    vals = np.fft.ifftn(mult).real * (grid.points_per_axis**grid.dim) / grid.domain_length**grid.dim
    return grid.with_values(vals)


def semigroup_apply(cfg: StableNoiseConfig, t: float, f: GridField) -> GridField:
    """Apply ``P_t = exp(t Delta^{alpha/2})`` spectrally."""
    if t < 0:
        raise ValidationError(f"t must be non-negative, got {t}")
    if t == 0:
        return f.with_values(f.values.copy())
    out = np.fft.ifftn(np.fft.fftn(f.values) * stable_multiplier(cfg.alpha, t, f)).real
    return f.with_values(out)
