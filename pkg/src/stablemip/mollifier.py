"""Bump mollifier, its N-scaled family and cell-list kernel density estimates.

``phi(x) = c * exp(-1 / (1 - |x/R|**2))`` on ``|x| < R``.  The scaled kernel
``phi_N(x) = N**(theta d) phi(N**theta x)`` is again a bump, of radius
``R N**-theta``, so both are represented by the same :class:`MollifierKernel`.

Density estimates sum over neighbours found through a uniform cell grid of
cell size at least the kernel radius.  Particles are ordered by (cell,
coordinates) before summation, which makes every output independent of the
input particle order, bit for bit.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numba import njit
from scipy import integrate, special

from .errors import ValidationError

MAX_CELLS_TOTAL = 2**22


@lru_cache(maxsize=None)
def unit_bump_constant(dim: int) -> float:
    """Normalization of ``exp(-1/(1-|y|^2))`` on the unit ball in ``dim`` dimensions."""
    radial, _ = integrate.quad(
        lambda r: r ** (dim - 1) * math.exp(-1.0 / (1.0 - r * r)) if r < 1.0 else 0.0,
        0.0, 1.0, epsabs=1e-15, epsrel=1e-13, limit=200,
    )
    sphere = 2.0 * math.pi ** (dim / 2) / special.gamma(dim / 2)
    return 1.0 / (sphere * radial)


@dataclass(frozen=True)
class MollifierKernel:
    """Radial bump of support radius ``radius``.

    ``base_radius`` is the unscaled ``R``; ``radius`` is ``R * N**-theta``.
    """

    base_radius: float
    dim: int = 1
    n_particles: int = 1
    theta: float = 0.0

    def __post_init__(self):
        if not self.base_radius > 0:
            raise ValidationError(f"kernel radius must be positive, got {self.base_radius}")
        if self.n_particles < 1:
            raise ValidationError("n_particles must be >= 1")

    @property
    def normalization_constant(self) -> float:
        """``c`` such that ``phi`` (radius ``R``) integrates to one."""
        return unit_bump_constant(self.dim) / self.base_radius**self.dim

    @property
    def radius(self) -> float:
        return self.base_radius * self.n_particles ** (-self.theta)

    @property
    def amplitude(self) -> float:
        # phi_N(x) = amplitude * exp(-1 / (1 - |x|^2 / radius^2))
        return unit_bump_constant(self.dim) / self.radius**self.dim

    def peak(self) -> float:
        return self.amplitude * math.exp(-1.0)

    def __call__(self, x) -> np.ndarray:
        """Evaluate the kernel at points ``x`` (shape ``(..., dim)``; 1-D arrays allowed for dim 1)."""
        x = np.asarray(x, dtype=float)
        if self.dim == 1 and x.ndim < 2:
            r2 = x**2
        else:
            r2 = np.sum(x**2, axis=-1)
        s = r2 / self.radius**2
        out = np.zeros_like(s, dtype=float)
        inside = s < 1.0
        out[inside] = self.amplitude * np.exp(-1.0 / (1.0 - s[inside]))
        return out


def make_bump_kernel(radius: float, dim: int = 1) -> MollifierKernel:
    return MollifierKernel(base_radius=float(radius), dim=int(dim))


def scale_kernel(base: MollifierKernel, n_particles: int, theta: float) -> MollifierKernel:
    """Return ``phi_N`` for ``N = n_particles``; requires ``0 < theta < 1/(2d)``."""
    if n_particles < 1:
        raise ValidationError("n_particles must be >= 1")
    if not (0.0 < theta < 1.0 / (2 * base.dim)):
        raise ValidationError(f"theta must lie in (0, 1/(2d)) = (0, {1 / (2 * base.dim)}), got {theta}")
    return MollifierKernel(base.base_radius, base.dim, int(n_particles), float(theta))


@dataclass
class ParticleEnsemble:
    """Positions of ``N`` particles on the torus ``[0, L)^d`` at time ``time``."""

    positions: np.ndarray
    domain_length: float
    time: float = 0.0

    def __post_init__(self):
        p = np.asarray(self.positions, dtype=float)
        if p.ndim == 1:
            p = p[:, None]
        if p.shape[0] < 1:
            raise ValidationError("an ensemble needs at least one particle")
        self.positions = p

    @property
    def n_particles(self) -> int:
        return self.positions.shape[0]

    @property
    def dim(self) -> int:
        return self.positions.shape[1]

    def copy(self) -> "ParticleEnsemble":
        return ParticleEnsemble(self.positions.copy(), self.domain_length, self.time)


# ---------------------------------------------------------------------------
# cell list


def cells_per_axis(radius: float, domain_length: float, dim: int) -> int:
    cap = max(1, int(MAX_CELLS_TOTAL ** (1.0 / dim)))
    n = min(int(domain_length // radius), cap)
    # fewer than three cells would visit a cell twice
    return n if n >= 3 else 1


class CellList:
    """Particles binned on a uniform grid, sorted by (cell, coordinates)."""

    def __init__(self, positions: np.ndarray, domain_length: float, radius: float):
        positions = np.ascontiguousarray(positions, dtype=float)
        n, dim = positions.shape
        self.ncell = cells_per_axis(radius, domain_length, dim)
        self.domain_length = float(domain_length)
        cell_coord = np.minimum((positions * (self.ncell / domain_length)).astype(np.int64), self.ncell - 1)
        cell_id = np.zeros(n, dtype=np.int64)
        for k in range(dim):
            cell_id = cell_id * self.ncell + cell_coord[:, k]
        keys = [positions[:, k] for k in reversed(range(dim))] + [cell_id]
        self.order = np.lexsort(keys)
        self.sorted_positions = np.ascontiguousarray(positions[self.order])
        counts = np.bincount(cell_id, minlength=self.ncell**dim)
        self.cell_start = np.zeros(self.ncell**dim + 1, dtype=np.int64)
        np.cumsum(counts, out=self.cell_start[1:])


@njit(cache=True, nogil=True)
def _kde_cells(queries, sorted_pos, cell_start, ncell, L, radius, amplitude):
    nq, dim = queries.shape
    out = np.zeros(nq)
    r2max = radius * radius
    inv_r2 = 1.0 / r2max
    half = 0.5 * L
    span = 3 if ncell >= 3 else 1
    noff = span**dim
    qcell = np.empty(dim, dtype=np.int64)
    diff = np.empty(dim)
    for q in range(nq):
        for k in range(dim):
            c = int(queries[q, k] * ncell / L)
            if c >= ncell:
                c = ncell - 1
            elif c < 0:
                c = 0
            qcell[k] = c
        acc = 0.0
        for o in range(noff):
            rem = o
            cid = 0
            for k in range(dim):
                if span == 3:
                    off = rem % 3 - 1
                    rem //= 3
                    c = (qcell[k] + off) % ncell
                else:
                    c = 0
                cid = cid * ncell + c
            for j in range(cell_start[cid], cell_start[cid + 1]):
                r2 = 0.0
                for k in range(dim):
                    d = sorted_pos[j, k] - queries[q, k]
                    if d >= half:
                        d -= L
                    elif d < -half:
                        d += L
                    r2 += d * d
                if r2 < r2max:
                    acc += amplitude * math.exp(-1.0 / (1.0 - r2 * inv_r2))
        out[q] = acc
    return out


@njit(cache=True, nogil=True)
def _kde_self_sweep_1d(p, L, radius, amplitude):
    # p sorted ascending in [0, L); each unordered pair within radius is
    # evaluated once and credited to both ends, scanning forward around the circle
    n = p.shape[0]
    out = np.zeros(n)
    inv_r2 = 1.0 / (radius * radius)
    self_term = amplitude * math.exp(-1.0)
    buf = np.empty(n)
    pp = np.empty(2 * n)
    pp[:n] = p
    pp[n:] = p + L
    for i in range(n):
        pi = p[i]
        hi = i + 1
        while hi < i + n and pp[hi] - pi < radius:
            hi += 1
        m = hi - i - 1
        for jj in range(m):
            d = pp[i + 1 + jj] - pi
            buf[jj] = amplitude * math.exp(-1.0 / (1.0 - d * d * inv_r2))
        acc = out[i] + self_term
        for jj in range(m):
            acc += buf[jj]
        out[i] = acc
        for jj in range(m):
            j = i + 1 + jj
            if j >= n:
                j -= n
            out[j] += buf[jj]
    return out


def _check_kernel(ensemble: ParticleEnsemble, kernel: MollifierKernel):
    if kernel.n_particles != ensemble.n_particles:
        raise ValidationError(
            f"kernel scaled for N={kernel.n_particles} but ensemble has N={ensemble.n_particles}"
        )
    if kernel.dim != ensemble.dim:
        raise ValidationError("kernel and ensemble dimensions differ")


def kde_at_points(ensemble: ParticleEnsemble, kernel: MollifierKernel, queries, cells: CellList | None = None) -> np.ndarray:
    """``(1/N) sum_i phi_N(x - X_i)`` with the minimal-image torus difference."""
    _check_kernel(ensemble, kernel)
    q = np.asarray(queries, dtype=float)
    if q.ndim == 1:
        q = q[:, None] if ensemble.dim == 1 else q[None, :]
    q = np.ascontiguousarray(np.mod(q, ensemble.domain_length))
    if cells is None:
        cells = CellList(ensemble.positions, ensemble.domain_length, kernel.radius)
    s = _kde_cells(q, cells.sorted_positions, cells.cell_start, cells.ncell,
                   float(ensemble.domain_length), kernel.radius, kernel.amplitude)
    return s / ensemble.n_particles


def kde_at_particles(ensemble: ParticleEnsemble, kernel: MollifierKernel) -> np.ndarray:
    """Density estimate at every particle, self-interaction included."""
    _check_kernel(ensemble, kernel)
    cells = CellList(ensemble.positions, ensemble.domain_length, kernel.radius)
    if ensemble.dim == 1 and cells.ncell >= 3:
        s = _kde_self_sweep_1d(cells.sorted_positions[:, 0], float(ensemble.domain_length),
                               kernel.radius, kernel.amplitude)
        out = np.empty_like(s)
        out[cells.order] = s
        return out / ensemble.n_particles
    # query in sorted order for locality, then scatter back
    s = _kde_cells(cells.sorted_positions, cells.sorted_positions, cells.cell_start, cells.ncell,
                   float(ensemble.domain_length), kernel.radius, kernel.amplitude)
    out = np.empty_like(s)
    out[cells.order] = s
    return out / ensemble.n_particles
