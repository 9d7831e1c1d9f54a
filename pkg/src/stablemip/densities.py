"""Initial densities on the torus ``[0, L)^d``.

Each profile is one-dimensional; a ``d``-dimensional density is the product of
the profile over the axes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special
from scipy.stats import norm
from scipy.stats.sampling import NumericalInversePolynomial

from .errors import ValidationError
from .stable_noise import GridField


class Profile:
    """Base class: a probability density on ``[0, L)``."""

    domain_length: float
    name = "profile"

    def pdf(self, x) -> np.ndarray:
        raise NotImplementedError

    def cdf(self, x) -> np.ndarray:
        x = np.mod(np.asarray(x, dtype=float), self.domain_length)
        return np.array([integrate.quad(self.pdf, 0.0, xi, limit=200)[0] for xi in np.ravel(x)]).reshape(x.shape)

    def ppf(self, u) -> np.ndarray:
        raise NotImplementedError

    @property
    def sup(self) -> float:
        x = np.linspace(0.0, self.domain_length, 20001)
        return float(self.pdf(x).max())

    # Hölder regularity of the profile; inf means smooth
    holder_index = math.inf

    def check_normalized(self, tol: float = 1e-8):
        # profiles are immutable after construction, so the quadrature is done once
        mass = getattr(self, "_mass", None)
        if mass is None:
            mass = integrate.quad(self.pdf, 0.0, self.domain_length, limit=400, points=self._breakpoints())[0]
            self._mass = mass
        if abs(mass - 1.0) > tol:
            raise ValidationError(f"{self.name}: density integrates to {mass:.10f}, not 1")

    def _breakpoints(self):
        return None

    def density_grid(self, grid: GridField) -> GridField:
        vals = np.ones(grid.shape)
        for c in grid.coords():
            vals = vals * self.pdf(c)
        return grid.with_values(vals)

    def sample(self, u: np.ndarray) -> np.ndarray:
        """Map ``(N, d)`` uniforms to ``(N, d)`` positions by per-axis inversion."""
        return np.mod(self.ppf(u), self.domain_length)

    def describe(self) -> dict:
        return {"name": self.name}


@dataclass
class WrappedGaussian(Profile):
    center: float
    sigma: float
    domain_length: float
    name = "wrapped_gaussian"

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValidationError("sigma must be positive")
        self._images = np.arange(-self._n_images(), self._n_images() + 1)

    def _n_images(self) -> int:
        return int(math.ceil(12.0 * self.sigma / self.domain_length)) + 1

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for k in self._images:
            out += norm.pdf(x + k * self.domain_length, loc=self.center, scale=self.sigma)
        return out

    def cdf(self, x):
        # mass of the unwrapped Gaussian folded into [0, x]
        x = np.mod(np.asarray(x, dtype=float), self.domain_length)
        out = np.zeros_like(x)
        L = self.domain_length
        for k in self._images:
            out += norm.cdf(x + k * L, self.center, self.sigma) - norm.cdf(k * L, self.center, self.sigma)
        return out

    def ppf(self, u):
        return self.center + self.sigma * norm.ppf(u)

    def describe(self):
        return {"name": self.name, "center": self.center, "sigma": self.sigma}


class _InverseSampled(Profile):
    """Profiles sampled by numerical inversion of the CDF."""

    _gen = None

    def _generator(self):
        if self._gen is None:
            prof = self

            class _Dist:
                def pdf(self, x):
                    return float(prof.pdf(np.array(x)))

            xs = np.linspace(0.0, self.domain_length, 4097)[1:-1]
            center = float(xs[np.argmax(self.pdf(xs))])
            self._gen = NumericalInversePolynomial(_Dist(), domain=(0.0, self.domain_length), center=center,
                                                   u_resolution=1e-12)
        return self._gen

    def ppf(self, u):
        return self._generator().ppf(u)


_UNIT_BUMP = None


def _unit_bump_sampler():
    global _UNIT_BUMP
    if _UNIT_BUMP is None:
        class _Bump:
            def pdf(self, y):
                return math.exp(-1.0 / (1.0 - y * y)) if abs(y) < 1.0 else 0.0

        _UNIT_BUMP = NumericalInversePolynomial(_Bump(), domain=(-1.0, 1.0), center=0.0, u_resolution=1e-12)
    return _UNIT_BUMP


@dataclass
class BumpMixture(Profile):
    """Mixture of smooth bumps ``exp(-1/(1-((x-c)/w)^2))`` on the torus."""

    centers: tuple
    widths: tuple
    weights: tuple
    domain_length: float
    name = "bump_mixture"

    def __post_init__(self):
        if not (len(self.centers) == len(self.widths) == len(self.weights)):
            raise ValidationError("centers, widths and weights need equal lengths")
        if any(w <= 0 or w >= self.domain_length / 2 for w in self.widths):
            raise ValidationError("bump widths must lie in (0, L/2)")
        if abs(sum(self.weights) - 1.0) > 1e-12 or min(self.weights) < 0:
            raise ValidationError("mixture weights must be non-negative and sum to 1")
        self._unit = integrate.quad(lambda y: math.exp(-1.0 / (1.0 - y * y)), -1, 1, epsabs=1e-15)[0]

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        L = self.domain_length
        for c, w, a in zip(self.centers, self.widths, self.weights):
            d = np.mod(x - c + L / 2, L) - L / 2
            s = (d / w) ** 2
            inside = s < 1.0
            val = np.zeros_like(x)
            val[inside] = np.exp(-1.0 / (1.0 - s[inside]))
            out += a * val / (w * self._unit)
        return out

    def ppf(self, u):
        # composition: the leading part of u picks the component, the remainder inverts one bump
        u = np.asarray(u, dtype=float)
        edges = np.cumsum((0.0,) + tuple(self.weights))
        k = np.clip(np.searchsorted(edges, u, side="right") - 1, 0, len(self.weights) - 1)
        w = np.asarray(self.weights)[k]
        v = np.clip((u - edges[k]) / np.where(w > 0, w, 1.0), 1e-16, 1 - 1e-16)
        y = _unit_bump_sampler().ppf(v)
        return np.asarray(self.centers)[k] + np.asarray(self.widths)[k] * y

    def describe(self):
        return {"name": self.name, "centers": list(self.centers), "widths": list(self.widths),
                "weights": list(self.weights)}


@dataclass
class SineProfile(_InverseSampled):
    """``|sin(pi x / L)|**beta`` normalized: beta-Hölder with a cusp at 0."""

    beta: float
    domain_length: float
    name = "sin_profile"

    def __post_init__(self):
        if not (0.0 < self.beta < 1.0):
            raise ValidationError("beta must lie in (0, 1)")
        b = self.beta
        self._norm = self.domain_length * special.gamma((b + 1) / 2) / (math.sqrt(math.pi) * special.gamma(b / 2 + 1))

    @property
    def holder_index(self):
        return self.beta

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.abs(np.sin(np.pi * x / self.domain_length)) ** self.beta / self._norm

    @property
    def sup(self):
        return 1.0 / self._norm

    def describe(self):
        return {"name": self.name, "beta": self.beta}


@dataclass
class Uniform(Profile):
    domain_length: float
    name = "uniform"

    def pdf(self, x):
        return np.full_like(np.asarray(x, dtype=float), 1.0 / self.domain_length)

    def cdf(self, x):
        return np.mod(np.asarray(x, dtype=float), self.domain_length) / self.domain_length

    def ppf(self, u):
        return np.asarray(u) * self.domain_length


@dataclass
class GridProfile(Profile):
    """A profile given by values on a periodic grid (linear interpolation)."""

    values: np.ndarray
    domain_length: float
    name = "grid_profile"

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1 or v.min() < 0:
            raise ValidationError("grid profile needs non-negative 1-D values")
        h = self.domain_length / v.size
        if abs(v.sum() * h - 1.0) > 1e-8:
            raise ValidationError(f"grid profile integrates to {v.sum() * h:.10f}, not 1")
        self.values = v

    def pdf(self, x):
        x = np.mod(np.asarray(x, dtype=float), self.domain_length)
        n = self.values.size
        xp = np.arange(n + 1) * (self.domain_length / n)
        return np.interp(x, xp, np.append(self.values, self.values[0]))

    def cdf(self, x):
        x = np.mod(np.asarray(x, dtype=float), self.domain_length)
        return self._cdf_exact(x)

    def _cdf_table(self):
        v = self.values
        h = self.domain_length / v.size
        nxt = np.roll(v, -1)
        cell_mass = 0.5 * h * (v + nxt)
        edges = np.concatenate([[0.0], np.cumsum(cell_mass)])
        return edges, v, nxt, h

    def _cdf_exact(self, x):
        edges, a, b, h = self._cdf_table()
        j = np.minimum((x / h).astype(np.int64), a.size - 1)
        s = x / h - j
        return edges[j] + h * (a[j] * s + 0.5 * (b[j] - a[j]) * s * s)

    def ppf(self, u):
        # invert the piecewise-quadratic CDF of the linear interpolant cell by cell
        edges, a, b, h = self._cdf_table()
        u = np.asarray(u, dtype=float) * edges[-1]
        j = np.clip(np.searchsorted(edges, u, side="right") - 1, 0, a.size - 1)
        r = (u - edges[j]) / h
        aj, dj = a[j], b[j] - a[j]
        disc = np.sqrt(np.maximum(aj * aj + 2.0 * dj * r, 0.0))
        with np.errstate(divide="ignore", invalid="ignore"):
            # numerically stable root of 0.5 dj s^2 + aj s - r = 0
            s = np.where(aj + disc > 0, 2.0 * r / (aj + disc), 0.0)
        return (j + np.clip(s, 0.0, 1.0)) * h
