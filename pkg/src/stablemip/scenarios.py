"""Registered drift/initial-density scenarios."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .densities import Profile, SineProfile, WrappedGaussian
from .errors import ValidationError
from .particle_system import DriftSpec, zero_drift


@dataclass
class ScenarioSpec:
    name: str
    make_drift: Callable[[float, int], DriftSpec]
    make_rho0: Callable[[float], Profile]
    # integrability index of rho0 (inf: bounded)
    q: float
    # declared Hölder index used for the predicted rate
    beta: float
    notes: str = ""
    # which regularity hypothesis on rho0 the scenario satisfies
    branch: str = "rho0_holder"
    extra: dict = field(default_factory=dict)

    def drift(self, domain_length: float, dim: int = 1) -> DriftSpec:
        return self.make_drift(domain_length, dim)

    def rho0(self, domain_length: float) -> Profile:
        return self.make_rho0(domain_length)


def burgers_drift(u_cap: float = 1.0, dim: int = 1) -> DriftSpec:
    """``b(u) = min(u, u_cap)`` along the first axis (fractional Burgers flux ``rho^2``)."""

    def b(t, x, u):
        out = np.zeros((x.shape[0], dim))
        out[:, 0] = np.minimum(u, u_cap)
        return out

    return DriftSpec(b, kappa=max(u_cap, 1.0), beta=0.99, lip_u=1.0, name="burgers")


def holder_drift(domain_length: float, beta: float = 0.5, strength: float = 0.5, dim: int = 1) -> DriftSpec:
    """``b = strength * (|sin(2 pi x_1 / L)|^beta + tanh(u)) e_1``: beta-Hölder in x, Lipschitz in u."""
    k = 2.0 * math.pi / domain_length

    def b(t, x, u):
        out = np.zeros((x.shape[0], dim))
        out[:, 0] = strength * (np.abs(np.sin(k * x[:, 0])) ** beta + np.tanh(u))
        return out

    # |sin|^beta has Hölder constant k^beta <= 1 for L >= 2 pi
    kappa = 2.0 * strength * max(1.0, k**beta)
    return DriftSpec(b, kappa=kappa, beta=beta, lip_u=strength, name="holder")


SCENARIOS: dict[str, ScenarioSpec] = {}


def register(spec: ScenarioSpec) -> ScenarioSpec:
    SCENARIOS[spec.name] = spec
    return spec


register(ScenarioSpec(
    name="fractional_burgers",
    make_drift=lambda L, dim: burgers_drift(1.0, dim),
    make_rho0=lambda L: WrappedGaussian(L / 2, 1.0, L),
    q=math.inf,
    beta=0.99,
    notes="b(u) = min(u, 1); cap above sup rho0 = 0.399, so the truncation is inactive by the maximum principle",
    branch="rho0_holder",
))

register(ScenarioSpec(
    name="holder_drift",
    make_drift=lambda L, dim: holder_drift(L, 0.5, 0.5, dim),
    make_rho0=lambda L: SineProfile(0.5, L),
    q=math.inf,
    beta=0.5,
    notes="spatially 1/2-Hölder drift with a |sin|^(1/2) initial density",
    branch="rho0_holder",
))

register(ScenarioSpec(
    name="zero_drift",
    make_drift=lambda L, dim: zero_drift(dim),
    make_rho0=lambda L: WrappedGaussian(L / 2, 1.0, L),
    q=math.inf,
    beta=0.99,
    notes="control: pure noise, the particles are independent",
    branch="rho0_holder",
))


def get_scenario(name: str) -> ScenarioSpec:
    try:
        return SCENARIOS[name]
    except KeyError:
        raise ValidationError(f"unknown scenario {name!r}; choose from {sorted(SCENARIOS)}") from None
