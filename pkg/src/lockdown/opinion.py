"""Vaccination-opinion dynamics, Bayesian posterior and total variation of interaction measures."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Hashable, NamedTuple, Sequence

import numpy as np
from scipy import stats


def compromise_q(abs_omega, params):
    """Local relevance of compromise: 1 - |w| (linear) or 1 (constant)."""
    linear = getattr(params, "q_linear", None)
    if linear is None:
        linear = params.compromise == "linear"
    return np.where(linear, 1.0 - abs_omega, 1.0)


class OpinionStep(NamedTuple):
    drift_k: float
    drift_l: float
    diffusion_k: float
    diffusion_l: float


def opinion_pair_drift_diffusion(omega_k, omega_l, e_k, e_l, params, params_l=None):
    """Drifts and diffusions of a pair of interacting group opinions."""
    params_l = params if params_l is None else params_l
    gap = omega_k - omega_l
    drift_k = omega_k - params.varkappa * e_k * compromise_q(np.abs(omega_k), params) * gap
    drift_l = omega_l + params_l.varkappa * e_l * compromise_q(np.abs(omega_l), params_l) * gap
    return OpinionStep(drift_k, drift_l, params.sigma8 * e_k * gap, -params_l.sigma8 * e_l * gap)


def w_drift_diffusion(omega_k, omega_l, e, params):
    """Drift and diffusion of the interaction probability W."""
    gap = omega_k - omega_l
    drift = params.mu4 * (omega_k - params.varkappa * e * compromise_q(np.abs(omega_k), params) * gap)
    return drift, params.sigma10 * e * gap


def posterior_p(pr_interact: float, p0: float) -> float:
    """Posterior that an interaction partner is infected, given interaction probability."""
    if not (0.0 <= pr_interact <= 1.0) or not (0.0 < p0 < 1.0):
        raise ValueError("need pr_interact in [0,1] and p0 in (0,1)")
    num = (1.0 - pr_interact) * p0
    return num / (num + (1.0 - p0))


@dataclass(frozen=True)
class CostDistribution:
    """Distribution of interaction costs on [c_lower, c_upper] inside [0, 1]."""

    family: str = "uniform"
    c_lower: float = 0.0
    c_upper: float = 1.0
    a: float = 2.0
    b: float = 2.0

    def __post_init__(self):
        if not 0.0 <= self.c_lower < self.c_upper <= 1.0:
            raise ValueError("cost support must be a sub-interval of [0, 1]")
        if self.family not in ("uniform", "beta"):
            raise ValueError(f"unknown cost family {self.family!r}")
        # bounded density needs both shape parameters >= 1
        if self.family == "beta" and (self.a < 1 or self.b < 1):
            raise ValueError("beta shapes must be >= 1 for a bounded density")

    def cdf(self, x: float) -> float:
        width = self.c_upper - self.c_lower
        u = min(max((x - self.c_lower) / width, 0.0), 1.0)
        if self.family == "uniform":
            return u
        return float(stats.beta.cdf(u, self.a, self.b))


def tolerance_rate(pr_interact: float, f_dist: CostDistribution | None = None, p0: float = 0.3) -> float:
    f_dist = f_dist or CostDistribution()
    post = posterior_p(pr_interact, p0)
    return 1.0 - (1.0 - pr_interact) * (1.0 - f_dist.cdf(post))


@dataclass(frozen=True)
class DiscreteMeasure:
    atoms: tuple
    weights: tuple

    def __post_init__(self):
        atoms, weights = tuple(self.atoms), tuple(float(w) for w in self.weights)
        if len(atoms) != len(weights):
            raise ValueError("atoms and weights differ in length")
        if len(set(atoms)) != len(atoms):
            raise ValueError("atoms must be distinct")
        if any(not (w >= 0) for w in weights):
            raise ValueError("weights must be non-negative")
        if abs(math.fsum(weights) - 1.0) > 1e-12:
            raise ValueError("weights must sum to 1")
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "weights", weights)

    def mass(self, atom: Hashable) -> float:
        try:
            return self.weights[self.atoms.index(atom)]
        except ValueError:
            return 0.0


def _aligned(mu: DiscreteMeasure, nu: DiscreteMeasure):
    universe = list(mu.atoms) + [a for a in nu.atoms if a not in set(mu.atoms)]
    return universe, [mu.mass(a) for a in universe], [nu.mass(a) for a in universe]


def partition_min_mass(mu: DiscreteMeasure, nu: DiscreteMeasure, blocks: Sequence[Sequence]) -> float:
    """Sum over blocks of min(mu(block), nu(block))."""
    return math.fsum(min(math.fsum(mu.mass(a) for a in blk), math.fsum(nu.mass(a) for a in blk))
                     for blk in blocks)


class TVForms(NamedTuple):
    sup_form: float
    coupling_form: float
    partition_form: float

    @property
    def max_discrepancy(self) -> float:
        v = tuple(self)
        return max(v) - min(v)


def tv_forms(mu: DiscreteMeasure, nu: DiscreteMeasure) -> TVForms:
    universe, m, n = _aligned(mu, nu)
    # Hahn-Jordan: the set where mu outweighs nu carries the whole positive part
    positive = [a for a, x, y in zip(universe, m, n) if x > y]
    sup_form = math.fsum(mu.mass(a) for a in positive) - math.fsum(nu.mass(a) for a in positive)
    coupling_form = 1.0 - math.fsum(min(x, y) for x, y in zip(m, n))
    # the atomic partition attains the infimum for discrete measures
    partition_form = 1.0 - partition_min_mass(mu, nu, [[a] for a in universe])
    return TVForms(sup_form, coupling_form, partition_form)
