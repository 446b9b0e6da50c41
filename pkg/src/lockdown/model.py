"""
Parameter and state types for the multi-risk-group lockdown model.

Each risk group k carries its own scalar constants (``GroupParams``) and a
state vector (``GroupState``)::

    (z, beta, S, I, R, omega, W, D)

z is lockdown fatigue, beta the stochastic infection rate, S/I/R the
compartments, omega the group's opinion on vaccination in [-1, 1], W the
interaction probability in [0, 1] and D an accumulator for deaths.

The control is the lockdown intensity e in [0, 1]: the share of
pre-pandemic employment that is allowed.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Sequence

import numpy as np

# Column order used for state arrays everywhere in the package.
STATE_FIELDS = ("z", "beta", "S", "I", "R", "omega", "W", "D")
IZ, IBETA, IS, II, IR, IOMEGA, IW, ID = range(len(STATE_FIELDS))


class ParamValidationError(ValueError):
    """Raised when parameters violate a model constraint.

    ``violations`` holds ``(constraint, offending value)`` pairs, one for
    every constraint that failed.
    """

    def __init__(self, violations):
        self.violations = list(violations)
        lines = ", ".join(f"{name} (got {value!r})" for name, value in self.violations)
        super().__init__(f"invalid parameters: {lines}")


@dataclass(frozen=True)
class VarpiParams:
    """Capped-linear death probability under emergency care."""

    pi_min: float = 0.01
    pi_max: float = 0.2
    h_capacity: float = 100.0  # ICU load at which the death probability saturates


@dataclass(frozen=True)
class GroupParams:
    # fatigue
    kappa0: float = 0.2  # fatigue accumulation rate
    kappa1: float = 0.1  # fatigue decay rate
    # infection rate
    beta1: float = 0.005  # minimum infection risk
    beta2: float = 0.01  # infection-risk slope
    m_pollution: float = 1.0  # fine particulate factor M
    theta_exp: float = 2.0  # convexity exponent of the infection rate in e
    gamma_fatigue: float = 0.5  # fatigue effectiveness exponent
    # SIR
    eta_birth: float = 1e-4
    r_sat: float = 1.0  # inhibition coefficient
    tau_death: float = 1e-4
    zeta_waning: float = 0.01
    mu_recovery: float = 0.1
    # opinion
    varkappa: float = 0.3  # compromise propensity
    mu4: float = 1.0  # gain on the interaction-probability drift
    compromise: str = "linear"  # Q(|w|) = 1 - |w|; "constant" gives Q = 1
    # objective
    rho_discount: float = 0.05
    theta_weight: float = 1.0  # fatigue-unemployment penalty
    chi_death: float = 100.0  # cost of death
    h_icu: float = 0.05  # share of infected needing emergency care
    varpi_params: VarpiParams = field(default_factory=VarpiParams)
    # employment probabilities
    tau_noicu: float = 0.5
    tau_icu_hat: float = 0.5
    f_hat_cap: float = 0.4
    f_p0: float = 0.5
    tau_reinfect: float = 0.1
    tau_rejoin: float = 0.8
    n_pop: float = 1000.0
    # equilibria anchoring the diffusions
    z_eq: float = 0.0
    s_eq: float = 0.0
    i_eq: float = 0.0
    r_eq: float = 0.0
    # diffusion coefficients
    sigma0: float = 0.1
    sigma1: float = 0.0  # constant infection-rate diffusion, scaled by M
    sigma2: float = 0.01
    sigma3: float = 0.01
    sigma4: float = 0.01
    sigma8: float = 0.05
    sigma10: float = 0.05
    # Lagrange multipliers of the action functional
    lambda1: float = 1.0
    lambda2: float = 1.0
    lambda3: float = 1.0
    lambda4: float = 1.0
    lambda5: float = 1.0
    # opinion prior and employment restriction factors
    p0_prior: float = 0.3
    d0: float = 1.0
    d1: float = 0.9
    d2: float = 0.9

    def replace(self, **changes) -> "GroupParams":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return asdict(self)


_PROBABILITIES = (
    "h_icu", "tau_noicu", "tau_icu_hat", "f_hat_cap", "f_p0",
    "tau_reinfect", "tau_rejoin", "d0",
)
_NONNEGATIVE = (
    "kappa0", "kappa1", "beta1", "beta2", "m_pollution", "eta_birth", "r_sat",
    "tau_death", "zeta_waning", "mu_recovery", "theta_weight", "chi_death",
    "sigma0", "sigma1", "sigma2", "sigma3", "sigma4", "sigma8", "sigma10",
    "lambda1", "lambda2", "lambda3", "lambda4", "lambda5",
)


def _open_interval(violations, name, value, lo, hi):
    if not (lo < value < hi):
        violations.append((f"{name} in ({lo:g},{hi:g})", value))


def validate_params(params: GroupParams) -> GroupParams:
    """Check every model constraint; return ``params`` unchanged if all hold.

    Raises ParamValidationError listing all violated constraints at once.
    """
    v = []
    for f in fields(params):
        value = getattr(params, f.name)
        if isinstance(value, float) and not math.isfinite(value):
            v.append((f"{f.name} finite", value))
    if not params.theta_exp > 1:
        v.append(("theta_exp > 1", params.theta_exp))
    _open_interval(v, "gamma_fatigue", params.gamma_fatigue, 0.0, 1.0)
    _open_interval(v, "varkappa", params.varkappa, 0.0, 0.5)
    _open_interval(v, "rho_discount", params.rho_discount, 0.0, 1.0)
    _open_interval(v, "p0_prior", params.p0_prior, 0.0, 1.0)
    _open_interval(v, "d1", params.d1, 0.0, 1.0)
    _open_interval(v, "d2", params.d2, 0.0, 1.0)
    if not params.f_hat_cap < 0.5:
        v.append(("f_hat_cap < 0.5", params.f_hat_cap))
    for name in _PROBABILITIES:
        value = getattr(params, name)
        if not 0.0 <= value <= 1.0:
            v.append((f"{name} in [0,1]", value))
    for name in _NONNEGATIVE:
        value = getattr(params, name)
        if not value >= 0.0:
            v.append((f"{name} >= 0", value))
    if not params.n_pop > 0:
        v.append(("n_pop > 0", params.n_pop))
    if params.compromise not in ("linear", "constant"):
        v.append(("compromise in {linear, constant}", params.compromise))
    vp = params.varpi_params
    if not 0.0 <= vp.pi_min <= vp.pi_max <= 1.0:
        v.append(("0 <= varpi pi_min <= pi_max <= 1", (vp.pi_min, vp.pi_max)))
    if not vp.h_capacity > 0:
        v.append(("varpi h_capacity > 0", vp.h_capacity))
    if v:
        raise ParamValidationError(v)
    return params


@dataclass(frozen=True)
class GroupState:
    z: float = 0.0
    beta: float = 0.01
    s_comp: float = 990.0
    i_comp: float = 10.0
    r_comp: float = 0.0
    omega: float = 0.0
    w_prob: float = 0.5
    d_comp: float = 0.0
    time: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array([self.z, self.beta, self.s_comp, self.i_comp, self.r_comp,
                         self.omega, self.w_prob, self.d_comp], dtype=float)

    @classmethod
    def from_array(cls, x, time: float = 0.0) -> "GroupState":
        x = [float(v) for v in x]
        return cls(*x, time=float(time))

    def check(self) -> "GroupState":
        """Raise ValueError if the state is outside its admissible box."""
        bad = [name for name, val in (("z", self.z), ("beta", self.beta), ("S", self.s_comp),
                                      ("I", self.i_comp), ("R", self.r_comp), ("D", self.d_comp))
               if not val >= 0]
        if not -1.0 <= self.omega <= 1.0:
            bad.append("omega")
        if not 0.0 <= self.w_prob <= 1.0:
            bad.append("W")
        if bad:
            raise ValueError(f"state out of range: {', '.join(bad)}")
        return self


@dataclass(frozen=True)
class SimConfig:
    t_horizon: float = 20.0
    dt: float = 0.01
    n_paths: int = 1
    master_seed: int = 12345
    n_groups: int = 1
    noise_mode: str = "shared"  # "shared": z, S, I, R driven by one Brownian motion per group
    positivity: str = "clamp"  # or "resample"
    beta_mode: str = "sde"  # or "algebraic"
    omega_partner: float = 0.0  # exogenous partner opinion when n_groups == 1
    overflow_guard: float = 1e12

    def __post_init__(self):
        if not (self.t_horizon > 0 and self.dt > 0):
            raise ValueError("t_horizon and dt must be positive")
        if self.dt > self.t_horizon:
            raise ValueError("dt must not exceed t_horizon")
        if self.n_paths < 1 or self.n_groups < 1:
            raise ValueError("n_paths and n_groups must be >= 1")
        if self.noise_mode not in ("shared", "independent"):
            raise ValueError(f"unknown noise_mode {self.noise_mode!r}")
        if self.positivity not in ("clamp", "resample"):
            raise ValueError(f"unknown positivity policy {self.positivity!r}")
        if self.beta_mode not in ("sde", "algebraic"):
            raise ValueError(f"unknown beta_mode {self.beta_mode!r}")

    @property
    def n_steps(self) -> int:
        n = round(self.t_horizon / self.dt)
        if abs(n * self.dt - self.t_horizon) > 1e-9 * self.t_horizon:
            raise ValueError("t_horizon must be an integer multiple of dt")
        return n


# --- policies -------------------------------------------------------------

@dataclass(frozen=True)
class ConstantPolicy:
    e: float
    kind = "constant"

    def __post_init__(self):
        if not 0.0 <= self.e <= 1.0:
            raise ValueError("constant policy value must lie in [0, 1]")


@dataclass(frozen=True)
class PiecewisePolicy:
    """Right-continuous step function: ``breakpoints`` is a list of (time, e)."""

    breakpoints: tuple
    kind = "piecewise"

    def __post_init__(self):
        bps = tuple((float(t), float(e)) for t, e in self.breakpoints)
        if not bps:
            raise ValueError("piecewise policy needs at least one breakpoint")
        times = [t for t, _ in bps]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("piecewise breakpoints must be strictly increasing")
        if any(not 0.0 <= e <= 1.0 for _, e in bps):
            raise ValueError("piecewise values must lie in [0, 1]")
        object.__setattr__(self, "breakpoints", bps)

    def value(self, time: float) -> float:
        times = [t for t, _ in self.breakpoints]
        i = bisect.bisect_right(times, time) - 1
        return self.breakpoints[max(i, 0)][1]


@dataclass(frozen=True)
class FeedbackPolicy:
    """Closed-form optimal intensity evaluated at the current state.

    ``fallback`` is used whenever the state leaves the log domain of the
    control objective or the closed form fails.
    """

    fallback: float = 1.0
    kind = "closed_form_feedback"


Policy = ConstantPolicy | PiecewisePolicy | FeedbackPolicy


def policy_eval(policy, time: float, state: GroupState, params: GroupParams, *,
                t_horizon: float | None = None, p_attach: float | None = None,
                omega_partner: float = 0.0, options=None) -> float:
    """Lockdown intensity chosen by ``policy`` at ``time``; always in [0, 1]."""
    if time < 0 or (t_horizon is not None and time > t_horizon * (1 + 1e-12)):
        raise ValueError(f"time {time} outside the horizon [0, {t_horizon}]")
    if isinstance(policy, ConstantPolicy):
        return policy.e
    if isinstance(policy, PiecewisePolicy):
        return policy.value(time)
    if isinstance(policy, FeedbackPolicy):
        from lockdown.control import ControlContext, feedback_intensity

        if p_attach is None:
            raise ValueError("closed-form feedback needs the attachment probability")
        ctx = ControlContext(state=replace(state, time=time), p_attach=p_attach,
                             omega_partner=omega_partner, params=params)
        e, _ = feedback_intensity(ctx, policy.fallback, options)
        return min(max(e, 0.0), 1.0)
    raise TypeError(f"unknown policy {policy!r}")


def policy_from_dict(spec: dict):
    kind = spec.get("kind", "constant")
    if kind == "constant":
        return ConstantPolicy(float(spec.get("e", 1.0)))
    if kind == "piecewise":
        return PiecewisePolicy(tuple(tuple(bp) for bp in spec["breakpoints"]))
    if kind == "closed_form_feedback":
        return FeedbackPolicy(fallback=float(spec.get("fallback", 1.0)))
    raise ValueError(f"unknown policy kind {kind!r}")


def stack_states(states: Sequence[GroupState]) -> np.ndarray:
    return np.stack([s.as_array() for s in states])
