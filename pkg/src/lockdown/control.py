"""
Optimal lockdown intensity.

The control objective at a state is a scalar function f(e) of the lockdown
intensity. Every term of it has the shape ``c0 + c1*e + c2*e**theta``
(theta the infection-rate convexity exponent), so ``_term_coefficients``
stores each term as such a triple, in long double. Evaluating and
differencing f through the coefficients keeps the large e-independent
parts from swamping the e-dependent ones.

Stationarity of f gives ``C * e**(theta-1) = B`` with C > 0 implying
convexity, hence the closed form ``e* = (B/C)**(1/(theta-1))``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, NamedTuple, Sequence

import numpy as np

from lockdown import dynamics as dyn
from lockdown.model import GroupParams, GroupState, VarpiParams
from lockdown.opinion import compromise_q, w_drift_diffusion

LD = np.longdouble
_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
STATE_NAMES = ("z", "S", "I", "R", "W")


@dataclass(frozen=True)
class ControlOptions:
    # "derived": B taken from the e-derivative of f; "displayed": the printed aggregate
    b_tilde_form: str = "derived"
    gk_second_derivative_sign: int = -1
    damping: float = 0.5
    tol: float = 1e-10
    max_iter: int = 200
    grid_points: int = 1001
    golden_tol: float = 1e-10

    def __post_init__(self):
        if self.b_tilde_form not in ("derived", "displayed"):
            raise ValueError(f"unknown b_tilde_form {self.b_tilde_form!r}")
        if self.gk_second_derivative_sign not in (-1, 1):
            raise ValueError("gk_second_derivative_sign must be -1 or +1")
        if not 0 < self.damping <= 1:
            raise ValueError("damping must lie in (0, 1]")


DEFAULT_OPTIONS = ControlOptions()


@dataclass(frozen=True)
class ControlContext:
    state: GroupState
    p_attach: float
    omega_partner: float = 0.0
    params: GroupParams = field(default_factory=GroupParams)
    icu_load: float | None = None  # total emergency-care demand; defaults to this group's h*I

    @property
    def time(self) -> float:
        return self.state.time

    @property
    def icu(self) -> float:
        return self.params.h_icu * self.state.i_comp if self.icu_load is None else self.icu_load

    def with_states(self, z, s, i, r, w) -> "ControlContext":
        st = replace(self.state, z=float(z), s_comp=float(s), i_comp=float(i), r_comp=float(r), w_prob=float(w))
        return replace(self, state=st)

    def log_domain_ok(self) -> bool:
        st = self.state
        return min(st.z, st.s_comp, st.i_comp, st.r_comp, st.w_prob) > 0


def varpi(total_icu_demand, varpi_params: VarpiParams):
    """Death probability under emergency care; capped linear in the load."""
    if varpi_params.h_capacity <= 0:
        raise ValueError("h_capacity must be positive")
    if np.any(np.asarray(total_icu_demand) < 0):
        raise ValueError("ICU demand must be non-negative")
    load = np.minimum(1.0, np.asarray(total_icu_demand, dtype=float) / varpi_params.h_capacity)
    out = varpi_params.pi_min + (varpi_params.pi_max - varpi_params.pi_min) * load
    return float(out) if np.ndim(out) == 0 else out


def cost_rate(time, z, s, i, r, e, params: GroupParams, icu_load=None):
    """Discounted social-cost integrand of one group."""
    icu = params.h_icu * i if icu_load is None else icu_load
    unemployed = params.n_pop - dyn.employment(s, i, r, e, params)
    death = params.chi_death * params.h_icu * varpi(icu, params.varpi_params) * i
    return np.exp(-params.rho_discount * time) * (params.theta_weight * z * unemployed + death)


class CostEstimate(NamedTuple):
    mean: float
    stderr: float


def social_cost(trajectories, params: Sequence[GroupParams]) -> CostEstimate:
    """Expected discounted cost over an ensemble, trapezoidal in time."""
    if not trajectories:
        raise ValueError("empty ensemble")
    totals = []
    for traj in trajectories:
        times = np.asarray(traj.times, dtype=float)
        if len(times) < 2:
            totals.append(0.0)
            continue
        x = np.asarray(traj.states, dtype=float)
        icu = sum(p.h_icu * x[:, k, 3] for k, p in enumerate(params))
        rate = sum(cost_rate(times, x[:, k, 0], x[:, k, 2], x[:, k, 3], x[:, k, 4], traj.e[:, k], p, icu)
                   for k, p in enumerate(params))
        totals.append(float(np.trapezoid(rate, times)))
    totals = np.array(totals)
    se = float(totals.std(ddof=1) / math.sqrt(len(totals))) if len(totals) > 1 else 0.0
    return CostEstimate(float(totals.mean()), se)


class GkValue(NamedTuple):
    value: float
    d_time: float
    grad: np.ndarray  # d/dX for X in (z, S, I, R, W)
    hess_diag: np.ndarray


def g_k_value(states, time, sign: int = -1) -> GkValue:
    """Logarithmic auxiliary sum over the five states and its partials.

    The second partials carry ``sign / X**2``; ``sign=-1`` follows the
    convention used by the control objective.
    """
    x = np.asarray(states, dtype=float)
    if x.shape != (5,) or np.any(x <= 0):
        raise ValueError("g_k needs five strictly positive states")
    value = float(np.sum(time * x - 1.0 - np.log(x)))
    return GkValue(value, float(x.sum()), time - 1.0 / x, sign / x**2)


def _term_coefficients(ctx: ControlContext, options: ControlOptions = DEFAULT_OPTIONS) -> dict:
    """Each objective term as a (const, coef of e, coef of e**theta) triple."""
    if not ctx.log_domain_ok():
        raise ValueError("objective needs z, S, I, R, W > 0")
    p, st = ctx.params, ctx.state
    s = LD(ctx.time)
    z, S, I, R, W = (LD(v) for v in (st.z, st.s_comp, st.i_comp, st.r_comp, st.w_prob))
    zero = LD(0)
    disc = np.exp(LD(-p.rho_discount) * s)
    workforce = LD(dyn.active_workforce(st.s_comp, st.i_comp, st.r_comp, p))
    death = LD(p.chi_death) * LD(p.h_icu) * LD(varpi(ctx.icu, p.varpi_params)) * I
    d_inc = 1 + LD(p.r_sat) * I + LD(p.eta_birth) * LD(p.n_pop)
    mass = S * I / d_inc
    ratio = LD(dyn.fatigue_pressure(st.z, ctx.p_attach, p))
    beta_const = LD(p.beta1) + LD(p.beta2) * LD(p.m_pollution) * ratio
    beta_pow = LD(p.beta2) * LD(p.m_pollution) * (1 - ratio)
    gap = LD(st.omega) - LD(ctx.omega_partner)
    q = LD(compromise_q(abs(st.omega), p))
    mu4 = LD(p.mu4)

    def log_term(x):
        return (s * x - 1 - np.log(x), zero, zero)

    half = LD(options.gk_second_derivative_sign) / 2
    diffusion = half * (LD(p.sigma0) * (z - LD(p.z_eq)) / z**2 + LD(p.sigma2) * (S - LD(p.s_eq)) / S**2
                        + LD(p.sigma3) * (I - LD(p.i_eq)) / I**2 + LD(p.sigma4) * (R - LD(p.r_eq)) / R**2
                        + LD(p.sigma8) * gap / W**2)
    wz, wS, wI, wR, wW = s - 1 / z, s - 1 / S, s - 1 / I, s - 1 / R, s - 1 / W
    eta_n = LD(p.eta_birth) * LD(p.n_pop)
    return {
        "cost_idle": (disc * LD(p.theta_weight) * z * LD(p.n_pop), zero, zero),
        "cost_employed": (zero, -disc * LD(p.theta_weight) * z * workforce, zero),
        "cost_death": (disc * death, zero, zero),
        "log_z": log_term(z), "log_S": log_term(S), "log_I": log_term(I),
        "log_R": log_term(R), "log_W": log_term(W),
        "state_sum": (z + S + I + R + W, zero, zero),
        "drift_z": (wz * (LD(p.kappa0) - LD(p.kappa1) * z * LD(ctx.p_attach)), -wz * LD(p.kappa0), zero),
        "drift_S": (wS * (eta_n - beta_const * mass - LD(p.tau_death) * S + LD(p.zeta_waning) * R),
                    zero, -wS * beta_pow * mass),
        "drift_I": (wI * (beta_const * mass - (LD(p.mu_recovery) + LD(p.tau_death)) * I),
                    zero, wI * beta_pow * mass),
        "drift_R": (wR * LD(p.mu_recovery) * I, -wR * (LD(p.tau_death) + LD(p.zeta_waning)) * R, zero),
        "drift_W": (wW * mu4 * LD(st.omega), -wW * mu4 * LD(p.varkappa) * q * gap, zero),
        "diffusion": (diffusion, zero, zero),
    }


def _poly(coefs, e, theta):
    c0, c1, c2 = coefs
    e = LD(e)
    return c0 + c1 * e + c2 * e ** LD(theta)


def f_tilde_terms(ctx: ControlContext, e: float, options: ControlOptions = DEFAULT_OPTIONS) -> dict:
    if not 0.0 <= e <= 1.0:
        raise ValueError("e must lie in [0, 1]")
    theta = ctx.params.theta_exp
    return {k: _poly(c, e, theta) for k, c in _term_coefficients(ctx, options).items()}


def f_tilde(ctx: ControlContext, e: float, options: ControlOptions = DEFAULT_OPTIONS) -> float:
    return float(sum(f_tilde_terms(ctx, e, options).values()))


class ObjectiveShape(NamedTuple):
    """f(e) = const + linear*e + power*e**theta."""

    const: np.longdouble
    linear: np.longdouble
    power: np.longdouble
    theta: float

    def delta(self, e1, e2):
        """f(e1) - f(e2) without evaluating the constant."""
        t = LD(self.theta)
        return self.linear * (LD(e1) - LD(e2)) + self.power * (LD(e1) ** t - LD(e2) ** t)


def objective_shape(ctx: ControlContext, options: ControlOptions = DEFAULT_OPTIONS) -> ObjectiveShape:
    coefs = _term_coefficients(ctx, options).values()
    c0, c1, c2 = (sum(c[j] for c in coefs) for j in range(3))
    return ObjectiveShape(c0, c1, c2, ctx.params.theta_exp)


def f_tilde_delta(ctx: ControlContext, e1: float, e2: float, options: ControlOptions = DEFAULT_OPTIONS):
    return objective_shape(ctx, options).delta(e1, e2)


def df_tilde_de(ctx: ControlContext, e: float, h: float = 1e-6, options: ControlOptions = DEFAULT_OPTIONS) -> float:
    """Central difference of the objective in e.

    Near the boundary the step shrinks to a small fraction of the distance to it,
    since e**theta is sharply curved close to zero.
    """
    h = min(h, 1e-4 * e, 1e-4 * (1 - e)) if 0 < e < 1 else h
    lo, hi = max(e - h, 0.0), min(e + h, 1.0)
    return float(f_tilde_delta(ctx, hi, lo, options) / LD(hi - lo))


class BC(NamedTuple):
    b_tilde: float
    c_tilde: float
    flags: tuple


def b_tilde_c_tilde(ctx: ControlContext, e: float, options: ControlOptions = DEFAULT_OPTIONS) -> BC:
    p, st = ctx.params, ctx.state
    s = ctx.time
    z, S, I, R, W = st.z, st.s_comp, st.i_comp, st.r_comp, st.w_prob
    gap = st.omega - ctx.omega_partner
    q = float(compromise_q(abs(st.omega), p))
    base = (math.exp(-p.rho_discount * s) * p.theta_weight * z * dyn.active_workforce(S, I, R, p)
            + (s - 1 / z) * p.kappa0 + (s - 1 / R) * (p.tau_death + p.zeta_waning) * R)
    if options.b_tilde_form == "derived":
        b = base + p.mu4 * (s - 1 / W) * p.varkappa * q * gap
    else:
        b = (base + (s - 1 / W) * (st.omega - p.varkappa * e * q * gap)
             + 0.5 * p.sigma8 * gap / W**2)
    d_inc = 1 + p.r_sat * I + p.eta_birth * p.n_pop
    c = (p.theta_exp * p.beta2 * p.m_pollution * (1 / S - 1 / I) * (S * I / d_inc)
         * (1 - float(dyn.fatigue_pressure(z, ctx.p_attach, p))))
    flags = []
    if not c > 0:
        flags.append("c_tilde_nonpositive")
    if b < 0:
        flags.append("b_tilde_negative")
    return BC(float(b), float(c), tuple(flags))


@dataclass
class EStarResult:
    e: float
    b_tilde: float = math.nan
    c_tilde: float = math.nan
    iterations: int = 0
    residual: float = 0.0
    clamped: bool = False
    flags: list = field(default_factory=list)
    local_minima: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"e": self.e, "b_tilde": self.b_tilde, "c_tilde": self.c_tilde,
                "iterations": self.iterations, "residual": self.residual,
                "clamped": self.clamped, "flags": list(self.flags)}


class FixedPointError(RuntimeError):
    pass


def e_star_numeric(ctx: ControlContext, options: ControlOptions = DEFAULT_OPTIONS) -> EStarResult:
    """Global minimiser of the objective on [0, 1]: grid scan, then golden section."""
    shape = objective_shape(ctx, options)
    grid = np.linspace(0.0, 1.0, options.grid_points)
    vals = np.array([shape.delta(g, 0.0) for g in grid])
    interior = np.flatnonzero((vals[1:-1] <= vals[:-2]) & (vals[1:-1] <= vals[2:])) + 1
    local = [float(grid[i]) for i in interior]
    i = int(np.argmin(vals))
    a, b = grid[max(i - 1, 0)], grid[min(i + 1, len(grid) - 1)]
    # golden section inside the bracket around the best grid point
    x1, x2 = b - _GOLDEN * (b - a), a + _GOLDEN * (b - a)
    f1, f2 = shape.delta(x1, 0.0), shape.delta(x2, 0.0)
    while b - a > options.golden_tol:
        if f1 <= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - _GOLDEN * (b - a)
            f1 = shape.delta(x1, 0.0)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + _GOLDEN * (b - a)
            f2 = shape.delta(x2, 0.0)
    best = 0.5 * (a + b)
    candidates = [(shape.delta(best, 0.0), best), (LD(0), 0.0), (shape.delta(1.0, 0.0), 1.0)]
    value, e = min(candidates, key=lambda c: c[0])
    return EStarResult(e=float(e), local_minima=local or [float(e)])


def e_star_closed_form(ctx: ControlContext, options: ControlOptions = DEFAULT_OPTIONS) -> EStarResult:
    """Closed-form optimum, iterated to a fixed point when B depends on e."""
    theta = ctx.params.theta_exp
    bc = b_tilde_c_tilde(ctx, 0.5, options)
    if not bc.c_tilde > 0:
        res = e_star_numeric(ctx, options)
        res.b_tilde, res.c_tilde = bc.b_tilde, bc.c_tilde
        res.flags = ["c_tilde_nonpositive", "numeric_fallback"]
        return res

    def boundary(bt):
        shape = objective_shape(ctx, options)
        e_b = 1.0 if shape.delta(1.0, 0.0) < 0 else 0.0
        return EStarResult(e=e_b, b_tilde=bt, c_tilde=bc.c_tilde, flags=["b_tilde_negative", "boundary"])

    e = 0.5
    for it in range(1, options.max_iter + 1):
        b = b_tilde_c_tilde(ctx, e, options).b_tilde
        if b < 0:
            return boundary(b)
        raw = (b / bc.c_tilde) ** (1.0 / (theta - 1.0))
        target = min(max(raw, 0.0), 1.0)
        e_next = target if it == 1 else (1 - options.damping) * e + options.damping * target
        e = e_next
        b = b_tilde_c_tilde(ctx, e, options).b_tilde
        if b < 0:
            return boundary(b)
        raw = (b / bc.c_tilde) ** (1.0 / (theta - 1.0))
        residual = abs(min(max(raw, 0.0), 1.0) - e)
        if residual <= options.tol:
            return EStarResult(e=e, b_tilde=b, c_tilde=bc.c_tilde, iterations=it,
                               residual=residual, clamped=raw > 1.0 or raw < 0.0)
    raise FixedPointError(f"no fixed point after {options.max_iter} iterations (residual {residual:.3g})")


def feedback_intensity(ctx: ControlContext, fallback: float = 1.0,
                       options: ControlOptions | None = None) -> tuple[float, list]:
    """Closed-form intensity for use inside a simulation; never raises."""
    options = options or DEFAULT_OPTIONS
    if not ctx.log_domain_ok():
        return fallback, ["log_domain", "fallback"]
    try:
        res = e_star_closed_form(ctx, options)
    except (FixedPointError, ValueError, FloatingPointError, ZeroDivisionError):
        return fallback, ["closed_form_failed", "fallback"]
    return res.e, res.flags


@dataclass(frozen=True)
class WaveValue:
    """Positive transition-function value, held as its logarithm."""

    log_psi: float
    time: float = 0.0

    @classmethod
    def from_psi(cls, psi: float, time: float = 0.0) -> "WaveValue":
        if not psi > 0:
            raise ValueError("psi must be positive")
        return cls(math.log(psi), time)

    @property
    def psi(self) -> float:
        return math.exp(self.log_psi)

    @property
    def is_positive(self) -> bool:
        # a finite logarithm is a strictly positive value, even when exp underflows
        return math.isfinite(self.log_psi)


def fp_step(psi: WaveValue, ctx: ControlContext | None, e: float, dt: float,
            f_value: float | None = None, options: ControlOptions = DEFAULT_OPTIONS) -> WaveValue:
    """Advance dPsi/ds = -f Psi over dt with f frozen."""
    if not psi.is_positive:
        raise ValueError("psi must be positive")
    f = f_tilde(ctx, e, options) if f_value is None else f_value
    return WaveValue(psi.log_psi - f * dt, psi.time + dt)


# --- action functional ------------------------------------------------------

@dataclass(frozen=True)
class Segment:
    """Single-group path on a grid: states (n, 8), intensities (n,), normals (n-1, 7)."""

    times: np.ndarray
    states: np.ndarray
    e: np.ndarray
    noise: np.ndarray


def _constraint_residuals(seg: Segment, params: GroupParams, p_attach: float, omega_partner: float):
    t = np.asarray(seg.times, dtype=float)
    x = np.asarray(seg.states, dtype=float)
    if len(t) < 2 or x.shape[0] != len(t) or len(seg.e) != len(t) or len(seg.noise) != len(t) - 1:
        raise ValueError("segment arrays do not share the time grid")
    ds = np.diff(t)
    db = np.asarray(seg.noise, dtype=float) * np.sqrt(ds)[:, None]
    z, beta, S, I, R, om, W = (x[:-1, j] for j in range(7))
    e = np.asarray(seg.e, dtype=float)[:-1]
    dS, dI, dR = dyn.sir_drift(beta, S, I, R, e, params)
    dW, gW = w_drift_diffusion(om, omega_partner, e, params)
    drift = [dyn.fatigue_drift(z, e, p_attach, params), dS, dI, dR, dW]
    diff = [dyn.fatigue_diffusion(z, params), params.sigma2 * (S - params.s_eq),
            params.sigma3 * (I - params.i_eq), params.sigma4 * (R - params.r_eq), gW]
    cols = [0, 2, 3, 4, 6]
    # noise columns: 0 z, 1 beta, 2 S, 3 I, 4 R, 5 omega, 6 W
    return [np.diff(x[:, c]) - mu * ds - g * db[:, c] for c, mu, g in zip(cols, drift, diff)]


def action_value(seg: Segment, params: GroupParams, p_attach: float, omega_partner: float = 0.0) -> float:
    """Cost integral plus multiplier-weighted constraint residuals over a segment."""
    t = np.asarray(seg.times, dtype=float)
    x = np.asarray(seg.states, dtype=float)
    residuals = _constraint_residuals(seg, params, p_attach, omega_partner)
    rate = cost_rate(t, x[:, 0], x[:, 2], x[:, 3], x[:, 4], np.asarray(seg.e, dtype=float), params)
    cost = float(np.trapezoid(rate, t))
    lambdas = (params.lambda1, params.lambda2, params.lambda3, params.lambda4, params.lambda5)
    return cost + math.fsum(lam * float(np.sum(res)) for lam, res in zip(lambdas, residuals))


def max_residual(seg: Segment, params: GroupParams, p_attach: float, omega_partner: float = 0.0) -> float:
    return max(float(np.max(np.abs(r))) for r in _constraint_residuals(seg, params, p_attach, omega_partner))


def transition_estimate(psi_field: Callable[[np.ndarray], np.ndarray], ctx: ControlContext, e: float,
                        epsilon: float, n_samples: int, seed: int) -> float:
    """Self-normalised Monte Carlo estimate of the transition function over one short step.

    States (z, S, I, R, W) are perturbed by Gaussian noise of scale sqrt(epsilon);
    each sample is weighted by exp(-epsilon * action of the straight step to it).
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    if n_samples < 1000:
        raise ValueError("need at least 1000 samples")
    p, st = ctx.params, ctx.state
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, 0x7A11])))
    center = np.array([st.z, st.s_comp, st.i_comp, st.r_comp, st.w_prob])
    samples = center + math.sqrt(epsilon) * rng.standard_normal((n_samples, 5))
    dS, dI, dR = dyn.sir_drift(st.beta, st.s_comp, st.i_comp, st.r_comp, e, p)
    dW, _ = w_drift_diffusion(st.omega, ctx.omega_partner, e, p)
    drift = np.array([dyn.fatigue_drift(st.z, e, ctx.p_attach, p), dS, dI, dR, dW])
    lambdas = np.array([p.lambda1, p.lambda2, p.lambda3, p.lambda4, p.lambda5])
    rate = cost_rate(ctx.time, st.z, st.s_comp, st.i_comp, st.r_comp, e, p, ctx.icu)
    action = epsilon * rate + (samples - center - drift * epsilon) @ lambdas
    log_w = -epsilon * action
    w = np.exp(log_w - log_w.max())
    total = w.sum()
    if not total > 0:
        raise FloatingPointError("all sample weights vanished")
    return float(np.sum(w * np.asarray(psi_field(samples), dtype=float)) / total)


# --- curvature -------------------------------------------------------------

def finite_difference_hessian(func: Callable[[np.ndarray], float], x, steps) -> np.ndarray:
    """Central-difference Hessian with per-coordinate steps."""
    x = np.asarray(x, dtype=float)
    h = np.broadcast_to(np.asarray(steps, dtype=float), x.shape)
    n = len(x)
    out = np.empty((n, n))

    def at(di, dj):
        y = x.copy()
        y += di + dj
        return LD(func(y))

    eye = np.diag(h)
    f0 = at(0.0, 0.0)
    for i in range(n):
        out[i, i] = float((at(eye[i], 0.0) - 2 * f0 + at(-eye[i], 0.0)) / LD(h[i] ** 2))
        for j in range(i + 1, n):
            v = (at(eye[i], eye[j]) - at(eye[i], -eye[j]) - at(-eye[i], eye[j])
                 + at(-eye[i], -eye[j])) / LD(4 * h[i] * h[j])
            out[i, j] = out[j, i] = float(v)
    return out


@dataclass(frozen=True)
class ThetaMatrix:
    matrix: np.ndarray
    eigenvalues: np.ndarray
    positive_semidefinite: bool
    nonsingular: bool


def theta_hessian(ctx: ControlContext, e: float, rel_step: float = 1e-3,
                  func: Callable[[np.ndarray], float] | None = None,
                  options: ControlOptions = DEFAULT_OPTIONS) -> ThetaMatrix:
    """Half the Hessian of the objective in (z, S, I, R, W), symmetrised."""
    st = ctx.state
    x = np.array([st.z, st.s_comp, st.i_comp, st.r_comp, st.w_prob])
    steps = rel_step * np.abs(x) if func is None else np.full(5, rel_step)
    if func is None:
        if np.any(x - 2 * steps <= 0) or np.any(steps == 0):
            raise ValueError("state too close to the log-domain boundary for this step")

        def func(y):
            return sum(f_tilde_terms(ctx.with_states(*y), e, options).values())

    h = 0.5 * finite_difference_hessian(func, x, steps)
    h = 0.5 * (h + h.T)
    eig = np.linalg.eigvalsh(h)
    return ThetaMatrix(h, eig, bool(eig.min() >= 0), bool(abs(np.linalg.det(h)) > 1e-12))
