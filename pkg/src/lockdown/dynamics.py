"""Drift and diffusion coefficients of the fatigue, infection-rate and SIR equations.

All functions are elementwise: arguments may be floats or numpy arrays, and
``params`` may be a single GroupParams or a stacked parameter set
(see ``stack_params``) whose attributes are per-group arrays.
"""

from __future__ import annotations

from dataclasses import fields
from types import SimpleNamespace
from typing import NamedTuple, Sequence

import numpy as np

from lockdown.model import IBETA, II, IR, IS, IZ, GroupParams


def stack_params(groups: Sequence[GroupParams]) -> SimpleNamespace:
    """Turn per-group parameters into one namespace of (K,) arrays."""
    out = {}
    for f in fields(GroupParams):
        vals = [getattr(g, f.name) for g in groups]
        if f.name == "varpi_params":
            for sub in ("pi_min", "pi_max", "h_capacity"):
                out[sub] = np.array([getattr(v, sub) for v in vals], dtype=float)
        elif f.name == "compromise":
            out["q_linear"] = np.array([v == "linear" for v in vals])
        else:
            out[f.name] = np.array(vals, dtype=float)
    return SimpleNamespace(**out)


def fatigue_drift(z, e, p_attach, params):
    return params.kappa0 * (1.0 - e) - params.kappa1 * z * p_attach


def fatigue_diffusion(z, params):
    return params.sigma0 * (z - params.z_eq)


def z_max(params, p_attach):
    """Fatigue ceiling reached under full lockdown."""
    denom = params.kappa1 * p_attach
    if np.any(np.asarray(denom) == 0):
        raise ZeroDivisionError("z_max needs kappa1 > 0 and p_attach > 0")
    return params.kappa0 / denom


def fatigue_pressure(z, p_attach, params):
    """kappa0 z^gamma / (kappa1 p): the share of the infection slope driven by fatigue."""
    if np.any(np.asarray(p_attach) <= 0):
        raise ValueError("p_attach must be positive")
    return params.kappa0 * np.power(z, params.gamma_fatigue) / (params.kappa1 * p_attach)


def infection_rate_drift(z, e, p_attach, params):
    e_pow = np.power(e, params.theta_exp)
    ratio = fatigue_pressure(z, p_attach, params)
    return params.beta1 + params.beta2 * params.m_pollution * (e_pow + ratio * (1.0 - e_pow))


def infection_rate_diffusion(params):
    # constant diffusion coefficient, scaled by the pollution factor
    return params.sigma1 * params.m_pollution


def incidence(beta, s_comp, i_comp, params):
    return beta * s_comp * i_comp / (1.0 + params.r_sat * i_comp + params.eta_birth * params.n_pop)


def sir_drift(beta, s_comp, i_comp, r_comp, e, params):
    """(dS, dI, dR) drifts; the incidence term is computed once and shared."""
    inc = incidence(beta, s_comp, i_comp, params)
    ds = params.eta_birth * params.n_pop - inc - params.tau_death * s_comp + params.zeta_waning * r_comp
    di = inc - (params.mu_recovery + params.tau_death) * i_comp
    dr = params.mu_recovery * i_comp - (params.tau_death + params.zeta_waning) * e * r_comp
    return ds, di, dr


def active_workforce(s_comp, i_comp, r_comp, params):
    """Workforce available at full intensity, the bracket multiplied by e in the employment formula."""
    infected_share = (1.0 - params.h_icu * params.tau_icu_hat * params.f_hat_cap
                      - (1.0 - params.h_icu) * params.tau_noicu * params.f_p0)
    return s_comp + infected_share * i_comp + (1.0 - params.tau_rejoin) * params.tau_reinfect * r_comp


def employment(s_comp, i_comp, r_comp, e, params):
    rejoined = params.tau_rejoin * (1.0 - params.tau_reinfect) * r_comp
    return e * active_workforce(s_comp, i_comp, r_comp, params) + rejoined


class DriftVector(NamedTuple):
    dz: float
    dbeta: float
    dS: float
    dI: float
    dR: float


class DiffusionDiagonal(NamedTuple):
    g_z: float
    g_beta: float
    g_S: float
    g_I: float
    g_R: float


def full_drift_diffusion(state, e, p_attach, params):
    """Drift and diagonal diffusion of (z, beta, S, I, R) for one group.

    ``state`` is a GroupState or an array in STATE_FIELDS order.
    """
    x = state.as_array() if hasattr(state, "as_array") else np.asarray(state, dtype=float)
    z, beta, s, i, r = x[IZ], x[IBETA], x[IS], x[II], x[IR]
    ds, di, dr = sir_drift(beta, s, i, r, e, params)
    drift = DriftVector(
        float(fatigue_drift(z, e, p_attach, params)),
        float(infection_rate_drift(z, e, p_attach, params)),
        float(ds), float(di), float(dr),
    )
    diffusion = DiffusionDiagonal(
        float(fatigue_diffusion(z, params)),
        float(infection_rate_diffusion(params)),
        float(params.sigma2 * (s - params.s_eq)),
        float(params.sigma3 * (i - params.i_eq)),
        float(params.sigma4 * (r - params.r_eq)),
    )
    if not all(np.isfinite(drift)) or not all(np.isfinite(diffusion)):
        raise FloatingPointError("non-finite drift or diffusion")
    return drift, diffusion
