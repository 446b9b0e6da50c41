import math

import numpy as np
import pytest
from oracle_support import params_state

from lockdown.model import (STATE_FIELDS, ConstantPolicy, FeedbackPolicy, GroupParams, GroupState,
                            ParamValidationError, PiecewisePolicy, SimConfig, VarpiParams, policy_eval,
                            policy_from_dict, stack_states, validate_params)


def test_defaults_validate():
    p = GroupParams()
    assert validate_params(p) is p


def test_theta_boundary_rejected():
    with pytest.raises(ParamValidationError) as info:
        validate_params(GroupParams(theta_exp=1.0))
    assert "theta_exp > 1" in str(info.value)


def test_hat_cap_rejected():
    with pytest.raises(ParamValidationError) as info:
        validate_params(GroupParams(f_hat_cap=0.6))
    assert "f_hat_cap < 0.5" in str(info.value)


def test_all_violations_reported_together():
    with pytest.raises(ParamValidationError) as info:
        validate_params(GroupParams(theta_exp=0.5, h_icu=2.0, kappa0=-1.0, n_pop=0.0))
    names = " ".join(name for name, _ in info.value.violations)
    for part in ("theta_exp", "h_icu", "kappa0", "n_pop"):
        assert part in names


@pytest.mark.parametrize("field,value", [("varkappa", 0.5), ("gamma_fatigue", 1.0), ("rho_discount", 0.0),
                                         ("sigma0", math.nan), ("compromise", "cubic")])
def test_individual_constraints(field, value):
    with pytest.raises(ParamValidationError):
        validate_params(GroupParams(**{field: value}))


def test_varpi_params_checked():
    with pytest.raises(ParamValidationError):
        validate_params(GroupParams(varpi_params=VarpiParams(pi_min=0.3, pi_max=0.2)))


def test_replace_and_dict_roundtrip():
    p = GroupParams().replace(kappa0=0.7)
    assert p.kappa0 == 0.7
    d = p.to_dict()
    assert d["kappa0"] == 0.7 and "pi_min" in str(d)


def test_state_array_roundtrip():
    st = GroupState(z=0.3, beta=0.02, s_comp=5, i_comp=6, r_comp=7, omega=-0.2, w_prob=0.4, d_comp=1)
    x = st.as_array()
    assert len(x) == len(STATE_FIELDS) == 8
    assert GroupState.from_array(x, time=2.0) == GroupState(**{**st.__dict__, "time": 2.0})
    assert stack_states([st, st]).shape == (2, 8)


@pytest.mark.parametrize("kw", [dict(s_comp=-1.0), dict(omega=1.5), dict(w_prob=-0.1), dict(z=math.nan)])
def test_state_check(kw):
    with pytest.raises(ValueError):
        GroupState(**kw).check()


def test_sim_config():
    assert SimConfig(t_horizon=2.0, dt=0.01).n_steps == 200
    with pytest.raises(ValueError):
        SimConfig(t_horizon=1.0, dt=0.3).n_steps
    for bad in (dict(dt=0.0), dict(n_paths=0), dict(noise_mode="x"), dict(positivity="x"),
                dict(beta_mode="x"), dict(t_horizon=0.1, dt=0.2)):
        with pytest.raises(ValueError):
            SimConfig(**bad)


def test_constant_policy():
    assert policy_eval(ConstantPolicy(0.7), 3.0, GroupState(), GroupParams()) == 0.7
    with pytest.raises(ValueError):
        ConstantPolicy(1.2)


def test_piecewise_policy():
    pol = PiecewisePolicy([(0, 1.0), (5, 0.3)])
    st, p = GroupState(), GroupParams()
    assert policy_eval(pol, 6.0, st, p) == 0.3
    assert policy_eval(pol, 5.0, st, p) == 0.3  # right-continuous
    assert policy_eval(pol, 4.999, st, p) == 1.0
    with pytest.raises(ValueError):
        PiecewisePolicy([(1, 0.5), (1, 0.2)])


def test_policy_time_outside_horizon():
    with pytest.raises(ValueError):
        policy_eval(ConstantPolicy(0.5), 11.0, GroupState(), GroupParams(), t_horizon=10.0)
    with pytest.raises(ValueError):
        policy_eval(ConstantPolicy(0.5), -1.0, GroupState(), GroupParams())


def test_feedback_matches_closed_form(oracle):
    from lockdown.control import ControlContext, e_star_closed_form

    c = oracle["control"]["interior"]["context"]
    params, st = params_state(c)
    ctx = ControlContext(st, c["p_attach"], c["omega_partner"], params)
    expected = e_star_closed_form(ctx).e
    got = policy_eval(FeedbackPolicy(), st.time, st, params, p_attach=c["p_attach"],
                      omega_partner=c["omega_partner"])
    assert got == pytest.approx(expected, abs=1e-12)


def test_feedback_falls_back_outside_log_domain():
    st = GroupState(z=0.0)
    assert policy_eval(FeedbackPolicy(fallback=0.25), 0.0, st, GroupParams(), p_attach=0.5) == 0.25


def test_policy_from_dict():
    assert policy_from_dict({"kind": "constant", "e": 0.2}) == ConstantPolicy(0.2)
    assert policy_from_dict({"kind": "piecewise", "breakpoints": [[0, 1], [2, 0]]}).value(3) == 0.0
    assert isinstance(policy_from_dict({"kind": "closed_form_feedback"}), FeedbackPolicy)
    with pytest.raises(ValueError):
        policy_from_dict({"kind": "bang_bang"})


def test_stack_states_dtype():
    assert stack_states([GroupState()]).dtype == np.float64
