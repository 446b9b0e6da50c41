import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lockdown import opinion as op
from lockdown.model import GroupParams


def test_opinion_pair_examples():
    p = GroupParams(varkappa=0.3, compromise="constant", sigma8=0.05)
    r = op.opinion_pair_drift_diffusion(0.0, 0.0, 0.7, 0.7, p)
    assert tuple(r) == (0.0, 0.0, 0.0, 0.0)
    r = op.opinion_pair_drift_diffusion(0.4, -0.3, 0.0, 0.0, p)
    assert r.drift_k == 0.4 and r.diffusion_k == 0.0
    r = op.opinion_pair_drift_diffusion(0.5, -0.5, 1.0, 1.0, p)
    assert r.drift_k == pytest.approx(0.2, abs=1e-15)
    assert r.diffusion_k == pytest.approx(0.05 * 1.0)
    assert r.drift_l == pytest.approx(-0.2, abs=1e-15)


def test_linear_compromise_shrinks_with_extremity():
    p = GroupParams()
    assert op.compromise_q(0.0, p) == 1.0
    assert op.compromise_q(0.75, p) == pytest.approx(0.25)
    assert op.compromise_q(0.75, p.replace(compromise="constant")) == 1.0


def test_w_examples():
    p = GroupParams(mu4=1.0, varkappa=0.3, compromise="constant")
    assert op.w_drift_diffusion(0.4, 0.0, 0.5, p)[0] == pytest.approx(0.34, abs=1e-15)
    drift, diff = op.w_drift_diffusion(0.3, 0.3, 0.9, p.replace(mu4=2.0))
    assert drift == pytest.approx(0.6) and diff == 0.0
    assert op.w_drift_diffusion(0.4, -0.2, 0.5, p.replace(mu4=0.0))[0] == 0.0


def test_posterior_examples():
    assert op.posterior_p(0.0, 0.3) == pytest.approx(0.3, abs=1e-15)
    assert op.posterior_p(1.0, 0.3) == 0.0
    assert op.posterior_p(0.5, 0.5) == pytest.approx(1 / 3, abs=1e-15)
    for bad in ((-0.1, 0.3), (1.1, 0.3), (0.5, 0.0), (0.5, 1.0)):
        with pytest.raises(ValueError):
            op.posterior_p(*bad)


def test_tolerance_examples():
    assert op.tolerance_rate(1.0) == 1.0
    assert op.tolerance_rate(0.0, p0=0.3) == pytest.approx(0.3, abs=1e-15)
    assert op.tolerance_rate(0.5, op.CostDistribution(), p0=0.5) == pytest.approx(2 / 3, abs=1e-15)


def test_beta_cost_distribution():
    d = op.CostDistribution("beta", 0.0, 1.0, 2.0, 2.0)
    # Beta(2, 2) cdf is 3u^2 - 2u^3
    assert d.cdf(0.3) == pytest.approx(3 * 0.09 - 2 * 0.027, abs=1e-14)
    with pytest.raises(ValueError):
        op.CostDistribution("beta", a=0.5)
    with pytest.raises(ValueError):
        op.CostDistribution(c_lower=0.6, c_upper=0.4)


def test_measure_validation():
    with pytest.raises(ValueError):
        op.DiscreteMeasure(("a", "b"), (0.5, 0.6))
    with pytest.raises(ValueError):
        op.DiscreteMeasure(("a", "a"), (0.5, 0.5))
    with pytest.raises(ValueError):
        op.DiscreteMeasure(("a", "b"), (1.5, -0.5))


def test_tv_examples(oracle):
    mu = op.DiscreteMeasure(("a", "b"), (0.7, 0.3))
    nu = op.DiscreteMeasure(("a", "b"), (0.4, 0.6))
    ref = oracle["tv_two_atoms"]
    got = op.tv_forms(mu, nu)
    assert got == pytest.approx((ref["sup_form"], ref["coupling_form"], ref["partition_form"]), abs=1e-15)
    assert op.tv_forms(mu, mu) == (0.0, 0.0, 0.0)
    a, b = op.DiscreteMeasure(("x",), (1.0,)), op.DiscreteMeasure(("y",), (1.0,))
    assert op.tv_forms(a, b) == (1.0, 1.0, 1.0)


def _partitions(items):
    if not items:
        yield []
        return
    head, rest = items[0], items[1:]
    for part in _partitions(rest):
        yield [[head]] + part
        for i in range(len(part)):
            yield part[:i] + [[head] + part[i]] + part[i + 1:]


measures = st.integers(1, 5).flatmap(
    lambda n: st.tuples(*[st.tuples(st.floats(0.01, 1), st.floats(0.01, 1)) for _ in range(n)]))


@settings(max_examples=60, deadline=None)
@given(measures)
def test_tv_forms_match_brute_force(pairs):
    m = np.array([a for a, _ in pairs])
    n = np.array([b for _, b in pairs])
    atoms = tuple(range(len(pairs)))
    mu = op.DiscreteMeasure(atoms, tuple(m / m.sum()))
    nu = op.DiscreteMeasure(atoms, tuple(n / n.sum()))
    forms = op.tv_forms(mu, nu)
    # sup over {-1, 1}-valued test functions, halved
    diffs = np.array(mu.weights) - np.array(nu.weights)
    sup = max(abs(float(np.dot(diffs, s))) / 2 for s in itertools.product((-1, 1), repeat=len(atoms)))
    inf_partition = min(op.partition_min_mass(mu, nu, part) for part in _partitions(list(atoms)))
    assert forms.sup_form == pytest.approx(sup, abs=1e-12)
    assert forms.partition_form == pytest.approx(1 - inf_partition, abs=1e-12)
    assert forms.max_discrepancy <= 1e-12
    assert 0.0 <= forms.coupling_form <= 1.0 + 1e-15


def test_tv_disjoint_supports_align():
    mu = op.DiscreteMeasure(("a", "b"), (0.5, 0.5))
    nu = op.DiscreteMeasure(("b", "c"), (0.25, 0.75))
    forms = op.tv_forms(mu, nu)
    assert forms.coupling_form == pytest.approx(0.75)
    assert forms.max_discrepancy <= 1e-15
    assert math.isclose(op.partition_min_mass(mu, nu, [["a", "b", "c"]]), 1.0)
