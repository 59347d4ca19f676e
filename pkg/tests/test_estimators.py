import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from emula.errors import DegenerateTreatmentResiduals, NoMatches, ResampleFailure, SingleClass, ZeroControlMean
from emula.estimators import (EffectEstimate, EstimandKind, aipw, ate_aipw, ate_dml, ate_gformula, ate_ipw,
                              ate_psm, bootstrap_ci, bootstrap_samples, ipw, percentile_ci, psm)

RR = EstimandKind.RiskRatio


def test_arithmetic_examples():
    assert ate_ipw([0.5, 0.5], [1, 0], [1, 0]) == 1.0
    assert ate_dml([0, 0], [0.5, 0.5], [1, 0], [1, 0]) == 1.0
    assert ate_gformula([1, 1], [0, 0])[1] == 1
    pm, pt = ate_gformula([0.2, 0.4], [0.2, 0.4], RR)
    assert pt == 1.0 and ate_gformula([0.2, 0.4], [0.2, 0.4])[1] == 0
    with pytest.raises(ZeroControlMean):
        ate_gformula([1, 1], [0, 0], RR)


def test_clip_observable():
    f = ipw([0.001, 0.5], [1, 0], [1.0, 0.0], clip=0.01)
    assert f.e_clipped[0] == 0.01 and f.weights[0] == 100.0
    for bad in (0.0, 0.5):
        with pytest.raises(ValueError):
            ate_ipw([0.5], [1], [1], clip=bad)


def test_dml_degenerate():
    a = np.array([1, 0, 1, 0])
    with pytest.raises(DegenerateTreatmentResiduals):
        ate_dml(np.zeros(4), a.astype(float), a, np.ones(4), clip=1e-15)
    with pytest.raises(ValueError):
        ate_dml(np.zeros(4), a.astype(float), a, np.ones(4), clip=0)


def _problem(seed, n=60):
    r = np.random.default_rng(seed)
    a = (r.random(n) < 0.4).astype(int)
    a[:2] = [0, 1]
    return (r.uniform(0.02, 0.98, n), a, r.standard_normal(n), r.standard_normal(n),
            r.standard_normal(n), r.standard_normal(n))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31))
def test_algebraic_reductions(seed):
    e, a, y, mu1, mu0, _ = _problem(seed)
    m1 = np.where(a == 1, y, mu1)
    m0 = np.where(a == 0, y, mu0)
    assert abs(ate_aipw(m1, m0, e, a, y) - ate_gformula(m1, m0)[1]) <= 1e-12
    z = np.zeros_like(y)
    assert abs(ate_aipw(z, z, e, a, y) - ate_ipw(e, a, y)) <= 1e-12
    p = np.full_like(e, a.mean())
    assert abs(ate_ipw(p, a, y) - (y[a == 1].mean() - y[a == 0].mean())) <= 1e-12


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31), st.floats(-50, 50))
def test_translation_and_symmetry(seed, c):
    e, a, y, mu1, mu0, m = _problem(seed)
    for est in (lambda yy, s1, s0: ate_gformula(s1, s0)[1],
                lambda yy, s1, s0: ate_aipw(s1, s0, e, a, yy)):
        assert est(y + c, mu1 + c, mu0 + c) == pytest.approx(est(y, mu1, mu0), abs=1e-9)
    pm = aipw(mu1 + c, mu0 + c, e, a, y + c).means
    pm0 = aipw(mu1, mu0, e, a, y).means
    assert pm.m1 == pytest.approx(pm0.m1 + c, abs=1e-9) and pm.m0 == pytest.approx(pm0.m0 + c, abs=1e-9)
    assert ate_dml(m + c, e, a, y + c) == pytest.approx(ate_dml(m, e, a, y), abs=1e-9)
    # swapping the arms negates every risk-difference point
    b, f = 1 - a, 1 - e
    assert ate_ipw(f, b, y) == pytest.approx(-ate_ipw(e, a, y), abs=1e-12)
    assert ate_gformula(mu0, mu1)[1] == pytest.approx(-ate_gformula(mu1, mu0)[1], abs=1e-12)
    assert ate_aipw(mu0, mu1, f, b, y) == pytest.approx(-ate_aipw(mu1, mu0, e, a, y), abs=1e-12)
    assert ate_dml(m, f, b, y) == pytest.approx(-ate_dml(m, e, a, y), abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31), st.floats(-50, 50))
def test_dml_shift_of_m(seed, c):
    e, a, y, _, _, m = _problem(seed)
    ra = a - e
    shift = -c * ra.sum() / (ra @ ra)
    assert ate_dml(m + c, e, a, y) == pytest.approx(ate_dml(m, e, a, y) + shift, abs=1e-9)
    # with centred treatment residuals the shift vanishes
    p = np.full_like(e, a.mean())
    assert ate_dml(m + c, p, a, y) == pytest.approx(ate_dml(m, p, a, y), abs=1e-9)


def test_psm_examples():
    assert ate_psm([0.5, 0.5], [1, 0], [1.0, 0.0]) == (1.0, 1)
    e = np.full(6, 0.3)
    y = np.array([2.0, 2, 2, 2, 2, 2])
    assert ate_psm(e, [1, 1, 1, 0, 0, 0], y) == (0.0, 3)
    with pytest.raises(NoMatches):
        psm([0.5, 0.5], [1, 1], [0, 0])
    with pytest.raises(NoMatches):
        psm([0.1, 0.9, 0.5, 0.5], [1, 0, 0, 0], [0, 0, 0, 0], caliper_sd=1e-6)


def test_psm_without_replacement_and_order():
    e = np.array([0.9, 0.8, 0.85, 0.2])
    a = np.array([1, 1, 0, 0])
    r = psm(e, a, np.array([1.0, 2.0, 0.0, 0.0]), caliper_sd=10)
    # the treated unit with the larger propensity picks first
    assert r.treated_idx.tolist() == [0, 1] and r.control_idx.tolist() == [2, 3]
    assert len(set(r.control_idx.tolist())) == r.n_matched


def test_bootstrap_contracts():
    assert bootstrap_ci(lambda idx: 3.5, 10, B=7, seed=1) == (3.5, 3.5)
    assert percentile_ci([1.0, 3.0]) == pytest.approx((1.05, 2.95))
    lo, hi = percentile_ci([1.0, 3.0])
    assert 1 <= lo < hi <= 3
    f = lambda idx: float(np.mean(np.arange(20.0)[idx]))
    assert bootstrap_ci(f, 20, B=20, seed=5) == bootstrap_ci(f, 20, B=20, seed=5)
    assert np.array_equal(bootstrap_samples(f, 20, B=9, seed=5), bootstrap_samples(f, 20, B=9, seed=5, n_jobs=2))
    with pytest.raises(ValueError):
        bootstrap_ci(f, 20, B=1)


def test_bootstrap_redraw_and_failure():
    calls = []

    def flaky(idx):
        calls.append(1)
        if len(calls) % 2:
            raise SingleClass("boom")
        return 1.0

    assert bootstrap_ci(flaky, 5, B=3) == (1.0, 1.0)

    def broken(idx):
        raise SingleClass("always")

    with pytest.raises(ResampleFailure):
        bootstrap_ci(broken, 5, B=2)


def test_effect_estimate_serialization():
    e = EffectEstimate("AIPW", point=0.25, ci_low=0.1, ci_high=0.4, n_boot=50, choices={"seed": 3})
    assert e.covers(0.2) and not e.covers(0.5)
    assert e.to_json()["point"] == 0.25 and e.csv_row()[2] == "0.25"
    bad = EffectEstimate("IPW", error="SingleClass")
    assert bad.to_json()["point"] is None and not bad.covers(0.0)
