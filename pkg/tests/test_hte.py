import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from emula.errors import DegenerateTreatmentResiduals, DimensionMismatch, EmptyStratum
from emula.estimators import ate_dml
from emula.hte import (SubgroupRule, box_stats, fit_cate_dml, predict_cate, run_hte, stratified_split,
                       subgroup_summary)
from emula.pipeline import EstimationConfig
from emula.synthgen import ScenarioSpec, default_protocol, generate


def _resid(seed, n=80, p=3):
    r = np.random.default_rng(seed)
    a = (r.random(n) < 0.5).astype(float)
    e = r.uniform(0.1, 0.9, n)
    m = r.standard_normal(n)
    x = r.standard_normal((n, p))
    y = m + (a - e) * (1 + x[:, 0]) + 0.3 * r.standard_normal(n)
    return a, e, m, x, y


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31))
def test_intercept_only_is_dml(seed):
    a, e, m, _, y = _resid(seed)
    model = fit_cate_dml(y - m, a - e, np.empty((a.size, 0)))
    assert model.intercept == pytest.approx(ate_dml(m, e, a, y), abs=1e-12)
    huge = fit_cate_dml(y - m, a - e, _resid(seed)[3], alpha=1e12)
    assert np.all(np.abs(huge.coef) < 1e-6)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31), st.lists(st.floats(0.01, 100), min_size=3, max_size=3),
       st.lists(st.floats(-100, 100), min_size=3, max_size=3), st.floats(0.0, 10.0))
def test_affine_equivariance(seed, scale, shift, alpha):
    a, e, m, x, y = _resid(seed)
    x2 = x * np.asarray(scale) + np.asarray(shift)
    m1 = fit_cate_dml(y - m, a - e, x, alpha)
    m2 = fit_cate_dml(y - m, a - e, x2, alpha)
    assert np.allclose(predict_cate(m1, x), predict_cate(m2, x2), atol=1e-8)


def test_recovers_linear_cate():
    a, e, m, x, y = _resid(0, n=4000)
    model = fit_cate_dml(y - m, a - e, x, alpha=1e-6)
    assert model.intercept == pytest.approx(1, abs=0.1)
    assert model.coef[0] == pytest.approx(1, abs=0.1) and np.all(np.abs(model.coef[1:]) < 0.1)


def test_errors():
    with pytest.raises(DegenerateTreatmentResiduals):
        fit_cate_dml(np.ones(4), np.zeros(4), np.ones((4, 1)))
    with pytest.raises(DimensionMismatch):
        fit_cate_dml(np.ones(4), np.ones(3), np.ones((4, 1)))
    model = fit_cate_dml(np.arange(4.0), np.array([1, -1, 1, -1.0]), np.arange(8.0).reshape(4, 2))
    with pytest.raises(DimensionMismatch):
        predict_cate(model, np.ones((2, 3)))


def test_box_example_and_whiskers():
    b = box_stats([4, 2, 1, 3])
    assert (b.q25, b.median, b.q75, b.lo_whisker, b.hi_whisker) == (1.75, 2.5, 3.25, 1, 4)
    out = box_stats([1, 2, 3, 4, 100])
    assert out.hi_whisker == 4 and out.lo_whisker == 1


def test_subgroup_summary_and_empty():
    rep = subgroup_summary([1.0, 2.0, 3.0, 4.0], {"g": [1, 1, 0, 0]})
    assert [b.stratum for b in rep.boxes] == [1, 0]
    assert rep.get("g", 1).median == 1.5 and rep.get("g", 0).median == 3.5
    with pytest.raises(EmptyStratum):
        subgroup_summary([1.0, 2.0], {"g": [1, 1]})


def test_stratified_split():
    a = np.array([1] * 30 + [0] * 70)
    tr, te = stratified_split(a, 0.2, seed=1)
    assert np.intersect1d(tr, te).size == 0 and tr.size + te.size == 100
    assert a[te].sum() == 6 and te.size == 20
    assert np.array_equal(te, stratified_split(a, 0.2, seed=1)[1])


def test_run_hte_end_to_end():
    spec = ScenarioSpec("HeterogeneousLinear", n=3000, seed=4, tau=(1.0, 2.0))
    store, _ = generate(spec)
    res = run_hte(store, default_protocol(spec), EstimationConfig(estimator="DML", seed=4, n_iter=3))
    assert len(res.test_ids) == res.predictions.size == res.test_rows.size
    assert np.intersect1d(res.train_rows, res.test_rows).size == 0
    assert res.model.coef[0] == pytest.approx(2.0, abs=0.6)
    hi, lo = res.report.get("x1", 1), res.report.get("x1", 0)
    assert hi.median > lo.median
    custom = run_hte(store, default_protocol(spec), EstimationConfig(estimator="DML", seed=4, n_iter=3),
                     groups={"high": SubgroupRule("x1", 1.0)})
    assert custom.report.get("high", 1).n < hi.n
