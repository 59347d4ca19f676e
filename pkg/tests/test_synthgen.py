import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from emula.cohort import build_cohort, sweep_eligibility
from emula.errors import BadSpec
from emula.events import events_to_csv
from emula.pipeline import EstimationConfig, analysis_data, estimate
from emula.synthgen import GroundTruth, Scenario, ScenarioSpec, default_protocol, generate, oracle_ate


def gt_of(y0, y1):
    n = len(y0)
    return GroundTruth([f"p{i}" for i in range(n)], np.zeros(n, int), np.asarray(y0, float),
                       np.asarray(y1, float), np.full(n, 0.5))


def test_oracle_examples():
    assert oracle_ate(gt_of([1, 0, 1], [1, 0, 1])) == 0
    assert oracle_ate(gt_of([0, 1, 2], [1, 2, 3])) == 1
    assert oracle_ate(gt_of([0, 0, 0], [1, 0, 1])) == pytest.approx(2 / 3, abs=1e-15)


@pytest.mark.parametrize("name", ["LinearConfounding", "NonlinearConfounding", "HeterogeneousLinear", "Shortcut"])
def test_tau_zero_gives_zero_oracle(name):
    _, gt = generate(ScenarioSpec(name, n=500, seed=3, tau=0.0))
    assert gt.ate_oracle == 0.0


def test_zero_confounding_is_randomized():
    _, gt = generate(ScenarioSpec("LinearConfounding", n=200, knobs={"confounding": 0.0}))
    assert np.all(gt.e_true == 0.5)


def test_oracle_is_mean_of_differences():
    _, gt = generate(ScenarioSpec("LinearConfounding", n=10000, d=10, tau=2.0, seed=7))
    assert gt.ate_oracle == float(np.mean(gt.y1 - gt.y0))


@pytest.mark.parametrize("bad", [
    dict(name="Nope", n=10), dict(name="LinearConfounding", n=1),
    dict(name="LinearConfounding", n=10, knobs={"confounding": [1.0, 2.0]}),
    dict(name="LinearConfounding", n=10, knobs={"unknown": 1}),
    dict(name="LinearConfounding", n=10, tau=(1.0, 2.0)),
    dict(name="ImmortalTime", n=10, tau=1.0),
])
def test_bad_specs(bad):
    with pytest.raises(BadSpec):
        generate(ScenarioSpec(**bad))


@settings(max_examples=12, deadline=None)
@given(st.sampled_from(list(Scenario)), st.integers(0, 2**32))
def test_deterministic_consistent_and_overlapping(name, seed):
    spec = ScenarioSpec.default(name, n=300, seed=seed)
    s1, g1 = generate(spec)
    s2, g2 = generate(spec)
    assert events_to_csv(s1) == events_to_csv(s2)
    for f in ("a", "y0", "y1", "e_true"):
        assert np.array_equal(getattr(g1, f), getattr(g2, f))
    assert np.array_equal(g1.y, np.where(g1.a == 1, g1.y1, g1.y0))
    assert 0.01 < g1.e_true.min() and g1.e_true.max() < 0.99


def test_spec_round_trip():
    spec = ScenarioSpec("HeterogeneousLinear", n=50, tau=(1.0, 2.0), knobs={"noise": 0.5})
    assert ScenarioSpec.from_dict(spec.to_dict()) == spec


def _naive(store, protocol):
    c = build_cohort(store, protocol)
    a, y = c.a, c.y
    return y[a == 1].mean() - y[a == 0].mean()


def test_immortal_time_oracle_zero_and_naive_negative():
    signs = []
    for seed in range(20):
        spec = ScenarioSpec("ImmortalTime", n=2000, seed=seed, tau=0.0)
        store, gt = generate(spec)
        assert gt.ate_oracle == 0.0
        c = sweep_eligibility(store, default_protocol(spec), [72])[72.0]
        signs.append(c.y[c.a == 1].mean() - c.y[c.a == 0].mean() < 0)
    # sign test: with a wide grace window treatment looks protective in most seeds
    assert sum(signs) >= 17


def test_immortal_time_fast_treatment_has_no_gap():
    spec = ScenarioSpec("ImmortalTime", n=20000, seed=1, tau=0.0, knobs={"delay_rate": 1e6})
    store, _ = generate(spec)
    assert abs(_naive(store, default_protocol(spec))) < 0.03


def test_immortal_time_default_contrast_is_negative():
    spec = ScenarioSpec("ImmortalTime", n=10000, seed=0, tau=0.0)
    store, _ = generate(spec)
    cs = sweep_eligibility(store, default_protocol(spec), [24, 72])
    gap = [c.y[c.a == 1].mean() - c.y[c.a == 0].mean() for c in cs.values()]
    assert gap[1] < gap[0] and gap[1] < -0.03


def test_selection_bias_treated_always_coded():
    _, gt = generate(ScenarioSpec("SelectionBias", n=2000, seed=1, knobs={"coding": 3.0, "coding_intercept": -2}))
    assert gt.observed[gt.a == 1].all()
    assert not gt.observed[gt.a == 0].all()


def test_selection_bias_gamma_zero_is_consistent():
    spec = ScenarioSpec("SelectionBias", n=10000, seed=2, tau=1.0)
    store, gt = generate(spec)
    cohort = build_cohort(store, default_protocol(spec))
    r, _ = estimate(analysis_data(store, cohort), EstimationConfig(n_boot=0))
    assert abs(r.point - gt.ate_oracle) < 0.05


def test_selection_bias_large_gamma_inflates_benefit():
    base = dict(n=10000, seed=4, tau=1.0)
    naive = {}
    for g in (0.0, 3.0):
        spec = ScenarioSpec("SelectionBias", knobs={"coding": g}, **base)
        store, _ = generate(spec)
        naive[g] = _naive(store, default_protocol(spec))
    # severe controls are over-represented, so treatment looks better than it is
    assert naive[3.0] < naive[0.0]
