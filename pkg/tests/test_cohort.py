import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from emula.cohort import EligibilityFilter, TrialProtocol, build_cohort, sweep_eligibility
from emula.errors import ConfigError, EmptyCohort
from emula.events import EventStore

from conftest import ev, store_of

P = TrialProtocol(inclusion_code="crystalloids", treatment_code="albumin")


def test_early_death_dropped():
    s = store_of(("p1", 0, "Drug", "crystalloids"), ("p1", 10, "Outcome", "death"),
                 ("p2", 0, "Drug", "crystalloids"))
    c = build_cohort(s, P)
    assert c.patient_ids == ["p2"]
    assert c.flowchart.stages[-1][2] == 1


def test_treatment_within_window():
    s = store_of(("p1", 1, "Drug", "crystalloids"), ("p1", 7.7, "Drug", "albumin"))
    row = build_cohort(s, P).rows[0]
    assert row.a == 1 and row.t_treat_h - row.t0_h == pytest.approx(6.7)


def test_missing_inclusion_counted_at_stage_one():
    s = store_of(("p1", 0, "Drug", "crystalloids"), ("p2", 0, "Admission", "admission"))
    c = build_cohort(s, P)
    assert c.patient_ids == ["p1"]
    assert c.flowchart.stages[1] == ("has inclusion event 'crystalloids'", 1, 1)


def test_late_treatment_is_control_and_outcome_right_closed():
    s = store_of(("p1", 0, "Drug", "crystalloids"), ("p1", 30, "Drug", "albumin"),
                 ("p1", 672, "Outcome", "death"))
    row = build_cohort(s, P).rows[0]
    assert row.a == 0 and row.t_treat_h is None
    assert row.y == 1


def test_t0_is_first_inclusion_and_filter():
    s = store_of(("p1", 5, "Drug", "crystalloids"), ("p1", 9, "Drug", "crystalloids"),
                 ("p1", 1, "Measurement", "age", 70.0),
                 ("p2", 0, "Drug", "crystalloids"), ("p2", 0, "Measurement", "age", 12.0))
    c = build_cohort(s, TrialProtocol("crystalloids", "albumin", filters=[{"code": "age", "min": 18, "max": 200}]))
    assert c.patient_ids == ["p1"] and c.rows[0].t0_h == 5


def test_empty_cohort_and_bad_protocol():
    with pytest.raises(EmptyCohort):
        build_cohort(store_of(("p1", 0, "Admission", "admission")), P)
    with pytest.raises(ConfigError):
        TrialProtocol("x", "x")
    with pytest.raises(ConfigError):
        TrialProtocol("x", "y", eligibility_window_h=0)


def test_sweep_single_window_and_all_controls():
    s = store_of(("p1", 0, "Drug", "crystalloids"), ("p1", 50, "Drug", "albumin"),
                 ("p2", 0, "Drug", "crystalloids"), ("p2", 10, "Drug", "albumin"))
    one = sweep_eligibility(s, P, [24])[24.0]
    assert one.rows == build_cohort(s, P).rows
    short = sweep_eligibility(s, P, [1])[1.0]
    assert short.a.sum() == 0 and len(short) == 2


# --- properties -------------------------------------------------------------

@st.composite
def stores(draw):
    rows = []
    for i in range(draw(st.integers(1, 12))):
        pid = f"p{i}"
        if draw(st.booleans()) or i == 0:
            rows.append(ev(pid, draw(st.floats(0, 10)), "Drug", "crystalloids"))
        if draw(st.booleans()):
            rows.append(ev(pid, draw(st.floats(0, 120)), "Drug", "albumin"))
        if draw(st.booleans()):
            rows.append(ev(pid, draw(st.floats(0, 800)), "Outcome", "death"))
    return rows


@settings(max_examples=80, deadline=None)
@given(stores(), stores())
def test_cohort_invariants(rows, extra):
    s = EventStore(rows)
    try:
        c = build_cohort(s, P)
    except EmptyCohort:
        return
    fc = c.flowchart
    rem = [r for _, r, _ in fc.stages]
    assert rem == sorted(rem, reverse=True)
    assert fc.initial == fc.final + sum(d for _, _, d in fc.stages)
    for r in c.rows:
        if r.a:
            assert r.t0_h <= r.t_treat_h < r.t0_h + P.eligibility_window_h
        if r.y:
            assert r.t0_h <= r.t_outcome_h <= r.t0_h + P.outcome_horizon_h
    # monotone selection: extra patients never remove anyone
    renamed = [ev("x" + e.patient_id, e.time_h, e.kind, e.code, e.value) for e in extra]
    bigger = build_cohort(EventStore(rows + renamed), P)
    assert set(c.patient_ids) <= set(bigger.patient_ids)
    # treated counts grow with the window
    counts = [int(x.a.sum()) for x in sweep_eligibility(s, P, [24, 48, 72]).values()]
    assert counts == sorted(counts)
    gaps = [x.mean_treatment_gap_h() for x in sweep_eligibility(s, P, [24, 48, 72]).values()]
    assert all(np.isfinite(gaps))
