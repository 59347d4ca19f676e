import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from emula.dag import CausalDag, VariableRole, classify_variables, require_valid_adjustment, validate_adjustment_set
from emula.errors import AdjustmentViolation, CyclicGraph, UnknownNode

R = VariableRole


def dag(*edges, nodes=()):
    return CausalDag.from_edges(edges, "A", "Y", nodes)


def test_roles_basic():
    assert classify_variables(dag(("X", "A"), ("X", "Y"), ("A", "Y")))["X"] is R.Confounder
    assert classify_variables(dag(("A", "M"), ("M", "Y")))["M"] is R.Mediator
    assert classify_variables(dag(("A", "C"), ("Y", "C"), ("A", "Y")))["C"] is R.Collider
    roles = classify_variables(dag(("Z", "A"), ("A", "Y"), ("P", "Y"), nodes=("U",)))
    assert roles["Z"] is R.Instrument
    assert roles["P"] is R.Other and roles["U"] is R.Other


def test_validate_examples():
    tri = dag(("X", "A"), ("X", "Y"), ("A", "Y"))
    assert validate_adjustment_set(tri, {"X"}) == []
    assert validate_adjustment_set(tri, set()) == []
    assert validate_adjustment_set(dag(("A", "M"), ("M", "Y")), {"M"}) == [("M", R.Mediator)]
    with pytest.raises(UnknownNode):
        validate_adjustment_set(tri, {"Q"})
    with pytest.raises(AdjustmentViolation) as info:
        require_valid_adjustment(dag(("A", "C"), ("Y", "C")), ["C"])
    assert info.value.violations == [("C", "Collider")]


def test_cycles_and_bad_nodes():
    with pytest.raises(CyclicGraph):
        dag(("A", "B"), ("B", "A"), ("A", "Y"))
    with pytest.raises(UnknownNode):
        CausalDag.from_edges([("A", "B")], "A", "Y")


def test_json_round_trip():
    d = dag(("X", "A"), ("A", "Y"), nodes=("lonely",))
    assert CausalDag.from_json(d.to_json()) == d


NAMES = ["n0", "n1", "n2", "n3", "n4", "A", "Y"]


@st.composite
def dags(draw):
    # edges only go forward in a random topological order -> acyclic
    order = draw(st.permutations(NAMES))
    edges = set()
    for i in range(len(order)):
        for j in range(i + 1, len(order)):
            if draw(st.booleans()):
                edges.add((order[i], order[j]))
    return CausalDag.from_edges(edges, "A", "Y", NAMES)


@settings(max_examples=80, deadline=None)
@given(dags())
def test_role_partition_and_relabel(d):
    roles = classify_variables(d)
    assert set(roles) == set(NAMES) - {"A", "Y"}
    rename = {n: f"v_{n}" for n in NAMES if n not in ("A", "Y")}
    rename.update(A="A", Y="Y")
    d2 = CausalDag.from_edges([(rename[u], rename[v]) for u, v in d.edges], "A", "Y", rename.values())
    roles2 = classify_variables(d2)
    assert all(roles2[rename[n]] is r for n, r in roles.items())


@settings(max_examples=80, deadline=None)
@given(dags(), st.sets(st.sampled_from(NAMES[:5])), st.sets(st.sampled_from(NAMES[:5])))
def test_validation_monotone(d, s1, s2):
    v1 = set(validate_adjustment_set(d, s1))
    v12 = set(validate_adjustment_set(d, s1 | s2))
    assert v1 <= v12
