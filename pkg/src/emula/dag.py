"""Causal DAGs: variable roles and adjustment-set validation."""
from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum

from .errors import AdjustmentViolation, CyclicGraph, UnknownNode


class VariableRole(str, Enum):
    Confounder = "Confounder"
    Mediator = "Mediator"
    Collider = "Collider"
    Instrument = "Instrument"
    Other = "Other"


BAD_ROLES = (VariableRole.Mediator, VariableRole.Collider, VariableRole.Instrument)


@dataclass(frozen=True)
class CausalDag:
    nodes: frozenset
    edges: frozenset
    treatment: str
    outcome: str

    def __post_init__(self):
        nodes = frozenset(self.nodes) | {n for e in self.edges for n in e}
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "edges", frozenset(tuple(e) for e in self.edges))
        for role, node in (("treatment", self.treatment), ("outcome", self.outcome)):
            if node not in nodes:
                raise UnknownNode(f"{role} {node!r} is not a node")
        if self.treatment == self.outcome:
            raise UnknownNode("treatment and outcome must differ")
        _check_acyclic(nodes, self.edges)

    @classmethod
    def from_edges(cls, edges, treatment, outcome, nodes=()):
        return cls(frozenset(nodes), frozenset(tuple(e) for e in edges), treatment, outcome)

    @classmethod
    def from_json(cls, obj) -> CausalDag:
        if isinstance(obj, (str, bytes)):
            obj = json.loads(obj)
        return cls.from_edges(obj["edges"], obj["treatment"], obj["outcome"], obj.get("nodes", ()))

    def to_json(self) -> dict:
        return {"nodes": sorted(self.nodes), "edges": sorted(list(e) for e in self.edges),
                "treatment": self.treatment, "outcome": self.outcome}

    def children(self):
        out = {n: set() for n in self.nodes}
        for u, v in self.edges:
            out[u].add(v)
        return out


def _check_acyclic(nodes, edges):
    indeg = {n: 0 for n in nodes}
    ch = {n: [] for n in nodes}
    for u, v in edges:
        indeg[v] += 1
        ch[u].append(v)
    stack = [n for n, k in indeg.items() if k == 0]
    seen = 0
    while stack:
        n = stack.pop()
        seen += 1
        for c in ch[n]:
            indeg[c] -= 1
            if indeg[c] == 0:
                stack.append(c)
    if seen != len(nodes):
        raise CyclicGraph("graph contains a directed cycle")


def _reach(start, adj, blocked=frozenset()):
    """Nodes reachable from ``start`` (exclusive) without passing through ``blocked``."""
    seen = set()
    stack = [start]
    while stack:
        n = stack.pop()
        for m in adj.get(n, ()):
            if m not in seen and m not in blocked:
                seen.add(m)
                stack.append(m)
    return seen


def classify_variables(dag: CausalDag) -> dict[str, VariableRole]:
    """Assign one role to every node other than treatment and outcome.

    Confounder: ancestor of both treatment and outcome, not a descendant of
    treatment. Mediator: descendant of treatment and ancestor of outcome.
    Collider: descendant of both. Instrument: ancestor of treatment whose every
    directed path to the outcome goes through the treatment. Anything else is
    Other (e.g. pure outcome causes, which are safe to adjust for).
    """
    ch = dag.children()
    par = {n: set() for n in dag.nodes}
    for u, v in dag.edges:
        par[v].add(u)
    A, Y = dag.treatment, dag.outcome
    desc_a = _reach(A, ch)
    desc_y = _reach(Y, ch)
    anc_a = _reach(A, par)
    anc_y = _reach(Y, par)
    roles = {}
    for node in sorted(dag.nodes - {A, Y}):
        if node in desc_a and node in desc_y:
            role = VariableRole.Collider
        elif node in desc_a and node in anc_y:
            role = VariableRole.Mediator
        elif node in anc_a:
            # an ancestor of Y only through A is an instrument, not a confounder
            if Y in _reach(node, ch, blocked={A}):
                role = VariableRole.Confounder
            else:
                role = VariableRole.Instrument
        else:
            role = VariableRole.Other
        roles[node] = role
    return roles


def validate_adjustment_set(dag: CausalDag, proposed) -> list[tuple[str, VariableRole]]:
    """Members of ``proposed`` that are mediators, colliders or instruments.

    An empty list means the set is acceptable.
    """
    proposed = set(proposed)
    unknown = proposed - dag.nodes
    if unknown:
        raise UnknownNode(f"unknown nodes: {sorted(unknown)}")
    if proposed & {dag.treatment, dag.outcome}:
        raise UnknownNode("adjustment set may not contain treatment or outcome")
    roles = classify_variables(dag)
    return [(n, roles[n]) for n in sorted(proposed) if roles[n] in BAD_ROLES]


def require_valid_adjustment(dag: CausalDag, proposed) -> None:
    bad = validate_adjustment_set(dag, proposed)
    if bad:
        raise AdjustmentViolation([(n, r.value) for n, r in bad])
