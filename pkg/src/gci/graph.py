"""Directed acyclic graphs over named variables.

Nodes are identified by name throughout; there are no integer indices in
the public surface.  All values are immutable after construction and all
operations are pure functions, so graphs can be shared freely.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .errors import ContractError, CycleError, UnknownVariableError

__all__ = [
    "GraphSpec",
    "ancestors_avoiding",
    "NodeClassification",
    "topological_order",
    "ancestors",
    "descendants",
    "classify_nodes",
    "key_confounders_oracle",
]


@dataclass(frozen=True)
class GraphSpec:
    """A DAG with a designated treatment and outcome variable.

    ``nodes`` keeps its declared order (it defines dataset column order);
    ``edges`` are (parent, child) pairs.  Construction validates that the
    graph is acyclic, names are unique, treatment and outcome are distinct
    members, and there are no self-loops or duplicate edges.
    """

    nodes: tuple[str, ...]
    edges: tuple[tuple[str, str], ...]
    treatment: str
    outcome: str

    def __init__(
        self,
        nodes: Sequence[str],
        edges: Iterable[Sequence[str]],
        treatment: str,
        outcome: str,
    ):
        object.__setattr__(self, "nodes", tuple(str(n) for n in nodes))
        object.__setattr__(
            self, "edges", tuple((str(u), str(v)) for u, v in edges)
        )
        object.__setattr__(self, "treatment", str(treatment))
        object.__setattr__(self, "outcome", str(outcome))
        self._validate()

    def _validate(self) -> None:
        if len(set(self.nodes)) != len(self.nodes):
            raise ContractError("duplicate node names")
        known = set(self.nodes)
        seen: set[tuple[str, str]] = set()
        for u, v in self.edges:
            if u not in known or v not in known:
                raise UnknownVariableError(f"edge ({u}, {v}) references unknown node")
            if u == v:
                raise ContractError(f"self-loop on {u!r}")
            if (u, v) in seen:
                raise ContractError(f"duplicate edge ({u}, {v})")
            seen.add((u, v))
        for role, name in (("treatment", self.treatment), ("outcome", self.outcome)):
            if name not in known:
                raise UnknownVariableError(f"{role} {name!r} not among nodes")
        if self.treatment == self.outcome:
            raise ContractError("treatment and outcome must be distinct")
        topological_order(self)  # raises CycleError on a cycle

    @property
    def covariates(self) -> tuple[str, ...]:
        """All nodes except treatment and outcome, in declared order."""
        drop = {self.treatment, self.outcome}
        return tuple(n for n in self.nodes if n not in drop)

    def parents(self, v: str) -> frozenset[str]:
        self._check(v)
        return frozenset(u for u, w in self.edges if w == v)

    def children(self, v: str) -> frozenset[str]:
        self._check(v)
        return frozenset(w for u, w in self.edges if u == v)

    def _check(self, v: str) -> None:
        if v not in set(self.nodes):
            raise UnknownVariableError(f"unknown node {v!r}")

    def without_node(self, v: str) -> "GraphSpec":
        """Copy with ``v`` and its incident edges removed.

        Treatment/outcome must survive the removal.
        """
        self._check(v)
        if v in (self.treatment, self.outcome):
            raise ContractError(f"cannot remove {v!r}: designated role")
        return GraphSpec(
            nodes=[n for n in self.nodes if n != v],
            edges=[(a, b) for a, b in self.edges if v not in (a, b)],
            treatment=self.treatment,
            outcome=self.outcome,
        )

    def to_json(self) -> str:
        doc = {
            "nodes": list(self.nodes),
            "edges": [[u, v] for u, v in self.edges],
            "treatment": self.treatment,
            "outcome": self.outcome,
        }
        return json.dumps(doc, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "GraphSpec":
        doc = json.loads(text)
        return cls(
            nodes=doc["nodes"],
            edges=doc["edges"],
            treatment=doc["treatment"],
            outcome=doc["outcome"],
        )


@dataclass(frozen=True)
class NodeClassification:
    """Covariate roles relative to the outcome.

    root_ancestors, nonroot_ancestors and non_ancestors partition the
    covariates.  t_only_roots are the root ancestors whose every directed
    path to the outcome passes through the treatment (instrument-like);
    they are a subset of root_ancestors.
    """

    root_ancestors: frozenset[str]
    nonroot_ancestors: frozenset[str]
    non_ancestors: frozenset[str]
    t_only_roots: frozenset[str]


def topological_order(g: GraphSpec) -> list[str]:
    """Kahn's algorithm; ties broken by lexicographic node name."""
    pending = {n: set() for n in g.nodes}
    for u, v in g.edges:
        pending[v].add(u)
    ready = sorted(n for n, ps in pending.items() if not ps)
    order: list[str] = []
    children: dict[str, list[str]] = {n: [] for n in g.nodes}
    for u, v in g.edges:
        children[u].append(v)
    while ready:
        n = ready.pop(0)
        order.append(n)
        changed = False
        for c in children[n]:
            pending[c].discard(n)
            if not pending[c] and c not in order and c not in ready:
                ready.append(c)
                changed = True
        if changed:
            ready.sort()
    if len(order) != len(g.nodes):
        stuck = sorted(set(g.nodes) - set(order))
        raise CycleError(f"cycle detected among {stuck}")
    return order


def _reach(g: GraphSpec, start: str, step: Mapping[str, frozenset[str]]) -> frozenset[str]:
    out: set[str] = set()
    stack = [start]
    while stack:
        u = stack.pop()
        for w in step[u]:
            if w not in out:
                out.add(w)
                stack.append(w)
    return frozenset(out)


def ancestors(g: GraphSpec, v: str) -> frozenset[str]:
    """All u with a directed path u -> ... -> v; excludes v itself."""
    g._check(v)
    par = {n: g.parents(n) for n in g.nodes}
    return _reach(g, v, par)


def descendants(g: GraphSpec, v: str) -> frozenset[str]:
    """All w reachable from v by a directed path; excludes v itself."""
    g._check(v)
    chi = {n: g.children(n) for n in g.nodes}
    return _reach(g, v, chi)


def ancestors_avoiding(g: GraphSpec, v: str, blocked: str) -> frozenset[str]:
    """Ancestors of v along paths that never visit the blocked node."""
    out: set[str] = set()
    stack = [v]
    while stack:
        u = stack.pop()
        for p in g.parents(u):
            if p != blocked and p not in out:
                out.add(p)
                stack.append(p)
    return frozenset(out)


def classify_nodes(g: GraphSpec) -> NodeClassification:
    """Partition covariates into root/non-root ancestors and non-ancestors.

    A root r is t-only when it is an ancestor of the outcome in g but not
    in g with the treatment node removed, i.e. every path runs through t.
    """
    an_y = ancestors(g, g.outcome)
    cov = set(g.covariates)
    roots = frozenset(v for v in cov & an_y if not g.parents(v))
    nonroot = frozenset(v for v in cov & an_y if g.parents(v))
    non_anc = frozenset(cov - an_y)
    an_y_no_t = ancestors_avoiding(g, g.outcome, g.treatment)
    t_only = frozenset(r for r in roots if r not in an_y_no_t)
    return NodeClassification(
        root_ancestors=roots,
        nonroot_ancestors=nonroot,
        non_ancestors=non_anc,
        t_only_roots=t_only,
    )


def key_confounders_oracle(g: GraphSpec) -> frozenset[str]:
    """Common root ancestors of treatment and outcome, minus roots that
    reach the outcome only through the treatment."""
    cls = classify_nodes(g)
    an_t = ancestors(g, g.treatment)
    an_y = ancestors(g, g.outcome)
    common = cls.root_ancestors & an_t & an_y
    return frozenset(common - cls.t_only_roots)
