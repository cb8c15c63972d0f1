import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gci.errors import ContractError, CycleError, UnknownVariableError
from gci.graph import (
    GraphSpec,
    ancestors,
    classify_nodes,
    descendants,
    key_confounders_oracle,
    topological_order,
)
from gci.scm import benchmark_graph, benchmark_roles


def chain(*names, treatment, outcome):
    return GraphSpec(
        nodes=list(names),
        edges=[(a, b) for a, b in zip(names, names[1:])],
        treatment=treatment,
        outcome=outcome,
    )


def random_dag(rng, n_nodes=8, edge_prob=0.4):
    names = [f"v{i}" for i in range(n_nodes)]
    order = list(rng.permutation(names))
    edges = []
    for i, u in enumerate(order):
        for v in order[i + 1 :]:
            if rng.random() < edge_prob:
                edges.append((u, v))
    t, y = order[0], order[-1]
    return GraphSpec(names, edges, treatment=t, outcome=y)


class TestConstruction:
    def test_rejects_cycle(self):
        with pytest.raises(CycleError):
            GraphSpec(["a", "b", "t", "y"], [("a", "b"), ("b", "a")], "t", "y")

    def test_rejects_self_loop(self):
        with pytest.raises(ContractError):
            GraphSpec(["a", "t", "y"], [("a", "a")], "t", "y")

    def test_rejects_duplicate_edge(self):
        with pytest.raises(ContractError):
            GraphSpec(["a", "t", "y"], [("a", "t"), ("a", "t")], "t", "y")

    def test_rejects_same_treatment_outcome(self):
        with pytest.raises(ContractError):
            GraphSpec(["t", "y"], [], "t", "t")

    def test_rejects_unknown_role(self):
        with pytest.raises(UnknownVariableError):
            GraphSpec(["t", "y"], [], "t", "z")

    def test_json_round_trip_bit_exact(self):
        g = benchmark_graph()
        text = g.to_json()
        again = GraphSpec.from_json(text)
        assert again == g
        assert again.to_json() == text


class TestTopologicalOrder:
    def test_chain(self):
        g = chain("a", "b", "c", treatment="a", outcome="c")
        assert topological_order(g) == ["a", "b", "c"]

    def test_edgeless_lexicographic(self):
        g = GraphSpec(["b", "a"], [], "b", "a")
        assert topological_order(g) == ["a", "b"]

    def test_benchmark_roots_first(self):
        g = benchmark_graph()
        order = topological_order(g)
        assert set(order[:3]) == {"X1", "X2", "X3"}
        idx = {v: i for i, v in enumerate(order)}
        for u, v in g.edges:
            assert idx[u] < idx[v]

    def test_deterministic(self):
        g = benchmark_graph()
        assert topological_order(g) == topological_order(g)


class TestAncestors:
    def test_chain(self):
        g = chain("a", "b", "c", treatment="a", outcome="c")
        assert ancestors(g, "c") == {"a", "b"}
        assert ancestors(g, "a") == frozenset()

    def test_unknown_node(self):
        g = chain("a", "b", treatment="a", outcome="b")
        with pytest.raises(UnknownVariableError):
            ancestors(g, "zzz")

    def test_matches_edge_relaxation_closure(self):
        # independent oracle: repeated relaxation of the edge list
        rng = np.random.default_rng(42)
        for _ in range(25):
            g = random_dag(rng)
            reach = {v: {u for u, w in g.edges if w == v} for v in g.nodes}
            changed = True
            while changed:
                changed = False
                for v in g.nodes:
                    for u in list(reach[v]):
                        new = reach[u] - reach[v]
                        if new:
                            reach[v] |= new
                            changed = True
            for v in g.nodes:
                assert ancestors(g, v) == frozenset(reach[v])

    def test_descendants_mirror(self):
        rng = np.random.default_rng(7)
        g = random_dag(rng)
        for v in g.nodes:
            for u in g.nodes:
                assert (u in ancestors(g, v)) == (v in descendants(g, u))


class TestClassification:
    def test_instrument_like_root(self):
        g = GraphSpec(["X2", "t", "y"], [("X2", "t"), ("t", "y")], "t", "y")
        cls = classify_nodes(g)
        assert cls.t_only_roots == {"X2"}
        assert cls.root_ancestors == {"X2"}

    def test_classic_confounder_not_t_only(self):
        g = GraphSpec(["X", "t", "y"], [("X", "t"), ("X", "y"), ("t", "y")], "t", "y")
        cls = classify_nodes(g)
        assert cls.root_ancestors == {"X"}
        assert cls.t_only_roots == frozenset()

    def test_benchmark_matches_declared_roles(self):
        g = benchmark_graph()
        roles = benchmark_roles()
        cls = classify_nodes(g)
        assert cls.root_ancestors == frozenset(roles["root_ancestors"])
        assert cls.t_only_roots == frozenset(roles["t_only_roots"])
        assert cls.nonroot_ancestors == frozenset(roles["nonroot_ancestors"])
        assert cls.non_ancestors == frozenset(roles["non_ancestors"])
        post = frozenset(roles["post_treatment"])
        assert post == frozenset(descendants(g, "t") & set(g.covariates))

    def test_partition(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            g = random_dag(rng)
            cls = classify_nodes(g)
            total = cls.root_ancestors | cls.nonroot_ancestors | cls.non_ancestors
            assert total == frozenset(g.covariates)
            assert len(cls.root_ancestors) + len(cls.nonroot_ancestors) + len(
                cls.non_ancestors
            ) == len(g.covariates)
            assert cls.t_only_roots <= cls.root_ancestors


class TestKeyConfoundersOracle:
    def test_single_confounder(self):
        g = GraphSpec(["X", "t", "y"], [("X", "t"), ("X", "y"), ("t", "y")], "t", "y")
        assert key_confounders_oracle(g) == {"X"}

    def test_instrument_excluded(self):
        g = GraphSpec(["X2", "t", "y"], [("X2", "t"), ("t", "y")], "t", "y")
        assert key_confounders_oracle(g) == frozenset()

    def test_benchmark_is_x3(self):
        assert key_confounders_oracle(benchmark_graph()) == {"X3"}

    def test_subset_and_root_property(self):
        rng = np.random.default_rng(11)
        for _ in range(50):
            g = random_dag(rng)
            ks = key_confounders_oracle(g)
            assert ks <= ancestors(g, g.treatment)
            assert ks <= ancestors(g, g.outcome)
            for r in ks:
                assert not g.parents(r)

    def test_isolated_node_edge_into_non_ancestor_invariant(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            g = random_dag(rng, n_nodes=7)
            cls = classify_nodes(g)
            if not cls.non_ancestors:
                continue
            target = sorted(cls.non_ancestors)[0]
            g2 = GraphSpec(
                nodes=[*g.nodes, "fresh"],
                edges=[*g.edges, ("fresh", target)],
                treatment=g.treatment,
                outcome=g.outcome,
            )
            assert key_confounders_oracle(g2) == key_confounders_oracle(g)


@settings(max_examples=60, deadline=None)
@given(st.integers(min_value=0, max_value=10_000))
def test_oracle_formula_on_random_dags(seed):
    """key confounders == An(t) & An(y) & roots, minus roots cut off by t."""
    rng = np.random.default_rng(seed)
    g = random_dag(rng, n_nodes=6, edge_prob=0.5)
    expected = set()
    an_t, an_y = ancestors(g, g.treatment), ancestors(g, g.outcome)
    for v in g.covariates:
        if g.parents(v) or v not in an_t or v not in an_y:
            continue
        # path enumeration avoiding t
        stack, seen, reaches = [v], set(), False
        while stack:
            u = stack.pop()
            for w in g.children(u):
                if w == g.treatment or w in seen:
                    continue
                if w == g.outcome:
                    reaches = True
                    break
                seen.add(w)
                stack.append(w)
            if reaches:
                break
        if reaches:
            expected.add(v)
    assert key_confounders_oracle(g) == frozenset(expected)
