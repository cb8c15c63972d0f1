"""Structural causal models: synthetic sampling, counterfactual oracles,
and exact interventional distributions for small binary models.

Continuous mechanisms follow V = gain * sum_p f(w_p * p) + eps_V with
eps_V ~ N(0, noise_sd^2); the link f applies per parent to the weighted
parent value (the displayed-formula reading adopted here), and roots have
no parents so V = eps_V.  Noise draws are retained at sampling time so
counterfactuals can be computed by abduction: clamp the treatment, replay
the same noise through the mechanisms.

Binary models are given by conditional probability tables and support
exact truncated-factorization enumeration, which is the ground truth the
backdoor-adjustment equivalence audit checks against.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .dataset import Dataset
from .errors import CapacityError, ContractError
from .estimate import EffectCurve
from .graph import (
    GraphSpec,
    ancestors,
    ancestors_avoiding,
    key_confounders_oracle,
    topological_order,
)
from .seeding import subseed

__all__ = [
    "Mechanism",
    "ScmSpec",
    "SampleResult",
    "DiscreteScm",
    "Dataset",
    "draw_weights",
    "sample",
    "counterfactual_outcomes",
    "true_mtef",
    "sample_discrete",
    "exact_interventional",
    "joint_table",
    "verify_adjustment_equivalence",
    "AdjustmentAudit",
    "random_discrete_scm",
    "root_adjustment_sufficient",
    "benchmark_graph",
    "benchmark_scm",
    "benchmark_roles",
]

MAX_JOINT_STATES = 2**20


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-x))


LINKS: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "sigmoid": _sigmoid,
    # sigmoid shifted to zero mean at zero input; keeps downstream inputs
    # centered so deep chains stay in the link's active range
    "sigmoid-centered": lambda x: _sigmoid(x) - 0.5,
    "linear": lambda x: x,
}


@dataclass(frozen=True)
class Mechanism:
    """Generative mechanism of one node.

    Roots carry empty parents/weights and act as pure noise terms.  gain
    scales the summed link outputs (1.0 reproduces the plain form).
    """

    parents: tuple[str, ...]
    weights: tuple[float, ...]
    link: str = "sigmoid"
    noise_sd: float = 1.0
    gain: float = 1.0

    def __init__(self, parents=(), weights=(), link="sigmoid", noise_sd=1.0, gain=1.0):
        parents = tuple(parents)
        weights = tuple(float(w) for w in weights)
        if len(parents) != len(weights):
            raise ContractError("one weight per parent required")
        if not all(np.isfinite(weights)):
            raise ContractError("weights must be finite")
        if link not in LINKS:
            raise ContractError(f"unknown link {link!r}")
        if not (noise_sd > 0 and np.isfinite(noise_sd)):
            raise ContractError("noise_sd must be positive")
        if not (np.isfinite(gain) and gain != 0):
            raise ContractError("gain must be finite and nonzero")
        object.__setattr__(self, "parents", parents)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "link", link)
        object.__setattr__(self, "noise_sd", float(noise_sd))
        object.__setattr__(self, "gain", float(gain))

    def evaluate(self, values: Mapping[str, np.ndarray], noise: np.ndarray) -> np.ndarray:
        f = LINKS[self.link]
        out = np.asarray(noise, dtype=float).copy()
        if self.parents:
            total = sum(f(w * values[p]) for p, w in zip(self.parents, self.weights))
            out += self.gain * total
        return out


@dataclass(frozen=True)
class ScmSpec:
    """Continuous SCM: a graph plus one mechanism per node."""

    graph: GraphSpec
    mechanisms: Mapping[str, Mechanism]

    def __init__(self, graph: GraphSpec, mechanisms: Mapping[str, Mechanism]):
        mechs = dict(mechanisms)
        for node in graph.nodes:
            if node not in mechs:
                raise ContractError(f"no mechanism for node {node!r}")
            if set(mechs[node].parents) != set(graph.parents(node)):
                raise ContractError(
                    f"mechanism parents for {node!r} disagree with graph"
                )
        extra = set(mechs) - set(graph.nodes)
        if extra:
            raise ContractError(f"mechanisms for unknown nodes {sorted(extra)}")
        object.__setattr__(self, "graph", graph)
        object.__setattr__(self, "mechanisms", mechs)

    def to_json(self) -> str:
        doc = {
            "kind": "continuous",
            "graph": json.loads(self.graph.to_json()),
            "mechanisms": {
                node: {
                    "parents": list(m.parents),
                    "weights": list(m.weights),
                    "link": m.link,
                    "noise_sd": m.noise_sd,
                    "gain": m.gain,
                }
                for node, m in sorted(self.mechanisms.items())
            },
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "ScmSpec":
        doc = json.loads(text)
        g = doc["graph"]
        graph = GraphSpec(g["nodes"], g["edges"], g["treatment"], g["outcome"])
        mechs = {
            node: Mechanism(
                parents=m["parents"],
                weights=m["weights"],
                link=m.get("link", "sigmoid"),
                noise_sd=m.get("noise_sd", 1.0),
                gain=m.get("gain", 1.0),
            )
            for node, m in doc["mechanisms"].items()
        }
        return cls(graph, mechs)


@dataclass(frozen=True)
class SampleResult:
    """Generated data plus the noise panel that produced it."""

    data: Dataset
    noise: Dataset


def draw_weights(graph: GraphSpec, seed: int) -> dict[tuple[str, str], float]:
    """I.i.d. Uniform[0.5, 2] weight per edge, in declared edge order."""
    rng = np.random.default_rng(seed)
    return {edge: float(rng.uniform(0.5, 2.0)) for edge in graph.edges}


def sample(spec: ScmSpec, n: int, seed: int) -> SampleResult:
    """Ancestral sampling; columns follow the graph's declared node order.

    Noise for each node is drawn in topological order from one stream, so
    (spec, n, seed) fully determines the output.
    """
    if n < 1:
        raise ContractError("n must be >= 1")
    rng = np.random.default_rng(seed)
    order = topological_order(spec.graph)
    noise_cols: dict[str, np.ndarray] = {}
    values: dict[str, np.ndarray] = {}
    for node in order:
        mech = spec.mechanisms[node]
        eps = mech.noise_sd * rng.standard_normal(n)
        noise_cols[node] = eps
        values[node] = mech.evaluate(values, eps)
    names = spec.graph.nodes
    data = Dataset(names, np.column_stack([values[v] for v in names]))
    noise = Dataset(names, np.column_stack([noise_cols[v] for v in names]))
    return SampleResult(data=data, noise=noise)


def replay(spec: ScmSpec, noise: Dataset, do: Mapping[str, float | np.ndarray] | None = None) -> Dataset:
    """Recompute all node values from a noise panel, clamping `do` nodes."""
    if tuple(noise.columns) != tuple(spec.graph.nodes):
        raise ContractError("noise panel columns do not match the model nodes")
    do = dict(do or {})
    n = noise.n_rows
    values: dict[str, np.ndarray] = {}
    for node in topological_order(spec.graph):
        if node in do:
            values[node] = np.broadcast_to(
                np.asarray(do[node], dtype=float), (n,)
            ).astype(float)
        else:
            values[node] = spec.mechanisms[node].evaluate(values, noise.column(node))
    names = spec.graph.nodes
    return Dataset(names, np.column_stack([values[v] for v in names]))


def counterfactual_outcomes(
    spec: ScmSpec, noise: Dataset, do_t: float | np.ndarray
) -> np.ndarray:
    """Outcome under do(treatment = do_t), reusing the stored noise.

    Non-descendants of the treatment reproduce their factual values
    exactly because their noise and mechanisms are unchanged.
    """
    replayed = replay(spec, noise, do={spec.graph.treatment: do_t})
    return replayed.column(spec.graph.outcome).copy()


def true_mtef(
    spec: ScmSpec, t_grid: Sequence[float], n: int, seed: int
) -> EffectCurve:
    """Ground-truth effect curve via counterfactuals on one shared panel."""
    grid = np.asarray(t_grid, dtype=float)
    if grid.ndim != 1 or grid.size < 2:
        raise ContractError("need an ascending grid of >= 2 points")
    if not np.all(np.diff(grid) > 0):
        raise ContractError("treatment grid must be strictly ascending")
    panel = sample(spec, n, seed)
    mu = np.array(
        [counterfactual_outcomes(spec, panel.noise, g).mean() for g in grid]
    )
    return EffectCurve(grid, mu)


# --- binary models -------------------------------------------------------


@dataclass(frozen=True)
class DiscreteScm:
    """All-binary SCM given by one CPT per node.

    Each table has shape (2,) * k + (2,) where k is the node's in-degree;
    axes follow the node's parents sorted by name, and the final axis is
    the node's own value.  Rows must sum to 1.
    """

    graph: GraphSpec
    tables: Mapping[str, np.ndarray]

    def __init__(self, graph: GraphSpec, tables: Mapping[str, np.ndarray]):
        fixed: dict[str, np.ndarray] = {}
        for node in graph.nodes:
            if node not in tables:
                raise ContractError(f"no table for node {node!r}")
            t = np.asarray(tables[node], dtype=float)
            k = len(graph.parents(node))
            if t.shape != (2,) * k + (2,):
                raise ContractError(
                    f"table for {node!r} must have shape {(2,) * k + (2,)}"
                )
            if t.min() < 0 or t.max() > 1:
                raise ContractError(f"probabilities for {node!r} outside [0, 1]")
            if not np.allclose(t.sum(axis=-1), 1.0, atol=1e-12):
                raise ContractError(f"rows of {node!r} table must sum to 1")
            t = t.copy()
            t.setflags(write=False)
            fixed[node] = t
        object.__setattr__(self, "graph", graph)
        object.__setattr__(self, "tables", fixed)

    def sorted_parents(self, node: str) -> tuple[str, ...]:
        return tuple(sorted(self.graph.parents(node)))

    def to_json(self) -> str:
        doc = {
            "kind": "discrete",
            "graph": json.loads(self.graph.to_json()),
            "tables": {n: t.tolist() for n, t in sorted(self.tables.items())},
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "DiscreteScm":
        doc = json.loads(text)
        g = doc["graph"]
        graph = GraphSpec(g["nodes"], g["edges"], g["treatment"], g["outcome"])
        return cls(graph, {n: np.array(t) for n, t in doc["tables"].items()})


def _check_capacity(graph: GraphSpec) -> None:
    if 2 ** len(graph.nodes) > MAX_JOINT_STATES:
        raise CapacityError(
            f"{len(graph.nodes)} binary nodes exceed {MAX_JOINT_STATES} joint states"
        )


def joint_table(d: DiscreteScm) -> np.ndarray:
    """Full joint distribution as an array indexed by node order."""
    _check_capacity(d.graph)
    names = d.graph.nodes
    pos = {n: i for i, n in enumerate(names)}
    joint = np.zeros((2,) * len(names))
    for config in itertools.product((0, 1), repeat=len(names)):
        p = 1.0
        for node in names:
            idx = tuple(config[pos[q]] for q in d.sorted_parents(node))
            p *= d.tables[node][idx + (config[pos[node]],)]
        joint[config] = p
    return joint


def sample_discrete(d: DiscreteScm, n: int, seed: int) -> Dataset:
    """Ancestral sampling from the CPTs, values in {0.0, 1.0}."""
    if n < 1:
        raise ContractError("n must be >= 1")
    rng = np.random.default_rng(seed)
    values: dict[str, np.ndarray] = {}
    for node in topological_order(d.graph):
        ps = d.sorted_parents(node)
        table = d.tables[node]
        if not ps:
            p1 = table[1]
            values[node] = (rng.random(n) < p1).astype(float)
        else:
            idx = tuple(values[p].astype(int) for p in ps)
            p1 = table[idx + (np.ones(n, dtype=int),)]
            values[node] = (rng.random(n) < p1).astype(float)
    names = d.graph.nodes
    return Dataset(names, np.column_stack([values[v] for v in names]))


def exact_interventional(d: DiscreteScm, do_t: int) -> np.ndarray:
    """P(y | do(t)) by full enumeration of the truncated factorization.

    The treatment's own conditional term is dropped, t is clamped to
    do_t, and the covariate terms are summed out.  Returns [P(y=0),
    P(y=1)].
    """
    _check_capacity(d.graph)
    if do_t not in (0, 1):
        raise ContractError("do_t must be 0 or 1 for a binary model")
    g = d.graph
    free = [n for n in g.nodes if n != g.treatment]
    out = np.zeros(2)
    for config in itertools.product((0, 1), repeat=len(free)):
        assign = dict(zip(free, config))
        assign[g.treatment] = do_t
        p = 1.0
        for node in free:
            idx = tuple(assign[q] for q in d.sorted_parents(node))
            p *= d.tables[node][idx + (assign[node],)]
        out[assign[g.outcome]] += p
    return out


@dataclass(frozen=True)
class AdjustmentAudit:
    """Result of comparing backdoor adjustment against exact enumeration."""

    confounders: tuple[str, ...]
    max_discrepancy: float
    skipped_cells: int


def verify_adjustment_equivalence(d: DiscreteScm) -> AdjustmentAudit:
    """Check sum_x P(x) P(y | t, x) over the common-root-ancestor set
    against the truncated-factorization P(y | do(t)).

    Zero-probability (t, x) cells are skipped and counted rather than
    treated as failures.
    """
    g = d.graph
    conf = tuple(sorted(key_confounders_oracle(g)))
    joint = joint_table(d)
    names = g.nodes
    pos = {n: i for i, n in enumerate(names)}

    def marginal(keep: Sequence[str]) -> np.ndarray:
        axes = tuple(i for i, n in enumerate(names) if n not in keep)
        m = joint.sum(axis=axes)
        order = [n for n in names if n in keep]
        perm = [order.index(n) for n in sorted(order, key=lambda q: keep.index(q))]
        return np.transpose(m, perm) if perm else m

    skipped = 0
    max_disc = 0.0
    keep = [*conf, g.treatment, g.outcome]
    m_xty = marginal(keep)  # axes: conf..., t, y
    m_x = m_xty.sum(axis=(-2, -1))
    for do_t in (0, 1):
        exact = exact_interventional(d, do_t)
        backdoor = np.zeros(2)
        for x_cfg in itertools.product((0, 1), repeat=len(conf)):
            px = m_x[x_cfg] if conf else 1.0
            p_tx = m_xty[x_cfg + (do_t,)].sum()
            if p_tx <= 0.0:
                skipped += 1
                continue
            cond_y = m_xty[x_cfg + (do_t,)] / p_tx
            backdoor += px * cond_y
        max_disc = max(max_disc, float(np.max(np.abs(exact - backdoor))))
    return AdjustmentAudit(
        confounders=conf, max_discrepancy=max_disc, skipped_cells=skipped
    )


def root_adjustment_sufficient(g: GraphSpec) -> bool:
    """True when the common-root-ancestor set is a valid adjustment set.

    The root set blocks every backdoor path exactly when no NON-root
    covariate is simultaneously an ancestor of the treatment and an
    ancestor of the outcome along a treatment-avoiding path; such a node
    would open a mediated backdoor path no root lies on.
    """
    an_t = ancestors(g, g.treatment)
    an_y_no_t = ancestors_avoiding(g, g.outcome, g.treatment)
    for v in g.covariates:
        if g.parents(v) and v in an_t and v in an_y_no_t:
            return False
    return True


def random_discrete_scm(
    seed: int, max_nodes: int = 8, edge_prob: float = 0.35, positivity_clip: float = 0.05
) -> DiscreteScm:
    """Random binary SCM for the adjustment-equivalence audit.

    A random topological order places t before y; t -> y is always an
    edge; other forward edges appear independently with edge_prob.
    Graphs are rejection-sampled until root_adjustment_sufficient holds:
    that structural condition is the exact scope of the root-set
    adjustment identity (a non-root common ancestor mediating into both
    t and y admits no root-only blocking set, and the identity is
    measurably false there).  Bernoulli parameters are uniform draws
    clipped into [positivity_clip, 1 - positivity_clip] so every
    configuration has positive probability.
    """
    rng = np.random.default_rng(seed)
    for _attempt in range(1000):
        n_nodes = int(rng.integers(3, max_nodes + 1))
        n_cov = n_nodes - 2
        names = [f"X{i}" for i in range(1, n_cov + 1)] + ["t", "y"]
        order = list(rng.permutation(names))
        t_pos, y_pos = order.index("t"), order.index("y")
        if t_pos > y_pos:
            order[t_pos], order[y_pos] = order[y_pos], order[t_pos]
        edges = [("t", "y")]
        for i, u in enumerate(order):
            for v in order[i + 1 :]:
                if (u, v) != ("t", "y") and rng.random() < edge_prob:
                    edges.append((u, v))
        graph = GraphSpec(nodes=names, edges=edges, treatment="t", outcome="y")
        if root_adjustment_sufficient(graph):
            break
    else:
        raise ContractError("could not sample a conforming graph")
    lo, hi = positivity_clip, 1.0 - positivity_clip
    tables = {}
    for node in names:
        k = len(graph.parents(node))
        p1 = np.clip(rng.random(size=(2,) * k), lo, hi)
        tables[node] = np.stack([1.0 - p1, p1], axis=-1)
    return DiscreteScm(graph, tables)


# --- canonical benchmark fixture -----------------------------------------


def _fixture_doc() -> dict:
    path = resources.files("gci").joinpath("fixtures/benchmark_graph.json")
    return json.loads(path.read_text(encoding="utf-8"))


def benchmark_graph() -> GraphSpec:
    """The versioned 13-covariate benchmark DAG."""
    doc = _fixture_doc()["graph"]
    return GraphSpec(doc["nodes"], doc["edges"], doc["treatment"], doc["outcome"])


def benchmark_roles() -> dict[str, list[str]]:
    """Declared node roles of the benchmark fixture."""
    return dict(_fixture_doc()["roles"])


def benchmark_scm() -> ScmSpec:
    """Benchmark SCM with the fixture's frozen edge weights and noise scales."""
    doc = _fixture_doc()
    graph = benchmark_graph()
    weights = {(u, v): float(w) for u, v, w in doc["weights"]}
    gain = float(doc["gain"])
    link = doc["link"]
    noise = doc["noise_sd"]
    mechs = {}
    for node in graph.nodes:
        ps = tuple(sorted(graph.parents(node)))
        mechs[node] = Mechanism(
            parents=ps,
            weights=tuple(weights[(p, node)] for p in ps),
            link=link,
            noise_sd=float(noise[node]),
            gain=gain if ps else 1.0,
        )
    return ScmSpec(graph, mechs)
