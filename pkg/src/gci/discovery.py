"""Iterated local discovery of the outcome's ancestor set and extraction
of the key confounding covariates.

pc_identify finds the parents and children of one target: a correlation
screen proposes candidates, conditional-independence tests prune
non-adjacent ones, and an additive-noise asymmetry test orients the
survivors.  ans_identify seeds the frontier with the outcome and iterates
pc_identify over newly found parents until no new parents appear,
recording identified children in an exclusion set along the way.

Orientation runs in two passes.  Pass one applies the plain bivariate
direction test and peels off confident children (their edges carry the
strongest correlations, so this is reliable even at hub nodes).  Pass two
re-tests the remaining candidates with the other surviving adjacents
partialed out of the target, which removes sibling dilution at
multi-parent targets; adjacents that are themselves strongly correlated
with the candidate (near-proxies) are left out of that conditioning set,
otherwise they would absorb the very signal under test.
"""

from __future__ import annotations

import itertools
import json
import warnings as _warnings
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

from .dataset import Dataset
from .errors import ContractError
from .graph import GraphSpec
from .stats import CiEngine, CorMatrix, cor_matrix

__all__ = [
    "Thresholds",
    "PcResult",
    "RoundRecord",
    "AncestorDict",
    "pc_identify",
    "ans_identify",
    "extract_key_confounders",
    "oracle_pc",
]

# Pass-two conditioning excludes adjacents whose absolute correlation with
# the candidate exceeds this gate; partialling near-proxies out of the
# target would erase the candidate's own signal.
CONTEXT_CORR_GATE = 0.6

DEFAULT_ROUND_CAP = 20


@dataclass(frozen=True)
class Thresholds:
    """Screening, independence and directionality thresholds."""

    theta_r: float = 0.1
    theta_i: float = 0.05
    theta_d: float = 0.05
    max_cond_size: int = 3

    def __post_init__(self):
        for name in ("theta_r", "theta_i", "theta_d"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ContractError(f"{name} must lie in (0, 1), got {v}")
        if self.max_cond_size < 1:
            raise ContractError("max_cond_size must be >= 1")


@dataclass(frozen=True)
class PcResult:
    """Oriented local neighborhood of one target variable."""

    parents: frozenset[str]
    children: frozenset[str]
    ambiguous: frozenset[str]

    def __post_init__(self):
        if (
            self.parents & self.children
            or self.parents & self.ambiguous
            or self.children & self.ambiguous
        ):
            raise ContractError("parent/child/ambiguous sets must be disjoint")


@dataclass(frozen=True)
class RoundRecord:
    index: int
    frontier: tuple[str, ...]
    parents: Mapping[str, tuple[str, ...]]
    children: Mapping[str, tuple[str, ...]]
    ambiguous: Mapping[str, tuple[str, ...]]


@dataclass(frozen=True)
class AncestorDict:
    """Identified parent sets per visited target, plus the exclusion set
    of identified children and the per-round trace."""

    parents: Mapping[str, frozenset[str]]
    excluded: frozenset[str]
    rounds: tuple[RoundRecord, ...]
    truncated: bool = False

    def nodes(self) -> frozenset[str]:
        out = set(self.parents)
        for ps in self.parents.values():
            out |= ps
        return frozenset(out)

    def identified_ancestors(self, v: str) -> frozenset[str]:
        """Transitive closure of identified parent edges above v."""
        out: set[str] = set()
        stack = [v]
        while stack:
            u = stack.pop()
            for p in self.parents.get(u, frozenset()):
                if p not in out:
                    out.add(p)
                    stack.append(p)
        return frozenset(out)

    def to_json(self) -> str:
        doc = {
            "parents": {k: sorted(v) for k, v in sorted(self.parents.items())},
            "excluded": sorted(self.excluded),
            "rounds": [
                {
                    "round": r.index,
                    "frontier": list(r.frontier),
                    "parents": {k: list(v) for k, v in sorted(r.parents.items())},
                    "children": {k: list(v) for k, v in sorted(r.children.items())},
                    "ambiguous": {k: list(v) for k, v in sorted(r.ambiguous.items())},
                }
                for r in self.rounds
            ],
            "truncated": self.truncated,
        }
        return json.dumps(doc, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "AncestorDict":
        doc = json.loads(text)
        rounds = tuple(
            RoundRecord(
                index=r["round"],
                frontier=tuple(r["frontier"]),
                parents={k: tuple(v) for k, v in r["parents"].items()},
                children={k: tuple(v) for k, v in r["children"].items()},
                ambiguous={k: tuple(v) for k, v in r["ambiguous"].items()},
            )
            for r in doc["rounds"]
        )
        return cls(
            parents={k: frozenset(v) for k, v in doc["parents"].items()},
            excluded=frozenset(doc["excluded"]),
            rounds=rounds,
            truncated=bool(doc.get("truncated", False)),
        )


def _screen_candidates(
    target: str,
    search: Sequence[str],
    cm: CorMatrix,
    th: Thresholds,
    ex: frozenset[str],
    order: str,
) -> list[str]:
    cand = [
        v
        for v in search
        if v != target and v not in ex and cm.value(v, target) >= th.theta_r
    ]
    reverse = order == "descending"
    cand.sort(key=lambda v: (cm.value(v, target), v), reverse=reverse)
    return cand


def pc_identify(
    d: Dataset,
    target: str,
    search: Sequence[str],
    cm: CorMatrix,
    th: Thresholds,
    ex: frozenset[str] = frozenset(),
    engine: CiEngine | None = None,
    seed: int = 0,
    candidate_order: str = "ascending",
) -> PcResult:
    """Identify and orient the adjacency of one target variable."""
    if target in ex:
        raise ContractError(f"target {target!r} is in the exclusion set")
    unknown = set(search) - set(d.columns)
    if unknown:
        raise ContractError(f"search names not in dataset: {sorted(unknown)}")
    eng = engine if engine is not None else CiEngine(d, seed=seed)

    adj = _screen_candidates(target, search, cm, th, ex, candidate_order)
    for c in list(adj):
        if c not in adj:
            continue
        rest = [v for v in adj if v != c]
        removed = False
        for size in range(1, min(th.max_cond_size, len(rest)) + 1):
            for cond in itertools.combinations(rest, size):
                if eng.gcm_test(target, c, cond).p_value >= th.theta_i:
                    adj.remove(c)
                    removed = True
                    break
            if removed:
                break

    children: set[str] = set()
    for c in sorted(adj):
        fwd, back = eng.direction_test(target, c, ())
        if fwd.p_value >= th.theta_d and back.p_value <= th.theta_d:
            children.add(c)

    parents: set[str] = set()
    ambiguous: set[str] = set()
    for c in sorted(set(adj) - children):
        ctx = [
            v
            for v in adj
            if v != c and v not in children and cm.value(v, c) <= CONTEXT_CORR_GATE
        ]
        fwd, back = eng.direction_test(target, c, ctx)
        if fwd.p_value >= th.theta_d and back.p_value <= th.theta_d:
            children.add(c)
        elif fwd.p_value <= th.theta_d and back.p_value >= th.theta_d:
            parents.add(c)
        else:
            ambiguous.add(c)

    return PcResult(
        parents=frozenset(parents),
        children=frozenset(children),
        ambiguous=frozenset(ambiguous),
    )


PcFunction = Callable[..., PcResult]


def ans_identify(
    d: Dataset,
    treatment: str,
    outcome: str,
    th: Thresholds = Thresholds(),
    seed: int = 0,
    round_cap: int = DEFAULT_ROUND_CAP,
    pc: PcFunction | None = None,
    candidate_order: str = "ascending",
) -> AncestorDict:
    """Iterate pc_identify from the outcome until no new parents appear.

    The frontier of each round holds the previous round's newly found
    parents; visited targets are never revisited, and identified children
    are excluded from later candidate sets (acyclicity rationale).  The
    exclusion set grows at round barriers only, so the pc calls within a
    round are order-independent.  A node found to be both a child of one
    frontier member and a parent of another in the same round stays
    targetable: completing the ancestor set takes precedence.
    """
    for name in (treatment, outcome):
        if name not in d.columns:
            raise ContractError(f"column {name!r} missing from dataset")
    engine = CiEngine(d, seed=seed)
    cm = cor_matrix(d)
    search = tuple(v for v in d.columns if v != outcome)
    pc_fn = pc if pc is not None else pc_identify

    parents: dict[str, frozenset[str]] = {}
    excluded: frozenset[str] = frozenset()
    visited: set[str] = set()
    rounds: list[RoundRecord] = []
    frontier: tuple[str, ...] = (outcome,)
    truncated = False

    for round_idx in range(1, round_cap + 1):
        results: dict[str, PcResult] = {}
        for target in frontier:
            results[target] = pc_fn(
                d,
                target,
                search,
                cm,
                th,
                ex=excluded,
                engine=engine,
                seed=seed,
                candidate_order=candidate_order,
            )
        new_parents: set[str] = set()
        new_children: set[str] = set()
        for target in frontier:
            parents[target] = results[target].parents
            new_parents |= results[target].parents
            new_children |= results[target].children
        visited |= set(frontier)
        excluded = excluded | frozenset(new_children - new_parents)
        rounds.append(
            RoundRecord(
                index=round_idx,
                frontier=frontier,
                parents={t: tuple(sorted(results[t].parents)) for t in frontier},
                children={t: tuple(sorted(results[t].children)) for t in frontier},
                ambiguous={t: tuple(sorted(results[t].ambiguous)) for t in frontier},
            )
        )
        next_frontier = tuple(sorted(new_parents - visited))
        if not next_frontier:
            break
        frontier = next_frontier
    else:
        truncated = True
        _warnings.warn(
            f"ancestor identification truncated after {round_cap} rounds",
            stacklevel=2,
        )

    return AncestorDict(
        parents=parents,
        excluded=excluded,
        rounds=tuple(rounds),
        truncated=truncated,
    )


def extract_key_confounders(
    ad: AncestorDict, treatment: str, outcome: str
) -> frozenset[str]:
    """Roots of the identified graph that are ancestors of both treatment
    and outcome, minus roots whose every identified path to the outcome
    runs through the treatment."""
    if outcome not in ad.parents:
        raise ContractError(f"outcome {outcome!r} was never visited")
    if treatment not in ad.nodes():
        _warnings.warn(
            "treatment was not recovered as an ancestor of the outcome",
            stacklevel=2,
        )
        return frozenset()
    an_t = ad.identified_ancestors(treatment)
    an_y = ad.identified_ancestors(outcome)
    roots = {v for v, ps in ad.parents.items() if not ps}
    candidates = roots & an_t & an_y

    pruned = AncestorDict(
        parents={
            k: frozenset(p for p in v if p != treatment)
            for k, v in ad.parents.items()
            if k != treatment
        },
        excluded=ad.excluded,
        rounds=(),
        truncated=ad.truncated,
    )
    an_y_no_t = pruned.identified_ancestors(outcome)
    return frozenset(r for r in candidates if r in an_y_no_t)


def oracle_pc(graph: GraphSpec) -> PcFunction:
    """pc_identify stand-in that reads truth from a known graph.

    Used for oracle-mode runs and the exactness checks: substituting it
    into ans_identify must reproduce the graph's true ancestor set.
    """

    def _pc(d, target, search, cm, th, ex=frozenset(), engine=None, seed=0, candidate_order="ascending"):
        pool = set(search) - set(ex) - {target}
        return PcResult(
            parents=frozenset(graph.parents(target) & pool),
            children=frozenset(graph.children(target) & pool),
            ambiguous=frozenset(),
        )

    return _pc
