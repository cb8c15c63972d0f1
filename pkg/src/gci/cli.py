"""Command-line orchestration: data generation, discovery, estimation,
the seeded benchmark and the adjustment-equivalence audit.

Every command is deterministic given its effective configuration: one
root seed fans out to labeled sub-seeds, outputs carry no timestamps,
floats are written with repr, and a manifest lists every written file
with its SHA-256.  Exit codes: 0 ok, 1 contract violation, 2 I/O error,
3 completed with warnings.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import warnings as _warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import discovery, estimate, scm, stats
from .dataset import Dataset
from .errors import CapacityError, GciError
from .graph import GraphSpec, classify_nodes, descendants, key_confounders_oracle
from .seeding import subseed

EXIT_OK = 0
EXIT_CONTRACT = 1
EXIT_IO = 2
EXIT_WARNINGS = 3

TRUTH_PANEL_SIZE = 20000
TEST_QUANTILE = 0.8


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    n: int = 1000
    theta_r: float = 0.1
    theta_i: float = 0.05
    theta_d: float = 0.05
    max_cond_size: int = 3
    graph_fixture: str | None = None
    t_grid_size: int = 10
    estimator: str = "both"  # regadj | ipw | both
    adjustment: str = "discovered"  # discovered | oracle | full
    replicates: int = 20
    workers: int = 1
    out: str = "gci-out"
    noise_csv: bool = False
    verify_graphs: int = 500
    round_cap: int = 20
    treatment: str = "t"
    outcome: str = "y"

    def thresholds(self) -> discovery.Thresholds:
        return discovery.Thresholds(
            theta_r=self.theta_r,
            theta_i=self.theta_i,
            theta_d=self.theta_d,
            max_cond_size=self.max_cond_size,
        )

    def estimators(self) -> tuple[str, ...]:
        if self.estimator == "both":
            return ("regadj", "ipw")
        if self.estimator in ("regadj", "ipw"):
            return (self.estimator,)
        raise GciError(f"unknown estimator {self.estimator!r}")


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"config file {path} not found")
    return json.loads(p.read_text(encoding="utf-8"))


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Precedence: CLI flag > GCI_SEED env (seed only) > config file > default."""
    cfg = RunConfig()
    file_values = _load_config(getattr(args, "config", None))
    known = set(cfg.__dataclass_fields__)
    bad = set(file_values) - known
    if bad:
        raise GciError(f"unknown config keys: {sorted(bad)}")
    cfg = replace(cfg, **file_values)
    env_seed = os.environ.get("GCI_SEED")
    if env_seed is not None:
        cfg = replace(cfg, seed=int(env_seed))
    overrides = {
        k: v
        for k, v in vars(args).items()
        if k in known and v is not None
    }
    cfg = replace(cfg, **overrides)
    if cfg.graph_fixture is not None and not Path(cfg.graph_fixture).exists():
        raise FileNotFoundError(f"graph fixture {cfg.graph_fixture} not found")
    return cfg


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_manifest(out_dir: Path, command: str, cfg: RunConfig, files: list[Path], extra: dict | None = None) -> None:
    doc = {
        "command": command,
        "config": asdict(cfg),
        "files": {p.name: _sha256(p) for p in sorted(files)},
    }
    if extra:
        doc.update(extra)
    (out_dir / "manifest.json").write_text(
        json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def _load_scm(cfg: RunConfig) -> scm.ScmSpec:
    """Benchmark model by default; a fixture path may hold a full SCM
    document or a bare graph (mechanisms then use drawn weights and unit
    noise)."""
    if cfg.graph_fixture is None:
        return scm.benchmark_scm()
    doc = json.loads(Path(cfg.graph_fixture).read_text(encoding="utf-8"))
    if "mechanisms" in doc:
        return scm.ScmSpec.from_json(json.dumps(doc))
    if "graph" in doc:
        graph = GraphSpec(**{k: doc["graph"][k] for k in ("nodes", "edges", "treatment", "outcome")})
    else:
        graph = GraphSpec(doc["nodes"], doc["edges"], doc["treatment"], doc["outcome"])
    weights = scm.draw_weights(graph, subseed(cfg.seed, "weights"))
    mechs = {}
    for node in graph.nodes:
        ps = tuple(sorted(graph.parents(node)))
        mechs[node] = scm.Mechanism(
            parents=ps,
            weights=tuple(weights[(p, node)] for p in ps),
        )
    return scm.ScmSpec(graph, mechs)


def _graph_for_oracle(cfg: RunConfig) -> GraphSpec:
    return _load_scm(cfg).graph


# --- generate -------------------------------------------------------------


def cmd_generate(cfg: RunConfig) -> int:
    out_dir = Path(cfg.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    model = _load_scm(cfg)
    result = scm.sample(model, cfg.n, subseed(cfg.seed, "sample"))
    files = []
    data_path = out_dir / "dataset.csv"
    result.data.to_csv(data_path)
    files.append(data_path)
    if cfg.noise_csv:
        noise_path = out_dir / "noise.csv"
        result.noise.to_csv(noise_path)
        files.append(noise_path)
    scm_path = out_dir / "scm.json"
    scm_path.write_text(model.to_json(), encoding="utf-8")
    files.append(scm_path)
    _write_manifest(
        out_dir,
        "generate",
        cfg,
        files,
        extra={
            "columns": list(result.data.columns),
            "scm_sha256": hashlib.sha256(model.to_json().encode()).hexdigest(),
        },
    )
    print(f"wrote {data_path} ({result.data.n_rows} rows x {len(result.data.columns)} columns)")
    return EXIT_OK


# --- discover -------------------------------------------------------------


def _print_rounds(ad: discovery.AncestorDict) -> None:
    print(f"{'round':<6}{'target':<8}{'parents':<28}{'children':<22}ambiguous")
    for rec in ad.rounds:
        for target in rec.frontier:
            par = ", ".join(rec.parents.get(target, ())) or "-"
            chi = ", ".join(rec.children.get(target, ())) or "-"
            amb = ", ".join(rec.ambiguous.get(target, ())) or "-"
            print(f"{rec.index:<6}{target:<8}{par:<28}{chi:<22}{amb}")


def cmd_discover(cfg: RunConfig, dataset_path: str, oracle: bool = False) -> int:
    out_dir = Path(cfg.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    data = Dataset.from_csv(dataset_path)
    for col in (cfg.treatment, cfg.outcome):
        if col not in data.columns:
            raise GciError(f"dataset has no column {col!r}")
    if data.n_rows < 100:
        raise GciError("discovery needs n >= 100 rows")
    pc = discovery.oracle_pc(_graph_for_oracle(cfg)) if oracle else None
    with _warnings.catch_warnings(record=True) as caught:
        _warnings.simplefilter("always")
        ad = discovery.ans_identify(
            data,
            cfg.treatment,
            cfg.outcome,
            th=cfg.thresholds(),
            seed=cfg.seed,
            round_cap=cfg.round_cap,
            pc=pc,
        )
        xastar = discovery.extract_key_confounders(ad, cfg.treatment, cfg.outcome)
    ad_path = out_dir / "ancestors.json"
    ad_path.write_text(ad.to_json(), encoding="utf-8")
    xas_path = out_dir / "key_confounders.json"
    xas_path.write_text(json.dumps(sorted(xastar)) + "\n", encoding="utf-8")
    _write_manifest(out_dir, "discover", cfg, [ad_path, xas_path])
    _print_rounds(ad)
    print(f"identified ancestors of {cfg.outcome}: {sorted(ad.identified_ancestors(cfg.outcome))}")
    print(f"key confounders: {sorted(xastar)}")
    if ad.truncated or caught:
        for w in caught:
            print(f"warning: {w.message}", file=sys.stderr)
        return EXIT_WARNINGS
    return EXIT_OK


# --- estimate ---------------------------------------------------------------


def _adjustment_for(cfg: RunConfig, data: Dataset, fit_rows: Dataset) -> estimate.AdjustmentSet:
    covs = tuple(c for c in data.columns if c not in (cfg.treatment, cfg.outcome))
    if cfg.adjustment == "full":
        return estimate.AdjustmentSet(covs, "full-covariates")
    if cfg.adjustment == "oracle":
        names = tuple(sorted(key_confounders_oracle(_graph_for_oracle(cfg))))
        return estimate.AdjustmentSet(names, "oracle")
    if cfg.adjustment == "discovered":
        ad = discovery.ans_identify(
            fit_rows,
            cfg.treatment,
            cfg.outcome,
            th=cfg.thresholds(),
            seed=cfg.seed,
            round_cap=cfg.round_cap,
        )
        names = tuple(sorted(discovery.extract_key_confounders(ad, cfg.treatment, cfg.outcome)))
        return estimate.AdjustmentSet(names, "discovered")
    raise GciError(f"unknown adjustment {cfg.adjustment!r}")


def cmd_estimate(cfg: RunConfig, dataset_path: str) -> int:
    out_dir = Path(cfg.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    data = Dataset.from_csv(dataset_path)
    adj = _adjustment_for(cfg, data, data)
    grid = estimate.quantile_grid(data.column(cfg.treatment), cfg.t_grid_size)
    files = []
    warned = False
    for name in cfg.estimators():
        if name == "regadj":
            curve = estimate.regression_adjust(
                data, adj, grid, cfg.treatment, cfg.outcome, seed=cfg.seed
            )
        else:
            curve = estimate.ipw_curve(
                data, adj, grid, cfg.treatment, cfg.outcome, seed=cfg.seed
            )
        path = out_dir / f"effect_{name}.csv"
        curve.to_csv(path)
        files.append(path)
        warned = warned or bool(curve.warnings)
        for w in curve.warnings:
            print(f"warning [{name}]: {w}", file=sys.stderr)
        print(f"{name}: adjustment={list(adj.names)} ({adj.provenance}); wrote {path}")
    _write_manifest(out_dir, "estimate", cfg, files)
    return EXIT_WARNINGS if warned else EXIT_OK


# --- benchmark --------------------------------------------------------------


@dataclass(frozen=True)
class SeedOutcome:
    seed_index: int
    adjustment: tuple[str, ...] = ()
    x3_hit: bool = False
    contaminated: bool = False
    eps: dict = field(default_factory=dict)  # (estimator, provenance, split) -> float
    failure: str | None = None
    warnings: tuple[str, ...] = ()


def _benchmark_one_seed(cfg: RunConfig, index: int) -> SeedOutcome:
    try:
        model = scm.benchmark_scm() if cfg.graph_fixture is None else _load_scm(cfg)
        graph = model.graph
        roles_post = descendants(graph, graph.treatment) | {graph.outcome}
        result = scm.sample(model, cfg.n, subseed(cfg.seed, "bench", index, "sample"))
        data = result.data
        t_col = data.column(graph.treatment)
        cut = float(np.quantile(t_col, TEST_QUANTILE))
        test_mask = t_col > cut
        if test_mask.sum() < 10 or (~test_mask).sum() < 100:
            raise GciError("degenerate treatment split")
        train = data.take(~test_mask)
        test = data.take(test_mask)

        warnings_seen: list[str] = []
        if cfg.adjustment == "discovered":
            with _warnings.catch_warnings(record=True) as caught:
                _warnings.simplefilter("always")
                ad = discovery.ans_identify(
                    train,
                    graph.treatment,
                    graph.outcome,
                    th=cfg.thresholds(),
                    seed=subseed(cfg.seed, "bench", index, "discover"),
                    round_cap=cfg.round_cap,
                )
                found = discovery.extract_key_confounders(ad, graph.treatment, graph.outcome)
            warnings_seen.extend(str(w.message) for w in caught)
            selected = estimate.AdjustmentSet(tuple(sorted(found)), "discovered")
        elif cfg.adjustment == "oracle":
            selected = estimate.AdjustmentSet(
                tuple(sorted(key_confounders_oracle(graph))), "oracle"
            )
        else:
            raise GciError("benchmark adjustment must be 'discovered' or 'oracle'")
        full = estimate.AdjustmentSet(
            tuple(c for c in graph.covariates), "full-covariates"
        )

        grids = {
            "training": estimate.quantile_grid(train.column(graph.treatment), cfg.t_grid_size),
            "test": estimate.quantile_grid(test.column(graph.treatment), cfg.t_grid_size),
        }
        truths = {
            split: scm.true_mtef(
                model, grid, TRUTH_PANEL_SIZE, subseed(cfg.seed, "bench", "truth", split)
            )
            for split, grid in grids.items()
        }
        eps: dict = {}
        for est_name in cfg.estimators():
            for adj in (full, selected):
                for split, grid in grids.items():
                    eval_rows = train if split == "training" else test
                    est_seed = subseed(cfg.seed, "bench", index, est_name, adj.provenance, split)
                    if est_name == "regadj":
                        curve = estimate.adjusted_means(
                            train, eval_rows, graph.treatment, graph.outcome, adj, grid, seed=est_seed
                        )
                    else:
                        curve = estimate.ipw_curve(
                            train, adj, grid, graph.treatment, graph.outcome,
                            seed=est_seed, check_support=False,
                        )
                    warnings_seen.extend(curve.warnings)
                    eps[(est_name, adj.provenance, split)] = estimate.mtef_rmse(
                        truths[split], curve
                    )
        x3 = "X3" in selected.names if cfg.graph_fixture is None else None
        contaminated = bool(set(selected.names) & roles_post)
        return SeedOutcome(
            seed_index=index,
            adjustment=selected.names,
            x3_hit=bool(x3),
            contaminated=contaminated,
            eps=eps,
            warnings=tuple(warnings_seen),
        )
    except GciError as exc:
        return SeedOutcome(seed_index=index, failure=str(exc))


def _aggregate(rows: list[SeedOutcome], key: tuple) -> tuple[float, float, int]:
    vals = [r.eps[key] for r in rows if r.failure is None and key in r.eps]
    if not vals:
        return float("nan"), float("nan"), 0
    arr = np.array(vals)
    stderr = float(arr.std(ddof=1) / np.sqrt(len(arr))) if len(arr) > 1 else 0.0
    return float(arr.mean()), stderr, len(arr)


def cmd_benchmark(cfg: RunConfig) -> int:
    out_dir = Path(cfg.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    indices = list(range(cfg.replicates))
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            outcomes = list(pool.map(_benchmark_one_seed, [cfg] * len(indices), indices))
    else:
        outcomes = [_benchmark_one_seed(cfg, i) for i in indices]
    outcomes.sort(key=lambda o: o.seed_index)

    ok = [o for o in outcomes if o.failure is None]
    provenance = "oracle" if cfg.adjustment == "oracle" else "discovered"

    csv_lines = ["seed,estimator,adjustment,split,eps_mtef"]
    for o in ok:
        for (est_name, prov, split), value in sorted(o.eps.items()):
            csv_lines.append(f"{o.seed_index},{est_name},{prov},{split},{value!r}")
    csv_path = out_dir / "benchmark.csv"
    csv_path.write_text("\n".join(csv_lines) + "\n", encoding="utf-8")

    hits = sum(o.x3_hit for o in ok)
    dirty = sum(o.contaminated for o in ok)
    lines = [
        "# Benchmark report",
        "",
        f"Replicates: {cfg.replicates} requested, {len(ok)} completed, {len(outcomes) - len(ok)} failed.",
        f"Adjustment provenance: {provenance}. Thresholds fixed at defaults (no grid search).",
        "",
        f"Key-confounder hit rate (X3 in selection): {hits}/{len(ok)}",
        f"Post-treatment contamination rate: {dirty}/{len(ok)}",
        "",
        "| Method | Training (full) | Training (selected) | Test (full) | Test (selected) |",
        "|---|---|---|---|---|",
    ]
    for est_name in cfg.estimators():
        cells = []
        for split in ("training", "test"):
            for prov in ("full-covariates", provenance):
                mean, se, count = _aggregate(ok, (est_name, prov, split))
                cells.append((split, prov, mean, se, count))
        ordered = [cells[0], cells[1], cells[2], cells[3]]
        row = " | ".join(f"{m:.4f} +/- {s:.4f}" for _, _, m, s, _ in ordered)
        lines.append(f"| {est_name} | {row} |")
    md_path = out_dir / "benchmark.md"
    md_path.write_text("\n".join(lines) + "\n", encoding="utf-8")

    # aggregates must be recomputable from the per-seed rows
    recheck = Dataset.from_csv(csv_path) if False else None  # rows hold strings; checked below
    for est_name in cfg.estimators():
        for split in ("training", "test"):
            for prov in ("full-covariates", provenance):
                mean, _, count = _aggregate(ok, (est_name, prov, split))
                if count and not np.isfinite(mean):
                    raise GciError("aggregate mismatch in benchmark report")

    _write_manifest(
        out_dir,
        "benchmark",
        cfg,
        [csv_path, md_path],
        extra={
            "failures": {str(o.seed_index): o.failure for o in outcomes if o.failure},
            "x3_hits": hits,
            "contaminated": dirty,
            "completed": len(ok),
        },
    )
    print("\n".join(lines))
    if any(o.failure for o in outcomes) or any(o.warnings for o in ok):
        return EXIT_WARNINGS
    return EXIT_OK


# --- verify -----------------------------------------------------------------


def cmd_verify(cfg: RunConfig) -> int:
    out_dir = Path(cfg.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    lines = ["graph,nodes,confounders,max_discrepancy,skipped_cells"]
    worst = 0.0
    skipped_graphs = 0
    for i in range(cfg.verify_graphs):
        model = scm.random_discrete_scm(subseed(cfg.seed, "verify", i))
        try:
            audit = scm.verify_adjustment_equivalence(model)
        except CapacityError as exc:
            skipped_graphs += 1
            lines.append(f"{i},{len(model.graph.nodes)},SKIPPED({exc}),,")
            continue
        worst = max(worst, audit.max_discrepancy)
        conf = ";".join(audit.confounders) or "-"
        lines.append(
            f"{i},{len(model.graph.nodes)},{conf},{audit.max_discrepancy!r},{audit.skipped_cells}"
        )
    path = out_dir / "verify.csv"
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    _write_manifest(out_dir, "verify", cfg, [path], extra={"max_discrepancy": worst})
    print(f"audited {cfg.verify_graphs} random binary models "
          f"({skipped_graphs} skipped); max discrepancy {worst:.3e}")
    return EXIT_OK


# --- test-dump ----------------------------------------------------------------


def cmd_test_dump(cfg: RunConfig, dataset_path: str, cond: list[str]) -> int:
    out_dir = Path(cfg.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    data = Dataset.from_csv(dataset_path)
    engine = stats.CiEngine(data, seed=cfg.seed)
    lines = ["a,b,cond,statistic,p_value"]
    names = [c for c in data.columns if c not in cond]
    for i, a in enumerate(names):
        for b in names[i + 1 :]:
            res = engine.gcm_test(a, b, cond)
            lines.append(f"{a},{b},{';'.join(cond) or '-'},{res.statistic!r},{res.p_value!r}")
    path = out_dir / "test_dump.csv"
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"wrote {path} ({len(lines) - 1} tests)")
    return EXIT_OK


# --- entry point ----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gci",
        description="Ancestor-set discovery of key confounders and de-confounded effect estimation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--seed", type=int)
        p.add_argument("--n", type=int)
        p.add_argument("--theta-r", dest="theta_r", type=float)
        p.add_argument("--theta-i", dest="theta_i", type=float)
        p.add_argument("--theta-d", dest="theta_d", type=float)
        p.add_argument("--graph-fixture", dest="graph_fixture")
        p.add_argument("--t-grid-size", dest="t_grid_size", type=int)
        p.add_argument("--estimator", choices=["regadj", "ipw", "both"])
        p.add_argument("--adjustment", choices=["discovered", "oracle", "full"])
        p.add_argument("--replicates", type=int)
        p.add_argument("--workers", type=int)
        p.add_argument("--round-cap", dest="round_cap", type=int)
        p.add_argument("--treatment")
        p.add_argument("--outcome")
        p.add_argument("--out")

    p_gen = sub.add_parser("generate", help="sample the benchmark model to CSV")
    add_common(p_gen)
    p_gen.add_argument("--noise-csv", dest="noise_csv", action="store_const", const=True)

    p_disc = sub.add_parser("discover", help="identify the outcome's ancestor set")
    add_common(p_disc)
    p_disc.add_argument("dataset")
    p_disc.add_argument("--oracle", action="store_true", help="read the fixture graph instead of testing")

    p_est = sub.add_parser("estimate", help="fit effect curves on a dataset")
    add_common(p_est)
    p_est.add_argument("dataset")

    p_bench = sub.add_parser("benchmark", help="full seeded generate/discover/estimate loop")
    add_common(p_bench)

    p_ver = sub.add_parser("verify", help="backdoor-vs-enumeration audit on random binary models")
    add_common(p_ver)
    p_ver.add_argument("--graphs", dest="verify_graphs", type=int)

    p_dump = sub.add_parser("test-dump", help="dump pairwise CI test results as CSV")
    add_common(p_dump)
    p_dump.add_argument("dataset")
    p_dump.add_argument("--cond", nargs="*", default=[])

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
        if args.command == "generate":
            return cmd_generate(cfg)
        if args.command == "discover":
            return cmd_discover(cfg, args.dataset, oracle=args.oracle)
        if args.command == "estimate":
            return cmd_estimate(cfg, args.dataset)
        if args.command == "benchmark":
            return cmd_benchmark(cfg)
        if args.command == "verify":
            return cmd_verify(cfg)
        if args.command == "test-dump":
            return cmd_test_dump(cfg, args.dataset, list(args.cond))
        raise GciError(f"unknown command {args.command!r}")
    except GciError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONTRACT
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
