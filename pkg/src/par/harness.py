"""Experiment driver: config parsing, pipeline dispatch, metrics, and
deterministic result files.

Per-image RNG seeds are base_seed XOR run_index (run_index counts images
within each repetition), so a suite is reproducible row by row and
repetitions decorrelate.  Outputs: results.csv (fixed column set),
summary.json (aggregates), one stored final adversarial image per
attacked row, and per-run query-vs-distance curves.  No timestamps or
environment data are written, so identical configs give byte-identical
CSVs.
"""

import csv
import json
import logging
import os
import statistics
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .attacks import (AttackConfig, boundary_attack, boundary_followup,
                      compose, init_adversarial)
from .core import round_for_query
from .errors import ContractViolation, InitFailed
from .imgio import write_heatmap_pgm, write_parimg
from .oracle import external_oracle_connect
from .synth import load_manifest, oracle_from_entry

log = logging.getLogger("par")

CSV_COLUMNS = ["image_id", "pipeline", "budget", "queries_used",
               "init_queries", "par_queries", "followup_queries",
               "final_l2", "seed"]

PIPELINES = ("par", "boundary", "par+boundary", "par+custom")


@dataclass
class ExperimentConfig:
    dataset: str
    oracle: dict
    attack: AttackConfig = field(default_factory=AttackConfig)
    pipeline: str = "par+boundary"
    repetitions: int = 1
    output_dir: str = "par_out"
    workers: int = 1
    save_finals: bool = True
    save_curves: bool = True

    def __post_init__(self):
        if self.pipeline not in PIPELINES:
            raise ContractViolation(
                "pipeline must be one of %r, got %r" % (PIPELINES, self.pipeline))
        if self.repetitions < 1:
            raise ContractViolation("repetitions must be >= 1")
        if self.workers < 1:
            raise ContractViolation("workers must be >= 1")
        if not isinstance(self.oracle, dict) or "kind" not in self.oracle:
            raise ContractViolation("oracle spec must be a dict with a 'kind'")

    @staticmethod
    def from_dict(doc, **overrides):
        doc = dict(doc)
        doc.update({k: v for k, v in overrides.items() if v is not None})
        if "dataset" not in doc or "oracle" not in doc:
            raise ContractViolation("config needs 'dataset' and 'oracle'")
        attack = doc.get("attack", {})
        if isinstance(attack, dict):
            attack = AttackConfig(**attack)
        return ExperimentConfig(
            dataset=doc["dataset"], oracle=doc["oracle"], attack=attack,
            pipeline=doc.get("pipeline", "par+boundary"),
            repetitions=int(doc.get("repetitions", 1)),
            output_dir=doc.get("output_dir", "par_out"),
            workers=int(doc.get("workers", 1)),
            save_finals=bool(doc.get("save_finals", True)),
            save_curves=bool(doc.get("save_curves", True)))

    @staticmethod
    def from_json(path, **overrides):
        with open(path) as f:
            return ExperimentConfig.from_dict(json.load(f), **overrides)


@dataclass
class RunResult:
    rows: list
    median_l2: float
    average_l2: float
    skipped: list
    csv_path: str
    summary_path: str


def aggregate(distances):
    """(median, average); median of an even count is the midpoint pair mean."""
    values = [float(v) for v in distances]
    if not values:
        raise ContractViolation("aggregate needs at least one distance")
    return float(statistics.median(values)), float(statistics.fmean(values))


def distance_curve(state_log, budget, stride=1):
    """Running best l2 over successful queries, sampled at query indices
    stride, 2*stride, ... budget.  Indices before the first success carry
    inf."""
    best = float("inf")
    per_query = {}
    for e in state_log.entries:
        if e.success and e.l2 < best:
            best = e.l2
        per_query[e.query_index] = best
    out = []
    best = float("inf")
    for q in range(1, budget + 1):
        if q in per_query:
            best = per_query[q]
        if q % stride == 0:
            out.append((q, best))
    return out


def _attack_rng_seed(base_seed, run_index):
    return int(base_seed) ^ int(run_index)


def _run_single(oracle, entry, cfg, seed, followup):
    """Attack one image; returns a row dict plus the final state."""
    atk = replace(cfg.attack, seed=seed)
    x, y = entry["image"], entry["label"]
    if cfg.pipeline == "boundary":
        state = init_adversarial(oracle, x, y, atk)
        boundary_attack(oracle, state, atk.boundary_delta, atk.boundary_epsilon,
                        budget=state.counter.remaining)
    elif cfg.pipeline == "par":
        state = compose(oracle, x, y, atk, followup=None)
    elif cfg.pipeline == "par+boundary":
        state = compose(oracle, x, y, atk, followup=boundary_followup)
    else:  # par+custom
        if followup is None:
            raise ContractViolation("pipeline par+custom needs a followup callable")
        state = compose(oracle, x, y, atk, followup=followup)
    counts = state.log.phase_counts()
    row = {
        "image_id": entry["id"],
        "pipeline": cfg.pipeline,
        "budget": atk.budget,
        "queries_used": state.queries_used,
        "init_queries": counts["init"],
        "par_queries": counts["par"],
        "followup_queries": counts["followup"],
        "final_l2": state.final_l2(),
        "seed": seed,
    }
    return row, state


def _make_oracle(cfg, entry):
    kind = cfg.oracle["kind"]
    if kind == "energy":
        return oracle_from_entry(entry)
    if kind == "external":
        return external_oracle_connect(cfg.oracle["endpoint"],
                                       timeout=float(cfg.oracle.get("timeout", 30.0)))
    raise ContractViolation("unknown oracle kind %r" % (kind,))


def _fmt(value):
    if isinstance(value, float):
        return "%.10g" % value
    return str(value)


def run_experiment(cfg, followup=None):
    """Run the configured pipeline over the whole dataset.

    Images the oracle does not classify as their recorded label are
    written as rows with nan final_l2 and zero queries, excluded from the
    aggregates.  Returns a RunResult; all files land under
    cfg.output_dir.
    """
    entries = load_manifest(cfg.dataset)
    os.makedirs(cfg.output_dir, exist_ok=True)
    finals_dir = os.path.join(cfg.output_dir, "finals")
    curves_dir = os.path.join(cfg.output_dir, "curves")
    if cfg.save_finals:
        os.makedirs(finals_dir, exist_ok=True)
    if cfg.save_curves:
        os.makedirs(curves_dir, exist_ok=True)

    jobs = []
    for rep in range(cfg.repetitions):
        for entry in entries:
            run_index = rep * len(entries) + entry["index"]
            jobs.append((rep, entry, _attack_rng_seed(cfg.attack.seed, run_index)))

    def work(job):
        rep, entry, seed = job
        oracle = _make_oracle(cfg, entry)
        try:
            label0 = int(oracle.classify(round_for_query(entry["image"])))
            if label0 != entry["label"]:
                log.warning("skipping %s: oracle says %d, manifest says %d",
                            entry["id"], label0, entry["label"])
                row = {
                    "image_id": entry["id"], "pipeline": cfg.pipeline,
                    "budget": cfg.attack.budget, "queries_used": 0,
                    "init_queries": 0, "par_queries": 0, "followup_queries": 0,
                    "final_l2": float("nan"), "seed": seed,
                }
                return rep, entry, row, None
            try:
                row, state = _run_single(oracle, entry, cfg, seed, followup)
            except InitFailed as e:
                # no adversarial start inside the budget: report, don't abort
                log.warning("init failed on %s: %s", entry["id"], e)
                st = e.state
                counts = st.log.phase_counts()
                row = {
                    "image_id": entry["id"], "pipeline": cfg.pipeline,
                    "budget": cfg.attack.budget,
                    "queries_used": st.queries_used,
                    "init_queries": counts["init"], "par_queries": 0,
                    "followup_queries": 0, "final_l2": float("inf"),
                    "seed": seed,
                }
                return rep, entry, row, None
            return rep, entry, row, state
        finally:
            close = getattr(oracle, "close", None)
            if close is not None:
                close()

    if cfg.workers == 1:
        outcomes = [work(j) for j in jobs]
    else:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            outcomes = list(pool.map(work, jobs))

    rows, skipped = [], []
    for rep, entry, row, state in outcomes:
        rows.append(row)
        tag = "%s_rep%d" % (entry["id"], rep)
        if state is None:
            if np.isnan(row["final_l2"]):
                skipped.append(tag)
            continue
        if cfg.save_finals and state.x_star is not None:
            write_parimg(os.path.join(finals_dir, tag + ".pimg"), state.x_star)
        if cfg.save_curves:
            with open(os.path.join(curves_dir, tag + ".csv"), "w", newline="") as f:
                w = csv.writer(f, lineterminator="\n")
                w.writerow(["query_index", "best_l2"])
                for q, best in distance_curve(state.log, state.queries_used):
                    w.writerow([q, _fmt(best)])

    csv_path = os.path.join(cfg.output_dir, "results.csv")
    with open(csv_path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for row in rows:
            w.writerow([_fmt(row[col]) for col in CSV_COLUMNS])

    finite = [r for r in rows if np.isfinite(r["final_l2"])]
    usable = [r["final_l2"] for r in finite]
    if usable:
        median_l2, average_l2 = aggregate(usable)
    else:
        median_l2 = average_l2 = float("nan")
    summary = {
        "pipeline": cfg.pipeline,
        "images": len(entries),
        "repetitions": cfg.repetitions,
        "attacked": len(usable),
        "init_failed": sum(1 for r in rows if r["final_l2"] == float("inf")),
        "skipped": sorted(skipped),
        "median_l2": median_l2,
        "average_l2": average_l2,
        "median_queries": (float(statistics.median(
            [r["queries_used"] for r in finite])) if usable else float("nan")),
    }
    summary_path = os.path.join(cfg.output_dir, "summary.json")
    with open(summary_path, "w") as f:
        json.dump(summary, f, indent=2, sort_keys=True)
        f.write("\n")
    return RunResult(rows=rows, median_l2=median_l2, average_l2=average_l2,
                     skipped=sorted(skipped), csv_path=csv_path,
                     summary_path=summary_path)


def export_heatmap(matrix, path):
    """Matrix -> PGM, max rescaled to 255 (all-zero stays all-zero)."""
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.size and (np.any(~np.isfinite(matrix)) or np.any(matrix < 0)):
        raise ContractViolation("heatmap entries must be finite and non-negative")
    write_heatmap_pgm(path, matrix)
