"""End-to-end evaluation protocol and report generation.

For each (equation, seed) cell: sample, add noise, split 60/20/20, run
Classic, and if Classic's test MSE exceeds the gate (or Classic failed) run
every configured post-processing method with Classic's best equation as the
starting point.  Every candidate equation becomes one flat record; all
report tables are computed from those records alone, so a report can be
rebuilt from ``runs.jsonl``.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from ..eds.base import EdsModel
from ..eds.gp import GpConfig
from ..errors import RedError
from ..postproc import (
    Classic,
    HyperGrid,
    Permute,
    Red,
    Refit,
    SeededGp,
    compare_counts,
    default_grid,
    run_method,
)
from ..red import RedConfig, test_equation
from .corpus import BenchmarkEquation, load_corpus
from .protocol import PROTOCOL_SPLIT, add_noise, sample_dataset, split_dataset
from .stats import SIGNIFICANCE, quantile, wilcoxon_p

__all__ = [
    "Sweep",
    "ExperimentConfig",
    "ExperimentReport",
    "run_experiment",
    "load_experiment_config",
    "iteration_curve",
    "NOISE_LEVELS",
    "DATASET_SIZES",
]

log = logging.getLogger(__name__)

NOISE_LEVELS = (0.0, 0.1, 0.3, 0.5, 1.0)
DATASET_SIZES = (10, 20, 50, 100, 200, 300, 500)
SWEEP_KINDS = ("iterations", "noise", "size")


@dataclass(frozen=True)
class Sweep:
    kind: str
    values: tuple

    def __post_init__(self):
        if self.kind not in SWEEP_KINDS:
            raise ValueError(f"sweep kind must be one of {SWEEP_KINDS}")
        object.__setattr__(self, "values", tuple(self.values))
        if not self.values:
            raise ValueError("a sweep needs at least one value")


@dataclass(frozen=True)
class ExperimentConfig:
    equations: tuple
    rows: int = 300
    split: tuple = PROTOCOL_SPLIT
    gate_mse: float = 0.001
    seeds: tuple = (0, 1, 2)
    methods: tuple = (Red(),)
    noise: float = 0.0
    sweep: Sweep | None = None
    record_runtime: bool = True

    def __post_init__(self):
        object.__setattr__(self, "equations", tuple(self.equations))
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        object.__setattr__(self, "methods", tuple(self.methods))
        if abs(sum(self.split) - 1.0) > 1e-9:
            raise ValueError("split must sum to 1")
        if self.rows < 10:
            raise ValueError("rows must be at least 10")
        if self.noise < 0:
            raise ValueError("noise must be non-negative")
        if any(isinstance(m, Classic) for m in self.methods):
            raise ValueError("Classic always runs; do not list it in methods")


def _derive(*parts) -> int:
    words = [zlib.crc32(p.encode()) if isinstance(p, str) else abs(int(p)) for p in parts]
    return int(np.random.SeedSequence(words).generate_state(1)[0])


# ---------------------------------------------------------------------------
# running
# ---------------------------------------------------------------------------

def _method_order(methods):
    # RED first so Permute can borrow its iteration count
    return sorted(methods, key=lambda m: 0 if isinstance(m, Red) else 1)


def _records_for(result, base, gated, record_runtime, extra=None):
    runtime = float(result.runtime_seconds) if record_runtime else 0.0
    common = dict(base, method=result.method.name, gated=gated,
                  completed=result.completed, runtime_seconds=runtime)
    if extra:
        common.update(extra)
    if not result.equations:
        return [dict(common, candidate=None, equation=None, train_mse=None,
                     val_mse=None, test_mse=None, operator_count=None, is_best=False)]
    best = result.best
    out = []
    for k, eq in enumerate(result.equations):
        out.append(dict(
            common,
            candidate=k,
            equation=str(eq.expression),
            train_mse=eq.train_mse,
            val_mse=eq.val_mse,
            test_mse=eq.test_mse,
            operator_count=eq.operator_count,
            is_best=k == best,
        ))
    return out


def _trace_rows(base, trace, initial, splits, n_iter):
    """Per-iteration state of one RED run, forward-filled to ``n_iter``."""
    train, _, test = splits
    states = [initial] + [r.tree for r in trace.records]
    rows = []
    cache = {}
    for it in range(n_iter + 1):
        tree = states[min(it, len(states) - 1)]
        key = str(tree)
        if key not in cache:
            cache[key] = (test_equation(tree, train), test_equation(tree, test),
                          tree.n_operators)
        tr, te, ops = cache[key]
        rows.append(dict(base, iteration=it, train_mse=tr, test_mse=te, operators=ops))
    return rows


def run_cell(cfg: ExperimentConfig, model: EdsModel, eq: BenchmarkEquation, seed: int,
             sweep_value=None):
    """Run the protocol for one (equation, seed); returns (records, trace_rows)."""
    rows, noise, methods = cfg.rows, cfg.noise, cfg.methods
    kind = cfg.sweep.kind if cfg.sweep else None
    if kind == "size":
        rows = int(sweep_value)
    elif kind == "noise":
        noise = float(sweep_value)
    elif kind == "iterations":
        methods = tuple(
            replace(m, config=replace(m.config, i_max=int(sweep_value)))
            if isinstance(m, Red) else m
            for m in methods
        )
    base = dict(sweep=kind, sweep_value=sweep_value, dataset_id=eq.id, seed=seed)
    records, traces = [], []
    try:
        data = sample_dataset(eq, rows, _derive(seed, eq.id, "sample"))
        data = add_noise(data, noise, _derive(seed, eq.id, "noise"))
        splits = split_dataset(data, cfg.split, _derive(seed, eq.id, "split"))
    except RedError as exc:
        log.warning("%s seed %d: no data (%s)", eq.id, seed, exc)
        return [dict(base, method="Classic", gated=True, completed=False, runtime_seconds=0.0,
                     candidate=None, equation=None, train_mse=None, val_mse=None,
                     test_mse=None, operator_count=None, is_best=False,
                     error=f"{type(exc).__name__}: {exc}")], []

    classic = run_method(Classic(), model.reseeded(_derive(seed, eq.id, "Classic")),
                         None, splits, eq.id, seed)
    best = classic.best_equation
    gated = best is None or not best.test_mse <= cfg.gate_mse
    records += _records_for(classic, base, gated, cfg.record_runtime)
    if not gated:
        return records, traces

    initial = best.expression if best else None
    red_iterations = None
    for method in _method_order(methods):
        result = run_method(method, model.reseeded(_derive(seed, eq.id, method.name)),
                            initial, splits, eq.id, seed, red_iterations)
        extra = None
        if isinstance(method, Red) and "trace" in result.info:
            trace = result.info["trace"]
            red_iterations = trace.iterations
            extra = dict(iterations=trace.iterations,
                         red_input_val_mse=trace.initial_val_mse,
                         red_output_val_mse=trace.final_val_mse)
            if kind == "iterations":
                traces += _trace_rows(base, trace, initial, splits, method.config.i_max)
        records += _records_for(result, base, gated, cfg.record_runtime, extra)
    return records, traces


def _cell_job(args):
    return run_cell(*args)


def run_experiment(cfg: ExperimentConfig, model: EdsModel, out_dir=None, jobs: int = 1):
    """Run every cell of ``cfg`` and return an :class:`ExperimentReport`.

    Cells use RNG streams derived from (seed, equation id, method), so the
    result does not depend on ``jobs``.
    """
    sweep_values = cfg.sweep.values if cfg.sweep else (None,)
    cells = [(cfg, model, eq, seed, v) for v in sweep_values
             for eq in cfg.equations for seed in cfg.seeds]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(_cell_job, cells))
    else:
        outcomes = [_cell_job(c) for c in cells]
    records = [r for rec, _ in outcomes for r in rec]
    traces = [t for _, tr in outcomes for t in tr]
    report = ExperimentReport(records, traces, [m.name for m in cfg.methods])
    if out_dir is not None:
        report.write(out_dir)
    return report


# ---------------------------------------------------------------------------
# aggregation
# ---------------------------------------------------------------------------

def _fnum(x):
    return np.inf if x is None else float(x)


@dataclass
class ExperimentReport:
    records: list
    traces: list = field(default_factory=list)
    methods: list = field(default_factory=list)

    # -- grouping helpers ----------------------------------------------
    def sweep_values(self):
        seen = []
        for r in self.records:
            if r["sweep_value"] not in seen:
                seen.append(r["sweep_value"])
        return seen

    def method_names(self):
        names = ["Classic"] + list(self.methods)
        for r in self.records:
            if r["method"] not in names:
                names.append(r["method"])
        return names

    def runs(self, method, sweep_value=None):
        """``{(dataset_id, seed): [records...]}`` for one method."""
        out = {}
        for r in self.records:
            if r["method"] == method and r["sweep_value"] == sweep_value:
                out.setdefault((r["dataset_id"], r["seed"]), []).append(r)
        return out

    def gated_cells(self, sweep_value=None):
        return [k for k, recs in self.runs("Classic", sweep_value).items() if recs[0]["gated"]]

    def best_records(self, method, sweep_value=None, cells=None):
        out = {}
        for key, recs in self.runs(method, sweep_value).items():
            if cells is not None and key not in cells:
                continue
            best = [r for r in recs if r["is_best"]]
            if best:
                out[key] = best[0]
        return out

    def test_mses(self, method, key, sweep_value=None):
        recs = self.runs(method, sweep_value).get(key, [])
        return [_fnum(r["test_mse"]) for r in recs if r["completed"]]

    def pooled_win_ratio(self, a, b, sweep_value=None):
        """Wins of ``a`` over ``b`` pooled over gated cells where both completed."""
        w = d = l = 0
        for key in self.gated_cells(sweep_value):
            ma = self.test_mses(a, key, sweep_value)
            mb = self.test_mses(b, key, sweep_value)
            if not ma or not mb:
                continue
            cw, cd, cl = compare_counts(ma, mb)
            w, d, l = w + cw, d + cd, l + cl
        total = w + d + l
        return w / total if total else float("nan")

    def red_checks(self):
        """``(dataset, seed, input val MSE, output val MSE)`` of every RED run."""
        out = []
        for r in self.records:
            if r["method"] == "RED" and r.get("red_input_val_mse") is not None:
                if r["candidate"] in (0, None):
                    out.append((r["dataset_id"], r["seed"], r["sweep_value"],
                                _fnum(r["red_input_val_mse"]), _fnum(r["red_output_val_mse"])))
        return out

    # -- tables ---------------------------------------------------------
    def table(self):
        rows = []
        for sv in self.sweep_values():
            cells = set(self.gated_cells(sv))
            red_best = self.best_records("RED", sv, cells)
            for method in self.method_names():
                runs = self.runs(method, sv)
                if not runs:
                    continue
                # MSE statistics cover the gated cells for every method, Classic included
                best = self.best_records(method, sv, cells)
                mses = [_fnum(r["test_mse"]) for r in best.values()]
                ops = [r["operator_count"] for r in best.values()]
                times = [recs[0]["runtime_seconds"] for k, recs in runs.items() if k in cells]
                completed = sum(1 for recs in runs.values() if recs[0]["completed"])
                p = ""
                if method != "RED" and red_best:
                    keys = sorted(set(best) & set(red_best))
                    if keys:
                        p = wilcoxon_p([_fnum(best[k]["test_mse"]) for k in keys],
                                       [_fnum(red_best[k]["test_mse"]) for k in keys])
                rows.append({
                    "sweep_value": "" if sv is None else sv,
                    "method": method,
                    "runs": len(runs),
                    "completed": completed,
                    "mse_gt_gate": len(cells) if method == "Classic" else "",
                    "mse_q2": quantile(mses, 0.5) if mses else "",
                    "mse_q3": quantile(mses, 0.75) if mses else "",
                    "operators_q2": quantile(ops, 0.5) if ops else "",
                    "runtime_q2": quantile(times, 0.5) if times else "",
                    "win_ratio_vs_classic": (
                        "" if method == "Classic" else self.pooled_win_ratio(method, "Classic", sv)
                    ),
                    "wilcoxon_p_vs_red": p,
                    "significant_vs_red": "" if p == "" else p < SIGNIFICANCE,
                })
        return rows

    def win_matrix(self, sweep_value=None):
        names = list(self.methods)
        matrix = np.ones((len(names), len(names)))
        for i, a in enumerate(names):
            for j, b in enumerate(names):
                if i != j:
                    matrix[i, j] = self.pooled_win_ratio(a, b, sweep_value)
        return names, matrix

    def sweep_table(self):
        """Median train/test MSE and operators of best equations per sweep value."""
        rows = []
        for sv in self.sweep_values():
            cells = set(self.gated_cells(sv))
            for method in self.method_names():
                runs = self.runs(method, sv)
                if not runs:
                    continue
                scope = None if method == "Classic" else cells
                best = self.best_records(method, sv, scope)
                rows.append({
                    "sweep_value": sv,
                    "method": method,
                    "completed": len(best),
                    "median_train_mse": quantile([_fnum(r["train_mse"]) for r in best.values()], 0.5),
                    "median_test_mse": quantile([_fnum(r["test_mse"]) for r in best.values()], 0.5),
                    "median_operators": quantile([r["operator_count"] for r in best.values()], 0.5),
                })
        return rows

    # -- output ---------------------------------------------------------
    def write(self, out_dir):
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "runs.jsonl").write_text("".join(json.dumps(r) + "\n" for r in self.records))
        (out / "table.csv").write_text(_csv(self.table()))
        lines = []
        for sv in self.sweep_values():
            names, matrix = self.win_matrix(sv)
            for i, a in enumerate(names):
                row = {"sweep_value": "" if sv is None else sv, "method": a}
                row.update({b: float(matrix[i, j]) for j, b in enumerate(names)})
                lines.append(row)
        (out / "win_ratio.csv").write_text(_csv(lines))
        if self.traces:
            (out / "red_traces.jsonl").write_text(
                "".join(json.dumps(t) + "\n" for t in self.traces))
            n = max(t["iteration"] for t in self.traces)
            curve = iteration_curve(self.traces, n)
            (out / "sweep_iterations.csv").write_text(_csv([
                {"iteration": it, "mean_rel_train_mse": curve["train"][it],
                 "mean_rel_test_mse": curve["test"][it], "mean_operators": curve["operators"][it]}
                for it in range(n + 1)
            ]))
        kinds = {r["sweep"] for r in self.records} - {None, "iterations"}
        for kind in kinds:
            (out / f"sweep_{kind}.csv").write_text(_csv(self.sweep_table()))
        return out

    @classmethod
    def read(cls, out_dir, methods=None):
        out = Path(out_dir)
        records = [json.loads(l) for l in (out / "runs.jsonl").read_text().splitlines() if l]
        traces = []
        if (out / "red_traces.jsonl").exists():
            traces = [json.loads(l) for l in (out / "red_traces.jsonl").read_text().splitlines() if l]
        if methods is None:
            methods = []
            for r in records:
                if r["method"] != "Classic" and r["method"] not in methods:
                    methods.append(r["method"])
        return cls(records, traces, list(methods))


def _fmt_cell(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return int(v)
    return v


def _csv(rows):
    if not rows:
        return ""
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: _fmt_cell(v) for k, v in r.items()})
    return buf.getvalue()


def iteration_curve(trace_rows, n_iter):
    """Mean per-dataset-normalised train/test MSE and mean operators per iteration.

    Each run's MSE curve is divided by its own maximum so the worst
    iteration is 1.  Runs with a non-finite MSE anywhere are left out of
    the MSE means but still count towards the operator curve.
    """
    runs = {}
    for t in trace_rows:
        runs.setdefault((t["dataset_id"], t["seed"], t["sweep_value"]), []).append(t)
    train, test, ops = [], [], []
    for rows in runs.values():
        rows = sorted(rows, key=lambda t: t["iteration"])
        vals = {k: np.array([_fnum(r[k]) for r in rows])[: n_iter + 1]
                for k in ("train_mse", "test_mse")}
        ops.append(np.array([r["operators"] for r in rows], dtype=float)[: n_iter + 1])
        for key, bucket in (("train_mse", train), ("test_mse", test)):
            v = vals[key]
            if np.all(np.isfinite(v)):
                top = v.max()
                bucket.append(v / top if top > 0 else np.zeros_like(v))
    nan = np.full(n_iter + 1, np.nan)
    return {
        "train": np.mean(train, axis=0) if train else nan,
        "test": np.mean(test, axis=0) if test else nan,
        "operators": np.mean(ops, axis=0) if ops else nan,
        "n_runs": len(runs),
        "n_finite_test": len(test),
    }


# ---------------------------------------------------------------------------
# config files
# ---------------------------------------------------------------------------

def _method_from_json(entry, red_cfg, gp_cfg):
    if isinstance(entry, str):
        entry = {"name": entry}
    name = entry["name"].lower()
    if name == "red":
        return Red(replace(red_cfg, **{k: v for k, v in entry.items() if k != "name"}))
    if name == "permute":
        return Permute(entry.get("n"))
    if name in ("hypergrid", "hyper"):
        return HyperGrid(default_grid(gp_cfg))
    if name in ("refit", "fitting"):
        return Refit()
    if name in ("seededgp", "seeded"):
        return SeededGp(gp_cfg)
    raise ValueError(f"unknown method {entry['name']!r}")


def load_experiment_config(path, overrides=None):
    """Build ``(ExperimentConfig, GpConfig)`` from a JSON file.

    Recognised keys: ``corpus`` (manifest path, default bundled corpus),
    ``equations`` (ids to keep), ``rows``, ``split``, ``gate_mse``,
    ``seeds``, ``methods`` (names or ``{"name": ..., ...}``), ``red``
    (``i_max``, ``T``), ``gp`` (GpConfig fields), ``noise``, ``sweep``
    (``{"kind": ..., "values": [...]}``), ``record_runtime``.
    """
    raw = json.loads(Path(path).read_text()) if path else {}
    raw.update({k: v for k, v in (overrides or {}).items() if v is not None})
    corpus = raw.get("corpus")
    if corpus and not Path(corpus).is_absolute() and path:
        corpus = str(Path(path).parent / corpus)
    equations = load_corpus(corpus)
    if raw.get("equations"):
        wanted = list(raw["equations"])
        by_id = {e.id: e for e in equations}
        missing = [w for w in wanted if w not in by_id]
        if missing:
            raise ValueError(f"unknown equation ids: {missing}")
        equations = [by_id[w] for w in wanted]
    gp_cfg = GpConfig(**raw.get("gp", {}))
    red_cfg = RedConfig(**raw.get("red", {}))
    methods = tuple(_method_from_json(m, red_cfg, gp_cfg) for m in raw.get("methods", ["RED"]))
    sweep = raw.get("sweep")
    cfg = ExperimentConfig(
        equations=equations,
        rows=int(raw.get("rows", 300)),
        split=tuple(raw.get("split", PROTOCOL_SPLIT)),
        gate_mse=float(raw.get("gate_mse", 0.001)),
        seeds=tuple(raw.get("seeds", (0, 1, 2))),
        methods=methods,
        noise=float(raw.get("noise", 0.0)),
        sweep=Sweep(sweep["kind"], sweep["values"]) if sweep else None,
        record_runtime=bool(raw.get("record_runtime", True)),
    )
    return cfg, gp_cfg
