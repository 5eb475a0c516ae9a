"""Command-line entry point: ``redeq {fit,red,bench,residual,inspect}``.

Exit status is 0 on success, 1 on a usage error, 2 on a data error and 3 on
any other failure.  Diagnostics go to stderr.  Setting ``RED_EDS_CMD`` to a
launch command replaces the built-in GP with an external equation discovery
process for every subcommand.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from dataclasses import replace

from .data import read_csv
from .eds import ExternalModel, GpConfig, GpModel
from .errors import DataError, EquationSyntaxError, NodeNotFound, RedError, TooFewRows, VariableOutOfRange
from .expr import NodeKind, check_variables, parse_expression, print_expression
from .bench.protocol import PROTOCOL_SPLIT, add_noise, split_dataset
from .bench.runner import load_experiment_config, run_experiment
from .postproc import Classic, Red, run_method
from .red import RedConfig, red_refine, test_equation
from .residual import build_residual_list, compute_residual

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3
ENV_EDS = "RED_EDS_CMD"

log = logging.getLogger("redeq")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _num(x):
    """JSON-safe float."""
    if x is None:
        return None
    x = float(x)
    return x if math.isfinite(x) else str(x)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="redeq", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, data=True):
        if data:
            sp.add_argument("--data", required=True, metavar="PATH", help="CSV with columns x0..xn,y")
        sp.add_argument("--seed", type=int, default=0, help="seed for splitting and the GP (default 0)")
        sp.add_argument("--json", action="store_true", help="one JSON record per output line")

    def gp_flags(sp):
        sp.add_argument("--population", type=int, default=None, help="GP population size")
        sp.add_argument("--generations", type=int, default=None, help="GP generations")

    sp = sub.add_parser("fit", help="run the Classic EDS on a CSV")
    common(sp)
    sp.add_argument("--noise", type=float, default=0.0, help="relative uniform noise")
    gp_flags(sp)

    sp = sub.add_parser("red", help="refine an initial equation with RED")
    common(sp)
    sp.add_argument("--init", required=True, metavar="EQ", help="initial equation")
    sp.add_argument("--max-iter", type=int, default=RedConfig().i_max)
    sp.add_argument("--threshold", type=float, default=RedConfig().T)
    sp.add_argument("--noise", type=float, default=0.0, help="relative uniform noise")
    gp_flags(sp)

    sp = sub.add_parser("bench", help="run an experiment config and write reports")
    sp.add_argument("--config", metavar="PATH", default=None, help="JSON experiment config")
    sp.add_argument("--out", metavar="DIR", required=True, help="report directory")
    sp.add_argument("--jobs", type=int, default=1)
    sp.add_argument("--seed", type=int, default=None, help="run a single seed instead of the configured ones")
    sp.add_argument("--noise", type=float, default=None)
    sp.add_argument("--rows", type=int, default=None)
    sp.add_argument("--max-iter", type=int, default=None)
    sp.add_argument("--threshold", type=float, default=None)
    sp.add_argument("--json", action="store_true")
    gp_flags(sp)

    sp = sub.add_parser("residual", help="print the residual target of one node as CSV")
    common(sp)
    sp.add_argument("--eq", required=True, metavar="EQ")
    sp.add_argument("--node", required=True, type=int, metavar="ID")

    sp = sub.add_parser("inspect", help="print the node table and residual list of an equation")
    common(sp, data=False)
    sp.add_argument("--eq", required=True, metavar="EQ")
    return p


def make_model(args, gp: GpConfig | None = None):
    command = os.environ.get(ENV_EDS, "").strip()
    if command:
        return ExternalModel(command)
    gp = gp or GpConfig()
    overrides = {}
    if getattr(args, "population", None):
        overrides["population_size"] = args.population
    if getattr(args, "generations", None):
        overrides["generations"] = args.generations
    return GpModel(replace(gp, **overrides).with_seed(args.seed or 0))


def _load_splits(args):
    data = read_csv(args.data)
    data = add_noise(data, getattr(args, "noise", 0.0) or 0.0, args.seed)
    return split_dataset(data, PROTOCOL_SPLIT, args.seed)


def _emit(args, out, record: dict, text: str):
    out.write((json.dumps(record) if args.json else text) + "\n")


def cmd_fit(args, out):
    train, val, test = _load_splits(args)
    with make_model(args) as model:
        result = run_method(Classic(), model, None, (train, val, test), seed=args.seed)
    if not result.completed:
        raise RedError("; ".join(result.info.get("errors", [])) or "fit failed")
    eq = result.best_equation
    _emit(args, out, {
        "equation": str(eq.expression),
        "train_mse": _num(eq.train_mse),
        "val_mse": _num(eq.val_mse),
        "test_mse": _num(eq.test_mse),
        "operators": eq.operator_count,
    }, f"equation: {eq.expression}\ntrain_mse: {eq.train_mse:.6g}\n"
       f"val_mse: {eq.val_mse:.6g}\ntest_mse: {eq.test_mse:.6g}")


def cmd_red(args, out):
    train, val, test = _load_splits(args)
    init = parse_expression(args.init)
    check_variables(init, train.n_vars)
    config = RedConfig(i_max=args.max_iter, T=args.threshold)
    with make_model(args) as model:
        tree, trace = red_refine(model, init, train, val, config, test_equation(init, val))
    for r in trace.records:
        rec = {
            "iteration": r.iteration,
            "node": r.node,
            "candidate": None if r.candidate is None else str(r.candidate),
            "val_mse": _num(r.val_mse),
            "accepted": r.accepted,
            "train_mse": _num(r.train_mse),
            "operators": r.operators,
            "error": r.error,
        }
        text = (f"iter {r.iteration:3d} node {r.node:3d} "
                f"{'accept' if r.accepted else 'reject'} val_mse={r.val_mse:.6g}"
                + (f" ({r.error})" if r.error else f" candidate={r.candidate}"))
        _emit(args, out, rec, text)
    _emit(args, out, {
        "equation": str(tree),
        "iterations": trace.iterations,
        "initial_val_mse": _num(trace.initial_val_mse),
        "val_mse": _num(trace.final_val_mse),
        "test_mse": _num(test_equation(tree, test)),
    }, f"equation: {tree}\niterations: {trace.iterations}\n"
       f"val_mse: {trace.initial_val_mse:.6g} -> {trace.final_val_mse:.6g}\n"
       f"test_mse: {test_equation(tree, test):.6g}")


def cmd_bench(args, out):
    overrides = {"rows": args.rows, "noise": args.noise}
    if args.seed is not None:
        overrides["seeds"] = [args.seed]
    cfg, gp = load_experiment_config(args.config, overrides)
    if args.max_iter is not None or args.threshold is not None:
        def patch(m):
            if not isinstance(m, Red):
                return m
            c = m.config
            return Red(replace(c, i_max=args.max_iter or c.i_max,
                               T=c.T if args.threshold is None else args.threshold))
        cfg = replace(cfg, methods=tuple(patch(m) for m in cfg.methods))
    args.seed = 0 if args.seed is None else args.seed
    model = make_model(args, gp)
    try:
        report = run_experiment(cfg, model, out_dir=args.out, jobs=max(1, args.jobs))
    finally:
        model.close()
    for row in report.table():
        text = ", ".join(f"{k}={v}" for k, v in row.items())
        _emit(args, out, {k: _num(v) if isinstance(v, float) else v for k, v in row.items()}, text)


def cmd_residual(args, out):
    data = read_csv(args.data)
    tree = parse_expression(args.eq)
    check_variables(tree, data.n_vars)
    res = compute_residual(tree, args.node, data)
    if not args.json:
        out.write("row,value,valid\n")
    for i, (v, ok) in enumerate(zip(res.values, res.valid_mask)):
        _emit(args, out, {"row": i, "value": _num(v) if ok else None, "valid": bool(ok)},
              f"{i},{float(v)!r},{int(bool(ok))}")


def cmd_inspect(args, out):
    tree = parse_expression(args.eq)
    eligible = build_residual_list(tree)
    if not args.json:
        out.write("id,kind,label,parent,children,depth,residual\n")
    for nid in tree.node_ids():
        n = tree.node(nid)
        label = n.kind.value if n.kind.is_operator or n.kind is NodeKind.Y else print_expression(n)
        parent = tree.parent(nid)
        rec = {
            "id": nid,
            "kind": n.kind.name,
            "label": label,
            "parent": parent,
            "children": list(tree.children(nid)),
            "depth": tree.depth(nid),
            "residual": nid in eligible,
        }
        _emit(args, out, rec, ",".join([
            str(nid), n.kind.name, label, "" if parent is None else str(parent),
            " ".join(map(str, tree.children(nid))), str(tree.depth(nid)), str(int(nid in eligible)),
        ]))
    _emit(args, out, {"residual_list": eligible},
          "residual_list: " + " ".join(map(str, eligible)))


COMMANDS = {
    "fit": cmd_fit,
    "red": cmd_red,
    "bench": cmd_bench,
    "residual": cmd_residual,
    "inspect": cmd_inspect,
}


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"redeq: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        COMMANDS[args.command](args, out)
    except (TooFewRows, DataError, OSError) as exc:
        print(f"redeq: data error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (EquationSyntaxError, VariableOutOfRange, NodeNotFound) as exc:
        print(f"redeq: usage error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001 - last-resort diagnostic
        log.debug("internal failure", exc_info=True)
        print(f"redeq: internal failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
