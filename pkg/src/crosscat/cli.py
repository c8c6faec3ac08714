"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 convergence failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .data import read_observations_jsonl, read_transactions_csv, build_dataset, write_observations_jsonl
from .errors import (ConfigError, ConvergenceError, DataError, DomainError, EstimationError,
                     ModelError, UnsupportedStructureError)
from .estimation import MultiMnl, TwoCatParams, fit_em, fit_ind_mnl, fit_multimnl, predict_b
from .experiments import (LABELS, CaseStudyConfig, ExperimentConfig, child_seed, run_case_study,
                          run_synthetic_sweep)
from .metrics import co_counts, cm_score, evaluate_predictions, scs
from .model import CrossCatModel
from .optimize import evaluate_revenue, optimize_dag, optimize_root_constrained
from .synthetic import gen_ground_truth, simulate_dataset

log = logging.getLogger("crosscat")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_CONVERGENCE = 0, 2, 3, 4


def _load_json(path, what="file"):
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise DataError(f"{what} not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON") from exc


def _out_dir(args) -> Path:
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _config(args) -> dict:
    if not args.config:
        return {}
    try:
        return json.loads(Path(args.config).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {args.config}: {exc}") from exc


# ------------------------------------------------------------------ commands

def cmd_simulate(args):
    rng = np.random.default_rng(child_seed(args.seed, "ground-truth"))
    gt = gen_ground_truth(args.n_a, args.n_b, args.m_a, args.m_b, args.theta, args.p_del, rng)
    data = simulate_dataset(gt, args.transactions, np.random.default_rng(child_seed(args.seed, "simulate")))
    out = _out_dir(args)
    write_observations_jsonl(data, out / "observations.jsonl")
    gt_path = Path(args.gt_out) if args.gt_out else out / "ground_truth.json"
    gt_path.write_text(json.dumps(gt.to_dict()))
    print(f"wrote {data.T} observations to {out / 'observations.jsonl'}")


def _fit_model(kind, data, args):
    if kind == "markov":
        rep = fit_em(data, tol_ll=args.tol_ll, tol_param=args.tol_param, max_iter=args.max_iter,
                     multistart=args.multistart, seed=args.seed)
        if not rep.converged:
            raise ConvergenceError(f"EM did not converge in {args.max_iter} iterations")
        return rep.params, rep.ll_trace
    if kind == "ind":
        return fit_ind_mnl(data), []
    return fit_multimnl(data), []


def cmd_estimate(args):
    data = read_observations_jsonl(args.data, args.n_a, args.n_b)
    params, trace = _fit_model(args.model, data, args)
    out = _out_dir(args)
    (out / "params.json").write_text(json.dumps({"model": args.model, **params.to_dict()}))
    with (out / "ll_trace.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "loglik"])
        w.writerows(enumerate(trace))
    print(f"fitted {LABELS[args.model]} on {data.T} observations")


def _load_params(path):
    d = _load_json(path, "parameter file")
    try:
        if "conditional" in d:
            from .choice import MnlModel
            return MultiMnl(MnlModel(d["vA"]), tuple(MnlModel(w) for w in d["conditional"]))
        return TwoCatParams.from_dict(d)
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"{path}: malformed parameters") from exc


def cmd_optimize(args):
    d = _load_json(args.model, "model file")
    if "nodes" in d:
        model = CrossCatModel.from_dict(d)
    else:
        model = _load_params(args.model).to_model()
    prices = {k: np.asarray(v, dtype=float) for k, v in _load_json(args.prices, "price file").items()}
    if args.cardinality:
        K = {k: int(v) for k, v in _load_json(args.cardinality, "cardinality file").items()}
        sol = optimize_root_constrained(model, prices, K)
    else:
        sol = optimize_dag(model, prices)
    res = sol.to_dict()
    res["check_revenue"] = evaluate_revenue(model, prices, sol.sets)
    text = json.dumps(res, indent=2)
    if args.out:
        (_out_dir(args) / "solution.json").write_text(text)
    print(text)


def cmd_evaluate(args):
    data = read_observations_jsonl(args.data, args.n_a, args.n_b)
    rows, labels = [], []
    for path in args.params:
        p = _load_params(path)
        kind = _load_json(path).get("model")
        label = LABELS.get(kind, str(path))
        if label in labels:
            label = str(path)
        labels.append(label)
        rep = evaluate_predictions(label, predict_b(p, data.a, data.mask_B), data.b, data.mask_B,
                                   ks=args.k, ehr=True)
        rows.extend(rep.rows())
    base = {m: v for lbl, m, v in rows if lbl == labels[0]}
    out_rows = [(lbl, m, v, v - base[m] if lbl != labels[0] else "") for lbl, m, v in rows]
    _emit_csv(args, "metrics.csv", ["model", "metric", "value", "delta_vs_first"], out_rows)


def cmd_cm(args):
    if args.csv:
        ds = build_dataset(read_transactions_csv(args.csv), args.cat_a, args.cat_b, args.threshold)
        data = ds.data
    elif args.data:
        data = read_observations_jsonl(args.data, args.n_a, args.n_b)
    else:
        raise ConfigError("cm needs --data or --csv")
    rows = [("cm", cm_score(co_counts(data.a, data.b, data.n_A, data.n_B)))]
    _emit_csv(args, "cm.csv", ["metric", "value"], rows)
    if args.params:
        p = _load_params(args.params)
        m = scs(p.lam, p.vB)
        _emit_csv(args, "scs.csv", ["a"] + [f"b{j}" for j in range(m.shape[1])],
                  [[i] + list(r) for i, r in enumerate(m)])


def _emit_csv(args, name, header, rows):
    if args.out:
        with (_out_dir(args) / name).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            w.writerows(rows)
    w = csv.writer(sys.stdout)
    w.writerow(header)
    w.writerows(rows)


def cmd_sweep(args):
    cfg = _config(args)
    cfg.setdefault("master_seed", args.seed)
    cfg["jobs"] = args.jobs or cfg.get("jobs", 1)
    if args.out:
        cfg["out_dir"] = args.out
    result = run_synthetic_sweep(ExperimentConfig.from_dict(cfg))
    print(f"{len(result.records)} records written to {cfg.get('out_dir') or '(memory only)'}")


def cmd_case_study(args):
    cfg = _config(args)
    for key, val in (("transactions_csv", args.csv), ("cat_A", args.cat_a), ("cat_B", args.cat_b)):
        if val is not None:
            cfg[key] = val
    cfg.setdefault("seed", args.seed)
    if args.out:
        cfg["out_dir"] = args.out
    if not Path(cfg.get("transactions_csv", "")).is_file():
        raise DataError(f"transactions file not found: {cfg.get('transactions_csv')}")
    res = run_case_study(CaseStudyConfig.from_dict(cfg))
    w = csv.writer(sys.stdout)
    w.writerow(["model", "metric", "value"])
    for rep in res["reports"].values():
        w.writerows(rep.rows())
    w.writerow(["data", "cm", res["cm"]])


# ------------------------------------------------------------------ parser

def build_parser() -> argparse.ArgumentParser:
    def global_flags(suppress):
        g = argparse.ArgumentParser(add_help=False)
        d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
        g.add_argument("--seed", type=int, default=d(0), help="master random seed")
        g.add_argument("--config", default=d(None), help="JSON configuration file")
        g.add_argument("--out", default=d(None), help="output directory")
        g.add_argument("--jobs", type=int, default=d(1), help="worker processes")
        g.add_argument("-v", "--verbose", action="count", default=d(0))
        return g

    # flags are accepted before or after the subcommand; the subcommand copy
    # must not overwrite a value given before it
    common = global_flags(True)
    p = argparse.ArgumentParser(prog="crosscat", parents=[global_flags(False)],
                                description="Cross-category choice models: simulate, fit, optimise.")
    sub = p.add_subparsers(dest="command", required=True)

    def dims(sp):
        sp.add_argument("--n-a", type=int, default=None)
        sp.add_argument("--n-b", type=int, default=None)

    s = sub.add_parser("simulate", parents=[common], help="simulate ranking-based ground-truth data")
    s.add_argument("--theta", type=float, default=0.0)
    s.add_argument("--transactions", type=int, default=12000)
    s.add_argument("--n-a", type=int, default=10)
    s.add_argument("--n-b", type=int, default=8)
    s.add_argument("--m-a", type=int, default=10)
    s.add_argument("--m-b", type=int, default=10)
    s.add_argument("--p-del", type=float, default=0.2)
    s.add_argument("--gt-out")
    s.set_defaults(func=cmd_simulate)

    e = sub.add_parser("estimate", parents=[common], help="fit a model to observations (JSONL)")
    e.add_argument("--data", required=True)
    e.add_argument("--model", choices=["markov", "ind", "multi"], default="markov")
    e.add_argument("--tol-ll", type=float, default=1e-2)
    e.add_argument("--tol-param", type=float, default=1e-2)
    e.add_argument("--max-iter", type=int, default=1000)
    e.add_argument("--multistart", type=int, default=1)
    dims(e)
    e.set_defaults(func=cmd_estimate)

    o = sub.add_parser("optimize", parents=[common], help="optimal assortments for a fitted model")
    o.add_argument("--model", required=True, help="model JSON or fitted parameter JSON")
    o.add_argument("--prices", required=True, help="JSON mapping category id to price vector")
    o.add_argument("--cardinality", help="JSON mapping root category id to K")
    o.set_defaults(func=cmd_optimize)

    v = sub.add_parser("evaluate", parents=[common], help="prediction metrics on held-out data")
    v.add_argument("--data", required=True)
    v.add_argument("--params", nargs="+", required=True)
    v.add_argument("-k", type=int, nargs="+", default=[1, 3])
    dims(v)
    v.set_defaults(func=cmd_evaluate)

    c = sub.add_parser("cm", parents=[common], help="category-level complementarity score")
    c.add_argument("--data")
    c.add_argument("--csv")
    c.add_argument("--cat-a")
    c.add_argument("--cat-b")
    c.add_argument("--threshold", type=float, default=0.10)
    c.add_argument("--params", help="fitted MarkovMNL parameters for the product-level scores")
    dims(c)
    c.set_defaults(func=cmd_cm)

    w = sub.add_parser("sweep", parents=[common], help="synthetic complementarity sweep")
    w.set_defaults(func=cmd_sweep)

    k = sub.add_parser("case-study", parents=[common], help="model comparison on transaction CSV")
    k.add_argument("--csv")
    k.add_argument("--cat-a")
    k.add_argument("--cat-b")
    k.set_defaults(func=cmd_case_study)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0) and EXIT_CONFIG
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ConvergenceError, EstimationError) as exc:
        print(f"convergence failure: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except (DataError, DomainError, ModelError, UnsupportedStructureError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
