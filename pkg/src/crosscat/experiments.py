"""Seeded experiment sweeps and the transaction-data case study.

Every random stage draws from its own stream, derived from
``(master_seed, stage tag, replication, theta index)``, so adding a model or
a metric never changes the simulated data.
"""
from __future__ import annotations

import csv
import json
import logging
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .data import build_dataset, read_transactions_csv, train_test_split
from .errors import ConfigError, CrossCatError
from .estimation import fit_em, fit_ind_mnl, fit_multimnl, predict_b
from .metrics import co_counts, cm_score, evaluate_predictions, scs
from .optimize import optimize_two_category
from .synthetic import PriceScenario, gen_ground_truth, gen_prices, gt_expected_revenue, simulate_dataset

log = logging.getLogger(__name__)

MODELS = ("markov", "ind", "multi")
LABELS = {"markov": "MarkovMNL", "ind": "IndMNL", "multi": "MultiMNL"}


def child_seed(master: int, stage: str, rep: int = 0, theta_idx: int = 0, *extra: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(master), zlib.crc32(stage.encode()), int(rep), int(theta_idx), *map(int, extra)])


def stage_rng(master, stage, rep=0, theta_idx=0, *extra) -> np.random.Generator:
    return np.random.default_rng(child_seed(master, stage, rep, theta_idx, *extra))


@dataclass
class ExperimentConfig:
    thetas: list = field(default_factory=lambda: [0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0, 4.5, 5.0])
    replications: int = 10
    transactions: int = 12000
    models: list = field(default_factory=lambda: list(MODELS))
    price_scenarios: list = field(default_factory=lambda: [
        {"regime": r, "dist": d} for r in ("low", "high") for d in ("normal", "uniform")])
    price_draws: int = 50
    master_seed: int = 0
    out_dir: str | None = None
    n_A: int = 10
    n_B: int = 8
    m_A: int = 10
    m_B: int = 10
    p_del: float = 0.2
    train_ratio: float = 0.7
    tol_ll: float = 1e-2
    tol_param: float = 1e-2
    max_iter: int = 1000
    top_k: list = field(default_factory=lambda: [1, 3])
    jobs: int = 1

    def __post_init__(self):
        if self.replications < 1:
            raise ConfigError("replications must be at least 1")
        if not self.thetas or any(t < 0 for t in self.thetas):
            raise ConfigError("thetas must be a non-empty list of non-negative values")
        bad = set(self.models) - set(MODELS)
        if bad or not self.models:
            raise ConfigError(f"unknown models {sorted(bad)}")
        if self.transactions < 1 or self.price_draws < 0:
            raise ConfigError("transactions must be positive and price_draws non-negative")
        if not 0 < self.train_ratio < 1:
            raise ConfigError("train_ratio must lie strictly between 0 and 1")
        self.scenarios()

    def scenarios(self) -> list:
        try:
            return [PriceScenario(**s) for s in self.price_scenarios]
        except TypeError as exc:
            raise ConfigError(f"bad price scenario: {exc}") from exc

    @classmethod
    def from_dict(cls, d) -> "ExperimentConfig":
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown config keys {sorted(extra)}")
        return cls(**d)

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON") from exc


def _scenario_tag(s: PriceScenario) -> str:
    return f"{s.regime}-{s.dist}"


def _fit(model: str, train, cfg: ExperimentConfig):
    if model == "markov":
        return fit_em(train, tol_ll=cfg.tol_ll, tol_param=cfg.tol_param, max_iter=cfg.max_iter).params
    if model == "ind":
        return fit_ind_mnl(train)
    return fit_multimnl(train)


def run_replication(cfg: ExperimentConfig, rep: int, theta_idx: int) -> list:
    """All records for one ``(replication, theta)`` cell.

    Each record is ``{"theta", "rep", "model", "metric", "value"}``.
    """
    theta = float(cfg.thetas[theta_idx])
    ms = cfg.master_seed
    gt = gen_ground_truth(cfg.n_A, cfg.n_B, cfg.m_A, cfg.m_B, theta, cfg.p_del, stage_rng(ms, "ground-truth", rep))
    data = simulate_dataset(gt, cfg.transactions, stage_rng(ms, "simulate", rep, theta_idx))
    train, test = train_test_split(data, cfg.train_ratio, child_seed(ms, "split", rep, theta_idx))
    records = []

    def put(model, metric, value):
        records.append({"theta": theta, "rep": rep, "model": model, "metric": metric, "value": float(value)})

    put("data", "cm", cm_score(co_counts(data.a, data.b, data.n_A, data.n_B)))
    fitted = {}
    for m in cfg.models:
        try:
            fitted[m] = _fit(m, train, cfg)
        except CrossCatError as exc:
            log.warning("fit of %s failed (theta=%s, rep=%d): %s", m, theta, rep, exc)
            put(LABELS[m], "fit_error", 1.0)
            continue
        label = LABELS[m]
        for part, d in (("train", train), ("test", test)):
            rep_ = evaluate_predictions(label, predict_b(fitted[m], d.a, d.mask_B), d.b, d.mask_B, ks=cfg.top_k)
            put(label, f"loglik_{part}", rep_.ll)
            if part == "test":
                for k, v in rep_.top_k_hit.items():
                    put(label, f"top{k}_hit", v)
                put(label, "rank_accuracy", rep_.rank_acc)
    # multi is never optimised: its optimal assortment needs a mixed-integer program
    optimisable = [m for m in ("markov", "ind") if m in fitted]
    for s in cfg.scenarios():
        tag = _scenario_tag(s)
        totals = {m: 0.0 for m in optimisable}
        for p in range(cfg.price_draws):
            rng = stage_rng(ms, f"prices:{tag}", rep, 0, p)
            rA = gen_prices(s, cfg.n_A, rng)
            rB = gen_prices(s, cfg.n_B, rng)
            for m in optimisable:
                sol = optimize_two_category(fitted[m].to_model(), rA, rB)
                totals[m] += gt_expected_revenue(gt, rA, rB, sol.sets["A"], sol.sets["B"])
        if cfg.price_draws:
            for m in optimisable:
                put(LABELS[m], f"revenue_{tag}", totals[m] / cfg.price_draws)
    return records


def _run_cell(args):
    cfg, rep, ti = args
    return run_replication(cfg, rep, ti)


@dataclass
class SweepResult:
    records: list
    config: ExperimentConfig

    def mean(self, model: str, metric: str, theta: float) -> float:
        vals = [r["value"] for r in self.records
                if r["model"] == model and r["metric"] == metric and r["theta"] == theta]
        return float(np.mean(vals)) if vals else float("nan")

    def summary(self) -> list:
        """Long-format rows ``(theta, model, metric, mean, stderr, n)``."""
        groups = {}
        for r in self.records:
            groups.setdefault((r["theta"], r["model"], r["metric"]), []).append(r["value"])
        rows = []
        for (theta, model, metric), vals in sorted(groups.items()):
            v = np.asarray(vals)
            se = float(v.std(ddof=1) / np.sqrt(v.size)) if v.size > 1 else 0.0
            rows.append((theta, model, metric, float(v.mean()), se, int(v.size)))
        return rows


def run_synthetic_sweep(cfg: ExperimentConfig, out_dir=None) -> SweepResult:
    cells = [(cfg, rep, ti) for ti in range(len(cfg.thetas)) for rep in range(cfg.replications)]
    if cfg.jobs > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            parts = list(pool.map(_run_cell, cells))
    else:
        parts = [_run_cell(c) for c in cells]
    records = [r for part in parts for r in part]
    result = SweepResult(records, cfg)
    out_dir = out_dir or cfg.out_dir
    if out_dir:
        write_sweep(result, out_dir)
    return result


def _layout(out_dir) -> Path:
    out = Path(out_dir)
    for sub in ("raw", "tables", "plots"):
        (out / sub).mkdir(parents=True, exist_ok=True)
    return out


def _write_csv(path: Path, header, rows):
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def _write_manifest(out: Path, config: dict, kind: str):
    manifest = {"kind": kind, "version": __version__, "config": config}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, default=str))


def comparison_table(result: SweepResult, metric: str, relative: bool = True) -> list:
    """Rows ``theta, IndMNL, then (value, delta vs IndMNL)`` for the other models."""
    models = [LABELS[m] for m in ("ind", "multi", "markov") if m in result.config.models]
    rows = []
    for theta in result.config.thetas:
        base = result.mean("IndMNL", metric, float(theta))
        row = [theta]
        for m in models:
            v = result.mean(m, metric, float(theta))
            row.append(v)
            if m != "IndMNL" and "IndMNL" in models:
                row.append((v - base) / abs(base) * 100 if relative else (v - base) * 100)
        rows.append(row)
    header = ["theta"]
    for m in models:
        header.append(m)
        if m != "IndMNL" and "IndMNL" in models:
            header.append(f"{m}_delta_{'pct' if relative else 'pp'}")
    return [header] + rows


def write_sweep(result: SweepResult, out_dir) -> Path:
    out = _layout(out_dir)
    _write_csv(out / "raw" / "records.csv", ["theta", "rep", "model", "metric", "value"],
               [(r["theta"], r["rep"], r["model"], r["metric"], r["value"]) for r in result.records])
    metrics = sorted({r["metric"] for r in result.records if r["model"] != "data"})
    for metric in metrics:
        relative = not (metric.startswith("top") or metric == "fit_error")
        table = comparison_table(result, metric, relative)
        _write_csv(out / "tables" / f"{metric}.csv", table[0], table[1:])
    cm_rows = [(t, result.mean("data", "cm", float(t))) for t in result.config.thetas]
    _write_csv(out / "tables" / "cm.csv", ["theta", "cm"], cm_rows)
    emit_plot_data(result, out / "plots" / "series.csv")
    _write_manifest(out, asdict(result.config), "synthetic-sweep")
    return out


def emit_plot_data(result: SweepResult, path=None) -> list:
    rows = [(t, m, k, mean, se) for t, m, k, mean, se, _ in result.summary()]
    if path is not None:
        _write_csv(Path(path), ["theta", "model", "metric", "mean", "stderr"], rows)
    return rows


# ------------------------------------------------------------------ case study

@dataclass
class CaseStudyConfig:
    transactions_csv: str
    cat_A: str
    cat_B: str
    threshold: float = 0.10
    train_ratio: float = 0.7
    seed: int = 0
    models: list = field(default_factory=lambda: list(MODELS))
    tol_ll: float = 1e-2
    tol_param: float = 1e-2
    max_iter: int = 1000
    top_k: list = field(default_factory=lambda: [1, 3])
    out_dir: str | None = None

    @classmethod
    def from_dict(cls, d) -> "CaseStudyConfig":
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(f"bad case-study config: {exc}") from exc


def run_case_study(cfg: CaseStudyConfig, out_dir=None) -> dict:
    """Fit and compare the models on basket data read from CSV.

    Returns the metric reports, the specific complementarity matrix of the
    fitted MarkovMNL model and the category-level CM score.
    """
    raw = read_transactions_csv(cfg.transactions_csv)
    ds = build_dataset(raw, cfg.cat_A, cfg.cat_B, cfg.threshold)
    return case_study_from_dataset(ds, cfg, out_dir)


def case_study_from_dataset(ds, cfg: CaseStudyConfig, out_dir=None) -> dict:
    train, test = train_test_split(ds.data, cfg.train_ratio, cfg.seed)
    ex = ExperimentConfig(models=list(cfg.models), tol_ll=cfg.tol_ll, tol_param=cfg.tol_param,
                          max_iter=cfg.max_iter, replications=1)
    reports, fitted = {}, {}
    for m in cfg.models:
        fitted[m] = _fit(m, train, ex)
        pred = predict_b(fitted[m], test.a, test.mask_B)
        reports[LABELS[m]] = evaluate_predictions(LABELS[m], pred, test.b, test.mask_B, cfg.top_k, ehr=True)
    data = ds.data
    result = {
        "reports": reports,
        "cm": cm_score(co_counts(data.a, data.b, data.n_A, data.n_B)) if data.T else float("nan"),
        "scs": scs(fitted["markov"].lam, fitted["markov"].vB) if "markov" in fitted else None,
        "params": fitted,
        "labels_A": ds.labels_A,
        "labels_B": ds.labels_B,
    }
    out_dir = out_dir or cfg.out_dir
    if out_dir:
        out = _layout(out_dir)
        base = reports.get("IndMNL")
        rows = []
        for label, rep in reports.items():
            for _, metric, value in rep.rows():
                ref = dict((k, v) for _, k, v in base.rows()).get(metric) if base else None
                delta = value - ref if ref is not None and label != "IndMNL" else ""
                rows.append((label, metric, value, delta))
        _write_csv(out / "tables" / "metrics.csv", ["model", "metric", "value", "delta_vs_IndMNL"], rows)
        _write_csv(out / "tables" / "cm.csv", ["cat_A", "cat_B", "cm"], [(cfg.cat_A, cfg.cat_B, result["cm"])])
        if result["scs"] is not None:
            header = ["a\\b", "none"] + list(ds.labels_B)
            labels = ["none"] + list(ds.labels_A)
            _write_csv(out / "tables" / "scs.csv", header,
                       [[labels[i]] + list(row) for i, row in enumerate(result["scs"])])
        for m, p in fitted.items():
            (out / "raw" / f"params_{m}.json").write_text(json.dumps(p.to_dict()))
        _write_manifest(out, asdict(cfg), "case-study")
    return result
