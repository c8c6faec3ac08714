"""Prediction and complementarity metrics.

Predicted distributions are ``(T, n + 1)`` arrays indexed by option.  Ties in
predicted probability are broken by ascending option index everywhere, so
every metric is deterministic.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError


def _ranks(pred: np.ndarray, chosen: np.ndarray, available: np.ndarray | None) -> np.ndarray:
    """1-based rank of the chosen option among the (available) options."""
    pred = np.asarray(pred, dtype=float)
    chosen = np.asarray(chosen, dtype=np.int64)
    if pred.ndim != 2 or pred.shape[0] != chosen.shape[0]:
        raise DataError("predictions must be a (T, n+1) array matching the choices")
    T, n1 = pred.shape
    avail = np.ones_like(pred, dtype=bool) if available is None else np.asarray(available, dtype=bool)
    p_c = pred[np.arange(T), chosen][:, None]
    idx = np.arange(n1)[None, :]
    ahead = avail & ((pred > p_c) | ((pred == p_c) & (idx < chosen[:, None])))
    return ahead.sum(axis=1) + 1


def top_k_hit_rate(pred, chosen, K: int, available=None) -> float:
    """Share of transactions whose chosen option is among the ``K`` most likely."""
    if K < 1:
        raise DataError("K must be at least 1")
    r = _ranks(pred, chosen, available)
    if r.size == 0:
        raise DataError("no transactions to score")
    return float(np.mean(r <= K))


def rank_accuracy(pred, chosen, available=None) -> float:
    """Mean 1-based rank of the chosen option (1 is perfect)."""
    r = _ranks(pred, chosen, available)
    if r.size == 0:
        raise DataError("no transactions to score")
    return float(r.mean())


def effective_hit_rate(pred, b, mask_B) -> float:
    """Top-1 accuracy over purchase transactions, arg-max taken over offered products only."""
    pred = np.asarray(pred, dtype=float)
    b = np.asarray(b, dtype=np.int64)
    mask = np.asarray(mask_B, dtype=bool).copy()
    buy = b != 0
    if not buy.any():
        raise DataError("effective hit rate is undefined without any purchase")
    mask[:, 0] = False
    scores = np.where(mask, pred, -np.inf)[buy]
    return float(np.mean(np.argmax(scores, axis=1) == b[buy]))


@dataclass(frozen=True, eq=False)
class CoCount:
    """``counts[i, j]``: transactions where ``i`` was chosen upstream and ``j`` downstream."""

    counts: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.counts)
        if c.ndim != 2 or np.any(c < 0):
            raise DataError("co-purchase counts must be a non-negative matrix")
        object.__setattr__(self, "counts", c)


def co_counts(a, b, n_A: int, n_B: int) -> CoCount:
    c = np.zeros((n_A + 1, n_B + 1), dtype=np.int64)
    np.add.at(c, (np.asarray(a, dtype=np.int64), np.asarray(b, dtype=np.int64)), 1)
    return CoCount(c)


def cm_score(counts) -> float:
    """Weighted L1 distance of each conditional downstream distribution from the aggregate.

    Rows with no transactions get zero weight.  The result lies in ``[0, 2]``.
    """
    c = np.asarray(counts.counts if isinstance(counts, CoCount) else counts, dtype=float)
    total = c.sum()
    if total <= 0:
        raise DataError("CM needs at least one transaction")
    f = c.sum(axis=1)
    agg = c.sum(axis=0) / total
    seen = f > 0
    cond = c[seen] / f[seen, None]
    d = np.abs(cond - agg).sum(axis=1)
    return float((f[seen] / total) @ d)


def scs(lam, vB) -> np.ndarray:
    """Lift of each downstream option's attraction over its full-assortment MNL share.

    Column 0 uses the outside share ``1 / (sum v + 1)`` so every row sums to 0.
    """
    w = np.concatenate(([1.0], np.asarray(getattr(vB, "weights", vB), dtype=float)))
    return np.asarray(lam, dtype=float) - w / w.sum()


@dataclass
class MetricReport:
    label: str
    ll: float
    top_k_hit: dict = field(default_factory=dict)
    rank_acc: float = float("nan")
    ehr: float | None = None

    def rows(self):
        yield self.label, "loglik", self.ll
        for k, v in sorted(self.top_k_hit.items()):
            yield self.label, f"top{k}_hit", v
        yield self.label, "rank_accuracy", self.rank_acc
        if self.ehr is not None:
            yield self.label, "effective_hit_rate", self.ehr


def evaluate_predictions(label: str, pred, b, mask_B, ks=(1, 3), ehr: bool = False) -> MetricReport:
    """Collect the standard metrics for one model's predicted downstream distributions."""
    pred = np.asarray(pred, dtype=float)
    b = np.asarray(b, dtype=np.int64)
    p = pred[np.arange(b.size), b]
    with np.errstate(divide="ignore"):
        ll = float(np.log(p).sum())
    rep = MetricReport(label, ll, {k: top_k_hit_rate(pred, b, k, mask_B) for k in ks},
                       rank_accuracy(pred, b, mask_B))
    if ehr:
        try:
            rep.ehr = effective_hit_rate(pred, b, mask_B)
        except DataError:
            rep.ehr = float("nan")
    return rep
