"""Transaction ingestion: CSV baskets to two-category choice observations.

A transaction is every line sharing ``(week, customer_id)``.  The offer set
of a category in a given week is taken to be every product of that category
bought by anyone that week.
"""
from __future__ import annotations

import csv
import json
import logging
import math
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DataError
from .estimation import Observation, TwoCategoryData

log = logging.getLogger(__name__)

CSV_FIELDS = ("week", "customer_id", "category", "product_id", "quantity")


@dataclass(frozen=True)
class RawTransaction:
    week: int
    customer_id: str
    items: tuple  # (category, product, quantity)

    def __post_init__(self):
        if self.week < 0:
            raise DataError(f"negative week in transaction of {self.customer_id!r}")
        for _, _, q in self.items:
            if q < 1:
                raise DataError(f"quantity must be at least 1 (customer {self.customer_id!r})")

    def products(self, category: str) -> set:
        return {p for c, p, _ in self.items if c == category}


def read_transactions_csv(path) -> list:
    """Group CSV lines into transactions keyed by ``(week, customer_id)``."""
    path = Path(path)
    groups = defaultdict(list)
    try:
        with path.open(newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            missing = set(CSV_FIELDS) - set(reader.fieldnames or ())
            if missing:
                raise DataError(f"{path}: missing columns {sorted(missing)}")
            for line, row in enumerate(reader, start=2):
                try:
                    week = int(row["week"])
                    qty = int(row["quantity"])
                except (TypeError, ValueError) as exc:
                    raise DataError(f"{path}:{line}: bad integer field") from exc
                groups[(week, row["customer_id"])].append((row["category"], row["product_id"], qty))
    except UnicodeDecodeError as exc:
        raise DataError(f"{path}: not valid UTF-8") from exc
    return [RawTransaction(w, c, tuple(items)) for (w, c), items in sorted(groups.items())]


def write_transactions_csv(raw: Iterable[RawTransaction], path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_FIELDS)
        for t in raw:
            for c, p, q in t.items:
                w.writerow((t.week, t.customer_id, c, p, q))


def infer_weekly_assortments(raw: Iterable[RawTransaction], category: str, keep=None) -> dict:
    """Week -> set of products of ``category`` bought that week (restricted to ``keep``)."""
    out = defaultdict(set)
    for t in raw:
        prods = t.products(category)
        if keep is not None:
            prods &= set(keep)
        out[t.week] |= prods
    return dict(out)


def filter_products(raw: Sequence[RawTransaction], category: str, threshold: float = 0.10) -> set:
    """Products bought in at least ``threshold`` of the transactions that touch ``category``."""
    counts = defaultdict(int)
    n = 0
    for t in raw:
        prods = t.products(category)
        if prods:
            n += 1
            for p in prods:
                counts[p] += 1
    return {p for p, c in counts.items() if c >= threshold * n}


def decompose_multi_purchase(raw: Iterable[RawTransaction], cat_A: str, cat_B: str,
                             keep_A=None, keep_B=None) -> list:
    """Split baskets into ``(week, a, b)`` choice events.

    Each upstream purchase is paired with each downstream purchase, or with
    ``0`` when nothing was bought downstream.  Baskets without an upstream
    purchase are dropped; quantities are ignored.
    """
    out = []
    for t in raw:
        A = t.products(cat_A)
        B = t.products(cat_B)
        if keep_A is not None:
            A &= set(keep_A)
        if keep_B is not None:
            B &= set(keep_B)
        if not A:
            continue
        for a in sorted(A, key=_sort_key):
            for b in (sorted(B, key=_sort_key) or [None]):
                out.append((t.week, a, b))
    return out


def _sort_key(p):
    s = str(p)
    return (0, int(s), s) if s.isdigit() else (1, 0, s)


@dataclass(frozen=True, eq=False)
class Dataset:
    data: TwoCategoryData
    labels_A: tuple          # labels_A[i - 1] is the product id behind index i
    labels_B: tuple
    weeks: np.ndarray
    assortments_A: dict      # week -> frozenset of indices
    assortments_B: dict


def build_dataset(raw: Sequence[RawTransaction], cat_A: str, cat_B: str, threshold: float = 0.10) -> Dataset:
    """Filtering, weekly offer sets and basket decomposition in one pass."""
    keep_A = filter_products(raw, cat_A, threshold)
    keep_B = filter_products(raw, cat_B, threshold)
    labels_A = tuple(sorted(keep_A, key=_sort_key))
    labels_B = tuple(sorted(keep_B, key=_sort_key))
    idx_A = {p: i + 1 for i, p in enumerate(labels_A)}
    idx_B = {p: i + 1 for i, p in enumerate(labels_B)}
    weekly_A = {w: frozenset(idx_A[p] for p in s) for w, s in infer_weekly_assortments(raw, cat_A, keep_A).items()}
    weekly_B = {w: frozenset(idx_B[p] for p in s) for w, s in infer_weekly_assortments(raw, cat_B, keep_B).items()}
    events = decompose_multi_purchase(raw, cat_A, cat_B, keep_A, keep_B)
    obs = [Observation(weekly_A[w], weekly_B.get(w, frozenset()), idx_A[a], idx_B[b] if b is not None else 0)
           for w, a, b in events]
    data = TwoCategoryData.from_observations(obs, len(labels_A), len(labels_B))
    log.info("built %d observations over %d/%d products", len(obs), len(labels_A), len(labels_B))
    return Dataset(data, labels_A, labels_B, np.array([e[0] for e in events], dtype=np.int64),
                   weekly_A, weekly_B)


def train_test_split(data: TwoCategoryData, ratio: float = 0.7, seed=0):
    """Seeded shuffle; the training part gets ``ceil(ratio * T)`` observations."""
    if not 0.0 <= ratio <= 1.0:
        raise DataError("split ratio must lie in [0, 1]")
    perm = np.random.default_rng(seed).permutation(data.T)
    n_train = math.ceil(round(ratio * data.T, 9))
    return data.subset(np.sort(perm[:n_train])), data.subset(np.sort(perm[n_train:]))


# ------------------------------------------------------------------ JSONL

def write_observations_jsonl(data: TwoCategoryData, path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for o in data.to_observations():
            fh.write(json.dumps(o.to_dict()) + "\n")


def read_observations_jsonl(path, n_A: int | None = None, n_B: int | None = None) -> TwoCategoryData:
    from .estimation import observations_to_data

    obs = []
    with Path(path).open(encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obs.append(Observation.from_dict(json.loads(line)))
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{line_no}: invalid JSON") from exc
    return observations_to_data(obs, n_A, n_B)
