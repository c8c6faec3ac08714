"""Assortment optimization over the cross-category model.

The workhorse is :func:`mc_invariant_assortment`: for a Markov chain choice
model the optimal unconstrained assortment can be read off an optimal
stopping problem that never looks at the arrival vector.  Because an upstream
choice only changes the *arrival* of a downstream chain, every non-root
category can be solved once, before anything upstream is known, and its
value vector then prices the upstream options (backward induction).

Price vectors are indexed by option ``0..n``; entry 0 is the outside
option's price (zero for raw prices, possibly non-zero once downstream
revenue is folded in).
"""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .choice import McModel, MnlModel, as_markov_chain, choice_operator, choice_probs, mnl_choice_prob, offer_mask
from .errors import ConvergenceError, DomainError, UnsupportedStructureError
from .model import CrossCatModel, category_marginals

log = logging.getLogger(__name__)

VI_TOL = 1e-10
VI_MAX_ITER = 100_000
BISECT_TOL = 1e-9
BISECT_MAX_ITER = 200


@dataclass
class AssortmentSolution:
    sets: dict
    revenue: float
    bellman: dict = field(default_factory=dict)
    adjusted_prices: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "sets": {k: sorted(int(x) for x in v) for k, v in self.sets.items()},
            "revenue": float(self.revenue),
            "bellman": {k: np.asarray(v).tolist() for k, v in self.bellman.items()},
            "adjusted_prices": {k: np.asarray(v).tolist() for k, v in self.adjusted_prices.items()},
        }


def shift_prices(prices) -> np.ndarray:
    """Subtract the outside option's price so that entry 0 becomes exactly 0."""
    r = np.asarray(prices, dtype=float)
    out = r - r[0]
    out[0] = 0.0
    return out


# ------------------------------------------------------------ single category

def _stopping_values(rho: np.ndarray, r: np.ndarray, stop: np.ndarray) -> np.ndarray:
    """Values of the policy "buy on arrival iff offered" for offer mask ``stop``."""
    n1 = r.shape[0]
    g = np.zeros(n1)
    g[stop] = r[stop]
    g[0] = r[0]
    trans = np.flatnonzero(~stop)
    trans = trans[trans != 0]
    if trans.size:
        absorb = np.flatnonzero(stop | (np.arange(n1) == 0))
        A = np.eye(trans.size) - rho[np.ix_(trans, trans)]
        b = rho[np.ix_(trans, absorb)] @ g[absorb]
        g[trans] = np.linalg.solve(A, b)
    return g


def mc_invariant_assortment(transition, prices, tie_tol: float = 1e-10):
    """Arrival-free optimal unconstrained assortment of a Markov chain model.

    Solves ``g_i = max(r_i, sum_j rho_ij g_j)`` with ``g_0 = 0`` and returns
    ``S* = {i : r_i >= sum_j rho_ij g_j}`` (ties included) together with
    ``g``.  Products with a negative price are never offered.  ``g_i`` is the
    expected revenue of a customer whose initial attraction is ``i``.

    Value iteration is run from ``g = r``; each sweep is followed by an exact
    evaluation of the greedy offer set, which keeps iteration counts small
    when the chain leaks slowly to the outside option.
    """
    rho = np.asarray(transition, dtype=float)
    r = np.asarray(prices, dtype=float)
    n1 = r.shape[0]
    if rho.shape != (n1, n1):
        raise DomainError("transition and prices disagree on the number of products")
    if r[0] != 0.0:
        raise DomainError("outside-option price must be 0; apply shift_prices first")
    cand = r >= 0.0
    cand[0] = False
    scale = max(1.0, float(np.max(np.abs(r))))
    tol = tie_tol * scale

    g = np.where(cand, r, 0.0)
    g[0] = 0.0
    for it in range(VI_MAX_ITER):
        cont = rho @ g
        g_vi = np.where(cand, np.maximum(r, cont), cont)
        g_vi[0] = 0.0
        stop = cand & (r >= cont - tol)
        g_pe = _stopping_values(rho, np.where(cand, r, 0.0), stop)
        # policy evaluation can only help when it dominates the VI sweep
        g_new = np.maximum(g_vi, g_pe)
        change = float(np.max(np.abs(g_new - g)))
        g = g_new
        if change < VI_TOL * scale:
            break
    else:
        raise ConvergenceError("value iteration did not converge; check that every product reaches state 0")
    cont = rho @ g
    S = {int(i) for i in np.flatnonzero(cand & (r >= cont - tol))}
    mask = offer_mask(S, n1 - 1)
    g = _stopping_values(rho, np.where(cand, r, 0.0), mask)
    log.debug("invariant assortment after %d sweeps: %s", it + 1, sorted(S))
    return frozenset(S), g


def _solve_unconstrained(kernel, adjusted: np.ndarray):
    """Optimal offer set for one category under adjusted prices.

    Returns ``(S, g)`` with ``g`` in absolute terms (``g_0 = adjusted[0]``).
    """
    if not isinstance(kernel, (McModel, MnlModel)):
        raise DomainError(f"no unconstrained solver for a {type(kernel).__name__} kernel")
    mc = as_markov_chain(kernel)
    S, g = mc_invariant_assortment(mc.transition, shift_prices(adjusted))
    return S, g + adjusted[0]


def _root_revenue(kernel, S, adjusted) -> float:
    return float(choice_probs(kernel, S) @ adjusted)


def _values_for_set(kernel, S, adjusted) -> np.ndarray:
    """Expected adjusted revenue by initial attraction, for a fixed offer set."""
    return choice_operator(kernel, S).T @ adjusted


# ------------------------------------------------------------ revenue

def _price_dict(model: CrossCatModel, prices: Mapping) -> dict:
    out = {}
    for node in model.nodes:
        if node.id not in prices:
            raise DomainError(f"missing prices for category {node.id!r}")
        r = np.asarray(prices[node.id], dtype=float)
        if r.shape != (node.n + 1,):
            raise DomainError(f"prices for {node.id!r} must have length {node.n + 1}")
        out[node.id] = r
    return out


def evaluate_revenue(model: CrossCatModel, prices: Mapping, sets: Mapping) -> float:
    """Expected total revenue of a customer walking the whole category graph."""
    prices = _price_dict(model, prices)
    marg = category_marginals(model, sets)
    return float(sum(marg[c] @ prices[c] for c in model.ids))


# ------------------------------------------------------------ optimizers

def optimize_two_category(model: CrossCatModel, prices_A, prices_B) -> AssortmentSolution:
    """Joint optimum for ``A -> B``: solve B arrival-free, then A on adjusted prices."""
    if len(model.nodes) != 2 or len(model.edges) != 1:
        raise DomainError("optimize_two_category needs exactly two categories and one edge")
    edge = model.edges[0]
    a, b = edge.source, edge.target
    kb = model.node(b).kernel
    if not isinstance(kb, (McModel, MnlModel)):
        raise DomainError("downstream category must be a Markov chain (or MNL) kernel")
    rA = np.asarray(prices_A, dtype=float)
    rB = np.asarray(prices_B, dtype=float)
    S_B, g_B = _solve_unconstrained(kb, rB)
    # R_i(S_B): expected B revenue after choosing i in A
    downstream = edge.matrix @ g_B
    adjusted_A = rA + downstream
    S_A, g_A = _solve_unconstrained(model.node(a).kernel, adjusted_A)
    revenue = _root_revenue(model.node(a).kernel, S_A, adjusted_A)
    return AssortmentSolution(
        sets={a: S_A, b: S_B},
        revenue=revenue,
        bellman={a: g_A, b: g_B},
        adjusted_prices={a: adjusted_A, b: rB.copy()},
    )


def _check_tree(model: CrossCatModel):
    if model.max_in_degree() > 1:
        raise UnsupportedStructureError(
            "categories with several parents are not supported by the optimizer")
    for cid in model.ids:
        if model.parents(cid) and not isinstance(model.node(cid).kernel, (McModel, MnlModel)):
            raise DomainError(f"non-root category {cid!r} needs a Markov chain kernel")


def _backward(model: CrossCatModel, prices: Mapping, root_solver) -> AssortmentSolution:
    _check_tree(model)
    prices = _price_dict(model, prices)
    sets, bellman, adjusted = {}, {}, {}
    for cid in reversed(model.topological_order()):
        r_adj = prices[cid].copy()
        for w in model.children(cid):
            r_adj += model.edge(cid, w).matrix @ bellman[w]
        adjusted[cid] = r_adj
        kernel = model.node(cid).kernel
        if model.parents(cid):
            sets[cid], bellman[cid] = _solve_unconstrained(kernel, r_adj)
        else:
            sets[cid], bellman[cid] = root_solver(cid, kernel, r_adj)
    revenue = sum(_root_revenue(model.node(c).kernel, sets[c], adjusted[c]) for c in model.roots())
    return AssortmentSolution(sets=sets, revenue=float(revenue), bellman=bellman,
                              adjusted_prices=adjusted)


def optimize_dag(model: CrossCatModel, prices: Mapping) -> AssortmentSolution:
    """Backward induction in reverse topological order (forests only)."""
    return _backward(model, prices, lambda cid, kernel, r: _solve_unconstrained(kernel, r))


def mnl_cardinality_assortment(model: MnlModel, prices, K: int) -> frozenset:
    """Best MNL assortment with at most ``K`` products.

    Bisection on the revenue target ``z``: a set beats ``z`` iff
    ``sum_{i in S} v_i (r_i - z) >= z``, and the left side is maximised by the
    ``K`` largest positive terms.  ``prices[0]`` must be 0.
    """
    if K < 0:
        raise DomainError("cardinality bound must be non-negative")
    r = np.asarray(prices, dtype=float)
    if r.shape != (model.n + 1,):
        raise DomainError("prices must have length n + 1")
    if r[0] != 0.0:
        raise DomainError("outside-option price must be 0; apply shift_prices first")
    if K == 0 or model.n == 0:
        return frozenset()
    v = model.weights
    rp = r[1:]

    def best_set(z):
        score = v * (rp - z)
        order = np.lexsort((np.arange(v.size), -score))
        chosen = [int(i) for i in order[:K] if score[i] > 0.0]
        return chosen, float(score[chosen].sum()) if chosen else 0.0

    def revenue(chosen):
        return float(mnl_choice_prob(model, [i + 1 for i in chosen]) @ r)

    lo, hi = 0.0, max(0.0, float(rp.max()))
    best, best_rev = [], 0.0
    for _ in range(BISECT_MAX_ITER):
        z = 0.5 * (lo + hi)
        chosen, val = best_set(z)
        rev = revenue(chosen)
        if rev > best_rev:
            best, best_rev = chosen, rev
        if val >= z:
            lo = max(z, rev)
        else:
            hi = z
        if hi - lo < BISECT_TOL or abs(rev - z) < BISECT_TOL:
            break
    chosen, _ = best_set(lo)
    if revenue(chosen) > best_rev:
        best = chosen
    return frozenset(i + 1 for i in best)


def optimize_root_constrained(model: CrossCatModel, prices: Mapping, K_per_root: Mapping) -> AssortmentSolution:
    """Backward induction with cardinality limits on MNL root categories only."""
    roots = set(model.roots())
    for cid in K_per_root:
        if cid not in roots:
            raise UnsupportedStructureError(
                f"cardinality constraint on non-root category {cid!r} is not supported")

    def root_solver(cid, kernel, r_adj):
        if cid not in K_per_root:
            return _solve_unconstrained(kernel, r_adj)
        if not isinstance(kernel, MnlModel):
            raise DomainError("cardinality-constrained roots must use an MNL kernel")
        shifted = shift_prices(r_adj)
        S = mnl_cardinality_assortment(kernel, np.where(shifted >= 0.0, shifted, 0.0), int(K_per_root[cid]))
        return S, _values_for_set(kernel, S, r_adj)

    return _backward(model, prices, root_solver)


def _subsets(n: int, limit: int | None):
    top = n if limit is None else min(n, limit)
    subs = [c for k in range(top + 1) for c in itertools.combinations(range(1, n + 1), k)]
    return sorted(subs)


def brute_force_optimal(model: CrossCatModel, prices: Mapping, cardinality: Mapping | None = None) -> AssortmentSolution:
    """Exhaustive search over every combination of offer sets (test oracle).

    Ties go to the lexicographically smallest list of sorted sets, in node order.
    """
    total = sum(node.n for node in model.nodes)
    if total > 20:
        raise DomainError("brute force limited to 20 products in total")
    cardinality = cardinality or {}
    prices = _price_dict(model, prices)
    ids = model.ids
    options = {c: _subsets(model.node(c).n, cardinality.get(c)) for c in ids}
    ops = {c: {S: choice_operator(model.node(c).kernel, S) for S in options[c]}
           for c in ids if model.parents(c)}
    best, best_rev = None, -np.inf
    for combo in itertools.product(*(options[c] for c in ids)):
        sets = dict(zip(ids, combo))
        marg = category_marginals(model, sets, {c: ops[c][sets[c]] for c in ops})
        rev = float(sum(marg[c] @ prices[c] for c in ids))
        if rev > best_rev + 1e-12:
            best, best_rev = sets, rev
    return AssortmentSolution(sets={c: frozenset(s) for c, s in best.items()}, revenue=best_rev)
