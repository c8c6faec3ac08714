"""Single-category choice kernels.

Every category has products ``1..n`` and the no-purchase option ``0``.
Probability vectors returned here always have length ``n + 1`` and are
indexed by option, with zeros on products outside the offered set.

Three kernels are supported:

* :class:`MnlModel` -- multinomial logit, outside weight fixed at 1;
* :class:`McModel` -- Markov chain choice model (arrival vector + transitions);
* :class:`RankingModel` -- explicit distribution over preference lists.

Besides the plain choice probabilities, each kernel exposes the choice
distribution *conditional on an initial attraction* to a given option,
collected column-wise in :func:`choice_operator`.  That operator is what the
cross-category model composes along edges.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterable, Union

import numpy as np

from .errors import DomainError, ModelError

NO_PURCHASE = 0
INPUT_TOL = 1e-12
OUTPUT_TOL = 1e-9


def _frozen(arr) -> np.ndarray:
    out = np.array(arr, dtype=float)
    out.setflags(write=False)
    return out


def offer_mask(S: Iterable[int], n: int) -> np.ndarray:
    """Boolean mask of length ``n + 1`` for ``S ∪ {0}``."""
    mask = np.zeros(n + 1, dtype=bool)
    mask[0] = True
    for j in S:
        j = int(j)
        if j < 1 or j > n:
            raise DomainError(f"product {j} outside 1..{n}")
        mask[j] = True
    return mask


@dataclass(frozen=True, eq=False)
class MnlModel:
    """MNL preference weights ``v_1..v_n``; the outside option has weight 1."""

    weights: np.ndarray

    def __post_init__(self):
        w = np.atleast_1d(np.asarray(self.weights, dtype=float))
        if w.ndim != 1:
            raise ModelError("MNL weights must be a vector")
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise ModelError("MNL weights must be finite and non-negative")
        object.__setattr__(self, "weights", _frozen(w))

    @property
    def n(self) -> int:
        return self.weights.shape[0]

    @property
    def full_weights(self) -> np.ndarray:
        """Weights indexed by option, ``[1, v_1, ..., v_n]``."""
        return np.concatenate(([1.0], self.weights))

    def to_dict(self) -> dict:
        return {"type": "mnl", "weights": self.weights.tolist()}


@dataclass(frozen=True, eq=False)
class McModel:
    """Markov chain choice model over states ``0..n`` (0 absorbing)."""

    arrival: np.ndarray
    transition: np.ndarray

    def __post_init__(self):
        lam = np.asarray(self.arrival, dtype=float)
        rho = np.asarray(self.transition, dtype=float)
        n1 = lam.shape[0]
        if lam.ndim != 1 or rho.shape != (n1, n1):
            raise ModelError("arrival must have length n+1 and transition shape (n+1, n+1)")
        if np.any(lam < 0) or abs(lam.sum() - 1.0) > INPUT_TOL:
            raise ModelError("arrival must be a probability vector")
        if np.any(rho < 0) or np.any(np.abs(rho.sum(axis=1) - 1.0) > INPUT_TOL):
            raise ModelError("transition rows must be probability vectors")
        if not (rho[0, 0] == 1.0 and np.all(rho[0, 1:] == 0.0)):
            raise ModelError("state 0 must be absorbing")
        check_absorbing(rho)
        object.__setattr__(self, "arrival", _frozen(lam))
        object.__setattr__(self, "transition", _frozen(rho))

    @property
    def n(self) -> int:
        return self.arrival.shape[0] - 1

    def to_dict(self) -> dict:
        return {"type": "mc", "arrival": self.arrival.tolist(),
                "transition": self.transition.tolist()}


def check_absorbing(rho: np.ndarray) -> None:
    """Reject transition matrices from which a product can avoid state 0 forever.

    Uses the cheap sufficient test ``q <- rho_TT q`` from ``q = 1`` for ``10 n``
    steps with every product transient.
    """
    n = rho.shape[0] - 1
    if n == 0:
        return
    q_mat = rho[1:, 1:]
    q = np.ones(n)
    for _ in range(10 * n):
        q = q_mat @ q
    if np.any(q > 1.0 - 1e-9):
        raise ModelError("some product cannot reach the no-purchase state")


@dataclass(frozen=True, eq=False)
class RankingModel:
    """Distribution over preference lists.

    Each ranking is a permutation of ``0..n`` written most-preferred first.
    """

    rankings: tuple
    probs: np.ndarray

    def __post_init__(self):
        ranks = tuple(tuple(int(x) for x in r) for r in self.rankings)
        p = np.asarray(self.probs, dtype=float)
        if len(ranks) == 0 or p.shape != (len(ranks),):
            raise ModelError("need one probability per ranking")
        n1 = len(ranks[0])
        for r in ranks:
            if sorted(r) != list(range(n1)):
                raise ModelError(f"ranking {r} is not a permutation of 0..{n1 - 1}")
        if np.any(p < 0) or abs(p.sum() - 1.0) > INPUT_TOL:
            raise ModelError("ranking probabilities must sum to 1")
        object.__setattr__(self, "rankings", ranks)
        object.__setattr__(self, "probs", _frozen(p))

    @property
    def n(self) -> int:
        return len(self.rankings[0]) - 1

    def to_dict(self) -> dict:
        return {"type": "rcm", "rankings": [list(r) for r in self.rankings],
                "probs": self.probs.tolist()}


Kernel = Union[MnlModel, McModel, RankingModel]


def kernel_from_dict(d: dict) -> Kernel:
    kind = d.get("type")
    if kind == "mnl":
        return MnlModel(d["weights"])
    if kind == "mc":
        return McModel(d["arrival"], d["transition"])
    if kind == "rcm":
        return RankingModel(d["rankings"], d["probs"])
    raise ModelError(f"unknown kernel type {kind!r}")


# ---------------------------------------------------------------- MNL

def mnl_choice_prob(model: MnlModel, S) -> np.ndarray:
    mask = offer_mask(S, model.n)
    w = np.where(mask, model.full_weights, 0.0)
    return w / w.sum()


def mnl_conditional_prob(model: MnlModel, S, k: int) -> np.ndarray:
    """Choice distribution given initial attraction to unavailable product ``k``.

    Under MNL this does not depend on ``k`` (IIA), so it is just
    :func:`mnl_choice_prob`.
    """
    mask = offer_mask(S, model.n)
    _check_unavailable(k, mask)
    return mnl_choice_prob(model, S)


def mnl_to_mc(model: MnlModel) -> McModel:
    """Markov chain embedding of an MNL model.

    ``rho_ij = v_j / (sum_{k != i} v_k + 1)`` and arrival ``v_j / (V + 1)``;
    it reproduces the MNL choice probabilities for every offer set.
    """
    w = model.full_weights
    n = model.n
    rho = np.zeros((n + 1, n + 1))
    rho[0, 0] = 1.0
    total = w.sum()
    for i in range(1, n + 1):
        rho[i] = w / (total - w[i])
        rho[i, i] = 0.0
    rho[1:] /= rho[1:].sum(axis=1, keepdims=True)
    return McModel(w / total, rho)


# ---------------------------------------------------------------- Markov chain

def mc_absorption(transition: np.ndarray, S) -> np.ndarray:
    """Absorption operator ``M`` with ``M[j, l] = P(choose j | start at l)``.

    Products outside ``S`` are transient; ``S ∪ {0}`` absorbs.  The transient
    block is solved with a dense LU factorisation (partial pivoting).
    """
    rho = np.asarray(transition, dtype=float)
    n = rho.shape[0] - 1
    mask = offer_mask(S, n)
    absorbing = np.flatnonzero(mask)
    transient = np.flatnonzero(~mask)
    M = np.zeros((n + 1, n + 1))
    M[absorbing, absorbing] = 1.0
    if transient.size:
        q = rho[np.ix_(transient, transient)]
        r = rho[np.ix_(transient, absorbing)]
        try:
            B = np.linalg.solve(np.eye(transient.size) - q, r)
        except np.linalg.LinAlgError as exc:
            raise ModelError("transient block is singular; chain never absorbs") from exc
        if not np.all(np.isfinite(B)):
            raise ModelError("transient block is singular; chain never absorbs")
        M[np.ix_(absorbing, transient)] = B.T
    return M


def mc_choice_prob(model: McModel, S) -> np.ndarray:
    out = mc_absorption(model.transition, S) @ model.arrival
    return out


def mc_choice_from_arrival(transition: np.ndarray, arrival, S) -> np.ndarray:
    """MC choice probabilities for an arbitrary initial-attraction vector."""
    return mc_absorption(transition, S) @ np.asarray(arrival, dtype=float)


# ---------------------------------------------------------------- rankings

def _first_available(ranking, mask) -> int:
    for x in ranking:
        if mask[x]:
            return x
    raise AssertionError("option 0 is always available")


def rcm_choice_prob(model: RankingModel, S) -> np.ndarray:
    mask = offer_mask(S, model.n)
    out = np.zeros(model.n + 1)
    for r, p in zip(model.rankings, model.probs):
        out[_first_available(r, mask)] += p
    return out


def rcm_conditional_prob(model: RankingModel, S, ell: int) -> np.ndarray:
    """Choice distribution among rankings whose overall favourite is ``ell``.

    Returns the zero vector when no ranking starts with ``ell``.
    """
    mask = offer_mask(S, model.n)
    _check_unavailable(ell, mask)
    out = np.zeros(model.n + 1)
    total = 0.0
    for r, p in zip(model.rankings, model.probs):
        if r[0] == ell:
            total += p
            out[_first_available(r, mask)] += p
    if total <= 0.0:
        return np.zeros(model.n + 1)
    return out / total


def mnl_as_ranking_model(model: MnlModel) -> RankingModel:
    """Ranking model equivalent to an MNL, built by sequential sampling.

    Each position is filled by drawing among the not-yet-ranked options with
    probability proportional to weight.  Enumerates ``(n + 1)!`` rankings.
    """
    w = model.full_weights
    options = range(model.n + 1)
    rankings, probs = [], []
    for perm in itertools.permutations(options):
        p = 1.0
        remaining = w.sum()
        for x in perm:
            if remaining <= 0.0:
                break
            p *= w[x] / remaining
            remaining -= w[x]
        rankings.append(perm)
        probs.append(p)
    probs = np.array(probs)
    return RankingModel(tuple(rankings), probs / probs.sum())


# ---------------------------------------------------------------- dispatch

def _check_unavailable(ell: int, mask: np.ndarray) -> None:
    if ell < 1 or ell >= mask.shape[0]:
        raise DomainError(f"product {ell} outside 1..{mask.shape[0] - 1}")
    if mask[ell]:
        raise DomainError(f"product {ell} is offered; conditioning needs an unavailable product")


def choice_probs(kernel: Kernel, S) -> np.ndarray:
    """Unconditional choice probabilities of a category on its own."""
    if isinstance(kernel, MnlModel):
        return mnl_choice_prob(kernel, S)
    if isinstance(kernel, McModel):
        return mc_choice_prob(kernel, S)
    if isinstance(kernel, RankingModel):
        return rcm_choice_prob(kernel, S)
    raise DomainError(f"unsupported kernel {type(kernel).__name__}")


def choice_operator(kernel: Kernel, S) -> np.ndarray:
    """Matrix ``M`` with ``M[:, l]`` = choice distribution after initial attraction to ``l``.

    Offered options (and 0) are bought directly; an unavailable product
    triggers the kernel's substitution rule.  Composing ``M @ lam_row`` gives
    the downstream choice probabilities for a cross-category edge.
    """
    n = kernel.n
    mask = offer_mask(S, n)
    if isinstance(kernel, McModel):
        return mc_absorption(kernel.transition, S)
    M = np.zeros((n + 1, n + 1))
    offered = np.flatnonzero(mask)
    M[offered, offered] = 1.0
    missing = np.flatnonzero(~mask)
    if isinstance(kernel, MnlModel):
        if missing.size:
            M[:, missing] = mnl_choice_prob(kernel, S)[:, None]
    elif isinstance(kernel, RankingModel):
        for ell in missing:
            M[:, ell] = rcm_conditional_prob(kernel, S, int(ell))
    else:
        raise DomainError(f"unsupported kernel {type(kernel).__name__}")
    return M


def as_markov_chain(kernel: Kernel) -> McModel:
    """MC view of a kernel used by the optimizers (MNL is embedded)."""
    if isinstance(kernel, McModel):
        return kernel
    if isinstance(kernel, MnlModel):
        return mnl_to_mc(kernel)
    raise DomainError(f"{type(kernel).__name__} kernel has no Markov chain form")
