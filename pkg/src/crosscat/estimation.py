"""Maximum-likelihood estimation for two-category (and chain) MNL-based models.

Data are held column-wise: offer masks of shape ``(T, n + 1)`` with column 0
always set, and integer choice vectors.  The downstream model ("MarkovMNL")
is parameterised by a transition matrix ``lam`` from upstream choices to
initial attractions and an MNL fallback ``vB`` that decides the substitute
when the attracted product is not offered.  Its likelihood is fitted by EM;
the initial attraction is the latent variable.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .choice import MnlModel, offer_mask
from .errors import DataError, DomainError, EstimationError, UnsupportedStructureError
from .model import CategoryNode, CrossCatModel, EdgeLambda

log = logging.getLogger(__name__)

CAP = 1e4
V_FLOOR = 1e-8
LL_FLOOR = np.log(1e-300)
MONOTONE_SLACK = 1e-9


# ------------------------------------------------------------------ data

@dataclass(frozen=True)
class Observation:
    S_A: frozenset
    S_B: frozenset
    a: int
    b: int

    def to_dict(self) -> dict:
        return {"S_A": sorted(self.S_A), "S_B": sorted(self.S_B), "a": self.a, "b": self.b}

    @classmethod
    def from_dict(cls, d) -> "Observation":
        try:
            return cls(frozenset(int(x) for x in d["S_A"]), frozenset(int(x) for x in d["S_B"]),
                       int(d["a"]), int(d["b"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"malformed observation {d!r}") from exc


def _validate_choices(mask: np.ndarray, choice: np.ndarray, label: str):
    if choice.ndim != 1 or mask.shape[0] != choice.shape[0]:
        raise DataError(f"{label}: masks and choices disagree on the number of observations")
    if choice.size and (choice.min() < 0 or choice.max() >= mask.shape[1]):
        raise DataError(f"{label}: choice index out of range")
    if choice.size and not np.all(mask[np.arange(choice.size), choice]):
        t = int(np.flatnonzero(~mask[np.arange(choice.size), choice])[0])
        raise DataError(f"{label}: observation {t} chose an option that was not offered")
    if mask.size and not np.all(mask[:, 0]):
        raise DataError(f"{label}: the no-purchase option must always be available")


@dataclass(frozen=True, eq=False)
class TwoCategoryData:
    """``T`` observations of ``(S_A, S_B, a, b)`` stored as arrays."""

    mask_A: np.ndarray
    mask_B: np.ndarray
    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        mA = np.asarray(self.mask_A, dtype=bool)
        mB = np.asarray(self.mask_B, dtype=bool)
        a = np.asarray(self.a, dtype=np.int64)
        b = np.asarray(self.b, dtype=np.int64)
        if mA.ndim != 2 or mB.ndim != 2 or mA.shape[0] != mB.shape[0]:
            raise DataError("offer masks must be (T, n+1) arrays with equal T")
        _validate_choices(mA, a, "category A")
        _validate_choices(mB, b, "category B")
        for name, arr in (("mask_A", mA), ("mask_B", mB), ("a", a), ("b", b)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def T(self) -> int:
        return self.a.shape[0]

    @property
    def n_A(self) -> int:
        return self.mask_A.shape[1] - 1

    @property
    def n_B(self) -> int:
        return self.mask_B.shape[1] - 1

    def __len__(self):
        return self.T

    def subset(self, idx) -> "TwoCategoryData":
        idx = np.asarray(idx)
        return TwoCategoryData(self.mask_A[idx], self.mask_B[idx], self.a[idx], self.b[idx])

    @classmethod
    def from_observations(cls, obs: Sequence[Observation], n_A: int, n_B: int) -> "TwoCategoryData":
        T = len(obs)
        mA = np.zeros((T, n_A + 1), dtype=bool)
        mB = np.zeros((T, n_B + 1), dtype=bool)
        try:
            for t, o in enumerate(obs):
                mA[t] = offer_mask(o.S_A, n_A)
                mB[t] = offer_mask(o.S_B, n_B)
        except DomainError as exc:
            raise DataError(f"observation {t}: {exc}") from exc
        a = np.array([o.a for o in obs], dtype=np.int64)
        b = np.array([o.b for o in obs], dtype=np.int64)
        return cls(mA, mB, a, b)

    def to_observations(self) -> list:
        out = []
        for t in range(self.T):
            out.append(Observation(frozenset(int(i) for i in np.flatnonzero(self.mask_A[t])[1:]),
                                   frozenset(int(j) for j in np.flatnonzero(self.mask_B[t])[1:]),
                                   int(self.a[t]), int(self.b[t])))
        return out


# ------------------------------------------------------------------ params

@dataclass(frozen=True, eq=False)
class TwoCatParams:
    vA: MnlModel
    vB: MnlModel
    lam: np.ndarray
    cap: float = CAP

    def __post_init__(self):
        lam = np.array(self.lam, dtype=float)
        if lam.shape != (self.vA.n + 1, self.vB.n + 1):
            raise DomainError("lambda shape does not match the two MNL models")
        if np.any(lam < 0) or np.any(np.abs(lam.sum(axis=1) - 1) > 1e-10):
            raise DomainError("lambda rows must be probability vectors")
        for m in (self.vA, self.vB):
            if np.any(m.weights > self.cap * (1 + 1e-12)):
                raise DomainError("MNL weight above the cap")
        lam.setflags(write=False)
        object.__setattr__(self, "lam", lam)

    def to_model(self, ids=("A", "B")) -> CrossCatModel:
        a, b = ids
        return CrossCatModel((CategoryNode(a, self.vA), CategoryNode(b, self.vB)),
                             (EdgeLambda(a, b, self.lam),))

    def to_dict(self) -> dict:
        return {"vA": self.vA.weights.tolist(), "vB": self.vB.weights.tolist(),
                "lambda": self.lam.tolist(), "cap": self.cap}

    @classmethod
    def from_dict(cls, d) -> "TwoCatParams":
        return cls(MnlModel(d["vA"]), MnlModel(d["vB"]), np.asarray(d["lambda"]), float(d.get("cap", CAP)))


def default_init(n_A: int, n_B: int, vA: MnlModel | None = None) -> TwoCatParams:
    """Uniform lambda rows and unit weights."""
    lam = np.full((n_A + 1, n_B + 1), 1.0 / (n_B + 1))
    return TwoCatParams(vA or MnlModel(np.ones(n_A)), MnlModel(np.ones(n_B)), lam)


def random_init(n_A: int, n_B: int, rng, vA: MnlModel | None = None) -> TwoCatParams:
    lam = rng.dirichlet(np.ones(n_B + 1), size=n_A + 1)
    vB = np.exp(rng.normal(0.0, 1.0, n_B))
    return TwoCatParams(vA or MnlModel(np.ones(n_A)), MnlModel(vB), lam)


# ------------------------------------------------------------------ MNL pieces

def _mnl_probs(full_w: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Row-wise MNL probabilities; ``full_w`` includes the outside weight 1."""
    w = mask * full_w
    return w / w.sum(axis=1, keepdims=True)


def _mnl_chosen_prob(full_w: np.ndarray, mask: np.ndarray, choice: np.ndarray) -> np.ndarray:
    return full_w[choice] / (mask @ full_w)


def _compress(mask: np.ndarray, choice: np.ndarray, weight: np.ndarray):
    """Merge observations with the same offer set and choice, summing weights."""
    n1 = mask.shape[1]
    bits = (mask.astype(np.int64) << np.arange(n1, dtype=np.int64)).sum(axis=1) if n1 <= 40 else None
    if bits is None:
        return mask, choice, weight
    key = bits * n1 + choice
    uniq, first, inv = np.unique(key, return_index=True, return_inverse=True)
    w = np.bincount(inv.ravel(), weights=weight, minlength=uniq.size)
    keep = w > 0
    return mask[first][keep], choice[first][keep], w[keep]


class _WeightedMnlObjective:
    """Average weighted MNL log-likelihood as a function of ``alpha = log v``."""

    def __init__(self, mask, choice, weight):
        mask, choice, weight = _compress(np.asarray(mask, bool), np.asarray(choice), np.asarray(weight, float))
        self.mask = mask[:, 1:].astype(float)
        self.choice = choice
        self.total = float(weight.sum())
        self.w = weight / self.total if self.total > 0 else weight
        n = self.mask.shape[1]
        # weighted count of each product being chosen
        chosen = choice > 0
        self.counts = np.bincount(choice[chosen] - 1, weights=self.w[chosen], minlength=n)

    def value_grad(self, alpha):
        e = np.exp(alpha)
        denom = 1.0 + self.mask @ e
        val = float(self.counts @ alpha - self.w @ np.log(denom))
        p = self.mask * (e / denom[:, None])
        grad = self.counts - self.w @ p
        return val, grad

    def value(self, alpha):
        return self.value_grad(alpha)[0]


def _projected_ascent(obj: _WeightedMnlObjective, alpha0, lo, hi, tol, max_iter):
    """Projected gradient ascent with Barzilai-Borwein steps and Armijo backtracking."""
    alpha = np.clip(np.asarray(alpha0, dtype=float), lo, hi)
    f, g = obj.value_grad(alpha)
    step = 1.0
    prev = None
    for it in range(max_iter):
        pg = np.clip(alpha + g, lo, hi) - alpha
        if np.max(np.abs(pg)) < tol:
            return alpha, f, True, it
        if prev is not None:
            s, y = alpha - prev[0], g - prev[1]
            sy = float(s @ y)
            if sy < -1e-16:
                step = float(np.clip(-(s @ s) / sy, 1e-6, 1e6))
        t = step
        while True:
            cand = np.clip(alpha + t * g, lo, hi)
            fc, gc = obj.value_grad(cand)
            if fc >= f + 1e-4 * float(g @ (cand - alpha)) or t < 1e-12:
                break
            t *= 0.5
        if fc < f:
            return alpha, f, False, it
        prev = (alpha, g)
        alpha, f, g = cand, fc, gc
        step = max(t, 1e-6)
    pg = np.clip(alpha + g, lo, hi) - alpha
    return alpha, f, bool(np.max(np.abs(pg)) < tol), max_iter


def fit_weighted_mnl(mask, choice, weight=None, cap: float = CAP, init=None,
                     tol: float = 1e-8, max_iter: int = 5000) -> MnlModel:
    """Maximise ``sum_t w_t log P(choice_t | S_t)`` over MNL weights in ``[V_FLOOR, cap]``."""
    mask = np.asarray(mask, dtype=bool)
    choice = np.asarray(choice, dtype=np.int64)
    n = mask.shape[1] - 1
    weight = np.ones(choice.shape[0]) if weight is None else np.asarray(weight, dtype=float)
    if choice.size == 0 or weight.sum() <= 0 or n == 0:
        return MnlModel(np.ones(n) if init is None else init.weights)
    obj = _WeightedMnlObjective(mask, choice, weight)
    alpha0 = np.zeros(n) if init is None else np.log(np.clip(init.weights, V_FLOOR, cap))
    alpha, _, ok, it = _projected_ascent(obj, alpha0, np.log(V_FLOOR), np.log(cap), tol, max_iter)
    if not ok:
        log.debug("weighted MNL ascent stopped after %d iterations without meeting tolerance", it)
    return MnlModel(np.exp(alpha))


def fit_mnl_mle(observations, n: int | None = None, cap: float = CAP, **kw) -> MnlModel:
    """MNL maximum-likelihood fit from ``(offer set, choice)`` pairs.

    ``observations`` may also be a ``(mask, choice)`` tuple of arrays.
    Empty data yields unit weights.
    """
    if isinstance(observations, tuple) and len(observations) == 2 and isinstance(observations[0], np.ndarray):
        mask, choice = observations
        return fit_weighted_mnl(mask, choice, cap=cap, **kw)
    pairs = list(observations)
    if n is None:
        n = max([max(S, default=0) for S, _ in pairs] + [c for _, c in pairs] + [0])
    if not pairs:
        return MnlModel(np.ones(n))
    mask = np.array([offer_mask(S, n) for S, _ in pairs])
    choice = np.array([c for _, c in pairs], dtype=np.int64)
    _validate_choices(mask, choice, "MNL data")
    return fit_weighted_mnl(mask, choice, cap=cap, **kw)


# ------------------------------------------------------------------ likelihood

def _obs_terms(params: TwoCatParams, data: TwoCategoryData):
    """Per-observation A probability, B probability and MNL fallback probability of b."""
    wA = params.vA.full_weights
    wB = params.vB.full_weights
    pA = _mnl_chosen_prob(wA, data.mask_A, data.a)
    pfall = _mnl_chosen_prob(wB, data.mask_B, data.b)
    rows = params.lam[data.a]
    missing = (rows * ~data.mask_B).sum(axis=1)
    pB = rows[np.arange(data.T), data.b] + pfall * missing
    return pA, pB, pfall


def loglik_terms(params: TwoCatParams, data: TwoCategoryData, part: str = "both") -> np.ndarray:
    """Per-observation log-likelihood (``part`` is ``"A"``, ``"B"`` or ``"both"``)."""
    pA, pB, _ = _obs_terms(params, data)
    with np.errstate(divide="ignore"):
        if part == "A":
            return np.log(pA)
        if part == "B":
            return np.log(pB)
        return np.log(pA) + np.log(pB)


def loglik_observed(params: TwoCatParams, data: TwoCategoryData, floor: float | None = None,
                    part: str = "both") -> float:
    """Observed-data log-likelihood.

    A zero-probability observation makes the result ``-inf`` (its index is
    logged) unless ``floor`` is given, in which case each term is clipped
    from below at ``floor``.
    """
    terms = loglik_terms(params, data, part)
    bad = ~np.isfinite(terms)
    if bad.any():
        if floor is None:
            log.warning("observation %d has zero probability under the current parameters",
                        int(np.flatnonzero(bad)[0]))
            return -np.inf
        terms = np.maximum(np.where(bad, floor, terms), floor)
    elif floor is not None:
        terms = np.maximum(terms, floor)
    return float(terms.sum())


# ------------------------------------------------------------------ EM

@dataclass(frozen=True, eq=False)
class LatentPosterior:
    """``xhat[t, m]``: posterior probability that customer ``t`` was first drawn to ``m`` in B."""

    xhat: np.ndarray
    flagged: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))


def _posterior(lam, vB: MnlModel, mask_B, a, b):
    T = a.shape[0]
    pfall = _mnl_chosen_prob(vB.full_weights, mask_B, b)
    rows = lam[a]
    support = ~mask_B
    u = rows * support * pfall[:, None]
    u[np.arange(T), b] += rows[np.arange(T), b]
    denom = u.sum(axis=1)
    flagged = np.flatnonzero(denom <= 0)
    if flagged.size:
        log.warning("%d observations have zero posterior mass; using uniform posteriors", flagged.size)
        feas = support[flagged].astype(float)
        feas[np.arange(flagged.size), b[flagged]] = 1.0
        u[flagged] = feas
        denom[flagged] = feas.sum(axis=1)
    return u / denom[:, None], flagged


def em_e_step(params: TwoCatParams, data: TwoCategoryData) -> LatentPosterior:
    xhat, flagged = _posterior(params.lam, params.vB, data.mask_B, data.a, data.b)
    return LatentPosterior(xhat, flagged)


def _lambda_update(xhat, a, lam_old):
    n1 = lam_old.shape[0]
    sums = np.zeros_like(lam_old)
    np.add.at(sums, a, xhat)
    counts = np.bincount(a, minlength=n1)
    lam = lam_old.copy()
    seen = counts > 0
    lam[seen] = sums[seen] / counts[seen, None]
    return lam


def _fallback_weights(xhat, mask_B):
    return (xhat * ~mask_B).sum(axis=1)


def em_m_step(posterior: LatentPosterior, data: TwoCategoryData, params: TwoCatParams,
              cap: float | None = None, max_inner: int = 500, tol: float = 1e-8) -> TwoCatParams:
    """Closed-form lambda update plus a weighted MNL update of ``vB``.

    Rows of lambda whose upstream option never occurs are left unchanged.
    """
    cap = params.cap if cap is None else cap
    xhat = posterior.xhat
    lam = _lambda_update(xhat, data.a, params.lam)
    w = _fallback_weights(xhat, data.mask_B)
    vB = fit_weighted_mnl(data.mask_B, data.b, w, cap=cap, init=params.vB, tol=tol, max_iter=max_inner)
    return TwoCatParams(params.vA, vB, lam, cap)


def expected_complete_loglik(posterior: LatentPosterior, data: TwoCategoryData, params: TwoCatParams) -> float:
    """Expected complete-data log-likelihood (category B part) under ``posterior``."""
    xhat = posterior.xhat
    with np.errstate(divide="ignore", invalid="ignore"):
        loglam = np.where(xhat > 0, np.log(params.lam[data.a]), 0.0)
    term_lam = float((xhat * loglam).sum())
    w = _fallback_weights(xhat, data.mask_B)
    with np.errstate(divide="ignore"):
        lp = np.log(_mnl_chosen_prob(params.vB.full_weights, data.mask_B, data.b))
    term_v = float(np.where(w > 0, w * lp, 0.0).sum())
    return term_lam + term_v


@dataclass
class EmReport:
    params: TwoCatParams
    ll_trace: list
    iterations: int
    converged: bool

    def to_dict(self) -> dict:
        return {"params": self.params.to_dict(), "ll_trace": list(map(float, self.ll_trace)),
                "iterations": self.iterations, "converged": self.converged}


def _param_change(old: TwoCatParams, new: TwoCatParams) -> float:
    dl = float(np.max(np.abs(new.lam - old.lam)))
    dv = np.abs(new.vB.weights - old.vB.weights) / np.maximum(1.0, old.vB.weights)
    return max(dl, float(dv.max()) if dv.size else 0.0)


def _check_monotone(prev: float, cur: float, it: int):
    if cur < prev - MONOTONE_SLACK * max(1.0, abs(prev)):
        raise EstimationError(f"log-likelihood decreased at iteration {it}: {prev!r} -> {cur!r}")


def fit_em(data: TwoCategoryData, init: TwoCatParams | None = None, tol_ll: float = 1e-2,
           tol_param: float = 1e-2, max_iter: int = 1000, cap: float = CAP,
           multistart: int = 1, seed: int = 0, fit_vA: bool = True) -> EmReport:
    """Fit MarkovMNL by EM.

    ``vA`` is fitted once by MNL maximum likelihood (unless ``fit_vA`` is
    false, in which case ``init.vA`` is kept).  Iterations stop when both the
    change in average log-likelihood is below ``tol_ll`` and the largest
    parameter change is below ``tol_param``.  With ``multistart > 1`` extra
    random starts are run and the best final likelihood is kept.
    """
    if data.T == 0:
        raise DataError("cannot fit a model to an empty dataset")
    vA = fit_weighted_mnl(data.mask_A, data.a, cap=cap) if fit_vA else (init.vA if init else MnlModel(np.ones(data.n_A)))
    starts = [default_init(data.n_A, data.n_B, vA) if init is None
              else TwoCatParams(vA, init.vB, init.lam, cap)]
    rng = np.random.default_rng(seed)
    for _ in range(max(0, multistart - 1)):
        starts.append(random_init(data.n_A, data.n_B, rng, vA))
    best = None
    for k, start in enumerate(starts):
        rep = _em_run(data, start, tol_ll, tol_param, max_iter, cap)
        log.debug("EM start %d: LL %.6f after %d iterations", k, rep.ll_trace[-1], rep.iterations)
        if best is None or rep.ll_trace[-1] > best.ll_trace[-1]:
            best = rep
    return best


def _em_run(data, params, tol_ll, tol_param, max_iter, cap) -> EmReport:
    T = data.T
    ll = loglik_observed(params, data, floor=LL_FLOOR)
    trace = [ll]
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        post = em_e_step(params, data)
        new = em_m_step(post, data, params, cap=cap)
        ll_new = loglik_observed(new, data, floor=LL_FLOOR)
        _check_monotone(ll, ll_new, it)
        dparam = _param_change(params, new)
        dll = (ll_new - ll) / T
        params, ll = new, ll_new
        trace.append(ll)
        if dll < tol_ll and dparam < tol_param:
            converged = True
            break
    return EmReport(params, trace, it, converged)


# ------------------------------------------------------------------ benchmarks

def fit_ind_mnl(data: TwoCategoryData, cap: float = CAP) -> TwoCatParams:
    """Independent MNLs, expressed as a two-category model with constant lambda rows.

    Each lambda row equals the B model's full-assortment choice distribution,
    which reproduces plain MNL choice in B for every offer set.
    """
    vA = fit_weighted_mnl(data.mask_A, data.a, cap=cap)
    vB = fit_weighted_mnl(data.mask_B, data.b, cap=cap)
    w = vB.full_weights
    lam = np.tile(w / w.sum(), (data.n_A + 1, 1))
    return TwoCatParams(vA, vB, lam, cap)


@dataclass(frozen=True, eq=False)
class MultiMnl:
    """One B-category MNL per upstream option."""

    vA: MnlModel
    conditional: tuple

    def to_dict(self) -> dict:
        return {"vA": self.vA.weights.tolist(), "conditional": [m.weights.tolist() for m in self.conditional]}


def fit_multimnl(data: TwoCategoryData, cap: float = CAP) -> MultiMnl:
    """Fit a separate B MNL on the observations of each upstream choice (unit weights if none)."""
    vA = fit_weighted_mnl(data.mask_A, data.a, cap=cap)
    models = []
    for i in range(data.n_A + 1):
        sel = data.a == i
        if not sel.any():
            models.append(MnlModel(np.ones(data.n_B)))
            continue
        models.append(fit_weighted_mnl(data.mask_B[sel], data.b[sel], cap=cap))
    return MultiMnl(vA, tuple(models))


def predict_b(model, a, mask_B) -> np.ndarray:
    """Predicted B distribution for each ``(a_t, S_B^t)``; shape ``(T, n_B + 1)``."""
    a = np.asarray(a, dtype=np.int64)
    mask_B = np.asarray(mask_B, dtype=bool)
    if isinstance(model, MultiMnl):
        W = np.stack([m.full_weights for m in model.conditional])[a]
        w = W * mask_B
        return w / w.sum(axis=1, keepdims=True)
    if isinstance(model, TwoCatParams):
        fall = _mnl_probs(model.vB.full_weights, mask_B)
        rows = model.lam[a]
        missing = (rows * ~mask_B).sum(axis=1, keepdims=True)
        return rows * mask_B + missing * fall
    if isinstance(model, MnlModel):
        return _mnl_probs(model.full_weights, mask_B)
    raise DomainError(f"cannot predict with a {type(model).__name__}")


def predictive_loglik(model, data: TwoCategoryData) -> float:
    """Sum of ``log P(b_t | a_t, S_B^t)`` (category B only)."""
    p = predict_b(model, data.a, data.mask_B)[np.arange(data.T), data.b]
    with np.errstate(divide="ignore"):
        return float(np.log(p).sum())


# ------------------------------------------------------------------ chains

@dataclass(frozen=True, eq=False)
class ChainData:
    """Observations along a chain of categories: one mask array and choice vector per category."""

    masks: tuple
    choices: tuple

    def __post_init__(self):
        masks = tuple(np.asarray(m, dtype=bool) for m in self.masks)
        choices = tuple(np.asarray(c, dtype=np.int64) for c in self.choices)
        if len(masks) != len(choices) or len(masks) < 2:
            raise UnsupportedStructureError("chain EM needs at least two categories")
        T = choices[0].shape[0]
        for k, (m, c) in enumerate(zip(masks, choices)):
            if m.shape[0] != T:
                raise DataError("all categories must have the same number of observations")
            _validate_choices(m, c, f"category {k}")
        object.__setattr__(self, "masks", masks)
        object.__setattr__(self, "choices", choices)

    @property
    def T(self) -> int:
        return self.choices[0].shape[0]

    def edge_data(self, k: int) -> TwoCategoryData:
        return TwoCategoryData(self.masks[k], self.masks[k + 1], self.choices[k], self.choices[k + 1])


@dataclass
class ChainReport:
    root: MnlModel
    edges: list  # TwoCatParams per consecutive pair
    ll_trace: list
    iterations: int
    converged: bool

    def to_model(self, ids: Sequence[str] | None = None) -> CrossCatModel:
        ids = list(ids) if ids is not None else [f"C{k}" for k in range(len(self.edges) + 1)]
        nodes = [CategoryNode(ids[0], self.root)] + [CategoryNode(ids[k + 1], p.vB) for k, p in enumerate(self.edges)]
        edges = [EdgeLambda(ids[k], ids[k + 1], p.lam) for k, p in enumerate(self.edges)]
        return CrossCatModel(tuple(nodes), tuple(edges))


def fit_chain_em(data, init: Sequence[TwoCatParams] | None = None, tol_ll: float = 1e-2,
                 tol_param: float = 1e-2, max_iter: int = 1000, cap: float = CAP) -> ChainReport:
    """EM along a chain ``C0 -> C1 -> ... -> Cm``.

    When every category's choice is observed, the likelihood splits into the
    root MNL term plus one term per edge, each of the two-category form with
    its own latent initial attraction.  The per-edge updates therefore run in
    lockstep and the total likelihood is the sum of the edge likelihoods.
    """
    if isinstance(data, CrossCatModel):
        raise UnsupportedStructureError("pass observations, not a model")
    if not isinstance(data, ChainData):
        raise UnsupportedStructureError("chain EM needs ChainData; general graphs are not supported")
    root = fit_weighted_mnl(data.masks[0], data.choices[0], cap=cap)
    parts = [data.edge_data(k) for k in range(len(data.masks) - 1)]
    if init is None:
        params = [default_init(p.n_A, p.n_B) for p in parts]
    else:
        if len(init) != len(parts):
            raise DomainError("one initial parameter set per edge is required")
        params = list(init)
    ones = [MnlModel(np.ones(p.n_A)) for p in parts]
    params = [TwoCatParams(ones[k], params[k].vB, params[k].lam, cap) for k in range(len(parts))]

    def total(ps):
        ll = loglik_observed(TwoCatParams(root, ps[0].vB, ps[0].lam, cap), parts[0], floor=LL_FLOOR)
        for p, d in zip(ps[1:], parts[1:]):
            ll += loglik_observed(p, d, floor=LL_FLOOR, part="B")
        return ll

    ll = total(params)
    trace = [ll]
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        new = [em_m_step(em_e_step(p, d), d, p, cap=cap) for p, d in zip(params, parts)]
        ll_new = total(new)
        _check_monotone(ll, ll_new, it)
        dparam = max(_param_change(p, q) for p, q in zip(params, new))
        dll = (ll_new - ll) / data.T
        params, ll = new, ll_new
        trace.append(ll)
        if dll < tol_ll and dparam < tol_param:
            converged = True
            break
    edges = [TwoCatParams(root if k == 0 else params[k - 1].vB, p.vB, p.lam, cap) for k, p in enumerate(params)]
    return ChainReport(root, edges, trace, it, converged)


def observations_to_data(obs: Iterable[Observation], n_A: int | None = None, n_B: int | None = None) -> TwoCategoryData:
    """Build arrays from observations, inferring product counts when not given."""
    obs = list(obs)
    if n_A is None:
        n_A = max([max(o.S_A, default=0) for o in obs] + [o.a for o in obs] + [0])
    if n_B is None:
        n_B = max([max(o.S_B, default=0) for o in obs] + [o.b for o in obs] + [0])
    return TwoCategoryData.from_observations(obs, n_A, n_B)
