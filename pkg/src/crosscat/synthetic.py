"""Ranking-based ground truth with tunable cross-category dependence.

Category A is a mixture of preference lists.  Category B has a baseline
mixture whose lists are reshuffled depending on the upstream choice ``i``:
each retained option ``j`` gets the score ``pos_k(j) + theta * eps[i, j]`` and
the conditional list is the options sorted by score.  ``theta = 0`` makes B
independent of A; larger values make it depend more strongly on ``i``.

Random draws never depend on ``theta``, so one seed gives the same category
A, the same B baseline and the same noise ``eps`` for every ``theta``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .choice import offer_mask
from .errors import ConfigError
from .estimation import TwoCategoryData

_ABSENT = np.iinfo(np.int64).max // 4


def _class_ranking(n: int, p_del: float, rng) -> np.ndarray:
    """Products in a random interval, jittered, re-sorted, then thinned."""
    lo = int(rng.integers(1, n + 1))
    hi = int(rng.integers(lo, n + 1))
    prods = np.arange(lo, hi + 1)
    noisy = prods + rng.normal(0.0, 1.0, prods.size)
    order = prods[np.argsort(noisy, kind="stable")]
    keep = rng.random(order.size) >= p_del
    return order[keep]


def _class_probs(m: int, rng) -> np.ndarray:
    beta = rng.uniform(0.0, 1.0, m)
    return beta / beta.sum()


def _priority(ranking, n: int) -> np.ndarray:
    """Position of each option in a ranking; absent options get a huge value."""
    pri = np.full(n + 1, _ABSENT, dtype=np.int64)
    pri[np.asarray(ranking, dtype=np.int64)] = np.arange(len(ranking))
    return pri


@dataclass(frozen=True, eq=False)
class GroundTruth:
    n_A: int
    n_B: int
    theta: float
    p_del: float
    alpha: np.ndarray          # class probabilities in A
    rankings_A: tuple          # per class, products then 0
    psi: np.ndarray            # class probabilities in B
    baseline_B: tuple          # per class, retained products then 0
    cond_rankings: tuple       # cond_rankings[k][i]: class k ranking in B after choosing i in A
    eps: np.ndarray            # (n_A + 1, n_B + 1) perturbation noise

    def __post_init__(self):
        priA = np.stack([_priority(r, self.n_A) for r in self.rankings_A])
        priB = np.stack([[_priority(r, self.n_B) for r in per_i] for per_i in self.cond_rankings])
        object.__setattr__(self, "_priA", priA)
        object.__setattr__(self, "_priB", priB)

    def to_dict(self) -> dict:
        return {
            "n_A": self.n_A, "n_B": self.n_B, "theta": self.theta, "p_del": self.p_del,
            "alpha": self.alpha.tolist(), "rankings_A": [r.tolist() for r in self.rankings_A],
            "psi": self.psi.tolist(), "baseline_B": [r.tolist() for r in self.baseline_B],
            "cond_rankings": [[r.tolist() for r in per_i] for per_i in self.cond_rankings],
            "eps": self.eps.tolist(),
        }

    @classmethod
    def from_dict(cls, d) -> "GroundTruth":
        arr = lambda x: np.asarray(x, dtype=np.int64)
        return cls(int(d["n_A"]), int(d["n_B"]), float(d["theta"]), float(d["p_del"]),
                   np.asarray(d["alpha"], float), tuple(arr(r) for r in d["rankings_A"]),
                   np.asarray(d["psi"], float), tuple(arr(r) for r in d["baseline_B"]),
                   tuple(tuple(arr(r) for r in per_i) for per_i in d["cond_rankings"]),
                   np.asarray(d["eps"], float))


def gen_ground_truth(n_A: int = 10, n_B: int = 8, m_A: int = 10, m_B: int = 10, theta: float = 0.0,
                     p_del: float = 0.2, rng=None) -> GroundTruth:
    if theta < 0 or not 0 <= p_del <= 1 or min(n_A, n_B, m_A, m_B) < 1:
        raise ConfigError("invalid ground-truth parameters")
    rng = np.random.default_rng(rng)
    alpha = _class_probs(m_A, rng)
    rankings_A = tuple(np.append(_class_ranking(n_A, p_del, rng), 0) for _ in range(m_A))
    psi = _class_probs(m_B, rng)
    base = [_class_ranking(n_B, p_del, rng) for _ in range(m_B)]
    eps = rng.normal(0.0, 1.0, (n_A + 1, n_B + 1))
    cond = []
    for r in base:
        opts = np.append(r, 0)
        pos = np.append(np.arange(1, r.size + 1), n_B + 1).astype(float)
        per_i = []
        for i in range(n_A + 1):
            score = pos + theta * eps[i, opts]
            per_i.append(opts[np.argsort(score, kind="stable")])
        cond.append(tuple(per_i))
    baseline_B = tuple(np.append(r, 0) for r in base)
    return GroundTruth(n_A, n_B, float(theta), float(p_del), alpha, rankings_A, psi, baseline_B,
                       tuple(cond), eps)


def _first_offered(pri: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """``pri``: (..., n+1) priorities, ``mask``: matching offer mask; returns chosen option."""
    return np.argmin(np.where(mask, pri, _ABSENT + 1), axis=-1)


def _mixture_prob(pri: np.ndarray, weights: np.ndarray, mask: np.ndarray) -> np.ndarray:
    n1 = mask.shape[-1]
    pick = _first_offered(pri, mask)
    return np.bincount(pick, weights=weights, minlength=n1)


def gt_choice_prob_A(gt: GroundTruth, S_A) -> np.ndarray:
    return _mixture_prob(gt._priA, gt.alpha, offer_mask(S_A, gt.n_A))


def gt_conditional_prob(gt: GroundTruth, i: int, S_B) -> np.ndarray:
    """Exact B distribution after choosing ``i`` in A."""
    if not 0 <= i <= gt.n_A:
        raise ConfigError(f"upstream option {i} out of range")
    return _mixture_prob(gt._priB[:, i, :], gt.psi, offer_mask(S_B, gt.n_B))


def gt_conditional_matrix(gt: GroundTruth, S_B) -> np.ndarray:
    """Rows ``i = 0..n_A`` of the conditional B distribution."""
    mask = offer_mask(S_B, gt.n_B)
    pick = _first_offered(gt._priB, mask)             # (m_B, n_A + 1)
    out = np.zeros((gt.n_A + 1, gt.n_B + 1))
    for k in range(pick.shape[0]):
        out[np.arange(gt.n_A + 1), pick[k]] += gt.psi[k]
    return out


def gt_predict_b(gt: GroundTruth, a, mask_B) -> np.ndarray:
    """Exact B distribution for each ``(a_t, S_B^t)``."""
    a = np.asarray(a, dtype=np.int64)
    mask_B = np.asarray(mask_B, dtype=bool)
    out = np.zeros(mask_B.shape)
    rows = np.arange(a.size)
    for k in range(gt.psi.size):
        pick = _first_offered(gt._priB[k][a], mask_B)
        out[rows, pick] += gt.psi[k]
    return out


def simulate_dataset(gt: GroundTruth, T: int = 12000, rng=None) -> TwoCategoryData:
    """Random offer sets (each product with probability 1/2) and ground-truth choices."""
    rng = np.random.default_rng(rng)
    mA = np.ones((T, gt.n_A + 1), dtype=bool)
    mB = np.ones((T, gt.n_B + 1), dtype=bool)
    mA[:, 1:] = rng.random((T, gt.n_A)) < 0.5
    mB[:, 1:] = rng.random((T, gt.n_B)) < 0.5
    kA = rng.choice(gt.alpha.size, size=T, p=gt.alpha)
    a = _first_offered(gt._priA[kA], mA)
    kB = rng.choice(gt.psi.size, size=T, p=gt.psi)
    b = _first_offered(gt._priB[kB, a], mB)
    return TwoCategoryData(mA, mB, a, b)


def gt_expected_revenue(gt: GroundTruth, prices_A, prices_B, S_A, S_B) -> float:
    """Exact expected revenue from both categories; price vectors are indexed by option."""
    rA = np.asarray(prices_A, dtype=float)
    rB = np.asarray(prices_B, dtype=float)
    pA = gt_choice_prob_A(gt, S_A)
    return float(pA @ rA + pA @ (gt_conditional_matrix(gt, S_B) @ rB))


@dataclass(frozen=True)
class PriceScenario:
    """Price law tied to the preference index ``k``.

    ``low`` sensitivity: prices fall with ``k`` (preferred products are
    dearer); ``high``: prices rise with ``k``.  ``variance`` applies to the
    normal laws, which are truncated below at 0.1.
    """

    regime: str = "low"
    dist: str = "normal"
    variance: float = 25.0

    def __post_init__(self):
        if self.regime not in ("low", "high") or self.dist not in ("normal", "uniform"):
            raise ConfigError(f"unknown price scenario {self.regime}/{self.dist}")
        if self.variance < 0:
            raise ConfigError("price variance must be non-negative")

    def means(self, n: int) -> np.ndarray:
        k = np.arange(1, n + 1, dtype=float)
        if self.dist == "normal":
            return 100 - 5 * k if self.regime == "low" else 50 + 5 * k
        return 7.5 - 0.5 * k if self.regime == "low" else 7.5 + 0.5 * k


def gen_prices(scenario: PriceScenario, n: int, rng=None) -> np.ndarray:
    """Prices for products ``1..n``, returned with a leading 0 for the outside option."""
    rng = np.random.default_rng(rng)
    k = np.arange(1, n + 1, dtype=float)
    if scenario.dist == "normal":
        mean = 100 - 5 * k if scenario.regime == "low" else 50 + 5 * k
        r = np.maximum(mean + np.sqrt(scenario.variance) * rng.standard_normal(n), 0.1)
    else:
        lo = 5 - 0.5 * k if scenario.regime == "low" else 5 + 0.5 * k
        r = rng.uniform(lo, lo + 5)
    return np.concatenate(([0.0], r))
