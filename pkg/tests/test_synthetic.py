import json

import numpy as np
import pytest

from crosscat.synthetic import (
    GroundTruth, PriceScenario, gen_ground_truth, gen_prices, gt_choice_prob_A, gt_conditional_matrix,
    gt_conditional_prob, gt_expected_revenue, gt_predict_b, simulate_dataset,
)


def test_theta_zero_conditionals_equal_baseline():
    gt = gen_ground_truth(theta=0.0, rng=1)
    for k, per_i in enumerate(gt.cond_rankings):
        for r in per_i:
            np.testing.assert_array_equal(r, gt.baseline_B[k])
    rows = gt_conditional_matrix(gt, {1, 3, 5})
    np.testing.assert_allclose(rows, np.tile(rows[0], (gt.n_A + 1, 1)), atol=1e-12)


def test_rankings_are_permutations_of_retained_products():
    gt = gen_ground_truth(theta=3.0, rng=2)
    assert abs(gt.alpha.sum() - 1) < 1e-12 and abs(gt.psi.sum() - 1) < 1e-12
    for k, per_i in enumerate(gt.cond_rankings):
        for r in per_i:
            assert sorted(r.tolist()) == sorted(gt.baseline_B[k].tolist())
            assert 0 in r.tolist()


def test_full_deletion_leaves_only_no_purchase():
    gt = gen_ground_truth(p_del=1.0, rng=3)
    assert all(r.tolist() == [0] for r in gt.rankings_A)
    assert all(r.tolist() == [0] for per_i in gt.cond_rankings for r in per_i)


def test_determinism_and_json_round_trip():
    a = gen_ground_truth(theta=2.0, rng=7)
    b = gen_ground_truth(theta=2.0, rng=7)
    assert json.dumps(a.to_dict()) == json.dumps(b.to_dict())
    c = GroundTruth.from_dict(json.loads(json.dumps(a.to_dict())))
    np.testing.assert_allclose(gt_conditional_prob(a, 3, {1, 2}), gt_conditional_prob(c, 3, {1, 2}))
    d1 = simulate_dataset(a, 500, 11)
    d2 = simulate_dataset(a, 500, 11)
    for f in ("mask_A", "mask_B", "a", "b"):
        assert getattr(d1, f).tobytes() == getattr(d2, f).tobytes()


def test_draws_do_not_depend_on_theta():
    a = gen_ground_truth(theta=0.0, rng=5)
    b = gen_ground_truth(theta=4.0, rng=5)
    np.testing.assert_array_equal(a.eps, b.eps)
    assert all((x == y).all() for x, y in zip(a.rankings_A, b.rankings_A))


def test_single_class_gives_point_mass():
    gt = gen_ground_truth(m_B=1, theta=1.0, p_del=0.0, rng=4)
    p = gt_conditional_prob(gt, 2, {1, 2, 3, 4, 5, 6, 7, 8})
    assert sorted(p)[-1] == 1.0 and np.count_nonzero(p) == 1


def test_conditional_matches_sampling():
    gt = gen_ground_truth(theta=2.0, rng=6)
    rng = np.random.default_rng(0)
    S = {2, 4, 5, 7}
    N = 200000
    k = rng.choice(gt.psi.size, size=N, p=gt.psi)
    picks = np.array([next(j for j in gt.cond_rankings[kk][3] if j == 0 or j in S) for kk in k[:N]])
    freq = np.bincount(picks, minlength=gt.n_B + 1) / N
    p = gt_conditional_prob(gt, 3, S)
    assert np.all(np.abs(freq - p) <= 4 * np.sqrt(p * (1 - p) / N) + 1e-12)


def _chi2_ok(counts, p, crit):
    keep = p > 0
    assert counts[~keep].sum() == 0
    exp = p[keep] * counts.sum()
    stat = ((counts[keep] - exp) ** 2 / exp).sum()
    return stat <= crit


def test_simulated_frequencies_chi_square():
    from scipy.stats import chi2

    for seed in range(20):
        gt = gen_ground_truth(theta=1.5, rng=100 + seed)
        rng = np.random.default_rng(seed)
        T = 100000
        data = simulate_dataset(gt, T, rng)
        # pool over offer sets: the exact A marginal is the mean of per-transaction probabilities
        pA = np.mean([gt_choice_prob_A(gt, np.flatnonzero(m)[1:]) for m in data.mask_A[:4000]], axis=0)
        pB = gt_predict_b(gt, data.a, data.mask_B).mean(axis=0)
        cB = np.bincount(data.b, minlength=gt.n_B + 1)
        dof = np.count_nonzero(pB) - 1
        assert _chi2_ok(cB.astype(float), pB, chi2.ppf(0.999, dof))
        cA = np.bincount(data.a, minlength=gt.n_A + 1)
        se = np.sqrt(pA * (1 - pA) / T) + np.sqrt(pA * (1 - pA) / 4000)
        assert np.all(np.abs(cA / T - pA) <= 4 * se + 1e-9)


def test_empty_dataset():
    gt = gen_ground_truth(rng=1)
    assert simulate_dataset(gt, 0, 1).T == 0


def test_expected_revenue_identities():
    gt = gen_ground_truth(theta=1.0, rng=9)
    rA = np.concatenate(([0.0], np.full(gt.n_A, 3.0)))
    rB = np.concatenate(([0.0], np.full(gt.n_B, 3.0)))
    assert gt_expected_revenue(gt, rA, rB, set(), set()) == 0.0
    SA, SB = {1, 2, 3, 9}, {2, 5, 6}
    pA = gt_choice_prob_A(gt, SA)
    pbuyB = pA @ (1 - gt_conditional_matrix(gt, SB)[:, 0])
    assert gt_expected_revenue(gt, rA, rB, SA, SB) == pytest.approx(3 * ((1 - pA[0]) + pbuyB))


def test_expected_revenue_monte_carlo():
    gt = gen_ground_truth(theta=2.0, rng=12)
    rng = np.random.default_rng(1)
    rA = gen_prices(PriceScenario(), gt.n_A, rng)
    rB = gen_prices(PriceScenario(), gt.n_B, rng)
    SA, SB = {1, 4, 5, 6, 8}, {1, 2, 3, 7}
    N = 100000
    kA = rng.choice(gt.alpha.size, size=N, p=gt.alpha)
    a = np.array([next(j for j in gt.rankings_A[k] if j == 0 or j in SA) for k in kA])
    kB = rng.choice(gt.psi.size, size=N, p=gt.psi)
    b = np.array([next(j for j in gt.cond_rankings[k][i] if j == 0 or j in SB) for k, i in zip(kB, a)])
    rev = rA[a] + rB[b]
    exact = gt_expected_revenue(gt, rA, rB, SA, SB)
    assert abs(rev.mean() - exact) <= 3.5 * rev.std() / np.sqrt(N)


def test_prices():
    rng = np.random.default_rng(0)
    lin = gen_prices(PriceScenario("low", "normal", 0.0), 6, rng)
    np.testing.assert_allclose(lin, [0, 95, 90, 85, 80, 75, 70])
    np.testing.assert_allclose(gen_prices(PriceScenario("high", "normal", 0.0), 2, rng), [0, 55, 60])
    draws = np.stack([gen_prices(PriceScenario("low", "normal"), 10, rng) for _ in range(10000)])
    assert draws[:, 1:].min() >= 0.1
    k = np.arange(1, 11)
    assert np.all(np.abs(draws[:, 1:].mean(axis=0) - (100 - 5 * k)) <= 3 * 5 / np.sqrt(10000))
    uni = np.stack([gen_prices(PriceScenario("high", "uniform"), 4, rng) for _ in range(10000)])
    lo = 5 + 0.5 * np.arange(1, 5)
    assert np.all(uni[:, 1:] >= lo) and np.all(uni[:, 1:] <= lo + 5)
    assert np.all(np.abs(uni[:, 1:].mean(axis=0) - (lo + 2.5)) <= 3 * 5 / np.sqrt(12 * 10000))
    with pytest.raises(Exception):
        PriceScenario("medium", "normal")
