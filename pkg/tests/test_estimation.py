import numpy as np
import pytest
from scipy.optimize import minimize

from crosscat.choice import MnlModel
from crosscat.errors import DataError, EstimationError
from crosscat.estimation import (
    CAP, ChainData, LatentPosterior, TwoCategoryData, TwoCatParams, _WeightedMnlObjective,
    default_init, em_e_step, em_m_step, expected_complete_loglik, fit_chain_em, fit_em,
    fit_ind_mnl, fit_mnl_mle, fit_multimnl, fit_weighted_mnl, loglik_observed, predict_b,
    predictive_loglik,
)
from crosscat.model import joint_choice_prob


def simulate(params, T, rng, p_offer=0.5, full=False):
    nA, nB = params.vA.n, params.vB.n
    mA = np.ones((T, nA + 1), bool)
    mB = np.ones((T, nB + 1), bool)
    if not full:
        mA[:, 1:] = rng.random((T, nA)) < p_offer
        mB[:, 1:] = rng.random((T, nB)) < p_offer
    wA = mA * params.vA.full_weights
    pa = wA / wA.sum(axis=1, keepdims=True)
    a = (rng.random(T)[:, None] >= np.cumsum(pa, axis=1)).sum(axis=1).clip(max=nA)
    pb = predict_b(params, a, mB)
    b = (rng.random(T)[:, None] >= np.cumsum(pb, axis=1)).sum(axis=1).clip(max=nB)
    return TwoCategoryData(mA, mB, a, b)


def random_params(nA, nB, rng, conc=1.0):
    return TwoCatParams(MnlModel(rng.uniform(0.3, 2, nA)), MnlModel(rng.uniform(0.3, 2, nB)),
                        rng.dirichlet(np.full(nB + 1, conc), size=nA + 1))


def fixture_params():
    lam = np.array([[1.0, 0, 0], [1 / 3, 1 / 3, 1 / 3]])
    return TwoCatParams(MnlModel([1.0]), MnlModel([1.0, 2.0]), lam)


def test_loglik_worked_example():
    lam = np.array([[1.0, 0.0, 0.0], [0.1514, 0.2611, 0.5875]])
    params = TwoCatParams(MnlModel([1.0]), MnlModel([7.5261, 1.0]), lam)
    data = TwoCategoryData([[1, 1]], [[1, 1, 0]], [1], [1])
    assert abs(loglik_observed(params, data) - (np.log(0.5) - 0.2488)) < 1e-3
    assert abs(loglik_observed(params, data, part="B") + 0.2488) < 1e-3


def test_loglik_matches_joint_table(rng):
    params = random_params(3, 3, rng)
    data = simulate(params, 50, rng)
    model = params.to_model()
    total = 0.0
    for t in range(data.T):
        SA = set(np.flatnonzero(data.mask_A[t])[1:])
        SB = set(np.flatnonzero(data.mask_B[t])[1:])
        total += np.log(joint_choice_prob(model, SA, SB).probs[data.a[t], data.b[t]])
    assert abs(loglik_observed(params, data) - total) < 1e-9


def test_loglik_degenerate_lambda_full_assortment(rng):
    lam = np.zeros((3, 3))
    lam[[0, 1, 2], [2, 0, 1]] = 1.0
    params = TwoCatParams(MnlModel([1.0, 3.0]), MnlModel([1.0, 1.0]), lam)
    data = TwoCategoryData(np.ones((3, 3), bool), np.ones((3, 3), bool), [0, 1, 2], [2, 0, 1])
    expected = np.log([1 / 5, 1 / 5, 3 / 5]).sum()
    assert abs(loglik_observed(params, data) - expected) < 1e-12


def test_zero_probability_observation():
    lam = np.array([[1.0, 0, 0], [1.0, 0, 0]])
    params = TwoCatParams(MnlModel([1.0]), MnlModel([1.0, 1.0]), lam)
    data = TwoCategoryData([[1, 1]], [[1, 1, 1]], [1], [2])
    assert loglik_observed(params, data) == -np.inf
    assert np.isfinite(loglik_observed(params, data, floor=np.log(1e-300)))


def test_e_step_fixture():
    params = fixture_params()
    data = TwoCategoryData([[1, 1]], [[1, 1, 0]], [1], [1])
    post = em_e_step(params, data)
    np.testing.assert_allclose(post.xhat[0], [0, 2 / 3, 1 / 3])


def test_e_step_support_and_normalisation(rng):
    params = random_params(3, 4, rng)
    data = simulate(params, 300, rng)
    x = em_e_step(params, data).xhat
    np.testing.assert_allclose(x.sum(axis=1), 1, atol=1e-9)
    allowed = ~data.mask_B
    allowed[np.arange(data.T), data.b] = True
    assert np.all(x[~allowed] == 0)


def test_e_step_point_mass_when_lambda_lives_on_offer_set():
    lam = np.array([[0.0, 0.5, 0.5], [0.0, 0.5, 0.5]])
    params = TwoCatParams(MnlModel([1.0]), MnlModel([1.0, 1.0]), lam)
    data = TwoCategoryData([[1, 1]], [[1, 1, 1]], [1], [2])
    np.testing.assert_allclose(em_e_step(params, data).xhat[0], [0, 0, 1])


def test_m_step_lambda_is_row_average_and_unseen_rows_untouched():
    params = default_init(2, 2)
    data = TwoCategoryData(np.ones((2, 3), bool), np.ones((2, 3), bool), [1, 1], [1, 2])
    post = LatentPosterior(np.array([[0.0, 1.0, 0.0], [0.2, 0.0, 0.8]]))
    new = em_m_step(post, data, params)
    np.testing.assert_allclose(new.lam[1], [0.1, 0.5, 0.4])
    np.testing.assert_allclose(new.lam[0], params.lam[0])
    np.testing.assert_allclose(new.lam[2], params.lam[2])
    # every posterior sits on an offered option, so the fallback weights are zero
    np.testing.assert_allclose(new.vB.weights, params.vB.weights)


def test_m_step_does_not_decrease_expected_complete_loglik(rng):
    for _ in range(10):
        params = random_params(3, 4, rng)
        data = simulate(params, 400, rng)
        start = default_init(3, 4, params.vA)
        post = em_e_step(start, data)
        new = em_m_step(post, data, start)
        assert expected_complete_loglik(post, data, new) >= expected_complete_loglik(post, data, start) - 1e-9


def _scipy_weighted_mnl(mask, choice, w):
    n = mask.shape[1] - 1
    obj = _WeightedMnlObjective(mask, choice, w)
    res = minimize(lambda x: -obj.value_grad(x)[0], np.zeros(n), jac=lambda x: -obj.value_grad(x)[1],
                   method="L-BFGS-B", bounds=[(np.log(1e-8), np.log(CAP))] * n,
                   options={"gtol": 1e-12, "ftol": 1e-15, "maxiter": 10000})
    return np.exp(res.x)


def test_weighted_mnl_matches_scipy(rng):
    for _ in range(5):
        n, T = 4, 500
        mask = np.ones((T, n + 1), bool)
        mask[:, 1:] = rng.random((T, n)) < 0.6
        v = rng.uniform(0.2, 3, n)
        w_full = mask * np.concatenate(([1.0], v))
        p = w_full / w_full.sum(axis=1, keepdims=True)
        choice = (rng.random(T)[:, None] >= np.cumsum(p, axis=1)).sum(axis=1).clip(max=n)
        weight = rng.uniform(0, 1, T)
        ours = fit_weighted_mnl(mask, choice, weight).weights
        np.testing.assert_allclose(ours, _scipy_weighted_mnl(mask, choice, weight), rtol=1e-4, atol=1e-4)


def test_weighted_mnl_gradient_finite_differences(rng):
    n, T = 5, 200
    mask = np.ones((T, n + 1), bool)
    mask[:, 1:] = rng.random((T, n)) < 0.5
    choice = np.array([rng.choice(np.flatnonzero(m)) for m in mask])
    obj = _WeightedMnlObjective(mask, choice, rng.uniform(0, 1, T))
    h = 1e-5
    for _ in range(20):
        x = rng.normal(0, 1, n)
        _, g = obj.value_grad(x)
        fd = np.array([(obj.value(x + h * e) - obj.value(x - h * e)) / (2 * h) for e in np.eye(n)])
        assert np.max(np.abs(fd - g)) <= 1e-6 * max(1.0, np.max(np.abs(g)))


def test_mnl_mle_closed_form_full_assortments(rng):
    pairs = [({1, 2}, int(c)) for c in rng.choice(3, 2000, p=[0.25, 0.25, 0.5])]
    m = fit_mnl_mle(pairs, n=2)
    f = np.bincount([c for _, c in pairs], minlength=3)
    np.testing.assert_allclose(m.weights, f[1:] / f[0], rtol=1e-6)


def test_mnl_mle_boundaries():
    assert np.all(fit_mnl_mle([], n=3).weights == 1)
    m = fit_mnl_mle([({1}, 1)] * 20, n=1)
    assert abs(m.weights[0] - CAP) < 1e-6 * CAP


def test_em_monotone_and_recovers_full_assortment_frequencies(rng):
    params = random_params(3, 3, rng)
    data = simulate(params, 6000, rng, full=True)
    rep = fit_em(data, tol_ll=1e-10, tol_param=1e-7, max_iter=5000)
    assert np.all(np.diff(rep.ll_trace) >= -1e-9)
    counts = np.zeros((4, 4))
    np.add.at(counts, (data.a, data.b), 1)
    seen = counts.sum(axis=1) > 0
    emp = counts[seen] / counts[seen].sum(axis=1, keepdims=True)
    np.testing.assert_allclose(rep.params.lam[seen], emp, atol=1e-3)


def test_em_recovers_degenerate_lambda(rng):
    lam = np.zeros((4, 4))
    lam[[0, 1, 2, 3], [0, 2, 3, 1]] = 1.0
    truth = TwoCatParams(MnlModel([1.0, 1.5, 0.5]), MnlModel([1.0, 1.0, 1.0]), lam)
    data = simulate(truth, 10000, rng, full=True)
    rep = fit_em(data, max_iter=2000)
    tv = 0.5 * np.abs(rep.params.lam - lam).sum(axis=1)
    assert tv.max() <= 0.01


def test_em_from_truth_stops_quickly(rng):
    truth = random_params(3, 3, rng)
    data = simulate(truth, 3000, rng)
    rep = fit_em(data, init=truth)
    assert (rep.ll_trace[1] - rep.ll_trace[0]) / data.T < 1e-2
    assert rep.converged and rep.iterations < 20


def test_em_multistart_keeps_best(rng):
    truth = random_params(2, 3, rng)
    data = simulate(truth, 1500, rng)
    single = fit_em(data)
    multi = fit_em(data, multistart=3, seed=1)
    assert multi.ll_trace[-1] >= single.ll_trace[-1] - 1e-9


def test_monotonicity_violation_is_reported(monkeypatch, rng):
    import crosscat.estimation as est

    truth = random_params(2, 2, rng)
    data = simulate(truth, 300, rng)
    real = est.em_m_step

    def bad_step(post, data, params, **kw):
        new = real(post, data, params, **kw)
        return est.TwoCatParams(new.vA, new.vB, new.lam[:, ::-1], new.cap)

    monkeypatch.setattr(est, "em_m_step", bad_step)
    with pytest.raises(EstimationError):
        est.fit_em(data, max_iter=5)


def test_benchmarks(rng):
    truth = random_params(2, 3, rng)
    data = simulate(truth, 4000, rng)
    ind = fit_ind_mnl(data)
    direct = fit_weighted_mnl(data.mask_B, data.b)
    # constant lambda rows reproduce plain MNL predictions
    np.testing.assert_allclose(predict_b(ind, data.a, data.mask_B), predict_b(direct, data.a, data.mask_B),
                               atol=1e-12)
    multi = fit_multimnl(data)
    for i in range(3):
        sel = data.a == i
        np.testing.assert_allclose(multi.conditional[i].weights,
                                   fit_weighted_mnl(data.mask_B[sel], data.b[sel]).weights)
    assert predictive_loglik(multi, data) >= predictive_loglik(ind, data) - 1e-6


def test_multimnl_unobserved_choice_gets_unit_weights():
    data = TwoCategoryData(np.ones((2, 3), bool), np.ones((2, 3), bool), [1, 1], [1, 0])
    multi = fit_multimnl(data)
    np.testing.assert_allclose(multi.conditional[2].weights, [1, 1])
    np.testing.assert_allclose(multi.conditional[0].weights, [1, 1])


def test_multimnl_identical_behaviour_matches_ind(rng):
    vB = MnlModel([0.5, 1.0, 2.0])
    w = vB.full_weights
    truth = TwoCatParams(MnlModel([1.0, 1.0]), vB, np.tile(w / w.sum(), (3, 1)))
    data = simulate(truth, 20000, rng)
    multi = fit_multimnl(data)
    ind = fit_ind_mnl(data)
    for m in multi.conditional:
        np.testing.assert_allclose(m.weights, ind.vB.weights, rtol=0.15)


def test_data_validation():
    with pytest.raises(DataError):
        TwoCategoryData([[1, 0]], [[1, 1]], [1], [0])
    with pytest.raises(DataError):
        TwoCategoryData([[0, 1]], [[1, 1]], [1], [0])


def test_chain_em_reduces_to_two_category(rng):
    truth = random_params(2, 3, rng)
    data = simulate(truth, 2000, rng)
    chain = ChainData((data.mask_A, data.mask_B), (data.a, data.b))
    rep_chain = fit_chain_em(chain, tol_ll=1e-8, tol_param=1e-6, max_iter=3000)
    rep = fit_em(data, tol_ll=1e-8, tol_param=1e-6, max_iter=3000)
    np.testing.assert_allclose(rep_chain.edges[0].lam, rep.params.lam, atol=1e-8)
    np.testing.assert_allclose(rep_chain.ll_trace[-1], rep.ll_trace[-1], rtol=1e-10)


def _simulate_chain(params_ab, params_bc, T, rng):
    ab = simulate(params_ab, T, rng)
    mC = np.ones((T, params_bc.vB.n + 1), bool)
    mC[:, 1:] = rng.random((T, params_bc.vB.n)) < 0.5
    pc = predict_b(params_bc, ab.b, mC)
    c = (rng.random(T)[:, None] >= np.cumsum(pc, axis=1)).sum(axis=1).clip(max=params_bc.vB.n)
    return ChainData((ab.mask_A, ab.mask_B, mC), (ab.a, ab.b, c))


def test_chain_em_recovery_and_monotonicity(rng):
    ab = random_params(3, 3, rng, conc=0.5)
    bc = TwoCatParams(ab.vB, MnlModel(rng.uniform(0.3, 2, 3)), rng.dirichlet(np.full(4, 0.5), size=4))
    data = _simulate_chain(ab, bc, 50000, rng)
    rep = fit_chain_em(data, tol_ll=1e-7, tol_param=1e-5, max_iter=3000)
    assert np.all(np.diff(rep.ll_trace) >= -1e-9 * np.abs(rep.ll_trace[:-1]))
    probe = np.ones((20, 4), bool)
    probe[:, 1:] = np.random.default_rng(3).random((20, 3)) < 0.5
    for truth, est in ((ab, rep.edges[0]), (bc, rep.edges[1])):
        for i in range(4):
            p = predict_b(truth, np.full(20, i), probe)
            q = predict_b(est, np.full(20, i), probe)
            assert 0.5 * np.abs(p - q).sum(axis=1).max() <= 0.05
    rep.to_model(["A", "B", "C"])


def test_chain_em_monotone_on_random_runs(rng):
    for _ in range(20):
        ab = random_params(2, 2, rng)
        bc = TwoCatParams(ab.vB, MnlModel(rng.uniform(0.3, 2, 2)), rng.dirichlet(np.ones(3), size=3))
        data = _simulate_chain(ab, bc, 500, rng)
        rep = fit_chain_em(data, tol_ll=1e-6, tol_param=1e-4, max_iter=500)
        assert np.all(np.diff(rep.ll_trace) >= -1e-9 * np.abs(rep.ll_trace[:-1]))
