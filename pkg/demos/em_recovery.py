"""Fit the cross-category model by EM on simulated baskets.

Simulates data from known parameters, fits them back and compares the
downstream conditional choice probabilities with the truth.
"""
import numpy as np

from crosscat.estimation import TwoCatParams, TwoCategoryData, fit_em, fit_ind_mnl, predict_b, predictive_loglik
from crosscat.choice import MnlModel

rng = np.random.default_rng(3)
n_a, n_b, T = 4, 4, 20000

truth = TwoCatParams(MnlModel(rng.uniform(0.5, 2, n_a)), MnlModel(rng.uniform(0.5, 2, n_b)),
                     rng.dirichlet(np.ones(n_b + 1), size=n_a + 1))

mask_a = np.ones((T, n_a + 1), bool)
mask_b = np.ones((T, n_b + 1), bool)
mask_a[:, 1:] = rng.random((T, n_a)) < 0.5
mask_b[:, 1:] = rng.random((T, n_b)) < 0.5
pa = mask_a * truth.vA.full_weights
pa /= pa.sum(axis=1, keepdims=True)
a = np.array([rng.choice(n_a + 1, p=p) for p in pa])
pb = predict_b(truth, a, mask_b)
b = np.array([rng.choice(n_b + 1, p=p) for p in pb])
data = TwoCategoryData(mask_a, mask_b, a, b)

report = fit_em(data, tol_ll=1e-6, tol_param=1e-4)
print(f"EM: {report.iterations} iterations, converged={report.converged}")
print(f"log-likelihood {report.ll_trace[0]:.1f} -> {report.ll_trace[-1]:.1f}")

full = np.ones((n_a + 1, n_b + 1), bool)
err = np.abs(predict_b(report.params, np.arange(n_a + 1), full) - predict_b(truth, np.arange(n_a + 1), full))
print("max error on full-assortment conditionals:", round(float(err.max()), 4))

ind = fit_ind_mnl(data)
print(f"B log-likelihood: markov {predictive_loglik(report.params, data):.1f}, "
      f"independent MNL {predictive_loglik(ind, data):.1f}")
