import numpy as np

from crosscat.choice import McModel, MnlModel

ACCEPTANCE_LINES = []


def random_mc(n, rng, leak=None):
    """Random absorbing Markov chain choice model on ``n`` products."""
    arrival = rng.dirichlet(np.ones(n + 1))
    rho = rng.dirichlet(np.ones(n + 1), size=n + 1)
    if leak is not None:
        rho[:, 0] = leak
        rho[:, 1:] *= (1 - leak) / rho[:, 1:].sum(axis=1, keepdims=True)
    rho[0] = 0.0
    rho[0, 0] = 1.0
    return McModel(arrival, rho)


def random_mnl(n, rng):
    return MnlModel(rng.uniform(0.1, 3.0, n))


def random_prices(n, rng):
    return np.concatenate(([0.0], rng.uniform(1.0, 10.0, n)))


