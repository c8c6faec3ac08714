import numpy as np
import pytest

from crosscat.choice import MnlModel, choice_operator, choice_probs
from crosscat.errors import DomainError, ModelError
from crosscat.model import (
    CategoryNode, CrossCatModel, EdgeLambda, aggregate_arrival, category_marginals,
    conditional_b_prob, joint_choice_prob, sample_paths, two_category,
)

from helpers import random_mc


def fixture_model():
    """Two A products; B has products 1, 2 (weights 1 and 2)."""
    lam = np.array([[1.0, 0.0, 0.0],
                    [1 / 3, 1 / 3, 1 / 3],
                    [0.5, 0.25, 0.25]])
    return two_category(MnlModel([1.0, 1.0]), MnlModel([1.0, 2.0]), lam)


def test_conditional_values_by_hand():
    m = fixture_model()
    # B offers only product 2: arriving at 1 substitutes via MNL {0:1/3, 2:2/3}
    p = conditional_b_prob(m, ("A", "B"), 1, {2})
    np.testing.assert_allclose(p, [1 / 3 + 1 / 9, 0, 1 / 3 + 2 / 9])
    np.testing.assert_allclose(p[2], 5 / 9)
    # B offers only product 1: arriving at 2 substitutes via MNL {0:1/2, 1:1/2}
    q = conditional_b_prob(m, ("A", "B"), 1, {1})
    np.testing.assert_allclose(q, [1 / 3 + 1 / 6, 1 / 3 + 1 / 6, 0])
    np.testing.assert_allclose(q[1], 1 / 2)
    np.testing.assert_allclose(conditional_b_prob(m, ("A", "B"), 1, {1, 2}), [1 / 3] * 3)


def test_joint_table_entry():
    m = fixture_model()
    J = joint_choice_prob(m, {1}, {2})
    # A: P(1) = 1/2; B | 1 with S_B = {2}: 5/9
    np.testing.assert_allclose(J.probs[1, 2], 0.5 * 5 / 9)
    np.testing.assert_allclose(J.probs.sum(), 1.0)
    np.testing.assert_allclose(J.marginal_a(), choice_probs(m.node("A").kernel, {1}))


def test_full_b_assortment_returns_lambda_row():
    m = fixture_model()
    np.testing.assert_allclose(conditional_b_prob(m, ("A", "B"), 2, {1, 2}), m.edges[0].matrix[2])


def test_validation_errors():
    with pytest.raises(ModelError):
        EdgeLambda("A", "B", [[0.5, 0.4]])
    with pytest.raises(ModelError):
        two_category(MnlModel([1.0]), MnlModel([1.0]), np.full((3, 2), 0.5))
    a, b = CategoryNode("A", MnlModel([1.0])), CategoryNode("B", MnlModel([1.0]))
    lam = np.full((2, 2), 0.5)
    with pytest.raises(ModelError):
        CrossCatModel((a, b), (EdgeLambda("A", "B", lam), EdgeLambda("B", "A", lam)))
    with pytest.raises(ModelError):
        CrossCatModel((a, a), ())


def test_json_round_trip(rng):
    m = two_category(random_mc(3, rng), random_mc(2, rng), rng.dirichlet(np.ones(3), size=4))
    m2 = CrossCatModel.loads(m.dumps())
    np.testing.assert_allclose(joint_choice_prob(m, {1, 3}, {2}).probs, joint_choice_prob(m2, {1, 3}, {2}).probs)


def test_marginals_agree_with_joint_table(rng):
    m = two_category(random_mc(3, rng), random_mc(3, rng), rng.dirichlet(np.ones(4), size=4))
    sets = {"A": {1, 2}, "B": {3}}
    marg = category_marginals(m, sets)
    J = joint_choice_prob(m, sets["A"], sets["B"])
    np.testing.assert_allclose(marg["B"], J.marginal_b(), atol=1e-12)
    np.testing.assert_allclose(choice_operator(m.node("B").kernel, {3}) @ aggregate_arrival(m, {1, 2}),
                               J.marginal_b(), atol=1e-12)


def test_sampling_matches_joint_table(rng):
    m = two_category(random_mc(2, rng), random_mc(2, rng), rng.dirichlet(np.ones(3), size=3))
    sets = {"A": {1, 2}, "B": {1}}
    N = 60000
    draws = sample_paths(m, sets, N, rng)
    freq = np.zeros((3, 3))
    np.add.at(freq, (draws["A"], draws["B"]), 1)
    freq /= N
    p = joint_choice_prob(m, sets["A"], sets["B"]).probs
    se = np.sqrt(p * (1 - p) / N)
    assert np.all(np.abs(freq - p) <= 4.5 * se + 1e-12)


def test_multi_parent_marginal_is_uniform_mixture(rng):
    nodes = tuple(CategoryNode(c, random_mc(2, rng)) for c in "ABC")
    edges = (EdgeLambda("A", "C", rng.dirichlet(np.ones(3), size=3)),
             EdgeLambda("B", "C", rng.dirichlet(np.ones(3), size=3)))
    m = CrossCatModel(nodes, edges)
    sets = {"A": {1}, "B": {2}, "C": {1}}
    marg = category_marginals(m, sets)
    arr = 0.5 * (marg["A"] @ edges[0].matrix + marg["B"] @ edges[1].matrix)
    np.testing.assert_allclose(marg["C"], choice_operator(nodes[2].kernel, {1}) @ arr)
    draws = sample_paths(m, sets, 50000, rng)
    freq = np.bincount(draws["C"], minlength=3) / 50000
    assert np.max(np.abs(freq - marg["C"])) < 0.01


def test_conditional_rejects_bad_upstream_index():
    with pytest.raises(DomainError):
        conditional_b_prob(fixture_model(), ("A", "B"), 5, {1})
