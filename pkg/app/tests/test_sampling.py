import math

import numpy as np
import pytest

from app.core.errors import InvalidArgumentError, NoFeasibleSampleError
from app.services.sampling import (
	BallProjection,
	BoxProjection,
	CompositeProjection,
	GaussianPolicy,
	IdentityProjection,
	SecondOrderConeProjection,
	WeightedSamples,
	make_generator,
	project,
	sample_perturbations,
	softmax_weights,
	softmax_weights_rows,
	weighted_covariance,
	weighted_mean,
)


def test_zero_covariance_returns_mean():
	policy = GaussianPolicy(np.array([1.0, -2.0]), np.zeros(2))
	samples = sample_perturbations(policy, 10, seed=4)
	np.testing.assert_array_equal(samples, np.tile([1.0, -2.0], (10, 1)))


def test_sampling_is_deterministic_per_key():
	policy = GaussianPolicy(np.zeros(3), np.ones(3))
	first = sample_perturbations(policy, 20, seed=(7, 0, 1))
	second = sample_perturbations(policy, 20, seed=(7, 0, 1))
	other = sample_perturbations(policy, 20, seed=(7, 0, 2))
	np.testing.assert_array_equal(first, second)
	assert not np.array_equal(first, other)


def test_sample_variance_matches_covariance():
	policy = GaussianPolicy(np.zeros(2), np.array([1.0, 4.0]))
	samples = sample_perturbations(policy, 50000, seed=11)
	variance = samples.var(axis=0)
	assert 0.95 < variance[0] < 1.05
	assert 0.95 * 4.0 < variance[1] < 1.05 * 4.0


def test_full_covariance_factor():
	covariance = np.array([[2.0, 0.5], [0.5, 1.0]])
	factor = GaussianPolicy(np.zeros(2), covariance).factor()
	np.testing.assert_allclose(factor @ factor.T, covariance, atol=1e-12)


def test_non_psd_covariance_rejected():
	with pytest.raises(InvalidArgumentError):
		sample_perturbations(GaussianPolicy(np.zeros(2), np.array([[1.0, 2.0], [2.0, 1.0]])), 3, seed=0)
	with pytest.raises(InvalidArgumentError):
		sample_perturbations(GaussianPolicy(np.zeros(2), np.array([1.0, -1.0])), 3, seed=0)
	with pytest.raises(InvalidArgumentError):
		make_generator((1, -1))


def test_softmax_examples():
	np.testing.assert_allclose(softmax_weights([5.0, 5.0, 5.0], 3.0), [1 / 3, 1 / 3, 1 / 3], atol=1e-15)
	np.testing.assert_allclose(softmax_weights([0.0, math.log(2.0)], 1.0), [2 / 3, 1 / 3], atol=1e-15)
	weights = softmax_weights([0.0, math.log(2.0), math.inf], 1.0)
	np.testing.assert_allclose(weights, [2 / 3, 1 / 3, 0.0], atol=1e-15)
	assert weights[2] == 0.0


def test_softmax_errors():
	with pytest.raises(NoFeasibleSampleError):
		softmax_weights([math.inf, math.inf], 1.0)
	with pytest.raises(InvalidArgumentError):
		softmax_weights([0.0, math.nan], 1.0)
	with pytest.raises(InvalidArgumentError):
		softmax_weights([0.0, 1.0], 0.0)


def test_softmax_shift_invariance_and_permutation():
	rng = np.random.default_rng(2)
	costs = rng.uniform(0.0, 10.0, size=50)
	weights = softmax_weights(costs, 0.7)
	assert abs(weights.sum() - 1.0) < 1e-12
	np.testing.assert_allclose(softmax_weights(costs + 1000.0, 0.7), weights, atol=1e-12)
	order = rng.permutation(50)
	np.testing.assert_allclose(softmax_weights(costs[order], 0.7), weights[order], atol=1e-15)


def test_row_softmax_matches_scalar_version():
	costs = np.array([[0.0, math.log(2.0), math.inf], [math.inf, math.inf, math.inf], [1.0, 1.0, 1.0]])
	weights, feasible = softmax_weights_rows(costs, 1.0)
	np.testing.assert_array_equal(feasible, [True, False, True])
	np.testing.assert_allclose(weights[0], softmax_weights(costs[0], 1.0), atol=1e-15)
	np.testing.assert_array_equal(weights[1], 0.0)
	np.testing.assert_allclose(weights[2], [1 / 3, 1 / 3, 1 / 3])


def test_weighted_moments():
	np.testing.assert_allclose(weighted_mean(WeightedSamples(np.array([[3.0, 4.0]]), np.array([1.0]))), [3.0, 4.0])
	assert weighted_mean(WeightedSamples(np.array([0.0, 2.0]), np.array([0.5, 0.5])))[0] == pytest.approx(1.0)
	assert weighted_mean(WeightedSamples(np.array([0.0, 3.0]), np.array([2 / 3, 1 / 3])))[0] == pytest.approx(1.0)

	same = WeightedSamples(np.ones((4, 2)), np.full(4, 0.25))
	np.testing.assert_array_equal(weighted_covariance(same, [1.0, 1.0]), np.zeros((2, 2)))
	spread = WeightedSamples(np.array([-1.0, 1.0]), np.array([0.5, 0.5]))
	assert weighted_covariance(spread, [0.0])[0, 0] == pytest.approx(1.0)


def test_weighted_covariance_against_two_pass_sum():
	rng = np.random.default_rng(5)
	samples = rng.normal(size=(30, 3))
	raw = rng.uniform(size=30)
	ws = WeightedSamples(samples, raw / raw.sum())
	mean = weighted_mean(ws)
	expected = np.zeros((3, 3))
	for w, theta in zip(ws.weights, samples):
		expected += w * np.outer(theta - mean, theta - mean)
	np.testing.assert_allclose(weighted_covariance(ws, mean), expected, atol=1e-12)


def test_weighted_samples_invariants():
	with pytest.raises(InvalidArgumentError):
		WeightedSamples(np.zeros((2, 1)), np.array([0.7, 0.7]))
	with pytest.raises(InvalidArgumentError):
		WeightedSamples(np.zeros((2, 1)), np.array([1.0]))


def test_weighted_mean_stays_in_box():
	rng = np.random.default_rng(8)
	samples = rng.uniform([0.0, -1.5], [1.5, 1.5], size=(100, 2))
	raw = rng.uniform(size=100)
	mean = weighted_mean(WeightedSamples(samples, raw / raw.sum()))
	assert 0.0 <= mean[0] <= 1.5 and -1.5 <= mean[1] <= 1.5


def test_projection_examples():
	box = BoxProjection([0.0, -1.5], [1.5, 1.5])
	np.testing.assert_array_equal(project(box, [2.0, -2.0]), [1.5, -1.5])

	cone = SecondOrderConeProjection(3)
	np.testing.assert_allclose(project(cone, [1.0, 0.0, 0.0]), [0.5, 0.0, 0.5], atol=1e-15)
	np.testing.assert_array_equal(project(cone, [1.0, 0.0, -2.0]), [0.0, 0.0, 0.0])

	scaled = SecondOrderConeProjection(3, math.radians(60.0))
	boundary = np.array([math.sqrt(3.0), 0.0, 1.0])
	np.testing.assert_allclose(project(scaled, boundary), boundary, atol=1e-12)

	ball = BallProjection([0.0, 0.0], 1.0)
	np.testing.assert_allclose(project(ball, [3.0, 4.0]), [0.6, 0.8])

	with pytest.raises(InvalidArgumentError):
		project(box, np.zeros(0))
	with pytest.raises(InvalidArgumentError):
		project(box, [1.0, 2.0, 3.0])


def test_cone_with_cap_is_inside_both_sets():
	op = SecondOrderConeProjection(3, math.radians(60.0), cap=20.0)
	rng = np.random.default_rng(1)
	points = rng.normal(scale=30.0, size=(500, 3))
	out = op(points)
	assert np.all(np.linalg.norm(out, axis=1) <= 20.0 + 1e-9)
	assert np.all(np.linalg.norm(out[:, :2], axis=1) <= out[:, 2] * math.tan(math.radians(60.0)) + 1e-9)
	assert np.all(out[:, 2] >= 0.0)


ALL_PROJECTIONS = [
	BoxProjection([0.0, -1.5, -1.0], [1.5, 1.5, 2.0]),
	SecondOrderConeProjection(3),
	SecondOrderConeProjection(3, math.radians(60.0), cap=20.0),
	BallProjection([0.5, -0.5, 1.0], 2.0),
	CompositeProjection([BoxProjection([0.0], [1.0]), BallProjection([0.0, 0.0], 1.0)]),
	IdentityProjection(3),
]


@pytest.mark.parametrize("op", ALL_PROJECTIONS)
def test_projection_idempotent_and_nonexpansive(op):
	rng = np.random.default_rng(0)
	a = rng.normal(scale=5.0, size=(1000, 3))
	b = rng.normal(scale=5.0, size=(1000, 3))
	pa, pb = op(a), op(b)
	np.testing.assert_allclose(op(pa), pa, atol=1e-12)
	gap = np.linalg.norm(pa - pb, axis=1) - np.linalg.norm(a - b, axis=1)
	assert np.all(gap <= 1e-12)
