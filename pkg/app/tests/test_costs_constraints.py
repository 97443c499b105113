import math

import numpy as np
import pytest

from app.core.errors import InvalidArgumentError
from app.services.constraints import (
	ConeConstraint,
	ControlBoxConstraint,
	CorridorConstraint,
	NormCapConstraint,
	StackedConstraint,
	StateBoxConstraint,
)
from app.services.costs import ControlEffortCost, CorridorTrackingCost, GoalCost, QuadraticStageCost, trajectory_cost

EPS = 1e-6


def numeric_gradient(fn, z):
	grad = np.zeros((np.atleast_1d(fn(z)).shape[0], z.shape[0]))
	for j in range(z.shape[0]):
		dz = np.zeros_like(z)
		dz[j] = EPS
		grad[:, j] = (np.atleast_1d(fn(z + dz)) - np.atleast_1d(fn(z - dz))) / (2 * EPS)
	return grad


def test_goal_and_effort_costs():
	goal = GoalCost(300.0, [0.0, 6.0, math.pi / 2])
	assert goal.value(np.array([0.0, 0.0, math.pi / 2])) == pytest.approx(10800.0)
	effort = ControlEffortCost(0.01, 3, 2)
	assert effort.value(0, np.zeros(3), np.array([1.0, 2.0])) == pytest.approx(0.05)
	states = np.zeros((4, 3))
	states[-1] = [0.0, 6.0, math.pi / 2]
	assert trajectory_cost(effort, goal, states, np.ones((3, 2))) == pytest.approx(0.06)


def test_cost_derivatives_match_finite_differences():
	rng = np.random.default_rng(0)
	base = ControlEffortCost([0.5, 0.2], 3, 2)
	cost = CorridorTrackingCost(base, rng.normal(size=(4, 2)), [2.0, 3.0], (0, 1))
	x, u = rng.normal(size=3), rng.normal(size=2)
	d = cost.derivatives(2, x, u)
	np.testing.assert_allclose(d.l_x, numeric_gradient(lambda z: cost.value(2, z, u), x)[0], atol=1e-6)
	np.testing.assert_allclose(d.l_u, numeric_gradient(lambda z: cost.value(2, x, z), u)[0], atol=1e-6)
	np.testing.assert_allclose(d.l_xx, numeric_gradient(lambda z: cost.derivatives(2, z, u).l_x, x), atol=1e-6)
	np.testing.assert_allclose(d.l_uu, numeric_gradient(lambda z: cost.derivatives(2, x, z).l_u, u), atol=1e-6)

	goal = GoalCost([1.0, 2.0, 3.0], [1.0, -1.0, 0.5])
	np.testing.assert_allclose(goal.derivatives(x).l_x, numeric_gradient(goal.value, x)[0], atol=1e-6)


def test_zero_corridor_weight_reduces_to_base():
	base = QuadraticStageCost(np.eye(2), np.eye(1))
	tracked = CorridorTrackingCost(base, np.ones((3, 1)), 0.0, (0,))
	states, controls = np.random.default_rng(1).normal(size=(3, 2)), np.ones((3, 1))
	np.testing.assert_array_equal(tracked.value_batch(states, controls), base.value_batch(states, controls))


def test_batch_values_match_pointwise():
	rng = np.random.default_rng(2)
	cost = CorridorTrackingCost(ControlEffortCost(0.01, 6, 3), rng.normal(size=(5, 3)), 0.001, (0, 1, 2))
	states, controls = rng.normal(size=(7, 5, 6)), rng.normal(size=(7, 5, 3))
	batch = cost.value_batch(states, controls)
	for i in range(7):
		for t in range(5):
			assert batch[i, t] == pytest.approx(cost.value(t, states[i, t], controls[i, t]))


def test_cost_weight_validation():
	with pytest.raises(InvalidArgumentError):
		ControlEffortCost([1.0, 2.0, 3.0], 3, 2)
	with pytest.raises(InvalidArgumentError):
		GoalCost(-1.0, [0.0, 0.0])


def quadrotor_stack():
	n, m = 6, 3
	return StackedConstraint(
		[
			StateBoxConstraint([-np.inf, -1.0, -np.inf, -np.inf, -np.inf, -np.inf], [2.0, np.inf, np.inf, np.inf, np.inf, np.inf], n, m),
			ControlBoxConstraint(None, [5.0, 5.0, 15.0], n, m),
			NormCapConstraint(20.0, n, m),
			ConeConstraint(math.radians(60.0), n, m),
			CorridorConstraint(np.array([[0.1, 0.2, 0.3], [1.0, 1.0, 1.0]]), np.array([0.5, 0.4]), (0, 1, 2), n, m),
		],
		n,
		m,
	)


def test_stacked_rows_and_layout():
	stack = quadrotor_stack()
	assert stack.count == 2 + 3 + 1 + 1 + 1
	x = np.zeros(6)
	u = np.array([0.0, 0.0, 9.81])
	values = stack.value(0, x, u)
	assert values.shape == (8,)
	# state rows: -1 - 0, 0 - 2
	np.testing.assert_allclose(values[:2], [-1.0, -2.0])
	assert values[5] == pytest.approx(9.81 ** 2 - 400.0)
	assert values[6] < 0.0
	assert values[7] == pytest.approx(0.14 - 0.25)


def test_constraint_jacobians_and_hessians_match_finite_differences():
	stack = quadrotor_stack()
	rng = np.random.default_rng(4)
	x = rng.normal(size=6)
	u = np.array([0.4, -0.3, 8.0])
	y = rng.uniform(0.1, 1.0, size=stack.count)
	jac = stack.jacobians(1, x, u)
	np.testing.assert_allclose(jac.g_x, numeric_gradient(lambda z: stack.value(1, z, u), x), atol=1e-6)
	np.testing.assert_allclose(jac.g_u, numeric_gradient(lambda z: stack.value(1, x, z), u), atol=1e-6)

	hess = stack.hessians(1, x, u, y)
	h_uu = numeric_gradient(lambda z: y @ stack.jacobians(1, x, z).g_u, u)
	h_xx = numeric_gradient(lambda z: y @ stack.jacobians(1, z, u).g_x, x)
	np.testing.assert_allclose(hess.h_uu, h_uu, atol=1e-5)
	np.testing.assert_allclose(hess.h_xx, h_xx, atol=1e-5)
	np.testing.assert_allclose(hess.h_ux, 0.0)


def test_cone_row_is_inside_exact_cone():
	cone = ConeConstraint(math.radians(60.0), 6, 3)
	rng = np.random.default_rng(6)
	for u in rng.normal(scale=5.0, size=(200, 3)):
		if cone.value(0, np.zeros(6), u)[0] <= 0.0:
			assert np.linalg.norm(u) * math.cos(math.radians(60.0)) <= u[2] + 1e-12


def test_empty_stack():
	stack = StackedConstraint([StateBoxConstraint(None, None, 3, 2)], 3, 2)
	assert stack.count == 0
	assert stack.value(0, np.zeros(3), np.zeros(2)).shape == (0,)
	assert stack.jacobians(0, np.zeros(3), np.zeros(2)).g_x.shape == (0, 3)


def test_constraint_validation():
	with pytest.raises(InvalidArgumentError):
		NormCapConstraint(0.0, 6, 3)
	with pytest.raises(InvalidArgumentError):
		ConeConstraint(math.pi / 2, 6, 3)
	with pytest.raises(InvalidArgumentError):
		ControlBoxConstraint([1.0, 0.0], [0.0, 1.0], 3, 2)
	with pytest.raises(InvalidArgumentError):
		StackedConstraint([NormCapConstraint(1.0, 6, 3)], 3, 2)
