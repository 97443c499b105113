from dataclasses import replace

import numpy as np
import pytest
from scipy.optimize import lsq_linear

from app.core.errors import BackwardPassError, ForwardPassError, InvalidArgumentError, SolveFailedError
from app.services.constraints import ControlBoxConstraint, CorridorConstraint
from app.services.costs import ControlEffortCost, GoalCost, QuadraticFinalCost, QuadraticStageCost
from app.services.dynamics import DiffDrive, LinearDynamics, rollout
from app.services.ipddp import (
	ConstrainedOCP,
	GainSchedule,
	IpddpOptions,
	LineSearchFilter,
	ValueExpansion,
	backward_pass,
	check_local_convergence,
	forward_pass,
	initial_iterate,
	q_expansion,
	solve,
)


@pytest.fixture
def scalar_lqr():
	"""f = x + u, l = 1/2 (x^2 + u^2), l_f = 1/2 x^2, T = 3."""
	model = LinearDynamics([[1.0]], [[1.0]])
	return ConstrainedOCP(model, [1.0], 3, QuadraticStageCost([[1.0]], [[1.0]]), QuadraticFinalCost([[1.0]]))


def riccati(a, b, q, r, p_final, horizon):
	"""Feedback gains K_t with u_t = K_t x_t for the finite-horizon LQR."""
	p = p_final
	gains = []
	for _ in range(horizon):
		gain = -np.linalg.solve(r + b.T @ p @ b, b.T @ p @ a)
		p = q + a.T @ p @ (a + b @ gain)
		p = 0.5 * (p + p.T)
		gains.append(gain)
	return gains[::-1]


def optimal_controls(a, b, gains, x0):
	x = np.asarray(x0, dtype=np.float64)
	controls = []
	for gain in gains:
		u = gain @ x
		controls.append(u)
		x = a @ x + b @ u
	return np.array(controls)


def plain_ddp_backward(ocp, states, controls):
	"""Unconstrained DDP recursion without regularization."""
	final = ocp.final_cost.derivatives(states[-1])
	v_x, v_xx = final.l_x, final.l_xx
	k_list, d_list = [], []
	for t in range(ocp.horizon - 1, -1, -1):
		f_x, f_u = ocp.model.linearize(states[t], controls[t])
		cost = ocp.stage_cost.derivatives(t, states[t], controls[t])
		q_x = cost.l_x + f_x.T @ v_x
		q_u = cost.l_u + f_u.T @ v_x
		q_xx = cost.l_xx + f_x.T @ v_xx @ f_x
		q_ux = cost.l_ux + f_u.T @ v_xx @ f_x
		q_uu = cost.l_uu + f_u.T @ v_xx @ f_u
		k = -np.linalg.solve(q_uu, q_ux)
		d = -np.linalg.solve(q_uu, q_u)
		v_x = q_x + k.T @ q_u + q_ux.T @ d + k.T @ q_uu @ d
		v_xx = q_xx + k.T @ q_ux + q_ux.T @ k + k.T @ q_uu @ k
		v_xx = 0.5 * (v_xx + v_xx.T)
		k_list.append(k)
		d_list.append(d)
	return np.array(k_list[::-1]), np.array(d_list[::-1])


def test_backward_pass_gains_match_riccati(scalar_lqr):
	it = initial_iterate(scalar_lqr, np.zeros((3, 1)))
	gains = backward_pass(scalar_lqr, it)
	one = np.ones((1, 1))
	expected = riccati(one, one, one, one, one, 3)
	for t in range(3):
		np.testing.assert_allclose(gains.k_u[t], expected[t], atol=1e-10)
	assert gains.k_s.shape == (3, 0, 1)
	assert len(gains.values) == 4


def test_unconstrained_backward_pass_matches_plain_ddp(double_integrator):
	ocp = ConstrainedOCP(
		double_integrator,
		[1.0, -0.5],
		8,
		QuadraticStageCost(np.diag([1.0, 0.1]), [[0.01]]),
		QuadraticFinalCost(np.diag([10.0, 1.0])),
	)
	controls = np.linspace(-1.0, 1.0, 8)[:, None]
	it = initial_iterate(ocp, controls)
	gains = backward_pass(ocp, it)
	k_ref, d_ref = plain_ddp_backward(ocp, it.trajectory.states, controls)
	np.testing.assert_allclose(gains.k_u, k_ref, atol=1e-12)
	np.testing.assert_allclose(gains.d_u, d_ref, atol=1e-12)


def test_inactive_rows_vanish_as_mu_shrinks(scalar_lqr):
	boxed = replace(scalar_lqr, constraint=ControlBoxConstraint([-100.0], [100.0], 1, 1))
	options = IpddpOptions(mu_init=1e-8)
	it = initial_iterate(boxed, np.zeros((3, 1)), options)
	constrained = backward_pass(boxed, it, options)
	free = backward_pass(scalar_lqr, initial_iterate(scalar_lqr, np.zeros((3, 1))))
	np.testing.assert_allclose(constrained.k_u, free.k_u, atol=1e-6)


def test_backward_pass_rejects_non_interior_iterate(scalar_lqr):
	boxed = replace(scalar_lqr, constraint=ControlBoxConstraint([-1.0], [1.0], 1, 1))
	it = initial_iterate(boxed, np.zeros((3, 1)))
	with pytest.raises(InvalidArgumentError):
		backward_pass(boxed, replace(it, slacks=-it.slacks))


def test_backward_pass_reports_indefinite_stage():
	model = LinearDynamics([[1.0]], [[1.0]])
	ocp = ConstrainedOCP(model, [1.0], 2, QuadraticStageCost([[1.0]], [[-10.0]]), QuadraticFinalCost([[1.0]]))
	with pytest.raises(BackwardPassError) as info:
		backward_pass(ocp, initial_iterate(ocp, np.zeros((2, 1))))
	assert info.value.stage == 1


def test_q_expansion_matches_finite_differences():
	model = DiffDrive(0.1)
	ocp = ConstrainedOCP(model, np.zeros(3), 1, QuadraticStageCost(np.diag([1.0, 2.0, 0.5]), np.eye(2)), QuadraticFinalCost(np.eye(3)))
	rng = np.random.default_rng(0)
	x, u = rng.normal(size=3), rng.normal(size=2)
	v_x = rng.normal(size=3)
	a = rng.normal(size=(3, 3))
	v_xx = a @ a.T
	nominal = model.step(x, u)

	def q_function(z):
		xs, us = z[:3], z[3:]
		delta = model.step(xs, us) - nominal
		return ocp.stage_cost.value(0, xs, us) + v_x @ delta + 0.5 * delta @ v_xx @ delta

	def q_gradient(z):
		xs, us = z[:3], z[3:]
		f_x, f_u = model.linearize(xs, us)
		cost = ocp.stage_cost.derivatives(0, xs, us)
		weight = v_x + v_xx @ (model.step(xs, us) - nominal)
		return np.concatenate([cost.l_x + f_x.T @ weight, cost.l_u + f_u.T @ weight])

	z = np.concatenate([x, u])
	eps = 1e-6
	grad = np.zeros(5)
	hess = np.zeros((5, 5))
	for j in range(5):
		dz = np.zeros(5)
		dz[j] = eps
		grad[j] = (q_function(z + dz) - q_function(z - dz)) / (2 * eps)
		hess[:, j] = (q_gradient(z + dz) - q_gradient(z - dz)) / (2 * eps)

	q = q_expansion(ocp, 0, x, u, np.zeros(0), ValueExpansion(v_x, v_xx))
	np.testing.assert_allclose(q.q_x, grad[:3], atol=1e-5)
	np.testing.assert_allclose(q.q_u, grad[3:], atol=1e-5)

	full = q_expansion(ocp, 0, x, u, np.zeros(0), ValueExpansion(v_x, v_xx), second_order_dynamics=True)
	np.testing.assert_allclose(full.q_xx, hess[:3, :3], atol=1e-5)
	np.testing.assert_allclose(full.q_ux, hess[3:, :3], atol=1e-5)
	np.testing.assert_allclose(full.q_uu, hess[3:, 3:], atol=1e-5)


def test_zero_gains_keep_the_iterate(double_integrator):
	ocp = ConstrainedOCP(
		double_integrator,
		[0.5, 0.0],
		5,
		QuadraticStageCost(np.eye(2), [[1.0]]),
		QuadraticFinalCost(np.eye(2)),
		ControlBoxConstraint([-1.0], [1.0], 2, 1),
	)
	it = initial_iterate(ocp, np.full((5, 1), 0.2))
	line_filter = LineSearchFilter()
	new, alpha = forward_pass(ocp, it, GainSchedule.zeros(5, 2, 1, 2), line_filter)
	assert alpha == 1.0
	np.testing.assert_array_equal(new.trajectory.controls, it.trajectory.controls)
	np.testing.assert_array_equal(new.slacks, it.slacks)
	np.testing.assert_array_equal(new.duals, it.duals)
	assert line_filter.pairs == [(it.barrier_objective, it.violation)]


def test_single_newton_step_reaches_lqr_optimum(scalar_lqr):
	it = initial_iterate(scalar_lqr, np.zeros((3, 1)))
	gains = backward_pass(scalar_lqr, it)
	new, alpha = forward_pass(scalar_lqr, it, gains, LineSearchFilter())
	one = np.ones((1, 1))
	expected = optimal_controls(one, one, riccati(one, one, one, one, one, 3), [1.0])
	assert alpha == 1.0
	np.testing.assert_allclose(new.trajectory.controls, expected, atol=1e-12)


def test_uphill_gains_fail_the_filter(scalar_lqr):
	it = initial_iterate(scalar_lqr, np.zeros((3, 1)))
	gains = backward_pass(scalar_lqr, it)
	gains.d_u = -gains.d_u
	seeded = LineSearchFilter([(it.barrier_objective, it.violation)])
	with pytest.raises(ForwardPassError):
		forward_pass(scalar_lqr, it, gains, seeded)
	assert len(seeded) == 1


def test_filter_acceptance_and_pruning():
	line_filter = LineSearchFilter(margin=1e-8)
	assert line_filter.accepts(5.0, 5.0)
	line_filter.add(5.0, 1.0)
	line_filter.add(3.0, 2.0)
	assert len(line_filter) == 2
	assert line_filter.accepts(4.0, 0.5)
	assert not line_filter.accepts(6.0, 3.0)
	assert not line_filter.accepts(5.0, 1.0)
	line_filter.add(2.0, 0.5)
	assert line_filter.pairs == [(2.0, 0.5)]
	line_filter.reset(7.0, 3.0)
	assert line_filter.pairs == [(7.0, 3.0)]


def test_seeded_filter_carries_the_violation_envelope():
	line_filter = LineSearchFilter.seeded(10.0, 2.0)
	assert line_filter.pairs == [(10.0, 2.0)]
	assert line_filter.max_violation == pytest.approx(2e4)
	assert line_filter.min_violation == pytest.approx(2e-4)
	assert not line_filter.accepts(10.0, 2.0)
	assert line_filter.accepts(-1e6, 1.0)
	assert not line_filter.accepts(-1e6, 2e4)
	line_filter.reset(5.0, 0.1)
	assert line_filter.max_violation == pytest.approx(2e4)
	assert LineSearchFilter.seeded(0.0, 1e-3).max_violation == pytest.approx(1e4)


def test_local_convergence_examples():
	assert check_local_convergence(1e-9, 1e-9, 1e-9, 10.0, 1e-2)
	assert not check_local_convergence(1.0, 0.0, 0.0, 10.0, 1e-2)
	assert check_local_convergence(0.1 - 1e-12, 0.0, 0.0, 10.0, 1e-2)
	assert not check_local_convergence(10.0 * 1e-2, 0.0, 0.0, 10.0, 1e-2)
	with pytest.raises(InvalidArgumentError):
		check_local_convergence(0.0, 0.0, 0.0, 1.0, 1e-2)
	with pytest.raises(InvalidArgumentError):
		check_local_convergence(0.0, 0.0, 0.0, 10.0, 0.0)


def test_solve_unconstrained_lqr(scalar_lqr):
	result = solve(scalar_lqr, np.zeros((3, 1)))
	one = np.ones((1, 1))
	expected = optimal_controls(one, one, riccati(one, one, one, one, one, 3), [1.0])
	assert result.converged
	assert result.iterations <= 3
	assert np.max(np.abs(result.trajectory.controls - expected)) < 1e-8
	assert result.max_primal_residual == 0.0


def box_qp_oracle(model, q, r, p, x0, horizon, bound):
	"""Condense the LQ problem over U and solve it as bounded least squares."""
	n, m = model.state_dim, model.control_dim
	s_x = np.zeros(((horizon + 1) * n, n))
	s_u = np.zeros(((horizon + 1) * n, horizon * m))
	s_x[:n] = np.eye(n)
	for t in range(horizon):
		rows = slice((t + 1) * n, (t + 2) * n)
		prev = slice(t * n, (t + 1) * n)
		s_x[rows] = model.a @ s_x[prev]
		s_u[rows] = model.a @ s_u[prev]
		s_u[rows, t * m:(t + 1) * m] = model.b
	weights = [np.linalg.cholesky(q).T] * horizon + [np.linalg.cholesky(p).T]
	root = np.zeros(((horizon + 1) * n, (horizon + 1) * n))
	for t, w in enumerate(weights):
		root[t * n:(t + 1) * n, t * n:(t + 1) * n] = w
	design = np.vstack([root @ s_u, np.sqrt(r) * np.eye(horizon * m)])
	target = np.concatenate([-root @ s_x @ x0, np.zeros(horizon * m)])
	fit = lsq_linear(design, target, bounds=(-bound, bound), method="bvls", tol=1e-14)
	return fit.x.reshape(horizon, m)


def test_solve_control_box_matches_qp_oracle(double_integrator):
	q, r, p = np.diag([1.0, 0.1]), 0.01, np.diag([100.0, 10.0])
	x0 = np.array([5.0, 0.0])
	ocp = ConstrainedOCP(
		double_integrator,
		x0,
		20,
		QuadraticStageCost(q, [[r]]),
		QuadraticFinalCost(p),
		ControlBoxConstraint([-1.0], [1.0], 2, 1),
	)
	interior = []

	def record(it):
		interior.append((float(np.min(it.slacks)), float(np.min(it.duals))))

	result = solve(ocp, np.zeros((20, 1)), IpddpOptions(max_iters=300), on_iterate=record)
	expected = box_qp_oracle(double_integrator, q, r, p, x0, 20, 1.0)

	assert result.converged
	assert np.any(np.abs(expected) > 1.0 - 1e-6)
	assert np.max(np.abs(result.trajectory.controls - expected)) < 1e-3
	assert result.max_primal_residual < 1e-4
	assert interior and all(s > 0.0 and y > 0.0 for s, y in interior)
	assert np.all(np.abs(result.trajectory.controls) <= 1.0 + 1e-9)


def test_infeasible_corridor_is_not_a_silent_success(double_integrator):
	centers = np.full((10, 1), 5.0)
	ocp = ConstrainedOCP(
		double_integrator,
		[0.0, 0.0],
		10,
		QuadraticStageCost(np.eye(2), [[1.0]]),
		QuadraticFinalCost(np.eye(2)),
		CorridorConstraint(centers, np.zeros(10), (0,), 2, 1),
	)
	try:
		result = solve(ocp, np.zeros((10, 1)), IpddpOptions(rho_max=1e-2, max_iters=100))
	except SolveFailedError as exc:
		assert np.max(np.abs(exc.iterate.primal_residual)) > 0.0
		assert exc.diagnostics["rho"] > 1e-2
	else:
		assert not result.converged
		assert result.iterations == 100
		assert result.max_primal_residual > 0.0
		assert result.max_violation > 0.0


def test_iterations_count_backward_passes(scalar_lqr):
	seen = []
	result = solve(scalar_lqr, np.zeros((3, 1)), on_iterate=seen.append)
	# one accepted step, then the converged check
	assert len(seen) == 1
	assert result.iterations == 2


def test_warm_start_from_trajectory(scalar_lqr):
	one = np.ones((1, 1))
	expected = optimal_controls(one, one, riccati(one, one, one, one, one, 3), [1.0])
	warm = rollout(scalar_lqr.model, [1.0], expected)
	result = solve(scalar_lqr, warm)
	assert result.converged
	assert result.iterations == 1


def test_option_validation(scalar_lqr):
	with pytest.raises(InvalidArgumentError):
		IpddpOptions(kappa=1.0)
	with pytest.raises(InvalidArgumentError):
		IpddpOptions(tau=1.0)
	with pytest.raises(InvalidArgumentError):
		initial_iterate(scalar_lqr, np.zeros((2, 1)))
	assert IpddpOptions().step_sizes[-1] == 2.0 ** -10


def random_spd(rng, size, floor):
	a = rng.normal(size=(size, size))
	return a @ a.T / size + floor * np.eye(size)


def test_random_lqr_instances_match_riccati():
	rng = np.random.default_rng(11)
	for _ in range(50):
		n, m, horizon = int(rng.integers(1, 5)), int(rng.integers(1, 3)), int(rng.integers(1, 21))
		a = np.eye(n) + 0.1 * rng.normal(size=(n, n))
		b = rng.normal(size=(n, m))
		q, r, p = random_spd(rng, n, 0.1), random_spd(rng, m, 0.5), random_spd(rng, n, 0.1)
		x0 = rng.normal(size=n)
		ocp = ConstrainedOCP(LinearDynamics(a, b), x0, horizon, QuadraticStageCost(q, r), QuadraticFinalCost(p))
		result = solve(ocp, np.zeros((horizon, m)))
		expected = optimal_controls(a, b, riccati(a, b, q, r, p, horizon), x0)
		assert result.converged
		assert np.max(np.abs(result.trajectory.controls - expected)) < 1e-6


def test_random_box_qps_match_the_oracle(double_integrator):
	rng = np.random.default_rng(5)
	for _ in range(20):
		q = np.diag(rng.uniform([0.5, 0.05], [2.0, 0.2]))
		r = float(rng.uniform(0.005, 0.05))
		p = np.diag(rng.uniform([50.0, 5.0], [150.0, 15.0]))
		x0 = np.array([rng.choice([-1.0, 1.0]) * rng.uniform(2.0, 6.0), rng.uniform(-1.0, 1.0)])
		ocp = ConstrainedOCP(
			double_integrator,
			x0,
			20,
			QuadraticStageCost(q, [[r]]),
			QuadraticFinalCost(p),
			ControlBoxConstraint([-1.0], [1.0], 2, 1),
		)
		interior = []
		result = solve(
			ocp,
			np.zeros((20, 1)),
			IpddpOptions(max_iters=300),
			on_iterate=lambda it: interior.append(min(float(np.min(it.slacks)), float(np.min(it.duals)))),
		)
		expected = box_qp_oracle(double_integrator, q, r, p, x0, 20, 1.0)
		assert result.converged
		assert np.max(np.abs(result.trajectory.controls - expected)) < 1e-3
		assert interior and min(interior) > 0.0


def closed_loop_controls(model, x0, states, controls, k, d, alpha):
	x = np.asarray(x0, dtype=np.float64)
	out = []
	for t in range(controls.shape[0]):
		u = controls[t] + alpha * (d[t] + k[t] @ (x - states[t]))
		out.append(u)
		x = model.step(x, u)
	return np.array(out)


def test_unconstrained_solve_follows_plain_ddp():
	model = DiffDrive(0.1)
	ocp = ConstrainedOCP(
		model,
		[0.0, 0.0, 0.0],
		10,
		QuadraticStageCost(np.diag([0.1, 0.1, 0.01]), 0.1 * np.eye(2)),
		QuadraticFinalCost(np.diag([10.0, 10.0, 1.0]), [1.0, 0.5, 0.3]),
	)
	start = np.tile([0.5, 0.1], (10, 1))
	iterates = [initial_iterate(ocp, start)]
	result = solve(ocp, start, on_iterate=iterates.append)
	assert result.converged
	assert len(iterates) >= 2
	for before, after in zip(iterates, iterates[1:]):
		states, controls = before.trajectory.states, before.trajectory.controls
		k, d = plain_ddp_backward(ocp, states, controls)
		steps = [
			alpha
			for alpha in IpddpOptions().step_sizes
			if np.allclose(
				closed_loop_controls(model, ocp.x_init, states, controls, k, d, alpha),
				after.trajectory.controls,
				rtol=0.0,
				atol=1e-10,
			)
		]
		assert steps


def test_position_corridor_binds_at_the_optimum(double_integrator):
	ocp = ConstrainedOCP(
		double_integrator,
		[0.0, 0.0],
		20,
		ControlEffortCost(0.01, 2, 1),
		GoalCost([600.0, 0.0], [3.0, 0.0]),
		CorridorConstraint(np.zeros((20, 1)), np.full(20, 0.5), (0,), 2, 1),
	)
	interior = []
	result = solve(
		ocp,
		np.zeros((20, 1)),
		IpddpOptions(max_iters=300),
		on_iterate=lambda it: interior.append(min(float(np.min(it.slacks)), float(np.min(it.duals)))),
	)
	positions = result.trajectory.states[:, 0]
	assert result.converged
	assert result.max_primal_residual < 1e-4
	assert np.all(np.abs(positions[:-1]) <= 0.5 + 1e-4)
	assert positions[-1] > 0.5
	# the last corridor row is active at the optimum
	assert abs(positions[-2]) > 0.5 - 1e-3
	assert interior and min(interior) > 0.0
