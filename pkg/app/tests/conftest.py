import numpy as np
import pytest

from app.schemas.scenario import ScenarioSpec
from app.services.collision import BoxObstacle, SphereObstacle, make_world
from app.services.dynamics import DiffDrive, LinearDynamics, PointMassQuadrotor
from app.services.pool import WorkerPool


@pytest.fixture
def diff_drive():
	return DiffDrive(0.1)


@pytest.fixture
def quadrotor():
	return PointMassQuadrotor(0.05)


@pytest.fixture
def double_integrator():
	"""1-D double integrator with dt = 0.1; position is state 0."""
	dt = 0.1
	return LinearDynamics([[1.0, dt], [0.0, 1.0]], [[0.5 * dt * dt], [dt]], position_indices=(0,))


@pytest.fixture
def empty_world_2d():
	return make_world(2)


@pytest.fixture
def unit_box_world():
	"""Single box [(0,0),(1,1)] in an unbounded plane."""
	return make_world(2, [BoxObstacle(np.zeros(2), np.ones(2))])


@pytest.fixture
def unit_sphere_world():
	return make_world(2, [SphereObstacle(np.zeros(2), 1.0)])


@pytest.fixture
def serial_pool():
	pool = WorkerPool(threads=1)
	yield pool
	pool.stop()


@pytest.fixture
def threaded_pool():
	pool = WorkerPool(threads=4)
	yield pool
	pool.stop()


def robot_document(**sections):
	"""A small diff-drive scenario as a plain dict; keyword tables replace or extend the defaults."""
	document = {
		"name": "tiny_robot",
		"seed": 3,
		"model": {"kind": "diff_drive", "dt": 0.1, "horizon": 10, "start": [0.0, 0.0, 1.5707963267948966]},
		"cost": {"goal": [0.0, 0.0, 1.5707963267948966], "final_weight": 300.0, "control_weight": 0.01},
		"constraints": {"control_lower": [-1.5, -1.5], "control_upper": [1.5, 1.5]},
		"world": {"dimension": 2, "obstacles": []},
		"mppi": {"samples": 64, "noise": [1e-4, 1e-4], "temperature": 100.0},
		"corridor": {
			"lambda_c": 20.0,
			"lambda_r": 35.0,
			"r_max": 0.5,
			"samples": 200,
			"noise": [0.3, 0.3, 0.08],
			"temperature": 1000.0,
		},
		"planner": {"outer_max_iters": 4, "corridor_weight": 0.0},
	}
	for name, table in sections.items():
		if isinstance(table, dict) and isinstance(document.get(name), dict):
			document[name] = {**document[name], **table}
		else:
			document[name] = table
	return document


@pytest.fixture
def robot_spec():
	def factory(**sections):
		return ScenarioSpec.model_validate(robot_document(**sections))

	return factory
