import math

import numpy as np
import pytest

from app.core.errors import InvalidArgumentError
from app.services.collision import (
	Ball,
	BoxObstacle,
	SphereObstacle,
	ball_is_free,
	distance_to_obstacles,
	make_world,
	point_in_collision,
)


def test_point_queries(empty_world_2d, unit_box_world, unit_sphere_world):
	assert not point_in_collision(empty_world_2d, [1.0, 2.0])
	assert point_in_collision(unit_box_world, [0.5, 0.5])
	# boundary is occupied
	assert point_in_collision(unit_sphere_world, [1.0, 0.0])
	assert point_in_collision(unit_box_world, [1.0, 0.3])


def test_distances(empty_world_2d, unit_box_world, unit_sphere_world):
	assert distance_to_obstacles(empty_world_2d, [4.0, -1.0]) == math.inf
	assert distance_to_obstacles(unit_box_world, [2.0, 0.5]) == pytest.approx(1.0)
	assert distance_to_obstacles(unit_sphere_world, [3.0, 0.0]) == pytest.approx(2.0)
	assert distance_to_obstacles(unit_box_world, [0.5, 0.5]) == 0.0


def test_ball_queries(empty_world_2d, unit_box_world):
	assert ball_is_free(empty_world_2d, Ball(np.array([3.0, 3.0]), 10.0))
	# the box face sits at distance 1, tangency counts as intersection
	assert not ball_is_free(unit_box_world, Ball(np.array([2.0, 0.5]), 1.0))
	assert not ball_is_free(unit_box_world, Ball(np.array([2.0, 0.5]), 1.5))
	assert ball_is_free(unit_box_world, Ball(np.array([2.0, 0.5]), 1.0 - 1e-9))
	assert ball_is_free(unit_box_world, Ball(np.array([2.0, 0.5]), 0.5))


def test_ball_query_agrees_with_dense_sampling(unit_box_world):
	"""Free ball: no sampled point of the closed ball hits the box."""
	center, radius = np.array([2.0, 0.5]), 0.4
	angles = np.linspace(0.0, 2.0 * np.pi, 200)
	scales = np.linspace(0.0, 1.0, 40)
	points = center + radius * scales[:, None, None] * np.stack([np.cos(angles), np.sin(angles)], axis=-1)[None]
	assert not np.any(unit_box_world.points_in_collision(points))


def test_bounds_are_an_inverted_obstacle():
	world = make_world(2, bounds=([0.0, 0.0], [4.0, 4.0]))
	assert not point_in_collision(world, [2.0, 2.0])
	assert point_in_collision(world, [5.0, 2.0])
	assert point_in_collision(world, [4.0, 2.0])
	assert distance_to_obstacles(world, [1.0, 2.0]) == pytest.approx(1.0)
	assert not ball_is_free(world, Ball(np.array([1.0, 2.0]), 1.0))
	assert ball_is_free(world, Ball(np.array([1.0, 2.0]), 0.9))


def test_dimension_mismatch_rejected(unit_box_world):
	with pytest.raises(InvalidArgumentError):
		point_in_collision(unit_box_world, [0.0, 0.0, 0.0])
	with pytest.raises(InvalidArgumentError):
		distance_to_obstacles(unit_box_world, [0.0])
	with pytest.raises(InvalidArgumentError):
		make_world(3, [BoxObstacle(np.zeros(2), np.ones(2))])


def test_invalid_primitives_rejected():
	with pytest.raises(InvalidArgumentError):
		BoxObstacle(np.array([1.0, 0.0]), np.array([0.0, 1.0]))
	with pytest.raises(InvalidArgumentError):
		SphereObstacle(np.zeros(3), -0.1)
	with pytest.raises(InvalidArgumentError):
		Ball(np.zeros(2), -1.0)


@pytest.mark.parametrize("seed", range(5))
def test_ball_monotonicity_and_consistency(seed):
	"""Shrinking a free ball keeps it free; a zero ball is free iff its center is."""
	rng = np.random.default_rng(seed)
	boxes = []
	for _ in range(5):
		lo = rng.uniform(-4.0, 3.0, size=2)
		boxes.append(BoxObstacle(lo, lo + rng.uniform(0.2, 1.5, size=2)))
	world = make_world(2, boxes)
	centers = rng.uniform(-5.0, 5.0, size=(200, 2))
	radii = rng.uniform(0.0, 2.0, size=200)
	free = world.balls_are_free(centers, radii)
	smaller = world.balls_are_free(centers, 0.5 * radii)
	assert np.all(smaller[free])
	assert np.array_equal(world.balls_are_free(centers, np.zeros(200)), ~world.points_in_collision(centers))
	assert np.array_equal(world.distances(centers) > 0.0, ~world.points_in_collision(centers))
