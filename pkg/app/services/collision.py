"""
Obstacle set and binary collision queries.

Obstacles are closed sets: a point on a boundary is occupied, and a ball that
only touches an obstacle is not free. Optional workspace bounds behave like an
inverted obstacle (everything outside the open bounds box is occupied).
"""
import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from app.core.errors import InvalidArgumentError
from app.core.types import ArrayLike, Vector, as_vector

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class BoxObstacle:
	"""Axis-aligned box given by its min and max corners."""

	min_corner: Vector
	max_corner: Vector

	def __post_init__(self) -> None:
		lo = as_vector(self.min_corner, "min_corner")
		hi = as_vector(self.max_corner, "max_corner")
		if lo.shape != hi.shape:
			raise InvalidArgumentError("box corners must have the same dimension")
		if np.any(lo > hi):
			raise InvalidArgumentError(f"box min corner {lo} exceeds max corner {hi}")
		object.__setattr__(self, "min_corner", lo)
		object.__setattr__(self, "max_corner", hi)

	@property
	def dimension(self) -> int:
		return int(self.min_corner.shape[0])

	def contains(self, points: np.ndarray) -> np.ndarray:
		return np.all((points >= self.min_corner) & (points <= self.max_corner), axis=-1)

	def distance(self, points: np.ndarray) -> np.ndarray:
		clamped = np.clip(points, self.min_corner, self.max_corner)
		return np.linalg.norm(points - clamped, axis=-1)


@dataclass(frozen=True)
class SphereObstacle:
	"""Sphere (disc in 2-D) given by center and radius."""

	center: Vector
	radius: float

	def __post_init__(self) -> None:
		center = as_vector(self.center, "center")
		radius = float(self.radius)
		if not radius >= 0.0:
			raise InvalidArgumentError(f"sphere radius must be >= 0, got {radius}")
		object.__setattr__(self, "center", center)
		object.__setattr__(self, "radius", radius)

	@property
	def dimension(self) -> int:
		return int(self.center.shape[0])

	def contains(self, points: np.ndarray) -> np.ndarray:
		return np.linalg.norm(points - self.center, axis=-1) <= self.radius

	def distance(self, points: np.ndarray) -> np.ndarray:
		return np.maximum(np.linalg.norm(points - self.center, axis=-1) - self.radius, 0.0)


Obstacle = Union[BoxObstacle, SphereObstacle]


@dataclass(frozen=True)
class Ball:
	center: Vector
	radius: float

	def __post_init__(self) -> None:
		radius = float(self.radius)
		if not radius >= 0.0:
			raise InvalidArgumentError(f"ball radius must be >= 0, got {radius}")
		object.__setattr__(self, "center", as_vector(self.center, "center"))
		object.__setattr__(self, "radius", radius)


@dataclass(frozen=True)
class CollisionWorld:
	"""Immutable obstacle set; every query is read-only."""

	dimension: int
	obstacles: Tuple[Obstacle, ...] = field(default_factory=tuple)
	bounds: Optional[BoxObstacle] = None

	def __post_init__(self) -> None:
		if self.dimension not in (2, 3):
			raise InvalidArgumentError(f"world dimension must be 2 or 3, got {self.dimension}")
		obstacles = tuple(self.obstacles)
		for index, obstacle in enumerate(obstacles):
			if obstacle.dimension != self.dimension:
				raise InvalidArgumentError(
					f"obstacle {index} has dimension {obstacle.dimension}, world has {self.dimension}"
				)
		if self.bounds is not None and self.bounds.dimension != self.dimension:
			raise InvalidArgumentError("workspace bounds dimension does not match the world")
		object.__setattr__(self, "obstacles", obstacles)

	def _check_points(self, points: ArrayLike) -> np.ndarray:
		array = np.asarray(points, dtype=np.float64)
		if array.ndim == 0 or array.shape[-1] != self.dimension:
			raise InvalidArgumentError(
				f"expected points of dimension {self.dimension}, got shape {array.shape}"
			)
		return array

	def points_in_collision(self, points: ArrayLike) -> np.ndarray:
		"""Vectorized point_in_collision over the last axis."""
		array = self._check_points(points)
		hit = np.zeros(array.shape[:-1], dtype=bool)
		for obstacle in self.obstacles:
			hit |= obstacle.contains(array)
		if self.bounds is not None:
			inside = np.all((array > self.bounds.min_corner) & (array < self.bounds.max_corner), axis=-1)
			hit |= ~inside
		return hit

	def distances(self, points: ArrayLike) -> np.ndarray:
		"""Vectorized distance_to_obstacles over the last axis."""
		array = self._check_points(points)
		result = np.full(array.shape[:-1], np.inf)
		for obstacle in self.obstacles:
			result = np.minimum(result, obstacle.distance(array))
		if self.bounds is not None:
			to_walls = np.minimum(array - self.bounds.min_corner, self.bounds.max_corner - array)
			result = np.minimum(result, np.maximum(np.min(to_walls, axis=-1), 0.0))
		return result

	def balls_are_free(self, centers: ArrayLike, radii: ArrayLike) -> np.ndarray:
		"""Vectorized ball_is_free; tangency counts as intersection."""
		return self.distances(centers) > np.asarray(radii, dtype=np.float64)


def point_in_collision(world: CollisionWorld, p: ArrayLike) -> bool:
	point = as_vector(p, "p")
	return bool(world.points_in_collision(point))


def distance_to_obstacles(world: CollisionWorld, p: ArrayLike) -> float:
	point = as_vector(p, "p")
	return float(world.distances(point))


def ball_is_free(world: CollisionWorld, ball: Ball) -> bool:
	return bool(world.balls_are_free(ball.center, ball.radius))


def make_world(
	dimension: int,
	obstacles: Sequence[Obstacle] = (),
	bounds: Optional[Tuple[ArrayLike, ArrayLike]] = None,
) -> CollisionWorld:
	"""Convenience constructor taking bounds as a (min, max) pair."""
	box = BoxObstacle(np.asarray(bounds[0], float), np.asarray(bounds[1], float)) if bounds is not None else None
	world = CollisionWorld(dimension=dimension, obstacles=tuple(obstacles), bounds=box)
	logger.debug("collision world built", extra={"dimension": dimension, "obstacles": len(world.obstacles)})
	return world
