"""
Collision-free ball corridors around a coarse path.

Each stage optimizes its own (c_t, r_t) by sampling, projection and
softmax blending; stages only share the reference path, so they run as
independent tasks keyed by stage index.
"""
import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from app.core.constants import (
	BISECTION_STEPS,
	CORRIDOR_REFINE_STEPS,
	DEFAULT_CORRIDOR_TOL,
	DEFAULT_INFLATE_ITERS,
	FREE_RADIUS_MARGIN,
	STREAM_CORRIDOR,
)
from app.core.errors import CorridorInfeasibleError, InvalidArgumentError
from app.core.types import ArrayLike, Vector, as_vector
from app.services.collision import CollisionWorld
from app.services.dynamics import DynamicsModel
from app.services.pool import ChunkTask, WorkerPool, get_worker_pool
from app.services.sampling import GaussianPolicy, make_generator, softmax_weights_rows

logger = logging.getLogger(__name__)

# stages per pool task; results do not depend on it
STAGES_PER_TASK = 8


@dataclass(frozen=True)
class CorridorParams:
	lambda_c: float
	lambda_r: float
	r_max: float
	sample_count: int
	noise_covariance: Vector
	temperature: float
	inflate_iters: int = DEFAULT_INFLATE_ITERS
	tol: float = DEFAULT_CORRIDOR_TOL
	seed: int = 0

	def __post_init__(self) -> None:
		if not (self.lambda_c > 0.0 and self.lambda_r > 0.0):
			raise InvalidArgumentError("lambda_c and lambda_r must be positive")
		if not self.r_max > 0.0:
			raise InvalidArgumentError(f"r_max must be positive, got {self.r_max}")
		if self.sample_count < 1:
			raise InvalidArgumentError(f"sample_count must be >= 1, got {self.sample_count}")
		if self.inflate_iters < 1:
			raise InvalidArgumentError(f"inflate_iters must be >= 1, got {self.inflate_iters}")
		if not self.temperature > 0.0:
			raise InvalidArgumentError(f"temperature must be positive, got {self.temperature}")
		covariance = as_vector(self.noise_covariance, "noise_covariance")
		if np.any(covariance < 0.0):
			raise InvalidArgumentError("noise covariance diagonal must be non-negative")
		object.__setattr__(self, "noise_covariance", covariance)


@dataclass(frozen=True)
class CorridorSequence:
	centers: np.ndarray
	radii: Vector

	def __post_init__(self) -> None:
		centers = np.atleast_2d(np.asarray(self.centers, dtype=np.float64))
		radii = as_vector(self.radii, "radii")
		if centers.shape[0] != radii.shape[0]:
			raise InvalidArgumentError("corridor centers and radii differ in length")
		if np.any(radii < 0.0):
			raise InvalidArgumentError("corridor radii must be non-negative")
		object.__setattr__(self, "centers", centers)
		object.__setattr__(self, "radii", radii)

	def __len__(self) -> int:
		return int(self.radii.shape[0])


def corridor_costs(
	centers: np.ndarray,
	radii: np.ndarray,
	reference: np.ndarray,
	world: CollisionWorld,
	params: CorridorParams,
) -> np.ndarray:
	"""Vectorized corridor_cost over leading axes of centers (..., d) and radii (...)."""
	costs = params.lambda_c * np.linalg.norm(centers - reference, axis=-1) - params.lambda_r * radii
	return np.where(world.balls_are_free(centers, radii), costs, np.inf)


def corridor_cost(c: ArrayLike, r: float, p_ref: ArrayLike, world: CollisionWorld, params: CorridorParams) -> float:
	center = as_vector(c, "c")
	reference = as_vector(p_ref, "p_ref")
	if center.shape != reference.shape or center.shape[0] != world.dimension:
		raise InvalidArgumentError(
			f"corridor center and reference must have dimension {world.dimension}"
		)
	return float(corridor_costs(center, np.float64(r), reference, world, params))


def project_corridor_vars(centers: np.ndarray, radii: np.ndarray, reference: np.ndarray, r_max: float) -> Tuple[np.ndarray, np.ndarray]:
	"""Clamp r to [0, r_max], then pull c radially onto the ball B_r(reference)."""
	radii = np.asarray(np.clip(radii, 0.0, r_max))
	offset = centers - reference
	norm = np.asarray(np.linalg.norm(offset, axis=-1))
	scale = np.divide(radii, norm, out=np.ones_like(norm), where=norm > radii)
	return reference + offset * scale[..., None], radii


def project_corridor_var(z: Tuple[ArrayLike, float], p_ref: ArrayLike, r_max: float) -> Tuple[Vector, float]:
	if not r_max > 0.0:
		raise InvalidArgumentError(f"r_max must be positive, got {r_max}")
	center, radius = project_corridor_vars(as_vector(z[0], "c"), np.float64(z[1]), as_vector(p_ref, "p_ref"), r_max)
	return center, float(radius)


def _largest_free_scale(world: CollisionWorld, center: Vector, radius: float, reference: Vector) -> float:
	"""Bisection on lam in [0, 1] for the ball (ref + lam (c - ref), lam r)."""
	lo, hi = 0.0, 1.0
	for _ in range(BISECTION_STEPS):
		mid = 0.5 * (lo + hi)
		if world.balls_are_free(reference + mid * (center - reference), mid * radius):
			lo = mid
		else:
			hi = mid
	return lo


def refine_corridors(
	centers: np.ndarray,
	radii: np.ndarray,
	reference: np.ndarray,
	world: CollisionWorld,
	params: CorridorParams,
) -> Tuple[np.ndarray, np.ndarray]:
	"""Grow each ball to its nearest obstacle along the segment from p_ref to c.

	Candidates c(lam) = p_ref + lam (c - p_ref) take the largest free radius
	(capped at r_max) and must still contain p_ref; a stage moves only when a
	candidate scores strictly below its current corridor cost.
	"""
	scales = np.linspace(0.0, 1.0, CORRIDOR_REFINE_STEPS)
	offset = centers - reference
	candidates = reference[:, None, :] + scales[None, :, None] * offset[:, None, :]
	grown = np.minimum(params.r_max, world.distances(candidates) * (1.0 - FREE_RADIUS_MARGIN))
	reach = scales[None, :] * np.linalg.norm(offset, axis=-1)[:, None]
	costs = np.where(reach <= grown, params.lambda_c * reach - params.lambda_r * grown, np.inf)
	best = np.argmin(costs, axis=1)
	rows = np.arange(centers.shape[0])
	current = corridor_costs(centers, radii, reference, world, params)
	better = costs[rows, best] < current
	centers = np.where(better[:, None], candidates[rows, best], centers)
	radii = np.where(better, grown[rows, best], radii)
	return centers, radii


def build_corridors(
	states: ArrayLike,
	world: CollisionWorld,
	model: DynamicsModel,
	params: CorridorParams,
	iteration: int = 0,
	pool: Optional[WorkerPool] = None,
) -> CorridorSequence:
	"""Inflate one collision-free ball per stage t = 0..T-1 around the path."""
	path = np.atleast_2d(np.asarray(states, dtype=np.float64))
	if path.shape[0] < 2 or path.shape[1] != model.state_dim:
		raise InvalidArgumentError(f"expected states of shape (T+1, {model.state_dim}) with T >= 1, got {path.shape}")
	reference = model.positions(path[:-1])
	horizon, dimension = reference.shape
	if dimension != world.dimension:
		raise InvalidArgumentError("model positions do not match the world dimension")
	if params.noise_covariance.shape[0] != dimension + 1:
		raise InvalidArgumentError(f"corridor noise must have {dimension + 1} entries")

	blocked = np.flatnonzero(world.points_in_collision(reference))
	if blocked.size:
		stage = int(blocked[0])
		raise CorridorInfeasibleError(f"reference point of stage {stage} is in collision", stage=stage)

	factor = GaussianPolicy(np.zeros(dimension + 1), params.noise_covariance).factor()
	pool = pool or get_worker_pool()
	centers = reference.copy()
	radii = np.zeros(horizon)

	for inflate in range(params.inflate_iters):

		def inflate_stages(task: ChunkTask) -> Tuple[np.ndarray, np.ndarray]:
			stages = slice(task.start, task.stop)
			noise = np.stack([
				make_generator((params.seed, STREAM_CORRIDOR, iteration, inflate, t)).standard_normal(
					(params.sample_count, dimension + 1)
				)
				for t in range(task.start, task.stop)
			]) @ factor.T
			ref = reference[stages, None, :]
			sample_c, sample_r = project_corridor_vars(
				centers[stages, None, :] + noise[..., :dimension],
				radii[stages, None] + noise[..., dimension],
				ref,
				params.r_max,
			)
			costs = corridor_costs(sample_c, sample_r, ref, world, params)
			weights, feasible = softmax_weights_rows(costs, params.temperature)
			new_c, new_r = project_corridor_vars(
				np.einsum("bn,bnd->bd", weights, sample_c),
				np.einsum("bn,bn->b", weights, sample_r),
				reference[stages],
				params.r_max,
			)
			# stages without a single free sample keep their previous ball
			new_c[~feasible] = centers[stages][~feasible]
			new_r[~feasible] = radii[stages][~feasible]
			return new_c, new_r

		results = pool.map_batch(inflate_stages, horizon, STAGES_PER_TASK)
		new_centers = np.concatenate([r[0] for r in results], axis=0)
		new_radii = np.concatenate([r[1] for r in results])
		change = float(np.max(np.linalg.norm(new_centers - centers, axis=-1) + np.abs(new_radii - radii)))
		centers, radii = new_centers, new_radii
		logger.debug("corridor inflation", extra={"iteration": iteration, "inflate": inflate, "change": change})
		if change < params.tol:
			break

	free = world.balls_are_free(centers, radii)
	for t in np.flatnonzero(~free):
		scale = _largest_free_scale(world, centers[t], radii[t], reference[t])
		logger.warning(
			f"Corridor {t} shrunk to the largest free ball: radius {radii[t]:.4f} -> {scale * radii[t]:.4f}",
			extra={"stage": int(t), "radius": float(radii[t]), "shrunk_radius": float(scale * radii[t])},
		)
		centers[t] = reference[t] + scale * (centers[t] - reference[t])
		radii[t] = scale * radii[t]

	# zero noise disables the search, and the seed balls come back as they are
	if np.any(params.noise_covariance > 0.0):
		centers, radii = refine_corridors(centers, radii, reference, world, params)

	return CorridorSequence(centers=centers, radii=radii)
