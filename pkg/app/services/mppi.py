"""
Sampling-based coarse trajectory search.

One update perturbs the nominal control sequence with Gaussian noise, projects
every perturbed control onto the admissible set, scores the rollouts with the
collision-indicator cost and returns the projected softmax blend.
"""
import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from app.core.constants import DEFAULT_MPPI_ITERATIONS, STREAM_MPPI
from app.core.errors import InvalidArgumentError, NoFeasibleSampleError
from app.core.types import ArrayLike, Vector, as_vector
from app.services.collision import CollisionWorld
from app.services.constraints import StateBoxConstraint
from app.services.costs import FinalCost, StageCost
from app.services.dynamics import DynamicsModel, as_control_sequence, rollout_batch
from app.services.pool import ChunkTask, WorkerPool, get_worker_pool
from app.services.sampling import GaussianPolicy, Projection, make_generator, softmax_weights

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class MppiProblem:
	model: DynamicsModel
	world: CollisionWorld
	stage_cost: StageCost
	final_cost: FinalCost
	control_projection: Projection
	horizon: int
	state_constraint: Optional[StateBoxConstraint] = None

	def __post_init__(self) -> None:
		if self.horizon < 1:
			raise InvalidArgumentError(f"horizon must be >= 1, got {self.horizon}")
		if self.control_projection.dimension != self.model.control_dim:
			raise InvalidArgumentError("control projection dimension does not match the model")
		if len(self.model.position_indices) != self.world.dimension:
			raise InvalidArgumentError("model positions do not match the world dimension")


@dataclass(frozen=True)
class MppiParams:
	sample_count: int
	noise_covariance: Vector
	temperature: float
	seed: int = 0
	iterations: int = DEFAULT_MPPI_ITERATIONS
	initial_control: Optional[Vector] = None
	# sample 0 of chunk 0 is the unperturbed nominal
	keep_nominal: bool = False

	def __post_init__(self) -> None:
		covariance = as_vector(self.noise_covariance, "noise_covariance")
		if self.sample_count < 1:
			raise InvalidArgumentError(f"sample_count must be >= 1, got {self.sample_count}")
		if np.any(covariance < 0.0):
			raise InvalidArgumentError("noise covariance diagonal must be non-negative")
		if not self.temperature > 0.0:
			raise InvalidArgumentError(f"temperature must be positive, got {self.temperature}")
		if self.iterations < 1:
			raise InvalidArgumentError(f"iterations must be >= 1, got {self.iterations}")
		object.__setattr__(self, "noise_covariance", covariance)
		if self.initial_control is not None:
			object.__setattr__(self, "initial_control", as_vector(self.initial_control, "initial_control"))


def _check_sequence(prob: MppiProblem, x0: ArrayLike, controls: ArrayLike) -> Tuple[Vector, np.ndarray]:
	start = as_vector(x0, "x0")
	if start.shape[0] != prob.model.state_dim:
		raise InvalidArgumentError(f"x0 must have dimension {prob.model.state_dim}, got {start.shape[0]}")
	sequence = as_control_sequence(prob.model, controls)
	if sequence.shape[0] != prob.horizon:
		raise InvalidArgumentError(f"control sequence must have length {prob.horizon}, got {sequence.shape[0]}")
	return start, sequence


def mppi_costs_batch(prob: MppiProblem, x0: Vector, controls: np.ndarray) -> np.ndarray:
	"""Indicator-augmented costs of N control sequences (N, T, m) -> (N,)."""
	states = rollout_batch(prob.model, x0, controls)
	infeasible = np.any(prob.world.points_in_collision(prob.model.positions(states)), axis=-1)
	if prob.state_constraint is not None and prob.state_constraint.count > 0:
		infeasible |= np.any(prob.state_constraint.state_values(states) > 0.0, axis=(-2, -1))
	costs = np.sum(prob.stage_cost.value_batch(states[:, :-1], controls), axis=-1)
	costs = costs + prob.final_cost.value_batch(states[:, -1])
	costs[infeasible] = np.inf
	# non-finite dynamics blow-ups are treated as infeasible
	costs[np.isnan(costs)] = np.inf
	return costs


def mppi_cost(prob: MppiProblem, x0: ArrayLike, controls: ArrayLike) -> float:
	start, sequence = _check_sequence(prob, x0, controls)
	return float(mppi_costs_batch(prob, start, sequence[None])[0])


def mppi_update(
	prob: MppiProblem,
	x0: ArrayLike,
	controls: ArrayLike,
	params: MppiParams,
	iteration: Sequence[int] = (0, 0),
	pool: Optional[WorkerPool] = None,
) -> np.ndarray:
	"""One projected softmax update of the nominal control sequence.

	`iteration` is folded into the random keys together with the chunk index,
	so a given (seed, iteration) always draws the same samples.
	With `keep_nominal` the first sample is the unperturbed sequence, so the
	blend stays at the input once no perturbation beats it.
	"""
	start, sequence = _check_sequence(prob, x0, controls)
	pool = pool or get_worker_pool()
	horizon, m = sequence.shape
	if params.noise_covariance.shape[0] != m:
		raise InvalidArgumentError(f"noise covariance must have {m} entries, got {params.noise_covariance.shape[0]}")
	factor = GaussianPolicy(np.zeros(m), params.noise_covariance).factor()
	context = tuple(int(i) for i in iteration)

	def evaluate(task: ChunkTask) -> Tuple[np.ndarray, np.ndarray]:
		generator = make_generator((params.seed, STREAM_MPPI, *context, task.index))
		noise = generator.standard_normal((task.size, horizon, m)) @ factor.T
		if params.keep_nominal and task.index == 0:
			noise[0] = 0.0
		samples = prob.control_projection(sequence + noise)
		return samples, mppi_costs_batch(prob, start, samples)

	results: List[Tuple[np.ndarray, np.ndarray]] = pool.map_batch(evaluate, params.sample_count)
	samples = np.concatenate([r[0] for r in results], axis=0)
	costs = np.concatenate([r[1] for r in results])

	try:
		weights = softmax_weights(costs, params.temperature)
	except NoFeasibleSampleError as exc:
		raise NoFeasibleSampleError(
			"every MPPI sample collides or violates a state constraint",
			context={"iteration": list(context), "samples": params.sample_count},
		) from exc

	blended = prob.control_projection(np.tensordot(weights, samples, axes=1))
	feasible = int(np.count_nonzero(np.isfinite(costs)))
	blended_cost = mppi_costs_batch(prob, start, blended[None])[0]
	if not np.isfinite(blended_cost):
		logger.warning(
			f"Blended MPPI update {list(context)} yields an infeasible rollout ({feasible} feasible samples)",
			extra={"iteration": list(context), "feasible_samples": feasible},
		)
	logger.debug(
		"mppi update",
		extra={"iteration": list(context), "feasible_samples": feasible, "best_cost": float(np.min(costs)), "cost": float(blended_cost)},
	)
	return blended
