"""
Outer MPPI -> corridor -> IPDDP loop.

Each outer iteration refines the nominal controls with MPPI, rolls them out,
inflates collision-free corridors around the coarse path and smooths the
path with IPDDP inside those corridors, warm-started from the coarse path.
"""
import logging
import time
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Callable, List, Optional

import numpy as np

from app.core.constants import (
	DEFAULT_CORRIDOR_WEIGHT,
	DEFAULT_MPPI_RETRIES,
	DEFAULT_OUTER_MAX_ITERS,
	DEFAULT_OUTER_TOL,
	STATUS_CONVERGED,
	STATUS_FAILED,
	STATUS_MAX_ITERS,
)
from app.core.errors import (
	CorridorInfeasibleError,
	InvalidArgumentError,
	NoFeasibleSampleError,
	PlannerError,
	PlannerFailedError,
	SolveFailedError,
)
from app.core.types import Vector
from app.schemas.results import PlanReport, StageReport
from app.services.constraints import CorridorConstraint, StackedConstraint
from app.services.corridor import CorridorParams, CorridorSequence, build_corridors
from app.services.costs import CorridorTrackingCost, trajectory_cost
from app.services.dynamics import Trajectory, rollout
from app.services.ipddp import ConstrainedOCP, IpddpOptions, IpddpResult, result_from_iterate, solve
from app.services.mppi import MppiParams, MppiProblem, mppi_cost, mppi_update
from app.services.pool import WorkerPool, get_worker_pool

if TYPE_CHECKING:
	from app.services.scenario import Scenario

logger = logging.getLogger(__name__)

# margin below which a stage counts as violating its constraints
VIOLATION_TOLERANCE = 1e-4


@dataclass(frozen=True)
class PlannerConfig:
	mppi: MppiParams
	corridor: CorridorParams
	ipddp: IpddpOptions = field(default_factory=IpddpOptions)
	outer_max_iters: int = DEFAULT_OUTER_MAX_ITERS
	outer_tol: float = DEFAULT_OUTER_TOL
	corridor_weight: Vector = field(default_factory=lambda: np.array([DEFAULT_CORRIDOR_WEIGHT]))
	mppi_retries: int = DEFAULT_MPPI_RETRIES

	def __post_init__(self) -> None:
		if self.outer_max_iters < 1:
			raise InvalidArgumentError(f"outer_max_iters must be >= 1, got {self.outer_max_iters}")
		if self.mppi_retries < 1:
			raise InvalidArgumentError(f"mppi_retries must be >= 1, got {self.mppi_retries}")
		weight = np.atleast_1d(np.asarray(self.corridor_weight, dtype=np.float64))
		if np.any(weight < 0.0):
			raise InvalidArgumentError("corridor weight must be positive semidefinite")
		object.__setattr__(self, "corridor_weight", weight)


@dataclass(frozen=True)
class IterationTrace:
	iteration: int
	mppi_cost: float
	smoothing_cost: float
	max_primal_residual: float
	max_violation: float
	ipddp_converged: bool
	ipddp_iterations: int
	mu: float
	control_change: Optional[float]
	trajectory: Trajectory
	corridors: CorridorSequence
	wall_time: float


@dataclass(frozen=True)
class PlanResult:
	trajectory: Trajectory
	corridors: Optional[CorridorSequence]
	traces: List[IterationTrace]
	status: str

	@property
	def iterations(self) -> int:
		return len(self.traces)


def _position_weight(weight: Vector, dimension: int) -> Vector:
	if weight.shape[0] == 1:
		return np.full(dimension, float(weight[0]))
	if weight.shape[0] != dimension:
		raise InvalidArgumentError(f"corridor weight needs 1 or {dimension} entries, got {weight.shape[0]}")
	return weight


def build_smoothing_ocp(
	coarse: Trajectory,
	corr: CorridorSequence,
	scenario: "Scenario",
	corridor_weight: Optional[Vector] = None,
) -> ConstrainedOCP:
	"""Smoothing problem: base cost plus corridor tracking, with every stage kept inside its ball."""
	model = scenario.model
	if len(corr) != coarse.horizon:
		raise InvalidArgumentError(f"need {coarse.horizon} corridors, got {len(corr)}")
	closed = np.flatnonzero(corr.radii <= 0.0)
	if closed.size:
		raise CorridorInfeasibleError(f"corridor {int(closed[0])} has no interior", stage=int(closed[0]))
	indices = model.position_indices
	weight = np.array([DEFAULT_CORRIDOR_WEIGHT]) if corridor_weight is None else np.atleast_1d(corridor_weight)
	stage_cost = CorridorTrackingCost(
		scenario.stage_cost, corr.centers, _position_weight(weight, len(indices)), indices
	)
	parts = [part for part in (scenario.state_constraint, scenario.control_constraint) if part is not None]
	parts.append(CorridorConstraint(corr.centers, corr.radii, indices, model.state_dim, model.control_dim))
	return ConstrainedOCP(
		model=model,
		x_init=scenario.x0,
		horizon=coarse.horizon,
		stage_cost=stage_cost,
		final_cost=scenario.final_cost,
		constraint=StackedConstraint(parts, model.state_dim, model.control_dim),
	)


def _refine_controls(
	problem: MppiProblem,
	x0: Vector,
	controls: np.ndarray,
	params: MppiParams,
	outer: int,
	retries: int,
	pool: WorkerPool,
) -> np.ndarray:
	"""MPPI updates; each one may be re-seeded `retries` times after its first attempt."""
	for inner in range(params.iterations):
		for attempt in range(retries + 1):
			try:
				controls = mppi_update(problem, x0, controls, params, iteration=(outer, inner, attempt), pool=pool)
				break
			except NoFeasibleSampleError:
				if attempt == retries:
					raise
				logger.warning(
					f"No feasible MPPI sample in outer iteration {outer}, re-seeding (retry {attempt + 1} of {retries})",
					extra={"iteration": outer, "inner": inner, "attempt": attempt + 1},
				)
	return controls


def _collision_free(scenario: "Scenario", trajectory: Trajectory) -> bool:
	return not bool(np.any(scenario.world.points_in_collision(scenario.model.positions(trajectory.states))))


def _corridors_around(
	coarse: Trajectory,
	fallback: Optional[Trajectory],
	scenario: "Scenario",
	config: "PlannerConfig",
	outer: int,
	pool: WorkerPool,
) -> CorridorSequence:
	"""Corridors around the coarse path, or around the last collision-free path when it is blocked."""
	try:
		return build_corridors(coarse.states, scenario.world, scenario.model, config.corridor, iteration=outer, pool=pool)
	except CorridorInfeasibleError as exc:
		if fallback is None:
			raise
		logger.warning(
			f"Coarse path of outer iteration {outer} collides at stage {exc.stage}; "
			"building corridors around the last collision-free path",
			extra={"iteration": outer, "stage": exc.stage},
		)
		return build_corridors(fallback.states, scenario.world, scenario.model, config.corridor, iteration=outer, pool=pool)


def _smooth(ocp: ConstrainedOCP, coarse: Trajectory, options: IpddpOptions, outer: int) -> IpddpResult:
	"""IPDDP from the coarse path; exhausted regularization yields its last iterate, unconverged."""
	try:
		return solve(ocp, coarse, options)
	except SolveFailedError as exc:
		if exc.iterate is None:
			raise
		logger.warning(
			f"IPDDP gave up in outer iteration {outer}: {exc}; continuing from its last iterate",
			extra={"iteration": outer, **exc.diagnostics},
		)
		return result_from_iterate(exc.iterate, converged=False, iterations=int(exc.diagnostics.get("iterations", 0)))


def plan(
	scenario: "Scenario",
	config: "PlannerConfig",
	pool: Optional[WorkerPool] = None,
	on_iteration: Optional[Callable[[IterationTrace], None]] = None,
) -> PlanResult:
	"""Run the outer loop until IPDDP converges with a settled control sequence."""
	pool = pool or get_worker_pool()
	model = scenario.model
	problem = scenario.mppi_problem()
	if bool(scenario.world.points_in_collision(model.positions(scenario.x0))):
		raise InvalidArgumentError("start state is in collision")
	if config.corridor_weight.shape[0] == 1 and model.state_dim != len(model.position_indices):
		logger.info(
			f"Corridor weight applied to the {len(model.position_indices)} position dimensions of a {model.state_dim}-dimensional state",
			extra={"positions": len(model.position_indices), "state_dim": model.state_dim},
		)

	nominal = np.zeros(model.control_dim) if config.mppi.initial_control is None else config.mppi.initial_control
	controls = scenario.control_projection(np.tile(nominal, (scenario.horizon, 1)))
	trajectory = rollout(model, scenario.x0, controls)
	fallback: Optional[Trajectory] = trajectory if _collision_free(scenario, trajectory) else None
	corridors: Optional[CorridorSequence] = None
	previous: Optional[np.ndarray] = None
	traces: List[IterationTrace] = []
	status = STATUS_MAX_ITERS

	for outer in range(config.outer_max_iters):
		started = time.perf_counter()
		try:
			controls = _refine_controls(problem, scenario.x0, controls, config.mppi, outer, config.mppi_retries, pool)
			coarse = rollout(model, scenario.x0, controls)
			coarse_cost = mppi_cost(problem, scenario.x0, controls)
			corridors = _corridors_around(coarse, fallback, scenario, config, outer, pool)
			ocp = build_smoothing_ocp(coarse, corridors, scenario, config.corridor_weight)
			smoothed = _smooth(ocp, coarse, config.ipddp, outer)
		except PlannerError as exc:
			logger.error(f"Outer iteration {outer} failed: {exc}", extra={"iteration": outer, "error": str(exc)})
			partial = PlanResult(trajectory=trajectory, corridors=corridors, traces=traces, status=STATUS_FAILED)
			raise PlannerFailedError(outer, exc, partial) from exc

		trajectory = smoothed.trajectory
		if _collision_free(scenario, trajectory):
			fallback = trajectory
		change = None if previous is None else float(np.max(np.abs(trajectory.controls - previous)))
		trace = IterationTrace(
			iteration=outer,
			mppi_cost=coarse_cost,
			smoothing_cost=smoothed.cost,
			max_primal_residual=smoothed.max_primal_residual,
			max_violation=smoothed.max_violation,
			ipddp_converged=smoothed.converged,
			ipddp_iterations=smoothed.iterations,
			mu=smoothed.mu,
			control_change=change,
			trajectory=trajectory,
			corridors=corridors,
			wall_time=time.perf_counter() - started,
		)
		traces.append(trace)
		change_text = "n/a" if change is None else f"{change:.3g}"
		logger.info(
			f"Outer iteration {outer}: MPPI cost {coarse_cost:.6g}, smoothed cost {smoothed.cost:.6g}, "
			f"max |r_p| {smoothed.max_primal_residual:.3g}, IPDDP converged={smoothed.converged}, control change {change_text}",
			extra={
				"iteration": outer,
				"mppi_cost": coarse_cost,
				"cost": smoothed.cost,
				"residual": smoothed.max_primal_residual,
				"converged": smoothed.converged,
				"change": change,
			},
		)
		if on_iteration is not None:
			on_iteration(trace)

		previous = trajectory.controls
		controls = trajectory.controls
		if smoothed.converged and change is not None and change < config.outer_tol:
			status = STATUS_CONVERGED
			break

	return PlanResult(trajectory=trajectory, corridors=corridors, traces=traces, status=status)


def evaluate_plan(result: PlanResult, scenario: "Scenario") -> PlanReport:
	"""Re-check a plan: cost, per-stage constraint margins and collisions of every state."""
	model = scenario.model
	states, controls = result.trajectory.states, result.trajectory.controls
	parts = [part for part in (scenario.state_constraint, scenario.control_constraint) if part is not None]
	if result.corridors is not None and len(result.corridors) == controls.shape[0]:
		parts.append(
			CorridorConstraint(
				result.corridors.centers, result.corridors.radii, model.position_indices, model.state_dim, model.control_dim
			)
		)
	constraint = StackedConstraint(parts, model.state_dim, model.control_dim)
	collisions = scenario.world.points_in_collision(model.positions(states))

	stages: List[StageReport] = []
	margins: List[float] = []
	for t in range(states.shape[0]):
		margin = None
		if t < controls.shape[0] and constraint.count:
			margin = float(-np.max(constraint.value(t, states[t], controls[t])))
			margins.append(margin)
		stages.append(StageReport(t=t, margin=margin, in_collision=bool(collisions[t])))

	last = result.traces[-1] if result.traces else None
	min_margin = min(margins) if margins else None
	return PlanReport(
		status=result.status,
		iterations=result.iterations,
		task_cost=trajectory_cost(scenario.stage_cost, scenario.final_cost, states, controls),
		smoothing_cost=None if last is None else last.smoothing_cost,
		max_primal_residual=None if last is None else last.max_primal_residual,
		max_violation=max(0.0, -min_margin) if min_margin is not None else 0.0,
		min_margin=min_margin,
		collision_stages=[int(t) for t in np.flatnonzero(collisions)],
		violated_stages=[s.t for s in stages if s.margin is not None and s.margin < -VIOLATION_TOLERANCE],
		final_state=[float(v) for v in states[-1]],
		stages=stages,
	)
