"""
Runtime scenario: turns a validated ScenarioSpec into models, costs,
constraints, projections and planner parameters.
"""
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Union

import numpy as np

from app.core.constants import MODEL_DIFF_DRIVE
from app.core.errors import ScenarioParseError
from app.core.types import Vector
from app.schemas.scenario import BoxSpec, ScenarioSpec, parse_scenario
from app.services.collision import BoxObstacle, CollisionWorld, Obstacle, SphereObstacle, make_world
from app.services.constraints import (
	ConeConstraint,
	ControlBoxConstraint,
	NormCapConstraint,
	StackedConstraint,
	StageConstraint,
	StateBoxConstraint,
)
from app.services.corridor import CorridorParams
from app.services.costs import ControlEffortCost, FinalCost, GoalCost, StageCost
from app.services.dynamics import DiffDrive, DynamicsModel, PointMassQuadrotor
from app.services.ipddp import IpddpOptions
from app.services.mppi import MppiParams, MppiProblem
from app.services.planner import PlannerConfig
from app.services.sampling import (
	BallProjection,
	BoxProjection,
	IdentityProjection,
	Projection,
	SecondOrderConeProjection,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Scenario:
	name: str
	seed: int
	model: DynamicsModel
	x0: Vector
	horizon: int
	world: CollisionWorld
	stage_cost: StageCost
	final_cost: FinalCost
	control_projection: Projection
	control_constraint: Optional[StackedConstraint]
	state_constraint: Optional[StateBoxConstraint]

	def mppi_problem(self) -> MppiProblem:
		return MppiProblem(
			model=self.model,
			world=self.world,
			stage_cost=self.stage_cost,
			final_cost=self.final_cost,
			control_projection=self.control_projection,
			horizon=self.horizon,
			state_constraint=self.state_constraint,
		)


def _build_model(spec: ScenarioSpec) -> DynamicsModel:
	if spec.model.kind == MODEL_DIFF_DRIVE:
		return DiffDrive(spec.model.dt)
	return PointMassQuadrotor(spec.model.dt, spec.model.gravity)


def _build_world(spec: ScenarioSpec) -> CollisionWorld:
	obstacles: List[Obstacle] = []
	for entry in spec.world.obstacles:
		if isinstance(entry, BoxSpec):
			obstacles.append(BoxObstacle(np.array(entry.min), np.array(entry.max)))
		else:
			obstacles.append(SphereObstacle(np.array(entry.center), entry.radius))
	bounds = None
	if spec.world.bounds_min is not None and spec.world.bounds_max is not None:
		bounds = (spec.world.bounds_min, spec.world.bounds_max)
	return make_world(spec.world.dimension, obstacles, bounds)


def _build_projection(spec: ScenarioSpec) -> Projection:
	limits = spec.constraints
	m = spec.control_dim
	if limits.control_lower is not None or limits.control_upper is not None:
		lower = np.full(m, -np.inf) if limits.control_lower is None else np.array(limits.control_lower)
		upper = np.full(m, np.inf) if limits.control_upper is None else np.array(limits.control_upper)
		return BoxProjection(lower, upper)
	if spec.cone_half_angle is not None:
		return SecondOrderConeProjection(m, spec.cone_half_angle, limits.norm_cap)
	if limits.norm_cap is not None:
		return BallProjection(np.zeros(m), limits.norm_cap)
	return IdentityProjection(m)


def _build_control_constraint(spec: ScenarioSpec) -> Optional[StackedConstraint]:
	n, m = spec.state_dim, spec.control_dim
	limits = spec.constraints
	parts: List[StageConstraint] = []
	if limits.control_lower is not None or limits.control_upper is not None:
		parts.append(ControlBoxConstraint(limits.control_lower, limits.control_upper, n, m))
	if limits.norm_cap is not None:
		parts.append(NormCapConstraint(limits.norm_cap, n, m))
	if spec.cone_half_angle is not None:
		parts.append(ConeConstraint(spec.cone_half_angle, n, m))
	return StackedConstraint(parts, n, m) if parts else None


def build_scenario(spec: ScenarioSpec) -> Scenario:
	n, m = spec.state_dim, spec.control_dim
	limits = spec.constraints
	state_constraint = None
	if limits.state_lower is not None or limits.state_upper is not None:
		state_constraint = StateBoxConstraint(limits.state_lower, limits.state_upper, n, m)
	scenario = Scenario(
		name=spec.name,
		seed=spec.seed,
		model=_build_model(spec),
		x0=np.array(spec.model.start, dtype=np.float64),
		horizon=spec.model.horizon,
		world=_build_world(spec),
		stage_cost=ControlEffortCost(spec.cost.control_weight, n, m),
		final_cost=GoalCost(spec.cost.final_weight, spec.cost.goal),
		control_projection=_build_projection(spec),
		control_constraint=_build_control_constraint(spec),
		state_constraint=state_constraint,
	)
	logger.debug("scenario built", extra={"scenario": spec.name, "model": spec.model.kind, "horizon": spec.model.horizon})
	return scenario


def build_planner_config(spec: ScenarioSpec, seed: Optional[int] = None, max_outer: Optional[int] = None) -> PlannerConfig:
	"""Planner parameters from a ScenarioSpec; seed and max_outer override the file."""
	run_seed = spec.seed if seed is None else seed
	mppi = MppiParams(
		sample_count=spec.mppi.samples,
		noise_covariance=np.array(spec.mppi.noise),
		temperature=spec.mppi.temperature,
		seed=run_seed,
		iterations=spec.mppi.iterations,
		initial_control=None if spec.mppi.initial_control is None else np.array(spec.mppi.initial_control),
		keep_nominal=spec.mppi.keep_nominal,
	)
	corridor = CorridorParams(
		lambda_c=spec.corridor.lambda_c,
		lambda_r=spec.corridor.lambda_r,
		r_max=spec.corridor.r_max,
		sample_count=spec.corridor.samples,
		noise_covariance=np.array(spec.corridor.noise),
		temperature=spec.corridor.temperature,
		inflate_iters=spec.corridor.inflate_iters,
		tol=spec.corridor.tol,
		seed=run_seed,
	)
	return PlannerConfig(
		mppi=mppi,
		corridor=corridor,
		ipddp=IpddpOptions(**spec.ipddp.model_dump()),
		outer_max_iters=spec.planner.outer_max_iters if max_outer is None else max_outer,
		outer_tol=spec.planner.outer_tol,
		corridor_weight=np.atleast_1d(np.array(spec.planner.corridor_weight, dtype=np.float64)),
		mppi_retries=spec.planner.mppi_retries,
	)


def load_scenario_file(path: Union[str, Path]) -> ScenarioSpec:
	source = Path(path)
	try:
		text = source.read_text(encoding="utf-8")
	except OSError as exc:
		raise ScenarioParseError(f"cannot read scenario file {source}: {exc.strerror}") from exc
	spec = parse_scenario(text)
	logger.info(f"Scenario '{spec.name}' loaded from {source}", extra={"path": str(source), "scenario": spec.name})
	return spec
