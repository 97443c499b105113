from typing import Dict, List, Optional

from pydantic import BaseModel


class TraceRecord(BaseModel):
	"""One outer iteration, as written to the trace file."""

	iteration: int
	mppi_cost: Optional[float] = None  # None when the coarse rollout is infeasible
	smoothing_cost: float
	max_primal_residual: float
	max_violation: float
	ipddp_converged: bool
	ipddp_iterations: int
	mu: float
	control_change: Optional[float] = None
	states: Optional[List[List[float]]] = None
	controls: Optional[List[List[float]]] = None
	corridor_centers: Optional[List[List[float]]] = None
	corridor_radii: Optional[List[float]] = None


class StageReport(BaseModel):
	t: int
	margin: Optional[float] = None
	in_collision: bool


class PlanReport(BaseModel):
	status: str
	iterations: int
	task_cost: float
	smoothing_cost: Optional[float] = None
	max_primal_residual: Optional[float] = None
	max_violation: float
	min_margin: Optional[float] = None
	collision_stages: List[int]
	violated_stages: List[int]
	final_state: List[float]
	stages: List[StageReport]


class RunMetadata(BaseModel):
	scenario: str
	seed: int
	threads: int
	status: str
	exit_code: int
	started_at: str
	finished_at: str
	total_wall_time: float
	iteration_wall_times: List[float]
	versions: Dict[str, str]
