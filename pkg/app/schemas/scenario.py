"""
Scenario file schema.

Scenarios are TOML documents with the tables [model], [cost], [constraints],
[world] (with [[world.obstacles]] entries), [mppi], [corridor], [ipddp] and
[planner], plus a top-level seed. Unknown keys are rejected.
"""
import math
import re
from typing import Annotated, Any, Dict, List, Literal, Optional, Sequence, Tuple, Union

import tomli_w
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from app.core import constants
from app.core.errors import ScenarioParseError

try:
	import tomllib
except ModuleNotFoundError:  # Python < 3.11
	import tomli as tomllib  # type: ignore[no-redef]

Weight = Union[float, List[float]]

STATE_DIMS = {constants.MODEL_DIFF_DRIVE: 3, constants.MODEL_QUADROTOR: 6}
CONTROL_DIMS = {constants.MODEL_DIFF_DRIVE: 2, constants.MODEL_QUADROTOR: 3}
POSITION_DIMS = {constants.MODEL_DIFF_DRIVE: 2, constants.MODEL_QUADROTOR: 3}


class StrictModel(BaseModel):
	model_config = ConfigDict(extra="forbid")


class ModelSection(StrictModel):
	kind: Literal["diff_drive", "quadrotor_point_mass"]
	dt: float = Field(gt=0.0)
	horizon: int = Field(ge=1)
	start: List[float]
	gravity: float = constants.GRAVITY


class CostSection(StrictModel):
	goal: List[float]
	final_weight: Weight
	control_weight: Weight


class ConstraintSection(StrictModel):
	control_lower: Optional[List[float]] = None
	control_upper: Optional[List[float]] = None
	state_lower: Optional[List[float]] = None
	state_upper: Optional[List[float]] = None
	cone_half_angle_deg: Optional[float] = Field(default=None, gt=0.0, lt=90.0)
	norm_cap: Optional[float] = Field(default=None, gt=0.0)


class BoxSpec(StrictModel):
	kind: Literal["box"]
	min: List[float]
	max: List[float]


class SphereSpec(StrictModel):
	kind: Literal["sphere"]
	center: List[float]
	radius: float = Field(ge=0.0)


ObstacleSpec = Annotated[Union[BoxSpec, SphereSpec], Field(discriminator="kind")]


class WorldSection(StrictModel):
	dimension: Literal[2, 3]
	bounds_min: Optional[List[float]] = None
	bounds_max: Optional[List[float]] = None
	obstacles: List[ObstacleSpec] = Field(default_factory=list)


class MppiSection(StrictModel):
	samples: int = Field(ge=1)
	noise: List[float]
	temperature: float = Field(gt=0.0)
	iterations: int = Field(default=constants.DEFAULT_MPPI_ITERATIONS, ge=1)
	initial_control: Optional[List[float]] = None
	keep_nominal: bool = True


class CorridorSection(StrictModel):
	lambda_c: float = Field(gt=0.0)
	lambda_r: float = Field(gt=0.0)
	r_max: float = Field(gt=0.0)
	samples: int = Field(ge=1)
	noise: List[float]
	temperature: float = Field(gt=0.0)
	inflate_iters: int = Field(default=constants.DEFAULT_INFLATE_ITERS, ge=1)
	tol: float = Field(default=constants.DEFAULT_CORRIDOR_TOL, ge=0.0)


class IpddpSection(StrictModel):
	mu_init: float = Field(default=constants.DEFAULT_MU_INIT, gt=0.0)
	kappa: float = Field(default=constants.DEFAULT_KAPPA, gt=1.0)
	mu_min: float = Field(default=constants.DEFAULT_MU_MIN, gt=0.0)
	mu_stop: float = Field(default=constants.DEFAULT_MU_STOP, gt=0.0)
	tau: float = Field(default=constants.DEFAULT_TAU, gt=0.0, lt=1.0)
	rho_init: float = Field(default=constants.DEFAULT_RHO_INIT, gt=0.0)
	rho_max: float = Field(default=constants.DEFAULT_RHO_MAX, gt=0.0)
	max_iters: int = Field(default=constants.DEFAULT_IPDDP_MAX_ITERS, ge=1)
	step_exponents: int = Field(default=constants.DEFAULT_STEP_EXPONENTS, ge=1)
	filter_margin: float = Field(default=constants.DEFAULT_FILTER_MARGIN, ge=0.0)
	min_slack: float = Field(default=constants.DEFAULT_MIN_SLACK, gt=0.0)
	second_order_dynamics: bool = False


class PlannerSection(StrictModel):
	outer_max_iters: int = Field(default=constants.DEFAULT_OUTER_MAX_ITERS, ge=1)
	outer_tol: float = Field(default=constants.DEFAULT_OUTER_TOL, gt=0.0)
	corridor_weight: Weight = constants.DEFAULT_CORRIDOR_WEIGHT
	mppi_retries: int = Field(default=constants.DEFAULT_MPPI_RETRIES, ge=1)


def _check_length(values: Optional[Sequence[Any]], expected: int, name: str) -> None:
	if values is not None and len(values) != expected:
		raise ValueError(f"{name} must have {expected} entries, got {len(values)}")


def _check_weight(weight: Weight, expected: int, name: str) -> None:
	if isinstance(weight, list):
		_check_length(weight, expected, name)


class ScenarioSpec(StrictModel):
	name: str = "scenario"
	seed: int = Field(default=0, ge=0)
	model: ModelSection
	cost: CostSection
	constraints: ConstraintSection = Field(default_factory=ConstraintSection)
	world: WorldSection
	mppi: MppiSection
	corridor: CorridorSection
	ipddp: IpddpSection = Field(default_factory=IpddpSection)
	planner: PlannerSection = Field(default_factory=PlannerSection)

	@property
	def state_dim(self) -> int:
		return STATE_DIMS[self.model.kind]

	@property
	def control_dim(self) -> int:
		return CONTROL_DIMS[self.model.kind]

	@model_validator(mode="after")
	def check_dimensions(self) -> "ScenarioSpec":
		n, m = self.state_dim, self.control_dim
		d = POSITION_DIMS[self.model.kind]
		_check_length(self.model.start, n, "model.start")
		_check_length(self.cost.goal, n, "cost.goal")
		_check_weight(self.cost.final_weight, n, "cost.final_weight")
		_check_weight(self.cost.control_weight, m, "cost.control_weight")
		limits = self.constraints
		_check_length(limits.control_lower, m, "constraints.control_lower")
		_check_length(limits.control_upper, m, "constraints.control_upper")
		_check_length(limits.state_lower, n, "constraints.state_lower")
		_check_length(limits.state_upper, n, "constraints.state_upper")
		has_box = limits.control_lower is not None or limits.control_upper is not None
		if has_box and (limits.cone_half_angle_deg is not None or limits.norm_cap is not None):
			raise ValueError("a control box cannot be combined with a cone or norm cap")
		if limits.cone_half_angle_deg is not None and m < 2:
			raise ValueError("a thrust cone needs at least two control entries")
		if self.world.dimension != d:
			raise ValueError(f"world.dimension must be {d} for model {self.model.kind}")
		_check_length(self.world.bounds_min, d, "world.bounds_min")
		_check_length(self.world.bounds_max, d, "world.bounds_max")
		if (self.world.bounds_min is None) != (self.world.bounds_max is None):
			raise ValueError("world.bounds_min and world.bounds_max must be given together")
		for index, obstacle in enumerate(self.world.obstacles):
			corners = [obstacle.min, obstacle.max] if isinstance(obstacle, BoxSpec) else [obstacle.center]
			for corner in corners:
				_check_length(corner, d, f"world.obstacles[{index}]")
		_check_length(self.mppi.noise, m, "mppi.noise")
		_check_length(self.mppi.initial_control, m, "mppi.initial_control")
		_check_length(self.corridor.noise, d + 1, "corridor.noise")
		_check_weight(self.planner.corridor_weight, d, "planner.corridor_weight")
		return self

	@property
	def cone_half_angle(self) -> Optional[float]:
		angle = self.constraints.cone_half_angle_deg
		return None if angle is None else math.radians(angle)


_TOML_LINE = re.compile(r"line (\d+)")


def _locate_line(text: str, loc: Tuple[Any, ...]) -> Optional[int]:
	"""Best-effort line number of the key addressed by a validation location."""
	parts: List[Any] = []
	for index, part in enumerate(loc):
		# discriminator tags follow list indices
		if isinstance(part, str) and index > 0 and isinstance(loc[index - 1], int) and part in ("box", "sphere"):
			continue
		parts.append(part)
	if not parts:
		return None
	key = parts[-1] if isinstance(parts[-1], str) else None
	table = tuple(p for p in (parts[:-1] if key is not None else parts) if isinstance(p, str))
	indices = [p for p in parts if isinstance(p, int)]
	wanted_index = indices[-1] if indices else None

	current: Tuple[str, ...] = ()
	current_index: Optional[int] = None
	array_counts: Dict[Tuple[str, ...], int] = {}
	header_line: Optional[int] = None
	for number, raw in enumerate(text.splitlines(), start=1):
		line = raw.split("#", 1)[0].strip()
		if line.startswith("[["):
			current = tuple(line.strip("[] ").split("."))
			current_index = array_counts.get(current, -1) + 1
			array_counts[current] = current_index
		elif line.startswith("["):
			current = tuple(line.strip("[] ").split("."))
			current_index = None
		else:
			if key is not None and "=" in line and current == table:
				if wanted_index is None or current_index == wanted_index:
					if line.split("=", 1)[0].strip() == key:
						return number
			continue
		if current == table and (wanted_index is None or current_index == wanted_index) and header_line is None:
			header_line = number
	return header_line


def _key_path(loc: Tuple[Any, ...]) -> str:
	path = ""
	for part in loc:
		if isinstance(part, int):
			path += f"[{part}]"
		elif part in ("box", "sphere") and path.endswith("]"):
			continue
		else:
			path += f".{part}" if path else str(part)
	return path


def parse_scenario(text: str) -> ScenarioSpec:
	"""Parse and validate scenario text; raises ScenarioParseError with key path and line."""
	try:
		document = tomllib.loads(text)
	except tomllib.TOMLDecodeError as exc:
		match = _TOML_LINE.search(str(exc))
		raise ScenarioParseError(f"malformed TOML: {exc}", line=int(match.group(1)) if match else None) from exc
	try:
		return ScenarioSpec.model_validate(document)
	except ValidationError as exc:
		error = exc.errors()[0]
		loc = tuple(error.get("loc", ()))
		message = error.get("msg", "invalid value")
		if error.get("type") == "extra_forbidden":
			message = f"unknown key '{loc[-1]}'"
		raise ScenarioParseError(message, key_path=_key_path(loc), line=_locate_line(text, loc)) from exc


def serialize_scenario(spec: ScenarioSpec) -> str:
	return tomli_w.dumps(spec.model_dump(mode="python", exclude_none=True))
