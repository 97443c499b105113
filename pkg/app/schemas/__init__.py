from .results import PlanReport, RunMetadata, StageReport, TraceRecord
from .scenario import ScenarioSpec, parse_scenario, serialize_scenario
