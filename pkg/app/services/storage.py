import json
import logging
import math
from pathlib import Path
from typing import Dict, Iterable, List, Optional

import numpy as np

from app.core.constants import CORRIDOR_FILE, REPORT_FILE, TRACE_FILE, TRAJECTORY_FILE
from app.schemas.results import PlanReport, RunMetadata, TraceRecord
from app.services.corridor import CorridorSequence
from app.services.dynamics import DynamicsModel, Trajectory
from app.services.planner import IterationTrace, PlanResult
from app.utils.csv_helpers import write_rows
from app.utils.file_helpers import ensure_storage_dir

logger = logging.getLogger(__name__)

TRACE_NONE = "none"
TRACE_FULL = "full"


def ensure_output_dir(directory: str) -> Path:
	return Path(ensure_storage_dir(directory))


def _matrix(values: np.ndarray) -> List[List[float]]:
	return [[float(v) for v in row] for row in values]


def write_trajectory(path: Path, trajectory: Trajectory, model: DynamicsModel, dt: float) -> None:
	"""One row per stage t = 0..T; the final row has no control, so its control columns are nan."""
	header = ["t", *model.state_names, *model.control_names]
	horizon = trajectory.horizon
	missing = [math.nan] * model.control_dim
	rows = (
		[t * dt, *trajectory.states[t], *(trajectory.controls[t] if t < horizon else missing)]
		for t in range(horizon + 1)
	)
	write_rows(path, header, rows)


def write_corridors(path: Path, corridors: CorridorSequence, model: DynamicsModel, dt: float) -> None:
	names = [model.state_names[i] for i in model.position_indices]
	header = ["t", *(f"c_{name}" for name in names), "radius"]
	rows = ([t * dt, *corridors.centers[t], corridors.radii[t]] for t in range(len(corridors)))
	write_rows(path, header, rows)


def trace_record(trace: IterationTrace, full: bool) -> TraceRecord:
	record = TraceRecord(
		iteration=trace.iteration,
		mppi_cost=trace.mppi_cost if math.isfinite(trace.mppi_cost) else None,
		smoothing_cost=trace.smoothing_cost,
		max_primal_residual=trace.max_primal_residual,
		max_violation=trace.max_violation,
		ipddp_converged=trace.ipddp_converged,
		ipddp_iterations=trace.ipddp_iterations,
		mu=trace.mu,
		control_change=trace.control_change,
	)
	if full:
		record.states = _matrix(trace.trajectory.states)
		record.controls = _matrix(trace.trajectory.controls)
		record.corridor_centers = _matrix(trace.corridors.centers)
		record.corridor_radii = [float(r) for r in trace.corridors.radii]
	return record


def write_trace(path: Path, traces: Iterable[IterationTrace], mode: str = TRACE_NONE) -> None:
	"""Line-delimited records, one per outer iteration; wall times stay out of this file."""
	if mode not in (TRACE_NONE, TRACE_FULL):
		raise ValueError(f"unknown trace mode '{mode}'")
	with open(path, "w", encoding="utf-8", newline="\n") as out:
		for trace in traces:
			record = trace_record(trace, full=mode == TRACE_FULL)
			out.write(record.model_dump_json(exclude_none=True))
			out.write("\n")


def write_json(path: Path, payload: Dict) -> None:
	with open(path, "w", encoding="utf-8", newline="\n") as out:
		json.dump(payload, out, indent=2, sort_keys=True, allow_nan=False)
		out.write("\n")


def write_report(path: Path, report: PlanReport) -> None:
	write_json(path, report.model_dump(mode="json"))


def write_metadata(path: Path, metadata: RunMetadata) -> None:
	write_json(path, metadata.model_dump(mode="json"))


def save_results(
	directory: str,
	result: PlanResult,
	model: DynamicsModel,
	dt: float,
	report: Optional[PlanReport] = None,
	trace_mode: str = TRACE_NONE,
) -> Dict[str, Path]:
	"""Write every result file for a run and return their paths by file name."""
	out_dir = ensure_output_dir(directory)
	written: Dict[str, Path] = {}

	path = out_dir / TRAJECTORY_FILE
	write_trajectory(path, result.trajectory, model, dt)
	written[TRAJECTORY_FILE] = path

	if result.corridors is not None:
		path = out_dir / CORRIDOR_FILE
		write_corridors(path, result.corridors, model, dt)
		written[CORRIDOR_FILE] = path

	path = out_dir / TRACE_FILE
	write_trace(path, result.traces, trace_mode)
	written[TRACE_FILE] = path

	if report is not None:
		path = out_dir / REPORT_FILE
		write_report(path, report)
		written[REPORT_FILE] = path

	logger.info(f"Results written to {out_dir}: {', '.join(sorted(written))}", extra={"directory": str(out_dir), "files": sorted(written)})
	return written


__all__ = [
	"TRACE_FULL",
	"TRACE_NONE",
	"ensure_output_dir",
	"save_results",
	"trace_record",
	"write_corridors",
	"write_metadata",
	"write_report",
	"write_trace",
	"write_trajectory",
]
