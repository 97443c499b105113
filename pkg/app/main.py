"""
Command-line front end for the MPPI-IPDDP trajectory planner.

    python -m app --scenario mobile_robot --seed 7 --out out/
"""
import argparse
import logging
import sys
import time
from datetime import datetime, timezone
from typing import List, Optional

import numpy as np
import pydantic
import scipy

from app.core.config import settings, setup_logging
from app.core.constants import (
	EXIT_CONVERGED,
	EXIT_FAILED,
	EXIT_MAX_ITERS,
	EXIT_USAGE,
	METADATA_FILE,
	STATUS_CONVERGED,
	STATUS_FAILED,
	STATUS_MAX_ITERS,
)
from app.core.errors import InvalidArgumentError, PlannerError, PlannerFailedError, ScenarioParseError
from app.schemas.results import RunMetadata
from app.services.planner import PlanResult, evaluate_plan, plan
from app.services.pool import get_worker_pool, set_worker_threads
from app.services.scenario import build_planner_config, build_scenario, load_scenario_file
from app.services.storage import TRACE_FULL, TRACE_NONE, ensure_output_dir, save_results, write_metadata
from app.utils.file_helpers import resolve_scenario_path

logger = logging.getLogger(__name__)

STATUS_EXIT_CODES = {
	STATUS_CONVERGED: EXIT_CONVERGED,
	STATUS_MAX_ITERS: EXIT_MAX_ITERS,
	STATUS_FAILED: EXIT_FAILED,
}


def build_parser() -> argparse.ArgumentParser:
	parser = argparse.ArgumentParser(
		prog="python -m app",
		description="Plan a collision-free trajectory with MPPI, safe corridors and IPDDP smoothing"
	)
	parser.add_argument(
		"--scenario",
		required=True,
		help="Scenario file path or bundled scenario name (mobile_robot, quadrotor)"
	)
	parser.add_argument(
		"--out",
		dest="output_dir",
		default=settings.OUTPUT_DIR,
		help="Output directory"
	)
	parser.add_argument(
		"--seed",
		type=int,
		default=None,
		help="Random seed; overrides the scenario file"
	)
	parser.add_argument(
		"--max-outer",
		dest="max_outer",
		type=int,
		default=None,
		help="Maximum number of outer iterations; overrides the scenario file"
	)
	parser.add_argument(
		"--threads",
		type=int,
		default=settings.PLANNER_THREADS,
		help="Worker threads; results do not depend on it"
	)
	parser.add_argument(
		"--trace",
		choices=[TRACE_NONE, TRACE_FULL],
		default=TRACE_NONE,
		help="Per-iteration trace detail"
	)
	parser.add_argument(
		"-v", "--verbose",
		action="store_true",
		help="Log at DEBUG level"
	)
	return parser


def validate_args(args: argparse.Namespace) -> None:
	if args.seed is not None and args.seed < 0:
		raise ValueError("--seed must be >= 0")
	if args.max_outer is not None and args.max_outer < 1:
		raise ValueError("--max-outer must be >= 1")
	if args.threads < 1:
		raise ValueError("--threads must be >= 1")


def _versions() -> dict:
	return {
		"python": sys.version.split()[0],
		"numpy": np.__version__,
		"scipy": scipy.__version__,
		"pydantic": pydantic.VERSION,
	}


def _now() -> str:
	return datetime.now(timezone.utc).isoformat()


def run(argv: Optional[List[str]] = None) -> int:
	"""Run the planner for one scenario and return the process exit code."""
	parser = build_parser()
	try:
		args = parser.parse_args(argv)
	except SystemExit as exc:
		return EXIT_CONVERGED if exc.code == 0 else EXIT_USAGE
	try:
		validate_args(args)
	except ValueError as exc:
		print(f"Invalid arguments: {exc}", file=sys.stderr)
		return EXIT_USAGE

	if args.verbose:
		setup_logging(logging.DEBUG)

	try:
		path = resolve_scenario_path(args.scenario, settings.SCENARIO_DIR)
		spec = load_scenario_file(path)
		scenario = build_scenario(spec)
		config = build_planner_config(spec, seed=args.seed, max_outer=args.max_outer)
		if bool(scenario.world.points_in_collision(scenario.model.positions(scenario.x0))):
			raise InvalidArgumentError(f"start state {scenario.x0.tolist()} is in collision")
	except (FileNotFoundError, ScenarioParseError, InvalidArgumentError) as exc:
		print(f"Invalid scenario: {exc}", file=sys.stderr)
		return EXIT_USAGE

	seed = spec.seed if args.seed is None else args.seed
	started_at = _now()
	started = time.perf_counter()
	pool = set_worker_threads(args.threads)
	failure: Optional[str] = None
	try:
		result: Optional[PlanResult] = plan(scenario, config, pool=pool)
	except PlannerFailedError as exc:
		failure = str(exc)
		result = exc.result
	except PlannerError as exc:
		failure = str(exc)
		result = None
	finally:
		get_worker_pool().stop()

	status = STATUS_FAILED if failure is not None or result is None else result.status
	exit_code = STATUS_EXIT_CODES[status]
	if failure is not None:
		print(f"Planning failed: {failure}", file=sys.stderr)

	out_dir = ensure_output_dir(args.output_dir)
	if result is not None:
		report = evaluate_plan(result, scenario)
		save_results(str(out_dir), result, scenario.model, spec.model.dt, report=report, trace_mode=args.trace)
	metadata = RunMetadata(
		scenario=spec.name,
		seed=seed,
		threads=args.threads,
		status=status,
		exit_code=exit_code,
		started_at=started_at,
		finished_at=_now(),
		total_wall_time=time.perf_counter() - started,
		iteration_wall_times=[] if result is None else [trace.wall_time for trace in result.traces],
		versions=_versions(),
	)
	write_metadata(out_dir / METADATA_FILE, metadata)
	logger.info(f"Run of '{spec.name}' finished: {status} (exit code {exit_code})", extra={"scenario": spec.name, "status": status, "exit_code": exit_code})

	if result is not None:
		print(f"{spec.name}: {status} after {result.iterations} outer iterations, results in {out_dir}")
	return exit_code


def main() -> None:
	sys.exit(run())


if __name__ == "__main__":
	main()
