#!/usr/bin/env python3
"""
Run one scenario over a range of seeds and summarize each plan.
The summary CSV has headers: seed,status_code,iterations,task_cost,max_primal_residual,min_margin,collisions
"""
import argparse
import math
import os
import sys
from typing import List

from app.core.config import settings
from app.core.constants import EXIT_CONVERGED, EXIT_FAILED, EXIT_MAX_ITERS, STATUS_CONVERGED, STATUS_MAX_ITERS
from app.core.errors import PlannerError, PlannerFailedError, ScenarioParseError
from app.services.planner import evaluate_plan, plan
from app.services.pool import set_worker_threads
from app.services.scenario import build_planner_config, build_scenario, load_scenario_file
from app.utils.csv_helpers import write_rows
from app.utils.file_helpers import resolve_scenario_path

SUMMARY_HEADER: List[str] = [
	"seed", "status_code", "iterations", "task_cost", "max_primal_residual", "min_margin", "collisions"
]

STATUS_CODES = {STATUS_CONVERGED: EXIT_CONVERGED, STATUS_MAX_ITERS: EXIT_MAX_ITERS}


def parse_args() -> argparse.Namespace:
	parser = argparse.ArgumentParser(
		description="Plan a scenario for several seeds and write a summary CSV"
	)
	parser.add_argument(
		"--scenario",
		required=True,
		help="Scenario file path or bundled scenario name"
	)
	parser.add_argument(
		"--first-seed",
		dest="first_seed",
		type=int,
		help="First seed of the sweep",
		default=0
	)
	parser.add_argument(
		"-n", "--seeds",
		dest="num_seeds",
		type=int,
		help="Number of consecutive seeds to run",
		default=5
	)
	parser.add_argument(
		"--max-outer",
		dest="max_outer",
		type=int,
		help="Outer iteration cap; overrides the scenario file",
		default=None
	)
	parser.add_argument(
		"--threads",
		type=int,
		help="Worker threads",
		default=settings.PLANNER_THREADS
	)
	parser.add_argument(
		"-o", "--out",
		dest="output_path",
		help="Summary CSV path",
		default="seed_sweep.csv"
	)
	return parser.parse_args()


def validate_args(args: argparse.Namespace) -> None:
	if args.first_seed < 0:
		raise ValueError("--first-seed must be >= 0")
	if args.num_seeds < 1:
		raise ValueError("--seeds must be >= 1")
	if args.threads < 1:
		raise ValueError("--threads must be >= 1")
	if args.max_outer is not None and args.max_outer < 1:
		raise ValueError("--max-outer must be >= 1")


def main() -> int:
	args = parse_args()
	try:
		validate_args(args)
		spec = load_scenario_file(resolve_scenario_path(args.scenario, settings.SCENARIO_DIR))
		scenario = build_scenario(spec)
	except (ValueError, FileNotFoundError, ScenarioParseError) as exc:
		print(f"Invalid arguments: {exc}", file=sys.stderr)
		return 1

	pool = set_worker_threads(args.threads)
	rows = []
	converged = 0
	try:
		for seed in range(args.first_seed, args.first_seed + args.num_seeds):
			config = build_planner_config(spec, seed=seed, max_outer=args.max_outer)
			try:
				result = plan(scenario, config, pool=pool)
			except PlannerFailedError as exc:
				print(f"seed {seed}: failed at outer iteration {exc.iteration}: {exc.cause}")
				rows.append([seed, EXIT_FAILED, exc.iteration, math.nan, math.nan, math.nan, math.nan])
				continue
			except PlannerError as exc:
				print(f"seed {seed}: failed: {exc}")
				rows.append([seed, EXIT_FAILED, 0, math.nan, math.nan, math.nan, math.nan])
				continue
			report = evaluate_plan(result, scenario)
			converged += result.status == STATUS_CONVERGED
			rows.append([
				seed,
				STATUS_CODES[result.status],
				result.iterations,
				report.task_cost,
				math.nan if report.max_primal_residual is None else report.max_primal_residual,
				math.nan if report.min_margin is None else report.min_margin,
				len(report.collision_stages),
			])
			print(f"seed {seed}: {result.status} after {result.iterations} iterations, cost {report.task_cost:.4f}")
	finally:
		pool.stop()

	output_dir = os.path.dirname(os.path.abspath(args.output_path)) or "."
	os.makedirs(output_dir, exist_ok=True)
	write_rows(args.output_path, SUMMARY_HEADER, rows)

	print(f"Summary written: {args.output_path} ({converged}/{len(rows)} converged)")
	return 0 if converged == len(rows) else EXIT_MAX_ITERS


if __name__ == "__main__":
	sys.exit(main())
