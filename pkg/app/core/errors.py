"""
Exception hierarchy for the planner.
"""
from typing import Any, Dict, Optional


class PlannerError(Exception):
	"""Base class for every error raised by the planner stack."""


class InvalidArgumentError(PlannerError, ValueError):
	"""Dimension mismatch, bad parameter or non-PSD covariance."""


class NoFeasibleSampleError(PlannerError):
	"""Every sampled candidate scored +inf."""

	def __init__(self, message: str, context: Optional[Dict[str, Any]] = None) -> None:
		super().__init__(message)
		self.context = dict(context or {})


class CorridorInfeasibleError(PlannerError):
	"""A reference point sits inside an obstacle, or a corridor has no interior."""

	def __init__(self, message: str, stage: Optional[int] = None) -> None:
		super().__init__(message)
		self.stage = stage


class BackwardPassError(PlannerError):
	"""Q~_uu is not positive definite at some stage."""

	def __init__(self, stage: int) -> None:
		super().__init__(f"Q_uu not positive definite at stage {stage}")
		self.stage = stage


class ForwardPassError(PlannerError):
	"""No step size passed the filter."""


class SolveFailedError(PlannerError):
	"""Regularization exceeded its upper bound."""

	def __init__(self, message: str, iterate: Any = None, diagnostics: Optional[Dict[str, Any]] = None) -> None:
		super().__init__(message)
		self.iterate = iterate
		self.diagnostics = dict(diagnostics or {})


class PlannerFailedError(PlannerError):
	"""A pipeline stage failed during an outer iteration."""

	def __init__(self, iteration: int, cause: BaseException, result: Any = None) -> None:
		super().__init__(f"outer iteration {iteration} failed: {cause}")
		self.iteration = iteration
		self.cause = cause
		self.result = result


class ScenarioParseError(PlannerError):
	"""Scenario text could not be parsed or validated."""

	def __init__(self, message: str, key_path: str = "", line: Optional[int] = None) -> None:
		location = key_path or "<root>"
		if line is not None:
			location = f"{location} (line {line})"
		super().__init__(f"{location}: {message}")
		self.key_path = key_path
		self.line = line
