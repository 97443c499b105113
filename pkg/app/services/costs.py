"""
Named cost forms with the derivatives IPDDP needs.

Stage costs are evaluated per stage as l_t(x, u) and in batch over arrays
whose second-to-last axis is time: states (..., T, n), controls (..., T, m).
"""
from abc import ABC, abstractmethod
from typing import NamedTuple, Optional, Sequence, Union

import numpy as np

from app.core.errors import InvalidArgumentError
from app.core.types import ArrayLike, Matrix, Vector, as_vector

Weight = Union[float, Sequence[float], np.ndarray]


class StageDerivatives(NamedTuple):
	l_x: Vector
	l_u: Vector
	l_xx: Matrix
	l_ux: Matrix
	l_uu: Matrix


class FinalDerivatives(NamedTuple):
	l_x: Vector
	l_xx: Matrix


def _diagonal_weight(weight: Weight, dimension: int, name: str) -> Vector:
	values = np.asarray(weight, dtype=np.float64)
	if values.ndim == 0:
		values = np.full(dimension, float(values))
	if values.shape != (dimension,):
		raise InvalidArgumentError(f"{name} must be a scalar or have {dimension} entries, got shape {values.shape}")
	if np.any(values < 0.0):
		raise InvalidArgumentError(f"{name} must be non-negative")
	return values


class StageCost(ABC):
	state_dim: int
	control_dim: int

	@abstractmethod
	def value(self, t: int, x: Vector, u: Vector) -> float:
		...

	@abstractmethod
	def value_batch(self, states: np.ndarray, controls: np.ndarray) -> np.ndarray:
		"""Costs of shape (..., T) for states (..., T, n) and controls (..., T, m)."""

	@abstractmethod
	def derivatives(self, t: int, x: Vector, u: Vector) -> StageDerivatives:
		...


class FinalCost(ABC):
	state_dim: int

	@abstractmethod
	def value(self, x: Vector) -> float:
		...

	@abstractmethod
	def value_batch(self, states: np.ndarray) -> np.ndarray:
		...

	@abstractmethod
	def derivatives(self, x: Vector) -> FinalDerivatives:
		...


class ControlEffortCost(StageCost):
	"""l(x, u) = sum_i w_i u_i^2."""

	def __init__(self, weight: Weight, state_dim: int, control_dim: int) -> None:
		self.state_dim = state_dim
		self.control_dim = control_dim
		self.weight = _diagonal_weight(weight, control_dim, "control weight")

	def value(self, t: int, x: Vector, u: Vector) -> float:
		return float(np.dot(self.weight, u * u))

	def value_batch(self, states: np.ndarray, controls: np.ndarray) -> np.ndarray:
		return np.sum(self.weight * controls * controls, axis=-1)

	def derivatives(self, t: int, x: Vector, u: Vector) -> StageDerivatives:
		n, m = self.state_dim, self.control_dim
		return StageDerivatives(
			l_x=np.zeros(n),
			l_u=2.0 * self.weight * u,
			l_xx=np.zeros((n, n)),
			l_ux=np.zeros((m, n)),
			l_uu=np.diag(2.0 * self.weight),
		)


class GoalCost(FinalCost):
	"""l_f(x) = sum_i w_i (x_i - goal_i)^2."""

	def __init__(self, weight: Weight, goal: ArrayLike) -> None:
		self.goal = as_vector(goal, "goal")
		self.state_dim = int(self.goal.shape[0])
		self.weight = _diagonal_weight(weight, self.state_dim, "final weight")

	def value(self, x: Vector) -> float:
		error = x - self.goal
		return float(np.dot(self.weight, error * error))

	def value_batch(self, states: np.ndarray) -> np.ndarray:
		error = states - self.goal
		return np.sum(self.weight * error * error, axis=-1)

	def derivatives(self, x: Vector) -> FinalDerivatives:
		return FinalDerivatives(l_x=2.0 * self.weight * (x - self.goal), l_xx=np.diag(2.0 * self.weight))


class QuadraticStageCost(StageCost):
	"""l(x, u) = 1/2 x'Qx + 1/2 u'Ru."""

	def __init__(self, q: ArrayLike, r: ArrayLike) -> None:
		self.q = np.atleast_2d(np.asarray(q, dtype=np.float64))
		self.r = np.atleast_2d(np.asarray(r, dtype=np.float64))
		if self.q.shape[0] != self.q.shape[1] or self.r.shape[0] != self.r.shape[1]:
			raise InvalidArgumentError("Q and R must be square")
		self.state_dim = int(self.q.shape[0])
		self.control_dim = int(self.r.shape[0])

	def value(self, t: int, x: Vector, u: Vector) -> float:
		return float(0.5 * x @ self.q @ x + 0.5 * u @ self.r @ u)

	def value_batch(self, states: np.ndarray, controls: np.ndarray) -> np.ndarray:
		return 0.5 * np.einsum("...i,ij,...j->...", states, self.q, states) + 0.5 * np.einsum(
			"...i,ij,...j->...", controls, self.r, controls
		)

	def derivatives(self, t: int, x: Vector, u: Vector) -> StageDerivatives:
		q_sym = 0.5 * (self.q + self.q.T)
		r_sym = 0.5 * (self.r + self.r.T)
		return StageDerivatives(
			l_x=q_sym @ x,
			l_u=r_sym @ u,
			l_xx=q_sym,
			l_ux=np.zeros((self.control_dim, self.state_dim)),
			l_uu=r_sym,
		)


class QuadraticFinalCost(FinalCost):
	"""l_f(x) = 1/2 (x - x_ref)'P(x - x_ref)."""

	def __init__(self, p: ArrayLike, reference: Optional[ArrayLike] = None) -> None:
		self.p = np.atleast_2d(np.asarray(p, dtype=np.float64))
		if self.p.shape[0] != self.p.shape[1]:
			raise InvalidArgumentError("P must be square")
		self.state_dim = int(self.p.shape[0])
		self.reference = np.zeros(self.state_dim) if reference is None else as_vector(reference, "reference")

	def value(self, x: Vector) -> float:
		error = x - self.reference
		return float(0.5 * error @ self.p @ error)

	def value_batch(self, states: np.ndarray) -> np.ndarray:
		error = states - self.reference
		return 0.5 * np.einsum("...i,ij,...j->...", error, self.p, error)

	def derivatives(self, x: Vector) -> FinalDerivatives:
		p_sym = 0.5 * (self.p + self.p.T)
		return FinalDerivatives(l_x=p_sym @ (x - self.reference), l_xx=p_sym)


class CorridorTrackingCost(StageCost):
	"""Base stage cost plus (p_t - c_t)' Q (p_t - c_t), Q diagonal over position dims."""

	def __init__(self, base: StageCost, centers: np.ndarray, weight: Weight, position_indices: Sequence[int]) -> None:
		self.base = base
		self.state_dim = base.state_dim
		self.control_dim = base.control_dim
		self.position_indices = list(position_indices)
		self.centers = np.asarray(centers, dtype=np.float64)
		if self.centers.ndim != 2 or self.centers.shape[1] != len(self.position_indices):
			raise InvalidArgumentError(
				f"centers must have shape (T, {len(self.position_indices)}), got {self.centers.shape}"
			)
		self.weight = _diagonal_weight(weight, len(self.position_indices), "corridor weight")

	def value(self, t: int, x: Vector, u: Vector) -> float:
		error = x[self.position_indices] - self.centers[t]
		return self.base.value(t, x, u) + float(np.dot(self.weight, error * error))

	def value_batch(self, states: np.ndarray, controls: np.ndarray) -> np.ndarray:
		error = states[..., self.position_indices] - self.centers
		return self.base.value_batch(states, controls) + np.sum(self.weight * error * error, axis=-1)

	def derivatives(self, t: int, x: Vector, u: Vector) -> StageDerivatives:
		base = self.base.derivatives(t, x, u)
		error = x[self.position_indices] - self.centers[t]
		l_x = base.l_x.copy()
		l_xx = base.l_xx.copy()
		l_x[self.position_indices] += 2.0 * self.weight * error
		l_xx[self.position_indices, self.position_indices] += 2.0 * self.weight
		return base._replace(l_x=l_x, l_xx=l_xx)


def trajectory_cost(stage_cost: StageCost, final_cost: FinalCost, states: np.ndarray, controls: np.ndarray) -> float:
	"""Total cost sum_t l_t(x_t, u_t) + l_f(x_T) of one trajectory."""
	running = float(np.sum(stage_cost.value_batch(states[:-1], controls))) if controls.shape[0] else 0.0
	return running + final_cost.value(states[-1])
