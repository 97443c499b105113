"""
Per-stage inequality constraints g_t(x, u) <= 0 for the smoothing problem.

Each constraint exposes values, Jacobians and the dual-weighted Hessian
sum_i y_i * d2 g_i, which enters the second-order Q-function terms.
"""
import logging
import math
from abc import ABC, abstractmethod
from typing import List, NamedTuple, Optional, Sequence

import numpy as np

from app.core.constants import CONE_NORM_EPS
from app.core.errors import InvalidArgumentError
from app.core.types import ArrayLike, Matrix, Vector, as_vector

logger = logging.getLogger(__name__)


class ConstraintJacobians(NamedTuple):
	g_x: Matrix
	g_u: Matrix


class ConstraintHessians(NamedTuple):
	h_xx: Matrix
	h_ux: Matrix
	h_uu: Matrix


class StageConstraint(ABC):
	state_dim: int
	control_dim: int
	count: int

	@abstractmethod
	def value(self, t: int, x: Vector, u: Vector) -> Vector:
		...

	@abstractmethod
	def jacobians(self, t: int, x: Vector, u: Vector) -> ConstraintJacobians:
		...

	def hessians(self, t: int, x: Vector, u: Vector, y: Vector) -> ConstraintHessians:
		"""Dual-weighted Hessians; zero for affine rows."""
		n, m = self.state_dim, self.control_dim
		return ConstraintHessians(np.zeros((n, n)), np.zeros((m, n)), np.zeros((m, m)))


def _finite_rows(lower: Optional[ArrayLike], upper: Optional[ArrayLike], dimension: int, name: str):
	lo = np.full(dimension, -np.inf) if lower is None else as_vector(lower, f"{name} lower")
	hi = np.full(dimension, np.inf) if upper is None else as_vector(upper, f"{name} upper")
	if lo.shape != (dimension,) or hi.shape != (dimension,):
		raise InvalidArgumentError(f"{name} bounds must have {dimension} entries")
	if np.any(lo > hi):
		raise InvalidArgumentError(f"{name} lower bound exceeds upper bound")
	lower_idx = np.flatnonzero(np.isfinite(lo))
	upper_idx = np.flatnonzero(np.isfinite(hi))
	return lo, hi, lower_idx, upper_idx


class StateBoxConstraint(StageConstraint):
	"""Rows lo_i - x_i <= 0 and x_i - hi_i <= 0 for every finite bound."""

	def __init__(self, lower: Optional[ArrayLike], upper: Optional[ArrayLike], state_dim: int, control_dim: int) -> None:
		self.state_dim = state_dim
		self.control_dim = control_dim
		self.lower, self.upper, self.lower_idx, self.upper_idx = _finite_rows(lower, upper, state_dim, "state")
		self.count = int(self.lower_idx.size + self.upper_idx.size)

	def state_values(self, states: np.ndarray) -> np.ndarray:
		"""Rows over the last axis of a state batch: (..., n) -> (..., count)."""
		return np.concatenate(
			[self.lower[self.lower_idx] - states[..., self.lower_idx], states[..., self.upper_idx] - self.upper[self.upper_idx]],
			axis=-1,
		)

	def value(self, t: int, x: Vector, u: Vector) -> Vector:
		return self.state_values(x)

	def jacobians(self, t: int, x: Vector, u: Vector) -> ConstraintJacobians:
		eye = np.eye(self.state_dim)
		g_x = np.vstack([-eye[self.lower_idx], eye[self.upper_idx]])
		return ConstraintJacobians(g_x, np.zeros((self.count, self.control_dim)))


class ControlBoxConstraint(StageConstraint):
	"""Rows lo_i - u_i <= 0 and u_i - hi_i <= 0 for every finite bound."""

	def __init__(self, lower: Optional[ArrayLike], upper: Optional[ArrayLike], state_dim: int, control_dim: int) -> None:
		self.state_dim = state_dim
		self.control_dim = control_dim
		self.lower, self.upper, self.lower_idx, self.upper_idx = _finite_rows(lower, upper, control_dim, "control")
		self.count = int(self.lower_idx.size + self.upper_idx.size)

	def value(self, t: int, x: Vector, u: Vector) -> Vector:
		return np.concatenate([self.lower[self.lower_idx] - u[self.lower_idx], u[self.upper_idx] - self.upper[self.upper_idx]])

	def jacobians(self, t: int, x: Vector, u: Vector) -> ConstraintJacobians:
		eye = np.eye(self.control_dim)
		g_u = np.vstack([-eye[self.lower_idx], eye[self.upper_idx]])
		return ConstraintJacobians(np.zeros((self.count, self.state_dim)), g_u)


class NormCapConstraint(StageConstraint):
	"""||u||^2 - cap^2 <= 0."""

	count = 1

	def __init__(self, cap: float, state_dim: int, control_dim: int) -> None:
		if not cap > 0.0:
			raise InvalidArgumentError(f"norm cap must be positive, got {cap}")
		self.cap = float(cap)
		self.state_dim = state_dim
		self.control_dim = control_dim

	def value(self, t: int, x: Vector, u: Vector) -> Vector:
		return np.array([float(u @ u) - self.cap ** 2])

	def jacobians(self, t: int, x: Vector, u: Vector) -> ConstraintJacobians:
		return ConstraintJacobians(np.zeros((1, self.state_dim)), 2.0 * u.reshape(1, -1))

	def hessians(self, t: int, x: Vector, u: Vector, y: Vector) -> ConstraintHessians:
		n, m = self.state_dim, self.control_dim
		return ConstraintHessians(np.zeros((n, n)), np.zeros((m, n)), 2.0 * y[0] * np.eye(m))


class ConeConstraint(StageConstraint):
	"""cos(phi) * sqrt(||u||^2 + eps^2) - u_z <= 0, u_z the last control entry.

	The eps smoothing keeps the row twice differentiable at u = 0; its feasible
	set lies inside the exact cone ||u|| cos(phi) <= u_z.
	"""

	count = 1

	def __init__(self, half_angle: float, state_dim: int, control_dim: int, eps: float = CONE_NORM_EPS) -> None:
		if not 0.0 < half_angle < math.pi / 2.0:
			raise InvalidArgumentError(f"cone half-angle must lie in (0, pi/2), got {half_angle}")
		self.cos_angle = math.cos(half_angle)
		self.eps = float(eps)
		self.state_dim = state_dim
		self.control_dim = control_dim

	def _smooth_norm(self, u: Vector) -> float:
		return math.sqrt(float(u @ u) + self.eps ** 2)

	def value(self, t: int, x: Vector, u: Vector) -> Vector:
		return np.array([self.cos_angle * self._smooth_norm(u) - u[-1]])

	def jacobians(self, t: int, x: Vector, u: Vector) -> ConstraintJacobians:
		g_u = self.cos_angle * u / self._smooth_norm(u)
		g_u[-1] -= 1.0
		return ConstraintJacobians(np.zeros((1, self.state_dim)), g_u.reshape(1, -1))

	def hessians(self, t: int, x: Vector, u: Vector, y: Vector) -> ConstraintHessians:
		n, m = self.state_dim, self.control_dim
		rho = self._smooth_norm(u)
		h_uu = self.cos_angle * (np.eye(m) / rho - np.outer(u, u) / rho ** 3)
		return ConstraintHessians(np.zeros((n, n)), np.zeros((m, n)), y[0] * h_uu)


class CorridorConstraint(StageConstraint):
	"""||p_t - c_t||^2 - r_t^2 <= 0 on the position entries of the state."""

	count = 1

	def __init__(
		self,
		centers: ArrayLike,
		radii: ArrayLike,
		position_indices: Sequence[int],
		state_dim: int,
		control_dim: int,
	) -> None:
		self.centers = np.asarray(centers, dtype=np.float64)
		self.radii = as_vector(radii, "radii")
		self.position_indices = list(position_indices)
		if self.centers.shape != (self.radii.shape[0], len(self.position_indices)):
			raise InvalidArgumentError(
				f"corridor centers {self.centers.shape} do not match {self.radii.shape[0]} radii"
			)
		self.state_dim = state_dim
		self.control_dim = control_dim

	def value(self, t: int, x: Vector, u: Vector) -> Vector:
		error = x[self.position_indices] - self.centers[t]
		return np.array([float(error @ error) - self.radii[t] ** 2])

	def jacobians(self, t: int, x: Vector, u: Vector) -> ConstraintJacobians:
		g_x = np.zeros((1, self.state_dim))
		g_x[0, self.position_indices] = 2.0 * (x[self.position_indices] - self.centers[t])
		return ConstraintJacobians(g_x, np.zeros((1, self.control_dim)))

	def hessians(self, t: int, x: Vector, u: Vector, y: Vector) -> ConstraintHessians:
		n, m = self.state_dim, self.control_dim
		h_xx = np.zeros((n, n))
		h_xx[self.position_indices, self.position_indices] = 2.0 * y[0]
		return ConstraintHessians(h_xx, np.zeros((m, n)), np.zeros((m, m)))


class StackedConstraint(StageConstraint):
	"""Row-wise concatenation of several constraints."""

	def __init__(self, parts: Sequence[StageConstraint], state_dim: int, control_dim: int) -> None:
		self.parts: List[StageConstraint] = [part for part in parts if part.count > 0]
		for part in self.parts:
			if part.state_dim != state_dim or part.control_dim != control_dim:
				raise InvalidArgumentError("stacked constraints must share state and control dimensions")
		self.state_dim = state_dim
		self.control_dim = control_dim
		self.offsets = np.cumsum([0] + [part.count for part in self.parts])
		self.count = int(self.offsets[-1])

	def value(self, t: int, x: Vector, u: Vector) -> Vector:
		if not self.parts:
			return np.zeros(0)
		return np.concatenate([part.value(t, x, u) for part in self.parts])

	def jacobians(self, t: int, x: Vector, u: Vector) -> ConstraintJacobians:
		if not self.parts:
			return ConstraintJacobians(np.zeros((0, self.state_dim)), np.zeros((0, self.control_dim)))
		blocks = [part.jacobians(t, x, u) for part in self.parts]
		return ConstraintJacobians(np.vstack([b.g_x for b in blocks]), np.vstack([b.g_u for b in blocks]))

	def hessians(self, t: int, x: Vector, u: Vector, y: Vector) -> ConstraintHessians:
		total = super().hessians(t, x, u, y)
		h_xx, h_ux, h_uu = total
		for index, part in enumerate(self.parts):
			block = part.hessians(t, x, u, y[self.offsets[index]:self.offsets[index + 1]])
			h_xx = h_xx + block.h_xx
			h_ux = h_ux + block.h_ux
			h_uu = h_uu + block.h_uu
		return ConstraintHessians(h_xx, h_ux, h_uu)
