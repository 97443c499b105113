"""
Discrete-time dynamics models, their Jacobians and rollouts.

All models are explicit-Euler discretizations; headings are never wrapped.
"""
import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from app.core.constants import FD_STEP, GRAVITY
from app.core.errors import InvalidArgumentError
from app.core.types import ArrayLike, Matrix, Vector, as_vector

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Trajectory:
	"""States (T+1, n) paired with controls (T, m)."""

	states: np.ndarray
	controls: np.ndarray

	def __post_init__(self) -> None:
		states = np.atleast_2d(np.asarray(self.states, dtype=np.float64))
		controls = np.asarray(self.controls, dtype=np.float64)
		if controls.ndim == 1:
			controls = controls.reshape(0, 0) if controls.size == 0 else controls.reshape(-1, 1)
		if states.shape[0] != controls.shape[0] + 1:
			raise InvalidArgumentError(
				f"trajectory needs len(states) == len(controls) + 1, got {states.shape[0]} and {controls.shape[0]}"
			)
		object.__setattr__(self, "states", states)
		object.__setattr__(self, "controls", controls)

	@property
	def horizon(self) -> int:
		return int(self.controls.shape[0])


class DynamicsModel(ABC):
	"""x_{t+1} = f(x_t, u_t) with analytic Jacobians."""

	state_dim: int
	control_dim: int
	position_indices: Tuple[int, ...]

	def _validate_indices(self) -> None:
		indices = tuple(int(i) for i in self.position_indices)
		if len(set(indices)) != len(indices) or any(i < 0 or i >= self.state_dim for i in indices):
			raise InvalidArgumentError(f"invalid position indices {indices} for state dimension {self.state_dim}")
		self.position_indices = indices

	def check(self, x: ArrayLike, u: ArrayLike) -> Tuple[Vector, Vector]:
		state = np.asarray(x, dtype=np.float64)
		control = np.asarray(u, dtype=np.float64)
		if state.shape[-1:] != (self.state_dim,):
			raise InvalidArgumentError(f"state must have dimension {self.state_dim}, got shape {state.shape}")
		if control.shape[-1:] != (self.control_dim,):
			raise InvalidArgumentError(f"control must have dimension {self.control_dim}, got shape {control.shape}")
		return state, control

	def positions(self, states: np.ndarray) -> np.ndarray:
		return np.asarray(states)[..., list(self.position_indices)]

	@property
	def state_names(self) -> Tuple[str, ...]:
		return tuple(f"x{i}" for i in range(self.state_dim))

	@property
	def control_names(self) -> Tuple[str, ...]:
		return tuple(f"u{i}" for i in range(self.control_dim))

	@abstractmethod
	def step_batch(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
		"""Vectorized step over leading axes; inputs are already validated."""

	@abstractmethod
	def jacobians(self, x: Vector, u: Vector) -> Tuple[Matrix, Matrix]:
		"""Analytic (f_x, f_u) at a validated point."""

	def step(self, x: ArrayLike, u: ArrayLike) -> Vector:
		state, control = self.check(x, u)
		return self.step_batch(state, control)

	def linearize(self, x: ArrayLike, u: ArrayLike) -> Tuple[Matrix, Matrix]:
		state, control = self.check(x, u)
		if state.ndim != 1 or control.ndim != 1:
			raise InvalidArgumentError("linearize expects a single state and control")
		return self.jacobians(state, control)

	def second_order_terms(self, x: Vector, u: Vector, weight: Vector, eps: float = FD_STEP) -> Tuple[Matrix, Matrix, Matrix]:
		"""Contract the dynamics Hessian tensor with `weight`: sum_i w_i * d2 f_i.

		Computed by central differences of the analytic Jacobians. Returns
		(H_xx, H_ux, H_uu).
		"""
		n, m = self.state_dim, self.control_dim
		h_xx = np.zeros((n, n))
		h_ux = np.zeros((m, n))
		h_uu = np.zeros((m, m))
		for j in range(n):
			dx = np.zeros(n)
			dx[j] = eps
			fx_p, fu_p = self.jacobians(x + dx, u)
			fx_m, fu_m = self.jacobians(x - dx, u)
			h_xx[:, j] = weight @ (fx_p - fx_m) / (2.0 * eps)
			h_ux[:, j] = weight @ (fu_p - fu_m) / (2.0 * eps)
		for j in range(m):
			du = np.zeros(m)
			du[j] = eps
			_, fu_p = self.jacobians(x, u + du)
			_, fu_m = self.jacobians(x, u - du)
			h_uu[:, j] = weight @ (fu_p - fu_m) / (2.0 * eps)
		return 0.5 * (h_xx + h_xx.T), h_ux, 0.5 * (h_uu + h_uu.T)


class DiffDrive(DynamicsModel):
	"""Unicycle kinematics, state (x, y, theta), control (v, w)."""

	state_dim = 3
	control_dim = 2

	def __init__(self, dt: float) -> None:
		if not dt > 0.0:
			raise InvalidArgumentError(f"dt must be positive, got {dt}")
		self.dt = float(dt)
		self.position_indices = (0, 1)
		self._validate_indices()

	def step_batch(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
		theta = x[..., 2]
		v = u[..., 0]
		out = np.empty(np.broadcast_shapes(x.shape[:-1], u.shape[:-1]) + (3,))
		out[..., 0] = x[..., 0] + v * np.cos(theta) * self.dt
		out[..., 1] = x[..., 1] + v * np.sin(theta) * self.dt
		out[..., 2] = theta + u[..., 1] * self.dt
		return out

	def jacobians(self, x: Vector, u: Vector) -> Tuple[Matrix, Matrix]:
		theta, v, dt = x[2], u[0], self.dt
		f_x = np.eye(3)
		f_x[0, 2] = -v * np.sin(theta) * dt
		f_x[1, 2] = v * np.cos(theta) * dt
		f_u = np.zeros((3, 2))
		f_u[0, 0] = np.cos(theta) * dt
		f_u[1, 0] = np.sin(theta) * dt
		f_u[2, 1] = dt
		return f_x, f_u

	@property
	def state_names(self) -> Tuple[str, ...]:
		return ("x", "y", "theta")

	@property
	def control_names(self) -> Tuple[str, ...]:
		return ("v", "omega")


class PointMassQuadrotor(DynamicsModel):
	"""Point mass with acceleration input; state (position, velocity)."""

	state_dim = 6
	control_dim = 3

	def __init__(self, dt: float, gravity: float = GRAVITY) -> None:
		if not dt > 0.0:
			raise InvalidArgumentError(f"dt must be positive, got {dt}")
		self.dt = float(dt)
		self.gravity = float(gravity)
		self.position_indices = (0, 1, 2)
		self._validate_indices()
		self._gravity_vector = np.array([0.0, 0.0, self.gravity])

	def step_batch(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
		position = x[..., :3]
		velocity = x[..., 3:]
		return np.concatenate(
			[position + velocity * self.dt, velocity + (u - self._gravity_vector) * self.dt],
			axis=-1,
		)

	def jacobians(self, x: Vector, u: Vector) -> Tuple[Matrix, Matrix]:
		f_x = np.eye(6)
		f_x[:3, 3:] = self.dt * np.eye(3)
		f_u = np.zeros((6, 3))
		f_u[3:, :] = self.dt * np.eye(3)
		return f_x, f_u

	@property
	def state_names(self) -> Tuple[str, ...]:
		return ("px", "py", "pz", "vx", "vy", "vz")

	@property
	def control_names(self) -> Tuple[str, ...]:
		return ("ax", "ay", "az")


class LinearDynamics(DynamicsModel):
	"""x_{t+1} = A x_t + B u_t."""

	def __init__(self, a: ArrayLike, b: ArrayLike, position_indices: Sequence[int] = ()) -> None:
		self.a = np.atleast_2d(np.asarray(a, dtype=np.float64))
		self.b = np.atleast_2d(np.asarray(b, dtype=np.float64))
		if self.a.shape[0] != self.a.shape[1] or self.b.shape[0] != self.a.shape[0]:
			raise InvalidArgumentError(f"incompatible A {self.a.shape} and B {self.b.shape}")
		self.state_dim = int(self.a.shape[0])
		self.control_dim = int(self.b.shape[1])
		self.position_indices = tuple(position_indices)
		self._validate_indices()

	def step_batch(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
		return x @ self.a.T + u @ self.b.T

	def jacobians(self, x: Vector, u: Vector) -> Tuple[Matrix, Matrix]:
		return self.a.copy(), self.b.copy()


def step(model: DynamicsModel, x: ArrayLike, u: ArrayLike) -> Vector:
	return model.step(x, u)


def linearize(model: DynamicsModel, x: ArrayLike, u: ArrayLike) -> Tuple[Matrix, Matrix]:
	return model.linearize(x, u)


def rollout(model: DynamicsModel, x0: ArrayLike, controls: ArrayLike) -> Trajectory:
	"""Integrate the model forward from x0 under the control sequence."""
	start = as_vector(x0, "x0")
	sequence = as_control_sequence(model, controls)
	model.check(start, np.zeros(model.control_dim))
	states = np.empty((sequence.shape[0] + 1, model.state_dim))
	states[0] = start
	for t in range(sequence.shape[0]):
		states[t + 1] = model.step_batch(states[t], sequence[t])
	return Trajectory(states=states, controls=sequence)


def rollout_batch(model: DynamicsModel, x0: Vector, controls: np.ndarray) -> np.ndarray:
	"""Roll out N control sequences (N, T, m) from a shared x0; returns (N, T+1, n)."""
	count, horizon = controls.shape[0], controls.shape[1]
	states = np.empty((count, horizon + 1, model.state_dim))
	states[:, 0, :] = x0
	for t in range(horizon):
		states[:, t + 1, :] = model.step_batch(states[:, t, :], controls[:, t, :])
	return states


def as_control_sequence(model: DynamicsModel, controls: ArrayLike) -> np.ndarray:
	"""Coerce controls to shape (T, m), accepting (T,) when m == 1."""
	sequence = np.asarray(controls, dtype=np.float64)
	if sequence.size == 0:
		return np.zeros((0, model.control_dim))
	if sequence.ndim == 1 and model.control_dim == 1:
		sequence = sequence.reshape(-1, 1)
	if sequence.ndim != 2 or sequence.shape[1] != model.control_dim:
		raise InvalidArgumentError(
			f"controls must have shape (T, {model.control_dim}), got {sequence.shape}"
		)
	return sequence
