"""
Derivative-free variational-inference machinery: Gaussian perturbations,
exponentiated-cost weights, weighted moments and projection operators.
"""
import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from app.core.errors import InvalidArgumentError, NoFeasibleSampleError
from app.core.types import ArrayLike, Matrix, RandomKey, Vector, as_vector

logger = logging.getLogger(__name__)

PSD_TOLERANCE = 1e-12
WEIGHT_TOLERANCE = 1e-12


def make_generator(key: RandomKey) -> np.random.Generator:
	"""Counter-based Philox generator keyed by a tuple of non-negative integers."""
	entropy = [int(key)] if isinstance(key, (int, np.integer)) else [int(k) for k in key]
	if any(k < 0 for k in entropy):
		raise InvalidArgumentError(f"random keys must be non-negative, got {entropy}")
	return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


@dataclass(frozen=True)
class GaussianPolicy:
	mean: Vector
	covariance: Matrix

	def __post_init__(self) -> None:
		mean = as_vector(self.mean, "mean")
		covariance = np.asarray(self.covariance, dtype=np.float64)
		if covariance.ndim == 1:
			covariance = np.diag(covariance)
		if covariance.shape != (mean.shape[0], mean.shape[0]):
			raise InvalidArgumentError(
				f"covariance shape {covariance.shape} does not match mean dimension {mean.shape[0]}"
			)
		object.__setattr__(self, "mean", mean)
		object.__setattr__(self, "covariance", covariance)

	@property
	def dimension(self) -> int:
		return int(self.mean.shape[0])

	def factor(self) -> Matrix:
		"""Square-root factor L with L L^T = covariance; rejects non-PSD input."""
		cov = self.covariance
		if not np.allclose(cov, cov.T, atol=PSD_TOLERANCE, rtol=0.0):
			raise InvalidArgumentError("covariance must be symmetric")
		diagonal = np.diag(cov)
		if np.count_nonzero(cov - np.diag(diagonal)) == 0:
			if np.any(diagonal < 0.0):
				raise InvalidArgumentError("covariance diagonal must be non-negative")
			return np.diag(np.sqrt(diagonal))
		eigenvalues, eigenvectors = np.linalg.eigh(cov)
		if eigenvalues.min() < -PSD_TOLERANCE * max(1.0, abs(eigenvalues.max())):
			raise InvalidArgumentError("covariance must be positive semidefinite")
		return eigenvectors * np.sqrt(np.clip(eigenvalues, 0.0, None))


@dataclass(frozen=True)
class WeightedSamples:
	samples: np.ndarray
	weights: Vector

	def __post_init__(self) -> None:
		samples = np.asarray(self.samples, dtype=np.float64)
		if samples.ndim == 1:
			samples = samples.reshape(-1, 1)
		weights = as_vector(self.weights, "weights")
		if samples.shape[0] < 1 or samples.shape[0] != weights.shape[0]:
			raise InvalidArgumentError(
				f"need N >= 1 samples matching N weights, got {samples.shape[0]} and {weights.shape[0]}"
			)
		if np.any(weights < 0.0) or abs(float(np.sum(weights)) - 1.0) > WEIGHT_TOLERANCE:
			raise InvalidArgumentError("weights must be non-negative and sum to 1")
		object.__setattr__(self, "samples", samples)
		object.__setattr__(self, "weights", weights)


def sample_perturbations(policy: GaussianPolicy, count: int, seed: RandomKey) -> np.ndarray:
	"""Draw `count` samples mean + eps, eps ~ N(0, covariance); rows are samples."""
	if count < 1:
		raise InvalidArgumentError(f"count must be >= 1, got {count}")
	factor = policy.factor()
	noise = make_generator(seed).standard_normal((count, policy.dimension))
	return policy.mean + noise @ factor.T


def softmax_weights(costs: ArrayLike, gamma: float) -> Vector:
	"""Normalized exp(-gamma (J_i - min J)); infinite costs get exactly zero weight."""
	if not gamma > 0.0:
		raise InvalidArgumentError(f"inverse temperature must be positive, got {gamma}")
	values = np.asarray(costs, dtype=np.float64).reshape(-1)
	if np.any(np.isnan(values)):
		raise InvalidArgumentError("costs must not contain NaN")
	finite = np.isfinite(values)
	if not np.any(finite):
		raise NoFeasibleSampleError("all sample costs are infinite")
	weights = np.zeros_like(values)
	shifted = values[finite] - values[finite].min()
	weights[finite] = np.exp(-gamma * shifted)
	return weights / np.sum(weights)


def softmax_weights_rows(costs: np.ndarray, gamma: float) -> Tuple[np.ndarray, np.ndarray]:
	"""Row-wise softmax_weights for a (B, N) cost table.

	Returns (weights, feasible_rows); rows without a finite cost get all-zero
	weights and feasible_rows[b] == False.
	"""
	finite = np.isfinite(costs)
	feasible_rows = np.any(finite, axis=1)
	baseline = np.min(np.where(finite, costs, np.inf), axis=1, keepdims=True)
	baseline = np.where(np.isfinite(baseline), baseline, 0.0)
	weights = np.where(finite, np.exp(-gamma * (np.where(finite, costs, 0.0) - baseline)), 0.0)
	totals = np.sum(weights, axis=1, keepdims=True)
	weights = np.divide(weights, totals, out=np.zeros_like(weights), where=totals > 0.0)
	return weights, feasible_rows


def weighted_mean(ws: WeightedSamples) -> Vector:
	return ws.weights @ ws.samples


def weighted_covariance(ws: WeightedSamples, mean: ArrayLike) -> Matrix:
	center = as_vector(mean, "mean")
	if center.shape[0] != ws.samples.shape[1]:
		raise InvalidArgumentError("mean dimension does not match the samples")
	deviations = ws.samples - center
	covariance = (deviations * ws.weights[:, None]).T @ deviations
	return 0.5 * (covariance + covariance.T)


class Projection(ABC):
	"""Euclidean projection onto a closed convex set, applied over the last axis."""

	dimension: int

	@abstractmethod
	def apply(self, u: np.ndarray) -> np.ndarray:
		"""Project validated input of shape (..., dimension)."""

	def __call__(self, u: ArrayLike) -> np.ndarray:
		array = np.asarray(u, dtype=np.float64)
		if array.ndim == 0 or array.shape[-1] == 0:
			raise InvalidArgumentError("cannot project a zero-dimensional input")
		if array.shape[-1] != self.dimension:
			raise InvalidArgumentError(
				f"projection expects dimension {self.dimension}, got {array.shape[-1]}"
			)
		return self.apply(array)


class BoxProjection(Projection):
	def __init__(self, lower: ArrayLike, upper: ArrayLike) -> None:
		self.lower = as_vector(lower, "lower")
		self.upper = as_vector(upper, "upper")
		if self.lower.shape != self.upper.shape or np.any(self.lower > self.upper):
			raise InvalidArgumentError("box projection needs lower <= upper with equal shapes")
		self.dimension = int(self.lower.shape[0])

	def apply(self, u: np.ndarray) -> np.ndarray:
		return np.clip(u, self.lower, self.upper)


class BallProjection(Projection):
	def __init__(self, center: ArrayLike, radius: float) -> None:
		self.center = as_vector(center, "center")
		if not radius >= 0.0:
			raise InvalidArgumentError(f"ball radius must be >= 0, got {radius}")
		self.radius = float(radius)
		self.dimension = int(self.center.shape[0])

	def apply(self, u: np.ndarray) -> np.ndarray:
		offset = u - self.center
		norm = np.linalg.norm(offset, axis=-1, keepdims=True)
		scale = np.divide(self.radius, norm, out=np.ones_like(norm), where=norm > self.radius)
		return self.center + offset * scale


class SecondOrderConeProjection(Projection):
	"""Cone {(v, s) : ||v|| <= s tan(phi)} on u = (v, s), s the last entry.

	phi = 45 degrees is the standard cone ||v|| <= s. An optional cap
	additionally scales the result radially into ||u|| <= cap; radial scaling
	keeps cone membership, so the composition is the exact projection.
	"""

	def __init__(self, dimension: int, half_angle: float = math.pi / 4.0, cap: Optional[float] = None) -> None:
		if dimension < 2:
			raise InvalidArgumentError("cone projection needs at least two components")
		if not 0.0 < half_angle < math.pi / 2.0:
			raise InvalidArgumentError(f"cone half-angle must lie in (0, pi/2), got {half_angle}")
		if cap is not None and not cap > 0.0:
			raise InvalidArgumentError(f"norm cap must be positive, got {cap}")
		self.dimension = int(dimension)
		self.half_angle = float(half_angle)
		self.slope = math.tan(self.half_angle)
		self.cap = None if cap is None else float(cap)

	def apply(self, u: np.ndarray) -> np.ndarray:
		v = u[..., :-1]
		s = u[..., -1]
		norm_v = np.linalg.norm(v, axis=-1)
		inside = norm_v <= s * self.slope
		polar = self.slope * norm_v <= -s
		lam = (self.slope * norm_v + s) / (self.slope ** 2 + 1.0)
		safe_norm = np.where(norm_v > 0.0, norm_v, 1.0)
		projected = np.concatenate(
			[(lam * self.slope / safe_norm)[..., None] * v, lam[..., None]],
			axis=-1,
		)
		out = np.where(inside[..., None], u, np.where(polar[..., None], 0.0, projected))
		if self.cap is not None:
			norm = np.linalg.norm(out, axis=-1, keepdims=True)
			scale = np.divide(self.cap, norm, out=np.ones_like(norm), where=norm > self.cap)
			out = out * scale
		return out


class CompositeProjection(Projection):
	"""Independent projections on consecutive blocks of the vector."""

	def __init__(self, blocks: Sequence[Projection]) -> None:
		if not blocks:
			raise InvalidArgumentError("composite projection needs at least one block")
		self.blocks = list(blocks)
		self.dimension = sum(block.dimension for block in self.blocks)

	def apply(self, u: np.ndarray) -> np.ndarray:
		parts = []
		start = 0
		for block in self.blocks:
			parts.append(block.apply(u[..., start:start + block.dimension]))
			start += block.dimension
		return np.concatenate(parts, axis=-1)


class IdentityProjection(Projection):
	def __init__(self, dimension: int) -> None:
		self.dimension = int(dimension)

	def apply(self, u: np.ndarray) -> np.ndarray:
		return u.copy()


def project(op: Projection, u: ArrayLike) -> np.ndarray:
	return op(u)
