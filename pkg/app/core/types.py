from typing import Sequence, Tuple, Union

import numpy as np
from numpy.typing import NDArray

from app.core.errors import InvalidArgumentError

Vector = NDArray[np.float64]
Matrix = NDArray[np.float64]
ArrayLike = Union[Sequence[float], NDArray[np.floating]]
RandomKey = Union[int, Sequence[int], Tuple[int, ...]]


def as_vector(value: ArrayLike, name: str = "vector") -> Vector:
	"""Convert to a contiguous 1-D float64 array."""
	array = np.asarray(value, dtype=np.float64)
	if array.ndim == 0:
		array = array.reshape(1)
	if array.ndim != 1:
		raise InvalidArgumentError(f"{name} must be one-dimensional, got shape {array.shape}")
	return np.ascontiguousarray(array)
