import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, List, Optional, TypeVar

from app.core.config import settings
from app.core.errors import InvalidArgumentError

logger = logging.getLogger(__name__)

T = TypeVar("T")


@dataclass(frozen=True)
class ChunkTask:
	"""A contiguous slice [start, stop) of a batch, identified by its index."""

	index: int
	start: int
	stop: int

	@property
	def size(self) -> int:
		return self.stop - self.start


def split_chunks(total: int, chunk_size: int) -> List[ChunkTask]:
	if total < 0 or chunk_size < 1:
		raise InvalidArgumentError(f"cannot split {total} items into chunks of {chunk_size}")
	count = math.ceil(total / chunk_size)
	return [
		ChunkTask(index, index * chunk_size, min(total, (index + 1) * chunk_size))
		for index in range(count)
	]


class WorkerPool:
	"""Thread pool that maps work over chunks and returns results in chunk order.

	The layout of chunks never depends on the number of threads, so callers that
	key their randomness by chunk index get identical results at any pool size.
	numpy releases the GIL inside its kernels, which is where the time goes.
	"""

	def __init__(self, threads: Optional[int] = None) -> None:
		self.threads = max(1, int(threads if threads is not None else settings.PLANNER_THREADS))
		self.executor: Optional[ThreadPoolExecutor] = None  # created lazily
		self._started = False

	def start(self) -> None:
		if self._started:
			return
		if self.threads > 1:
			self.executor = ThreadPoolExecutor(max_workers=self.threads, thread_name_prefix="planner")
		self._started = True
		logger.debug("worker pool started", extra={"threads": self.threads})

	def stop(self) -> None:
		if self.executor is not None:
			self.executor.shutdown(wait=True)
			self.executor = None
		self._started = False

	def resize(self, threads: int) -> None:
		if threads < 1:
			raise InvalidArgumentError(f"thread count must be >= 1, got {threads}")
		if threads == self.threads:
			return
		self.stop()
		self.threads = threads

	def __enter__(self) -> "WorkerPool":
		self.start()
		return self

	def __exit__(self, *exc_info: object) -> None:
		self.stop()

	def map_chunks(self, fn: Callable[[ChunkTask], T], tasks: List[ChunkTask]) -> List[T]:
		self.start()
		if self.executor is None or len(tasks) <= 1:
			return [fn(task) for task in tasks]
		return list(self.executor.map(fn, tasks))

	def map_batch(self, fn: Callable[[ChunkTask], T], total: int, chunk_size: Optional[int] = None) -> List[T]:
		size = chunk_size if chunk_size is not None else settings.SAMPLE_CHUNK_SIZE
		return self.map_chunks(fn, split_chunks(total, size))


_worker_pool: Optional[WorkerPool] = None


def get_worker_pool() -> WorkerPool:
	"""Get the shared worker pool, creating it if necessary."""
	global _worker_pool
	if _worker_pool is None:
		_worker_pool = WorkerPool()
	return _worker_pool


def set_worker_threads(threads: int) -> WorkerPool:
	pool = get_worker_pool()
	pool.resize(threads)
	return pool
