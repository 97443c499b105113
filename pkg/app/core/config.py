import os
import logging
from typing import Optional

# Load .env if python-dotenv is available
try:
	from dotenv import load_dotenv  # type: ignore
	load_dotenv()
except Exception:
	# If python-dotenv is not installed, ignore silently
	pass


LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"


def _normalize_log_level(raw_level: Optional[str]) -> int:
	"""Map a level name (or number) from the environment to a logging level."""
	if not raw_level:
		return logging.WARNING
	value = raw_level.strip().upper()
	if value.isdigit():
		return int(value)
	level = logging.getLevelName(value)
	return level if isinstance(level, int) else logging.WARNING


def setup_logging(level: Optional[int] = None) -> None:
	"""Setup logging configuration."""
	if level is None:
		level = _normalize_log_level(os.getenv("MPPI_IPDDP_LOG"))
	logging.basicConfig(
		level=level,
		format=LOG_FORMAT,
		handlers=[
			logging.StreamHandler(),
		]
	)
	logging.getLogger().setLevel(level)


class Settings:
	def __init__(self) -> None:
		self.LOG_LEVEL = _normalize_log_level(os.getenv("MPPI_IPDDP_LOG"))

		# Worker pool sizing; results never depend on it
		default_threads = os.cpu_count() or 1
		self.PLANNER_THREADS = max(1, int(os.getenv("PLANNER_THREADS", str(default_threads))))

		# Samples per MPPI evaluation chunk; fixes the random stream layout
		self.SAMPLE_CHUNK_SIZE = max(1, int(os.getenv("SAMPLE_CHUNK_SIZE", "512")))

		# Filesystem
		self.OUTPUT_DIR = os.getenv("OUTPUT_DIR", "./out")
		self.SCENARIO_DIR = os.getenv("SCENARIO_DIR", "")


# Setup logging when module is imported
setup_logging()
settings = Settings()
