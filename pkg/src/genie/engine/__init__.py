"""Engine: execution, configuration, benchmarks, HTTP service."""

from .config import EngineConfig, load_config
from .core import Engine, EpochResult, Session

__all__ = ["Engine", "EngineConfig", "EpochResult", "Session", "load_config"]
