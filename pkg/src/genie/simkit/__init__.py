"""Simulator adapters: uniform contract plus the built-in synthetic models."""

from .base import (Adapter, AdapterRegistry, SimRequest, SimResult, job_seed,
                   param_signature, write_config_record)
from .costmodel import (accuracy_score, fire_estimate, plume_accuracy,
                        plume_estimate, puff_estimate)
from .fire import FireAdapter
from .plume import PlumeAdapter
from .puff import PuffAdapter
from .scenario import Scenario, build_adapters, demo_domain, load_scenario, scenario_dir
from .wind import GriddedWind, UniformWind

__all__ = [
    "Adapter", "AdapterRegistry", "SimRequest", "SimResult", "FireAdapter",
    "PlumeAdapter", "PuffAdapter", "GriddedWind", "UniformWind", "Scenario",
    "load_scenario", "build_adapters", "demo_domain", "scenario_dir",
    "accuracy_score", "plume_estimate", "fire_estimate", "puff_estimate",
    "plume_accuracy", "param_signature", "job_seed", "write_config_record",
]
