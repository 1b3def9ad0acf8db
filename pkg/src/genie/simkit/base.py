"""Adapter contract: translate / execute / parse / estimate, plus registry.

Each adapter turns engine-level parameters into a simulator configuration
record (serialized per job for debuggability), runs the synthetic model,
and hands results back as grid fields.  Estimates come from the adapter's
cost/accuracy model without running anything.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import SimError
from ..gridstore.field import GridField
from ..gridstore.geometry import BBox, Domain, TimeInterval


@dataclass
class SimRequest:
    domain: Domain
    extent: list[BBox]
    interval: TimeInterval
    params: dict[str, float | int]      # this simulator's resolved parameters
    attribute: tuple[str, str] = ("", "")
    inputs: dict[tuple[str, str], GridField] = field(default_factory=dict)
    seed: int = 0

    @property
    def spatial_res(self) -> float:
        return float(self.params["spatial_res"])

    @property
    def temporal_res(self) -> float:
        return float(self.params["temporal_res"])

    def extent_area_deg2(self) -> float:
        return sum(b.area_deg2 for b in self.extent)

    def bounding_box(self) -> BBox:
        return BBox(min(b.lat_min for b in self.extent),
                    max(b.lat_max for b in self.extent),
                    min(b.lon_min for b in self.extent),
                    max(b.lon_max for b in self.extent))


@dataclass
class SimResult:
    fields: list[GridField]             # one per extent box
    runtime_s: float
    provenance: dict
    diagnostics: dict = field(default_factory=dict)


def param_signature(simulator: str, params: dict) -> str:
    parts = ",".join(f"{k}={params[k]}" for k in sorted(params))
    return f"{simulator}({parts})"


def job_seed(base_seed: int, simulator: str, box: BBox, interval: TimeInterval,
             params: dict) -> int:
    """Deterministic per-job seed independent of worker scheduling."""
    key = f"{base_seed}|{simulator}|{box.as_tuple()}|{interval.start}|{interval.end}|" \
          + param_signature(simulator, params)
    h = 1469598103934665603
    for ch in key.encode():
        h = ((h ^ ch) * 1099511628211) & 0xFFFFFFFFFFFFFFFF
    return h & 0x7FFFFFFFFFFFFFFF


class Adapter:
    """Base adapter; subclasses set adapter_id and implement run()."""

    adapter_id = "base"
    output_attribute_hint: str | None = None

    #: candidate domains handed to the catalog at registration, coarse->fine
    candidates: dict[str, tuple] = {
        "spatial_res": (0.5, 0.2, 0.1, 0.05, 0.02, 0.01),
        "temporal_res": (6.0, 3.0, 1.0, 0.5, 0.25),
    }

    def parameter_candidates(self, name: str):
        return self.candidates.get(name)

    def translate(self, request: SimRequest) -> dict:
        """Engine parameters -> simulator configuration record."""
        raise NotImplementedError

    def run(self, request: SimRequest, config: dict) -> SimResult:
        raise NotImplementedError

    def estimate(self, params: dict, extent_area_deg2: float,
                 interval: TimeInterval) -> tuple[float, float]:
        raise NotImplementedError

    def execute(self, request: SimRequest, config_dir: Path | None = None) -> SimResult:
        config = self.translate(request)
        if config_dir is not None:
            write_config_record(config_dir, self.adapter_id, config)
        t0 = time.perf_counter()
        result = self.run(request, config)
        result.runtime_s = time.perf_counter() - t0
        return result


def write_config_record(config_dir: Path, adapter_id: str, config: dict) -> Path:
    """One control record per job, in a line-oriented text format."""
    config_dir.mkdir(parents=True, exist_ok=True)
    stamp = f"{time.time_ns():x}"
    path = config_dir / f"{adapter_id}-{stamp}.control"
    lines = [f"adapter {adapter_id}"]
    for key in sorted(config):
        lines.append(f"{key} {json.dumps(config[key], sort_keys=True)}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


class AdapterRegistry(dict):
    def register(self, adapter: Adapter) -> Adapter:
        self[adapter.adapter_id] = adapter
        return adapter

    def get_or_raise(self, adapter_id: str) -> Adapter:
        if adapter_id not in self:
            raise SimError(f"unknown adapter {adapter_id!r}")
        return self[adapter_id]
