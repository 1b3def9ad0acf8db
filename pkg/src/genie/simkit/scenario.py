"""The bundled demo scenario: one large fire, 45 stations, 72 hours of wind.

The domain spans roughly 220 x 170 km with hourly rotating, sheared wind
so coarse transport steps accumulate real trajectory error.  Scenario
files are plain CSV (documented headers below) so alternative scenarios
can be dropped in.

stations.csv   station_id, lat, lon, station_name, station_type
ignitions.csv  fire_id, fire_name, lat, lon, start_time, duration, fire_intensity
wind.csv       hour, lat, lon, u, v   (complete node grid per hour, m/s)
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from ..gridstore.geometry import BBox, Domain, TimeInterval, parse_timestamp
from .base import AdapterRegistry
from .fire import FireAdapter
from .plume import PlumeAdapter
from .puff import PuffAdapter
from .wind import GriddedWind

DEMO_BBOX = BBox(36.2, 37.7, -120.4, -117.9)
DEMO_INTERVAL = ("2024-08-15 00:00", "2024-08-18 00:00")


@dataclass
class Scenario:
    root: Path
    domain: Domain
    wind: GriddedWind
    ignitions: list[dict]

    @property
    def stations_path(self) -> Path:
        return self.root / "stations.csv"

    @property
    def schema_path(self) -> Path:
        return self.root / "schema.sql"


def scenario_dir() -> Path:
    return Path(str(resources.files("genie") / "data" / "scenario"))


def demo_domain() -> Domain:
    return Domain(DEMO_BBOX, TimeInterval.from_strings(*DEMO_INTERVAL))


def load_scenario(root: str | Path | None = None) -> Scenario:
    root = Path(root) if root is not None else scenario_dir()
    domain = demo_domain()
    wind = GriddedWind.from_csv(root / "wind.csv", domain.interval.start)
    ignitions = []
    with open(root / "ignitions.csv", newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            ignitions.append({
                "fire_id": int(row["fire_id"]),
                "fire_name": row["fire_name"],
                "lat": float(row["lat"]),
                "lon": float(row["lon"]),
                "start_time": parse_timestamp(row["start_time"]),
                "duration": float(row["duration"]),
                "fire_intensity": float(row["fire_intensity"]),
            })
    return Scenario(root, domain, wind, ignitions)


def build_adapters(scenario: Scenario) -> AdapterRegistry:
    registry = AdapterRegistry()
    fire = FireAdapter(scenario.wind)
    fire.set_ignitions(scenario.ignitions)
    registry.register(fire)
    registry.register(PlumeAdapter(scenario.wind))
    registry.register(PuffAdapter(scenario.wind))
    return registry
