"""Engine configuration and its key-value file format.

The config file is plain ``key = value`` lines; ``#`` starts a comment.
Dotted keys group related settings.  Unknown keys are rejected so typos
surface early.

    # demo config
    scenario = demo                 # or a directory with scenario CSVs
    data_dir = ./genie-data
    mode = adaptive                 # adaptive | heuristic | static_high | static_low
    workers = 4
    seed = 1
    port = 8400
    warm_start_budget_s = 0
    auto_epoch3 = true
    strict_signature = false
    answer_row_cap = 20000
    floor.overview = 0.85
    floor.regional = 0.90
    floor.point = 0.95
    refine_threshold.default = 50
    refine_threshold.smoke_dispersion.concentration = 50
    ingest.monitoring_stations = stations.csv   # relative to scenario dir
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from ..errors import GenieError

MODES = ("adaptive", "heuristic", "static_high", "static_low")


@dataclass
class EngineConfig:
    scenario: str = "demo"
    data_dir: str | None = None
    mode: str = "adaptive"
    workers: int = 4
    seed: int = 1
    port: int = 8400
    warm_start_budget_s: float = 0.0
    auto_epoch3: bool = True
    strict_signature: bool = False
    answer_row_cap: int = 20000
    floors: dict = field(default_factory=lambda: {"overview": 0.85,
                                                  "regional": 0.90,
                                                  "point": 0.95})
    refine_thresholds: dict = field(default_factory=dict)   # "table.column" -> value
    refine_threshold_default: float = 50.0
    ingest: dict = field(default_factory=lambda: {
        "monitoring_stations": "stations.csv"})

    def __post_init__(self):
        if self.mode not in MODES:
            raise GenieError(f"mode must be one of {MODES}")
        if self.warm_start_budget_s < 0:
            raise GenieError("warm_start_budget_s must be >= 0")
        if self.workers < 1:
            raise GenieError("workers must be >= 1")

    def threshold_for(self, attribute: tuple[str, str]) -> float:
        key = f"{attribute[0]}.{attribute[1]}"
        return float(self.refine_thresholds.get(key, self.refine_threshold_default))


def _parse_value(raw: str):
    raw = raw.strip()
    low = raw.lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    try:
        return int(raw)
    except ValueError:
        pass
    try:
        return float(raw)
    except ValueError:
        return raw


def load_config(path: str | Path) -> EngineConfig:
    cfg = EngineConfig()
    base = Path(path).parent
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise GenieError(f"{path}:{lineno}: expected 'key = value'")
        key, raw = (s.strip() for s in line.split("=", 1))
        value = _parse_value(raw)
        if key == "scenario":
            if str(value) == "demo":
                cfg.scenario = "demo"
            else:
                p = Path(str(value))
                cfg.scenario = str(p if p.is_absolute() else (base / p).resolve())
        elif key == "data_dir":
            p = Path(str(value))
            cfg.data_dir = str(p if p.is_absolute() else (base / p).resolve())
        elif key in ("mode", "workers", "seed", "port", "warm_start_budget_s",
                     "auto_epoch3", "strict_signature", "answer_row_cap"):
            setattr(cfg, key, value)
        elif key.startswith("floor."):
            cfg.floors[key.split(".", 1)[1]] = float(value)
        elif key == "refine_threshold.default":
            cfg.refine_threshold_default = float(value)
        elif key.startswith("refine_threshold."):
            cfg.refine_thresholds[key.split(".", 1)[1]] = float(value)
        elif key.startswith("ingest."):
            cfg.ingest[key.split(".", 1)[1]] = str(value)
        else:
            raise GenieError(f"{path}:{lineno}: unknown config key {key!r}")
    cfg.__post_init__()
    return cfg
