import numpy as np
import pytest

from genie.gridstore import BBox, Domain, TimeInterval


@pytest.fixture
def domain() -> Domain:
    return Domain(BBox(36.2, 37.7, -120.4, -117.9),
                  TimeInterval.from_strings("2024-08-15", "2024-08-18"))


@pytest.fixture
def small_domain() -> Domain:
    # 64 x 64 finest cells, 16 finest timesteps
    return Domain(BBox(0.0, 0.64, 10.0, 10.64),
                  TimeInterval.from_strings("2024-01-01", "2024-01-01 04:00"),
                  spatial_ladder=(0.16, 0.08, 0.04, 0.02, 0.01),
                  temporal_ladder=(1.0, 0.5, 0.25))


def rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(seed)
