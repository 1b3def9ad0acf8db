"""Shared flat test domain for plume-physics oracles."""

from genie.gridstore import BBox, Domain, TimeInterval


def make_flat_domain() -> Domain:
    return Domain(BBox(0.0, 1.0, 10.0, 11.0),
                  TimeInterval.from_strings("2024-01-01", "2024-01-01 06:00"))
