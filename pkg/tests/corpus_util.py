"""Shared access to the bundled SQL corpus for tests."""

from functools import lru_cache
from importlib import resources

from genie.qlang import parse

CORPUS_FILES = (
    "register_and_declare.sql",
    "ensemble_declaration.sql",
    "station_average.sql",
    "fire_dependency.sql",
    "wildfire_schema.sql",
    "station_impact.sql",
    "progressive_steps.sql",
    "hurricane_schema.sql",
    "hurricane_assessment.sql",
)


@lru_cache(maxsize=None)
def corpus_text(name: str) -> str:
    return (resources.files("genie") / "data" / "corpus" / name).read_text()


def corpus_scripts() -> dict:
    return {name: parse(corpus_text(name)) for name in CORPUS_FILES}
