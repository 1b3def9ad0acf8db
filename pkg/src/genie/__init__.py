"""GenIE: a simulation-aware query engine.

Virtual table columns are produced on demand by registered simulators;
queries drive parameter-optimized, coverage-aware, progressively refined
simulator execution with systematic reuse of prior results.
"""

__version__ = "0.1.0"
