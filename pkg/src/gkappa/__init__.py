"""Hierarchical rule-based models: parsing, compilation to concrete rules, simulation."""

from importlib import resources
from pathlib import Path

from .compiler import ResolvedModel, emit_json, emit_text, resolve_model
from .diagnostics import Diagnostic, ModelError
from .engine import Activity, SimConfig, Simulator, Trajectory, activities, simulate, sweep
from .hierarchy import Hierarchy, build_hierarchy, hierarchy_from_model
from .sitegraph import Mixture, apply, embeddings, init_mixture
from .syntax import ModelAST, parse_model, unparse

__all__ = [
    "Activity", "Diagnostic", "Hierarchy", "Mixture", "ModelAST", "ModelError", "ResolvedModel",
    "SimConfig", "Simulator", "Trajectory", "activities", "apply", "build_hierarchy", "embeddings",
    "emit_json", "emit_text", "example_path", "hierarchy_from_model", "init_mixture", "load_example",
    "parse_model", "resolve_model", "simulate", "sweep", "unparse",
]


def example_path(name: str) -> Path:
    """Path of a bundled model, e.g. ``example_path("shc")``."""
    if not name.endswith(".gka"):
        name += ".gka"
    path = Path(str(resources.files(__package__) / "models" / name))
    if not path.exists():
        raise FileNotFoundError(f"no bundled model {name!r}")
    return path


def load_example(name: str) -> ModelAST:
    path = example_path(name)
    return parse_model(path.read_text(), str(path))
