"""Bundled scenario files."""

from importlib import resources
from pathlib import Path


def scenario_path(name: str) -> Path:
    """Filesystem path of a bundled scenario, e.g. ``reference`` or ``mini``."""
    resource = resources.files(__name__).joinpath(f"{name}_scenario.json")
    with resources.as_file(resource) as path:
        return Path(path)
