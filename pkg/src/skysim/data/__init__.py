"""Bundled scenario files."""

from pathlib import Path


def bundled_scenario(name: str) -> Path:
    """Path to a bundled scenario (e.g. "case2")."""
    path = Path(__file__).parent / f"{name}.json"
    if not path.exists():
        raise FileNotFoundError(f"no bundled scenario named {name!r}")
    return path
