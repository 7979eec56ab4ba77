"""Specification files for the worked examples shipped with the package."""

from __future__ import annotations

import json
from importlib import resources

NAMES = ("ex5_1", "ex5_2", "ex7_1", "ex7_2", "ex7_3", "ex7_4", "ex7_5", "ex7_6", "ex7_7", "ex7_8")


def fixture_path(name: str):
    """Path-like handle of a shipped specification file."""
    return resources.files(__name__).joinpath(f"{name}.json")


def load_fixture(name: str):
    """Parse a shipped specification into a ``SpecFile``."""
    from ..specfile import spec_from_dict

    if name not in NAMES:
        raise KeyError(f"unknown fixture {name!r}")
    data = json.loads(fixture_path(name).read_text())
    return spec_from_dict(data, name)
