"""Environment simulators and synthetic data."""
from __future__ import annotations

from .base import Environment, TableEnv, TableInstance
from .crossblock import CrossblockEnv, CrossblockInstance
from .maze import MazeEnv, MazeInstance
from .mapnav import MapEnv, MapInstance

ENVIRONMENTS = {
    "maze": (MazeEnv, MazeInstance),
    "crossblock": (CrossblockEnv, CrossblockInstance),
    "map": (MapEnv, MapInstance),
    "table": (TableEnv, TableInstance),
}


def make_env(kind: str, instance) -> Environment:
    try:
        cls, _ = ENVIRONMENTS[kind]
    except KeyError:
        raise ValueError(f"unknown environment kind {kind!r}") from None
    return cls(instance)


def instance_from_json(kind: str, obj):
    return ENVIRONMENTS[kind][1].from_json(obj)


__all__ = [
    "ENVIRONMENTS", "Environment", "TableEnv", "TableInstance", "MazeEnv", "MazeInstance",
    "CrossblockEnv", "CrossblockInstance", "MapEnv", "MapInstance", "make_env",
    "instance_from_json",
]
