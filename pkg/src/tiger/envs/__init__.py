"""Cooperative benchmark environments behind a shared episodic interface."""

from .base import Env, StepResult, write_episode_trace
from .gather import GatherConfig, GatherEnv
from .tag import PlacementError, TagConfig, TagEnv

__all__ = [
    "Env",
    "StepResult",
    "write_episode_trace",
    "GatherConfig",
    "GatherEnv",
    "PlacementError",
    "TagConfig",
    "TagEnv",
]
