"""Common episodic environment interface shared by Gather and Tag."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np


@dataclass
class StepResult:
    """One environment transition as seen by the learner."""

    observations: np.ndarray  # (n_agents, obs_dim)
    global_state: np.ndarray  # (state_dim,)
    reward: float
    terminated: bool
    info: dict = field(default_factory=dict)


class Env(Protocol):
    """Episodic cooperative environment with a shared scalar reward."""

    n_agents: int
    n_actions: int
    obs_dim: int
    state_dim: int
    horizon: int

    def reset(self, rng: np.random.Generator) -> StepResult: ...

    def step(self, actions: np.ndarray) -> StepResult: ...


def write_episode_trace(path, steps: list[dict]) -> None:
    """Dump one episode as line-delimited JSON records (debug aid).

    Each record carries t, the joint action, the shared reward, and the
    termination flag for that step.
    """
    with open(path, "a", encoding="utf-8") as fh:
        for rec in steps:
            fh.write(json.dumps(rec) + "\n")
