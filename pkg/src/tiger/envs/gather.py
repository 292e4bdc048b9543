"""Gather: a hidden-goal consensus game with delayed, sparse reward.

Every episode one of three goals is drawn as the optimal one, revealed
only to a random informed subset of agents. Each step every agent votes
for a goal; a unanimous vote ends the episode (+10 on the optimal goal -
a win - or +5 on any other goal). A split vote leaves the episode
running so agents can use what they observed to retry: it costs -5 when
part of the team stands on the optimal goal (a subset succeeded), and
nothing when nobody does - standing on the optimal goal pays off only
when everyone does it together. Episodes are capped at eight steps.

Observations give each agent its own index, whether it is informed (and
if so the optimal goal), everyone's previous vote, and the episode
clock. Votes are public history; only the goal identity is private.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .base import StepResult


@dataclass
class GatherConfig:
    n_agents: int = 5
    horizon: int = 8
    n_goals: int = 3
    # how many agents see the optimal goal; <=0 means ceil(0.4 * N)
    n_informed: int = 0

    def resolved_informed(self) -> int:
        if self.n_informed > 0:
            return min(self.n_informed, self.n_agents)
        return math.ceil(0.4 * self.n_agents)


class GatherEnv:
    def __init__(self, config: GatherConfig | None = None):
        self.config = config or GatherConfig()
        self.n_agents = self.config.n_agents
        self.n_actions = self.config.n_goals
        self.horizon = self.config.horizon
        # obs: agent one-hot | informed flag | goal one-hot (informed only)
        #      | previous joint votes one-hot | episode clock
        self.obs_dim = self.n_agents + 1 + self.config.n_goals \
            + self.n_agents * self.config.n_goals + 1
        self.state_dim = self.config.n_goals + self.n_agents \
            + self.n_agents * self.config.n_goals + 1
        self._optimal = 0
        self._informed: np.ndarray | None = None
        self._last_votes: np.ndarray | None = None
        self._t = 0
        self._done = True

    def reset(self, rng: np.random.Generator) -> StepResult:
        cfg = self.config
        self._optimal = int(rng.integers(cfg.n_goals))
        informed_idx = rng.choice(cfg.n_agents, size=self.config.resolved_informed(),
                                  replace=False)
        self._informed = np.zeros(cfg.n_agents, dtype=bool)
        self._informed[np.sort(informed_idx)] = True
        self._last_votes = None
        self._t = 0
        self._done = False
        return StepResult(self._observations(), self._state(), 0.0, False, {"won": False})

    def step(self, actions: np.ndarray) -> StepResult:
        if self._done:
            raise RuntimeError("step() called on a finished episode; reset first")
        actions = np.asarray(actions, dtype=np.int64)
        if actions.shape != (self.n_agents,):
            raise ValueError(f"expected {self.n_agents} actions, got shape {actions.shape}")
        if actions.min() < 0 or actions.max() >= self.n_actions:
            raise ValueError(f"action out of range [0, {self.n_actions}): {actions.tolist()}")
        self._t += 1
        self._last_votes = actions.copy()
        won = False
        if np.all(actions == actions[0]):
            if actions[0] == self._optimal:
                reward, won = 10.0, True
            else:
                reward = 5.0
            terminated = True
        else:
            # a split vote is punished only when a subset actually stands
            # on the optimal goal; optimal-free splits carry no penalty
            reward = -5.0 if np.any(actions == self._optimal) else 0.0
            terminated = self._t >= self.horizon
        self._done = terminated
        return StepResult(self._observations(), self._state(), reward, terminated,
                          {"won": won})

    def _observations(self) -> np.ndarray:
        cfg = self.config
        obs = np.zeros((self.n_agents, self.obs_dim))
        votes = np.zeros(self.n_agents * cfg.n_goals)
        if self._last_votes is not None:
            for i, a in enumerate(self._last_votes):
                votes[i * cfg.n_goals + a] = 1.0
        for i in range(self.n_agents):
            k = 0
            obs[i, k + i] = 1.0
            k += self.n_agents
            if self._informed[i]:
                obs[i, k] = 1.0
                obs[i, k + 1 + self._optimal] = 1.0
            k += 1 + cfg.n_goals
            obs[i, k : k + votes.size] = votes
            k += votes.size
            obs[i, k] = self._t / self.horizon
        return obs

    def _state(self) -> np.ndarray:
        cfg = self.config
        state = np.zeros(self.state_dim)
        state[self._optimal] = 1.0
        k = cfg.n_goals
        state[k : k + self.n_agents] = self._informed.astype(float)
        k += self.n_agents
        if self._last_votes is not None:
            for i, a in enumerate(self._last_votes):
                state[k + i * cfg.n_goals + a] = 1.0
        k += self.n_agents * cfg.n_goals
        state[k] = self._t / self.horizon
        return state
