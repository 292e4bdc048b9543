"""Tag: continuous-arena pursuit with scripted, faster evaders.

Ten pursuers (the learners) chase three adversaries on a square arena
with circular obstacles. Motion is discretized into five macroactions
(no-op, +-x, +-y). Each step, every (pursuer, adversary) pair within the
collision radius adds +1 to the single shared reward - simultaneous
tags sum, and there are no penalties of any kind. Adversaries are part
of the environment: each greedily picks the macroaction that maximizes
its distance to the nearest pursuer, moving faster than pursuers do.
Episodes run a fixed 100 steps.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .base import StepResult


class PlacementError(RuntimeError):
    """Initial layout could not be sampled within the retry budget."""


@dataclass
class TagConfig:
    n_pursuers: int = 10
    n_adversaries: int = 3
    horizon: int = 100
    n_obstacles: int = 2
    arena_half_width: float = 1.0
    pursuer_speed: float = 0.05
    adversary_speed: float = 0.065
    collision_radius: float = 0.1
    obstacle_radius: float = 0.2
    placement_retries: int = 1000

    def __post_init__(self):
        if self.adversary_speed <= self.pursuer_speed:
            raise ValueError("adversaries must be strictly faster than pursuers")


# macroactions: no-op, +x, -x, +y, -y
_DELTAS = np.array([[0.0, 0.0], [1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]])


class TagEnv:
    def __init__(self, config: TagConfig | None = None):
        self.config = config or TagConfig()
        cfg = self.config
        self.n_agents = cfg.n_pursuers
        self.n_actions = 5
        self.horizon = cfg.horizon
        self.obs_dim = 4 + 2 * (cfg.n_pursuers - 1) + 2 * cfg.n_adversaries \
            + 2 * cfg.n_obstacles
        self.state_dim = 4 * (cfg.n_pursuers + cfg.n_adversaries)
        self._pursuers = np.zeros((cfg.n_pursuers, 2))
        self._adversaries = np.zeros((cfg.n_adversaries, 2))
        self._pursuer_vel = np.zeros((cfg.n_pursuers, 2))
        self._adversary_vel = np.zeros((cfg.n_adversaries, 2))
        self._obstacles = np.zeros((cfg.n_obstacles, 2))
        self._t = 0
        self._done = True

    # -- layout ------------------------------------------------------------

    def reset(self, rng: np.random.Generator) -> StepResult:
        cfg = self.config
        self._obstacles = self._place_obstacles(rng)
        entities = self._place_entities(rng)
        self._pursuers = entities[: cfg.n_pursuers]
        self._adversaries = entities[cfg.n_pursuers :]
        self._pursuer_vel[:] = 0.0
        self._adversary_vel[:] = 0.0
        self._t = 0
        self._done = False
        return StepResult(self._observations(), self._state(), 0.0, False,
                          {"captures": 0})

    def _place_obstacles(self, rng: np.random.Generator) -> np.ndarray:
        cfg = self.config
        placed: list[np.ndarray] = []
        for _ in range(cfg.n_obstacles):
            for _ in range(cfg.placement_retries):
                p = rng.uniform(-cfg.arena_half_width, cfg.arena_half_width, size=2)
                if all(np.linalg.norm(p - q) > 2 * cfg.obstacle_radius for q in placed):
                    placed.append(p)
                    break
            else:
                raise PlacementError("could not place obstacles without overlap")
        return np.array(placed).reshape(cfg.n_obstacles, 2)

    def _place_entities(self, rng: np.random.Generator) -> np.ndarray:
        cfg = self.config
        n = cfg.n_pursuers + cfg.n_adversaries
        placed: list[np.ndarray] = []
        for _ in range(n):
            for _ in range(cfg.placement_retries):
                p = rng.uniform(-cfg.arena_half_width, cfg.arena_half_width, size=2)
                clear_of_entities = all(
                    np.linalg.norm(p - q) > cfg.collision_radius for q in placed
                )
                clear_of_obstacles = all(
                    np.linalg.norm(p - o) > cfg.obstacle_radius for o in self._obstacles
                )
                if clear_of_entities and clear_of_obstacles:
                    placed.append(p)
                    break
            else:
                raise PlacementError(
                    f"could not place entity {len(placed)} after "
                    f"{cfg.placement_retries} retries"
                )
        return np.array(placed)

    # -- dynamics ----------------------------------------------------------

    def _move(self, pos: np.ndarray, delta: np.ndarray) -> np.ndarray:
        """Apply a displacement, truncated at obstacle boundaries, then clamped."""
        cfg = self.config
        frac = 1.0
        dd = float(delta @ delta)
        if dd > 0.0:
            for c in self._obstacles:
                rel = pos - c
                cc = float(rel @ rel) - cfg.obstacle_radius ** 2
                if cc <= 0.0:
                    continue  # already on/inside the boundary: do not wedge further
                b = 2.0 * float(delta @ rel)
                disc = b * b - 4.0 * dd * cc
                if disc <= 0.0:
                    continue
                s = (-b - np.sqrt(disc)) / (2.0 * dd)
                if 0.0 <= s < frac:
                    frac = s
        new = pos + frac * delta
        return np.clip(new, -cfg.arena_half_width, cfg.arena_half_width)

    def step(self, actions: np.ndarray) -> StepResult:
        if self._done:
            raise RuntimeError("step() called on a finished episode; reset first")
        cfg = self.config
        actions = np.asarray(actions, dtype=np.int64)
        if actions.shape != (self.n_agents,):
            raise ValueError(f"expected {self.n_agents} actions, got shape {actions.shape}")
        if actions.min() < 0 or actions.max() >= self.n_actions:
            raise ValueError(f"action out of range [0, {self.n_actions}): {actions.tolist()}")

        for i, a in enumerate(actions):
            new = self._move(self._pursuers[i], _DELTAS[a] * cfg.pursuer_speed)
            self._pursuer_vel[i] = new - self._pursuers[i]
            self._pursuers[i] = new

        for k in range(cfg.n_adversaries):
            new = self._move(self._adversaries[k], self._evasion_delta(k))
            self._adversary_vel[k] = new - self._adversaries[k]
            self._adversaries[k] = new

        diffs = self._pursuers[:, None, :] - self._adversaries[None, :, :]
        dists = np.sqrt((diffs ** 2).sum(axis=2))
        captures = int((dists <= cfg.collision_radius).sum())

        self._t += 1
        self._done = self._t >= cfg.horizon
        return StepResult(self._observations(), self._state(), float(captures),
                          self._done, {"captures": captures})

    def _evasion_delta(self, k: int) -> np.ndarray:
        """Adversary k's move: the macroaction maximizing distance to the
        nearest pursuer, ties broken by the lowest action index."""
        cfg = self.config
        best_a, best_score = 0, -np.inf
        for a in range(5):
            cand = self._move(self._adversaries[k], _DELTAS[a] * cfg.adversary_speed)
            score = float(np.min(np.linalg.norm(self._pursuers - cand, axis=1)))
            if score > best_score:
                best_a, best_score = a, score
        return _DELTAS[best_a] * cfg.adversary_speed

    # -- views -------------------------------------------------------------

    def _observations(self) -> np.ndarray:
        cfg = self.config
        obs = np.zeros((self.n_agents, self.obs_dim))
        for i in range(self.n_agents):
            own = self._pursuers[i]
            parts = [own, self._pursuer_vel[i]]
            for j in range(cfg.n_pursuers):
                if j != i:
                    parts.append(self._pursuers[j] - own)
            for kk in range(cfg.n_adversaries):
                parts.append(self._adversaries[kk] - own)
            for o in range(cfg.n_obstacles):
                parts.append(self._obstacles[o] - own)
            obs[i] = np.concatenate(parts)
        return obs

    def _state(self) -> np.ndarray:
        rows = [np.concatenate([self._pursuers[i], self._pursuer_vel[i]])
                for i in range(self.config.n_pursuers)]
        rows += [np.concatenate([self._adversaries[k], self._adversary_vel[k]])
                 for k in range(self.config.n_adversaries)]
        return np.concatenate(rows)
