"""Metrics persistence: append-only per-seed CSV files plus the cross-seed
aggregate. Files are UTF-8, LF-terminated, one header row, and stay
parseable at any prefix (each row is flushed as it is written)."""

from __future__ import annotations

import os
from dataclasses import dataclass

HEADER = "env_steps,train_loss,eval_metric,eval_std,epsilon,wall_seconds,seed"
AGG_HEADER = "env_steps,mean,std,n_seeds"


class MetricsParseError(ValueError):
    """A metrics file line failed to parse; the message names the line."""


@dataclass
class MetricsRow:
    env_steps: int
    train_loss: float
    eval_metric: float
    eval_std: float
    epsilon: float
    wall_seconds: float
    seed: int

    def to_line(self) -> str:
        return (f"{self.env_steps},{self.train_loss!r},{self.eval_metric!r},"
                f"{self.eval_std!r},{self.epsilon!r},{self.wall_seconds!r},"
                f"{self.seed}")


class MetricsWriter:
    """Append-only row writer; creates the header only for fresh files."""

    def __init__(self, path, append: bool = False):
        self.path = path
        exists = append and os.path.exists(path)
        self._fh = open(path, "a" if exists else "w", encoding="utf-8", newline="\n")
        if not exists:
            self._fh.write(HEADER + "\n")
            self._fh.flush()

    def write(self, row: MetricsRow) -> None:
        self._fh.write(row.to_line() + "\n")
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()

    def __enter__(self) -> "MetricsWriter":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def read_metrics(path) -> list[MetricsRow]:
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            if lineno == 1:
                if line != HEADER:
                    raise MetricsParseError(f"{path}:1: unexpected header {line!r}")
                continue
            parts = line.split(",")
            if len(parts) != 7:
                raise MetricsParseError(
                    f"{path}:{lineno}: expected 7 fields, got {len(parts)}")
            try:
                rows.append(MetricsRow(
                    env_steps=int(parts[0]),
                    train_loss=float(parts[1]),
                    eval_metric=float(parts[2]),
                    eval_std=float(parts[3]),
                    epsilon=float(parts[4]),
                    wall_seconds=float(parts[5]),
                    seed=int(parts[6]),
                ))
            except ValueError as exc:
                raise MetricsParseError(f"{path}:{lineno}: {exc}") from exc
    return rows


def write_aggregate(path, per_seed_rows: list[list[MetricsRow]]) -> None:
    """Cross-seed mean/std of the eval metric, aligned by evaluation index."""
    import numpy as np

    n_points = min(len(rows) for rows in per_seed_rows)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(AGG_HEADER + "\n")
        for k in range(n_points):
            steps = int(round(np.mean([rows[k].env_steps for rows in per_seed_rows])))
            vals = np.array([rows[k].eval_metric for rows in per_seed_rows])
            fh.write(f"{steps},{float(vals.mean())!r},{float(vals.std())!r},"
                     f"{len(per_seed_rows)}\n")


def read_aggregate(path) -> list[tuple[int, float, float, int]]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            if lineno == 1:
                if line != AGG_HEADER:
                    raise MetricsParseError(f"{path}:1: unexpected header {line!r}")
                continue
            parts = line.split(",")
            if len(parts) != 4:
                raise MetricsParseError(
                    f"{path}:{lineno}: expected 4 fields, got {len(parts)}")
            try:
                out.append((int(parts[0]), float(parts[1]), float(parts[2]),
                            int(parts[3])))
            except ValueError as exc:
                raise MetricsParseError(f"{path}:{lineno}: {exc}") from exc
    return out
