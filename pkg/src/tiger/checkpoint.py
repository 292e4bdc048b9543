"""Single-file binary checkpoints.

Layout (little-endian throughout):

    4-byte magic "TGRC" | u32 format version
    u64 snapshot length | snapshot JSON (config text + run state + RNG states)
    u32 block count | blocks

Each block is one named float64 array:

    u32 name length | name (UTF-8) | u32 ndim | u32 dims[ndim] | f64 data

Blocks hold the online parameters, the target copies, the Adam moments,
and the replay buffer's episode arrays, so a resumed run continues the
original bit-for-bit. Files round-trip exactly: save -> load -> save
yields identical bytes.
"""

from __future__ import annotations

import json
import struct
from typing import BinaryIO

import numpy as np

MAGIC = b"TGRC"
VERSION = 1

_EP_FIELDS = ("obs", "state", "actions", "rewards", "terminated", "hiddens")


class CheckpointError(RuntimeError):
    """Malformed or incompatible checkpoint file."""


def _write_block(fh: BinaryIO, name: str, arr: np.ndarray) -> None:
    raw = name.encode("utf-8")
    fh.write(struct.pack("<I", len(raw)))
    fh.write(raw)
    a = np.ascontiguousarray(arr, dtype="<f8")
    fh.write(struct.pack("<I", a.ndim))
    fh.write(struct.pack(f"<{a.ndim}I", *a.shape))
    fh.write(a.tobytes())


def _read_exact(fh: BinaryIO, n: int) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise CheckpointError("truncated checkpoint file")
    return data


def _read_block(fh: BinaryIO) -> tuple[str, np.ndarray]:
    (name_len,) = struct.unpack("<I", _read_exact(fh, 4))
    name = _read_exact(fh, name_len).decode("utf-8")
    (ndim,) = struct.unpack("<I", _read_exact(fh, 4))
    dims = struct.unpack(f"<{ndim}I", _read_exact(fh, 4 * ndim))
    count = int(np.prod(dims)) if ndim else 1
    arr = np.frombuffer(_read_exact(fh, 8 * count), dtype="<f8").reshape(dims)
    return name, arr.copy()


def write_checkpoint(path, config_text: str, snapshot: dict,
                     blocks: dict[str, np.ndarray]) -> None:
    payload = json.dumps({"config": config_text, "state": snapshot}).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(struct.pack("<Q", len(payload)))
        fh.write(payload)
        fh.write(struct.pack("<I", len(blocks)))
        for name, arr in blocks.items():
            _write_block(fh, name, arr)


def read_checkpoint(path) -> tuple[str, dict, dict[str, np.ndarray]]:
    with open(path, "rb") as fh:
        if _read_exact(fh, 4) != MAGIC:
            raise CheckpointError(f"{path}: not a checkpoint file (bad magic)")
        (version,) = struct.unpack("<I", _read_exact(fh, 4))
        if version != VERSION:
            raise CheckpointError(f"{path}: unsupported format version {version}")
        (snap_len,) = struct.unpack("<Q", _read_exact(fh, 8))
        payload = json.loads(_read_exact(fh, snap_len).decode("utf-8"))
        (n_blocks,) = struct.unpack("<I", _read_exact(fh, 4))
        blocks = {}
        for _ in range(n_blocks):
            name, arr = _read_block(fh)
            blocks[name] = arr
    return payload["config"], payload["state"], blocks


# ---------------------------------------------------------------------------
# trainer <-> checkpoint
# ---------------------------------------------------------------------------

def trainer_blocks(trainer) -> dict[str, np.ndarray]:
    blocks: dict[str, np.ndarray] = {}
    for name, p in trainer.models.named_params().items():
        blocks[f"param/{name}"] = p.data
    for name, p in trainer.targets.named_params().items():
        blocks[f"target/{name}"] = p.data
    for name in trainer.opt.params:
        blocks[f"adam/m/{name}"] = trainer.opt.m[name]
        blocks[f"adam/v/{name}"] = trainer.opt.v[name]
    for i, ep in enumerate(trainer.buffer.episodes()):
        for f in _EP_FIELDS:
            blocks[f"buffer/{i}/{f}"] = np.asarray(getattr(ep, f), dtype=np.float64)
    return blocks


def save_trainer(path, trainer, driver_state: dict | None = None) -> None:
    """Persist a trainer plus optional loop-owned state (e.g. loss accumulators)."""
    from .config import config_to_string

    snapshot = trainer.state_snapshot()
    snapshot["seed"] = trainer.seed
    snapshot["driver"] = driver_state or {}
    write_checkpoint(path, config_to_string(trainer.cfg), snapshot,
                     trainer_blocks(trainer))


def load_trainer(path):
    """Rebuild a Trainer in the exact state the checkpoint captured."""
    from .config import parse_config_text
    from .learner import EpisodeBatch, Trainer

    config_text, snapshot, blocks = read_checkpoint(path)
    cfg = parse_config_text(config_text, where=f"{path}#config")
    trainer = Trainer(cfg, int(snapshot["seed"]))
    for name, p in trainer.models.named_params().items():
        p.data[...] = blocks[f"param/{name}"]
    for name, p in trainer.targets.named_params().items():
        p.data[...] = blocks[f"target/{name}"]
    for name in trainer.opt.params:
        trainer.opt.m[name][...] = blocks[f"adam/m/{name}"]
        trainer.opt.v[name][...] = blocks[f"adam/v/{name}"]
    episodes = []
    for i, meta in enumerate(snapshot["buffer_meta"]):
        episodes.append(EpisodeBatch(
            obs=blocks[f"buffer/{i}/obs"],
            state=blocks[f"buffer/{i}/state"],
            actions=blocks[f"buffer/{i}/actions"].astype(np.int64),
            rewards=blocks[f"buffer/{i}/rewards"],
            terminated=blocks[f"buffer/{i}/terminated"].astype(bool),
            hiddens=blocks[f"buffer/{i}/hiddens"],
            length=int(meta["length"]),
            ep_return=float(meta["ep_return"]),
            won=bool(meta["won"]),
        ))
    trainer.restore_snapshot(snapshot, episodes)
    trainer.driver_state = dict(snapshot.get("driver", {}))
    return trainer
