"""Checkpoint files: a JSON header plus flat little-endian float64 arrays.

Layout: 8-byte magic, uint32 header length, the UTF-8 JSON header, then the
parameter arrays concatenated in the order declared by the header.  Headers
are serialized canonically (sorted keys) so save -> load -> save is
byte-identical.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .a2c import A2CHyper
from .errors import CheckpointError
from .nets import MlpParams

MAGIC = b"XSCKPT01"
FORMAT_VERSION = 1


@dataclass
class PolicyCheckpoint:
    """A trained actor-critic pair with its identity and training provenance."""

    kind: str
    head_sizes: tuple
    feature_dim: int
    actor: MlpParams
    critic: MlpParams
    hyper: A2CHyper
    trained_episodes: int
    seed: int
    meta: dict = field(default_factory=dict)


def _declare_arrays(ckpt: PolicyCheckpoint):
    names, arrays = [], []
    for prefix, params in (("actor", ckpt.actor), ("critic", ckpt.critic)):
        for i, (w, b) in enumerate(zip(params.weights, params.biases)):
            names.append([f"{prefix}.w{i}", list(w.shape)])
            arrays.append(w)
            names.append([f"{prefix}.b{i}", list(b.shape)])
            arrays.append(b)
    return names, arrays


def save_checkpoint(path: str | Path, ckpt: PolicyCheckpoint) -> None:
    names, arrays = _declare_arrays(ckpt)
    header = {
        "format_version": FORMAT_VERSION,
        "kind": ckpt.kind,
        "head_sizes": list(ckpt.head_sizes),
        "feature_dim": ckpt.feature_dim,
        "hyper": ckpt.hyper.to_dict(),
        "trained_episodes": ckpt.trained_episodes,
        "seed": ckpt.seed,
        "meta": ckpt.meta,
        "arrays": names,
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for a in arrays:
            fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def _rebuild_params(prefix: str, entries, flat: dict) -> MlpParams:
    weights, biases = [], []
    i = 0
    while f"{prefix}.w{i}" in flat:
        weights.append(flat[f"{prefix}.w{i}"])
        biases.append(flat[f"{prefix}.b{i}"])
        i += 1
    if not weights:
        raise CheckpointError(f"checkpoint has no {prefix} arrays")
    return MlpParams(weights=weights, biases=biases)


def load_checkpoint(path: str | Path) -> PolicyCheckpoint:
    data = Path(path).read_bytes()
    if len(data) < len(MAGIC) + 4 or data[: len(MAGIC)] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    header_len = struct.unpack("<I", data[len(MAGIC): len(MAGIC) + 4])[0]
    body_start = len(MAGIC) + 4
    if len(data) < body_start + header_len:
        raise CheckpointError(f"{path}: truncated header")
    try:
        header = json.loads(data[body_start: body_start + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: unreadable header: {exc}") from exc
    version = header.get("format_version")
    if version != FORMAT_VERSION:
        raise CheckpointError(
            f"{path}: unsupported checkpoint format version {version} "
            f"(expected {FORMAT_VERSION})"
        )

    entries = header["arrays"]
    expected_bytes = sum(int(np.prod(shape)) for _, shape in entries) * 8
    payload = data[body_start + header_len:]
    if len(payload) != expected_bytes:
        raise CheckpointError(
            f"{path}: corrupt length (payload {len(payload)} bytes, "
            f"declared arrays need {expected_bytes})"
        )
    flat = {}
    offset = 0
    for name, shape in entries:
        count = int(np.prod(shape))
        chunk = np.frombuffer(payload, dtype="<f8", count=count, offset=offset)
        flat[name] = chunk.astype(np.float64).reshape(shape)
        offset += count * 8

    return PolicyCheckpoint(
        kind=header["kind"],
        head_sizes=tuple(header["head_sizes"]),
        feature_dim=int(header["feature_dim"]),
        actor=_rebuild_params("actor", entries, flat),
        critic=_rebuild_params("critic", entries, flat),
        hyper=A2CHyper(**header["hyper"]),
        trained_episodes=int(header["trained_episodes"]),
        seed=int(header["seed"]),
        meta=header.get("meta", {}),
    )


def sha256_file(path: str | Path) -> str:
    digest = hashlib.sha256()
    digest.update(Path(path).read_bytes())
    return digest.hexdigest()
