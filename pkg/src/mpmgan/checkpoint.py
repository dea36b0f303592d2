"""Checkpoint container.

Layout::

    MPMGAN-CKPT\\n
    <manifest byte length, 16 decimal digits>\\n
    <JSON manifest, UTF-8>\\n
    <little-endian float64 arrays, concatenated in manifest order>

The manifest records the schema version, resolved config, rng state,
iteration, optimizer step counters, buffer tag, and for every array its
name, shape and byte offset into the payload.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .config import TrainConfig
from .data import Rng
from .tensor import Tensor
from .trainer import MessageBuffer, MessageSource, TrainingState, build_bundle

MAGIC = b"MPMGAN-CKPT\n"
SCHEMA_VERSION = 1
_SOURCE_FIELDS = ("gen1", "gen2", "z1", "z2", "m1", "m2")


class CheckpointError(ValueError):
    pass


class CheckpointVersionError(CheckpointError):
    pass


def _collect_arrays(state: TrainingState) -> list[tuple[str, np.ndarray]]:
    bundle = state.bundle
    arrays = []
    for net_name, net in bundle.networks().items():
        for pname, p in net.named_parameters():
            arrays.append((f"net/{net_name}/{pname}", p.values))
    for opt_name, opt in bundle.optimizers.items():
        for i, (m, v) in enumerate(zip(opt.m, opt.v)):
            arrays.append((f"adam/{opt_name}/m/{i}", m))
            arrays.append((f"adam/{opt_name}/v/{i}", v))
    buf = state.buffer
    arrays.append(("buffer/m1", buf.m1.values))
    arrays.append(("buffer/m2", buf.m2.values))
    if buf.source is not None:
        for f in _SOURCE_FIELDS:
            arrays.append((f"buffer/source/{f}", getattr(buf.source, f)))
    return arrays


def save_checkpoint(path: str | Path, state: TrainingState) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    bundle = state.bundle
    entries, payload, offset = [], [], 0
    for name, arr in _collect_arrays(state):
        data = np.ascontiguousarray(arr, dtype="<f8").tobytes()
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset})
        payload.append(data)
        offset += len(data)
    manifest = {
        "format": "mpmgan-checkpoint",
        "schema_version": SCHEMA_VERSION,
        "iteration": bundle.step,
        "rng_state": state.rng.state,
        "config": bundle.config.to_dict(),
        "optimizers": {name: {"step": opt.step} for name, opt in bundle.optimizers.items()},
        "buffer": {"produced_at": state.buffer.produced_at, "has_source": state.buffer.source is not None},
        "arrays": entries,
        "payload_bytes": offset,
    }
    head = json.dumps(manifest, indent=1, sort_keys=True).encode("utf-8")
    with path.open("wb") as fh:
        fh.write(MAGIC)
        fh.write(b"%016d\n" % len(head))
        fh.write(head)
        fh.write(b"\n")
        for chunk in payload:
            fh.write(chunk)
    return path


def read_manifest(path: str | Path) -> tuple[dict, bytes]:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except FileNotFoundError:
        raise CheckpointError(f"checkpoint not found: {path}") from None
    if not raw.startswith(MAGIC):
        raise CheckpointError(f"{path}: not an mpmgan checkpoint")
    pos = len(MAGIC)
    try:
        n = int(raw[pos:pos + 16])
        manifest = json.loads(raw[pos + 17:pos + 17 + n].decode("utf-8"))
    except (ValueError, UnicodeDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt manifest ({exc})") from None
    version = manifest.get("schema_version")
    if version != SCHEMA_VERSION:
        raise CheckpointVersionError(f"{path}: schema version {version!r}, expected {SCHEMA_VERSION}")
    return manifest, raw[pos + 17 + n + 1:]


def load_checkpoint(path: str | Path) -> TrainingState:
    manifest, payload = read_manifest(path)
    if len(payload) != manifest["payload_bytes"]:
        raise CheckpointError(f"{path}: payload is {len(payload)} bytes, manifest says {manifest['payload_bytes']}")
    arrays = {}
    for e in manifest["arrays"]:
        count = int(np.prod(e["shape"])) if e["shape"] else 1
        arr = np.frombuffer(payload, dtype="<f8", count=count, offset=e["offset"])
        arrays[e["name"]] = arr.astype(np.float64).reshape(e["shape"])

    def take(name):
        try:
            return arrays[name]
        except KeyError:
            raise CheckpointError(f"{path}: missing array {name!r}") from None

    config = TrainConfig.from_dict(manifest["config"])
    bundle = build_bundle(config)
    bundle.step = manifest["iteration"]
    for net_name, net in bundle.networks().items():
        for pname, p in net.named_parameters():
            value = take(f"net/{net_name}/{pname}")
            if value.shape != p.shape:
                raise CheckpointError(f"{path}: {net_name}/{pname} has shape {value.shape}, expected {p.shape}")
            p.values = value.copy()
    for opt_name, opt in bundle.optimizers.items():
        opt.step = manifest["optimizers"][opt_name]["step"]
        opt.m = [take(f"adam/{opt_name}/m/{i}").copy() for i in range(len(opt.m))]
        opt.v = [take(f"adam/{opt_name}/v/{i}").copy() for i in range(len(opt.v))]
    source = None
    if manifest["buffer"]["has_source"]:
        source = MessageSource(**{f: take(f"buffer/source/{f}") for f in _SOURCE_FIELDS})
    buffer = MessageBuffer(Tensor(take("buffer/m1")), Tensor(take("buffer/m2")),
                           produced_at=manifest["buffer"]["produced_at"], source=source)
    rng = Rng(manifest["rng_state"])
    return TrainingState(bundle, buffer, rng)
