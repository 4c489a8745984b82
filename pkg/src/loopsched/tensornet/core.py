"""Named trainable parameters with freeze flags, lr scales and Adam state.

Checkpoint container: a single binary file holding a JSON header (format
version, feature config, architecture descriptor, parameter table) followed
by raw little-endian float64 data, one contiguous block per parameter in
table order. Loading verifies shapes and rejects mismatched configs, so a
round trip is bit-exact.
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass, field

import numpy as np

MAGIC = b"LSCKPT01"
FORMAT_VERSION = 1


@dataclass
class Parameter:
    name: str
    value: np.ndarray
    grad: np.ndarray = None
    frozen: bool = False
    lr_scale: float = 1.0
    # Adam state; step counter advances only on actual updates, so the first
    # step after unfreezing follows the closed-form first-step size.
    m: np.ndarray = None
    v: np.ndarray = None
    t: int = 0

    def __post_init__(self):
        self.value = np.ascontiguousarray(self.value, dtype=np.float64)
        if self.grad is None:
            self.grad = np.zeros_like(self.value)
        if self.m is None:
            self.m = np.zeros_like(self.value)
        if self.v is None:
            self.v = np.zeros_like(self.value)


class ParameterStore:
    """Ordered map name -> Parameter with prefix-group operations."""

    def __init__(self):
        self._params: dict[str, Parameter] = {}

    def add(self, name: str, value: np.ndarray) -> Parameter:
        if name in self._params:
            raise ValueError(f"duplicate parameter name {name!r}")
        p = Parameter(name, value)
        self._params[name] = p
        return p

    def __getitem__(self, name: str) -> Parameter:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __iter__(self):
        return iter(self._params.values())

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> list[str]:
        return list(self._params)

    def group(self, prefix: str) -> list[Parameter]:
        return [p for p in self if p.name.startswith(prefix)]

    def set_frozen(self, prefix: str, frozen: bool):
        group = self.group(prefix)
        if not group:
            raise KeyError(f"no parameters under prefix {prefix!r}")
        for p in group:
            p.frozen = frozen

    def set_lr_scale(self, prefix: str, lr_scale: float):
        group = self.group(prefix)
        if not group:
            raise KeyError(f"no parameters under prefix {prefix!r}")
        for p in group:
            p.lr_scale = lr_scale

    def zero_grads(self):
        for p in self:
            p.grad[:] = 0.0

    def scale_grads(self, factor: float):
        for p in self:
            p.grad *= factor

    def n_values(self) -> int:
        return sum(p.value.size for p in self)

    def state_copy(self) -> dict[str, np.ndarray]:
        return {p.name: p.value.copy() for p in self}

    def load_state(self, state: dict[str, np.ndarray]):
        for p in self:
            p.value[:] = state[p.name]


# ---------------------------------------------------------------------------
# Checkpoint I/O
# ---------------------------------------------------------------------------

def save_checkpoint(path, store: ParameterStore, feature_config: dict | None = None,
                    arch: dict | None = None, extra: dict | None = None):
    """Atomic write of parameter values plus config/architecture tags."""
    header = {
        "format_version": FORMAT_VERSION,
        "feature_config": feature_config,
        "arch": arch,
        "extra": extra or {},
        "params": [{"name": p.name, "shape": list(p.value.shape)} for p in store],
    }
    header_bytes = json.dumps(header, sort_keys=True).encode()
    tmp = str(path) + ".tmp"
    with open(tmp, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<Q", len(header_bytes)))
        f.write(header_bytes)
        for p in store:
            f.write(np.ascontiguousarray(p.value, dtype="<f8").tobytes())
    os.replace(tmp, path)


class CheckpointError(ValueError):
    """Corrupt file or mismatched shape/config/architecture."""


def read_checkpoint(path):
    """Returns (header dict, {name: array})."""
    with open(path, "rb") as f:
        magic = f.read(len(MAGIC))
        if magic != MAGIC:
            raise CheckpointError(f"{path}: not a checkpoint (bad magic)")
        (hlen,) = struct.unpack("<Q", f.read(8))
        header = json.loads(f.read(hlen))
        if header.get("format_version") != FORMAT_VERSION:
            raise CheckpointError(
                f"{path}: format_version {header.get('format_version')} != {FORMAT_VERSION}")
        values = {}
        for entry in header["params"]:
            shape = tuple(entry["shape"])
            n = int(np.prod(shape)) if shape else 1
            buf = f.read(8 * n)
            if len(buf) != 8 * n:
                raise CheckpointError(f"{path}: truncated data for {entry['name']!r}")
            values[entry["name"]] = np.frombuffer(buf, dtype="<f8").reshape(shape).copy()
    return header, values


def load_checkpoint_into(path, store: ParameterStore,
                         expect_feature_config: dict | None = None,
                         expect_arch: dict | None = None) -> dict:
    """Loads values into an existing store; rejects any mismatch."""
    header, values = read_checkpoint(path)
    if expect_feature_config is not None and header["feature_config"] != expect_feature_config:
        raise CheckpointError(f"{path}: feature config mismatch")
    if expect_arch is not None and header["arch"] != expect_arch:
        raise CheckpointError(f"{path}: architecture descriptor mismatch")
    names = store.names()
    file_names = [e["name"] for e in header["params"]]
    if names != file_names:
        missing = set(names) ^ set(file_names)
        raise CheckpointError(f"{path}: parameter set mismatch ({sorted(missing)[:4]}...)"
                              if missing else f"{path}: parameter order mismatch")
    for p in store:
        if values[p.name].shape != p.value.shape:
            raise CheckpointError(
                f"{path}: shape mismatch for {p.name!r}: "
                f"{values[p.name].shape} vs {p.value.shape}")
        p.value[:] = values[p.name]
    return header
