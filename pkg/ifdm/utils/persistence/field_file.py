"""
Binary field files.

Layout:

    b"IFDM" | uint32 LE version | uint32 LE header length | JSON header | payload

The payload is little-endian float64 in C order with the component axes
first and x1 fastest. Writing then reading a file returns the same bits on
any host.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from ...core.grid_fields import Field, grid_of
from ...core.primal_system import PrimalState
from ...utils.exceptions import BaseStateMissingError, InvalidInputError

MAGIC = b"IFDM"
VERSION = 1
DTYPE = "<f8"
LAYOUT = "component-slowest, x1-fastest"
PRIMAL_FIELDS = ("v", "alpha", "p")


@dataclass
class FieldRecord:
    values: np.ndarray
    name: str
    time: float = 0.0
    header: dict[str, Any] = field(default_factory=dict)


def write_field(path: str | Path, values: np.ndarray, name: str, time: float = 0.0) -> Path:
    """Write a finite scalar, vector or tensor field; anything else raises ArgumentError or InvalidFieldError."""
    values = np.ascontiguousarray(values, dtype=DTYPE)
    stored = Field.from_array(grid_of(values), values, name=name, time=time)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = {
        "name": stored.name,
        "time": float(stored.time),
        "grid": list(stored.grid.shape),
        "shape": list(values.shape),
        "components": stored.components,
        "dtype": DTYPE,
        "layout": LAYOUT,
    }
    encoded = json.dumps(header, sort_keys=True).encode("utf-8")
    with path.open("wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<II", VERSION, len(encoded)))
        f.write(encoded)
        f.write(values.tobytes(order="C"))
    return path


def read_field(path: str | Path) -> FieldRecord:
    path = Path(path)
    if not path.is_file():
        raise BaseStateMissingError("field file not found", path=str(path))
    raw = path.read_bytes()
    if raw[:4] != MAGIC:
        raise InvalidInputError(f"{path} is not a field file")
    version, length = struct.unpack("<II", raw[4:12])
    if version != VERSION:
        raise InvalidInputError(f"{path}: unsupported field file version {version}")
    header = json.loads(raw[12 : 12 + length].decode("utf-8"))
    payload = raw[12 + length :]
    shape = tuple(header["shape"])
    expected = 8 * int(np.prod(shape))
    if len(payload) != expected:
        raise InvalidInputError(f"{path}: payload has {len(payload)} bytes, expected {expected}")
    values = np.frombuffer(payload, dtype=DTYPE).reshape(shape).astype(np.float64)
    return FieldRecord(values=values, name=header["name"], time=header["time"], header=header)


def _state_path(directory: Path, tag: str, name: str) -> Path:
    return directory / f"{tag}_{name}.ifdm"


def write_state(directory: str | Path, state: PrimalState, tag: str) -> list[Path]:
    directory = Path(directory)
    return [
        write_field(_state_path(directory, tag, name), getattr(state, name), name, state.time)
        for name in PRIMAL_FIELDS
    ]


def read_state(directory: str | Path, tag: str) -> PrimalState:
    directory = Path(directory)
    records = {name: read_field(_state_path(directory, tag, name)) for name in PRIMAL_FIELDS}
    return PrimalState(
        v=records["v"].values,
        alpha=records["alpha"].values,
        p=records["p"].values,
        time=records["v"].time,
    )


def snapshot_tag(index: int) -> str:
    return f"snap_{index:05d}"


def write_trajectory(directory: str | Path, states: Sequence[PrimalState]) -> None:
    for k, state in enumerate(states):
        write_state(directory, state, snapshot_tag(k))


def read_trajectory(directory: str | Path) -> list[PrimalState]:
    """All snapshots of a forward run directory, in time order."""
    directory = Path(directory)
    if not directory.is_dir():
        raise BaseStateMissingError("base trajectory directory not found", path=str(directory))
    tags = sorted({p.name.rsplit("_", 1)[0] for p in directory.glob("snap_*_v.ifdm")})
    if not tags:
        raise BaseStateMissingError("no snapshots in base trajectory directory", path=str(directory))
    return [read_state(directory, tag) for tag in tags]
