"""Snapshot persistence: a tiny self-describing binary format plus a manifest.

Layout of one file: magic b"MHDS", one version byte (1), a little-endian
u32 header length, then the UTF-8 header (flat "key: value" lines carrying
n, L, time, the field list and the array ordering), then each listed field
as raw little-endian float64, x-fastest. Round-trips are bitwise lossless.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import MhdFluxError
from .grid import GridSpec, VectorField3
from .solver import MHDState, SnapshotSeries

__all__ = [
    "FormatError",
    "write_snapshot",
    "read_snapshot",
    "write_series",
    "read_series",
    "write_manifest",
    "read_manifest",
]

MAGIC = b"MHDS"
VERSION = 1
FIELD_NAMES = ("ux", "uy", "uz", "bx", "by", "bz")


class FormatError(MhdFluxError):
    """Snapshot file is malformed or of an unsupported version."""


def _header_text(grid: GridSpec, time: float) -> bytes:
    lines = [
        f"n: {grid.n}",
        f"L: {float(grid.length)!r}",
        f"time: {float(time)!r}",
        f"fields: {','.join(FIELD_NAMES)}",
        "ordering: x-fastest",
    ]
    return ("\n".join(lines) + "\n").encode("utf-8")


def write_snapshot(path, state: MHDState) -> None:
    grid = state.u.grid
    header = _header_text(grid, state.t)
    arrays = list(state.u.components) + list(state.b.components)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(bytes([VERSION]))
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        for arr in arrays:
            fh.write(np.ascontiguousarray(arr.ravel(order="F"), dtype="<f8").tobytes())


def _parse_header(raw: bytes) -> dict:
    out = {}
    for line in raw.decode("utf-8").splitlines():
        line = line.strip()
        if not line:
            continue
        if ":" not in line:
            raise FormatError(f"bad header line: {line!r}")
        key, _, value = line.partition(":")
        out[key.strip()] = value.strip()
    return out


def read_snapshot(path) -> MHDState:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}")
        version = fh.read(1)[0]
        if version != VERSION:
            raise FormatError(f"{path}: unsupported version {version}")
        (hlen,) = struct.unpack("<I", fh.read(4))
        header = _parse_header(fh.read(hlen))
        for key in ("n", "L", "time", "fields", "ordering"):
            if key not in header:
                raise FormatError(f"{path}: header missing {key!r}")
        if header["ordering"] != "x-fastest":
            raise FormatError(f"{path}: unknown ordering {header['ordering']!r}")
        n = int(header["n"])
        grid = GridSpec(n, float(header["L"]))
        time = float(header["time"])
        names = header["fields"].split(",")
        arrays = {}
        for name in names:
            buf = fh.read(8 * n**3)
            if len(buf) != 8 * n**3:
                raise FormatError(f"{path}: truncated field {name!r}")
            arrays[name] = np.frombuffer(buf, dtype="<f8").reshape(grid.shape, order="F")
    missing = [f for f in FIELD_NAMES if f not in arrays]
    if missing:
        raise FormatError(f"{path}: missing fields {missing}")
    u = VectorField3.from_arrays(grid, arrays["ux"], arrays["uy"], arrays["uz"])
    b = VectorField3.from_arrays(grid, arrays["bx"], arrays["by"], arrays["bz"])
    return MHDState(time, u, b)


def write_series(directory, series: SnapshotSeries) -> list[str]:
    """One file per state, plus manifest.json; returns the file names."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    names = []
    for i, state in enumerate(series.states):
        name = f"snap_{i:04d}.mhds"
        write_snapshot(directory / name, state)
        names.append(name)
    write_manifest(directory / "manifest.json", {
        "n": series.grid.n,
        "L": series.grid.length,
        "times": [float(t) for t in series.times],
        "files": names,
        "completed": True,
    })
    return names


def read_series(directory) -> SnapshotSeries:
    directory = Path(directory)
    manifest = read_manifest(directory / "manifest.json")
    if not manifest.get("completed", False):
        raise FormatError(f"{directory}: run did not complete (see manifest)")
    states = [read_snapshot(directory / name) for name in manifest["files"]]
    grid = states[0].u.grid
    times = np.asarray([s.t for s in states])
    return SnapshotSeries(grid=grid, times=times, states=states)


def write_manifest(path, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_manifest(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)
