"""Versioned binary container for scenario records.

Layout: magic, version (uint32), record count (uint32), then each record as a
length-prefixed block. ``iter_dataset`` streams one record at a time so large
files never need to fit in memory.
"""

from __future__ import annotations

import struct
from pathlib import Path as FsPath
from typing import Iterator

import numpy as np

from .generate import ScenarioRecord
from .maps import Lane

MAGIC = b"LPSCENDB"
VERSION = 1


class DatasetFormatError(RuntimeError):
    pass


def _w_str(f, s: str) -> None:
    b = s.encode("utf-8")
    f.write(struct.pack("<I", len(b)))
    f.write(b)


def _w_arr(f, arr: np.ndarray) -> None:
    arr = np.ascontiguousarray(arr, dtype="<f8")
    f.write(struct.pack("<I", arr.ndim))
    f.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
    f.write(arr.tobytes())


def _w_ints(f, values) -> None:
    f.write(struct.pack("<I", len(values)))
    if values:
        f.write(struct.pack(f"<{len(values)}q", *values))


class _Reader:
    def __init__(self, f):
        self.f = f

    def bytes(self, n: int) -> bytes:
        b = self.f.read(n)
        if len(b) != n:
            raise DatasetFormatError("truncated dataset file")
        return b

    def u32(self) -> int:
        return struct.unpack("<I", self.bytes(4))[0]

    def str(self) -> str:
        return self.bytes(self.u32()).decode("utf-8")

    def f64(self) -> float:
        return struct.unpack("<d", self.bytes(8))[0]

    def arr(self) -> np.ndarray:
        ndim = self.u32()
        shape = struct.unpack(f"<{ndim}Q", self.bytes(8 * ndim))
        n = int(np.prod(shape)) if ndim else 1
        return np.frombuffer(self.bytes(8 * n), dtype="<f8").reshape(shape).copy()

    def ints(self) -> list[int]:
        n = self.u32()
        if n == 0:
            return []
        return list(struct.unpack(f"<{n}q", self.bytes(8 * n)))


def _write_record(f, rec: ScenarioRecord) -> None:
    _w_str(f, rec.scenario_id)
    _w_str(f, rec.map_family)
    f.write(struct.pack("<q", rec.seed))
    f.write(struct.pack("<dd", rec.dt, rec.duration))
    f.write(struct.pack("<I", len(rec.lanes)))
    for ln in rec.lanes:
        f.write(struct.pack("<q", ln.lane_id))
        f.write(struct.pack("<dddd", ln.speed_limit, ln.width, float(ln.lane_type), ln.tl_state))
        _w_ints(f, ln.successors)
        _w_arr(f, ln.centerline)
    _w_arr(f, rec.agent_logs)
    _w_arr(f, rec.agent_dims)
    _w_arr(f, rec.ego_log)
    _w_arr(f, rec.ego_dims)
    _w_ints(f, rec.route_lane_ids)


def _read_record(r: _Reader) -> ScenarioRecord:
    scenario_id = r.str()
    map_family = r.str()
    (seed,) = struct.unpack("<q", r.bytes(8))
    dt, duration = struct.unpack("<dd", r.bytes(16))
    lanes = []
    for _ in range(r.u32()):
        (lane_id,) = struct.unpack("<q", r.bytes(8))
        speed_limit, width, lane_type, tl_state = struct.unpack("<dddd", r.bytes(32))
        successors = r.ints()
        centerline = r.arr()
        lanes.append(Lane(lane_id, centerline, speed_limit, width,
                          int(lane_type), tl_state, successors))
    agent_logs = r.arr()
    agent_dims = r.arr()
    ego_log = r.arr()
    ego_dims = r.arr()
    route = r.ints()
    return ScenarioRecord(scenario_id, map_family, seed, dt, duration, lanes,
                          agent_logs, agent_dims, ego_log, ego_dims, route)


def write_dataset(records, path) -> None:
    path = FsPath(path)
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<II", VERSION, len(records)))
        for rec in records:
            _write_record(f, rec)


def iter_dataset(path) -> Iterator[ScenarioRecord]:
    """Stream records one at a time (memory bounded by a single record)."""
    path = FsPath(path)
    with open(path, "rb") as f:
        header = f.read(8)
        if header != MAGIC:
            raise DatasetFormatError(f"{path}: bad magic, not a scenario dataset")
        r = _Reader(f)
        version = r.u32()
        if version != VERSION:
            raise DatasetFormatError(f"{path}: unsupported dataset version {version}")
        count = r.u32()
        for _ in range(count):
            yield _read_record(r)


def read_dataset(path) -> list[ScenarioRecord]:
    return list(iter_dataset(path))
