"""Run-length encoded snapshot dumps.

One file per replica, little-endian:

    header   magic b"SBSN", u16 version, u32 n, u32 W, u64 seed, u32 replica,
             u32 record count
    record   f64 clock, u8 first value, u32 run count, u32 runs[run count]

Runs alternate between the first value and its complement and cover the
window -W..W-1 from left to right.
"""
from __future__ import annotations

import csv
import struct
from dataclasses import dataclass

import numpy as np

MAGIC = b"SBSN"
VERSION = 1
_HEADER = struct.Struct("<4sHIIQII")
_RECORD = struct.Struct("<dBI")


def rle_encode(occupancy):
    occ = np.asarray(occupancy, dtype=np.uint8)
    if occ.size == 0:
        return 0, np.zeros(0, dtype=np.uint32)
    edges = np.flatnonzero(np.diff(occ)) + 1
    bounds = np.concatenate([[0], edges, [occ.size]])
    return int(occ[0]), np.diff(bounds).astype(np.uint32)


def rle_decode(first, runs):
    values = (np.arange(len(runs)) + first) % 2
    return np.repeat(values.astype(np.uint8), runs)


@dataclass
class SnapshotFile:
    n: int
    half_width: int
    seed: int
    replica: int
    clocks: np.ndarray
    occupancy: np.ndarray  # (records, 2W) uint8


def write_snapshots(path, n, half_width, seed, replica, clocks, occupancy):
    occupancy = np.asarray(occupancy, dtype=np.uint8)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, n, half_width, seed & (2**64 - 1), replica, len(clocks)))
        for t, occ in zip(clocks, occupancy):
            first, runs = rle_encode(occ)
            fh.write(_RECORD.pack(float(t), first, runs.size))
            fh.write(runs.astype("<u4").tobytes())


def read_snapshots(path) -> SnapshotFile:
    with open(path, "rb") as fh:
        data = fh.read()
    magic, version, n, W, seed, replica, count = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise ValueError(f"{path}: not a snapshot dump")
    if version != VERSION:
        raise ValueError(f"{path}: unsupported dump version {version}")
    pos = _HEADER.size
    clocks = np.empty(count)
    occ = np.empty((count, 2 * W), dtype=np.uint8)
    for i in range(count):
        clocks[i], first, nruns = _RECORD.unpack_from(data, pos)
        pos += _RECORD.size
        runs = np.frombuffer(data, dtype="<u4", count=nruns, offset=pos)
        pos += 4 * nruns
        row = rle_decode(first, runs)
        if row.size != 2 * W:
            raise ValueError(f"{path}: record {i} covers {row.size} sites, expected {2 * W}")
        occ[i] = row
    return SnapshotFile(n=n, half_width=W, seed=seed, replica=replica, clocks=clocks, occupancy=occ)


def export_csv(snap: SnapshotFile, path):
    """Long format ``time,x,occupied``; meant for small windows."""
    x = np.arange(-snap.half_width, snap.half_width)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["time", "x", "occupied"])
        for t, row in zip(snap.clocks, snap.occupancy):
            for xi, v in zip(x, row):
                w.writerow([repr(float(t)), int(xi), int(v)])
