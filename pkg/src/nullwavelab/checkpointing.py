"""Binary checkpoint files for wave states.

Layout (little-endian throughout):

    bytes 0..7    magic ``b"NWLCHKPT"``
    uint32        format version (currently 1)
    uint8         grid mode: 0 = full3d, 1 = axisym2d
    uint8         boundary: 0 = causal, 1 = periodic
    uint16        number of stored axes (3 or 2)
    uint32[n]     points per axis
    float64       spacing h
    float64       time step dt
    float64       CFL bound
    float64[k]    origin coordinates (k = 3 for full3d, 1 for axisym2d)
    float64       slice time t
    float64[...]  phi values, C order
    float64[...]  d_t phi values, C order
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .grid import FieldSlice, SpacetimeGrid, WaveState

MAGIC = b"NWLCHKPT"
VERSION = 1

_MODES = {"full3d": 0, "axisym2d": 1}
_MODES_INV = {v: k for k, v in _MODES.items()}
_BOUNDARIES = {"causal": 0, "periodic": 1}
_BOUNDARIES_INV = {v: k for k, v in _BOUNDARIES.items()}


class CheckpointError(RuntimeError):
    pass


def write_checkpoint(path, state: WaveState) -> None:
    g = state.grid
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(struct.pack("<BBH", _MODES[g.mode], _BOUNDARIES[g.boundary], len(g.shape)))
        fh.write(struct.pack(f"<{len(g.shape)}I", *g.shape))
        fh.write(struct.pack("<ddd", g.h, g.dt, g.cfl_bound))
        fh.write(struct.pack(f"<{len(g.origin)}d", *g.origin))
        fh.write(struct.pack("<d", state.time))
        fh.write(np.ascontiguousarray(state.phi.values, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(state.pi.values, dtype="<f8").tobytes())


def read_checkpoint(path) -> WaveState:
    raw = Path(path).read_bytes()
    if raw[:8] != MAGIC:
        raise CheckpointError(f"{path}: bad magic {raw[:8]!r}")
    off = 8
    (version,) = struct.unpack_from("<I", raw, off)
    off += 4
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    mode_id, boundary_id, naxes = struct.unpack_from("<BBH", raw, off)
    off += 4
    shape = struct.unpack_from(f"<{naxes}I", raw, off)
    off += 4 * naxes
    h, dt, cfl = struct.unpack_from("<ddd", raw, off)
    off += 24
    mode = _MODES_INV[mode_id]
    norigin = 1 if mode == "axisym2d" else 3
    origin = struct.unpack_from(f"<{norigin}d", raw, off)
    off += 8 * norigin
    (t,) = struct.unpack_from("<d", raw, off)
    off += 8
    grid = SpacetimeGrid(mode, tuple(shape), h, dt, tuple(origin),
                         boundary=_BOUNDARIES_INV[boundary_id], cfl_bound=cfl)
    count = int(np.prod(shape))
    arr = np.frombuffer(raw, dtype="<f8", count=2 * count, offset=off)
    if arr.size != 2 * count:
        raise CheckpointError(f"{path}: truncated payload")
    phi = arr[:count].reshape(shape).astype(float)
    pi = arr[count:].reshape(shape).astype(float)
    return WaveState(FieldSlice(phi, grid, t), FieldSlice(pi, grid, t))
