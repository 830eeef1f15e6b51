"""State serialization: JSON text header plus flat little-endian payload.

Layout of a ``.dstate`` file::

    DIRACLAB-STATE 1\n
    <one-line JSON header>\n
    <raw array payload, concatenated in header order>

Arrays are written little-endian, C-order, in the documented index order
(modes: momenta, signs, amplitudes, weights; slices: values over the grid's
C-ordered lattice).  Round-trips are bit-exact: raw IEEE bytes, and scalar
metadata goes through ``repr`` which round-trips Python floats.
"""

from __future__ import annotations

import json

import numpy as np

from diraclab.hyperplane import HyperplaneGrid, HyperplaneParams, make_grid
from diraclab.states import GridSliceState, ModeListState, StateError

MAGIC = b"DIRACLAB-STATE 1\n"

_DTYPES = {"momenta": "<f8", "signs": "<i1", "amplitudes": "<c16", "weights": "<f8", "values": "<c16"}


def _grid_meta(grid: HyperplaneGrid) -> dict:
    p = grid.params
    return {
        "y": [repr(float(v)) for v in p.y],
        "alpha": [repr(float(v)) for v in p.alpha],
        "phi": [repr(float(v)) for v in p.phi],
        "radius": repr(float(grid.radius)),
        "n": grid.n,
    }


def _grid_from_meta(meta: dict) -> HyperplaneGrid:
    params = HyperplaneParams(
        y=[float(v) for v in meta["y"]],
        alpha=[float(v) for v in meta["alpha"]],
        phi=[float(v) for v in meta["phi"]],
    )
    return make_grid(params, float(meta["radius"]), int(meta["n"]))


def save_state(path, state) -> None:
    if isinstance(state, ModeListState):
        header = {"kind": "modes", "n_modes": state.n_modes}
        arrays = [("momenta", state.momenta), ("signs", state.signs),
                  ("amplitudes", state.amplitudes), ("weights", state.weights)]
    elif isinstance(state, GridSliceState):
        header = {"kind": "slice", "grid": _grid_meta(state.grid)}
        arrays = [("values", state.values)]
    else:
        raise StateError(f"cannot serialize {type(state).__name__}")
    header["mass"] = repr(float(state.mass))
    header["c"] = repr(float(state.c))
    header["arrays"] = [
        {"name": name, "dtype": _DTYPES[name], "shape": list(np.asarray(a).shape)}
        for name, a in arrays
    ]
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8"))
        fh.write(b"\n")
        for name, a in arrays:
            fh.write(np.ascontiguousarray(np.asarray(a), dtype=_DTYPES[name]).tobytes())


def load_state(path):
    with open(path, "rb") as fh:
        magic = fh.readline()
        if magic != MAGIC:
            raise StateError(f"{path}: not a diraclab state file")
        header = json.loads(fh.readline().decode("utf-8"))
        data = {}
        for spec in header["arrays"]:
            shape = tuple(spec["shape"])
            count = int(np.prod(shape)) if shape else 1
            raw = fh.read(count * np.dtype(spec["dtype"]).itemsize)
            data[spec["name"]] = np.frombuffer(raw, dtype=spec["dtype"]).reshape(shape)
    mass = float(header["mass"])
    c = float(header["c"])
    if header["kind"] == "modes":
        return ModeListState(momenta=data["momenta"], signs=data["signs"],
                             amplitudes=data["amplitudes"], weights=data["weights"],
                             mass=mass, c=c)
    if header["kind"] == "slice":
        return GridSliceState(grid=_grid_from_meta(header["grid"]), values=data["values"],
                              mass=mass, c=c)
    raise StateError(f"unknown state kind {header['kind']!r}")
