"""File formats: .ldf field snapshots, CSV reports with JSON sidecars.

LDF layout (bit-exact, trivially parseable from any language):

    bytes 0-3   magic b"LDF1"
    bytes 4-7   little-endian uint32 header length L
    bytes 8..   UTF-8 JSON header of length L with keys
                {version, N, nodes_per_axis, h, dt, n_steps, origin, t0,
                 eps_floor}
    then        (n_steps+1) * nodes_per_axis^N float64 little-endian values,
                space-major (C order) within each time slice, slices in time
                order.

All writes are atomic: temp file in the destination directory, then rename.
CSV numbers are formatted with repr(), the shortest round-trip form, so a
fixed configuration reproduces byte-identical reports.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import struct
import tempfile

import numpy as np

from .geometry import ScalarField, SpaceTimeGrid

_MAGIC = b"LDF1"
LDF_VERSION = 1


def atomic_write_bytes(path, data: bytes):
    path = os.fspath(path)
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix="~")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str):
    atomic_write_bytes(path, text.encode("utf-8"))


def write_field(path, fld: ScalarField):
    g = fld.grid
    header = {
        "version": LDF_VERSION,
        "N": g.dim,
        "nodes_per_axis": g.nodes_per_axis,
        "h": g.h,
        "dt": g.dt,
        "n_steps": g.n_steps,
        "origin": list(g.origin),
        "t0": g.t0,
        "eps_floor": fld.eps_floor,
    }
    hjson = json.dumps(header, sort_keys=True).encode("utf-8")
    payload = np.ascontiguousarray(fld.values, dtype="<f8").tobytes()
    atomic_write_bytes(path, _MAGIC + struct.pack("<I", len(hjson)) + hjson + payload)


def read_field(path) -> ScalarField:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != _MAGIC:
        raise ValueError(f"{path}: not an LDF file (bad magic {raw[:4]!r})")
    (hlen,) = struct.unpack("<I", raw[4:8])
    header = json.loads(raw[8 : 8 + hlen].decode("utf-8"))
    if header.get("version") != LDF_VERSION:
        raise ValueError(f"unsupported LDF version {header.get('version')}")
    grid = SpaceTimeGrid(
        dim=header["N"],
        h=header["h"],
        nodes_per_axis=header["nodes_per_axis"],
        dt=header["dt"],
        n_steps=header["n_steps"],
        origin=tuple(header["origin"]),
        t0=header["t0"],
    )
    vals = np.frombuffer(raw[8 + hlen :], dtype="<f8")
    if vals.size != grid.n_nodes:
        raise ValueError(
            f"{path}: payload has {vals.size} values, grid wants {grid.n_nodes}"
        )
    return ScalarField(grid, vals.reshape(grid.shape).copy(), header["eps_floor"])


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def write_csv(path, columns, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    atomic_write_text(path, buf.getvalue())


def config_hash(params: dict) -> str:
    blob = json.dumps(params, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def write_sidecar(report_path, params: dict, extra: dict | None = None):
    """JSON provenance sidecar next to a report: parameters, their hash,
    package/library versions."""
    import scipy

    from . import __version__

    doc = {
        "params": params,
        "config_sha256": config_hash(params),
        "versions": {
            "logdiff": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
    }
    if extra:
        doc.update(extra)
    atomic_write_text(str(report_path) + ".json", json.dumps(doc, indent=2, sort_keys=True) + "\n")


def write_points_csv(path, point_set):
    dim = point_set.dim
    cols = [f"x{i}" for i in range(dim)] + ["t"]
    rows = [list(x) + [t] for x, t in point_set.points]
    write_csv(path, cols, rows)


def read_points_csv(path):
    from .hausdorff import SpacetimePointSet

    with open(path, newline="", encoding="utf-8") as fh:
        rd = csv.reader(fh)
        header = next(rd)
        dim = len(header) - 1
        pts = []
        for row in rd:
            pts.append((tuple(float(c) for c in row[:dim]), float(row[dim])))
    return SpacetimePointSet(tuple(pts))


def write_cover_csv(path, estimates):
    """One row per cover cylinder, over one or several delta levels."""
    rows = []
    dim = None
    for est in estimates:
        for cx, ct, r in est.cover:
            dim = len(cx)
            rows.append([est.delta] + list(cx) + [ct, r])
    cols = ["delta"] + [f"y{i}" for i in range(dim or 0)] + ["t", "r"]
    write_csv(path, cols, rows)
