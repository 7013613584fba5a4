"""CSV and JSON emission. CSVs use ``,``, ``.``, LF and a header row; floats
are written with ``%.17g`` so they round-trip exactly."""

from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np

_FMT = "%.17g"


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return _FMT % float(v)
    return str(v)


def write_csv(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")
    return path


def write_json(path, obj):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")
    return path


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, (np.bool_,)):
        return bool(o)
    if isinstance(o, Path):
        return str(o)
    raise TypeError(type(o).__name__)


def axis_names(prefix, d):
    return [f"{prefix}{a}" for a in range(d)]


def write_trajectory(path, record):
    d = record.setup.params.dim
    rows = []
    for t, ids, alive, X, V in record.all_tips:
        for i in range(ids.size):
            rows.append((t, ids[i], alive[i], *X[i], *V[i]))
    return write_csv(path, ["t", "tip_id", "alive", *axis_names("x", d), *axis_names("v", d)], rows)


def write_events(path, events, d):
    rows = [(t, kind, *x, parent, child) for t, kind, x, parent, child in events]
    return write_csv(path, ["t", "kind", *axis_names("x", d), "parent_id", "child_id"], rows)


def write_counts(path, times, counts):
    return write_csv(path, ["t", "N_t"], zip(times, counts))


def write_field(path, grid, C, eta=None):
    """One row per node, plus a JSON geometry sidecar next to it."""
    nodes = grid.nodes()
    cols = [nodes[:, a] for a in range(grid.dim)] + [np.ravel(C)]
    header = [*axis_names("x", grid.dim), "C"]
    if eta is not None:
        cols.append(np.ravel(eta))
        header.append("eta")
    p = write_csv(path, header, zip(*cols))
    side = write_json(Path(path).with_suffix(".json"),
                      {"origin": list(grid.origin), "spacing": grid.spacing, "shape": list(grid.shape)})
    return p, side


def write_density(path, rho):
    d = rho.dim
    xs = rho.xgrid.axes()
    mesh = np.meshgrid(*xs, *rho.vaxes, indexing="ij")
    cols = [m.ravel() for m in mesh] + [rho.values.ravel()]
    p = write_csv(path, [*axis_names("x", d), *axis_names("v", d), "rho"], zip(*cols))
    side = write_json(Path(path).with_suffix(".json"), {
        "x_origin": list(rho.xgrid.origin), "x_spacing": rho.hx, "x_shape": list(rho.xgrid.shape),
        "v_origin": [float(ax[0]) for ax in rho.vaxes], "v_spacing": rho.hv,
        "v_shape": [int(ax.size) for ax in rho.vaxes],
    })
    return p, side


def write_mass(path, times, M):
    return write_csv(path, ["t", "M"], zip(times, M))


def ensure_writable(out):
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    if not os.access(out, os.W_OK):
        raise PermissionError(f"output directory {out} is not writable")
    return out
