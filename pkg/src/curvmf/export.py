"""Readers and writers for the run artifacts (CSV at 17 significant digits, JSON, OFF)."""
from __future__ import annotations

import csv
import json
import math

import numpy as np

from .minimize import TRACE_COLUMNS

SOLUTION_COLUMNS = ("vertex_id", "u", "v", "K", "h")


def fmt(x) -> str:
    return f"{float(x):.17g}"


def write_solution_csv(path, spec, u, v) -> None:
    """One row per vertex; h is left empty at interior vertices."""
    h_full = np.full(spec.vertex_count, np.nan)
    h_full[spec.ops.boundary_vertices] = spec.h
    v = np.full(spec.vertex_count, np.nan) if v is None else v
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(SOLUTION_COLUMNS)
        for i in range(spec.vertex_count):
            wr.writerow([i, fmt(u[i]), fmt(v[i]), fmt(spec.K[i]), "" if math.isnan(h_full[i]) else fmt(h_full[i])])


def read_solution_csv(path):
    """(u, v) arrays ordered by vertex_id."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = {"vertex_id", "u", "v"} - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"{path}: missing columns {sorted(missing)}")
        rows = [(int(r["vertex_id"]), float(r["u"]), float(r["v"])) for r in reader]
    rows.sort()
    ids = np.array([r[0] for r in rows])
    if len(ids) and not np.array_equal(ids, np.arange(len(ids))):
        raise ValueError(f"{path}: vertex ids must be 0..n-1 without gaps")
    return np.array([r[1] for r in rows]), np.array([r[2] for r in rows])


def write_trace_csv(path, trace) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(TRACE_COLUMNS)
        for row in trace:
            wr.writerow([int(row[0])] + [fmt(x) for x in row[1:]])


def write_off(path, mesh) -> None:
    if mesh.embedding is None:
        raise ValueError(f"{mesh.name} has no embedding; OFF export needs vertex coordinates")
    with open(path, "w") as fh:
        fh.write("OFF\n")
        fh.write(f"{mesh.vertex_count} {mesh.face_count} {mesh.edge_count}\n")
        for p in mesh.embedding:
            fh.write(" ".join(fmt(x) for x in p) + "\n")
        for t in mesh.triangles:
            fh.write(f"3 {t[0]} {t[1]} {t[2]}\n")


def write_edge_lengths_csv(path, mesh) -> None:
    """Intrinsic mesh export: triangles are implied by the edge list plus face_edges."""
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["edge_id", "v0", "v1", "length"])
        for e, ((a, b), l) in enumerate(zip(mesh.edges, mesh.edge_lengths)):
            wr.writerow([e, int(a), int(b), fmt(l)])


def write_faces_csv(path, mesh) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["i", "j", "k"])
        for t in mesh.triangles:
            wr.writerow([int(x) for x in t])


def _clean(obj):
    """Make floats JSON-safe (nan/inf -> None) and numpy scalars plain."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(path, payload) -> None:
    with open(path, "w") as fh:
        json.dump(_clean(payload), fh, indent=2, sort_keys=True)
        fh.write("\n")
