"""Prescribed curvature data: analytic families and per-vertex CSV samples."""
from __future__ import annotations

import csv
import pathlib
from typing import Mapping

import numpy as np

from .exceptions import ConfigError
from .mesh import IntrinsicMesh


def azimuth(mesh: IntrinsicMesh) -> np.ndarray:
    if mesh.embedding is None:
        raise ConfigError(f"azimuthal families need an embedded surface; {mesh.name!r} is intrinsic only")
    return np.arctan2(mesh.embedding[:, 1], mesh.embedding[:, 0])


def constant(mesh: IntrinsicMesh, c: float) -> np.ndarray:
    return np.full(mesh.vertex_count, float(c))


def azimuthal_cosine(mesh: IntrinsicMesh, a: float, b: float, m: int) -> np.ndarray:
    """a + b cos(m * azimuth); k-symmetric whenever m is a multiple of k."""
    return a + b * np.cos(m * azimuth(mesh))


def cap_bump(mesh: IntrinsicMesh, center: int, radius: float, height: float, base: float = 0.0) -> np.ndarray:
    """base + height * (1 - (d/radius)^2)^2 inside the geodesic ball, d = edge-path distance."""
    d = mesh.distance_from([int(center)])
    s = np.clip(1.0 - (d / radius) ** 2, 0.0, None)
    return base + height * s**2


FAMILIES = {
    "constant": constant,
    "azimuthal_cosine": azimuthal_cosine,
    "cap_bump": cap_bump,
}


def load_samples(path, mesh: IntrinsicMesh) -> np.ndarray:
    """Per-vertex values from a CSV with header vertex_id,value (unlisted vertices get nan)."""
    out = np.full(mesh.vertex_count, np.nan)
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"vertex_id", "value"} <= set(reader.fieldnames):
            raise ConfigError(f"{path}: expected columns vertex_id,value")
        for row in reader:
            vid = int(row["vertex_id"])
            if not 0 <= vid < mesh.vertex_count:
                raise ConfigError(f"{path}: vertex id {vid} out of range")
            out[vid] = float(row["value"])
    return out


def evaluate(entry, mesh: IntrinsicMesh, *, where: str = "interior", base_dir=None) -> np.ndarray:
    """Evaluate a curvature entry (number, family mapping or sample file) at vertices.

    `where="boundary"` restricts the result to mesh.boundary_vertices.
    """
    if isinstance(entry, (int, float)):
        values = constant(mesh, entry)
    elif isinstance(entry, Mapping):
        params = dict(entry)
        if "file" in params:
            path = pathlib.Path(params["file"])
            if base_dir is not None and not path.is_absolute():
                path = pathlib.Path(base_dir) / path
            values = load_samples(path, mesh)
        else:
            family = params.pop("family", None)
            if family not in FAMILIES:
                raise ConfigError(f"unknown curvature family {family!r}; choose from {sorted(FAMILIES)}")
            try:
                values = FAMILIES[family](mesh, **params)
            except TypeError as exc:
                raise ConfigError(f"bad parameters for family {family!r}: {exc}") from None
    else:
        raise ConfigError(f"cannot interpret curvature entry {entry!r}")
    if where == "boundary":
        values = values[mesh.boundary_vertices]
    if np.any(~np.isfinite(values)):
        raise ConfigError(f"curvature samples missing or non-finite on the {where}")
    return np.asarray(values, dtype=float)


def is_symmetric_family(entry, k: int) -> bool:
    if isinstance(entry, (int, float)):
        return True
    if isinstance(entry, Mapping):
        fam = entry.get("family")
        if fam == "constant":
            return True
        if fam == "azimuthal_cosine":
            return int(entry.get("m", 0)) % k == 0 or float(entry.get("b", 0.0)) == 0.0
    return False


def quotient(K_boundary: np.ndarray, h: np.ndarray) -> np.ndarray:
    """h / sqrt|K| at boundary vertices."""
    with np.errstate(divide="ignore"):
        return h / np.sqrt(np.abs(K_boundary))


__all__ = [
    "azimuth",
    "constant",
    "azimuthal_cosine",
    "cap_bump",
    "evaluate",
    "load_samples",
    "quotient",
    "is_symmetric_family",
]
