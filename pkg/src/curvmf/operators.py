"""First-order finite element operators assembled from edge lengths."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .mesh import IntrinsicMesh, _kahan_area

MIN_ANGLE = 1e-3


@dataclass(frozen=True, eq=False)
class OperatorSet:
    stiffness: sparse.csr_matrix
    vertex_areas: np.ndarray
    boundary_vertices: np.ndarray
    boundary_weights: np.ndarray
    face_areas: np.ndarray
    cotangents: np.ndarray  # (F, 3), cot of the angle at each corner

    @property
    def area(self) -> float:
        return float(self.vertex_areas.sum())

    @property
    def boundary_length(self) -> float:
        return float(self.boundary_weights.sum())

    @property
    def vertex_count(self) -> int:
        return len(self.vertex_areas)

    def boundary_scatter(self, values) -> np.ndarray:
        """Per-boundary-vertex values placed into a per-vertex array (zeros inside)."""
        out = np.zeros(self.vertex_count)
        out[self.boundary_vertices] = values
        return out


def corner_angles(face_lengths: np.ndarray) -> np.ndarray:
    l0, l1, l2 = face_lengths[:, 0], face_lengths[:, 1], face_lengths[:, 2]
    c0 = (l1**2 + l2**2 - l0**2) / (2 * l1 * l2)
    c1 = (l0**2 + l2**2 - l1**2) / (2 * l0 * l2)
    c2 = (l0**2 + l1**2 - l2**2) / (2 * l0 * l1)
    return np.arccos(np.clip(np.stack([c0, c1, c2], axis=1), -1.0, 1.0))


def assemble_operators(mesh: IntrinsicMesh) -> OperatorSet:
    """Cotangent stiffness, lumped vertex areas and boundary weights.

    Neumann (natural) boundary: no rows are eliminated. Negative cotangent
    weights from obtuse angles are kept.
    """
    fl = mesh.face_lengths
    l0, l1, l2 = fl[:, 0], fl[:, 1], fl[:, 2]
    area = _kahan_area(l0, l1, l2)
    # cot(angle at corner i) = (l_j^2 + l_k^2 - l_i^2) / (4 A)
    cot = np.stack(
        [(l1**2 + l2**2 - l0**2), (l0**2 + l2**2 - l1**2), (l0**2 + l1**2 - l2**2)], axis=1
    ) / (4.0 * area[:, None])
    angles = corner_angles(fl)
    small = np.flatnonzero(angles.min(axis=1) < MIN_ANGLE)
    if len(small):
        warnings.warn(
            f"{len(small)} near-degenerate triangles (min angle < {MIN_ANGLE} rad), first face {int(small[0])}",
            RuntimeWarning,
            stacklevel=2,
        )

    T = mesh.triangles
    n = mesh.vertex_count
    rows, cols, vals = [], [], []
    for i in range(3):
        j, k = (i + 1) % 3, (i + 2) % 3
        w = 0.5 * cot[:, i]
        a, b = T[:, j], T[:, k]
        rows += [a, b, a, b]
        cols += [b, a, a, b]
        vals += [-w, -w, w, w]
    L = sparse.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    ).tocsr()
    L.sum_duplicates()

    vertex_areas = np.bincount(T.ravel(), weights=np.repeat(area / 3.0, 3), minlength=n)

    bverts = mesh.boundary_vertices
    bweights = np.zeros(len(bverts))
    eidx = mesh.edge_index()
    offset = 0
    for loop in mesh.boundary_loops:
        nxt = np.roll(loop, -1)
        seg = np.array([mesh.edge_lengths[eidx[(min(a, b), max(a, b))]] for a, b in zip(loop, nxt)])
        bweights[offset : offset + len(loop)] = 0.5 * (seg + np.roll(seg, 1))
        offset += len(loop)
    return OperatorSet(
        stiffness=L,
        vertex_areas=vertex_areas,
        boundary_vertices=bverts,
        boundary_weights=bweights,
        face_areas=area,
        cotangents=cot,
    )


def edge_weight(ops: OperatorSet, i: int, j: int) -> float:
    """Cotangent weight of edge (i, j), i.e. minus the stiffness entry."""
    return -float(ops.stiffness[i, j])


def dirichlet_energy(ops: OperatorSet, u) -> float:
    """u^T L u, the discrete integral of |grad u|^2 (callers apply the 1/2)."""
    u = np.asarray(u, dtype=float)
    if u.shape != (ops.vertex_count,):
        raise ValueError(f"field has shape {u.shape}, expected ({ops.vertex_count},)")
    return float(u @ (ops.stiffness @ u))


def integrate_interior(ops: OperatorSet, f) -> float:
    f = np.asarray(f, dtype=float)
    if f.shape != ops.vertex_areas.shape:
        raise ValueError(f"interior field has shape {f.shape}, expected {ops.vertex_areas.shape}")
    return float(f @ ops.vertex_areas)


def integrate_boundary(ops: OperatorSet, f) -> float:
    f = np.asarray(f, dtype=float)
    if f.shape != ops.boundary_weights.shape:
        raise ValueError(f"boundary field has shape {f.shape}, expected {ops.boundary_weights.shape}")
    return float(f @ ops.boundary_weights)


def euler_characteristic(mesh: IntrinsicMesh) -> int:
    return mesh.euler_characteristic()


@dataclass(frozen=True)
class BackgroundReport:
    interior_defect: float  # ~ integral of the background Gaussian curvature
    boundary_turning: float  # ~ integral of the background geodesic curvature
    chi: int
    residual: float

    def ok(self, tol: float = 1e-8) -> bool:
        return self.residual <= tol


def background_check(mesh: IntrinsicMesh) -> BackgroundReport:
    """Angle defects of the flat-triangle metric and the Gauss-Bonnet residual."""
    angles = corner_angles(mesh.face_lengths)
    total = np.bincount(mesh.triangles.ravel(), weights=angles.ravel(), minlength=mesh.vertex_count)
    on_bdry = np.zeros(mesh.vertex_count, dtype=bool)
    on_bdry[mesh.boundary_vertices] = True
    interior = float(np.sum(2 * math.pi - total[~on_bdry]))
    turning = float(np.sum(math.pi - total[on_bdry]))
    chi = mesh.euler_characteristic()
    return BackgroundReport(interior, turning, chi, abs(interior + turning - 2 * math.pi * chi))


def export_coo_csv(ops: OperatorSet, path) -> None:
    coo = ops.stiffness.tocoo()
    with open(path, "w") as fh:
        fh.write("row,col,value\n")
        for r, c, v in zip(coo.row, coo.col, coo.data):
            fh.write(f"{r},{c},{v:.17g}\n")
