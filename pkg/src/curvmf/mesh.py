"""Intrinsic triangle meshes of the three model surfaces.

A mesh is stored by connectivity and edge lengths only. Downstream operators
never look at coordinates, which is what lets the hyperbolic pair of pants
(no isometric embedding in R^3) share code with the hemisphere and cylinder.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components, dijkstra

from .exceptions import MeshError


@dataclass(frozen=True, eq=False)
class IntrinsicMesh:
    vertex_count: int
    triangles: np.ndarray  # (F, 3) int, consistently wound
    edges: np.ndarray  # (E, 2) int, v0 < v1
    edge_lengths: np.ndarray  # (E,)
    face_edges: np.ndarray  # (F, 3) edge index opposite each local corner
    boundary_loops: tuple
    embedding: Optional[np.ndarray] = None
    name: str = ""

    @property
    def face_count(self) -> int:
        return len(self.triangles)

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    @property
    def boundary_vertices(self) -> np.ndarray:
        """Boundary vertices, loop after loop. Boundary data is aligned to this."""
        if not self.boundary_loops:
            return np.zeros(0, dtype=np.int64)
        return np.concatenate(self.boundary_loops)

    @property
    def face_lengths(self) -> np.ndarray:
        """(F, 3) lengths, column i opposite corner i."""
        return self.edge_lengths[self.face_edges]

    def euler_characteristic(self) -> int:
        return int(self.vertex_count - self.edge_count + self.face_count)

    def edge_index(self) -> dict:
        return {(int(a), int(b)): e for e, (a, b) in enumerate(self.edges)}

    def boundary_edge_mask(self) -> np.ndarray:
        counts = np.bincount(self.face_edges.ravel(), minlength=self.edge_count)
        return counts == 1

    def loop_lengths(self) -> list:
        idx = self.edge_index()
        out = []
        for loop in self.boundary_loops:
            nxt = np.roll(loop, -1)
            total = 0.0
            for a, b in zip(loop, nxt):
                total += self.edge_lengths[idx[(min(a, b), max(a, b))]]
            out.append(total)
        return out

    def max_edge_length(self) -> float:
        return float(self.edge_lengths.max())

    def adjacency(self) -> sparse.csr_matrix:
        """Symmetric edge graph weighted by length."""
        n = self.vertex_count
        i, j = self.edges[:, 0], self.edges[:, 1]
        w = self.edge_lengths
        return sparse.csr_matrix(
            (np.concatenate([w, w]), (np.concatenate([i, j]), np.concatenate([j, i]))),
            shape=(n, n),
        )

    def distance_from(self, sources) -> np.ndarray:
        """Shortest edge-path distance to the nearest of `sources`."""
        d = dijkstra(self.adjacency(), directed=False, indices=np.atleast_1d(sources), min_only=True)
        return np.asarray(d)


@dataclass(frozen=True, eq=False)
class SymmetryOrbits:
    order: int
    orbit_map: np.ndarray  # vertex permutation realizing the rotation by 2*pi/order

    def __post_init__(self):
        if self.order < 2:
            raise MeshError("symmetry order must be >= 2")

    @property
    def classes(self) -> list:
        seen = np.zeros(len(self.orbit_map), dtype=bool)
        out = []
        for v in range(len(self.orbit_map)):
            if seen[v]:
                continue
            orbit = [v]
            w = self.orbit_map[v]
            while w != v:
                orbit.append(int(w))
                w = self.orbit_map[w]
            seen[orbit] = True
            out.append(np.array(orbit))
        return out

    def labels(self) -> np.ndarray:
        """Orbit class label per vertex (label = smallest index in the orbit)."""
        lab = np.arange(len(self.orbit_map))
        cur = self.orbit_map.copy()
        for _ in range(self.order - 1):
            lab = np.minimum(lab, cur)
            cur = self.orbit_map[cur]
        return lab

    def power(self, p: int) -> np.ndarray:
        perm = np.arange(len(self.orbit_map))
        for _ in range(p):
            perm = self.orbit_map[perm]
        return perm


# ---------------------------------------------------------------------------
# construction helpers


def _kahan_area(l0, l1, l2):
    s = np.sort(np.stack([l0, l1, l2], axis=-1), axis=-1)[..., ::-1]
    a, b, c = s[..., 0], s[..., 1], s[..., 2]
    prod = (a + (b + c)) * (c - (a - b)) * (c + (a - b)) * (a + (b - c))
    return 0.25 * np.sqrt(np.maximum(prod, 0.0))


def _extract_edges(triangles: np.ndarray, vertex_count: int):
    tri = np.asarray(triangles, dtype=np.int64)
    # directed half-edges opposite corners 0, 1, 2
    tails = tri[:, [1, 2, 0]]
    heads = tri[:, [2, 0, 1]]
    lo = np.minimum(tails, heads).ravel()
    hi = np.maximum(tails, heads).ravel()
    keys = lo * vertex_count + hi
    uniq, inverse, counts = np.unique(keys, return_inverse=True, return_counts=True)
    edges = np.stack([uniq // vertex_count, uniq % vertex_count], axis=1)
    face_edges = inverse.reshape(-1, 3)
    if np.any(counts > 2):
        bad = int(np.flatnonzero(counts > 2)[0])
        raise MeshError(f"non-manifold edge {tuple(edges[bad])}")
    directed = tails.ravel() * vertex_count + heads.ravel()
    _, dcounts = np.unique(directed, return_counts=True)
    if np.any(dcounts > 1):
        raise MeshError("inconsistent triangle winding (mesh not oriented)")
    return edges, face_edges, counts, tails.ravel(), heads.ravel()


def _extract_loops(edge_counts, face_edges, tails, heads):
    half = face_edges.ravel()
    on_bdry = edge_counts[half] == 1
    nxt = {}
    for a, b in zip(tails[on_bdry], heads[on_bdry]):
        if int(a) in nxt:
            raise MeshError(f"boundary vertex {int(a)} is pinched")
        nxt[int(a)] = int(b)
    loops = []
    remaining = set(nxt)
    while remaining:
        start = min(remaining)
        loop = [start]
        remaining.discard(start)
        v = nxt[start]
        while v != start:
            if v not in remaining:
                raise MeshError("boundary edges do not close into loops")
            loop.append(v)
            remaining.discard(v)
            v = nxt[v]
        loops.append(np.array(loop, dtype=np.int64))
    return tuple(loops)


def build_mesh(
    triangles,
    vertex_count: int,
    length_fn: Callable[[np.ndarray], np.ndarray],
    embedding=None,
    name: str = "",
) -> IntrinsicMesh:
    """Assemble and validate an IntrinsicMesh.

    `length_fn` receives the (E, 2) edge array and returns one length per edge.
    """
    triangles = np.asarray(triangles, dtype=np.int64)
    if triangles.ndim != 2 or triangles.shape[1] != 3:
        raise MeshError("triangles must be an (F, 3) array")
    if np.any(triangles[:, 0] == triangles[:, 1]) or np.any(triangles[:, 1] == triangles[:, 2]) or np.any(
        triangles[:, 0] == triangles[:, 2]
    ):
        raise MeshError("triangle with repeated vertex")
    edges, face_edges, counts, tails, heads = _extract_edges(triangles, vertex_count)
    lengths = np.asarray(length_fn(edges), dtype=float)
    if lengths.shape != (len(edges),) or np.any(~np.isfinite(lengths)) or np.any(lengths <= 0):
        raise MeshError("edge lengths must be finite and positive")
    fl = lengths[face_edges]
    slack = np.minimum.reduce(
        [fl[:, 1] + fl[:, 2] - fl[:, 0], fl[:, 0] + fl[:, 2] - fl[:, 1], fl[:, 0] + fl[:, 1] - fl[:, 2]]
    )
    if np.any(slack <= 0):
        bad = int(np.argmin(slack))
        raise MeshError(f"triangle inequality violated on face {bad}: lengths {fl[bad].tolist()}")
    used = np.unique(triangles)
    if len(used) != vertex_count:
        raise MeshError("mesh has isolated vertices")
    loops = _extract_loops(counts, face_edges, tails, heads)
    adj = sparse.csr_matrix(
        (np.ones(len(edges)), (edges[:, 0], edges[:, 1])), shape=(vertex_count, vertex_count)
    )
    ncomp, _ = connected_components(adj, directed=False)
    if ncomp != 1:
        raise MeshError(f"mesh has {ncomp} connected components")
    emb = None if embedding is None else np.asarray(embedding, dtype=float)
    return IntrinsicMesh(
        vertex_count=int(vertex_count),
        triangles=triangles,
        edges=edges,
        edge_lengths=lengths,
        face_edges=face_edges,
        boundary_loops=loops,
        embedding=emb,
        name=name,
    )


# ---------------------------------------------------------------------------
# hemisphere


def _hemisphere_layout(k: int, refinement: int):
    n_az = k * math.ceil(4 * refinement / k)
    return n_az


def gen_hemisphere(k: int, refinement: int):
    """Unit upper hemisphere with an exact k-fold rotational symmetry.

    Rings of constant polar angle, `refinement` of them between pole and
    equator, each with the same number of vertices (a multiple of k). The pole
    is a single vertex, the only fixed point of the rotation.
    """
    if k < 2:
        raise MeshError("symmetry order k must be >= 2")
    if refinement < 1:
        raise MeshError("refinement must be >= 1 for a valid hemisphere triangulation")
    R = int(refinement)
    n = _hemisphere_layout(k, R)

    def vid(j, a):
        return np.where(j == 0, 0, 1 + (j - 1) * n + np.mod(a, n))

    a = np.arange(n)
    tris = [np.stack([np.zeros(n, dtype=np.int64), vid(1, a), vid(1, a + 1)], axis=1)]
    for j in range(1, R):
        p00, p10, p11, p01 = vid(j, a), vid(j + 1, a), vid(j + 1, a + 1), vid(j, a + 1)
        tris.append(np.stack([p00, p10, p11], axis=1))
        tris.append(np.stack([p00, p11, p01], axis=1))
    triangles = np.concatenate(tris)
    V = 1 + R * n

    ring = np.zeros(V, dtype=np.int64)
    az = np.zeros(V, dtype=np.int64)
    ring[1:] = 1 + np.arange(R * n) // n
    az[1:] = np.arange(R * n) % n
    theta = ring * (0.5 * math.pi / R)
    phi = az * (2.0 * math.pi / n)
    embedding = np.stack([np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), np.cos(theta)], axis=1)
    embedding[0] = (0.0, 0.0, 1.0)

    def lengths(edges):
        # canonical key (ring_lo, ring_hi, signed azimuth offset): invariant under rotation
        j1, j2 = ring[edges[:, 0]], ring[edges[:, 1]]
        a1, a2 = az[edges[:, 0]], az[edges[:, 1]]
        swap = j1 > j2
        j1, j2 = np.where(swap, j2, j1), np.where(swap, j1, j2)
        a1, a2 = np.where(swap, a2, a1), np.where(swap, a1, a2)
        d = np.mod(a2 - a1, n)
        d = np.where(d > n // 2, d - n, d)
        same = j1 == j2
        d = np.where(same, np.abs(d), d)
        d = np.where(j1 == 0, 0, d)
        keys = np.stack([j1, j2, d], axis=1)
        uniq, inv = np.unique(keys, axis=0, return_inverse=True)
        t1 = uniq[:, 0] * (0.5 * math.pi / R)
        t2 = uniq[:, 1] * (0.5 * math.pi / R)
        dp = uniq[:, 2] * (2.0 * math.pi / n)
        p = np.stack([np.sin(t1), np.zeros_like(t1), np.cos(t1)], axis=1)
        q = np.stack([np.sin(t2) * np.cos(dp), np.sin(t2) * np.sin(dp), np.cos(t2)], axis=1)
        chord = np.linalg.norm(p - q, axis=1)
        lens = 2.0 * np.arcsin(np.minimum(chord / 2.0, 1.0))
        return lens[inv.ravel()]

    mesh = build_mesh(triangles, V, lengths, embedding=embedding, name=f"hemisphere(k={k},refinement={R})")
    shift = n // k
    orbit_map = np.zeros(V, dtype=np.int64)
    orbit_map[1:] = 1 + (ring[1:] - 1) * n + np.mod(az[1:] + shift, n)
    return mesh, SymmetryOrbits(order=k, orbit_map=orbit_map)


# ---------------------------------------------------------------------------
# flat meshes


def gen_flat_cylinder(length: float = 1.0, n_axial: int = 8, n_circ: int = 16) -> IntrinsicMesh:
    """Flat cylinder [0, length] x (circle of circumference 2*pi)."""
    if not length > 0:
        raise MeshError("cylinder length must be positive")
    if n_axial < 1 or n_circ < 3:
        raise MeshError("need n_axial >= 1 and n_circ >= 3")
    dx = length / n_axial
    dy = 2.0 * math.pi / n_circ
    i, j = np.meshgrid(np.arange(n_axial), np.arange(n_circ), indexing="ij")
    i, j = i.ravel(), j.ravel()

    def vid(ii, jj):
        return ii * n_circ + np.mod(jj, n_circ)

    p00, p01, p11, p10 = vid(i, j), vid(i, j + 1), vid(i + 1, j + 1), vid(i + 1, j)
    triangles = np.concatenate([np.stack([p00, p01, p11], 1), np.stack([p00, p11, p10], 1)])
    V = (n_axial + 1) * n_circ
    vi = np.arange(V) // n_circ
    vj = np.arange(V) % n_circ
    phi = vj * dy
    embedding = np.stack([np.cos(phi), np.sin(phi), vi * dx], axis=1)
    diag = math.hypot(dx, dy)

    def lengths(edges):
        di = np.abs(vi[edges[:, 0]] - vi[edges[:, 1]])
        dj = np.abs(vj[edges[:, 0]] - vj[edges[:, 1]])
        circ = (dj == 1) | (dj == n_circ - 1)
        out = np.where(di == 0, dy, np.where(circ, diag, dx))
        return out

    return build_mesh(
        triangles, V, lengths, embedding=embedding, name=f"cylinder(L={length},{n_axial}x{n_circ})"
    )


def gen_flat_grid(nx: int, ny: int, width: float = 1.0, height: float = 1.0) -> IntrinsicMesh:
    """Flat rectangle [0, width] x [0, height]; a disk-topology test surface."""
    if nx < 1 or ny < 1:
        raise MeshError("need nx, ny >= 1")
    dx, dy = width / nx, height / ny
    i, j = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
    i, j = i.ravel(), j.ravel()

    def vid(ii, jj):
        return ii * (ny + 1) + jj

    p00, p10, p11, p01 = vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)
    triangles = np.concatenate([np.stack([p00, p10, p11], 1), np.stack([p00, p11, p01], 1)])
    V = (nx + 1) * (ny + 1)
    xy = np.stack([(np.arange(V) // (ny + 1)) * dx, (np.arange(V) % (ny + 1)) * dy], axis=1)
    embedding = np.column_stack([xy, np.zeros(V)])

    def lengths(edges):
        return np.linalg.norm(xy[edges[:, 0]] - xy[edges[:, 1]], axis=1)

    return build_mesh(triangles, V, lengths, embedding=embedding, name=f"grid({nx}x{ny})")


# ---------------------------------------------------------------------------
# hyperbolic pair of pants (hyperboloid model, Lorentz signature (+, +, -))


def _lorentz(x, y):
    return x[..., 0] * y[..., 0] + x[..., 1] * y[..., 1] - x[..., 2] * y[..., 2]


def hyperbolic_distance(p, q):
    d = p - q
    gap = np.maximum(_lorentz(d, d), 0.0)  # = 4 sinh^2(dist / 2)
    return 2.0 * np.arcsinh(0.5 * np.sqrt(gap))


def _hyp_midpoint(p, q):
    m = p + q
    return m / np.sqrt(-_lorentz(m, m))


def right_angled_hexagon(a: float, b: float, c: float) -> np.ndarray:
    """Corners of the right-angled hexagon with alternate sides a, b, c.

    Sides in cyclic order are a, c', b, a', c, b' where x' is the side opposite
    x. Returns the six corners on the hyperboloid; side i joins corner i to i+1.
    """

    def opposite(x, y, z):
        return math.acosh((math.cosh(y) * math.cosh(z) + math.cosh(x)) / (math.sinh(y) * math.sinh(z)))

    sides = [a, opposite(c, a, b), b, opposite(a, b, c), c, opposite(b, c, a)]
    G = np.diag([1.0, 1.0, -1.0])
    p = np.array([0.0, 0.0, 1.0])
    t = np.array([1.0, 0.0, 0.0])
    corners = []
    for s in sides:
        corners.append(p.copy())
        p, t = math.cosh(s) * p + math.sinh(s) * t, math.sinh(s) * p + math.cosh(s) * t
        n = G @ np.cross(p, t)
        t = n  # left turn by a right angle
    closure = hyperbolic_distance(p, corners[0])
    if closure > 1e-8:
        raise MeshError(f"hexagon failed to close (gap {closure:.3e})")
    return np.array(corners)


def gen_pair_of_pants(boundary_lengths: Sequence[float] = (1.0, 1.0, 1.0), refinement: int = 3) -> IntrinsicMesh:
    """Hyperbolic pair of pants with geodesic boundary of the given lengths.

    Two copies of a right-angled hexagon glued along the seams (the sides
    opposite the half-boundaries). Each hexagon is fanned from its center and
    midpoint-subdivided `refinement` times along hyperbolic geodesics.
    """
    lens = [float(x) for x in boundary_lengths]
    if len(lens) != 3 or min(lens) <= 0:
        raise MeshError("need three positive boundary lengths")
    if refinement < 1:
        raise MeshError("refinement must be >= 1 (coarser gluing produces doubled edges)")
    corners = right_angled_hexagon(0.5 * lens[0], 0.5 * lens[1], 0.5 * lens[2])
    center = corners.sum(axis=0)
    center = center / np.sqrt(-_lorentz(center, center))
    pts = [center] + list(corners)
    sides = [set()] + [{(i - 1) % 6, i} for i in range(6)]
    tris = [(0, 1 + i, 1 + (i + 1) % 6) for i in range(6)]
    for _ in range(int(refinement)):
        mids = {}

        def mid(u, v):
            key = (min(u, v), max(u, v))
            if key not in mids:
                pts.append(_hyp_midpoint(pts[u], pts[v]))
                sides.append(sides[u] & sides[v])
                mids[key] = len(pts) - 1
            return mids[key]

        new = []
        for a, b, c in tris:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new += [(a, ab, ca), (ab, b, bc), (ca, bc, c), (ab, bc, ca)]
        tris = new
    pts = np.array(pts)
    N = len(pts)
    seam = np.array([bool(s & {1, 3, 5}) for s in sides])
    # second copy: seam vertices are shared, the rest get fresh indices
    copy2 = np.empty(N, dtype=np.int64)
    fresh = np.flatnonzero(~seam)
    copy2[seam] = np.flatnonzero(seam)
    copy2[fresh] = N + np.arange(len(fresh))
    tris = np.array(tris, dtype=np.int64)
    tris2 = copy2[tris][:, ::-1]
    triangles = np.concatenate([tris, tris2])
    V = N + len(fresh)
    source = np.concatenate([np.arange(N), fresh])  # hexagon point behind each vertex

    def lengths(edges):
        return hyperbolic_distance(pts[source[edges[:, 0]]], pts[source[edges[:, 1]]])

    mesh = build_mesh(
        triangles, V, lengths, name=f"pants({lens[0]:g},{lens[1]:g},{lens[2]:g};refinement={refinement})"
    )
    # order loops as boundary 1, 2, 3 (hexagon sides 0, 2, 4)
    side_of = []
    for loop in mesh.boundary_loops:
        tags = set.intersection(*[sides[source[v]] for v in loop if not seam[source[v]]] or [set()])
        side_of.append(min(tags & {0, 2, 4}) if tags & {0, 2, 4} else 99)
    order = np.argsort(side_of, kind="stable")
    return dataclasses.replace(mesh, boundary_loops=tuple(mesh.boundary_loops[i] for i in order))

