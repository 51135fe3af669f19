"""Mesh coarsening by quadric-error-metric half-edge collapse, and the
down/up sampling transforms between successive levels."""

import heapq
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .exceptions import TooFewVerticesError
from .mesh import MeshTopology

BOUNDARY_WEIGHT = 100.0


@dataclass(frozen=True, eq=False)
class PoolingLevel:
    """Transforms between a fine level and the next coarser one."""

    fine: MeshTopology
    coarse: MeshTopology
    down: sp.csr_matrix  # (V_coarse, V_fine), one unit entry per row
    up: sp.csr_matrix  # (V_fine, V_coarse), barycentric rows
    kept: np.ndarray  # fine index of every coarse vertex


@dataclass(frozen=True, eq=False)
class PoolingHierarchy:
    levels: tuple

    @property
    def topologies(self):
        return [self.levels[0].fine] + [lvl.coarse for lvl in self.levels]

    @property
    def sizes(self):
        return [t.n_vertices for t in self.topologies]

    def __len__(self):
        return len(self.levels)


def _plane_quadric(n, p, w):
    d = -float(n @ p)
    q = np.append(n, d)
    return w * np.outer(q, q)


def _vertex_quadrics(verts, faces, boundary_edges):
    Q = np.zeros((len(verts), 4, 4))
    for f in faces:
        p0, p1, p2 = verts[f]
        n = np.cross(p1 - p0, p2 - p0)
        area2 = np.linalg.norm(n)
        if area2 == 0:
            continue
        K = _plane_quadric(n / area2, p0, 0.5 * area2)
        for i in f:
            Q[i] += K
    # planes through boundary edges, orthogonal to the adjacent face, keep the outline
    face_of_edge = {}
    for f in faces:
        for a, b in ((f[0], f[1]), (f[1], f[2]), (f[2], f[0])):
            face_of_edge[(min(a, b), max(a, b))] = f
    for a, b in boundary_edges:
        f = face_of_edge[(a, b)]
        p0, p1, p2 = verts[f]
        fn = np.cross(p1 - p0, p2 - p0)
        e = verts[b] - verts[a]
        n = np.cross(e, fn)
        norm = np.linalg.norm(n)
        if norm == 0:
            continue
        K = _plane_quadric(n / norm, verts[a], BOUNDARY_WEIGHT * float(e @ e))
        Q[a] += K
        Q[b] += K
    return Q


class _Collapser:
    """Half-edge collapse ``u -> v`` where ``v`` keeps its reference position.

    Cost is the summed quadric evaluated at ``v`` plus the squared edge
    length weighted by the surface area both endpoints already represent.
    The second term spreads collapses evenly over planar regions, where every
    quadric vanishes. Ties go to the lower vertex indices.
    """

    def __init__(self, topology):
        self.verts = topology.vertices
        V = topology.n_vertices
        self.faces = {i: tuple(int(x) for x in f) for i, f in enumerate(topology.triangles)}
        self.vfaces = [set() for _ in range(V)]
        for fid, f in self.faces.items():
            for i in f:
                self.vfaces[i].add(fid)
        self.alive = np.ones(V, dtype=bool)
        self.version = np.zeros(V, dtype=np.int64)
        bnd = topology.boundary_edges
        self.boundary = np.zeros(V, dtype=bool)
        self.boundary[bnd.ravel()] = True
        self.Q = _vertex_quadrics(self.verts, topology.triangles, bnd)
        self.mass = topology.vertex_areas.copy()
        self.heap = []
        for a, b in topology.edges:
            self._push(int(a), int(b))

    def neighbors(self, i):
        out = set()
        for fid in self.vfaces[i]:
            out.update(self.faces[fid])
        out.discard(i)
        return out

    def _cost(self, u, v):
        p = np.append(self.verts[v], 1.0)
        d = self.verts[u] - self.verts[v]
        return float(p @ (self.Q[u] + self.Q[v]) @ p) + (self.mass[u] + self.mass[v]) * float(d @ d)

    def _push(self, a, b):
        for u, v in ((a, b), (b, a)):
            entry = (self._cost(u, v), min(u, v), max(u, v), u, v,
                     int(self.version[u]), int(self.version[v]))
            heapq.heappush(self.heap, entry)

    def _valid(self, u, v):
        shared = self.vfaces[u] & self.vfaces[v]
        if not shared:
            return False
        if self.boundary[u] and not (self.boundary[v] and len(shared) == 1):
            return False
        # link condition keeps the surface manifold
        opposite = set()
        for fid in shared:
            opposite.update(self.faces[fid])
        opposite -= {u, v}
        if (self.neighbors(u) & self.neighbors(v)) != opposite:
            return False
        if self.boundary[u] and self.boundary[v] and len(shared) == 1:
            # never fold a boundary strip down to a single triangle
            if len(self.vfaces[u]) == 1 and len(self.vfaces[v]) == 1:
                return False
        pv = self.verts[v]
        for fid in self.vfaces[u] - shared:
            f = self.faces[fid]
            old = [self.verts[i] for i in f]
            new = [pv if i == u else self.verts[i] for i in f]
            n_old = np.cross(old[1] - old[0], old[2] - old[0])
            n_new = np.cross(new[1] - new[0], new[2] - new[0])
            if n_new @ n_old <= 1e-3 * (n_old @ n_old):
                return False
        return True

    def collapse(self, u, v):
        shared = self.vfaces[u] & self.vfaces[v]
        for fid in shared:
            for i in self.faces[fid]:
                self.vfaces[i].discard(fid)
            del self.faces[fid]
        for fid in list(self.vfaces[u]):
            self.faces[fid] = tuple(v if i == u else i for i in self.faces[fid])
            self.vfaces[v].add(fid)
        self.vfaces[u].clear()
        self.alive[u] = False
        self.Q[v] = self.Q[v] + self.Q[u]
        self.mass[v] += self.mass[u]
        self.version[v] += 1
        self.version[u] += 1
        for n in self.neighbors(v):
            self._push(v, n)

    def run(self, target):
        n_alive = int(self.alive.sum())
        while n_alive > target:
            if not self.heap:
                raise TooFewVerticesError(
                    f"edge collapse stalled at {n_alive} vertices (target {target})"
                )
            _, _, _, u, v, ver_u, ver_v = heapq.heappop(self.heap)
            if not (self.alive[u] and self.alive[v]):
                continue
            if ver_u != self.version[u] or ver_v != self.version[v]:
                continue
            if not self._valid(u, v):
                continue
            self.collapse(u, v)
            n_alive -= 1
        kept = np.flatnonzero(self.alive)
        remap = -np.ones(len(self.alive), dtype=np.int64)
        remap[kept] = np.arange(len(kept))
        tris = np.array([remap[list(f)] for f in self.faces.values()], dtype=np.int64)
        return kept, tris


def _closest_points_on_triangles(p, a, b, c):
    """Barycentric weights of the closest point on each triangle to ``p``.

    Vectorised Ericson closest-point test; ``p`` (3,) and ``a, b, c`` (T, 3).
    Returns (weights (T, 3), squared distances (T,)).
    """
    ab = b - a
    ac = c - a
    ap = p - a
    d1 = np.einsum("ij,ij->i", ab, ap)
    d2 = np.einsum("ij,ij->i", ac, ap)
    bp = p - b
    d3 = np.einsum("ij,ij->i", ab, bp)
    d4 = np.einsum("ij,ij->i", ac, bp)
    cp = p - c
    d5 = np.einsum("ij,ij->i", ab, cp)
    d6 = np.einsum("ij,ij->i", ac, cp)
    T = len(a)
    w = np.zeros((T, 3))
    done = np.zeros(T, dtype=bool)

    def assign(mask, wa, wb, wc):
        m = mask & ~done
        w[m, 0] = wa[m] if np.ndim(wa) else wa
        w[m, 1] = wb[m] if np.ndim(wb) else wb
        w[m, 2] = wc[m] if np.ndim(wc) else wc
        done[m] = True

    with np.errstate(divide="ignore", invalid="ignore"):
        assign((d1 <= 0) & (d2 <= 0), 1.0, 0.0, 0.0)
        assign((d3 >= 0) & (d4 <= d3), 0.0, 1.0, 0.0)
        assign((d6 >= 0) & (d5 <= d6), 0.0, 0.0, 1.0)
        vc = d1 * d4 - d3 * d2
        t = d1 / (d1 - d3)
        assign((vc <= 0) & (d1 >= 0) & (d3 <= 0), 1 - t, t, 0.0)
        vb = d5 * d2 - d1 * d6
        t = d2 / (d2 - d6)
        assign((vb <= 0) & (d2 >= 0) & (d6 <= 0), 1 - t, 0.0, t)
        va = d3 * d6 - d5 * d4
        t = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        assign((va <= 0) & ((d4 - d3) >= 0) & ((d5 - d6) >= 0), 0.0, 1 - t, t)
        denom = va + vb + vc
        bw = vb / denom
        cw = vc / denom
        assign(np.ones(T, dtype=bool), 1 - bw - cw, bw, cw)
    q = w[:, :1] * a + w[:, 1:2] * b + w[:, 2:] * c
    return w, ((q - p) ** 2).sum(axis=1)


def _up_transform(fine, coarse, kept):
    Vf, Vc = fine.n_vertices, coarse.n_vertices
    rows, cols, vals = [], [], []
    is_kept = -np.ones(Vf, dtype=np.int64)
    is_kept[kept] = np.arange(Vc)
    tri = coarse.triangles
    a, b, c = (coarse.vertices[tri[:, k]] for k in range(3))
    for i in range(Vf):
        if is_kept[i] >= 0:
            rows.append(i)
            cols.append(is_kept[i])
            vals.append(1.0)
            continue
        w, dist = _closest_points_on_triangles(fine.vertices[i], a, b, c)
        t = int(np.argmin(dist))
        for k in range(3):
            if w[t, k] > 1e-12:
                rows.append(i)
                cols.append(int(tri[t, k]))
                vals.append(float(w[t, k]))
    U = sp.csr_matrix((vals, (rows, cols)), shape=(Vf, Vc))
    row_sum = np.asarray(U.sum(axis=1)).ravel()
    return sp.csr_matrix(sp.diags(1.0 / row_sum) @ U)


def coarsen(topology, factor=2):
    """One pooling level: keep ``ceil(V / factor)`` vertices."""
    target = int(np.ceil(topology.n_vertices / factor))
    kept, tris = _Collapser(topology).run(target)
    coarse = MeshTopology(topology.vertices[kept], tris)
    down = sp.csr_matrix(
        (np.ones(len(kept)), (np.arange(len(kept)), kept)),
        shape=(len(kept), topology.n_vertices),
    )
    up = _up_transform(topology, coarse, kept)
    return PoolingLevel(topology, coarse, down, up, kept)


def build_pooling_hierarchy(topology, levels=4, factor=2):
    if levels < 1:
        raise ValueError("levels must be >= 1")
    if factor < 2:
        raise ValueError("factor must be >= 2")
    if topology.n_vertices / factor**levels < 4:
        raise TooFewVerticesError(
            f"{topology.n_vertices} vertices cannot be pooled {levels} times by {factor}"
        )
    out = []
    current = topology
    for _ in range(levels):
        level = coarsen(current, factor)
        out.append(level)
        current = level.coarse
    return PoolingHierarchy(tuple(out))
