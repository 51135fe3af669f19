"""Fixed-topology sensor surfaces and the spectral machinery on top of them."""

import struct
import warnings
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_mesh_batch
from .exceptions import (
    CorruptFileError,
    IsolatedVertexError,
    ShapeMismatchError,
    ZeroVarianceError,
)

FRAME_MAGIC = b"ACRM"
FRAME_VERSION = 1


@dataclass(frozen=True, eq=False)
class MeshTopology:
    """Triangulated surface with reference (undeformed) vertex positions in mm."""

    vertices: np.ndarray
    triangles: np.ndarray

    def __post_init__(self):
        v = np.ascontiguousarray(self.vertices, dtype=np.float64)
        f = np.ascontiguousarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if v.ndim != 2 or v.shape[1] != 3:
            raise ShapeMismatchError(f"vertices must be (V, 3), got {v.shape}")
        if f.size and (f.min() < 0 or f.max() >= v.shape[0]):
            raise ValueError("triangle index out of range")
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", f)

    @property
    def n_vertices(self):
        return self.vertices.shape[0]

    @cached_property
    def edges(self):
        f = self.triangles
        e = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
        e.sort(axis=1)
        return np.unique(e, axis=0)

    @cached_property
    def adjacency(self):
        V = self.n_vertices
        e = self.edges
        A = sp.coo_matrix((np.ones(len(e)), (e[:, 0], e[:, 1])), shape=(V, V))
        return (A + A.T).tocsr()

    @cached_property
    def laplacian(self):
        return build_laplacian(self)

    @cached_property
    def face_normals(self):
        v = self.vertices
        f = self.triangles
        return np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]])

    @cached_property
    def vertex_normals(self):
        """Unit outward normals (area-weighted face normal average)."""
        n = np.zeros_like(self.vertices)
        fn = self.face_normals
        for k in range(3):
            np.add.at(n, self.triangles[:, k], fn)
        norm = np.linalg.norm(n, axis=1, keepdims=True)
        norm[norm == 0] = 1.0
        return n / norm

    @cached_property
    def vertex_areas(self):
        """Barycentric (one third of incident triangle area) vertex areas, mm^2."""
        a = 0.5 * np.linalg.norm(self.face_normals, axis=1) / 3.0
        out = np.zeros(self.n_vertices)
        for k in range(3):
            np.add.at(out, self.triangles[:, k], a)
        return out

    @cached_property
    def boundary_edges(self):
        f = self.triangles
        e = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
        e.sort(axis=1)
        uniq, counts = np.unique(e, axis=0, return_counts=True)
        return uniq[counts == 1]


@dataclass(frozen=True, eq=False)
class SurfaceMesh:
    topology: MeshTopology
    positions: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.positions, dtype=np.float64)
        if p.shape != (self.topology.n_vertices, 3):
            raise ShapeMismatchError(
                f"positions {p.shape} do not match topology with {self.topology.n_vertices} vertices"
            )
        if not np.all(np.isfinite(p)):
            raise ValueError("non-finite vertex coordinates")
        object.__setattr__(self, "positions", p)


def build_laplacian(topology, n_vertices=None):
    """Symmetric normalized Laplacian ``I - D^-1/2 A D^-1/2`` of the edge graph.

    Accepts a :class:`MeshTopology` or a raw triangle array (then
    ``n_vertices`` is required).
    """
    if isinstance(topology, MeshTopology):
        A = topology.adjacency
        V = topology.n_vertices
    else:
        tri = np.asarray(topology, dtype=np.int64).reshape(-1, 3)
        V = int(n_vertices if n_vertices is not None else tri.max() + 1)
        A = MeshTopology(np.zeros((V, 3)), tri).adjacency
    deg = np.asarray(A.sum(axis=1)).ravel()
    isolated = np.flatnonzero(deg == 0)
    if isolated.size:
        raise IsolatedVertexError(isolated)
    n_comp, _ = connected_components(A, directed=False)
    if n_comp > 1:
        warnings.warn(f"mesh graph has {n_comp} connected components", RuntimeWarning, stacklevel=2)
    d = sp.diags(1.0 / np.sqrt(deg))
    L = sp.identity(V, format="csr") - d @ A @ d
    return sp.csr_matrix(L)


@dataclass(frozen=True, eq=False)
class ChebBasis:
    laplacian: sp.spmatrix
    order: int
    lambda_max: float = 2.0

    def __post_init__(self):
        if self.order < 1:
            raise ValueError("Chebyshev order K must be >= 1")

    @cached_property
    def scaled(self):
        V = self.laplacian.shape[0]
        return sp.csr_matrix((2.0 / self.lambda_max) * self.laplacian - sp.identity(V))


def chebyshev_terms(scaled, X, K):
    """Return ``[T_0(L)X, ..., T_{K-1}(L)X]`` for a 2-D block ``X`` of shape (V, m)."""
    terms = [X]
    if K > 1:
        terms.append(scaled @ X)
    for _ in range(2, K):
        terms.append(2.0 * (scaled @ terms[-1]) - terms[-2])
    return terms


def chebyshev_adjoint(scaled, G, K):
    """``sum_k T_k(L) G[k]`` by Clenshaw recurrence; ``G`` has shape (K, V, m).

    Because the scaled Laplacian is symmetric this is also the adjoint of
    :func:`chebyshev_terms`.
    """
    if K == 1:
        return G[0].copy()
    b1 = G[K - 1].copy()
    b2 = np.zeros_like(b1)
    for k in range(K - 2, 0, -1):
        b1, b2 = G[k] + 2.0 * (scaled @ b1) - b2, b1
    return G[0] + scaled @ b1 - b2


def chebyshev_apply(basis, X, W):
    """``Y = sum_k T_k(L~) X W_k`` for ``X`` (V, F) and ``W`` (K, F, F')."""
    X = np.asarray(X)
    W = np.asarray(W)
    V = basis.laplacian.shape[0]
    if X.ndim != 2 or X.shape[0] != V:
        raise ShapeMismatchError(f"X must be ({V}, F), got {X.shape}")
    if W.ndim != 3 or W.shape[0] != basis.order or W.shape[1] != X.shape[1]:
        raise ShapeMismatchError(
            f"W must be ({basis.order}, {X.shape[1]}, F'), got {W.shape}"
        )
    terms = chebyshev_terms(basis.scaled, X, basis.order)
    return sum(t @ w for t, w in zip(terms, W))


@dataclass(frozen=True)
class MeshStats:
    """Standardization statistics: per-vertex mean ``(V, 3)`` and per-axis scale ``(3,)``."""

    mean: np.ndarray
    std: np.ndarray


def normalize_mesh(mesh, stats):
    std = np.asarray(stats.std, dtype=np.float64)
    if np.any(std <= 0):
        raise ZeroVarianceError("standard deviation must be positive for every coordinate")
    return (np.asarray(mesh, dtype=np.float64) - stats.mean) / std


def denormalize_mesh(mesh, stats):
    return np.asarray(mesh, dtype=np.float64) * stats.std + stats.mean


class MeshScaler(TransformerMixin, BaseEstimator):
    """Z-score meshes: mean mesh per vertex coordinate, one pooled scale per axis.

    Axes whose spread is at most ``min_std`` (float32 storage noise, in the
    input units) are stored with ``std = 0``: they normalize to zero and
    decode to the mean mesh, so network output on an axis that never moves
    cannot leak into positions. A training set with no variation at all
    raises :class:`ZeroVarianceError`.
    """

    def __init__(self, min_std=1e-6):
        self.min_std = min_std

    def fit(self, X, y=None):
        X = check_mesh_batch(X)
        mean = X.mean(axis=0)
        std = np.sqrt(((X - mean) ** 2).mean(axis=(0, 1)))
        constant = std <= self.min_std
        if np.all(constant):
            raise ZeroVarianceError("training meshes are all identical")
        self.stats_ = MeshStats(mean, np.where(constant, 0.0, std))
        self.n_vertices_ = X.shape[1]
        return self

    def _divisor(self):
        std = np.asarray(self.stats_.std, dtype=np.float64)
        return np.where(std > 0, std, 1.0)

    def transform(self, X):
        check_is_fitted(self, "stats_")
        X = check_mesh_batch(X, self.n_vertices_)
        return normalize_mesh(X, MeshStats(self.stats_.mean, self._divisor()))

    def inverse_transform(self, X):
        check_is_fitted(self, "stats_")
        return denormalize_mesh(check_mesh_batch(X, self.n_vertices_), self.stats_)


# -- file formats ------------------------------------------------------------

def write_topology(path, topology):
    lines = [f"v {x!r} {y!r} {z!r}" for x, y, z in topology.vertices.tolist()]
    lines += [f"f {i} {j} {k}" for i, j, k in topology.triangles.tolist()]
    Path(path).write_text("\n".join(lines) + "\n")


def read_topology(path):
    verts, tris = [], []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        parts = line.split()
        if not parts or parts[0].startswith("#"):
            continue
        if parts[0] == "v" and len(parts) == 4:
            verts.append([float(p) for p in parts[1:]])
        elif parts[0] == "f" and len(parts) == 4:
            tris.append([int(p) for p in parts[1:]])
        else:
            raise CorruptFileError(f"{path}:{lineno}: cannot parse {line!r}")
    return MeshTopology(np.array(verts).reshape(-1, 3), np.array(tris, dtype=np.int64).reshape(-1, 3))


def write_frame(path, positions):
    p = np.asarray(positions, dtype="<f4")
    if p.ndim != 2 or p.shape[1] != 3:
        raise ShapeMismatchError(f"positions must be (V, 3), got {p.shape}")
    with open(path, "wb") as fh:
        fh.write(FRAME_MAGIC + struct.pack("<II", FRAME_VERSION, p.shape[0]))
        fh.write(p.tobytes(order="C"))


def read_frame(path):
    data = Path(path).read_bytes()
    if len(data) < 12 or data[:4] != FRAME_MAGIC:
        raise CorruptFileError(f"{path}: not a deformation frame file")
    version, V = struct.unpack_from("<II", data, 4)
    if version != FRAME_VERSION:
        raise CorruptFileError(f"{path}: unsupported frame version {version}")
    if len(data) != 12 + 12 * V:
        raise CorruptFileError(f"{path}: truncated frame ({len(data)} bytes for V={V})")
    return np.frombuffer(data, dtype="<f4", offset=12).reshape(V, 3).astype(np.float64)


# -- procedural stand-ins for the sensor surfaces -------------------------------

def _grid_triangles(nu, nv, keep=None):
    idx = np.arange(nu * nv).reshape(nv, nu)
    tris = []
    for j in range(nv - 1):
        for i in range(nu - 1):
            a, b, c, d = idx[j, i], idx[j, i + 1], idx[j + 1, i], idx[j + 1, i + 1]
            # alternate the diagonal so the grid has no preferred direction
            if (i + j) % 2 == 0:
                tris += [(a, b, d), (a, d, c)]
            else:
                tris += [(a, b, c), (b, d, c)]
    tris = np.array(tris, dtype=np.int64)
    if keep is None:
        return np.arange(nu * nv), tris
    ok = keep[tris].all(axis=1)
    tris = tris[ok]
    used = np.zeros(nu * nv, dtype=bool)
    used[tris.ravel()] = True
    remap = -np.ones(nu * nv, dtype=np.int64)
    remap[used] = np.arange(used.sum())
    return np.flatnonzero(used), remap[tris]


def _grid_shape(n_vertices, aspect):
    nv = max(3, int(round(np.sqrt(n_vertices / aspect))))
    nu = max(3, int(round(n_vertices / nv)))
    return nu, nv


def make_digit_pad(width=24.0, height=18.0, n_vertices=768, corner_radius=1.5):
    """Flat rounded-rectangle gel pad in the z=0 plane, outward normal +z."""
    nu, nv = _grid_shape(n_vertices, width / height)
    u = np.linspace(-width / 2, width / 2, nu)
    v = np.linspace(-height / 2, height / 2, nv)
    X, Y = np.meshgrid(u, v)
    pts = np.column_stack([X.ravel(), Y.ravel(), np.zeros(X.size)])
    cx = np.clip(np.abs(pts[:, 0]), None, width / 2 - corner_radius)
    cy = np.clip(np.abs(pts[:, 1]), None, height / 2 - corner_radius)
    corner = (np.abs(pts[:, 0]) > width / 2 - corner_radius) & (
        np.abs(pts[:, 1]) > height / 2 - corner_radius
    )
    dist = np.hypot(np.abs(pts[:, 0]) - cx, np.abs(pts[:, 1]) - cy)
    keep = ~corner | (dist <= corner_radius + 1e-9)
    used, tris = _grid_triangles(nu, nv, keep)
    return MeshTopology(pts[used], tris)


def make_biotac_patch(radius=7.0, length=18.0, arc_length=24.0, n_vertices=512):
    """Cylindrical elastomer patch: axis along x, apex at (0, 0, radius).

    Points are ``(x, R sin(theta), R cos(theta))`` with the arc coordinate
    ``w = R * theta`` spanning ``arc_length``; outward normals are radial.
    """
    nu, nv = _grid_shape(n_vertices, length / arc_length)
    x = np.linspace(-length / 2, length / 2, nu)
    w = np.linspace(-arc_length / 2, arc_length / 2, nv)
    Xg, Wg = np.meshgrid(x, w)
    theta = Wg.ravel() / radius
    pts = np.column_stack([Xg.ravel(), radius * np.sin(theta), radius * np.cos(theta)])
    used, tris = _grid_triangles(nu, nv)
    topo = MeshTopology(pts[used], tris)
    # orient triangles outward
    centre_axis = np.column_stack([topo.vertices[:, 0], np.zeros(len(used)), np.zeros(len(used))])
    radial = topo.vertices - centre_axis
    fn = topo.face_normals
    outward = np.einsum("ij,ij->i", fn, radial[tris].mean(axis=1)) > 0
    if not outward.all():
        tris = tris.copy()
        tris[~outward] = tris[~outward][:, [0, 2, 1]]
        topo = MeshTopology(pts[used], tris)
    return topo
