"""Analytic paired deformation data for the BioTac stand-in patch and the
DIGIT pad: indenters, trajectories, sensor alignment, membrane-falloff
deformation, synthetic electrode signals and trajectory-level splits."""

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.transform import Rotation

from .exceptions import ExcessiveDepthError, NoContactError, TooFewTrajectoriesError
from .mesh import SurfaceMesh, make_biotac_patch, make_digit_pad
from .signals import N_ELECTRODES

log = logging.getLogger(__name__)

MAX_DEPTH_MM = 2.0
DEPTHS_MM = np.round(np.arange(1, 21) * 0.1, 10)
FALLOFF_RADIUS_MM = 3.0
SAMPLE_SPACING_MM = 0.2

# material constants of the reference FEM model; provenance metadata only
FEM_METADATA = {"elastic_modulus_kpa": 539.0, "poisson_ratio": 0.499, "friction": 0.78}
FORCE_MODULUS_N_PER_MM2 = 0.539
FORCE_THICKNESS_MM = 4.0


# -- indenters -----------------------------------------------------------------

def _sphere_cap(rho2, radius):
    h = np.full_like(rho2, np.inf)
    inside = rho2 < radius * radius
    h[inside] = radius - np.sqrt(radius * radius - rho2[inside])
    return h


def _h_sphere(a, b, p):
    return _sphere_cap(a * a + b * b, p["radius"])


def _h_flat_disc(a, b, p):
    return np.where(a * a + b * b <= p["radius"] ** 2, 0.0, np.inf)


def _h_lying_cylinder(a, b, p):
    h = _sphere_cap(b * b, p["radius"])
    return np.where(np.abs(a) <= p["length"] / 2, h, np.inf)


def _h_wedge(a, b, p):
    return np.where((np.abs(a) <= p["length"] / 2) & (np.abs(b) <= p["length"] / 2), np.abs(b), np.inf)


def _h_cone(a, b, p):
    rho = np.hypot(a, b)
    return np.where(rho <= p["radius"], rho / np.tan(np.radians(p["half_angle_deg"])), np.inf)


def _h_ring(a, b, p):
    r = np.hypot(a, b) - p["major_radius"]
    return _sphere_cap(r * r, p["tube_radius"])


def _h_ellipsoid(a, b, p):
    q = (a / p["semi_a"]) ** 2 + (b / p["semi_b"]) ** 2
    h = np.full_like(q, np.inf)
    inside = q < 1
    h[inside] = p["semi_c"] * (1 - np.sqrt(1 - q[inside]))
    return h


def _h_bar(a, b, p):
    return np.where((np.abs(a) <= p["length"] / 2) & (np.abs(b) <= p["width"] / 2), 0.0, np.inf)


# kind -> (heightfield, default sizes in mm, footprint half-extents (a, b))
INDENTER_KINDS = {
    "sphere": (_h_sphere, {"radius": 4.0}, lambda p: (p["radius"],) * 2),
    "small_sphere": (_h_sphere, {"radius": 2.0}, lambda p: (p["radius"],) * 2),
    "cylinder_flat": (_h_flat_disc, {"radius": 2.5}, lambda p: (p["radius"],) * 2),
    "cylinder_round": (_h_lying_cylinder, {"radius": 3.0, "length": 8.0},
                       lambda p: (p["length"] / 2, p["radius"])),
    "cube_edge": (_h_wedge, {"length": 8.0}, lambda p: (p["length"] / 2,) * 2),
    "cone": (_h_cone, {"radius": 4.0, "half_angle_deg": 60.0}, lambda p: (p["radius"],) * 2),
    "ring": (_h_ring, {"major_radius": 3.0, "tube_radius": 0.75},
             lambda p: (p["major_radius"] + p["tube_radius"],) * 2),
    "ellipsoid": (_h_ellipsoid, {"semi_a": 5.0, "semi_b": 2.5, "semi_c": 2.5},
                  lambda p: (p["semi_a"], p["semi_b"])),
    "bar": (_h_bar, {"length": 10.0, "width": 2.0}, lambda p: (p["length"] / 2, p["width"] / 2)),
}


@dataclass(frozen=True)
class Indenter:
    """Rigid probe described by its lower surface ``h(a, b) >= 0`` above the tip.

    ``position`` is the tip location (mm) and ``orientation`` a unit
    quaternion ``(x, y, z, w)`` taking indenter axes ``(a, b, up)`` into the
    sensor frame; both default to an unposed probe.
    """

    kind: str
    size: dict = field(default_factory=dict)
    position: tuple = (0.0, 0.0, 0.0)
    orientation: tuple = (0.0, 0.0, 0.0, 1.0)

    def __post_init__(self):
        if self.kind not in INDENTER_KINDS:
            raise ValueError(f"unknown indenter kind {self.kind!r}")
        size = dict(INDENTER_KINDS[self.kind][1])
        unknown = set(self.size) - set(size)
        if unknown:
            raise ValueError(f"unknown size parameters for {self.kind}: {sorted(unknown)}")
        size.update(self.size)
        if any(v <= 0 for v in size.values()):
            raise ValueError("indenter sizes must be positive")
        object.__setattr__(self, "size", size)
        q = np.asarray(self.orientation, dtype=np.float64)
        if abs(np.linalg.norm(q) - 1) > 1e-9:
            raise ValueError("orientation must be a unit quaternion")

    def height(self, a, b):
        return INDENTER_KINDS[self.kind][0](np.asarray(a, float), np.asarray(b, float), self.size)

    @property
    def footprint(self):
        return INDENTER_KINDS[self.kind][2](self.size)

    @property
    def reach(self):
        """Radius of the smallest disc around the tip containing the footprint."""
        return float(np.hypot(*self.footprint))

    def posed(self, position, rotation):
        quat = Rotation.from_matrix(rotation).as_quat()
        return Indenter(self.kind, self.size, tuple(float(x) for x in position), tuple(float(x) for x in quat))


def default_indenters():
    return [Indenter(kind) for kind in INDENTER_KINDS]


# -- sensor surfaces -------------------------------------------------------------

class CylinderSurface:
    """BioTac stand-in: ``P(u, w) = (u, R sin(w/R), R cos(w/R))``."""

    name = "biotac"

    def __init__(self, radius=7.0, length=18.0, arc_length=24.0):
        self.radius = radius
        self.u_range = (-length / 2, length / 2)
        self.w_range = (-arc_length / 2, arc_length / 2)

    def point(self, u, w):
        th = np.asarray(w) / self.radius
        return np.stack([np.asarray(u, float) + 0 * th, self.radius * np.sin(th), self.radius * np.cos(th)], -1)

    def frame(self, u, w):
        """Outward normal and tangents ``e1 = dP/du``, ``e2 = dP/dw`` (unit)."""
        th = w / self.radius
        n = np.array([0.0, np.sin(th), np.cos(th)])
        return n, np.array([1.0, 0.0, 0.0]), np.array([0.0, np.cos(th), -np.sin(th)])

    def tangent_offset_height(self, s, t):
        """Surface height below the tangent plane at tangent offsets ``(s, t)``."""
        R = self.radius
        t2 = np.minimum(np.asarray(t) ** 2, R * R)
        return -(R - np.sqrt(R * R - t2)) + 0 * np.asarray(s)

    def normals(self, points):
        n = points.copy()
        n[:, 0] = 0.0
        return n / np.linalg.norm(n, axis=1, keepdims=True)

    def to_uv(self, points):
        p = np.atleast_2d(points)
        return np.column_stack([p[:, 0], self.radius * np.arctan2(p[:, 1], p[:, 2])])

    def make_mesh(self, n_vertices):
        return make_biotac_patch(self.radius, self.u_range[1] * 2, self.w_range[1] * 2, n_vertices)


class PadSurface:
    """DIGIT pad in the ``z = 0`` plane, parameterized as ``P(u, w) = (-w, u, 0)``."""

    name = "digit"

    def __init__(self, width=24.0, height=18.0, corner_radius=1.5):
        self.width = width
        self.height = height
        self.corner_radius = corner_radius
        self.u_range = (-height / 2, height / 2)
        self.w_range = (-width / 2, width / 2)

    def point(self, u, w):
        u = np.asarray(u, float)
        w = np.asarray(w, float)
        return np.stack([-w + 0 * u, u + 0 * w, np.zeros(np.broadcast(u, w).shape)], -1)

    def frame(self, u, w):
        return np.array([0.0, 0.0, 1.0]), np.array([0.0, 1.0, 0.0]), np.array([-1.0, 0.0, 0.0])

    def tangent_offset_height(self, s, t):
        return np.zeros(np.broadcast(np.asarray(s), np.asarray(t)).shape)

    def normals(self, points):
        n = np.zeros_like(points)
        n[:, 2] = 1.0
        return n

    def to_uv(self, points):
        p = np.atleast_2d(points)
        return np.column_stack([p[:, 1], -p[:, 0]])

    def make_mesh(self, n_vertices):
        return make_digit_pad(self.width, self.height, n_vertices, self.corner_radius)


# -- alignment -------------------------------------------------------------------

@dataclass(frozen=True)
class AlignmentTransform:
    """BioTac -> DIGIT map: cylinder unfolding followed by a rigid motion.

    Unfolding sends a patch point with arc coordinates ``(u, w)`` to
    ``(u, w, R)`` in the BioTac frame (the apex tangent plane); the rigid
    part then places the apex on the pad centre with matching tangents.
    """

    rotation: np.ndarray
    translation: np.ndarray
    radius: float
    u_range: tuple
    w_range: tuple

    def unfold(self, points):
        p = np.atleast_2d(np.asarray(points, dtype=np.float64))
        w = self.radius * np.arctan2(p[:, 1], p[:, 2])
        return np.column_stack([p[:, 0], w, np.full(len(p), self.radius)])

    def rigid(self, points):
        return np.atleast_2d(points) @ self.rotation.T + self.translation

    def __call__(self, points):
        return self.rigid(self.unfold(points))

    def contains_uv(self, u, w, margin=0.0):
        return (self.u_range[0] + margin <= u <= self.u_range[1] - margin) and (
            self.w_range[0] + margin <= w <= self.w_range[1] - margin
        )


def build_alignment(biotac_surface, digit_surface):
    R = biotac_surface.radius
    rotation = Rotation.from_euler("z", 90, degrees=True).as_matrix()
    rotation[np.abs(rotation) < 1e-15] = 0.0
    translation = np.array([0.0, 0.0, -R])
    u_b, w_b = biotac_surface.u_range, biotac_surface.w_range
    u_d, w_d = digit_surface.u_range, digit_surface.w_range
    u_range = (max(u_b[0], u_d[0]), min(u_b[1], u_d[1]))
    w_range = (max(w_b[0], w_d[0]), min(w_b[1], w_d[1]))
    if u_range != tuple(u_b) or w_range != tuple(w_b):
        warnings.warn("unfolded BioTac patch is larger than the pad; shared region clipped",
                      RuntimeWarning, stacklevel=2)
    return AlignmentTransform(rotation, translation, R, u_range, w_range)


# -- deformation -----------------------------------------------------------------

def falloff(s):
    """C1 membrane blend: 1 at the contact, 0 with zero slope at the radius."""
    s = np.clip(s, 0.0, 1.0)
    return 1.0 - 3.0 * s * s + 2.0 * s * s * s


@dataclass(frozen=True)
class Contact:
    """Contact location in surface parameters and in-plane indenter rotation."""

    u: float
    w: float
    psi: float = 0.0


def _contact_samples(surface, indenter, contact, spacing=SAMPLE_SPACING_MM, max_depth=MAX_DEPTH_MM):
    """Surface points under the indenter and the depth at which each is reached."""
    ha, hb = indenter.footprint
    a = np.arange(-np.floor(ha / spacing), np.floor(ha / spacing) + 1) * spacing
    b = np.arange(-np.floor(hb / spacing), np.floor(hb / spacing) + 1) * spacing
    A, B = (g.ravel() for g in np.meshgrid(a, b))
    h = indenter.height(A, B)
    c, s_ = np.cos(contact.psi), np.sin(contact.psi)
    s = c * A - s_ * B
    t = s_ * A + c * B
    z = surface.tangent_offset_height(s, t)
    gap = h - z
    keep = gap <= max_depth + 1e-12
    n, e1, e2 = surface.frame(contact.u, contact.w)
    origin = surface.point(contact.u, contact.w)
    pts = origin + np.outer(s[keep], e1) + np.outer(t[keep], e2) + np.outer(z[keep], n)
    return pts, gap[keep]


def deformation_field(reference, surface, indenter, contact, depths,
                      falloff_radius=FALLOFF_RADIUS_MM):
    """Inward displacement magnitude ``(len(depths), V)`` for every depth."""
    depths = np.atleast_1d(np.asarray(depths, dtype=np.float64))
    if np.any(depths <= 0):
        raise ValueError("indentation depth must be positive")
    if np.any(depths > MAX_DEPTH_MM + 1e-12):
        raise ExcessiveDepthError(f"depth {depths.max()} mm exceeds {MAX_DEPTH_MM} mm")
    verts = reference.vertices
    pts, gap = _contact_samples(surface, indenter, contact, max_depth=depths.max())
    out = np.zeros((len(depths), len(verts)))
    if len(pts) == 0:
        return out
    lo = pts.min(axis=0) - falloff_radius
    hi = pts.max(axis=0) + falloff_radius
    near = np.flatnonzero(np.all((verts >= lo) & (verts <= hi), axis=1))
    if near.size == 0:
        return out
    d2 = ((verts[near, None, :] - pts[None, :, :]) ** 2).sum(axis=2)
    F = falloff(np.sqrt(d2) / falloff_radius)
    for k, d in enumerate(depths):
        P = np.maximum(0.0, d - gap)
        active = P > 0
        if active.any():
            out[k, near] = (F[:, active] * P[active]).max(axis=1)
    return out


def deform_surface(reference, surface, indenter, contact, depth, falloff_radius=FALLOFF_RADIUS_MM):
    """Deformed copy of ``reference`` (a MeshTopology) pressed ``depth`` mm."""
    disp = deformation_field(reference, surface, indenter, contact, [depth], falloff_radius)[0]
    if not np.any(disp > 0):
        raise NoContactError(f"{indenter.kind} at ({contact.u:.2f}, {contact.w:.2f}) touches no vertex")
    return SurfaceMesh(reference, _apply(reference.vertices, surface.normals(reference.vertices), disp))


def _apply(verts, normals, disp):
    out = verts.copy()
    moved = disp > 0
    out[moved] -= disp[moved, None] * normals[moved]
    return out


def deformation_centroid(reference_positions, deformed_positions):
    """Displacement-weighted centroid of the reference positions."""
    w = np.linalg.norm(deformed_positions - reference_positions, axis=1)
    if w.sum() == 0:
        raise NoContactError("no displaced vertex")
    return (reference_positions * w[:, None]).sum(axis=0) / w.sum()


def force_proxy(topology, disp):
    """Linear-elastic normal force estimate (N) from inward displacement (mm)."""
    return float(FORCE_MODULUS_N_PER_MM2 * (disp * topology.vertex_areas).sum() / FORCE_THICKNESS_MM)


# -- trajectories and paired data -------------------------------------------------

@dataclass(frozen=True)
class Trajectory:
    trajectory_id: int
    indenter: Indenter
    contact: Contact
    depths: tuple = tuple(DEPTHS_MM)

    def __post_init__(self):
        if len(self.depths) != 20 or abs(max(self.depths) - MAX_DEPTH_MM) > 1e-12:
            raise ValueError("a trajectory has 20 depths ending at 2.0 mm")


@dataclass(frozen=True)
class PairedSample:
    biotac: SurfaceMesh
    digit: SurfaceMesh
    trajectory_id: int
    depth_index: int
    indenter_kind: str
    force: float

    @property
    def depth_mm(self):
        return float(DEPTHS_MM[self.depth_index])


@dataclass
class SensorPair:
    """Both reference surfaces, their meshes and the alignment between them."""

    biotac_surface: CylinderSurface
    digit_surface: PadSurface
    biotac: object
    digit: object
    alignment: AlignmentTransform

    @classmethod
    def build(cls, biotac_vertices=512, digit_vertices=768):
        bs, ds = CylinderSurface(), PadSurface()
        with warnings.catch_warnings():
            warnings.simplefilter("error", RuntimeWarning)
            align = build_alignment(bs, ds)
        return cls(bs, ds, bs.make_mesh(biotac_vertices), ds.make_mesh(digit_vertices), align)


@dataclass
class PairedDataset:
    """Paired deformations in bulk arrays; iterates as :class:`PairedSample`."""

    sensors: SensorPair
    biotac: np.ndarray  # (N, Vb, 3) float32, mm
    digit: np.ndarray  # (N, Vd, 3) float32, mm
    trajectory_id: np.ndarray  # (N,) base trajectory id
    indenter_kind: np.ndarray  # (N,) str
    depth_index: np.ndarray  # (N,)
    force: np.ndarray  # (N,)
    contact_uv: np.ndarray  # (N, 2) contact in surface parameters
    contact_xyz: np.ndarray  # (N, 3) BioTac contact point
    psi: np.ndarray  # (N,)
    metadata: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.trajectory_id)

    def __getitem__(self, i):
        return PairedSample(
            SurfaceMesh(self.sensors.biotac, self.biotac[i].astype(np.float64)),
            SurfaceMesh(self.sensors.digit, self.digit[i].astype(np.float64)),
            int(self.trajectory_id[i]), int(self.depth_index[i]), str(self.indenter_kind[i]),
            float(self.force[i]),
        )

    @property
    def depth_mm(self):
        return DEPTHS_MM[self.depth_index]

    def subset(self, mask):
        idx = np.flatnonzero(mask) if np.asarray(mask).dtype == bool else np.asarray(mask)
        return PairedDataset(self.sensors, self.biotac[idx], self.digit[idx], self.trajectory_id[idx],
                             self.indenter_kind[idx], self.depth_index[idx], self.force[idx],
                             self.contact_uv[idx], self.contact_xyz[idx], self.psi[idx], self.metadata)


def _fits(indenter, contact, sensors, margin):
    """Whether the whole deformation at full depth stays inside the shared region."""
    pts, _ = _contact_samples(sensors.digit_surface, indenter, contact)
    uv = sensors.digit_surface.to_uv(pts)
    al = sensors.alignment
    return bool(
        np.all(uv[:, 0] >= al.u_range[0] + margin) and np.all(uv[:, 0] <= al.u_range[1] - margin)
        and np.all(uv[:, 1] >= al.w_range[0] + margin) and np.all(uv[:, 1] <= al.w_range[1] - margin)
    )


def sample_trajectories(n_trajectories, indenters, sensors, seed=0, margin=FALLOFF_RADIUS_MM,
                        max_attempts=10_000):
    """Random contacts in the shared aligned region, each replicated over all indenters.

    Contact point and in-plane angle are drawn uniformly and redrawn until
    every indenter's contact footprint plus the falloff margin lies on the
    shared region, so no deformation is clipped by a sensor edge.
    """
    rng = np.random.default_rng(seed)
    al = sensors.alignment
    out = []
    for tid in range(n_trajectories):
        for _ in range(max_attempts):
            c = Contact(rng.uniform(*al.u_range), rng.uniform(*al.w_range), rng.uniform(0.0, np.pi))
            if all(_fits(ind, c, sensors, margin) for ind in indenters):
                break
        else:
            log.warning("trajectory %d found no contact inside the shared region; skipped", tid)
            continue
        out += [Trajectory(tid, ind, c) for ind in indenters]
    return out


def generate_paired_dataset(n_trajectories, indenters=None, seed=0, sensors=None,
                            falloff_radius=FALLOFF_RADIUS_MM, margin=FALLOFF_RADIUS_MM):
    """``n_trajectories x len(indenters) x 20`` paired BioTac/DIGIT deformations."""
    sensors = sensors or SensorPair.build()
    indenters = list(indenters) if indenters is not None else default_indenters()
    trajs = sample_trajectories(n_trajectories, indenters, sensors, seed, margin)
    bt, dg = sensors.biotac, sensors.digit
    nb, nd = sensors.biotac_surface.normals(bt.vertices), sensors.digit_surface.normals(dg.vertices)
    n = len(trajs) * len(DEPTHS_MM)
    B = np.empty((n, bt.n_vertices, 3), np.float32)
    D = np.empty((n, dg.n_vertices, 3), np.float32)
    rows = {k: [] for k in ("tid", "kind", "depth", "force", "uv", "xyz", "psi")}
    i = 0
    for traj in trajs:
        c = traj.contact
        db = deformation_field(bt, sensors.biotac_surface, traj.indenter, c, traj.depths, falloff_radius)
        dd = deformation_field(dg, sensors.digit_surface, traj.indenter, c, traj.depths, falloff_radius)
        xyz = sensors.biotac_surface.point(c.u, c.w)
        for k in range(len(traj.depths)):
            B[i] = _apply(bt.vertices, nb, db[k])
            D[i] = _apply(dg.vertices, nd, dd[k])
            rows["tid"].append(traj.trajectory_id)
            rows["kind"].append(traj.indenter.kind)
            rows["depth"].append(k)
            rows["force"].append(force_proxy(bt, db[k]))
            rows["uv"].append((c.u, c.w))
            rows["xyz"].append(xyz)
            rows["psi"].append(c.psi)
            i += 1
    meta = dict(FEM_METADATA, seed=seed, n_trajectories=n_trajectories,
                falloff_radius_mm=falloff_radius, contact_margin_mm=margin)
    return PairedDataset(
        sensors, B, D, np.array(rows["tid"], np.int64), np.array(rows["kind"]),
        np.array(rows["depth"], np.int64), np.array(rows["force"]),
        np.array(rows["uv"]).reshape(-1, 2), np.array(rows["xyz"]).reshape(-1, 3),
        np.array(rows["psi"]), meta,
    )


# -- synthetic electrode signals ---------------------------------------------------

def electrode_sites(surface):
    """19 sites on the patch: rows of 5, 5, 5 and 4 electrodes."""
    rows_u = (-6.75, -2.25, 2.25, 6.75)
    counts = (5, 5, 5, 4)
    uv = []
    for u, n in zip(rows_u, counts):
        for j in range(n):
            uv.append((u, (j - (n - 1) / 2) * 4.8))
    uv = np.array(uv)
    assert len(uv) == N_ELECTRODES
    return surface.point(uv[:, 0], uv[:, 1])


@dataclass(frozen=True)
class ElectrodeModel:
    """Per-electrode rest value, contact gain, noise and linear drift (sensor units)."""

    default: np.ndarray
    gain: np.ndarray
    drift_slope: np.ndarray
    noise: float = 2.0
    response_scale_mm: float = 1.0
    smoothing_mm: float = 2.0

    @classmethod
    def random(cls, seed=0):
        rng = np.random.default_rng(seed)
        default = rng.uniform(1500, 3500, N_ELECTRODES)
        gain = rng.uniform(200, 600, N_ELECTRODES) * rng.choice([-1.0, 1.0], N_ELECTRODES)
        slope = rng.uniform(0.005, 0.02, N_ELECTRODES) * rng.choice([-1.0, 1.0], N_ELECTRODES)
        return cls(default, gain, slope)


def electrode_response(topology, surface, positions, model):
    """Saturating response ``tanh(s / d0)`` of Gaussian-smoothed displacement ``s``."""
    sites = electrode_sites(surface)
    d2 = ((topology.vertices[None, :, :] - sites[:, None, :]) ** 2).sum(axis=2)
    K = np.exp(-0.5 * d2 / model.smoothing_mm**2) * topology.vertex_areas
    K /= K.sum(axis=1, keepdims=True)
    disp = np.linalg.norm(np.asarray(positions) - topology.vertices, axis=-1)
    return np.tanh((disp @ K.T) / model.response_scale_mm)


def synthesize_signals(dataset, model=None, rest_frames=5, seed=0):
    """Raw recordings: per (trajectory, indenter) ``rest_frames`` rest frames then the 20 presses.

    Returns ``(table, sample_rows)``: a frame table ``[t, c, e00..e18]`` with a
    global time index (drift accumulates over the session) and, for every
    paired sample, the table row of its contact frame.
    """
    model = model or ElectrodeModel.random(seed)
    rng = np.random.default_rng([seed, 1])
    sens = dataset.sensors
    resp = electrode_response(sens.biotac, sens.biotac_surface, dataset.biotac.astype(np.float64), model)
    n = len(dataset)
    rows, sample_rows = [], np.empty(n, np.int64)
    t = 0
    start = 0
    while start < n:
        stop = start
        key = (dataset.trajectory_id[start], dataset.indenter_kind[start])
        while stop < n and (dataset.trajectory_id[stop], dataset.indenter_kind[stop]) == key:
            stop += 1
        for _ in range(rest_frames):
            rows.append((t, 0.0, np.zeros(N_ELECTRODES)))
            t += 1
        for i in range(start, stop):
            sample_rows[i] = len(rows)
            rows.append((t, 1.0, resp[i]))
            t += 1
        start = stop
    T = np.array([r[0] for r in rows], np.float64)
    V = np.array([r[2] for r in rows])
    raw = model.default + model.gain * V + model.noise * rng.standard_normal(V.shape)
    raw += np.multiply.outer(T, model.drift_slope)
    table = np.column_stack([T, [r[1] for r in rows], raw])
    return table, sample_rows


# -- splits --------------------------------------------------------------------------

def split_by_trajectory(trajectory_ids, test_fraction=0.15, val_fraction=0.15, seed=0):
    """Assign whole trajectories to train/val/test; returns sorted id arrays."""
    if not (0 <= test_fraction < 1 and 0 <= val_fraction < 1 and test_fraction + val_fraction < 1):
        raise ValueError("fractions must be non-negative and sum to less than 1")
    ids = np.unique(np.asarray(trajectory_ids))
    N = len(ids)
    n_test = int(np.floor(test_fraction * N + 0.5))
    n_val = int(np.floor(val_fraction * N + 0.5))
    if (test_fraction > 0 and n_test < 1) or (val_fraction > 0 and n_val < 1) or N - n_test - n_val < 1:
        raise TooFewTrajectoriesError(f"{N} trajectories cannot be split {test_fraction}/{val_fraction}")
    perm = np.random.default_rng(seed).permutation(ids)
    return {
        "test": np.sort(perm[:n_test]),
        "val": np.sort(perm[n_test:n_test + n_val]),
        "train": np.sort(perm[n_test + n_val:]),
    }
