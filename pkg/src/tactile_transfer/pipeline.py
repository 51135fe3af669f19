"""End-to-end conversion: BioTac signals -> BioTac mesh -> DIGIT mesh -> DIGIT image.

A bundle directory holds one sub-directory per trained component::

    bundle/svb/    model.acrw  spec.txt  signal_stats.csv
    bundle/mvb/    model.acrw  spec.txt  mesh_stats.acrw  topology.txt
    bundle/mvd/    model.acrw  spec.txt  mesh_stats.acrw  topology.txt
    bundle/s2mpn/  model.acrw  spec.txt
    bundle/m2mpn/  model.acrw  spec.txt
    bundle/render/ photometric.csv  background.ppm   (optional)
"""

import hashlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._validation import electrodes_of
from .exceptions import MissingCheckpointError, SpecMismatchError
from .mesh import MeshScaler, MeshStats, SurfaceMesh, read_topology
from .models import build_m2mpn, build_mesh_vae, build_s2mpn, build_svb, read_spec
from .nn import checkpoint as ckpt
from .render import (
    CameraConfig,
    default_background,
    default_photometric_table,
    pyramid_gaussian_blur,
    rasterize_heightmap,
    read_photometric_table,
    read_ppm,
    render_image,
)
from .signals import correct_drift_values, load_channel_stats, normalize_values

COMPONENTS = ("svb", "mvb", "mvd", "s2mpn", "m2mpn")
MODEL_FILE = "model.acrw"
SPEC_FILE = "spec.txt"
SIGNAL_STATS_FILE = "signal_stats.csv"
MESH_STATS_FILE = "mesh_stats.acrw"
TOPOLOGY_FILE = "topology.txt"
PHOTOMETRIC_FILE = "photometric.csv"
BACKGROUND_FILE = "background.ppm"


def parameter_hash(estimator):
    """SHA-256 over parameter names, shapes and bytes (stable across processes)."""
    h = hashlib.sha256()
    values = estimator.params_.values
    for name in sorted(values):
        arr = np.ascontiguousarray(values[name])
        h.update(name.encode())
        h.update(str(arr.shape).encode())
        h.update(arr.tobytes())
    return h.hexdigest()


def f32_stats(stats):
    """Round mesh statistics to float32 so saved and in-memory values agree."""
    return MeshStats(stats.mean.astype(np.float32).astype(np.float64),
                     stats.std.astype(np.float32).astype(np.float64))


def scaler_from_stats(stats):
    sc = MeshScaler()
    sc.stats_ = stats
    sc.n_vertices_ = stats.mean.shape[0]
    return sc


def save_mesh_stats(path, stats):
    ckpt.write_checkpoint(path, {"mean": stats.mean, "std": stats.std})


def load_mesh_stats(path):
    t = ckpt.read_checkpoint(path)
    return MeshStats(t["mean"].astype(np.float64), t["std"].astype(np.float64))


def _require(path):
    path = Path(path)
    if not path.is_file():
        raise MissingCheckpointError(f"missing {path}")
    return path


def load_component(directory, kind, topology=None):
    """Rebuild a trained network from ``directory`` (spec + weights)."""
    directory = Path(directory)
    spec = read_spec(_require(directory / SPEC_FILE))
    if spec.kind != kind:
        raise SpecMismatchError(f"{directory}: expected a {kind} spec, found {spec.kind}")
    if kind == "SVB":
        est = build_svb(spec)
    elif kind in ("MVB", "MVD"):
        est = build_mesh_vae(spec, topology)
    elif kind == "S2MPN":
        est = build_s2mpn(spec, spec.input_dim, spec.output_dim)
    else:
        est = build_m2mpn(spec, spec.input_dim, spec.output_dim)
    return est.load_weights(_require(directory / MODEL_FILE))


@dataclass
class PipelineOutput:
    biotac: np.ndarray  # (n, Vb, 3) mm
    digit: np.ndarray  # (n, Vd, 3) mm
    images: np.ndarray  # (n, H, W, 3) uint8
    latents: dict = field(default_factory=dict)
    heightmaps: list = field(default_factory=list)


class PipelineBundle:
    """Frozen components of the conversion chain plus normalization statistics."""

    def __init__(self, svb, s2mpn, mvb, m2mpn, mvd, signal_stats, biotac_stats, digit_stats,
                 biotac_topology, digit_topology, drift=None, camera=None,
                 photometric=None, background=None):
        self.svb, self.s2mpn, self.mvb, self.m2mpn, self.mvd = svb, s2mpn, mvb, m2mpn, mvd
        self.signal_stats = signal_stats
        self.drift = drift
        self.biotac_scaler = scaler_from_stats(biotac_stats)
        self.digit_scaler = scaler_from_stats(digit_stats)
        self.biotac_topology = biotac_topology
        self.digit_topology = digit_topology
        self.camera = camera or CameraConfig()
        self.photometric = photometric or default_photometric_table()
        self.background = (default_background(self.camera.width, self.camera.height)
                           if background is None else np.asarray(background, np.uint8))
        self.check_chain()

    def check_chain(self):
        links = [
            ("SVB latent", self.svb.latent_dim, "S2MPN input", self.s2mpn.n_inputs),
            ("S2MPN output", self.s2mpn.n_outputs, "MVB latent", self.mvb.latent_dim),
            ("MVB latent", self.mvb.latent_dim, "M2MPN input", self.m2mpn.n_inputs),
            ("M2MPN output", self.m2mpn.n_outputs, "MVD latent", self.mvd.latent_dim),
        ]
        for a, na, b, nb in links:
            if na != nb:
                raise SpecMismatchError(f"{a} ({na}) does not match {b} ({nb})")
        if self.biotac_scaler.n_vertices_ != self.biotac_topology.n_vertices:
            raise SpecMismatchError("BioTac mesh statistics do not match its topology")
        if self.digit_scaler.n_vertices_ != self.digit_topology.n_vertices:
            raise SpecMismatchError("DIGIT mesh statistics do not match its topology")

    @classmethod
    def load(cls, directory):
        d = Path(directory)
        for c in COMPONENTS:
            _require(d / c / MODEL_FILE)
        stats, drift = load_channel_stats(_require(d / "svb" / SIGNAL_STATS_FILE))
        bt_topo = read_topology(_require(d / "mvb" / TOPOLOGY_FILE))
        dg_topo = read_topology(_require(d / "mvd" / TOPOLOGY_FILE))
        render_dir = d / "render"
        table = background = None
        if (render_dir / PHOTOMETRIC_FILE).is_file():
            table = read_photometric_table(render_dir / PHOTOMETRIC_FILE)
        if (render_dir / BACKGROUND_FILE).is_file():
            background = read_ppm(render_dir / BACKGROUND_FILE)
        return cls(
            svb=load_component(d / "svb", "SVB"),
            s2mpn=load_component(d / "s2mpn", "S2MPN"),
            mvb=load_component(d / "mvb", "MVB", bt_topo),
            m2mpn=load_component(d / "m2mpn", "M2MPN"),
            mvd=load_component(d / "mvd", "MVD", dg_topo),
            signal_stats=stats,
            biotac_stats=load_mesh_stats(_require(d / "mvb" / MESH_STATS_FILE)),
            digit_stats=load_mesh_stats(_require(d / "mvd" / MESH_STATS_FILE)),
            biotac_topology=bt_topo,
            digit_topology=dg_topo,
            drift=drift,
            camera=CameraConfig(*(background.shape[1::-1] if background is not None else ())),
            photometric=table,
            background=background,
        )

    # -- stages ------------------------------------------------------------

    def normalize_signals(self, electrodes, timestamps=None, drift=None):
        """Raw electrodes ``(n, 19)`` to normalized values; ``drift`` corrects first."""
        values = electrodes_of(electrodes)
        if drift is not None:
            values = correct_drift_values(values, timestamps, drift, self.signal_stats)
        return normalize_values(values, self.signal_stats)

    def signals_to_biotac_latent(self, normalized):
        return self.s2mpn.predict(self.svb.transform(normalized))

    def decode_biotac(self, z):
        return self.biotac_scaler.inverse_transform(self.mvb.inverse_transform(z))

    def decode_digit(self, z):
        return self.digit_scaler.inverse_transform(self.mvd.inverse_transform(z))

    def encode_biotac(self, meshes):
        return self.mvb.transform(self.biotac_scaler.transform(meshes))

    def render(self, digit_positions, return_heightmap=False):
        hm = rasterize_heightmap(digit_positions, self.digit_topology.triangles, self.camera)
        img = pyramid_gaussian_blur(render_image(hm, self.photometric, self.background, quantize=False))
        return (img, hm) if return_heightmap else img

    def run(self, electrodes, timestamps=None, drift=None, render=True):
        """Convert a batch of raw electrode vectors; inference uses posterior means."""
        x = self.normalize_signals(electrodes, timestamps, drift)
        z_s = self.svb.transform(x)
        z_b = self.s2mpn.predict(z_s)
        z_d = self.m2mpn.predict(z_b)
        biotac = self.decode_biotac(z_b)
        digit = self.decode_digit(z_d)
        images, hms = [], []
        if render:
            for p in digit:
                img, hm = self.render(p, return_heightmap=True)
                images.append(img)
                hms.append(hm)
        images = np.stack(images) if images else np.empty((0, self.camera.height, self.camera.width, 3), np.uint8)
        return PipelineOutput(biotac, digit, images,
                              {"signal": x, "svb": z_s, "mvb": z_b, "mvd": z_d}, hms)


def run_pipeline(bundle, frame, drift=None):
    """Convert one :class:`SignalFrame`; returns ``(biotac mesh, digit mesh, image, intermediates)``."""
    out = bundle.run(frame.electrodes[None, :], np.array([frame.timestamp_index]), drift)
    return (
        SurfaceMesh(bundle.biotac_topology, out.biotac[0]),
        SurfaceMesh(bundle.digit_topology, out.digit[0]),
        out.images[0],
        {**{k: v[0] for k, v in out.latents.items()}, "heightmap": out.heightmaps[0]},
    )
