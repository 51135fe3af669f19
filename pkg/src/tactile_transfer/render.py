"""DIGIT image synthesis from a deformation mesh: orthographic height-map
rasterization, slope normals, a second-order polynomial photometric model
over a background image, and a pyramid Gaussian blur."""

import csv
import struct
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.ndimage import correlate1d

from .exceptions import CorruptFileError, DimensionMismatchError, RankDeficientError

HEIGHTMAP_MAGIC = b"ACRH"
BLUR_KERNEL_SIZES = (51, 21, 11, 5)
CHANNELS = ("R", "G", "B")


@dataclass(frozen=True)
class CameraConfig:
    """Orthographic camera under the pad looking along +z.

    Column ``j`` and row ``i`` see pad point ``x = (j + 0.5 - W/2) * pitch``,
    ``y = (H/2 - i - 0.5) * pitch``. The default pitch makes the 24 x 18 mm
    pad span the 320 x 240 image.
    """

    width: int = 320
    height: int = 240
    pixel_pitch: float = 0.075
    reference_depth: float = 0.0
    reference_z: float = 0.0

    def pixel_of(self, xy):
        """Fractional (column, row) of pad points ``(..., 2)``."""
        xy = np.asarray(xy, dtype=np.float64)
        col = xy[..., 0] / self.pixel_pitch + self.width / 2 - 0.5
        row = self.height / 2 - 0.5 - xy[..., 1] / self.pixel_pitch
        return np.stack([col, row], -1)


@dataclass(frozen=True)
class HeightMap:
    """Gel indentation toward the camera per pixel (mm), on a regular grid."""

    depth: np.ndarray
    pixel_pitch: float

    @property
    def shape(self):
        return self.depth.shape


def _coerce_positions(mesh):
    return np.asarray(getattr(mesh, "positions", mesh), dtype=np.float64)


def rasterize_heightmap(mesh, triangles, camera=CameraConfig(), return_skipped=False):
    """Z-buffered barycentric rasterization of indentation depth.

    A vertex's value is ``reference_depth + (reference_z - z)`` so pressing
    the gel toward the camera increases it; where several triangles cover
    a pixel centre the one nearest the camera (largest value) wins.
    Uncovered pixels keep ``reference_depth``. Triangles with zero projected
    area are skipped; their count is returned with ``return_skipped``.
    """
    P = _coerce_positions(mesh)
    tri = np.asarray(triangles, dtype=np.int64)
    W, H = camera.width, camera.height
    val = camera.reference_depth + (camera.reference_z - P[:, 2])
    pix = camera.pixel_of(P[:, :2])
    a, b, c = pix[tri[:, 0]], pix[tri[:, 1]], pix[tri[:, 2]]
    area = (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0])
    ok = np.abs(area) > 1e-12
    skipped = int((~ok).sum())
    a, b, c, area, tri = a[ok], b[ok], c[ok], area[ok], tri[ok]

    lo = np.floor(np.minimum(np.minimum(a, b), c)).astype(np.int64)
    hi = np.ceil(np.maximum(np.maximum(a, b), c)).astype(np.int64)
    lo = np.maximum(lo, 0)
    hi = np.minimum(hi, [W - 1, H - 1])
    nx = np.maximum(hi[:, 0] - lo[:, 0] + 1, 0)
    ny = np.maximum(hi[:, 1] - lo[:, 1] + 1, 0)
    counts = nx * ny
    out = np.full(H * W, -np.inf)
    if counts.sum():
        t = np.repeat(np.arange(len(tri)), counts)
        local = np.arange(counts.sum()) - np.repeat(np.cumsum(counts) - counts, counts)
        px = lo[t, 0] + local % nx[t]
        py = lo[t, 1] + local // nx[t]
        # barycentric weights of the pixel centre
        w1 = ((px - a[t, 0]) * (c[t, 1] - a[t, 1]) - (py - a[t, 1]) * (c[t, 0] - a[t, 0])) / area[t]
        w2 = ((b[t, 0] - a[t, 0]) * (py - a[t, 1]) - (b[t, 1] - a[t, 1]) * (px - a[t, 0])) / area[t]
        w0 = 1.0 - w1 - w2
        eps = -1e-9
        inside = (w0 >= eps) & (w1 >= eps) & (w2 >= eps)
        t, px, py = t[inside], px[inside], py[inside]
        v = w0[inside] * val[tri[t, 0]] + w1[inside] * val[tri[t, 1]] + w2[inside] * val[tri[t, 2]]
        np.maximum.at(out, py * W + px, v)
    out[~np.isfinite(out)] = camera.reference_depth
    hm = HeightMap(out.reshape(H, W), camera.pixel_pitch)
    return (hm, skipped) if return_skipped else hm


def normals_from_heightmap(hm):
    """Surface slopes ``(n_x, n_y)`` along image columns and rows, in mm/mm.

    Central differences inside, one-sided at the borders.
    """
    d = np.asarray(hm.depth, dtype=np.float64)
    if d.shape[0] < 3 or d.shape[1] < 3:
        raise ValueError("height map must be at least 3 x 3")
    gy, gx = np.gradient(d, hm.pixel_pitch)
    return gx, gy


# -- photometric model --------------------------------------------------------

def _design(nx, ny):
    nx = np.asarray(nx, dtype=np.float64)
    ny = np.asarray(ny, dtype=np.float64)
    return np.stack([np.ones_like(nx), nx, ny, nx * nx, nx * ny, ny * ny], -1)


@dataclass(frozen=True)
class PhotometricTable:
    """Per channel ``dc = a0 + a1 nx + a2 ny + a3 nx^2 + a4 nx ny + a5 ny^2``."""

    coefficients: np.ndarray  # (3, 6)

    def __post_init__(self):
        c = np.asarray(self.coefficients, dtype=np.float64)
        if c.shape != (3, 6) or not np.all(np.isfinite(c)):
            raise ValueError("photometric table needs 3 x 6 finite coefficients")
        object.__setattr__(self, "coefficients", c)

    def delta(self, nx, ny):
        return _design(nx, ny) @ self.coefficients.T


def default_photometric_table(gain=120.0, curvature=-40.0):
    """Three LEDs 120 degrees apart, darkening on steep slopes; flat response 0."""
    rows = []
    for angle in (0.0, 120.0, 240.0):
        th = np.radians(angle)
        rows.append([0.0, gain * np.cos(th), gain * np.sin(th), curvature, 0.0, curvature])
    return PhotometricTable(np.array(rows))


def fit_photometric(normals, deltas):
    """Least-squares polynomial coefficients from ``(n, 2)`` slopes and ``(n, 3)`` colour changes."""
    normals = np.asarray(normals, dtype=np.float64).reshape(-1, 2)
    deltas = np.asarray(deltas, dtype=np.float64).reshape(-1, 3)
    if len(normals) != len(deltas):
        raise DimensionMismatchError("normals and colour samples differ in count")
    A = _design(normals[:, 0], normals[:, 1])
    if len(A) < 6 or np.linalg.matrix_rank(A) < 6:
        raise RankDeficientError("photometric fit needs samples spanning all 6 monomials")
    coef, *_ = np.linalg.lstsq(A, deltas, rcond=None)
    return PhotometricTable(coef.T)


def default_background(width=320, height=240):
    """Smooth procedural gel background: tinted base with a soft vignette."""
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    r2 = ((xx - width / 2) / width) ** 2 + ((yy - height / 2) / height) ** 2
    base = np.array([105.0, 120.0, 135.0])
    tilt = np.stack([8 * xx / width, 6 * yy / height, -6 * xx / width], -1)
    img = base + tilt - 60.0 * r2[..., None]
    return np.clip(np.round(img), 0, 255).astype(np.uint8)


def render_image(hm, table, background, quantize=True):
    """``clip(background + dc(n_x, n_y), 0, 255)`` per pixel and channel."""
    bg = np.asarray(background)
    if bg.shape != (*hm.shape, 3):
        raise DimensionMismatchError(f"background {bg.shape} does not match height map {hm.shape}")
    nx, ny = normals_from_heightmap(hm)
    out = np.clip(bg.astype(np.float64) + table.delta(nx, ny), 0.0, 255.0)
    return quantize_image(out) if quantize else out


def quantize_image(img):
    return np.clip(np.round(img), 0, 255).astype(np.uint8)


# -- blur ---------------------------------------------------------------------

def gaussian_kernel(size):
    """Normalized 1-D Gaussian with ``sigma = 0.3 ((size - 1) / 2 - 1) + 0.8``."""
    if size < 1 or size % 2 == 0:
        raise ValueError("kernel size must be a positive odd integer")
    sigma = 0.3 * ((size - 1) / 2 - 1) + 0.8
    x = np.arange(size) - (size - 1) / 2
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def pyramid_gaussian_blur(img, kernel_sizes=BLUR_KERNEL_SIZES, quantize=True):
    """Sequential separable Gaussian passes with replicate borders.

    Accumulates in float64 and quantizes once at the end; kernels larger
    than the image are skipped with a warning.
    """
    out = np.asarray(img, dtype=np.float64)
    for k in kernel_sizes:
        if k > min(out.shape[0], out.shape[1]):
            warnings.warn(f"image smaller than blur kernel {k}; pass skipped", RuntimeWarning, stacklevel=2)
            continue
        g = gaussian_kernel(k)
        out = correlate1d(out, g, axis=0, mode="nearest")
        out = correlate1d(out, g, axis=1, mode="nearest")
    return quantize_image(out) if quantize else out


def contact_centroid(image, background, threshold=0.1):
    """(column, row) centroid of the absolute difference from the background.

    Pixels below ``threshold`` times the peak difference are ignored;
    returns ``None`` when the images are identical.
    """
    diff = np.abs(np.asarray(image, np.float64) - np.asarray(background, np.float64)).sum(axis=-1)
    peak = diff.max()
    if peak <= 0:
        return None
    w = np.where(diff >= threshold * peak, diff, 0.0)
    rows, cols = np.indices(diff.shape)
    return np.array([(w * cols).sum() / w.sum(), (w * rows).sum() / w.sum()])


# -- file formats ----------------------------------------------------------------

def write_ppm(path, img):
    img = np.asarray(img)
    if img.dtype != np.uint8 or img.ndim != 3 or img.shape[2] != 3:
        raise ValueError("PPM output needs an (H, W, 3) uint8 image")
    h, w, _ = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(np.ascontiguousarray(img).tobytes())


def read_ppm(path):
    data = Path(path).read_bytes()
    tokens, pos = [], 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    if tokens[0] != b"P6" or int(tokens[3]) != 255:
        raise CorruptFileError(f"{path}: only 8-bit binary PPM (P6) is supported")
    w, h = int(tokens[1]), int(tokens[2])
    pixels = data[pos + 1:]
    if len(pixels) != w * h * 3:
        raise CorruptFileError(f"{path}: expected {w * h * 3} pixel bytes, got {len(pixels)}")
    return np.frombuffer(pixels, dtype=np.uint8).reshape(h, w, 3).copy()


def write_heightmap(path, hm):
    d = np.asarray(hm.depth, dtype="<f4")
    h, w = d.shape
    with open(path, "wb") as fh:
        fh.write(HEIGHTMAP_MAGIC + struct.pack("<IIf", w, h, hm.pixel_pitch))
        fh.write(d.tobytes())


def read_heightmap(path):
    data = Path(path).read_bytes()
    if data[:4] != HEIGHTMAP_MAGIC or len(data) < 16:
        raise CorruptFileError(f"{path}: not a height map file")
    w, h, pitch = struct.unpack_from("<IIf", data, 4)
    if len(data) != 16 + 4 * w * h:
        raise CorruptFileError(f"{path}: truncated height map")
    depth = np.frombuffer(data, dtype="<f4", offset=16).reshape(h, w).astype(np.float64)
    return HeightMap(depth, float(pitch))


def write_photometric_table(path, table):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["channel"] + [f"a{i}" for i in range(6)])
        for name, row in zip(CHANNELS, table.coefficients):
            wr.writerow([name] + [repr(float(v)) for v in row])


def read_photometric_table(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if [r["channel"] for r in rows] != list(CHANNELS):
        raise CorruptFileError(f"{path}: expected rows R, G, B")
    return PhotometricTable(np.array([[float(r[f"a{i}"]) for i in range(6)] for r in rows]))
