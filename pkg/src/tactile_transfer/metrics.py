"""Mesh and signal error metrics and the per-network report table.

Mesh positions are in millimetres; mesh metrics are reported in
micrometres. RMSE is per coordinate: ``sqrt(sum |d|^2 / (3 n))`` over the
``n`` selected vertices. The Euclidean metric is the mean per-vertex
distance. Test-set figures are the mean and population std of per-sample
values.
"""

import csv
import io
from dataclasses import dataclass

import numpy as np

from .exceptions import EmptyMaskError, LengthMismatchError, TopologyMismatchError

MM_TO_UM = 1000.0
REGION_THRESHOLD_UM = 10.0
REPORT_ORDER = ("S2MPN", "MVB", "MVD", "M2MPN")
MESH_METRICS = (("rmse", "all"), ("euclidean", "all"), ("rmse", "region"), ("euclidean", "region"))


def _positions(mesh):
    return np.asarray(getattr(mesh, "positions", mesh), dtype=np.float64)


def _pair(pred, target):
    p, t = _positions(pred), _positions(target)
    if p.shape != t.shape:
        raise TopologyMismatchError(f"meshes differ in shape: {p.shape} vs {t.shape}")
    return p, t


def deformation_mask(ground_truth, reference, threshold_um=REGION_THRESHOLD_UM):
    """Vertices displaced at least ``threshold_um`` from the reference (inclusive).

    Works on single meshes ``(V, 3)`` and batches ``(n, V, 3)``.
    """
    g, r = _positions(ground_truth), _positions(reference)
    if g.shape[-2:] != r.shape:
        raise TopologyMismatchError(f"meshes differ in shape: {g.shape} vs {r.shape}")
    dist_um = np.linalg.norm(g - r, axis=-1) * MM_TO_UM
    # tolerance absorbs the float rounding of an exact 10 um offset
    return dist_um >= threshold_um * (1 - 1e-9)


def _select(p, t, mask):
    if mask is None:
        return p - t
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != p.shape[:-1]:
        raise TopologyMismatchError("mask does not match the mesh")
    if not mask.any():
        raise EmptyMaskError("no vertex selected")
    return (p - t)[mask]


def mesh_rmse(pred, target, mask=None):
    d = _select(*_pair(pred, target), mask)
    return float(np.sqrt(np.mean(d * d)) * MM_TO_UM)


def mesh_euclidean(pred, target, mask=None):
    d = _select(*_pair(pred, target), mask)
    return float(np.linalg.norm(d, axis=-1).mean() * MM_TO_UM)


def signal_rmse(pred, target):
    """Per-frame RMSE over the 19 normalized channels; returns ``(n,)`` values."""
    p = np.atleast_2d(np.asarray(pred, dtype=np.float64))
    t = np.atleast_2d(np.asarray(target, dtype=np.float64))
    if p.shape != t.shape:
        raise LengthMismatchError(f"prediction {p.shape} and target {t.shape} differ")
    return np.sqrt(np.mean((p - t) ** 2, axis=1))


@dataclass(frozen=True)
class Summary:
    mean: float
    std: float

    @classmethod
    def of(cls, values):
        v = np.asarray(values, dtype=np.float64)
        if v.size == 0:
            return cls(float("nan"), float("nan"))
        m = v.mean()
        return cls(float(m), float(np.sqrt(np.mean((v - m) ** 2))))

    def __str__(self):
        return f"{self.mean:.2f} ({self.std:.2f})"


def evaluate_meshes(pred, target, reference):
    """Per-sample metrics for a batch; returns ``{(metric, scope): Summary}``.

    Samples whose ground truth has an empty deformation region are left out
    of the region statistics.
    """
    p, t = _pair(pred, target)
    masks = deformation_mask(t, reference)
    per = {key: [] for key in MESH_METRICS}
    for i in range(len(p)):
        per[("rmse", "all")].append(mesh_rmse(p[i], t[i]))
        per[("euclidean", "all")].append(mesh_euclidean(p[i], t[i]))
        if masks[i].any():
            per[("rmse", "region")].append(mesh_rmse(p[i], t[i], masks[i]))
            per[("euclidean", "region")].append(mesh_euclidean(p[i], t[i], masks[i]))
    return {k: Summary.of(v) for k, v in per.items()}


@dataclass
class EvalReport:
    """Rows keyed by network name plus the signal VAE reconstruction error."""

    rows: dict
    signal: Summary = None

    def ordered_rows(self):
        names = [n for n in REPORT_ORDER if n in self.rows]
        return names + sorted(n for n in self.rows if n not in REPORT_ORDER)


HEADER_NOTE = (
    "# values: mean (std) over test samples, micrometres\n"
    "# RMSE = sqrt(mean over selected vertices and 3 coordinates of squared error)\n"
    "# Euc = mean over selected vertices of the per-vertex Euclidean distance\n"
    "# region = ground-truth vertices displaced >= 10 um from the undeformed mesh\n"
)


def emit_report(report):
    """Return ``(text_table, csv_text)``."""
    if not report.rows:
        raise ValueError("a report needs at least one row")
    cols = ["RMSE all", "Euc all", "RMSE region", "Euc region"]
    names = report.ordered_rows()
    cells = [[str(report.rows[n][k]) for k in MESH_METRICS] for n in names]
    w0 = max(len("Network"), *(len(n) for n in names))
    widths = [max(len(c), *(len(r[j]) for r in cells)) for j, c in enumerate(cols)]
    line = lambda first, rest: "  ".join([first.ljust(w0)] + [c.rjust(w) for c, w in zip(rest, widths)])  # noqa: E731
    text = [HEADER_NOTE.rstrip("\n"), line("Network", cols)]
    text += [line(n, r) for n, r in zip(names, cells)]
    if report.signal is not None:
        text.append(f"SVB signal RMSE (normalized units): {report.signal}")

    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["network", "metric", "scope", "mean_um", "std_um"])
    for n in names:
        for metric, scope in MESH_METRICS:
            s = report.rows[n][(metric, scope)]
            wr.writerow([n, metric, scope, f"{s.mean:.6f}", f"{s.std:.6f}"])
    if report.signal is not None:
        wr.writerow(["SVB", "rmse", "signal", f"{report.signal.mean:.6f}", f"{report.signal.std:.6f}"])
    return "\n".join(text) + "\n", buf.getvalue()


def parse_report_csv(text):
    rows = {}
    signal = None
    for r in csv.DictReader(io.StringIO(text)):
        s = Summary(float(r["mean_um"]), float(r["std_um"]))
        if r["scope"] == "signal":
            signal = s
        else:
            rows.setdefault(r["network"], {})[(r["metric"], r["scope"])] = s
    return EvalReport(rows, signal)
