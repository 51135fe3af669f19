"""On-disk paired dataset: manifest, mesh frames, signal recording and splits.

Layout::

    manifest.csv          one row per paired sample
    biotac_topology.txt   digit_topology.txt
    meshes/biotac/NNNNNN.acrm   meshes/digit/NNNNNN.acrm
    signals.csv           raw recording (rest frames + presses, global time index)
    signal_rows.csv       trajectory owning each recording row
    splits/{train,val,test}.txt   one trajectory id per line
    splits/splits.sha256  digest of the three split files
    metadata.txt          generation settings and unused FEM constants

Manifest contact coordinates are in the DIGIT frame (the BioTac contact
mapped through the alignment), so they project directly into the image.
"""

import csv
import hashlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .exceptions import CorruptFileError, SplitContaminationError
from .mesh import read_frame, read_topology, write_frame, write_topology
from .signals import read_signal_csv, write_signal_csv

MANIFEST_COLUMNS = ["trajectory_id", "indenter_kind", "depth_mm", "biotac_mesh_path",
                    "digit_mesh_path", "signal_path", "contact_x", "contact_y", "contact_z"]
SPLIT_NAMES = ("train", "val", "test")


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def split_digest(directory):
    h = hashlib.sha256()
    for name in SPLIT_NAMES:
        h.update(name.encode() + b"\0")
        h.update((Path(directory) / "splits" / f"{name}.txt").read_bytes())
    return h.hexdigest()


def write_splits(directory, splits):
    d = Path(directory) / "splits"
    d.mkdir(parents=True, exist_ok=True)
    for name in SPLIT_NAMES:
        (d / f"{name}.txt").write_text("".join(f"{int(i)}\n" for i in splits[name]))
    (d / "splits.sha256").write_text(split_digest(directory) + "\n")


def read_splits(directory, verify=True):
    """Split id arrays; with ``verify`` the recorded digest must still match."""
    d = Path(directory) / "splits"
    out = {}
    for name in SPLIT_NAMES:
        text = (d / f"{name}.txt").read_text()
        out[name] = np.array([int(x) for x in text.split()], dtype=np.int64)
    if verify:
        recorded = (d / "splits.sha256").read_text().strip()
        if recorded != split_digest(directory):
            raise SplitContaminationError(f"{d}: split files changed since generation")
        seen = np.concatenate([out[n] for n in SPLIT_NAMES])
        if len(np.unique(seen)) != len(seen):
            raise SplitContaminationError(f"{d}: a trajectory appears in more than one split")
    return out


def write_dataset(directory, dataset, contact_digit, table, sample_rows, row_owner, splits, metadata):
    """Write every file of a generated dataset; ``row_owner`` is ``(tid, kind)`` per signal row."""
    d = Path(directory)
    (d / "meshes" / "biotac").mkdir(parents=True, exist_ok=True)
    (d / "meshes" / "digit").mkdir(parents=True, exist_ok=True)
    write_topology(d / "biotac_topology.txt", dataset.sensors.biotac)
    write_topology(d / "digit_topology.txt", dataset.sensors.digit)
    write_signal_csv(d / "signals.csv", table)
    with (d / "signal_rows.csv").open("w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["row", "trajectory_id", "indenter_kind"])
        for r, (tid, kind) in enumerate(row_owner):
            wr.writerow([r, int(tid), kind])
    depths = dataset.depth_mm
    with (d / "manifest.csv").open("w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(MANIFEST_COLUMNS)
        for i in range(len(dataset)):
            bp = f"meshes/biotac/{i:06d}.acrm"
            dp = f"meshes/digit/{i:06d}.acrm"
            write_frame(d / bp, dataset.biotac[i])
            write_frame(d / dp, dataset.digit[i])
            cx, cy, cz = (f"{v:.6f}" for v in contact_digit[i])
            wr.writerow([int(dataset.trajectory_id[i]), dataset.indenter_kind[i], f"{depths[i]:.1f}",
                         bp, dp, f"signals.csv#{int(sample_rows[i])}", cx, cy, cz])
    write_splits(d, splits)
    (d / "metadata.txt").write_text("".join(f"{k}={metadata[k]}\n" for k in sorted(metadata)))


@dataclass
class LoadedDataset:
    root: Path
    biotac_topology: object
    digit_topology: object
    biotac: np.ndarray  # (N, Vb, 3)
    digit: np.ndarray  # (N, Vd, 3)
    trajectory_id: np.ndarray
    indenter_kind: np.ndarray
    depth_mm: np.ndarray
    signal_row: np.ndarray
    contact: np.ndarray  # (N, 3), DIGIT frame
    signals: np.ndarray  # frame table
    row_trajectory: np.ndarray  # (n_rows,)
    splits: dict

    def __len__(self):
        return len(self.trajectory_id)

    def sample_mask(self, name):
        return np.isin(self.trajectory_id, self.splits[name])

    def row_mask(self, names):
        ids = np.concatenate([self.splits[n] for n in names])
        return np.isin(self.row_trajectory, ids)


def load_dataset(directory, load_meshes=True, verify_splits=True):
    d = Path(directory)
    if not (d / "manifest.csv").is_file():
        raise FileNotFoundError(f"{d}: no manifest.csv (not a dataset directory)")
    with (d / "manifest.csv").open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != MANIFEST_COLUMNS:
            raise CorruptFileError(f"{d / 'manifest.csv'}: unexpected columns {reader.fieldnames}")
        rows = list(reader)
    bt = read_topology(d / "biotac_topology.txt")
    dg = read_topology(d / "digit_topology.txt")
    n = len(rows)
    B = np.empty((n, bt.n_vertices, 3)) if load_meshes else None
    D = np.empty((n, dg.n_vertices, 3)) if load_meshes else None
    sig_rows = np.empty(n, np.int64)
    for i, r in enumerate(rows):
        if load_meshes:
            B[i] = read_frame(d / r["biotac_mesh_path"])
            D[i] = read_frame(d / r["digit_mesh_path"])
        path, _, row = r["signal_path"].partition("#")
        if path != "signals.csv" or not row.isdigit():
            raise CorruptFileError(f"manifest row {i}: bad signal_path {r['signal_path']!r}")
        sig_rows[i] = int(row)
    with (d / "signal_rows.csv").open(newline="") as fh:
        owners = np.array([int(r["trajectory_id"]) for r in csv.DictReader(fh)], np.int64)
    signals = read_signal_csv(d / "signals.csv")
    if len(owners) != len(signals):
        raise CorruptFileError(f"{d}: signal_rows.csv and signals.csv differ in length")
    return LoadedDataset(
        root=d, biotac_topology=bt, digit_topology=dg, biotac=B, digit=D,
        trajectory_id=np.array([int(r["trajectory_id"]) for r in rows], np.int64),
        indenter_kind=np.array([r["indenter_kind"] for r in rows]),
        depth_mm=np.array([float(r["depth_mm"]) for r in rows]),
        signal_row=sig_rows,
        contact=np.array([[float(r[k]) for k in ("contact_x", "contact_y", "contact_z")] for r in rows]).reshape(-1, 3),
        signals=signals,
        row_trajectory=owners,
        splits=read_splits(d, verify=verify_splits),
    )
