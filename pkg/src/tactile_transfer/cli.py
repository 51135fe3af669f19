"""``tactile-transfer`` command line: dataset generation, training, conversion, evaluation.

Exit codes: 0 success, 1 other failure, 2 configuration error, 3 I/O error,
4 missing prerequisite or checkpoint, 5 split contamination.
"""

import argparse
import csv
import logging
import os
import platform
import sys
from contextlib import contextmanager
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import DEFAULTS, resolve_config
from .dataset import load_dataset, sha256_file, split_digest, write_dataset
from .exceptions import (
    ConfigError,
    CorruptFileError,
    InsufficientNonContactError,
    MissingCheckpointError,
    MissingPrerequisiteError,
    SplitContaminationError,
    TactileTransferError,
)
from .mesh import MeshScaler, read_frame, read_topology, write_frame, write_topology
from .metrics import (
    EvalReport,
    Summary,
    deformation_mask,
    emit_report,
    evaluate_meshes,
    signal_rmse,
)
from .models import build_m2mpn, build_mesh_vae, build_s2mpn, build_svb, default_spec, read_spec, write_spec
from .nn import checkpoint as ckpt
from .nn.training import read_history, write_history
from .pipeline import (
    MESH_STATS_FILE,
    MODEL_FILE,
    SIGNAL_STATS_FILE,
    SPEC_FILE,
    TOPOLOGY_FILE,
    PipelineBundle,
    f32_stats,
    load_component,
    load_mesh_stats,
    parameter_hash,
    save_mesh_stats,
    scaler_from_stats,
)
from .render import (
    CameraConfig,
    contact_centroid,
    default_background,
    default_photometric_table,
    pyramid_gaussian_blur,
    rasterize_heightmap,
    read_photometric_table,
    read_ppm,
    render_image,
    write_heightmap,
    write_photometric_table,
    write_ppm,
)
from .signals import (
    DriftCorrector,
    balance_dataset,
    correct_drift_values,
    fit_drift,
    load_channel_stats,
    normalize_values,
    read_signal_csv,
    save_channel_stats,
)
from .synth import SensorPair, generate_paired_dataset, split_by_trajectory, synthesize_signals

log = logging.getLogger("tactile_transfer")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_IO, EXIT_PREREQ, EXIT_CONTAMINATION = 0, 1, 2, 3, 4, 5
STATE_FILE = "state.acrw"
HISTORY_FILE = "history.csv"
PROVENANCE_FILE = "provenance.txt"
CONFIG_FILE = "config.txt"
PREREQUISITES = {"S2MPN": ("svb", "mvb"), "M2MPN": ("mvb", "mvd")}
CENTROID_TOLERANCE = 0.10  # fraction of image width


class RunDirLockedError(TactileTransferError, OSError):
    """Another process owns the run directory."""


# -- run directories -------------------------------------------------------------

@contextmanager
def run_directory(path):
    """Create ``path`` and hold its lock file for the duration of the command."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    lock = path / ".lock"
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise RunDirLockedError(f"{path} is locked by another run (remove {lock} if stale)") from None
    try:
        os.write(fd, f"{os.getpid()}\n".encode())
        os.close(fd)
        yield path
    finally:
        lock.unlink(missing_ok=True)


def write_provenance(run_dir, cfg, inputs=(), extra=None):
    """Resolved config plus seed, versions and input checksums."""
    (run_dir / CONFIG_FILE).write_text(cfg.to_text())
    lines = [f"command={cfg.command}", f"seed={cfg.seed}", f"package_version={__version__}",
             f"python={platform.python_version()}", f"numpy={np.__version__}"]
    for p in inputs:
        lines.append(f"input_sha256[{Path(p).name}]={sha256_file(p)}")
    for k, v in (extra or {}).items():
        lines.append(f"{k}={v}")
    (run_dir / PROVENANCE_FILE).write_text("\n".join(lines) + "\n")


def read_provenance(run_dir):
    path = Path(run_dir) / PROVENANCE_FILE
    if not path.is_file():
        return {}
    out = {}
    for line in path.read_text().splitlines():
        k, _, v = line.partition("=")
        out[k] = v
    return out


def _ids_text(ids):
    return " ".join(str(int(i)) for i in ids)


# -- gen-dataset -------------------------------------------------------------------

def _row_owners(table, sample_rows, trajectory_id, indenter_kind):
    """Each recording row belongs to the press block that follows it."""
    n = len(table)
    tid = np.full(n, -1, np.int64)
    kind = np.empty(n, dtype=object)
    tid[sample_rows] = trajectory_id
    kind[sample_rows] = indenter_kind
    for r in range(n - 2, -1, -1):
        if tid[r] < 0:
            tid[r], kind[r] = tid[r + 1], kind[r + 1]
    return list(zip(tid.tolist(), kind.tolist()))


def cmd_gen_dataset(cfg, args):
    v = cfg.values
    sensors = SensorPair.build(v["biotac_vertices"], v["digit_vertices"])
    ds = generate_paired_dataset(v["n_trajectories"], seed=cfg.seed, sensors=sensors,
                                 falloff_radius=v["falloff_radius_mm"], margin=v["contact_margin_mm"])
    table, sample_rows = synthesize_signals(ds, rest_frames=v["rest_frames"], seed=cfg.seed)
    splits = split_by_trajectory(ds.trajectory_id, v["test_fraction"], v["val_fraction"], seed=cfg.seed)
    contact_digit = sensors.alignment(ds.contact_xyz)
    owners = _row_owners(table, sample_rows, ds.trajectory_id, ds.indenter_kind)
    meta = dict(ds.metadata, biotac_vertices=sensors.biotac.n_vertices,
                digit_vertices=sensors.digit.n_vertices, rest_frames=v["rest_frames"])
    with run_directory(args.out) as out:
        write_dataset(out, ds, contact_digit, table, sample_rows, owners, splits, meta)
        write_provenance(out, cfg, extra={
            "manifest_sha256": sha256_file(out / "manifest.csv"),
            "split_sha256": split_digest(out),
            "n_samples": len(ds),
        })
    print(f"wrote {len(ds)} paired samples ({len(np.unique(ds.trajectory_id))} trajectories) to {args.out}")
    return EXIT_OK


# -- training ------------------------------------------------------------------------

def _load_training_data(cfg, load_meshes=True):
    if not cfg["data"]:
        raise ConfigError("training needs a dataset: set data=... or pass --data")
    return load_dataset(cfg["data"], load_meshes=load_meshes)


def _resolved_spec(kind, cfg):
    spec = read_spec(cfg["spec"]) if cfg["spec"] else default_spec(kind)
    if spec.kind != kind:
        raise ConfigError(f"spec file describes {spec.kind}, expected {kind}")
    return replace(spec, max_epochs=cfg["max_epochs"], batch_size=cfg["batch_size"],
                   early_stop_patience=cfg["early_stop_patience"], seed=cfg.seed)


def _check_prerequisites(kind, bundle_dir):
    for dep in PREREQUISITES.get(kind, ()):
        if not (bundle_dir / dep / MODEL_FILE).is_file():
            raise MissingPrerequisiteError(
                f"{kind} needs a trained {dep.upper()} in {bundle_dir / dep} (train-{dep} first)"
            )


def _resume_state(est, path):
    if not path:
        return None
    path = Path(path)
    if not path.is_file():
        raise MissingCheckpointError(f"resume checkpoint {path} not found")
    history = read_history(path.parent / HISTORY_FILE) if (path.parent / HISTORY_FILE).is_file() else []
    state = ckpt.restore_state(ckpt.read_checkpoint(path), est.params_, history)
    state.history = [h for h in state.history if h["epoch"] <= state.epoch]
    return state


def _epoch_writer(est, run_dir):
    def on_epoch(state):
        snap = replace(state, last_params=est.params_.state())
        ckpt.write_checkpoint(run_dir / STATE_FILE, ckpt.state_tensors(snap, est.params_))
        write_history(run_dir / HISTORY_FILE, state.history)
    return on_epoch


def _finish_training(est, spec, run_dir):
    est.save(run_dir / MODEL_FILE)
    write_spec(run_dir / SPEC_FILE, spec)
    write_history(run_dir / HISTORY_FILE, est.history_)
    ckpt.write_checkpoint(run_dir / STATE_FILE, ckpt.state_tensors(est.train_state_, est.params_))


def _signal_preprocessing(data):
    """Drift and channel statistics fitted on train and validation recordings only."""
    rows = data.row_mask(["train", "val"])
    dc = DriftCorrector().fit(data.signals[rows])
    return dc.stats_, dc.drift_


def _normalized_signals(data, stats, drift):
    t = data.signals
    return normalize_values(correct_drift_values(t[:, 2:], t[:, 0], drift, stats), stats)


def _signal_rows(data, split, keep_fraction, seed):
    """Contact rows of ``split`` plus a seeded share of its rest rows."""
    ids = data.splits[split]
    in_split = np.isin(data.row_trajectory, ids)
    rows = np.flatnonzero(in_split)
    kept = balance_dataset(np.column_stack([data.signals[rows, :2], rows]), keep_fraction, seed)
    kept_rows = kept[:, 2].astype(np.int64)
    return kept_rows


def _rest_copies(reference, n):
    # round like stored frames so constant axes stay exactly constant
    rest = np.asarray(reference, np.float32).astype(np.float64)
    return np.repeat(rest[None], n, axis=0)


def _train_meta(data, extra=None):
    meta = {
        "split_sha256": split_digest(data.root),
        "train_trajectories": _ids_text(data.splits["train"]),
        "val_trajectories": _ids_text(data.splits["val"]),
    }
    meta.update(extra or {})
    return meta


def _dataset_inputs(data):
    return [data.root / "manifest.csv", data.root / "signals.csv"]


def cmd_train(kind, cfg, args):
    bundle = Path(args.out)
    _check_prerequisites(kind, bundle)
    spec = _resolved_spec(kind, cfg)
    data = _load_training_data(cfg, load_meshes=kind != "SVB")
    run_dir_path = bundle / kind.lower()
    with run_directory(run_dir_path) as run_dir:
        trainer = {"SVB": _train_svb, "MVB": _train_mesh_vae, "MVD": _train_mesh_vae,
                   "S2MPN": _train_s2mpn, "M2MPN": _train_m2mpn}[kind]
        est, extra = trainer(kind, spec, cfg, args, data, bundle, run_dir)
        _finish_training(est, spec, run_dir)
        write_provenance(run_dir, cfg, _dataset_inputs(data), _train_meta(data, extra))
    h = est.history_
    print(f"{kind}: {len(h)} epochs, best val {est.train_state_.best_val:.6g} "
          f"(epoch {est.train_state_.best_epoch}), epoch-1 val {h[0]['val_loss']:.6g}")
    return EXIT_OK


def _train_svb(kind, spec, cfg, args, data, bundle, run_dir):
    stats, drift = _signal_preprocessing(data)
    save_channel_stats(run_dir / SIGNAL_STATS_FILE, stats, drift)
    X = _normalized_signals(data, stats, drift)
    keep = cfg["keep_noncontact_fraction"]
    tr = _signal_rows(data, "train", keep, cfg.seed)
    va = _signal_rows(data, "val", keep, cfg.seed + 1)
    est = build_svb(spec)
    state = _resume_state(est, args.resume_from)
    est.fit(X[tr], validation_data=X[va], resume=state, on_epoch=_epoch_writer(est, run_dir))
    return est, {"n_train": len(tr), "n_val": len(va)}


def _train_mesh_vae(kind, spec, cfg, args, data, bundle, run_dir):
    topo = data.biotac_topology if kind == "MVB" else data.digit_topology
    meshes = data.biotac if kind == "MVB" else data.digit
    n_rest = cfg["rest_copies"]
    tr = np.concatenate([meshes[data.sample_mask("train")],
                         _rest_copies(topo.vertices, n_rest * len(data.splits["train"]))])
    va = np.concatenate([meshes[data.sample_mask("val")],
                         _rest_copies(topo.vertices, n_rest * len(data.splits["val"]))])
    stats = f32_stats(MeshScaler().fit(tr).stats_)
    scaler = scaler_from_stats(stats)
    save_mesh_stats(run_dir / MESH_STATS_FILE, stats)
    write_topology(run_dir / TOPOLOGY_FILE, topo)
    est = build_mesh_vae(spec, topo)
    state = _resume_state(est, args.resume_from)
    est.fit(scaler.transform(tr), validation_data=scaler.transform(va), resume=state,
            on_epoch=_epoch_writer(est, run_dir))
    return est, {"n_train": len(tr), "n_val": len(va)}


def _load_mesh_side(bundle, name):
    d = bundle / name
    topo = read_topology(d / TOPOLOGY_FILE)
    vae = load_component(d, name.upper(), topo)
    return vae, scaler_from_stats(load_mesh_stats(d / MESH_STATS_FILE)), topo


def _frozen_hashes(models):
    return {f"frozen_{k}_sha256": parameter_hash(m) for k, m in models.items()}


def _assert_unchanged(before, models):
    after = _frozen_hashes(models)
    if after != before:
        raise TactileTransferError("a frozen component changed during projection training")


def _train_s2mpn(kind, spec, cfg, args, data, bundle, run_dir):
    svb = load_component(bundle / "svb", "SVB")
    stats, drift = load_channel_stats(bundle / "svb" / SIGNAL_STATS_FILE)
    mvb, bt_scaler, bt_topo = _load_mesh_side(bundle, "mvb")
    frozen = {"svb": svb, "mvb": mvb}
    before = _frozen_hashes(frozen)
    X = _normalized_signals(data, stats, drift)
    z_signal = svb.transform(X)
    z_rest = mvb.transform(bt_scaler.transform(bt_topo.vertices[None]))[0]
    sample_of_row = np.full(len(data.signals), -1, np.int64)
    sample_of_row[data.signal_row] = np.arange(len(data))
    z_mesh = mvb.transform(bt_scaler.transform(data.biotac))

    def pairs(split, seed):
        rows = _signal_rows(data, split, cfg["keep_noncontact_fraction"], seed)
        s = sample_of_row[rows]
        targets = np.where((s >= 0)[:, None], z_mesh[np.maximum(s, 0)], z_rest)
        return z_signal[rows], targets

    Xt, Yt = pairs("train", cfg.seed)
    Xv, Yv = pairs("val", cfg.seed + 1)
    est = build_s2mpn(spec, svb.latent_dim, mvb.latent_dim)
    state = _resume_state(est, args.resume_from)
    est.fit(Xt, Yt, validation_data=(Xv, Yv), resume=state, on_epoch=_epoch_writer(est, run_dir))
    _assert_unchanged(before, frozen)
    return est, {"n_train": len(Xt), "n_val": len(Xv), **before}


def _train_m2mpn(kind, spec, cfg, args, data, bundle, run_dir):
    mvb, bt_scaler, bt_topo = _load_mesh_side(bundle, "mvb")
    mvd, dg_scaler, dg_topo = _load_mesh_side(bundle, "mvd")
    frozen = {"mvb": mvb, "mvd": mvd}
    before = _frozen_hashes(frozen)
    n_rest = cfg["rest_copies"]

    def pairs(split):
        m = data.sample_mask(split)
        k = n_rest * len(data.splits[split])
        bt = np.concatenate([data.biotac[m], _rest_copies(bt_topo.vertices, k)])
        dg = np.concatenate([data.digit[m], _rest_copies(dg_topo.vertices, k)])
        return mvb.transform(bt_scaler.transform(bt)), mvd.transform(dg_scaler.transform(dg))

    Xt, Yt = pairs("train")
    Xv, Yv = pairs("val")
    est = build_m2mpn(spec, mvb.latent_dim, mvd.latent_dim)
    state = _resume_state(est, args.resume_from)
    est.fit(Xt, Yt, validation_data=(Xv, Yv), resume=state, on_epoch=_epoch_writer(est, run_dir))
    _assert_unchanged(before, frozen)
    return est, {"n_train": len(Xt), "n_val": len(Xv), **before}


# -- convert -------------------------------------------------------------------------

def _load_bundle(path):
    if not path:
        raise ConfigError("set bundle=... or pass --bundle")
    return PipelineBundle.load(path)


def _input_drift(mode, table, bundle):
    if mode == "none":
        return None, "none"
    if mode == "bundle":
        return bundle.drift, "bundle"
    try:
        return fit_drift(table, bundle.signal_stats), "refit"
    except InsufficientNonContactError:
        if mode == "refit":
            raise
        return None, "none"


def cmd_convert(cfg, args):
    if not cfg["input"]:
        raise ConfigError("set input=... or pass --input")
    bundle = _load_bundle(cfg["bundle"])
    table = read_signal_csv(cfg["input"])
    if len(table) == 0:
        raise CorruptFileError(f"{cfg['input']}: no frames")
    drift, mode = _input_drift(cfg["drift"], table, bundle)
    out_res = bundle.run(table, table[:, 0], drift)
    with run_directory(args.out) as out:
        for sub in ("images", "biotac", "digit"):
            (out / sub).mkdir(exist_ok=True)
        if args.emit_intermediates:
            (out / "heightmaps").mkdir(exist_ok=True)
        rows = []
        for i in range(len(table)):
            name = f"{i:06d}"
            write_ppm(out / "images" / f"{name}.ppm", out_res.images[i])
            write_frame(out / "biotac" / f"{name}.acrm", out_res.biotac[i])
            write_frame(out / "digit" / f"{name}.acrm", out_res.digit[i])
            c = contact_centroid(out_res.images[i], bundle.background)
            cc = ("", "") if c is None else (f"{c[0]:.3f}", f"{c[1]:.3f}")
            rows.append([i, int(round(table[i, 0])), int(table[i, 1] >= 0.5), f"images/{name}.ppm",
                         f"biotac/{name}.acrm", f"digit/{name}.acrm", *cc])
            if args.emit_intermediates:
                write_heightmap(out / "heightmaps" / f"{name}.acrh", out_res.heightmaps[i])
        with (out / "index.csv").open("w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(["row", "t", "c", "image_path", "biotac_mesh_path", "digit_mesh_path",
                         "centroid_col", "centroid_row"])
            wr.writerows(rows)
        if args.emit_intermediates:
            _write_latents(out / "latents.csv", out_res.latents)
        (out / "summary.txt").write_text(
            f"frames={len(table)}\ndrift_correction={mode}\n"
            f"image_size={bundle.camera.width}x{bundle.camera.height}\n"
        )
        write_provenance(out, cfg, [cfg["input"]], {"bundle": cfg["bundle"]})
    print(f"converted {len(table)} frames into {args.out}")
    return EXIT_OK


def _write_latents(path, latents):
    names = ["signal", "svb", "mvb", "mvd"]
    header = ["row"] + [f"{n}_{j}" for n in names for j in range(latents[n].shape[1])]
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(header)
        for i in range(len(latents["svb"])):
            wr.writerow([i] + [repr(float(x)) for n in names for x in latents[n][i]])


# -- eval ------------------------------------------------------------------------------

def _check_split_hygiene(data, bundle_dir):
    """Refuse evaluation when the test split overlaps anything a component trained on."""
    digest = split_digest(data.root)
    test = set(data.splits["test"].tolist())
    for comp in ("svb", "mvb", "mvd", "s2mpn", "m2mpn"):
        prov = read_provenance(bundle_dir / comp)
        if not prov:
            raise MissingCheckpointError(f"{bundle_dir / comp}: no provenance record")
        if prov.get("split_sha256") != digest:
            raise SplitContaminationError(f"{comp} was trained against a different split")
        used = {int(x) for key in ("train_trajectories", "val_trajectories")
                for x in prov.get(key, "").split()}
        overlap = sorted(test & used)
        if overlap:
            raise SplitContaminationError(f"{comp} trained on test trajectories {overlap[:5]}")
    return digest


def _region_areas(topology, pred, reference):
    masks = deformation_mask(pred, reference)
    return masks.astype(np.float64) @ topology.vertex_areas


def cmd_eval(cfg, args):
    if not cfg["data"]:
        raise ConfigError("set data=... or pass --data")
    data = load_dataset(cfg["data"])
    bundle_dir = Path(cfg["bundle"]) if cfg["bundle"] else None
    bundle = _load_bundle(cfg["bundle"])
    _check_split_hygiene(data, bundle_dir)

    te = data.sample_mask("test")
    idx = np.flatnonzero(te)
    bt_ref, dg_ref = data.biotac_topology.vertices, data.digit_topology.vertices
    gt_bt, gt_dg = data.biotac[idx], data.digit[idx]
    raw = data.signals[data.signal_row[idx]]
    x = bundle.normalize_signals(raw[:, 2:], raw[:, 0], bundle.drift)

    sig = Summary.of(signal_rmse(bundle.svb.reconstruct(x), x))
    z_b_gt = bundle.encode_biotac(gt_bt)
    rows = {
        "MVB": evaluate_meshes(bundle.decode_biotac(z_b_gt), gt_bt, bt_ref),
        "MVD": evaluate_meshes(
            bundle.decode_digit(bundle.mvd.transform(bundle.digit_scaler.transform(gt_dg))), gt_dg, dg_ref),
        "M2MPN": evaluate_meshes(bundle.decode_digit(bundle.m2mpn.predict(z_b_gt)), gt_dg, dg_ref),
    }
    n_render = len(idx) if cfg["render_frames"] == "all" else min(len(idx), int(cfg["render_frames"]))
    e2e = bundle.run(raw[:, 2:], raw[:, 0], bundle.drift, render=False)
    rows["S2MPN"] = evaluate_meshes(e2e.biotac, gt_bt, bt_ref)
    report = EvalReport(rows, sig)
    text, csv_text = emit_report(report)

    areas = _region_areas(data.digit_topology, e2e.digit, dg_ref)
    width = bundle.camera.width
    with run_directory(args.out) as out:
        (out / "report.txt").write_text(text)
        (out / "report.csv").write_text(csv_text)
        errors = np.full(len(idx), np.nan)
        for j in range(n_render):
            img = bundle.render(e2e.digit[j])
            c = contact_centroid(img, bundle.background)
            target = bundle.camera.pixel_of(data.contact[idx[j], :2])
            if c is not None:
                errors[j] = float(np.hypot(*(c - target)))
        with (out / "end_to_end.csv").open("w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(["sample", "trajectory_id", "indenter_kind", "depth_mm", "centroid_error_px",
                         "predicted_region_area_mm2"])
            for j, i in enumerate(idx):
                err = "" if np.isnan(errors[j]) else f"{errors[j]:.4f}"
                wr.writerow([int(i), int(data.trajectory_id[i]), data.indenter_kind[i],
                             f"{data.depth_mm[i]:.1f}", err, f"{areas[j]:.6f}"])
        summary = _end_to_end_summary(data, idx, errors[:n_render], areas, width)
        (out / "end_to_end.txt").write_text("".join(f"{k}={v}\n" for k, v in summary.items()))
        write_provenance(out, cfg, _dataset_inputs(data),
                         {"bundle": cfg["bundle"], "split_sha256": split_digest(data.root)})
    sys.stdout.write(text)
    return EXIT_OK


def _end_to_end_summary(data, idx, errors, areas, width):
    ok = np.isfinite(errors) & (errors < CENTROID_TOLERANCE * width)
    groups = {}
    for j, i in enumerate(idx):
        groups.setdefault((int(data.trajectory_id[i]), str(data.indenter_kind[i])), []).append(
            (data.depth_mm[i], areas[j]))
    monotone = 0
    for seq in groups.values():
        a = np.array([s[1] for s in sorted(seq)])
        monotone += bool(np.all(np.diff(a) >= 0))
    return {
        "rendered_frames": len(errors),
        "centroid_tolerance_px": f"{CENTROID_TOLERANCE * width:.1f}",
        "centroid_within_tolerance_fraction": f"{ok.mean() if len(ok) else float('nan'):.6f}",
        "centroid_error_median_px": f"{np.nanmedian(errors) if np.isfinite(errors).any() else float('nan'):.4f}",
        "test_trajectories": len(groups),
        "monotone_region_area_fraction": f"{monotone / max(len(groups), 1):.6f}",
    }


# -- render -----------------------------------------------------------------------------

def cmd_render(cfg, args):
    if not cfg["input"] or not cfg["topology"]:
        raise ConfigError("render needs input=<mesh.acrm> and topology=<topology.txt>")
    topo = read_topology(cfg["topology"])
    pos = read_frame(cfg["input"])
    table = read_photometric_table(cfg["photometric"]) if cfg["photometric"] else default_photometric_table()
    camera = CameraConfig()
    bg = read_ppm(cfg["background"]) if cfg["background"] else default_background(camera.width, camera.height)
    if bg.shape[:2] != (camera.height, camera.width):
        camera = CameraConfig(bg.shape[1], bg.shape[0])
    hm, skipped = rasterize_heightmap(pos, topo.triangles, camera, return_skipped=True)
    img = pyramid_gaussian_blur(render_image(hm, table, bg, quantize=False))
    with run_directory(args.out) as out:
        write_ppm(out / "image.ppm", img)
        write_heightmap(out / "heightmap.acrh", hm)
        write_photometric_table(out / "photometric.csv", table)
        inputs = [cfg["input"], cfg["topology"]] + [cfg[k] for k in ("photometric", "background") if cfg[k]]
        write_provenance(out, cfg, inputs, {"degenerate_triangles_skipped": skipped})
    print(f"rendered {args.out}/image.ppm ({skipped} degenerate triangles skipped)")
    return EXIT_OK


# -- entry point ------------------------------------------------------------------------

COMMANDS = {
    "gen-dataset": cmd_gen_dataset,
    "train-svb": lambda c, a: cmd_train("SVB", c, a),
    "train-mvb": lambda c, a: cmd_train("MVB", c, a),
    "train-mvd": lambda c, a: cmd_train("MVD", c, a),
    "train-s2mpn": lambda c, a: cmd_train("S2MPN", c, a),
    "train-m2mpn": lambda c, a: cmd_train("M2MPN", c, a),
    "convert": cmd_convert,
    "eval": cmd_eval,
    "render": cmd_render,
}
_PATH_FLAGS = {"data": "data", "bundle": "bundle", "input": "input"}


def build_parser():
    p = argparse.ArgumentParser(prog="tactile-transfer", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", help="key=value configuration file")
        s.add_argument("--seed", type=int, help="global seed (unsigned 64-bit)")
        s.add_argument("--out", required=True, help="output directory (bundle directory for train-*)")
        s.add_argument("--desk-scale", action="store_true", help="apply the desk-scale preset")
        s.add_argument("--emit-intermediates", action="store_true",
                       help="convert: also write latents and height maps")
        s.add_argument("--resume-from", help="train-*: training state checkpoint to continue from")
        s.add_argument("--data", help="dataset directory (overrides data=)")
        s.add_argument("--bundle", help="bundle directory (overrides bundle=)")
        s.add_argument("--input", help="input file (overrides input=)")
        s.add_argument("-v", "--verbose", action="store_true", help="log training progress")
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        overrides = {}
        for flag, key in _PATH_FLAGS.items():
            value = getattr(args, flag)
            if value is not None:
                if key not in DEFAULTS[args.command]:
                    raise ConfigError(f"--{flag} does not apply to {args.command}")
                overrides[key] = value
        cfg = resolve_config(args.command, args.config, args.seed, args.desk_scale, overrides)
        return COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        return _fail(exc, EXIT_CONFIG)
    except SplitContaminationError as exc:
        return _fail(exc, EXIT_CONTAMINATION)
    except (MissingPrerequisiteError, MissingCheckpointError) as exc:
        return _fail(exc, EXIT_PREREQ)
    except (OSError, CorruptFileError) as exc:
        return _fail(exc, EXIT_IO)
    except (TactileTransferError, ValueError) as exc:
        return _fail(exc, EXIT_FAIL)


def _fail(exc, code):
    print(f"error: {exc}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
