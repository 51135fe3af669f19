"""BioTac electrode signal ingestion: channel statistics, normalization,
linear drift correction and contact/non-contact balancing.

Frames travel either as :class:`SignalFrame` objects or, for bulk work, as
frame tables: float arrays with columns ``t, c, e00..e18`` (the CSV layout).
"""

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import N_ELECTRODES, check_frame_table, electrodes_of
from .exceptions import (
    ConstantChannelError,
    CorruptFileError,
    EmptyInputError,
    InsufficientNonContactError,
    ShapeMismatchError,
    StatsMismatchError,
)

CSV_HEADER = ["t", "c"] + [f"e{i:02d}" for i in range(N_ELECTRODES)]


@dataclass(frozen=True)
class SignalFrame:
    electrodes: np.ndarray
    timestamp_index: int = 0
    contact_flag: bool = True

    def __post_init__(self):
        e = np.asarray(self.electrodes, dtype=np.float64).reshape(-1)
        if e.shape[0] != N_ELECTRODES:
            raise ShapeMismatchError(f"a frame holds {N_ELECTRODES} electrodes, got {e.shape[0]}")
        if self.timestamp_index < 0:
            raise ValueError("timestamp_index must be non-negative")
        object.__setattr__(self, "electrodes", e)


@dataclass(frozen=True)
class ChannelStats:
    min: np.ndarray
    max: np.ndarray
    default_value: np.ndarray

    def __post_init__(self):
        for name in ("min", "max", "default_value"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.float64))

    @property
    def n_channels(self):
        return self.min.shape[0]

    @property
    def span(self):
        return self.max - self.min


@dataclass(frozen=True)
class DriftModel:
    slope: np.ndarray
    intercept: np.ndarray
    n_fit_frames: int = field(default=0, compare=False)

    def predict(self, t):
        t = np.asarray(t, dtype=np.float64)
        return np.multiply.outer(t, self.slope) + self.intercept


def frames_to_table(frames):
    """Stack frames into a ``(n, 21)`` table ``[t, c, e00..e18]``."""
    frames = list(frames)
    if not frames:
        return np.empty((0, N_ELECTRODES + 2))
    return np.array(
        [[f.timestamp_index, float(f.contact_flag), *f.electrodes] for f in frames],
        dtype=np.float64,
    )


def table_to_frames(table):
    table = check_frame_table(table)
    return [
        SignalFrame(row[2:].copy(), int(round(row[0])), bool(row[1] >= 0.5)) for row in table
    ]


def _as_table(frames):
    if isinstance(frames, np.ndarray):
        return check_frame_table(frames)
    return frames_to_table(frames)


def compute_channel_stats(frames):
    """Per-channel extrema over all frames and rest default from non-contact frames."""
    table = _as_table(frames)
    if table.shape[0] < 2:
        raise EmptyInputError("at least two frames are required for channel statistics")
    values = table[:, 2:]
    rest = table[:, 1] < 0.5
    if not rest.any():
        raise InsufficientNonContactError("no non-contact frame available for default values")
    lo = values.min(axis=0)
    hi = values.max(axis=0)
    constant = np.flatnonzero(lo == hi)
    if constant.size:
        raise ConstantChannelError(int(constant[0]), float(lo[constant[0]]))
    return ChannelStats(lo, hi, values[rest].mean(axis=0))


def _check_stats(stats, n):
    if stats.n_channels != n:
        raise StatsMismatchError(f"stats describe {stats.n_channels} channels, data has {n}")


def normalize_values(values, stats):
    """Affine map of raw electrode values onto [-1, 1], clamped."""
    values = np.asarray(values, dtype=np.float64)
    _check_stats(stats, values.shape[-1])
    out = 2.0 * (values - stats.min) / stats.span - 1.0
    return np.clip(out, -1.0, 1.0)


def denormalize_values(values, stats):
    values = np.asarray(values, dtype=np.float64)
    _check_stats(stats, values.shape[-1])
    return (values + 1.0) * 0.5 * stats.span + stats.min


def normalize_frame(frame, stats):
    return SignalFrame(
        normalize_values(frame.electrodes, stats), frame.timestamp_index, frame.contact_flag
    )


def fit_drift(frames, stats=None, *, method="lstsq", max_iter=10_000, tol=1e-14):
    """Fit a per-electrode line ``v = slope * t + intercept`` to non-contact frames.

    ``method="gd"`` runs plain gradient descent on the mean squared residual
    (in a centred and scaled time coordinate, where the problem is perfectly
    conditioned); ``"lstsq"`` solves the normal equations directly.
    """
    table = _as_table(frames)
    rest = table[table[:, 1] < 0.5]
    if rest.shape[0] < 2 or np.unique(rest[:, 0]).size < 2:
        raise InsufficientNonContactError(
            "drift fitting needs at least two non-contact frames with distinct timestamps"
        )
    if stats is not None:
        _check_stats(stats, rest.shape[1] - 2)
    t = rest[:, 0]
    v = rest[:, 2:]
    if method == "lstsq":
        A = np.column_stack([t, np.ones_like(t)])
        coef, *_ = np.linalg.lstsq(A, v, rcond=None)
        return DriftModel(coef[0], coef[1], rest.shape[0])
    if method != "gd":
        raise ValueError(f"unknown drift fitting method {method!r}")

    t_mean = t.mean()
    t_scale = t.std()
    tau = (t - t_mean) / t_scale
    a = np.zeros(v.shape[1])
    b = np.zeros(v.shape[1]) if stats is None else stats.default_value.copy()
    lr = 0.25
    for _ in range(max_iter):
        resid = np.multiply.outer(tau, a) + b - v
        grad_a = 2.0 * (tau[:, None] * resid).mean(axis=0)
        grad_b = 2.0 * resid.mean(axis=0)
        a -= lr * grad_a
        b -= lr * grad_b
        if max(np.abs(grad_a).max(), np.abs(grad_b).max()) <= tol * (1.0 + np.abs(v).max()):
            break
    slope = a / t_scale
    return DriftModel(slope, b - slope * t_mean, rest.shape[0])


def correct_drift_values(values, timestamps, model, stats):
    values = np.asarray(values, dtype=np.float64)
    _check_stats(stats, values.shape[-1])
    if model.slope.shape[0] != values.shape[-1]:
        raise ShapeMismatchError("drift model and frame disagree on channel count")
    return values - model.predict(timestamps) + stats.default_value


def correct_drift(frame, model, stats):
    corrected = correct_drift_values(frame.electrodes, frame.timestamp_index, model, stats)
    return SignalFrame(corrected, frame.timestamp_index, frame.contact_flag)


def balance_dataset(frames, keep_noncontact_fraction, seed=0):
    """Keep every contact frame and a seeded uniform subsample of the rest."""
    if not 0.0 <= keep_noncontact_fraction <= 1.0:
        raise ValueError("keep_noncontact_fraction must lie in [0, 1]")
    is_array = isinstance(frames, np.ndarray)
    items = frames if is_array else list(frames)
    contact = (
        items[:, 1] >= 0.5 if is_array else np.array([f.contact_flag for f in items], dtype=bool)
    )
    rest_idx = np.flatnonzero(~contact)
    n_keep = int(np.floor(keep_noncontact_fraction * rest_idx.size + 0.5))
    rng = np.random.default_rng(seed)
    kept_rest = rng.choice(rest_idx, size=n_keep, replace=False) if n_keep else []
    keep = contact.copy()
    keep[np.asarray(kept_rest, dtype=int)] = True
    if is_array:
        return items[keep]
    return [f for f, k in zip(items, keep) if k]


def infer_contact_flags(values, stats, tolerance=0.01):
    """Mark a frame as non-contact when every channel sits within
    ``tolerance * (max - min)`` of its default value."""
    values = electrodes_of(values)
    _check_stats(stats, values.shape[1])
    near = np.abs(values - stats.default_value) <= tolerance * stats.span
    return ~near.all(axis=1)


class DriftCorrector(TransformerMixin, BaseEstimator):
    """Linear detrending of electrode channels fitted on non-contact frames.

    Operates on frame tables ``[t, c, e00..e18]`` and returns tables.
    """

    def __init__(self, method="lstsq"):
        self.method = method

    def fit(self, X, y=None):
        X = check_frame_table(X)
        self.stats_ = compute_channel_stats(X)
        self.drift_ = fit_drift(X, self.stats_, method=self.method)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "drift_")
        X = check_frame_table(X, copy=True)
        X[:, 2:] = correct_drift_values(X[:, 2:], X[:, 0], self.drift_, self.stats_)
        return X


class SignalNormalizer(TransformerMixin, BaseEstimator):
    """Per-channel min/max scaling of electrode values onto [-1, 1].

    ``fit`` takes a frame table (non-contact frames supply the defaults);
    ``transform`` accepts a table or a bare ``(n, 19)`` array and returns
    normalized electrodes ``(n, 19)``.
    """

    def fit(self, X, y=None):
        X = check_frame_table(X)
        self.stats_ = compute_channel_stats(X)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "stats_")
        return normalize_values(electrodes_of(X), self.stats_)

    def inverse_transform(self, X):
        check_is_fitted(self, "stats_")
        return denormalize_values(electrodes_of(X), self.stats_)


def read_signal_csv(path):
    """Read a signal CSV into a frame table."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CorruptFileError(f"{path}: empty signal file") from None
        if [h.strip() for h in header] != CSV_HEADER:
            raise CorruptFileError(f"{path}: header must be {','.join(CSV_HEADER)}")
        rows = [[float(x) for x in row] for row in reader if row]
    table = np.array(rows, dtype=np.float64).reshape(-1, N_ELECTRODES + 2)
    return table


def write_signal_csv(path, table):
    table = check_frame_table(table)
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for row in table:
            writer.writerow([str(int(round(row[0]))), str(int(row[1] >= 0.5))] + [repr(float(v)) for v in row[2:]])


def save_channel_stats(path, stats, drift=None):
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        cols = ["channel", "min", "max", "default"] + (["slope", "intercept"] if drift else [])
        writer.writerow(cols)
        for i in range(stats.n_channels):
            row = [i] + [repr(float(a[i])) for a in (stats.min, stats.max, stats.default_value)]
            if drift:
                row += [repr(float(drift.slope[i])), repr(float(drift.intercept[i]))]
            writer.writerow(row)


def load_channel_stats(path):
    with Path(path).open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    stats = ChannelStats(
        [float(r["min"]) for r in rows],
        [float(r["max"]) for r in rows],
        [float(r["default"]) for r in rows],
    )
    drift = None
    if rows and "slope" in rows[0]:
        drift = DriftModel(
            np.array([float(r["slope"]) for r in rows]),
            np.array([float(r["intercept"]) for r in rows]),
        )
    return stats, drift
