"""Run configuration: ``key=value`` files with per-command defaults and the desk preset."""

from dataclasses import dataclass, field
from pathlib import Path

from .exceptions import ConfigError

_TRAIN_COMMON = {
    "data": "",
    "max_epochs": 300,
    "batch_size": 32,
    "early_stop_patience": 10,
    "spec": "",
}

DEFAULTS = {
    "gen-dataset": {
        "n_trajectories": 860,
        "biotac_vertices": 4246,
        "digit_vertices": 6103,
        "test_fraction": 0.15,
        "val_fraction": 0.15,
        "rest_frames": 5,
        "falloff_radius_mm": 3.0,
        "contact_margin_mm": 3.0,
    },
    "train-svb": {**_TRAIN_COMMON, "keep_noncontact_fraction": 0.25},
    "train-mvb": {**_TRAIN_COMMON, "rest_copies": 1},
    "train-mvd": {**_TRAIN_COMMON, "rest_copies": 1},
    "train-s2mpn": {**_TRAIN_COMMON, "keep_noncontact_fraction": 0.25},
    "train-m2mpn": {**_TRAIN_COMMON, "rest_copies": 1},
    "convert": {"input": "", "bundle": "", "drift": "auto"},
    "eval": {"data": "", "bundle": "", "render_frames": "all"},
    "render": {"input": "", "topology": "", "photometric": "", "background": ""},
}

# Shrunk meshes, dataset and epoch budgets so the whole chain runs in minutes.
DESK_PRESET = {
    "gen-dataset": {"n_trajectories": 50, "biotac_vertices": 512, "digit_vertices": 768},
    "train-svb": {"max_epochs": 60},
    "train-mvb": {"max_epochs": 25},
    "train-mvd": {"max_epochs": 25},
    "train-s2mpn": {"max_epochs": 40},
    "train-m2mpn": {"max_epochs": 25},
}

DRIFT_MODES = ("auto", "bundle", "refit", "none")


@dataclass
class RunConfig:
    command: str
    seed: int = 0
    desk_scale: bool = False
    values: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.values[key]

    def get(self, key, default=None):
        return self.values.get(key, default)

    def to_text(self):
        lines = [f"command={self.command}", f"seed={self.seed}",
                 f"desk_scale={'true' if self.desk_scale else 'false'}"]
        lines += [f"{k}={self.values[k]}" for k in sorted(self.values)]
        return "\n".join(lines) + "\n"


def parse_config_text(text, source="<config>"):
    """``key=value`` pairs; blank lines and ``#`` comments are ignored."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key=value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key")
        if key in out:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def _coerce(key, value, default):
    if isinstance(default, bool):
        low = str(value).lower()
        if low not in ("true", "false", "1", "0"):
            raise ConfigError(f"{key}: expected a boolean, got {value!r}")
        return low in ("true", "1")
    try:
        if isinstance(default, int):
            return int(value)
        if isinstance(default, float):
            return float(value)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {value!r}") from None
    return str(value)


def _check(command, v):
    if command == "gen-dataset":
        if v["n_trajectories"] < 1:
            raise ConfigError("n_trajectories must be >= 1")
        if min(v["biotac_vertices"], v["digit_vertices"]) < 64:
            raise ConfigError("meshes need at least 64 vertices for a 4-level hierarchy")
        if not (0 <= v["test_fraction"] < 1 and 0 <= v["val_fraction"] < 1):
            raise ConfigError("split fractions must lie in [0, 1)")
        if v["rest_frames"] < 2:
            raise ConfigError("rest_frames must be >= 2 for drift fitting")
    if command.startswith("train-"):
        if v["max_epochs"] < 1 or v["batch_size"] < 1 or v["early_stop_patience"] < 0:
            raise ConfigError("max_epochs and batch_size must be >= 1, patience >= 0")
        if "keep_noncontact_fraction" in v and not 0 <= v["keep_noncontact_fraction"] <= 1:
            raise ConfigError("keep_noncontact_fraction must lie in [0, 1]")
        if v.get("rest_copies", 0) < 0:
            raise ConfigError("rest_copies must be >= 0")
    if command == "convert" and v["drift"] not in DRIFT_MODES:
        raise ConfigError(f"drift must be one of {', '.join(DRIFT_MODES)}")
    if command == "eval" and v["render_frames"] != "all":
        try:
            if int(v["render_frames"]) < 0:
                raise ValueError
        except ValueError:
            raise ConfigError("render_frames must be 'all' or a non-negative integer") from None


def resolve_config(command, path=None, seed=None, desk_scale=False, overrides=None):
    """Defaults, then the desk preset, then the file, then explicit overrides.

    ``seed`` and ``desk_scale`` may also be set in the file; flags win.
    """
    if command not in DEFAULTS:
        raise ConfigError(f"unknown command {command!r}")
    defaults = DEFAULTS[command]
    raw = {}
    if path:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        raw = parse_config_text(text, str(path))
    file_seed = raw.pop("seed", None)
    file_desk = raw.pop("desk_scale", None)
    raw.pop("command", None)
    unknown = sorted(set(raw) - set(defaults))
    if unknown:
        raise ConfigError(f"unknown key(s) for {command}: {', '.join(unknown)}")
    desk = desk_scale or (file_desk is not None and _coerce("desk_scale", file_desk, False))
    values = dict(defaults)
    if desk:
        values.update(DESK_PRESET.get(command, {}))
    for k, v in raw.items():
        values[k] = _coerce(k, v, defaults[k])
    for k, v in (overrides or {}).items():
        if v is None:
            continue
        if k not in defaults:
            raise ConfigError(f"unknown key for {command}: {k}")
        values[k] = _coerce(k, v, defaults[k])
    _check(command, values)
    if seed is None:
        seed = _coerce("seed", file_seed, 0) if file_seed is not None else 0
    if seed < 0 or seed >= 2**64:
        raise ConfigError("seed must be an unsigned 64-bit integer")
    return RunConfig(command, int(seed), bool(desk), values)
