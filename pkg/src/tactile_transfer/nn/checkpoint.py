"""Binary tensor checkpoints (``ACRW``) with a trailing CRC32."""

import struct
import zlib
from pathlib import Path

import numpy as np

from ..exceptions import CorruptFileError

MAGIC = b"ACRW"
VERSION = 1


def write_checkpoint(path, tensors):
    """Write ``{name: array}`` as little-endian float32 tensors."""
    out = bytearray(MAGIC)
    out += struct.pack("<II", VERSION, len(tensors))
    for name, value in tensors.items():
        arr = np.ascontiguousarray(value, dtype="<f4")
        raw = name.encode("utf-8")
        out += struct.pack("<H", len(raw)) + raw
        out += struct.pack("<B", arr.ndim)
        out += struct.pack(f"<{arr.ndim}I", *arr.shape)
        out += arr.tobytes(order="C")
    out += struct.pack("<I", zlib.crc32(bytes(out)) & 0xFFFFFFFF)
    Path(path).write_bytes(bytes(out))


def read_checkpoint(path):
    data = Path(path).read_bytes()
    if len(data) < 16 or data[:4] != MAGIC:
        raise CorruptFileError(f"{path}: not a checkpoint file")
    (crc,) = struct.unpack_from("<I", data, len(data) - 4)
    if zlib.crc32(data[:-4]) & 0xFFFFFFFF != crc:
        raise CorruptFileError(f"{path}: CRC mismatch")
    version, count = struct.unpack_from("<II", data, 4)
    if version != VERSION:
        raise CorruptFileError(f"{path}: unsupported checkpoint version {version}")
    pos = 12
    tensors = {}
    try:
        for _ in range(count):
            (n,) = struct.unpack_from("<H", data, pos)
            pos += 2
            name = data[pos:pos + n].decode("utf-8")
            pos += n
            (rank,) = struct.unpack_from("<B", data, pos)
            pos += 1
            shape = struct.unpack_from(f"<{rank}I", data, pos)
            pos += 4 * rank
            size = int(np.prod(shape)) if rank else 1
            arr = np.frombuffer(data, dtype="<f4", count=size, offset=pos).reshape(shape)
            pos += 4 * size
            tensors[name] = arr.astype(np.float32)
    except (struct.error, ValueError) as exc:
        raise CorruptFileError(f"{path}: truncated checkpoint") from exc
    if pos != len(data) - 4:
        raise CorruptFileError(f"{path}: trailing bytes after last tensor")
    return tensors


def state_tensors(state, params):
    """Pack a TrainState plus optimizer moments for ``--resume-from``."""
    t = {f"last/{k}": v for k, v in state.last_params.items()}
    t.update({f"best/{k}": v for k, v in state.best_params.items()})
    t.update({f"adam_m/{k}": v for k, v in params.m.items()})
    t.update({f"adam_v/{k}": v for k, v in params.v.items()})
    t["counters"] = np.array(
        [state.epoch, state.best_epoch, state.bad_epochs, params.step_count, float(state.stopped_early)],
        dtype=np.float32,
    )
    t["best_val"] = np.array(state.best_val, dtype=np.float32)
    return t


def restore_state(tensors, params, history):
    from .training import TrainState

    epoch, best_epoch, bad, steps, stopped = (int(x) for x in tensors["counters"])
    state = TrainState(
        epoch=epoch,
        best_val=float(np.asarray(tensors["best_val"]).reshape(-1)[0]),
        best_epoch=best_epoch,
        bad_epochs=bad,
        best_params={k[5:]: v.astype(params.dtype) for k, v in tensors.items() if k.startswith("best/")},
        last_params={k[5:]: v.astype(params.dtype) for k, v in tensors.items() if k.startswith("last/")},
        history=list(history),
        stopped_early=bool(stopped),
    )
    params.m = {k[7:]: v.astype(params.dtype) for k, v in tensors.items() if k.startswith("adam_m/")}
    params.v = {k[7:]: v.astype(params.dtype) for k, v in tensors.items() if k.startswith("adam_v/")}
    params.step_count = steps
    return state
