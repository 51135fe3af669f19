"""Named parameter tensors with gradient and optimizer-moment buffers."""

import hashlib

import numpy as np


class ParamStore:
    """Ordered mapping ``name -> array`` plus parallel gradient buffers.

    Gradients start out as ``None`` (never computed); ``zero_grad`` fills
    them with zeros and layer backward passes accumulate into them.
    """

    def __init__(self, dtype=np.float32):
        self.dtype = np.dtype(dtype)
        self.values = {}
        self.grads = {}
        self.m = {}
        self.v = {}
        self.step_count = 0

    def add(self, name, value):
        if name in self.values:
            raise KeyError(f"duplicate parameter name {name!r}")
        value = np.array(value, dtype=self.dtype)
        self.values[name] = value
        self.grads[name] = None
        return value

    def __getitem__(self, name):
        return self.values[name]

    def __contains__(self, name):
        return name in self.values

    def __iter__(self):
        return iter(self.values)

    def __len__(self):
        return len(self.values)

    def names(self):
        return list(self.values)

    def zero_grad(self):
        for k, v in self.values.items():
            self.grads[k] = np.zeros_like(v)

    def accumulate(self, name, grad):
        g = self.grads[name]
        if g is None:
            self.grads[name] = np.array(grad, dtype=self.dtype).reshape(self.values[name].shape)
        else:
            g += grad

    def n_parameters(self):
        return sum(v.size for v in self.values.values())

    def shapes(self):
        return {k: v.shape for k, v in self.values.items()}

    def state(self):
        """Copy of the parameter values."""
        return {k: v.copy() for k, v in self.values.items()}

    def load_state(self, state, strict=True):
        if strict and set(state) != set(self.values):
            missing = set(self.values) ^ set(state)
            raise KeyError(f"parameter sets differ: {sorted(missing)[:5]}")
        for k, v in state.items():
            if k not in self.values:
                continue
            if v.shape != self.values[k].shape:
                raise ValueError(f"shape mismatch for {k}: {v.shape} vs {self.values[k].shape}")
            self.values[k][...] = v

    def astype(self, dtype):
        out = ParamStore(dtype)
        for k, v in self.values.items():
            out.add(k, v)
        return out

    def digest(self):
        """SHA-256 over names and raw bytes, for freeze checks."""
        h = hashlib.sha256()
        for k in sorted(self.values):
            h.update(k.encode())
            h.update(np.ascontiguousarray(self.values[k]).tobytes())
        return h.hexdigest()


def glorot_uniform(rng, shape, fan_in, fan_out, dtype=np.float32):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)
