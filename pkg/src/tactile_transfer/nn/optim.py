import numpy as np

from ..exceptions import UninitializedGradientError


def adam_step(params, lr, beta1=0.9, beta2=0.999, eps=1e-8, t=None):
    """One bias-corrected Adam update, in place.

    Moment buffers live on the ParamStore; ``t`` defaults to the store's
    own step counter + 1.
    """
    t = params.step_count + 1 if t is None else int(t)
    if t < 1:
        raise ValueError("Adam step index t must be >= 1")
    missing = [k for k, g in params.grads.items() if g is None]
    if missing:
        raise UninitializedGradientError(f"no gradient for {missing[:5]}")
    bc1 = 1.0 - beta1**t
    bc2 = 1.0 - beta2**t
    for name, value in params.values.items():
        g = params.grads[name]
        if name not in params.m:
            params.m[name] = np.zeros_like(value)
            params.v[name] = np.zeros_like(value)
        m = params.m[name]
        v = params.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        value -= (lr * (m / bc1) / (np.sqrt(v / bc2) + eps)).astype(value.dtype, copy=False)
    params.step_count = t
    return params
