"""Loss functions; each returns the value and its gradients."""

import numpy as np

from ..exceptions import ShapeMismatchError
from .layers import LOG_VAR_CLAMP


def mse(target, pred):
    """Mean over every element; returns ``(value, d value / d pred)``."""
    target = np.asarray(target)
    pred = np.asarray(pred)
    if target.shape != pred.shape:
        raise ShapeMismatchError(f"shapes differ: {target.shape} vs {pred.shape}")
    diff = pred - target
    return float(np.mean(diff * diff, dtype=np.float64)), (2.0 / diff.size) * diff


def kl_gaussian(mu, log_var):
    """KL(N(mu, exp(log_var)) || N(0, I)) summed over latent dims, averaged over the batch.

    Returns ``(value, d/d mu, d/d log_var)``.
    """
    mu = np.atleast_2d(mu)
    log_var = np.atleast_2d(log_var)
    lv = np.minimum(log_var, LOG_VAR_CLAMP)
    var = np.exp(lv)
    B = mu.shape[0]
    value = -0.5 * np.sum(1.0 + lv - mu * mu - var, dtype=np.float64) / B
    d_mu = mu / B
    d_lv = 0.5 * (var - 1.0) / B * (log_var < LOG_VAR_CLAMP)
    return float(value), d_mu, d_lv


def vae_loss(x, x_hat, mu, log_var, beta):
    """``MSE(x - x_hat) + beta * KL``; returns ``(value, d x_hat, d mu, d log_var)``."""
    rec, d_xhat = mse(x, x_hat)
    kl, d_mu, d_lv = kl_gaussian(mu, log_var)
    return rec + beta * kl, d_xhat, beta * d_mu, beta * d_lv


def projection_loss(z_pred, z_target):
    """Mean squared error between latent vectors; returns ``(value, d z_pred)``."""
    return mse(z_target, z_pred)
