"""Losses (MSE, binary cross-entropy) and the Nadam optimizer."""

from dataclasses import dataclass, field

import numpy as np

from .errors import LabelOutOfRange, ShapeMismatch

BCE_CLAMP = 1e-7  # predictions are clamped to [eps, 1-eps] before the log


def mse(pred, target):
    """Mean over all elements of the squared difference."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ShapeMismatch(f"{pred.shape} vs {target.shape}")
    return float(np.mean((pred - target) ** 2))


def mse_grad(pred, target):
    """d mse / d pred = 2 (pred - target) / count."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ShapeMismatch(f"{pred.shape} vs {target.shape}")
    return 2.0 * (pred - target) / pred.size


def _check_labels(label, shape):
    label = np.broadcast_to(np.asarray(label, dtype=np.float64), shape)
    if not np.all((label == 0.0) | (label == 1.0)):
        raise LabelOutOfRange("labels must be exactly 0 or 1")
    return label


def bce(pred, label):
    """Binary cross-entropy averaged over the batch, with clamped preds."""
    pred = np.atleast_1d(np.asarray(pred, dtype=np.float64))
    label = _check_labels(label, pred.shape)
    p = np.clip(pred, BCE_CLAMP, 1.0 - BCE_CLAMP)
    return float(np.mean(-(label * np.log(p) + (1.0 - label) * np.log1p(-p))))


def bce_grad(pred, label):
    """d bce / d pred; zero where the clamp is active."""
    pred = np.atleast_1d(np.asarray(pred, dtype=np.float64))
    label = _check_labels(label, pred.shape)
    p = np.clip(pred, BCE_CLAMP, 1.0 - BCE_CLAMP)
    inside = (pred > BCE_CLAMP) & (pred < 1.0 - BCE_CLAMP)
    grad = np.where(inside, (p - label) / (p * (1.0 - p)), 0.0)
    return grad / pred.size


@dataclass
class NadamState:
    """Step count plus first/second-moment accumulators per parameter."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def nadam_step(state, params, grads):
    """One Nesterov-Adam update, in place on ``params``.

    With t incremented first:
        m <- b1 m + (1-b1) g          v <- b2 v + (1-b2) g^2
        m_hat = m / (1 - b1^(t+1))    g_hat = g / (1 - b1^t)
        theta -= lr (b1 m_hat + (1-b1) g_hat) / (sqrt(v / (1 - b2^t)) + eps)
    """
    state.t += 1
    t = state.t
    b1, b2 = state.beta1, state.beta2
    m_corr = 1.0 - b1 ** (t + 1)
    g_corr = 1.0 - b1**t
    v_corr = 1.0 - b2**t
    for key, theta in params.items():
        g = grads[key]
        if g.shape != theta.shape:
            raise ShapeMismatch(f"gradient shape mismatch for {key!r}")
        if key not in state.m:
            state.m[key] = np.zeros_like(theta)
            state.v[key] = np.zeros_like(theta)
        m = state.m[key]
        v = state.v[key]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        m_hat = m / m_corr
        g_hat = g / g_corr
        theta -= state.lr * (b1 * m_hat + (1.0 - b1) * g_hat) / (
            np.sqrt(v / v_corr) + state.eps
        )
    return params, state


def clip_global_norm(grads, max_norm):
    """Scale all gradients so their joint L2 norm is at most ``max_norm``."""
    if max_norm <= 0:
        return grads
    total = np.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if total > max_norm:
        factor = max_norm / total
        for g in grads.values():
            g *= factor
    return grads
