"""Pure numpy implementations of the hot kernels.

These define the reference semantics; ``_kernels.pyx`` must agree with them to
within floating-point reassociation (and bitwise for ``signed_step``).
"""

import numpy as np


def _cross_entropy(z, label, negate):
    m = z.max()
    e = np.exp(z - m)
    s = e.sum()
    if z[label] == m:
        # log1p keeps full precision when the label dominates and the loss is tiny
        loss = np.log1p(np.delete(e, label).sum())
    else:
        loss = m + np.log(s) - z[label]
    dz = e / s
    dz[label] -= 1.0
    if negate:
        return -loss, -dz
    return loss, dz


def linear_loss_grad(W, b, x, label, negate):
    z = W @ x + b
    loss, dz = _cross_entropy(z, label, negate)
    return float(loss), W.T @ dz


def mlp_loss_grad(W1, b1, W2, b2, x, label, negate):
    a = np.tanh(W1 @ x + b1)
    z = W2 @ a + b2
    loss, dz = _cross_entropy(z, label, negate)
    da = W2.T @ dz
    return float(loss), W1.T @ (da * (1.0 - a * a))


def signed_step(x, d, alpha, lo, hi):
    return np.minimum(np.maximum(x + alpha * np.sign(d), lo), hi)


def all_finite(v):
    return bool(np.isfinite(v).all())
