"""Flat-vector arithmetic used by every attacker: sign, norms, L1 normalization
and projection onto the L-infinity ball intersected with the data box.

All routines take and return 1-D float64 arrays and never mutate their inputs.
"""

from dataclasses import dataclass

import numpy as np

from . import _backend
from .errors import ConfigError, NonFiniteError, ZeroGradientError


def as_vector(v):
    """Return ``v`` as a contiguous 1-D float64 array (no copy when already one)."""
    arr = np.ascontiguousarray(v, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError(f"expected a flat vector, got shape {arr.shape}")
    return arr


def check_finite(v, what="vector"):
    if not _backend.kernels.all_finite(v):
        raise NonFiniteError(f"{what} contains NaN or Inf")
    return v


def sign(v):
    """Entrywise sign with ``sign(0) == 0``.

    >>> sign([0.5, -2.0, 0.0])
    array([ 1., -1.,  0.])
    """
    v = check_finite(as_vector(v))
    return np.sign(v)


def lp_norm(v, p=2):
    """L1, L2 or L-infinity norm; ``p`` is 1, 2, or ``inf`` (also ``"inf"``)."""
    v = check_finite(as_vector(v))
    if p == 1:
        return float(np.abs(v).sum())
    if p == 2:
        return float(np.sqrt(np.dot(v, v)))
    if p in (np.inf, "inf"):
        return float(np.abs(v).max()) if v.size else 0.0
    raise ValueError(f"unsupported norm p={p!r}")


def l1_normalize(v):
    """Scale ``v`` to unit L1 norm.

    Raises
    ------
    ZeroGradientError
        If ``v`` is identically zero. A flat oracle has to be handled by the
        caller; silently returning zeros would stall an attack without notice.
    """
    v = check_finite(as_vector(v))
    s = np.abs(v).sum()
    if s == 0.0:
        raise ZeroGradientError("cannot L1-normalize an all-zero vector")
    return v / s


@dataclass(frozen=True)
class Budget:
    """Perturbation budget: total L-infinity radius, per-step rate and data box."""

    epsilon: float
    alpha: float
    box_lo: float = 0.0
    box_hi: float = 1.0

    def __post_init__(self):
        for name in ("epsilon", "alpha", "box_lo", "box_hi"):
            if not np.isfinite(getattr(self, name)):
                raise ConfigError(f"budget.{name} must be finite")
        if self.epsilon <= 0 or self.alpha <= 0:
            raise ConfigError("budget epsilon and alpha must be > 0")
        if self.alpha > self.epsilon:
            raise ConfigError(f"alpha={self.alpha} exceeds epsilon={self.epsilon}")
        if not self.box_lo < self.box_hi:
            raise ConfigError("box_lo must be < box_hi")

    def bounds(self, x_clean):
        """Per-coordinate feasible interval ``[lo, hi]`` around ``x_clean``."""
        lo = np.maximum(x_clean - self.epsilon, self.box_lo)
        hi = np.minimum(x_clean + self.epsilon, self.box_hi)
        return lo, hi


def project(x_adv, x_clean, budget):
    """Clamp ``x_adv`` into ``[x_clean - eps, x_clean + eps] ∩ [box_lo, box_hi]``.

    Entries already feasible are returned unchanged, so the map is idempotent.
    """
    x_adv = as_vector(x_adv)
    x_clean = as_vector(x_clean)
    if x_adv.shape != x_clean.shape:
        raise ValueError("x_adv and x_clean differ in length")
    lo, hi = budget.bounds(x_clean)
    return np.minimum(np.maximum(x_adv, lo), hi)


def signed_step(x, direction, alpha, lo, hi):
    """``clip(x + alpha * sign(direction), lo, hi)`` in one kernel call.

    ``lo``/``hi`` come from :meth:`Budget.bounds`; the result is bitwise equal
    to ``project(x + alpha * sign(direction), ...)``.
    """
    check_finite(direction, "update direction")
    return _backend.kernels.signed_step(x, direction, alpha, lo, hi)


def within_budget(x_adv, x_clean, budget, slack=1e-12):
    """True when ``x_adv`` lies in the epsilon ball and the box, up to ``slack``."""
    x_adv = as_vector(x_adv)
    x_clean = as_vector(x_clean)
    if not np.isfinite(x_adv).all():
        return False
    in_ball = np.abs(x_adv - x_clean).max(initial=0.0) <= budget.epsilon + slack
    in_box = x_adv.min(initial=budget.box_lo) >= budget.box_lo - slack and (
        x_adv.max(initial=budget.box_hi) <= budget.box_hi + slack
    )
    return bool(in_ball and in_box)
