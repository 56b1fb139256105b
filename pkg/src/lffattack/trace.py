"""Per-example attack traces and their line-oriented audit log."""

import hashlib
from dataclasses import dataclass, field

import numpy as np


def digest(arr, n=16):
    """Short SHA-256 of an array's float64 little-endian bytes."""
    data = np.ascontiguousarray(arr, dtype="<f8").tobytes()
    return hashlib.sha256(data).hexdigest()[:n]


@dataclass
class AttackTrace:
    """Everything one attack run did to one example.

    ``directions[t]`` is the vector whose sign produced step ``t`` (the inner
    raw direction, ``g^B_t``, or the outer momentum ``M^B_t``), ``points[t]``
    the iterate before step ``t`` (``points[-1]`` is the adversarial example).
    """

    x_clean: np.ndarray
    alpha: float
    points: list = field(default_factory=list)
    directions: list = field(default_factory=list)
    losses: list = field(default_factory=list)
    calls: list = field(default_factory=list)
    combined: list = field(default_factory=list)
    momenta: list = field(default_factory=list)
    final_state: object = None

    def __post_init__(self):
        if not self.points:
            self.points = [np.array(self.x_clean, dtype=np.float64)]

    def record(self, direction, x_next, loss, calls, combined=None, momentum=None):
        self.directions.append(direction)
        self.points.append(x_next)
        self.losses.append(float(loss))
        self.calls.append(int(calls))
        if combined is not None:
            self.combined.append(combined)
        if momentum is not None:
            self.momenta.append(momentum)

    @property
    def steps(self):
        return len(self.directions)

    @property
    def deltas(self):
        """Signed per-step perturbations ``alpha * sign(direction)`` (pre-projection)."""
        if not self.directions:
            return np.zeros((0, len(self.x_clean)))
        return self.alpha * np.sign(np.array(self.directions))

    @property
    def x_adv(self):
        return self.points[-1]

    @property
    def total_calls(self):
        return int(sum(self.calls))

    def digest(self):
        """Hash of the full trajectory, used for determinism checks."""
        return digest(np.concatenate([np.ravel(p) for p in self.points]))

    def audit_lines(self, example=None):
        """One record per step: example, t, delta hash, L-inf/L2 of delta, loss, oracle calls."""
        prefix = "" if example is None else f"{example} "
        lines = []
        for t, d in enumerate(self.deltas):
            lines.append(
                f"{prefix}{t + 1} {digest(d)} {float(np.abs(d).max(initial=0.0))!r} "
                f"{float(np.sqrt(d @ d))!r} {self.losses[t]!r} {self.calls[t]}"
            )
        return lines
