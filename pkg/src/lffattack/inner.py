"""Baseline iterative sign-gradient attackers: I-FGSM, MI-FGSM, EMI and Admix.

Each attacker is a pure step proposer: given a state and the current point it
returns the raw direction ``g_t`` (before sign) and the next state. The split
between the *gradient estimate* (plain, EMI-sampled, or Admix-mixed) and the
*momentum accumulation* is explicit because the LFF engine consumes the
former and may replace the latter.
"""

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError, ZeroGradientError
from .numeric import as_vector, l1_normalize, signed_step
from .trace import AttackTrace

KINDS = ("ifgsm", "mifgsm", "emi", "admix")


@dataclass(frozen=True)
class InnerSpec:
    """Which baseline attacker to run, with its hyperparameters.

    ``mu`` is ignored by ``ifgsm``. ``samples``/``radius`` are EMI's gradient
    collection count and sampling radius; ``scales``/``mixes``/``ratio`` are
    Admix's scale copies, mixture partners and mixing ratio.
    """

    kind: str = "mifgsm"
    mu: float = 1.0
    samples: int = 11
    radius: float = 7 / 255
    scales: int = 5
    mixes: int = 3
    ratio: float = 0.2

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown inner attacker {self.kind!r}; expected one of {KINDS}")
        if not (math.isfinite(self.mu) and self.mu >= 0):
            raise ConfigError("mu must be finite and >= 0")
        if self.samples < 1:
            raise ConfigError("emi samples must be >= 1")
        if not (math.isfinite(self.radius) and self.radius >= 0):
            raise ConfigError("emi radius must be finite and >= 0")
        if self.scales < 1 or self.mixes < 0:
            raise ConfigError("admix needs scales >= 1 and mixes >= 0")
        if not 0 <= self.ratio < 1:
            raise ConfigError("admix ratio must lie in [0, 1)")

    @property
    def momentum_decay(self):
        """``mu`` for the momentum-based attackers, ``None`` for I-FGSM."""
        return None if self.kind == "ifgsm" else self.mu

    @property
    def calls_per_step(self):
        if self.kind == "emi":
            return self.samples
        if self.kind == "admix":
            return self.scales * max(self.mixes, 1)
        return 1


@dataclass(frozen=True, eq=False)
class InnerAttackerState:
    """Value-type state threaded through :func:`propose_step`.

    ``step`` is the time index of the point about to be proposed from,
    counted from the clean example; Admix keys its RNG on ``(seed, step)`` so
    any rollout that revisits the same time index draws the same partners.
    ``pool`` holds Admix mixing partners (the current example excluded).
    """

    spec: InnerSpec
    momentum: np.ndarray
    prev_mean_grad: np.ndarray
    seed: tuple = (0,)
    step: int = 0
    pool: np.ndarray = None

    def fresh(self):
        """Same estimator state and clock, momentum reset to zero."""
        return replace(self, momentum=np.zeros_like(self.momentum))


def init_state(spec, dim, seed=0, pool=None):
    seed = tuple(int(s) for s in np.atleast_1d(seed))
    if pool is not None:
        pool = np.asarray(pool, dtype=np.float64)
        if pool.ndim != 2 or pool.shape[1] != dim:
            raise ValueError("admix pool must be an (m, N) array")
    zeros = np.zeros(dim)
    return InnerAttackerState(spec, zeros, zeros, seed, 0, pool)


@dataclass(frozen=True, eq=False)
class StepProposal:
    raw_direction: np.ndarray
    loss_value: float
    gradient: np.ndarray
    normalized_gradient: np.ndarray
    calls: int


def _emi_points(state, x):
    spec = state.spec
    if spec.samples == 1:
        return [x]
    peak = np.abs(state.prev_mean_grad).max()
    direction = state.prev_mean_grad / peak if peak > 0 else state.prev_mean_grad
    return [x + c * direction for c in np.linspace(-spec.radius, spec.radius, spec.samples)]


def _admix_points(state, x):
    spec = state.spec
    partners = [None]
    if spec.mixes > 0 and state.pool is not None and len(state.pool) > 0:
        rng = np.random.default_rng([*state.seed, state.step])
        take = min(spec.mixes, len(state.pool))
        partners = [state.pool[j] for j in rng.choice(len(state.pool), take, replace=False)]
    points = []
    for i in range(spec.scales):
        factor = 1.0 / 2**i
        for p in partners:
            mixed = x if p is None else x + spec.ratio * p
            points.append(mixed * factor)
    return points


def estimate_gradient(state, oracle, x, mode):
    """Gradient estimate at ``x`` before any momentum.

    Returns ``(gradient, loss, prev_mean_grad, calls)``; ``prev_mean_grad`` is
    the EMI lookahead carried to the next step (unchanged for other kinds).
    """
    kind = state.spec.kind
    if kind in ("ifgsm", "mifgsm"):
        loss, grad = oracle.loss_and_grad(x, mode)
        return grad, loss, state.prev_mean_grad, 1
    points = _emi_points(state, x) if kind == "emi" else _admix_points(state, x)
    total_loss = 0.0
    grad = np.zeros_like(x)
    for p in points:
        value, g = oracle.loss_and_grad(p, mode)
        total_loss += value
        grad += g
    grad /= len(points)
    if not grad.any():
        raise ZeroGradientError(f"{kind} gradient estimate is zero at every sample point")
    prev = l1_normalize(grad) if kind == "emi" else state.prev_mean_grad
    return grad, total_loss / len(points), prev, len(points)


def propose_step(state, oracle, x_current, mode):
    """One step of the inner attacker: ``(StepProposal, next_state)``.

    I-FGSM proposes the gradient itself; the momentum attackers accumulate
    ``M = mu * M + grad / ||grad||_1`` and propose ``M``.
    """
    x_current = as_vector(x_current)
    grad, loss, prev, calls = estimate_gradient(state, oracle, x_current, mode)
    normalized = l1_normalize(grad)
    if state.spec.kind == "ifgsm":
        momentum, raw = state.momentum, grad
    else:
        momentum = state.spec.mu * state.momentum + normalized
        raw = momentum
    proposal = StepProposal(raw, float(loss), grad, normalized, calls)
    return proposal, replace(state, momentum=momentum, prev_mean_grad=prev, step=state.step + 1)


def rollout(state, oracle, x_start, x_clean, budget, steps, mode):
    """Run the inner attacker for ``steps`` signed, projected steps from ``x_start``."""
    if steps < 1:
        raise ValueError("rollout needs steps >= 1")
    x_clean = as_vector(x_clean)
    lo, hi = budget.bounds(x_clean)
    x = as_vector(x_start)
    trace = AttackTrace(x_clean, budget.alpha, points=[x])
    for _ in range(steps):
        proposal, state = propose_step(state, oracle, x, mode)
        x = signed_step(x, proposal.raw_direction, budget.alpha, lo, hi)
        trace.record(proposal.raw_direction, x, proposal.loss_value, proposal.calls,
                     momentum=None if state.spec.kind == "ifgsm" else state.momentum)
    trace.final_state = state
    return trace
