"""Looking-from-the-future (LFF) meta-iterations over an inner attacker.

At outer step ``t`` the inner attacker is rolled ``Q`` steps into the future
from the current point. The L1-normalized gradient estimates met along that
rollout, ``G_0 .. G_{Q-1}``, are combined with penalty coefficients
``beta^1 .. beta^Q`` and the outer step is ``alpha * sign`` of the result
(optionally through an outer momentum, MLFF). Multi-order refinement
(LFF^N / MLFF^N) uses the order-(N-1) refined sequence as the rollout.

Momentum placement
------------------
There is exactly one momentum on the outer trajectory. MLFF configures it
explicitly (``outer_momentum``); plain LFF over a momentum-based inner
attacker inherits the inner decay ``mu``. Rollouts always start with zero
inner momentum but carry the estimator state (EMI lookahead, Admix clock),
so with ``Q = 1`` every wrapper reproduces its inner attacker's step.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ZeroDirectionError, ZeroGradientError
from .inner import propose_step
from .numeric import as_vector, l1_normalize, lp_norm, signed_step
from .trace import AttackTrace

MAX_ORDER = 4


@dataclass(frozen=True)
class LffConfig:
    """LFF hyperparameters.

    ``beta`` is one future penalty for every order or a tuple with one entry
    per order; ``outer_momentum`` (one decay per order) turns LFF into MLFF.
    """

    q: int = 4
    beta: object = 1.0
    order: int = 1
    outer_momentum: tuple = None
    iterations: int = 16
    norm_p: int = 1

    def __post_init__(self):
        if self.q < 1:
            raise ConfigError("Q must be >= 1")
        if self.order < 1:
            raise ConfigError("order must be >= 1")
        if self.order > MAX_ORDER:
            raise ConfigError(
                f"order {self.order} exceeds the cost guard of {MAX_ORDER} "
                f"(Q^order oracle calls per outer step)"
            )
        if self.iterations < 0:
            raise ConfigError("iterations must be >= 0")
        betas = self.betas
        if any(not np.isfinite(b) or b <= 0 for b in betas):
            raise ConfigError("beta must be finite and > 0")
        if self.outer_momentum is not None:
            etas = tuple(float(e) for e in np.atleast_1d(self.outer_momentum))
            if len(etas) != self.order:
                raise ConfigError(
                    f"outer_momentum has {len(etas)} decays but order is {self.order}"
                )
            if any(not np.isfinite(e) or e < 0 for e in etas):
                raise ConfigError("outer momentum decays must be finite and >= 0")
            object.__setattr__(self, "outer_momentum", etas)

    @property
    def betas(self):
        b = tuple(float(v) for v in np.atleast_1d(self.beta))
        if len(b) == 1:
            return b * self.order
        if len(b) != self.order:
            raise ConfigError(f"beta has {len(b)} entries but order is {self.order}")
        return b

    @property
    def mlff(self):
        return self.outer_momentum is not None

    def coefficients(self, level=1):
        beta = self.betas[level - 1]
        return tuple(beta ** (i + 1) for i in range(self.q))


@dataclass(eq=False)
class FutureGradients:
    """What one Q-step rollout saw.

    ``grads[i]`` is the unit-L1 gradient estimate at the i-th rollout point,
    ``coeffs[i] = beta^(i+1)``, ``momentum_norms[i]`` the L1 norm of the
    direction taken there. ``next_state`` is the inner state after the first
    proposal (at the rollout origin), which the outer loop carries forward.
    """

    grads: list
    coeffs: tuple
    momentum_norms: list
    endpoint: np.ndarray
    calls: int
    loss: float
    next_state: object


def combine(grads, coeffs):
    """Coefficient-weighted sum ``<C', G>``, accumulated in index order."""
    out = np.zeros_like(grads[0])
    for c, g in zip(coeffs, grads):
        out += c * g
    return out


def _nonzero(direction):
    if not direction.any():
        raise ZeroDirectionError("combined future direction cancelled in every coordinate")
    return direction


def lff_step(fg, alpha):
    """``alpha * sign(<C', G>)`` for a collected rollout."""
    if not fg.grads:
        raise ValueError("no future gradients collected")
    return alpha * np.sign(_nonzero(combine(fg.grads, fg.coeffs)))


class _Roller:
    """Recursive sequence generator shared by LFF and LFF^N.

    ``direction(level, ...)`` returns the vector whose sign is the order-
    ``level`` sequence's step at ``x``; level 0 is the inner attacker.
    """

    def __init__(self, oracle, cfg, mode, alpha, lo, hi):
        self.oracle = oracle
        self.cfg = cfg
        self.mode = mode
        self.alpha = alpha
        self.lo = lo
        self.hi = hi

    def collect(self, level, state, x_base):
        """Roll the order-(level-1) sequence Q steps from ``x_base``."""
        cfg = self.cfg
        sub = level - 1
        st = state.fresh()
        eta = cfg.outer_momentum[sub - 1] if (cfg.mlff and sub >= 1) else None
        mom = np.zeros_like(x_base) if eta is not None else None
        grads, norms = [], []
        calls = 0
        loss = next_state = None
        x = x_base
        for q in range(cfg.q):
            d, G, st_next, mom, c, value = self.direction(sub, st, mom, eta, x)
            if q == 0:
                next_state, loss = st_next, value
            grads.append(G)
            norms.append(float(np.abs(d).sum()))
            calls += c
            x = signed_step(x, d, self.alpha, self.lo, self.hi)
            st = st_next
        return FutureGradients(grads, cfg.coefficients(level), norms, x, calls, loss, next_state)

    def direction(self, level, state, mom, eta, x):
        """``(d, G_x, state_after_x, momentum, calls, loss)`` for one step at ``x``."""
        if level == 0:
            p, st = propose_step(state, self.oracle, x, self.mode)
            return p.raw_direction, p.normalized_gradient, st, mom, p.calls, p.loss_value
        fg = self.collect(level, state, x)
        g = _nonzero(combine(fg.grads, fg.coeffs))
        if eta is not None:
            mom = eta * mom + l1_normalize(g)
            g = mom
        return g, fg.grads[0], fg.next_state, mom, fg.calls, fg.loss


def _bounds(x_clean, budget):
    x_clean = as_vector(x_clean)
    lo, hi = budget.bounds(x_clean)
    return x_clean, lo, hi


def collect_future(inner_state, oracle, x_base, x_clean, budget, cfg, mode):
    """Fresh-momentum Q-step inner rollout from ``x_base``; no outer state is touched."""
    x_clean, lo, hi = _bounds(x_clean, budget)
    roller = _Roller(oracle, cfg, mode, budget.alpha, lo, hi)
    return roller.collect(1, inner_state, as_vector(x_base))


def _outer_decay(inner_state, cfg):
    if cfg.mlff:
        return cfg.outer_momentum[-1]
    return inner_state.spec.momentum_decay


def _outer_loop(collect, inner_state, x_clean, budget, cfg):
    x_clean, lo, hi = _bounds(x_clean, budget)
    decay = _outer_decay(inner_state, cfg)
    trace = AttackTrace(x_clean, budget.alpha)
    x = x_clean
    state = inner_state
    momentum = np.zeros_like(x)
    for _ in range(cfg.iterations):
        fg = collect(state, x)
        g = _nonzero(combine(fg.grads, fg.coeffs))
        if decay is None:
            d = g
        else:
            momentum = decay * momentum + l1_normalize(g)
            d = momentum
        x = signed_step(x, d, budget.alpha, lo, hi)
        trace.record(d, x, fg.loss, fg.calls, combined=g,
                     momentum=None if decay is None else momentum)
        state = fg.next_state
    trace.final_state = state
    return trace


def lff_outer_loop(inner_state, oracle, x_clean, budget, cfg, mode):
    """One-order LFF (MLFF when ``cfg.outer_momentum`` is set) for ``cfg.iterations`` steps."""
    if cfg.order != 1:
        raise ConfigError("lff_outer_loop is one-order; use lffn_outer_loop")

    def collect(state, x):
        return collect_future(state, oracle, x, x_clean, budget, cfg, mode)

    return _outer_loop(collect, inner_state, x_clean, budget, cfg)


def lffn_outer_loop(inner_state, oracle, x_clean, budget, cfg, mode):
    """Multi-order LFF^N / MLFF^N; ``order = 1`` coincides with :func:`lff_outer_loop`.

    Each outer step costs ``Q**order`` inner steps, i.e.
    ``Q**order * inner.calls_per_step`` oracle calls; the trace records them.
    """
    _, lo, hi = _bounds(x_clean, budget)
    roller = _Roller(oracle, cfg, mode, budget.alpha, lo, hi)

    def collect(state, x):
        return roller.collect(cfg.order, state, x)

    return _outer_loop(collect, inner_state, x_clean, budget, cfg)


# -- closed-form momentum expansion ------------------------------------------


def _norms(momentum_norms, p):
    out = []
    for m in momentum_norms:
        n = lp_norm(m, p) if np.ndim(m) else float(m)
        if not n > 0:
            raise ZeroGradientError(f"momentum norm must be > 0, got {n}")
        out.append(n)
    return out


def momentum_expansion_coeffs(mu, beta, q, momentum_norms, p=1):
    """``C_i = sum_{l=i}^{Q-1} beta^(l+1) mu^(l-i) / ||M(x^l)||_p`` by direct summation.

    ``momentum_norms`` holds the Q norms, or the Q momentum vectors themselves
    (their ``p``-norms are taken).
    """
    if len(momentum_norms) != q:
        raise ValueError(f"need {q} momentum norms, got {len(momentum_norms)}")
    norms = _norms(momentum_norms, p)
    coeffs = []
    for i in range(q):
        c = 0.0
        for l in range(i, q):
            c += beta ** (l + 1) * mu ** (l - i) / norms[l]
        coeffs.append(c)
    return coeffs


def coefficient_ratio(mu, beta, q, momentum_norms, p=1):
    """``C_0 / C_{Q-1}``: how much the first future gradient outweighs the last."""
    c = momentum_expansion_coeffs(mu, beta, q, momentum_norms, p)
    return c[0] / c[-1]


def momentum_lookahead_direction(momenta, beta, p=1):
    """Direct form ``sum_q beta^q M(x^{q-1}) / ||M(x^{q-1})||_p`` over a momentum rollout."""
    out = np.zeros_like(momenta[0])
    for q, m in enumerate(momenta, start=1):
        out += beta**q * m / lp_norm(m, p)
    return out
