"""Fast self-checks run by ``lff verify``: gradients against finite
differences, the momentum expansion identity, degeneracy and linear collapse
of the LFF wrappers, oracle-call accounting and backend agreement.

Each check returns ``(ok, detail)``; :func:`run_all` yields
``(name, ok, detail)`` in a fixed order.
"""

from fractions import Fraction

import numpy as np

from . import _backend
from .engine import (LffConfig, coefficient_ratio, collect_future, combine,
                     lff_outer_loop, lffn_outer_loop, momentum_expansion_coeffs,
                     momentum_lookahead_direction)
from .inner import InnerSpec, init_state, rollout
from .numeric import Budget
from .oracles import EnsembleModel, Landscape, LinearSoftmaxModel, LossMode, MlpModel


def random_mlp(rng, n=20, h=16, k=5):
    return MlpModel(rng.normal(0, 1 / np.sqrt(n), (h, n)), rng.normal(0, 0.1, h),
                    rng.normal(0, 1 / np.sqrt(h), (k, h)), rng.normal(0, 0.1, k))


def random_linear(rng, n=20, k=5):
    return LinearSoftmaxModel(rng.normal(0, 1, (k, n)), rng.normal(0, 0.1, k))


def central_difference(oracle, x, mode, h=1e-6):
    g = np.empty_like(x)
    for j in range(x.shape[0]):
        e = np.zeros_like(x)
        e[j] = h
        g[j] = (oracle.loss_and_grad(x + e, mode)[0] - oracle.loss_and_grad(x - e, mode)[0]) / (2 * h)
    return g


def gradient_error(oracle, x, mode):
    """Relative L2 error of the analytic gradient against central differences."""
    g = oracle.loss_and_grad(x, mode)[1]
    fd = central_difference(oracle, x, mode)
    return float(np.linalg.norm(g - fd) / max(np.linalg.norm(fd), 1e-12))


def check_gradients(points=10, seed=0):
    rng = np.random.default_rng(seed)
    mlp, lin = random_mlp(rng), random_linear(rng)
    oracles = {
        "linear": lin,
        "mlp": mlp,
        "ensemble": EnsembleModel((mlp, lin, random_mlp(rng))),
        **{f"landscape:{n}": Landscape(n) for n in ("quadratic", "linear", "multibasin")},
    }
    worst = 0.0
    for name, oracle in oracles.items():
        for _ in range(points):
            x = rng.uniform(0, 1, 20)
            mode = LossMode(int(rng.integers(5)), bool(rng.integers(2)))
            worst = max(worst, gradient_error(oracle, x, mode))
    return worst <= 1e-5, f"worst relative error {worst:.2e} over {len(oracles)} oracles"


def expansion_gap(oracle, x, mu, beta, q):
    """Entrywise relative gap between the direct lookahead sum and its expansion."""
    spec = InnerSpec("mifgsm", mu=mu)
    budget = Budget(epsilon=10.0, alpha=0.01, box_lo=-100.0, box_hi=100.0)
    mode = LossMode.untargeted(0)
    state = init_state(spec, x.shape[0])
    fg = collect_future(state, oracle, x, x, budget, LffConfig(q=q, beta=beta), mode)
    closed = combine(fg.grads, momentum_expansion_coeffs(mu, beta, q, fg.momentum_norms))
    direct = momentum_lookahead_direction(
        rollout(state, oracle, x, x, budget, q, mode).momenta, beta
    )
    return float(np.max(np.abs(direct - closed) / np.abs(direct)))


def check_expansion(seed=1):
    rng = np.random.default_rng(seed)
    mlp = random_mlp(rng)
    worst = max(expansion_gap(mlp, rng.uniform(0, 1, 20), mu, beta, q)
                for q in (2, 5) for mu in (0.0, 1.0) for beta in (0.5, 1.5))
    return worst <= 1e-9, f"worst relative gap {worst:.2e}"


def check_coefficient_ratio():
    r = coefficient_ratio(1.0, 1.0, 5, [1, 2, 3, 4, 5])
    exact = float(Fraction(137, 12))
    return abs(r - exact) <= 1e-12, f"C_0/C_4 = {r!r} (137/12 = {exact!r})"


def _same_deltas(a, b):
    return a.steps == b.steps and np.array_equal(a.deltas, b.deltas) and all(
        np.array_equal(p, r) for p, r in zip(a.points, b.points)
    )


def check_degeneracy(examples=5, seed=2):
    rng = np.random.default_rng(seed)
    mlp = random_mlp(rng)
    pool = rng.uniform(0, 1, (8, 20))
    budget = Budget(0.15, 0.015)
    bad = []
    for kind in ("ifgsm", "mifgsm", "emi", "admix"):
        spec = InnerSpec(kind)
        for i in range(examples):
            x = rng.uniform(0, 1, 20)
            mode = LossMode.untargeted(mlp.predict(x))
            state = init_state(spec, 20, seed=(seed, i), pool=pool)
            base = rollout(state, mlp, x, x, budget, 8, mode)
            wrapped = lff_outer_loop(state, mlp, x, budget, LffConfig(q=1, iterations=8), mode)
            if not _same_deltas(base, wrapped):
                bad.append(f"{kind}#{i}")
    return not bad, "all identical" if not bad else f"differs: {', '.join(bad)}"


def check_linear_collapse():
    land = Landscape("linear")
    budget = Budget(0.15, 0.015)
    x = np.linspace(0.2, 0.8, 20)
    ref = rollout(init_state(InnerSpec("ifgsm"), 20), land, x, x, budget, 16, None)
    bad = []
    for q in (1, 4):
        for beta in (0.5, 1.0):
            for order, eta in ((1, None), (1, (1.0,)), (2, None)):
                cfg = LffConfig(q=q, beta=beta, order=order, outer_momentum=eta, iterations=16)
                state = init_state(InnerSpec("ifgsm"), 20)
                tr = lffn_outer_loop(state, land, x, budget, cfg, None)
                if not _same_deltas(ref, tr):
                    bad.append(f"q={q},beta={beta},order={order},eta={eta}")
    return not bad, "all equal to I-FGSM" if not bad else f"differs: {'; '.join(bad)}"


def check_call_count():
    land = Landscape("quadratic")
    budget = Budget(0.5, 0.1, box_lo=-10.0, box_hi=10.0)
    x = np.linspace(-1.0, 1.0, 6)
    details = []
    ok = True
    for spec in (InnerSpec("ifgsm"), InnerSpec("emi", samples=3)):
        cfg = LffConfig(q=2, order=2, iterations=2)
        tr = lffn_outer_loop(init_state(spec, 6), land, x, budget, cfg, None)
        want = 2 * 2**2 * spec.calls_per_step
        ok &= tr.total_calls == want
        details.append(f"{spec.kind}: {tr.total_calls}/{want}")
    return ok, ", ".join(details)


def check_backends(seed=3):
    if "compiled" not in _backend.available():
        return True, "compiled extension not built; python backend only"
    rng = np.random.default_rng(seed)
    mlp = random_mlp(rng)
    x = rng.uniform(0, 1, 20)
    mode = LossMode.untargeted(1)
    out = {}
    for name in ("python", "compiled"):
        with _backend.using(name):
            out[name] = mlp.loss_and_grad(x, mode)
    gap = max(abs(out["python"][0] - out["compiled"][0]),
              float(np.abs(out["python"][1] - out["compiled"][1]).max()))
    return gap <= 1e-12, f"max difference {gap:.1e}"


CHECKS = (
    ("gradients", check_gradients),
    ("expansion", check_expansion),
    ("coefficient-ratio", check_coefficient_ratio),
    ("degeneracy", check_degeneracy),
    ("linear-collapse", check_linear_collapse),
    ("call-count", check_call_count),
    ("backends", check_backends),
)


def run_all():
    for name, fn in CHECKS:
        try:
            ok, detail = fn()
        except Exception as exc:  # a crashing check is a failing check
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        yield name, bool(ok), detail
