import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lffattack.errors import ConfigError, ZeroGradientError
from lffattack.inner import (InnerSpec, _admix_points, _emi_points, init_state, propose_step,
                             rollout)
from lffattack.numeric import Budget, within_budget
from lffattack.oracles import Landscape, LossMode

BUDGET = Budget(0.15, 0.015)


def plain_mi(oracle, x0, mode, mu, steps, budget=BUDGET):
    """Momentum iterative FGSM written out directly."""
    lo, hi = np.maximum(x0 - budget.epsilon, 0.0), np.minimum(x0 + budget.epsilon, 1.0)
    x, m, points = x0.copy(), np.zeros_like(x0), [x0.copy()]
    for _ in range(steps):
        g = oracle.loss_and_grad(x, mode)[1]
        m = mu * m + g / np.abs(g).sum()
        x = np.clip(x + budget.alpha * np.sign(m), lo, hi)
        points.append(x)
    return points


@pytest.mark.parametrize(
    "kwargs",
    [dict(kind="pgd"), dict(mu=-1.0), dict(samples=0), dict(radius=-0.1), dict(scales=0),
     dict(mixes=-1), dict(ratio=1.0)],
)
def test_spec_validation(kwargs):
    with pytest.raises(ConfigError):
        InnerSpec(**kwargs)


def test_calls_per_step():
    assert InnerSpec("ifgsm").calls_per_step == 1
    assert InnerSpec("mifgsm").calls_per_step == 1
    assert InnerSpec("emi", samples=7).calls_per_step == 7
    assert InnerSpec("admix", scales=5, mixes=3).calls_per_step == 15
    assert InnerSpec("admix", scales=2, mixes=0).calls_per_step == 2
    assert InnerSpec("ifgsm").momentum_decay is None
    assert InnerSpec("mifgsm", mu=0.7).momentum_decay == 0.7


def test_ifgsm_step_is_signed_gradient(mlp, rng):
    x = rng.uniform(0.2, 0.8, 20)
    mode = LossMode.untargeted(1)
    tr = rollout(init_state(InnerSpec("ifgsm"), 20), mlp, x, x, BUDGET, 1, mode)
    g = mlp.loss_and_grad(x, mode)[1]
    np.testing.assert_array_equal(tr.x_adv, np.clip(x + 0.015 * np.sign(g), 0, 1))
    assert tr.total_calls == 1


@pytest.mark.parametrize("mu", [0.0, 0.5, 1.0])
def test_mifgsm_matches_direct_recurrence(mu, mlp, rng):
    x = rng.uniform(0, 1, 20)
    mode = LossMode.untargeted(mlp.predict(x))
    tr = rollout(init_state(InnerSpec("mifgsm", mu=mu), 20), mlp, x, x, BUDGET, 16, mode)
    for a, b in zip(tr.points, plain_mi(mlp, x, mode, mu, 16)):
        np.testing.assert_array_equal(a, b)


def test_single_sample_emi_is_mifgsm(mlp, rng):
    x = rng.uniform(0, 1, 20)
    mode = LossMode.untargeted(0)
    emi = rollout(init_state(InnerSpec("emi", samples=1), 20), mlp, x, x, BUDGET, 10, mode)
    mi = rollout(init_state(InnerSpec("mifgsm"), 20), mlp, x, x, BUDGET, 10, mode)
    np.testing.assert_array_equal(emi.deltas, mi.deltas)


def test_emi_samples_along_previous_average(rng):
    spec = InnerSpec("emi", samples=3, radius=0.1)
    state = init_state(spec, 4)
    x = np.array([0.5, 0.5, 0.5, 0.5])
    assert all(np.array_equal(p, x) for p in _emi_points(state, x))
    _, state = propose_step(state, Landscape("linear"), x, None)
    pts = _emi_points(state, x)
    # the previous mean gradient is linear's w = [1, -2, 3, -1]; scaled to unit L-inf
    direction = np.array([1.0, -2.0, 3.0, -1.0]) / 3.0
    np.testing.assert_allclose(pts[0], x - 0.1 * direction)
    np.testing.assert_allclose(pts[1], x)
    np.testing.assert_allclose(pts[2], x + 0.1 * direction)


def test_admix_without_partners_is_mifgsm(mlp, rng):
    x = rng.uniform(0, 1, 20)
    mode = LossMode.untargeted(2)
    spec = InnerSpec("admix", scales=1, mixes=0)
    adm = rollout(init_state(spec, 20, pool=rng.uniform(0, 1, (5, 20))), mlp, x, x, BUDGET,
                  10, mode)
    mi = rollout(init_state(InnerSpec("mifgsm"), 20), mlp, x, x, BUDGET, 10, mode)
    np.testing.assert_array_equal(adm.deltas, mi.deltas)


def test_admix_points_structure(rng):
    pool = rng.uniform(0, 1, (6, 3))
    spec = InnerSpec("admix", scales=3, mixes=2, ratio=0.2)
    state = init_state(spec, 3, seed=(4, 2), pool=pool)
    x = np.array([0.1, 0.2, 0.3])
    pts = _admix_points(state, x)
    assert len(pts) == 6
    partners = [(pts[j] - x) / 0.2 for j in range(2)]
    for p in partners:
        assert any(np.allclose(p, row) for row in pool)
    assert not np.allclose(partners[0], partners[1])
    for i in range(1, 3):
        np.testing.assert_allclose(pts[2 * i], pts[0] / 2**i)
    again = _admix_points(init_state(spec, 3, seed=(4, 2), pool=pool), x)
    np.testing.assert_array_equal(np.array(pts), np.array(again))
    other = _admix_points(init_state(spec, 3, seed=(4, 3), pool=pool), x)
    assert not np.array_equal(np.array(pts), np.array(other))


def test_admix_draws_change_with_step(rng):
    pool = rng.uniform(0, 1, (50, 3))
    state = init_state(InnerSpec("admix", scales=1, mixes=3), 3, seed=1, pool=pool)
    x = np.full(3, 0.5)
    first = _admix_points(state, x)
    _, later = propose_step(state, Landscape("quadratic"), x, None)
    assert later.step == 1
    assert not np.array_equal(np.array(first), np.array(_admix_points(later, x)))


def test_pool_shape_checked():
    with pytest.raises(ValueError):
        init_state(InnerSpec("admix"), 4, pool=np.zeros((3, 5)))


def test_flat_oracle_raises():
    x = np.zeros(3)
    budget = Budget(0.1, 0.01, box_lo=-1.0, box_hi=1.0)
    with pytest.raises(ZeroGradientError):
        rollout(init_state(InnerSpec("mifgsm"), 3), Landscape("quadratic"), x, x, budget, 1, None)


def test_rollout_needs_a_step(mlp):
    x = np.zeros(20)
    with pytest.raises(ValueError):
        rollout(init_state(InnerSpec(), 20), mlp, x, x, BUDGET, 0, LossMode.untargeted(0))


def test_propose_step_does_not_mutate_state(mlp, rng):
    state = init_state(InnerSpec("mifgsm"), 20)
    before = state.momentum.copy()
    propose_step(state, mlp, rng.uniform(0, 1, 20), LossMode.untargeted(0))
    np.testing.assert_array_equal(state.momentum, before)
    assert state.step == 0


@settings(max_examples=25, deadline=None)
@given(kind=st.sampled_from(["ifgsm", "mifgsm", "emi", "admix"]), seed=st.integers(0, 10**6),
       steps=st.integers(1, 20))
def test_rollouts_respect_budget(kind, seed, steps):
    from conftest import make_mlp

    rng = np.random.default_rng(seed)
    model = make_mlp(rng, n=8, h=6, k=3)
    x = rng.uniform(0, 1, 8)
    spec = InnerSpec(kind, samples=3, scales=2, mixes=2)
    state = init_state(spec, 8, seed=seed, pool=rng.uniform(0, 1, (4, 8)))
    tr = rollout(state, model, x, x, BUDGET, steps, LossMode.untargeted(int(rng.integers(3))))
    assert all(within_budget(p, x, BUDGET) for p in tr.points)
    assert np.abs(np.diff(np.array(tr.points), axis=0)).max() <= BUDGET.alpha + 1e-15
    assert tr.total_calls == steps * spec.calls_per_step
