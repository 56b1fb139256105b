import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from lffattack.errors import ConfigError, NonFiniteError, ZeroGradientError
from lffattack.numeric import (Budget, as_vector, l1_normalize, lp_norm, project, sign,
                               signed_step, within_budget)

finite = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)
vectors = arrays(np.float64, st.integers(1, 12), elements=finite)


def test_sign_keeps_zero():
    np.testing.assert_array_equal(sign([0.5, -2.0, 0.0, -0.0]), [1.0, -1.0, 0.0, 0.0])


@pytest.mark.parametrize("bad", [np.nan, np.inf, -np.inf])
def test_sign_rejects_nonfinite(bad):
    with pytest.raises(NonFiniteError):
        sign([1.0, bad])


def test_as_vector_rejects_matrices():
    with pytest.raises(ValueError):
        as_vector(np.zeros((2, 2)))


@pytest.mark.parametrize("p, expected", [(1, 7.0), (2, 5.0), (np.inf, 4.0), ("inf", 4.0)])
def test_lp_norm_values(p, expected):
    assert lp_norm([3.0, -4.0], p) == expected


def test_lp_norm_rejects_unknown_p():
    with pytest.raises(ValueError):
        lp_norm([1.0], 3)


def test_l1_normalize_zero_vector():
    with pytest.raises(ZeroGradientError):
        l1_normalize(np.zeros(4))


@given(vectors)
def test_l1_normalize_has_unit_norm(v):
    if not np.abs(v).sum() > 0:
        return
    np.testing.assert_allclose(np.abs(l1_normalize(v)).sum(), 1.0, rtol=1e-12)


@given(vectors)
def test_sign_is_scale_invariant(v):
    np.testing.assert_array_equal(sign(v), sign(3.5 * v))


@pytest.mark.parametrize(
    "kwargs",
    [dict(epsilon=0.1, alpha=0.2), dict(epsilon=0.0, alpha=0.0), dict(epsilon=0.1, alpha=0.01,
     box_lo=1.0, box_hi=0.0), dict(epsilon=np.nan, alpha=0.01)],
)
def test_budget_validation(kwargs):
    with pytest.raises(ConfigError):
        Budget(**kwargs)


@settings(max_examples=200)
@given(arrays(np.float64, 6, elements=st.floats(-2, 3)), arrays(np.float64, 6,
       elements=st.floats(0, 1)))
def test_project_is_feasible_and_idempotent(x_adv, x_clean):
    b = Budget(0.1, 0.01)
    p = project(x_adv, x_clean, b)
    # (x + eps) - x can exceed eps by an ulp, hence the default 1e-12 slack
    assert within_budget(p, x_clean, b)
    np.testing.assert_array_equal(project(p, x_clean, b), p)


def test_project_leaves_feasible_points_alone():
    b = Budget(0.2, 0.05)
    x = np.array([0.5, 0.1, 0.9])
    inside = x + np.array([0.1, -0.05, 0.05])
    np.testing.assert_array_equal(project(inside, x, b), inside)


def test_project_clips_to_box_and_ball():
    b = Budget(0.2, 0.05)
    out = project([1.5, -1.0, 0.5], [0.95, 0.05, 0.2], b)
    np.testing.assert_array_equal(out, [1.0, 0.0, 0.4])


@settings(max_examples=200)
@given(arrays(np.float64, 5, elements=st.floats(0, 1)), arrays(np.float64, 5, elements=finite))
def test_signed_step_matches_project(x, d):
    b = Budget(0.1, 0.03)
    lo, hi = b.bounds(x)
    np.testing.assert_array_equal(signed_step(x, d, b.alpha, lo, hi),
                                  project(x + b.alpha * np.sign(d), x, b))


def test_signed_step_rejects_nan_direction():
    x = np.zeros(3)
    with pytest.raises(NonFiniteError):
        signed_step(x, np.array([1.0, np.nan, 0.0]), 0.1, x - 1, x + 1)


def test_within_budget_detects_violations():
    b = Budget(0.1, 0.01)
    x = np.full(3, 0.5)
    assert within_budget(x + 0.1, x, b)
    assert not within_budget(x + 0.1 + 1e-9, x, b)
    assert not within_budget(np.array([0.5, 0.5, np.nan]), x, b)
    assert not within_budget(np.array([-1e-9, 0.5, 0.5]), np.array([0.0, 0.5, 0.5]), b)
