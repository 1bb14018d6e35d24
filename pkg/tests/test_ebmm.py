import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from oracles import behavior_ref, softmax_ref
from rulevad.ebmm import (
    PatchGrid,
    behavior_feature,
    complexity_estimate,
    patch_attention,
    spatial_suppress,
    temporal_diff,
)
from rulevad.errors import GridMismatch, InputError


def test_temporal_diff_cases():
    same = np.ones((2, 3, 4))
    assert not temporal_diff(same).any()
    np.testing.assert_array_equal(temporal_diff(np.ones((1, 2, 2))), np.zeros((1, 2, 2)))
    out = temporal_diff(np.array([[[0.0]], [[3.0]]]))
    assert out[0, 0, 0] == 0 and out[1, 0, 0] == 3


def test_suppress_two_by_two():
    frame = np.array([[1.0], [0.0], [0.0], [0.0]])
    out = spatial_suppress(frame, PatchGrid(2, 2))
    assert out[0, 0] == 1.0
    assert out[1, 0] == -0.5


def test_suppress_constant_and_single_patch():
    assert not spatial_suppress(np.full((6, 3), 2.5), PatchGrid(2, 3)).any()
    assert not spatial_suppress(np.array([[7.0, -1.0]]), PatchGrid(1, 1)).any()


def test_suppress_grid_mismatch():
    with pytest.raises(GridMismatch):
        spatial_suppress(np.zeros((5, 2)), PatchGrid(2, 2))


def test_attention_examples():
    np.testing.assert_allclose(patch_attention(np.full(5, 3.0)), np.full(5, 0.2))
    for alpha in (0.2, 1.0, 7.5):
        np.testing.assert_allclose(patch_attention([0.0, math.log(2) / alpha], alpha), [1 / 3, 2 / 3],
                                   rtol=1e-12)
    np.testing.assert_allclose(patch_attention([1.0, 2.0, 3.0], 0.2), softmax_ref([0.2, 0.4, 0.6]),
                               rtol=1e-14)


def test_attention_rejects_nan_alpha():
    with pytest.raises(InputError):
        patch_attention([1.0, 2.0], float("nan"))


def test_static_video_is_zero_and_uniform():
    p = np.tile(np.array([1.0, -2.0]), (4, 6, 1))
    out = behavior_feature(p, PatchGrid(2, 3))
    assert not out.behavior_features.any()
    np.testing.assert_allclose(out.attention, 1 / 6)


def test_moving_patch_gets_strict_max_attention():
    rng = np.random.default_rng(3)
    base = rng.normal(size=(9, 4))
    p = np.stack([base, base.copy()])
    p[1, 4] += 5.0
    att = behavior_feature(p, PatchGrid(3, 3)).attention[1]
    assert att.argmax() == 4
    assert (att[4] > np.delete(att, 4)).all()


@pytest.mark.parametrize("seed", range(5))
def test_matches_loop_oracle(seed):
    rng = np.random.default_rng(seed)
    p = rng.normal(size=(3, 4, 2))
    out = behavior_feature(p, PatchGrid(2, 2), 0.2)
    ref, ref_att = behavior_ref(p.tolist(), 2, 2, 0.2)
    np.testing.assert_allclose(out.behavior_features, ref, atol=1e-12)
    np.testing.assert_allclose(out.attention, ref_att, atol=1e-12)


def test_composition_is_exact():
    rng = np.random.default_rng(11)
    p = rng.normal(size=(5, 6, 3))
    grid = PatchGrid(3, 2)
    s = np.abs(temporal_diff(p)) + np.abs(spatial_suppress(p, grid))
    a = patch_attention(s.mean(-1), 0.2)
    out = behavior_feature(p, grid, 0.2)
    np.testing.assert_array_equal(out.behavior_features, np.einsum("nm,nmd->nd", a, s))


patch_stacks = st.tuples(st.integers(1, 4), st.integers(1, 3), st.integers(1, 3), st.integers(1, 3)).flatmap(
    lambda s: st.tuples(
        arrays(np.float64, (s[0], s[1] * s[2], s[3]), elements=st.floats(-10, 10)),
        st.just(PatchGrid(s[1], s[2])),
    )
)


@settings(max_examples=60, deadline=None)
@given(case=patch_stacks, shift=arrays(np.float64, 3, elements=st.floats(-50, 50)))
def test_translation_invariance(case, shift):
    p, grid = case
    c = shift[: p.shape[2]]
    a = behavior_feature(p, grid)
    b = behavior_feature(p + c, grid)
    np.testing.assert_allclose(b.behavior_features, a.behavior_features, atol=1e-9)
    np.testing.assert_allclose(b.attention, a.attention, atol=1e-9)


@settings(max_examples=60, deadline=None)
@given(s=arrays(np.float64, (3, 5), elements=st.floats(-20, 20)), c=st.floats(-100, 100),
       alpha=st.floats(0.01, 5))
def test_attention_normalized_and_shift_invariant(s, c, alpha):
    a = patch_attention(s, alpha)
    np.testing.assert_allclose(a.sum(-1), 1.0, atol=1e-9)
    np.testing.assert_allclose(patch_attention(s + c, alpha), a, atol=1e-9)


def test_complexity_reference_parameters():
    est = complexity_estimate(1, 125_000, 64, 2_000_000, 25, 10)
    assert est.ebmm_ops == 8 * 10**6
    assert est.flow_ops == 5 * 10**8
    assert est.ratio == Fraction(16, 1000)


def test_complexity_scaling_and_identity():
    one = complexity_estimate(1, 125_000, 64, 2_000_000, 25, 10)
    ten = complexity_estimate(10, 125_000, 64, 2_000_000, 25, 10)
    assert ten.ebmm_ops == 10 * one.ebmm_ops and ten.flow_ops == 10 * one.flow_ops
    assert ten.ratio == one.ratio
    assert complexity_estimate(1, 1, 1, 1, 1, 1).ratio == 1
    assert complexity_estimate(1.0, 125e3, 64, 2e6, 25, 10).ratio == one.ratio


def test_complexity_rejects_non_counts():
    with pytest.raises(InputError):
        complexity_estimate(0, 1, 1, 1, 1, 1)
    with pytest.raises(InputError):
        complexity_estimate(1, 1.5, 1, 1, 1, 1)
