import itertools
import math

import numpy as np
import pytest
from fractions import Fraction
from hypothesis import given, settings
from hypothesis import strategies as st

from mtsxplain import shapx
from mtsxplain.errors import DomainError, ShapeMismatch, TooManySegments


def segment_game(values_fn, L, M):
    """Predictor whose output depends only on which segments equal x (x=1, background=0)."""
    seg = shapx.segment_bounds(L, M)
    starts = seg.boundaries[:-1]

    def predict(Z):
        present = np.asarray(Z)[:, starts] == 1.0
        v = np.array([values_fn(tuple(p)) for p in present])
        return np.stack([1 - v, v], axis=1)

    return predict


def permutation_shapley(v, M):
    """Average marginal contribution over all M! orders."""
    phi = np.zeros(M)
    for order in itertools.permutations(range(M)):
        present = [False] * M
        for i in order:
            before = v(tuple(present))
            present[i] = True
            phi[i] += v(tuple(present)) - before
    return phi / math.factorial(M)


def test_segment_bounds_examples():
    assert shapx.segment_bounds(100, 10).boundaries.tolist() == list(range(0, 101, 10))
    assert shapx.segment_bounds(7, 3).widths.tolist() == [3, 2, 2]
    assert shapx.segment_bounds(5, 5).widths.tolist() == [1] * 5
    with pytest.raises(DomainError):
        shapx.segment_bounds(3, 4)


@given(st.integers(1, 300), st.data())
def test_segment_bounds_invariants(L, data):
    M = data.draw(st.integers(1, L))
    b = shapx.segment_bounds(L, M).boundaries
    assert b[0] == 0 and b[-1] == L and np.all(np.diff(b) > 0)
    assert np.ptp(np.diff(b)) <= 1


def test_mask_instance(rng):
    x, bg = rng.normal(size=12), rng.normal(size=12)
    assert np.array_equal(shapx.mask_instance(x, [1, 1, 1], bg), x)
    assert np.array_equal(shapx.mask_instance(x, [0, 0, 0], bg), bg)
    z = np.array([1, 0, 1], bool)
    a, b = shapx.mask_instance(x, z, bg), shapx.mask_instance(x, ~z, bg)
    from_x = (a == x).astype(int) + (b == x).astype(int)
    assert np.all(from_x == 1)
    with pytest.raises(ShapeMismatch):
        shapx.mask_instance(x, z, bg[:5])


def test_kernel_weights():
    assert shapx.shapley_kernel_weight(2, 1) == 0.5
    assert shapx.shapley_kernel_weight(4, 1) == shapx.shapley_kernel_weight(4, 3)
    total = sum(math.comb(10, z) * shapx.shapley_kernel_weight(10, z) for z in range(1, 10))
    exact = sum(Fraction(9, z * (10 - z)) for z in range(1, 10))
    assert total == pytest.approx(float(exact), rel=1e-14)
    with pytest.raises(DomainError):
        shapx.shapley_kernel_weight(4, 0)


def test_additive_two_segment_game():
    f = segment_game(lambda p: 0.5 * p[0] + 0.5 * p[1], 4, 2)
    ex = shapx.kernel_shap(f, np.ones(4), 2, background=np.zeros(4), target_class=1)
    np.testing.assert_allclose(ex.phi, [0.5, 0.5], atol=1e-12)


def test_unanimity_and_additive_exact():
    f = segment_game(lambda p: float(p[0] and p[1]), 4, 2)
    np.testing.assert_allclose(shapx.exact_shap(f, np.ones(4), 2, np.zeros(4), 1).phi, [0.5, 0.5])
    w = [0.1, 0.25, -0.3, 0.05]
    g = segment_game(lambda p: sum(wi * pi for wi, pi in zip(w, p)), 8, 4)
    np.testing.assert_allclose(shapx.exact_shap(g, np.ones(8), 4, np.zeros(8), 1).phi, w, atol=1e-12)


def random_game(rng, M):
    table = rng.random(2**M)
    return lambda p: table[sum(1 << i for i, b in enumerate(p) if b)]


def test_three_player_permutation_oracle(rng):
    v = random_game(rng, 3)
    ex = shapx.exact_shap(segment_game(v, 6, 3), np.ones(6), 3, np.zeros(6), 1)
    np.testing.assert_allclose(ex.phi, permutation_shapley(v, 3), atol=1e-12)


def test_exhaustive_kernel_matches_exact(rng):
    v = random_game(rng, 8)
    f = segment_game(v, 16, 8)
    a = shapx.kernel_shap(f, np.ones(16), 8, background=np.zeros(16), target_class=1)
    b = shapx.exact_shap(f, np.ones(16), 8, np.zeros(16), 1)
    assert a.exhaustive
    assert np.max(np.abs(a.phi - b.phi)) <= 1e-6
    assert abs(a.efficiency_residual) <= 1e-9


def test_dummy_segment(rng):
    v0 = random_game(rng, 5)
    v = lambda p: v0(p[:2] + (False,) + p[3:])  # noqa: E731 - ignores segment 2
    ex = shapx.kernel_shap(segment_game(v, 10, 5), np.ones(10), 5, background=np.zeros(10),
                           target_class=1)
    assert abs(ex.phi[2]) <= 1e-9


def test_sampled_mode_efficiency_and_determinism(rng):
    W = rng.normal(size=40)
    f = lambda Z: np.stack([np.tanh(Z @ W), -np.tanh(Z @ W)], 1)  # noqa: E731
    x = rng.normal(size=40)
    a = shapx.kernel_shap(f, x, 20, n_samples=256, seed=3)
    b = shapx.kernel_shap(f, x, 20, n_samples=256, seed=3)
    assert not a.exhaustive and np.array_equal(a.phi, b.phi)
    assert abs(a.efficiency_residual) <= 1e-6
    with pytest.raises(DomainError):
        shapx.kernel_shap(f, x, 20, n_samples=10)


def test_sampled_linear_model_is_exact(rng):
    # a linear game is fitted exactly by any full-rank coalition design
    w = rng.normal(size=30)
    f = lambda Z: np.stack([Z @ w, -(Z @ w)], 1)  # noqa: E731
    x, bg = rng.normal(size=30), rng.normal(size=30)
    ex = shapx.kernel_shap(f, x, 15, n_samples=200, background=bg, target_class=0, seed=1)
    seg = shapx.segment_bounds(30, 15)
    expect = [np.sum(w[a:b] * (x[a:b] - bg[a:b])) for a, b in zip(seg.boundaries, seg.boundaries[1:])]
    np.testing.assert_allclose(ex.phi, expect, atol=1e-9)


def test_exact_limit():
    with pytest.raises(TooManySegments):
        shapx.exact_shap(lambda Z: np.zeros((len(Z), 2)), np.zeros(13), 13)


def test_concatenated_d1_matches_univariate(rng):
    W = rng.normal(size=50)
    f = lambda Z: np.stack([np.tanh(Z @ W), 1 - np.tanh(Z @ W)], 1)  # noqa: E731
    x = rng.normal(size=(1, 50))
    w, _ = shapx.explain_concatenated(f, x, 5, target_class=0)
    direct = shapx.kernel_shap(f, x[0], 5, target_class=0)
    np.testing.assert_array_equal(w.weights[0], direct.phi)


def test_concatenated_segments_respect_channel_joins():
    for d, L in ((20, 100), (3, 30), (7, 50)):
        b = shapx.segment_bounds(d * L, d * 10).boundaries
        assert set(range(0, d * L + 1, L)) <= set(b.tolist())


class _ChannelModel:
    def __init__(self, w):
        self.w = w

    def predict_proba(self, X):
        s = np.tanh(X[:, 0] @ self.w)
        return np.stack([(1 - s) / 2, (1 + s) / 2], 1)


def test_channel_by_channel_equivariance(rng):
    d, L = 3, 20
    models = [_ChannelModel(rng.normal(size=L)) for _ in range(d)]
    x, bgs = rng.normal(size=(d, L)), rng.normal(size=(d, L))
    preds = shapx.channel_predictors(models)
    w, _ = shapx.explain_channel_by_channel(preds, x, 10, backgrounds=bgs, target_class=1)
    perm = [2, 0, 1]
    wp, _ = shapx.explain_channel_by_channel([preds[p] for p in perm], x[perm], 10,
                                             backgrounds=bgs[perm], target_class=1)
    np.testing.assert_array_equal(wp.weights, w.weights[perm])
    single, _ = shapx.explain_channel_by_channel(preds[:1], x[:1], 10, backgrounds=bgs[:1],
                                                 target_class=1)
    direct = shapx.kernel_shap(preds[0], x[0], 10, background=bgs[0], target_class=1)
    np.testing.assert_array_equal(single.weights[0], direct.phi)
