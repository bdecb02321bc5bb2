import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mtsxplain import rocket
from mtsxplain.rocket import KernelSpec, RocketTransform, _backend


def naive_feature(x, k: KernelSpec):
    """Direct loop over output positions and taps."""
    d, L = x.shape
    out_len = L + 2 * k.padding - (k.length - 1) * k.dilation
    z = []
    for t in range(out_len):
        s = k.bias
        for row, c in enumerate(k.channel_subset):
            for j in range(k.length):
                idx = t + j * k.dilation - k.padding
                if 0 <= idx < L:
                    s += k.weights[row, j] * x[c, idx]
        z.append(s)
    z = np.array(z)
    return float(np.mean(z > 0)), float(z.max())


def test_zero_series_bias_only():
    w = np.arange(7.0)[None] - 3.0
    for bias, expect in ((0.5, (1.0, 0.5)), (-0.5, (0.0, -0.5))):
        k = KernelSpec(7, w, bias, 1, 0, (0,))
        assert rocket.apply_kernel(np.zeros((1, 20)), k) == expect


def test_matches_naive_convolution(rng):
    x = rng.normal(size=(1, 20))
    w = rng.normal(size=(1, 7))
    k = KernelSpec(7, w - w.mean(), 0.1, 1, 0, (0,))
    ppv, mx = rocket.apply_kernel(x, k)
    nppv, nmx = naive_feature(x, k)
    assert ppv == nppv and mx == pytest.approx(nmx, abs=1e-12)


@given(st.integers(0, 10_000))
@settings(max_examples=30, deadline=None)
def test_sampled_kernels_match_naive(seed):
    rng = np.random.default_rng(seed)
    d, L = int(rng.integers(1, 4)), int(rng.integers(12, 40))
    t = rocket.sample_kernels(5, d, L, seed)
    x = rng.normal(size=(d, L))
    F = rocket.transform_array(t, x[None])[0]
    for i, k in enumerate(t.kernels):
        ppv, mx = naive_feature(x, k)
        assert F[2 * i] == ppv
        assert F[2 * i + 1] == pytest.approx(mx, abs=1e-10)


def test_sampling_invariants():
    t = rocket.sample_kernels(10_000, 3, 100, seed=1)
    for k in t.kernels:
        assert k.length in (7, 9, 11)
        np.testing.assert_allclose(k.weights.mean(axis=1), 0, atol=1e-12)
        assert -1 <= k.bias <= 1
        assert k.receptive_field <= 100 + 2 * k.padding
        assert k.receptive_field <= 199
        assert len(set(k.channel_subset)) == len(k.channel_subset) >= 1
        assert k.padding in (0, (k.length - 1) * k.dilation // 2)
    assert all(k.channel_subset == (0,) for k in rocket.sample_kernels(50, 1, 100, 2).kernels)


def test_sampling_deterministic():
    a, b = rocket.sample_kernels(20, 4, 50, 7), rocket.sample_kernels(20, 4, 50, 7)
    for name in ("weights", "lengths", "biases", "dilations", "paddings", "channel_indices"):
        assert np.array_equal(getattr(a, name), getattr(b, name))


def test_feature_shapes(rng):
    X = rng.normal(size=(100, 2, 30))
    assert rocket.transform_array(rocket.sample_kernels(10_000, 2, 30, 0), X).shape == (100, 20_000)
    one = rocket.sample_kernels(1, 2, 30, 0)
    F = rocket.transform_array(one, X)
    assert F.shape == (100, 2)
    for i in (0, 57):
        assert tuple(F[i]) == rocket.apply_kernel(X[i], one.kernels[0])


def test_threads_do_not_change_features(rng):
    X = rng.normal(size=(12, 3, 60))
    t = rocket.sample_kernels(200, 3, 60, 0)
    assert np.array_equal(rocket.transform_array(t, X, 1), rocket.transform_array(t, X, 4))


def test_backends_agree_bitwise(rng):
    if _backend.compiled_apply_kernels is None:
        pytest.skip("compiled extension not built")
    X = rng.normal(size=(5, 4, 80))
    t = rocket.sample_kernels(300, 4, 80, 3)
    a = rocket.transform_array(t, X, backend=_backend.python_apply_kernels)
    b = rocket.transform_array(t, X, backend=_backend.compiled_apply_kernels)
    assert np.array_equal(a, b)


def test_save_load(tmp_path):
    t = rocket.sample_kernels(30, 2, 40, 5)
    t.save(tmp_path / "k.npz")
    back = RocketTransform.load(tmp_path / "k.npz")
    assert back.fitted_for == (2, 40) and np.array_equal(back.weights, t.weights)


def test_shape_checked(rng):
    t = rocket.sample_kernels(3, 2, 40, 5)
    with pytest.raises(Exception, match="fitted"):
        rocket.transform_array(t, rng.normal(size=(1, 3, 40)))
