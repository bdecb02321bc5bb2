import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mtsxplain import gapdcam
from mtsxplain.errors import InvalidPermutation, ShapeMismatch
from mtsxplain.tsdata import LabeledDataset


def test_cx_display_order():
    cx = gapdcam.build_cx([[1, 1], [2, 2]])
    # the conventional display lists the identity row last
    assert cx[::-1].tolist() == [[[2, 2], [1, 1]], [[1, 1], [2, 2]]]
    assert np.array_equal(cx[0], [[1, 1], [2, 2]])


def test_cx_single_channel(rng):
    x = rng.normal(size=(1, 9))
    assert np.array_equal(gapdcam.build_cx(x), x[None])


@given(st.integers(1, 8), st.integers(0, 10_000))
@settings(max_examples=40, deadline=None)
def test_cx_latin_square(d, seed):
    rng = np.random.default_rng(seed)
    perm = rng.permutation(d)
    layout = gapdcam.cx_layout(perm)
    for r in range(d):
        assert sorted(layout[r]) == list(range(d))
        assert sorted(layout[:, r]) == list(range(d))
    x = rng.normal(size=(d, 4))
    cx = gapdcam.build_cx(x, perm)
    assert np.array_equal(cx[0], x[perm])


def test_invalid_permutation():
    with pytest.raises(InvalidPermutation):
        gapdcam.build_cx(np.zeros((3, 4)), [0, 0, 1])


def numeric_grads(m, cx, y, h=1e-6):
    out = {}
    for k in gapdcam.PARAM_NAMES:
        p = m.params[k]
        g = np.zeros_like(p)
        for i in np.ndindex(p.shape):
            old = p[i]
            p[i] = old + h
            lp, _ = m.loss_and_grads(cx, y)
            p[i] = old - h
            lm, _ = m.loss_and_grads(cx, y)
            p[i] = old
            g[i] = (lp - lm) / (2 * h)
        out[k] = g
    return out


def test_gradients_match_finite_differences(rng):
    m = gapdcam.GapCnnModel.init(2, 8, 2, filters=(3, 4), seed=1)
    for k in ("b1", "b2"):
        m.params[k] = rng.normal(scale=0.1, size=m.params[k].shape)
    X = rng.normal(size=(3, 2, 8))
    cx = X[:, gapdcam.cx_layout(np.arange(2))]
    y = np.array([0, 1, 1])
    _, grads = m.loss_and_grads(cx, y)
    num = numeric_grads(m, cx, y)
    for k in gapdcam.PARAM_NAMES:
        scale = max(np.max(np.abs(num[k])), 1e-8)
        assert np.max(np.abs(grads[k] - num[k])) / scale <= 1e-4, k


def test_conv_matches_direct_loop(rng):
    x = rng.normal(size=(2, 4, 5, 3))
    W = rng.normal(size=(2, 3, 3, 3))
    b = rng.normal(size=2)
    out, _ = gapdcam.conv_forward(x, W, b)
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
    ref = np.zeros((2, 4, 5, 2))
    for n, h, w, o in np.ndindex(ref.shape):
        ref[n, h, w, o] = b[o] + sum(W[o, c, i, j] * xp[n, h + i, w + j, c]
                                    for c in range(3) for i in range(3) for j in range(3))
    np.testing.assert_allclose(out, ref, atol=1e-12)


def test_constant_input_predicts_majority():
    X = np.ones((10, 2, 6))
    y = np.array([1] * 6 + [0] * 4)
    m = gapdcam.train(LabeledDataset(X, y, 2), epochs=5, lr=1e-3, batch_size=5, filters=(2, 2))
    assert np.mean(m.predict(X) == y) == 0.6


def test_cam_identities(rng):
    m = gapdcam.GapCnnModel.init(3, 10, 2, filters=(4, 5), seed=2)
    x = rng.normal(size=(3, 10))
    cx = gapdcam.build_cx(x)
    rows = gapdcam.cam_rows(m, cx, 1)
    logit = m.logits(cx[None])[0, 1]
    assert rows.mean() == pytest.approx(logit - m.params["bd"][1], abs=1e-9)
    m.params["Wd"][:, 0] = 0
    assert not gapdcam.cam_rows(m, cx, 0).any()


def test_single_filter_cam_is_activation(rng):
    m = gapdcam.GapCnnModel.init(2, 7, 2, filters=(3, 1), seed=0)
    m.params["Wd"][:] = 1.0
    cx = gapdcam.build_cx(rng.normal(size=(2, 7)))
    a2, _ = m.features(cx[None])
    np.testing.assert_allclose(gapdcam.cam_cells(m, cx, 0), a2[0, ..., 0])
    with pytest.raises(ShapeMismatch):
        gapdcam.cam_cells(m, cx[:, :, :5], 0)


def test_dcam_single_channel_is_cam(rng):
    m = gapdcam.GapCnnModel.init(1, 12, 2, filters=(2, 3), seed=0)
    x = rng.normal(size=(1, 12))
    w = gapdcam.dcam(m, x, k=5, target_class=1)
    np.testing.assert_array_equal(w.weights, gapdcam.cam_rows(m, x[None], 1))


def test_dcam_exhaustive_ignores_seed(rng):
    m = gapdcam.GapCnnModel.init(3, 10, 2, filters=(3, 4), seed=4)
    x = rng.normal(size=(3, 10))
    a = gapdcam.dcam(m, x, k=6, seed=1, target_class=0)
    b = gapdcam.dcam(m, x, k=200, seed=99, target_class=0)
    np.testing.assert_array_equal(a.weights, b.weights)
    assert len(gapdcam.dcam_permutations(3, 5, 0)) == 5


def test_dcam_accumulator_positions():
    acc = gapdcam.DcamAccumulator(3, 1)
    perm = np.array([2, 0, 1])
    q = np.arange(9.0).reshape(3, 3, 1)
    acc.add(q, perm)
    layout = gapdcam.cx_layout(perm)
    for r in range(3):
        for s in range(3):
            assert acc.total[layout[r, s], s, 0] == q[r, s, 0]


def test_dcam_gate_zeroes_low_variance_channels(rng):
    m = gapdcam.GapCnnModel.init(4, 8, 2, filters=(3, 4), seed=5)
    w = gapdcam.dcam(m, rng.normal(size=(4, 8)), k=24, target_class=1).weights
    assert w.shape == (4, 8)
    assert np.sum(~w.any(axis=1)) >= 1


def test_checkpoint_roundtrip(tmp_path, rng):
    m = gapdcam.GapCnnModel.init(2, 6, 3, filters=(2, 3), seed=0)
    m.save(tmp_path / "cnn")
    back = gapdcam.GapCnnModel.load(tmp_path / "cnn")
    X = rng.normal(size=(4, 2, 6))
    assert np.array_equal(back.predict_proba(X), m.predict_proba(X))
