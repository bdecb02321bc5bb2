import numpy as np
import pytest

from mtsxplain import classifiers
from mtsxplain.errors import ParseError
from mtsxplain.tsdata import LabeledDataset


@pytest.fixture(scope="module")
def tiny(request):
    rng = np.random.default_rng(0)
    y = np.array([0, 1] * 10)
    X = rng.normal(size=(20, 2, 30))
    X[:, 0, 5:10] += np.where(y == 1, 1.5, -1.5)[:, None]
    return LabeledDataset(X, y, 2)


@pytest.mark.parametrize("make", [
    lambda: classifiers.RawRidge(),
    lambda: classifiers.RocketLogistic(100, 1),
    lambda: classifiers.RocketRidge(100, 1),
    lambda: classifiers.ChannelEnsemble(50, 1),
])
def test_fit_save_load(make, tiny, tmp_path):
    m = make().fit(tiny)
    assert np.mean(m.predict(tiny.X) == tiny.y) >= 0.9
    classifiers.save_model(m, tmp_path / "m")
    back = classifiers.load_model(tmp_path / "m")
    assert back.kind == m.kind
    assert np.array_equal(back.predict(tiny.X), m.predict(tiny.X))


def test_unknown_kind(tmp_path):
    (tmp_path / "model.json").write_text('{"format_version": 1, "kind": "svm", "params": {}}')
    with pytest.raises(ParseError):
        classifiers.load_model(tmp_path)


def test_rocket_logistic_pseudo_periodic(pseudo_periodic):
    train, test, _ = pseudo_periodic
    m = classifiers.RocketLogistic(2000, 0).fit(train)
    assert np.mean(m.predict(test.X) == test.y) >= 0.95


@pytest.mark.slow
def test_channel_ensemble_pseudo_periodic(pseudo_periodic):
    train, test, _ = pseudo_periodic
    m = classifiers.ChannelEnsemble(500, 0).fit(train)
    assert np.mean(m.predict(test.X) == test.y) >= 0.95
