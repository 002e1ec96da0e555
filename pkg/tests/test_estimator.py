import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from hybkan import HybKanViTClassifier, synthetic_frequency


@pytest.fixture(scope="module")
def blobs_vs_stripes():
    train = synthetic_frequency(256, 8, seed=0)
    test = synthetic_frequency(128, 8, seed=1)
    names = np.array(["blob", "stripe"])
    return train.images, names[train.labels], test.images, names[test.labels]


def test_fit_predict_string_labels(blobs_vs_stripes):
    X, y, Xt, yt = blobs_vs_stripes
    clf = HybKanViTClassifier(size="toy", patch_size=4, epochs=3, random_state=0).fit(X, y)
    assert set(clf.predict(Xt)) <= {"blob", "stripe"}
    assert list(clf.classes_) == ["blob", "stripe"]
    proba = clf.predict_proba(Xt)
    assert proba.shape == (128, 2) and np.allclose(proba.sum(1), 1.0, atol=1e-5)
    assert clf.score(Xt, yt) >= 0.9


def test_flat_input_round_trip(blobs_vs_stripes):
    X, y, Xt, _ = blobs_vs_stripes
    flat = X.reshape(len(X), -1)
    clf = HybKanViTClassifier(patch_size=4, epochs=1, random_state=1).fit(flat, y)
    assert clf.n_features_in_ == 64 and clf.image_shape_ == (1, 8, 8)
    a = clf.predict_proba(Xt.reshape(len(Xt), -1))
    b = clf.predict_proba(Xt)
    assert np.array_equal(a, b)


def test_params_and_clone():
    clf = HybKanViTClassifier(variant="hybrid1", lr=5e-4)
    params = clf.get_params()
    assert params["variant"] == "hybrid1" and params["lr"] == 5e-4
    twin = clone(clf.set_params(epochs=2))
    assert twin.get_params() == clf.get_params()


def test_same_random_state_same_predictions(blobs_vs_stripes):
    X, y, Xt, _ = blobs_vs_stripes
    a = HybKanViTClassifier(patch_size=4, epochs=1, random_state=7).fit(X[:64], y[:64]).predict_proba(Xt)
    b = HybKanViTClassifier(patch_size=4, epochs=1, random_state=7).fit(X[:64], y[:64]).predict_proba(Xt)
    assert np.array_equal(a, b)


def test_validation_errors(blobs_vs_stripes):
    X, y, _, _ = blobs_vs_stripes
    with pytest.raises(NotFittedError):
        HybKanViTClassifier().predict(X)
    with pytest.raises(ValueError):
        HybKanViTClassifier().fit(X[:10], y[:9])
    with pytest.raises(ValueError):
        HybKanViTClassifier().fit(X[:10], np.zeros(10))
    with pytest.raises(ValueError):
        HybKanViTClassifier().fit(np.zeros((4, 10)), [0, 1, 0, 1])
    clf = HybKanViTClassifier(patch_size=4, epochs=1).fit(X[:32], y[:32])
    with pytest.raises(ValueError):
        clf.predict(np.zeros((2, 1, 12, 12)))
