import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from stpn import STPNClassifier, TemporalLocalizer
from stpn.data import label_matrix, load_stream
from stpn.localize import LocalizeConfig, localize_video
from stpn.train import Hyperparams, train


@pytest.fixture(scope="module")
def arrays(small_dataset):
    return (load_stream(small_dataset, "rgb"), load_stream(small_dataset, "flow"),
            label_matrix(small_dataset))


def test_params_and_clone():
    est = STPNClassifier(hidden=7, beta=0.3, random_state=4)
    params = est.get_params()
    assert params["hidden"] == 7 and params["beta"] == 0.3 and params["t_out"] == 400
    twin = clone(est)
    assert twin.get_params() == params and twin is not est
    loc = TemporalLocalizer(rgb=est, tau=0.2)
    assert loc.get_params()["rgb__hidden"] == 7
    loc.set_params(rgb__hidden=9)
    assert est.hidden == 9


def test_not_fitted(arrays):
    X, _, _ = arrays
    with pytest.raises(NotFittedError):
        STPNClassifier().predict(X)
    with pytest.raises(NotFittedError):
        TemporalLocalizer().predict(X, X, [1.0] * len(X))


def test_classifier_matches_functional_training(arrays, small_dataset):
    X, _, Y = arrays
    est = STPNClassifier(hidden=4, lr=1e-3, epochs=3, t_out=12, random_state=2).fit(X, Y)
    ref = train(small_dataset, "rgb", Hyperparams(hidden=4, lr=1e-3, epochs=3, T_out=12, seed=2))
    assert est.params_.equals(ref)
    assert len(est.history_) == 3
    assert est.n_features_in_ == 6 and est.n_classes_ == 3


def test_classifier_output_shapes(arrays):
    X, _, Y = arrays
    est = STPNClassifier(hidden=4, lr=1e-3, epochs=2, t_out=12).fit(X, Y)
    n = len(X)
    proba = est.predict_proba(X)
    assert proba.shape == (n, 3) and np.all((proba > 0) & (proba < 1))
    pred = est.predict(X)
    np.testing.assert_array_equal(pred, (proba >= 0.5).astype(int))
    assert est.decision_function(X).shape == (n, 3)
    assert est.transform(X).shape == (n, 6)
    lam, tc = est.attention(X), est.tcam(X)
    assert all(a.shape == (12,) for a in lam) and all(t.shape == (12, 3) for t in tc)
    np.testing.assert_allclose(est.decision_function(X),
                               np.stack([l @ t for l, t in zip(lam, tc)]), rtol=1e-9, atol=1e-12)
    with pytest.raises(ValueError):
        est.predict([np.zeros((4, 5))])


def test_localizer_fit_predict(arrays, small_dataset):
    Xr, Xf, Y = arrays
    base = STPNClassifier(hidden=4, lr=1e-3, epochs=2, t_out=12)
    loc = TemporalLocalizer(rgb=base, flow=base, t_out=12, class_reject_p=0.0, tau=0.1)
    loc.fit(Xr, Xf, Y)
    assert loc.rgb_ is not base and loc.flow_ is not loc.rgb_
    durations = [v.duration_s for v in small_dataset.videos]
    ids = [v.id for v in small_dataset.videos]
    out = loc.predict(Xr, Xf, durations, ids)
    assert len(out) == len(Xr)
    cfg = LocalizeConfig(class_reject_p=0.0, tau=0.1, T_out=12)
    for rec, dets in zip(small_dataset.videos, out):
        assert dets == localize_video(loc.rgb_.params_, loc.flow_.params_, rec, cfg,
                                      root=small_dataset.root)
    fused = loc.predict_proba(Xr, Xf)
    np.testing.assert_allclose(fused, 0.5 * loc.rgb_.predict_proba(Xr)
                               + 0.5 * loc.flow_.predict_proba(Xf))


def test_localizer_from_params(arrays, small_dataset):
    Xr, Xf, Y = arrays
    est = STPNClassifier(hidden=4, epochs=1, t_out=12).fit(Xr, Y)
    loc = TemporalLocalizer.from_params(est.params_, est.params_, t_out=12)
    assert loc.rgb_.params_ is est.params_
    assert loc.predict_proba(Xr, Xf).shape == (len(Xr), 3)
    with pytest.raises(ValueError):
        loc.predict(Xr, Xf[:-1], [1.0] * len(Xr))
