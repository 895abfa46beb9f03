import numpy as np
import pytest

from qtorus.estimator import NotFittedError, TorusQuantizer


def test_fit_predict_harmonic():
    est = TorusQuantizer(potential="p1^2/2 + q1^2/2", window=(0.04, 1.6),
                         hbar=0.1, n_tau=128, n_s=48)
    est.fit()
    N = np.arange(0, 10)
    E = est.predict(N)
    assert np.max(np.abs(E - 0.1 * (N + 0.5))) < 1e-9
    assert est.maslov_ == 2
    assert est.score(N, 0.1 * (N + 0.5)) > -1e-9


def test_params_roundtrip_and_clone():
    est = TorusQuantizer(potential="p1^2/2 + q1^2/2 + lambda*q1^4",
                         window=(0.1, 1.5), hbar=0.2,
                         params={"lambda": 0.1}, n_tau=128, n_s=48)
    p = est.get_params()
    est2 = TorusQuantizer(**p)
    assert est2.get_params() == p
    est2.set_params(hbar=0.3)
    assert est2.hbar == 0.3
    from sklearn.base import clone
    est3 = clone(est)
    assert est3.get_params() == p


def test_validation_errors():
    with pytest.raises(NotFittedError):
        TorusQuantizer(window=(0.1, 1.0)).predict([0])
    with pytest.raises(ValueError, match="window"):
        TorusQuantizer(window=None).fit()
    with pytest.raises(ValueError, match="hbar"):
        TorusQuantizer(window=(0.1, 1.0), hbar=-0.1).fit()
    with pytest.raises(ValueError, match="unbound"):
        TorusQuantizer(potential="p1^2/2 + lambda*q1^2", window=(0.1, 1.0)).fit()
    with pytest.raises(ValueError, match="invalid parameter"):
        TorusQuantizer().set_params(gamma=1.0)
    est = TorusQuantizer(potential="p1^2/2 + q1^2/2", window=(0.05, 1.0),
                         hbar=0.1, n_tau=128, n_s=48).fit()
    with pytest.raises(ValueError, match="non-negative"):
        est.predict([-1])
