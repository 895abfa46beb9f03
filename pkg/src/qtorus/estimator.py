"""Scikit-learn style front door: fit a potential's torus geometry once,
predict eigenvalues for quantum numbers.

The class follows the sklearn estimator contract (get_params / set_params /
fit / predict, constructor stores parameters untouched) without importing
sklearn, so it composes with clone, pipelines and grid search when sklearn
is around, and stays dependency-free when it is not.
"""

from __future__ import annotations

import inspect

import numpy as np

from . import expr as ex
from .spectra import QuantizationConfig, build_pipeline, quantize


class NotFittedError(RuntimeError):
    pass


def _check_window(window):
    if window is None or len(window) != 2 or not window[0] < window[1]:
        raise ValueError("window must be a pair (e_min, e_max) with e_min < e_max")
    return float(window[0]), float(window[1])


class TorusQuantizer:
    """Semiclassical spectrum estimator for H = p^2/2 + V(q).

    Parameters
    ----------
    potential : str
        Hamiltonian in the expression grammar, e.g.
        ``"p1^2/2 + q1^2/2 + lambda*q1^4"``.
    window : (float, float)
        Energy window containing only librational orbits.
    hbar : float
        Quantization parameter.
    order : {0, 2}
        0 is the bare EBK rule, 2 adds the deformed-geometry correction.
    params : dict, optional
        Values for named parameters appearing in the potential.
    n_tau, n_s : int
        Chart grid resolution.
    mu_policy : {"maslov", "calibrated"}
        Action offset policy; "calibrated" is labelled non-paper and needs
        reference levels passed to fit.
    """

    def __init__(self, potential="p1^2/2 + q1^2/2", window=None, hbar=0.1,
                 order=2, params=None, n_tau=256, n_s=96,
                 mu_policy="maslov"):
        self.potential = potential
        self.window = window
        self.hbar = hbar
        self.order = order
        self.params = params
        self.n_tau = n_tau
        self.n_s = n_s
        self.mu_policy = mu_policy

    # -- sklearn estimator contract ------------------------------------
    @classmethod
    def _get_param_names(cls):
        sig = inspect.signature(cls.__init__)
        return sorted(p for p in sig.parameters if p != "self")

    def get_params(self, deep=True):
        return {name: getattr(self, name) for name in self._get_param_names()}

    def set_params(self, **kwargs):
        valid = set(self._get_param_names())
        for k, v in kwargs.items():
            if k not in valid:
                raise ValueError(f"invalid parameter {k!r} for TorusQuantizer")
            setattr(self, k, v)
        return self

    # -- fitting ---------------------------------------------------------
    def fit(self, X=None, y=None):
        """Build the chart and its quantum corrections.  X and y are
        ignored (the estimator is generative); present for API compat."""
        window = _check_window(self.window)
        if self.hbar <= 0:
            raise ValueError("hbar must be positive")
        if self.order not in (0, 2):
            raise ValueError("order must be 0 or 2")
        e = ex.parse(self.potential) if isinstance(self.potential, str) \
            else self.potential
        missing = ex.free_params(e) - set(self.params or {})
        if missing:
            raise ValueError(f"unbound potential parameters: {sorted(missing)}")
        self.pipeline_ = build_pipeline(e, window, env=self.params or {},
                                        n_tau=self.n_tau, n_s=self.n_s)
        self.chart_ = self.pipeline_["chart"]
        self.maslov_ = self.chart_.maslov
        return self

    def _require_fitted(self):
        if not hasattr(self, "pipeline_"):
            raise NotFittedError("call fit() before predict()")

    def predict(self, N):
        """Eigenvalue approximations E[N] for integer quantum numbers N."""
        self._require_fitted()
        N = np.atleast_1d(np.asarray(N, dtype=int))
        if np.any(N < 0):
            raise ValueError("quantum numbers must be non-negative")
        cfg = QuantizationConfig(hbar=self.hbar, n_min=int(N.min()),
                                 n_max=int(N.max()), order=self.order,
                                 mu_policy=self.mu_policy)
        st = quantize(self.pipeline_["ef"], self.pipeline_["ac"], cfg)
        lookup = {int(n): e for n, e in zip(st.n, st.column())}
        return np.array([lookup[int(n)] for n in N])

    def score(self, N, E_ref):
        """Negative max absolute error against reference levels."""
        return -float(np.max(np.abs(self.predict(N) - np.asarray(E_ref))))
