"""scikit-learn style wrappers around the convergence models.

Inputs are arrays of rows ``(W, alpha, b_thres)``; predictions are firing
cycles.  The analytic models have no free parameters, so ``fit`` only
records the feature count; the order conjecture learns its scale.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .analytic import _order_conjecture_raw, estimate_cycles
from .core import ProtocolParams
from .stats import fit_scale


def _rows(X) -> np.ndarray:
    X = check_array(X, dtype=float)
    if X.shape[1] != 3:
        raise ValueError(f"expected rows (W, alpha, b_thres), got {X.shape[1]} columns")
    return X


class ConvergenceModel(RegressorMixin, BaseEstimator):
    """Model-predicted firing cycles to steady state for DESYNC or PCO."""

    def __init__(self, protocol="desync", c_conf=0.9999, sigma_delta_seconds=0.34e-3, T=1.0,
                 pco_mode="cycle"):
        self.protocol = protocol
        self.c_conf = c_conf
        self.sigma_delta_seconds = sigma_delta_seconds
        self.T = T
        self.pco_mode = pco_mode

    def fit(self, X, y=None):
        self.n_features_in_ = _rows(X).shape[1]
        return self

    def _params(self, row) -> ProtocolParams:
        W, alpha, b = row
        return ProtocolParams(int(W), float(alpha), float(b), c_conf=self.c_conf, T=self.T,
                              sigma_delta_seconds=self.sigma_delta_seconds)

    def predict_estimates(self, X) -> list:
        check_is_fitted(self)
        return [estimate_cycles(self._params(r), self.protocol, self.pco_mode) for r in _rows(X)]

    def predict(self, X) -> np.ndarray:
        return np.array([e.cycles for e in self.predict_estimates(X)], dtype=float)


class OrderConjectureRegressor(RegressorMixin, BaseEstimator):
    """``scale * W^2 ln(1/b) / alpha`` with ``scale`` fitted by least squares."""

    def fit(self, X, y):
        X = _rows(X)
        y = np.asarray(y, dtype=float)
        self.scale_ = fit_scale(self._raw(X), y)
        self.n_features_in_ = X.shape[1]
        return self

    @staticmethod
    def _raw(X) -> np.ndarray:
        return np.array([_order_conjecture_raw(int(W), a, b) for W, a, b in X])

    def predict(self, X) -> np.ndarray:
        check_is_fitted(self)
        return self.scale_ * self._raw(_rows(X))
