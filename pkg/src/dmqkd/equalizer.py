"""Real-valued 4×2 MIMO FIR equalizer adapted by LMS.

Inputs are the four symbol-rate streams (Re/Im of both polarization
branches); outputs are Alice's two quadratures. Inputs are standardized
before adaptation so a single step size behaves the same at every link
loss, and the reported taps are averaged over the later epochs (Polyak
averaging), which removes the LMS misadjustment noise that would
otherwise show up as excess noise.
"""

import numpy as np
from numba import njit
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from ._validation import check_int, check_real
from .exceptions import InvalidParameterError, LengthMismatchError, StepSizeError

__all__ = ["LMSEqualizer", "tapped_features"]


def tapped_features(X, n_taps):
    """Stack ``n_taps`` centred delayed copies of each column (zero padded)."""
    n, m = X.shape
    half = n_taps // 2
    padded = np.vstack([np.zeros((half, m)), X, np.zeros((half, m))])
    cols = [padded[k:k + n] for k in range(n_taps)]
    return np.hstack(cols)


@njit(cache=True)
def _lms(F, Y, mu, n_epochs, avg_from, window, factor):
    n, p = F.shape
    q = Y.shape[1]
    W = np.zeros((q, p))
    Wsum = np.zeros((q, p))
    count = 0
    ref = -1.0
    acc = 0.0
    k = 0
    e = np.zeros(q)
    for ep in range(n_epochs):
        for i in range(n):
            for o in range(q):
                s = Y[i, o]
                for j in range(p):
                    s -= W[o, j] * F[i, j]
                e[o] = s
            for o in range(q):
                g = mu * e[o]
                for j in range(p):
                    W[o, j] += g * F[i, j]
                acc += e[o] * e[o]
            k += 1
            if k == window:
                m = acc / window
                if not np.isfinite(m):
                    return W, Wsum, count, 1
                if ref < 0:
                    ref = m
                elif m > factor * ref:
                    return W, Wsum, count, 1
                acc = 0.0
                k = 0
            if ep >= avg_from:
                for o in range(q):
                    for j in range(p):
                        Wsum[o, j] += W[o, j]
                count += 1
    return W, Wsum, count, 0


class LMSEqualizer(TransformerMixin, BaseEstimator):
    """Least-mean-square MIMO FIR equalizer.

    Parameters
    ----------
    n_taps : int
        Odd FIR length per input stream.
    step : float
        LMS step size on standardized inputs.
    n_epochs : int
        Passes over the training data.
    burn_in_epochs : int
        Epochs excluded from the tap average. With ``average=False`` the
        last iterate is used instead.
    divergence_window, divergence_factor
        Mean squared error over a window growing beyond ``factor`` times
        the first window's raises :class:`StepSizeError`.
    """

    def __init__(self, n_taps=1, step=1e-3, n_epochs=3, burn_in_epochs=1, average=True,
                 divergence_window=1000, divergence_factor=100.0):
        self.n_taps = n_taps
        self.step = step
        self.n_epochs = n_epochs
        self.burn_in_epochs = burn_in_epochs
        self.average = average
        self.divergence_window = divergence_window
        self.divergence_factor = divergence_factor

    def _check_params(self):
        taps = check_int(self.n_taps, "n_taps", low=1)
        if taps % 2 == 0:
            raise InvalidParameterError(f"n_taps must be odd, got {taps}")
        step = check_real(self.step, "step", low=0.0, low_inclusive=False)
        epochs = check_int(self.n_epochs, "n_epochs", low=1)
        burn = check_int(self.burn_in_epochs, "burn_in_epochs", low=0)
        if self.average and burn >= epochs:
            raise InvalidParameterError("burn_in_epochs must be smaller than n_epochs")
        return taps, step, epochs, burn

    def fit(self, X, y):
        taps, step, epochs, burn = self._check_params()
        X = check_array(X, dtype=np.float64)
        y = check_array(y, dtype=np.float64, ensure_2d=True)
        if X.shape[0] != y.shape[0]:
            raise LengthMismatchError(f"{X.shape[0]} input rows vs {y.shape[0]} training rows")
        self.n_features_in_ = X.shape[1]
        self.n_outputs_ = y.shape[1]
        scale = X.std(axis=0)
        scale[scale == 0] = 1.0
        self.input_scale_ = scale
        F = tapped_features(X / scale, taps)
        W, Wsum, count, status = _lms(
            np.ascontiguousarray(F), np.ascontiguousarray(y), step, epochs,
            burn if self.average else epochs, int(self.divergence_window), float(self.divergence_factor),
        )
        if status:
            raise StepSizeError(f"LMS diverged with step {step}; reduce the step size")
        Wn = Wsum / count if (self.average and count) else W
        self.coef_ = Wn / np.tile(scale, taps)
        return self

    def transform(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise LengthMismatchError(f"expected {self.n_features_in_} streams, got {X.shape[1]}")
        return tapped_features(X, self.n_taps) @ self.coef_.T

    def center_taps(self):
        """``(n_outputs, n_streams)`` matrix of the centre tap."""
        check_is_fitted(self, "coef_")
        m = self.n_features_in_
        c = self.n_taps // 2
        return self.coef_[:, c * m:(c + 1) * m]
