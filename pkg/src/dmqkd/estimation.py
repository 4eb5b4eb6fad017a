"""Shot-noise calibration and linear-channel parameter estimation.

Per quadrature Bob sees ``y = t·x + z`` with ``x`` Alice's quadrature in
SNU, ``t² = ηT/2`` (the heterodyne split gives the factor 1/2) and
``Var z = 1 + v_ele + (ηT/2)·ξ``. Both quadratures share ``t`` and are
pooled.
"""

from dataclasses import asdict, dataclass

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_int, check_quadratures, check_real
from .exceptions import (
    CalibrationError,
    ChannelEstimationError,
    DegenerateInputError,
    LengthMismatchError,
)

__all__ = [
    "CalibrationResult",
    "EstimationResult",
    "calibrate_snu",
    "LinearChannelEstimator",
    "estimate_channel",
    "simulate_linear_channel",
    "excess_noise_series",
]


@dataclass(frozen=True)
class CalibrationResult:
    snu_scale: float  # multiply raw variances by this to get SNU
    v_ele: float


@dataclass(frozen=True)
class EstimationResult:
    snu_scale: float
    t_hat: float
    transmittance_hat: float
    xi_hat_snu: float
    var_z_hat: float
    n_used: int
    t_std_error: float
    transmittance_std_error: float
    xi_std_error: float

    def to_dict(self):
        return asdict(self)


def _variance(record):
    arr = np.asarray(record)
    if np.iscomplexobj(arr):
        arr = np.concatenate([arr.real.ravel(), arr.imag.ravel()])
    arr = np.asarray(arr, dtype=float).ravel()
    if arr.size < 2:
        raise CalibrationError("calibration record needs at least two samples")
    return float(np.var(arr))


def calibrate_snu(vacuum_record, dark_record):
    """Scale that maps ``Var(vacuum) - Var(dark)`` to one shot-noise unit.

    Records are quadrature samples (real arrays of any shape, or complex);
    all quadratures are pooled.
    """
    v_vac = _variance(vacuum_record)
    v_dark = _variance(dark_record)
    if v_vac <= v_dark:
        raise CalibrationError(f"vacuum variance {v_vac:.4g} does not exceed dark variance {v_dark:.4g}")
    scale = 1.0 / (v_vac - v_dark)
    return CalibrationResult(snu_scale=scale, v_ele=v_dark * scale)


class LinearChannelEstimator(RegressorMixin, BaseEstimator):
    """Fit ``y = t·x + z`` on paired (x, p) symbols.

    Parameters
    ----------
    eta : float
        Detector efficiency, used to turn ``t`` into a transmittance.
    v_ele : float
        Electronic noise in SNU, subtracted with the shot noise.
    min_samples : int
        Fewest symbol pairs accepted.

    Attributes
    ----------
    t_, var_z_, transmittance_, xi_ : float
    t_se_, transmittance_se_, xi_se_ : float
        Delta-method standard errors.
    """

    def __init__(self, eta=0.56, v_ele=0.15, min_samples=10_000):
        self.eta = eta
        self.v_ele = v_ele
        self.min_samples = min_samples

    def fit(self, X, y):
        eta = check_real(self.eta, "eta", low=0.0, high=1.0, low_inclusive=False)
        v_ele = check_real(self.v_ele, "v_ele", low=0.0)
        n_min = check_int(self.min_samples, "min_samples", low=1)
        X = check_quadratures(X, "sent")
        y = check_quadratures(y, "received")
        if X.shape[0] != y.shape[0]:
            raise LengthMismatchError(f"{X.shape[0]} sent vs {y.shape[0]} received symbols")
        if X.shape[0] < n_min:
            raise LengthMismatchError(f"need at least {n_min} symbols, got {X.shape[0]}")

        x = X.ravel()
        yy = y.ravel()
        n = x.size
        var_x = float(np.var(x))
        if var_x <= 0:
            raise DegenerateInputError("sent symbols have zero variance")
        xc = x - x.mean()
        yc = yy - yy.mean()
        t = float(np.dot(xc, yc) / n / var_x)
        var_z = float(np.var(yy) - t * t * var_x)
        T = 2 * t * t / eta
        if t <= 0:
            raise ChannelEstimationError(f"estimated gain {t:.4g} is not positive")
        xi = (var_z - 1.0 - v_ele) / (t * t)

        var_t = var_z / (n * var_x)
        var_vz = 2 * var_z ** 2 / n
        dxi_dvz = 1 / t ** 2
        dxi_dt = -2 * (var_z - 1.0 - v_ele) / t ** 3
        self.t_ = t
        self.var_z_ = var_z
        self.transmittance_ = T
        self.xi_ = xi
        self.n_used_ = n // 2
        self.t_se_ = float(np.sqrt(var_t))
        self.transmittance_se_ = 4 * t / eta * self.t_se_
        self.xi_se_ = float(np.sqrt(dxi_dvz ** 2 * var_vz + dxi_dt ** 2 * var_t))
        self.n_features_in_ = 2
        return self

    def predict(self, X):
        check_is_fitted(self, "t_")
        return self.t_ * check_quadratures(X, "sent")

    def result(self, snu_scale=1.0):
        check_is_fitted(self, "t_")
        return EstimationResult(
            snu_scale=float(snu_scale),
            t_hat=self.t_,
            transmittance_hat=self.transmittance_,
            xi_hat_snu=self.xi_,
            var_z_hat=self.var_z_,
            n_used=self.n_used_,
            t_std_error=self.t_se_,
            transmittance_std_error=self.transmittance_se_,
            xi_std_error=self.xi_se_,
        )


def estimate_channel(sent, received, eta, v_ele, snu_scale=1.0, min_samples=10_000):
    """Functional wrapper around :class:`LinearChannelEstimator`."""
    est = LinearChannelEstimator(eta=eta, v_ele=v_ele, min_samples=min_samples).fit(sent, received)
    return est.result(snu_scale)


def simulate_linear_channel(x, transmittance, xi, eta, v_ele, rng):
    """Draw ``y = t·x + z`` directly from the linear model (no waveforms)."""
    x = check_quadratures(x, "x")
    t = np.sqrt(eta * transmittance / 2)
    sd = np.sqrt(1 + v_ele + t * t * xi)
    return t * x + sd * rng.standard_normal(x.shape)


def excess_noise_series(acquire, n_tests):
    """Run ``acquire(i)`` for ``i < n_tests``; each call returns an
    :class:`EstimationResult`. Returns ``(xi_values, results)``."""
    n_tests = check_int(n_tests, "n_tests", low=1)
    results = [acquire(i) for i in range(n_tests)]
    return np.array([r.xi_hat_snu for r in results]), results
