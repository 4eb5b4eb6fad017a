"""Fiber link and coherent detector.

Field units: one vacuum unit is variance 1 per quadrature. The link scales
the field by ``√T``, applies the common carrier rotation (frequency offset
plus Wiener phase noise), rotates the polarization and adds white excess
noise of ``T·ξ/2`` per quadrature. The detector scales by ``√η``, adds shot
noise (1 per quadrature) and electronic noise (``v_ele`` per quadrature),
then the whole record passes through the photodiode's single-pole response
(a first-order IIR filter with a real impulse response).
"""

from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np
from scipy.signal import lfilter

from ._validation import as_rng, check_real
from .waveform import WaveformBuffer

__all__ = [
    "ChannelParams",
    "DetectorParams",
    "ChannelState",
    "transmittance",
    "apply_channel",
    "detect",
    "bpd_response",
    "vacuum_record",
    "dark_record",
]


def transmittance(distance_km, atten_db_per_km=0.2):
    return 10 ** (-atten_db_per_km * distance_km / 10)


@dataclass(frozen=True)
class ChannelParams:
    distance_km: float = 0.0
    atten_db_per_km: float = 0.2
    excess_noise_snu: float = 0.0
    tx_linewidth_hz: float = 100.0
    lo_linewidth_hz: float = 100.0
    freq_offset_hz: float = 1.5e9
    initial_phase: float = 0.0
    pol_angle: float = 0.0
    pol_drift_rad_s: float = 1.0

    def __post_init__(self):
        check_real(self.distance_km, "distance_km", low=0.0)
        check_real(self.atten_db_per_km, "atten_db_per_km", low=0.0)
        check_real(self.excess_noise_snu, "excess_noise_snu", low=0.0)
        check_real(self.tx_linewidth_hz, "tx_linewidth_hz", low=0.0)
        check_real(self.lo_linewidth_hz, "lo_linewidth_hz", low=0.0)
        for name in ("freq_offset_hz", "initial_phase", "pol_angle", "pol_drift_rad_s"):
            check_real(getattr(self, name), name)

    @property
    def transmittance(self):
        return transmittance(self.distance_km, self.atten_db_per_km)

    @classmethod
    def ideal(cls, distance_km=0.0, excess_noise_snu=0.0):
        """No phase noise, no offset, fixed identity polarization."""
        return cls(distance_km=distance_km, excess_noise_snu=excess_noise_snu,
                   tx_linewidth_hz=0.0, lo_linewidth_hz=0.0, freq_offset_hz=0.0,
                   pol_drift_rad_s=0.0)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, record):
        return cls(**record)


@dataclass(frozen=True)
class DetectorParams:
    eta: float = 0.56
    v_ele_snu: float = 0.15
    bpd_bandwidth_hz: Optional[float] = 1.6e9
    raw_gain: float = 1.0

    def __post_init__(self):
        check_real(self.eta, "eta", low=0.0, high=1.0, low_inclusive=False)
        check_real(self.v_ele_snu, "v_ele_snu", low=0.0)
        if self.bpd_bandwidth_hz is not None:
            check_real(self.bpd_bandwidth_hz, "bpd_bandwidth_hz", low=0.0, low_inclusive=False)
        check_real(self.raw_gain, "raw_gain", low=0.0, low_inclusive=False)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, record):
        return cls(**record)


@dataclass(frozen=True)
class ChannelState:
    """Ground truth of one channel realization, for genie-aided checks."""

    transmittance: float
    carrier_phase: np.ndarray  # 2π Δf t + φ(t), radians
    pol_angle: np.ndarray  # Jones rotation angle per sample

    def inverse(self, w):
        """Undo the carrier rotation and polarization rotation on ``w``."""
        c, s = np.cos(self.pol_angle), np.sin(self.pol_angle)
        x = c * w.pol_x + s * w.pol_y
        y = -s * w.pol_x + c * w.pol_y
        rot = np.exp(-1j * self.carrier_phase)
        return WaveformBuffer(w.sample_rate, x * rot, y * rot)


def _complex_noise(rng, shape, var_per_quadrature):
    if var_per_quadrature == 0:
        return np.zeros(shape, dtype=np.complex128)
    out = rng.standard_normal(shape + (2,)).view(np.complex128)[..., 0]
    out *= np.sqrt(var_per_quadrature)
    return out


def apply_channel(w, ch, rng_seed=None, return_state=False):
    """Propagate ``w`` through the link. Shot noise is added by :func:`detect`."""
    rng = as_rng(rng_seed)
    n, fs = w.n_samples, w.sample_rate
    t = w.time
    T = ch.transmittance

    phase_var = 2 * np.pi * (ch.tx_linewidth_hz + ch.lo_linewidth_hz) / fs
    if phase_var > 0:
        steps = rng.standard_normal(n) * np.sqrt(phase_var)
        steps[0] = 0.0
        phi = np.cumsum(steps)
    else:
        phi = np.zeros(n)
    theta = 2 * np.pi * ch.freq_offset_hz * t + ch.initial_phase + phi
    rot = np.exp(1j * theta)
    ex = np.sqrt(T) * w.pol_x * rot
    ey = np.sqrt(T) * w.pol_y * rot

    angle = ch.pol_angle + ch.pol_drift_rad_s * t
    c, s = np.cos(angle), np.sin(angle)
    out_x = c * ex - s * ey
    out_y = s * ex + c * ey

    noise = _complex_noise(rng, (2, n), T * ch.excess_noise_snu / 2)
    out = WaveformBuffer(fs, out_x + noise[0], out_y + noise[1])
    if return_state:
        return out, ChannelState(T, theta, angle)
    return out


def _pole(bandwidth_hz, sample_rate):
    return np.exp(-2 * np.pi * bandwidth_hz / sample_rate)


def bpd_response(freqs_hz, bandwidth_hz, sample_rate=None):
    """Single-pole photodiode response.

    Without ``sample_rate`` this is the analog ``1 / (1 + j f / f_c)``. With
    it, the response of the impulse-invariant discrete filter that
    :func:`detect` actually applies, ``(1-a) / (1 - a e^{-j2πf/fs})`` with
    ``a = exp(-2π f_c / fs)``; both have unit DC gain.
    """
    freqs_hz = np.asarray(freqs_hz, dtype=float)
    if bandwidth_hz is None:
        return np.ones(freqs_hz.shape, dtype=np.complex128)
    if sample_rate is None:
        return 1.0 / (1.0 + 1j * freqs_hz / bandwidth_hz)
    a = _pole(bandwidth_hz, sample_rate)
    return (1 - a) / (1 - a * np.exp(-2j * np.pi * freqs_hz / sample_rate))


def detect(w, det, rng_seed=None, lo_on=True, noiseless=False):
    """Heterodyne record of both polarization branches, in raw units.

    With ``lo_on=False`` the output is the dark record: electronic noise
    only, whatever the input field. ``noiseless=True`` drops shot and
    electronic noise (for distortion measurements).
    """
    rng = as_rng(rng_seed)
    shape = (2, w.n_samples)
    # shot and electronic noise are independent Gaussians: one draw of the summed variance
    if noiseless:
        field = np.sqrt(det.eta) * w.as_array() if lo_on else np.zeros(shape, dtype=np.complex128)
    elif lo_on:
        field = np.sqrt(det.eta) * w.as_array() + _complex_noise(rng, shape, 1.0 + det.v_ele_snu)
    else:
        field = _complex_noise(rng, shape, det.v_ele_snu)
    if det.bpd_bandwidth_hz is not None:
        a = _pole(det.bpd_bandwidth_hz, w.sample_rate)
        field = lfilter([1 - a], [1.0, -a], field, axis=1)
    return WaveformBuffer.from_array(w.sample_rate, det.raw_gain * field)


def vacuum_record(n_samples, sample_rate, det, rng_seed=None):
    """LO on, signal blocked."""
    return detect(WaveformBuffer.zeros(sample_rate, n_samples), det, rng_seed, lo_on=True)


def dark_record(n_samples, sample_rate, det, rng_seed=None):
    """LO off."""
    return detect(WaveformBuffer.zeros(sample_rate, n_samples), det, rng_seed, lo_on=False)
