"""Receiver DSP: bandpass/shift, pilot carrier recovery, matched filter with
training-based timing, LMS equalization and shot-noise normalization.

The detected record holds the quantum signal at ``quantum_if_hz`` and the
pilot at ``pilot_if_hz``, both carrying the same carrier phase. Shifting
the filtered pilot down onto the quantum IF and multiplying the quantum
branch by its conjugate phasor removes the offset and the phase noise in
one step.
"""

import csv
import json
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np
from scipy import fft as sfft
from scipy.signal import correlate, fftconvolve, upfirdn

from ._validation import check_int, check_real
from .channel import bpd_response
from .equalizer import LMSEqualizer
from .estimation import calibrate_snu
from .exceptions import BandwidthError, LengthMismatchError, PilotLostError, SyncLostError
from .txchain import rrc_taps
from .waveform import WaveformBuffer

__all__ = [
    "RxConfig",
    "Branches",
    "RecoveredBlock",
    "bandpass_and_shift",
    "carrier_recovery",
    "matched_filter_downsample",
    "lms_equalize",
    "alice_quadratures",
    "Receiver",
    "genie_block",
]


@dataclass(frozen=True)
class RxConfig:
    sps: int = 10
    rolloff: float = 0.3
    span: int = 16
    quantum_if_hz: float = 750e6
    pilot_if_hz: float = 1.5e9
    quantum_bw_hz: float = 1.3e9
    pilot_bw_hz: float = 10e6
    bpd_bandwidth_hz: Optional[float] = 1.6e9  # response to undo; None for none
    pilot_smoothing: int = 1
    min_pilot_snr: float = 10.0
    max_lag_symbols: int = 32
    sync_threshold: float = 10.0
    eq_taps: int = 1
    eq_step: float = 1e-3
    eq_epochs: int = 3
    # rotate calibration records by the frame's pilot phasor too; statistically
    # neutral, but keeps their noise realization aligned with a reference receiver
    calibration_phasor: bool = False

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, record):
        return cls(**record)


@dataclass
class Branches:
    quantum: np.ndarray  # (2, n) complex, still at the quantum IF
    pilot: Optional[np.ndarray]  # (2, n) complex, shifted onto the quantum IF
    sample_rate: float
    quantum_if_hz: float
    pilot_power: float = 0.0
    pilot_noise_power: float = 0.0

    @property
    def pilot_snr(self):
        if self.pilot_noise_power <= 0:
            return np.inf
        return self.pilot_power / self.pilot_noise_power


@dataclass
class RecoveredBlock:
    symbols: np.ndarray  # (n, 2) equalized (x, p) in SNU
    training_mask: np.ndarray
    residual_freq_hz: float
    equalizer_taps: np.ndarray
    timing_offset: int = 0
    snu_scale: Optional[np.ndarray] = None
    v_ele_hat: Optional[np.ndarray] = None
    pilot_snr: float = float("nan")

    @property
    def payload(self):
        return self.symbols[~self.training_mask]

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["index", "x", "p", "is_training"])
            for i, ((x, p), tr) in enumerate(zip(self.symbols, self.training_mask)):
                w.writerow([i, repr(float(x)), repr(float(p)), int(tr)])

    def summary(self):
        out = {
            "n_symbols": int(self.symbols.shape[0]),
            "n_training": int(self.training_mask.sum()),
            "residual_freq_hz": float(self.residual_freq_hz),
            "timing_offset": int(self.timing_offset),
            "pilot_snr": float(self.pilot_snr),
            "equalizer_taps": np.asarray(self.equalizer_taps).tolist(),
        }
        if self.snu_scale is not None:
            out["snu_scale"] = np.asarray(self.snu_scale).tolist()
            out["v_ele_hat"] = np.asarray(self.v_ele_hat).tolist()
        return out

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.summary(), fh, indent=2)


def alice_quadratures(alpha):
    """Alice's ``(x, p)`` in SNU for amplitudes ``α``: ``(2 Re α, 2 Im α)``."""
    alpha = np.asarray(alpha)
    return np.column_stack([2 * alpha.real, 2 * alpha.imag])


def _band_mask(freqs, center, width):
    return np.abs(freqs - center) <= width / 2


def bandpass_and_shift(w, cfg=RxConfig(), pilot=True):
    """Split the record into the quantum band and the pilot band.

    Both are ideal frequency-domain filters. The quantum band also undoes
    the photodiode response, so the in-band noise stays white. The pilot
    branch is shifted by ``quantum_if - pilot_if`` onto the quantum IF.
    """
    fs = w.sample_rate
    for center, width in ((cfg.quantum_if_hz, cfg.quantum_bw_hz), (cfg.pilot_if_hz, cfg.pilot_bw_hz)):
        if abs(center) + width / 2 >= fs / 2:
            raise BandwidthError(f"band at {center / 1e6:.1f} MHz ± {width / 2e6:.1f} MHz is beyond Nyquist")
    n = w.n_samples
    spec = sfft.fft(w.as_array(), axis=1)
    f = sfft.fftfreq(n, 1 / fs)

    qmask = _band_mask(f, cfg.quantum_if_hz, cfg.quantum_bw_hz)
    qspec = np.zeros_like(spec)
    qspec[:, qmask] = spec[:, qmask] / bpd_response(f[qmask], cfg.bpd_bandwidth_hz, fs)
    quantum = sfft.ifft(qspec, axis=1)
    out = Branches(quantum=quantum, pilot=None, sample_rate=fs, quantum_if_hz=cfg.quantum_if_hz)
    if not pilot:
        return out

    pmask = _band_mask(f, cfg.pilot_if_hz, cfg.pilot_bw_hz)
    pspec = np.zeros_like(spec)
    pspec[:, pmask] = spec[:, pmask]
    p = sfft.ifft(pspec, axis=1)
    shift = cfg.quantum_if_hz - cfg.pilot_if_hz
    p *= np.exp(2j * np.pi * shift * np.arange(n) / fs)

    # noise floor from the flanks either side of the pilot band
    off = np.abs(f - cfg.pilot_if_hz)
    flank = (off > cfg.pilot_bw_hz) & (off <= 3 * cfg.pilot_bw_hz) & ~qmask
    out.pilot = p
    out.pilot_power = float(np.sum(np.abs(spec[:, pmask]) ** 2)) / n ** 2
    if flank.any():
        per_bin = np.sum(np.abs(spec[:, flank]) ** 2) / flank.sum() / n ** 2
        out.pilot_noise_power = float(per_bin * pmask.sum())
    return out


def _moving_average(x, n):
    if n <= 1:
        return x
    k = np.ones(n) / n
    return fftconvolve(x, k, mode="same")


def carrier_recovery(branches, cfg=RxConfig()):
    """Remove carrier offset and phase noise using the pilot.

    The two polarization branches of the pilot are combined along the
    principal eigenvector of their 2×2 coherence matrix, which tracks the
    pilot's polarization whatever the fiber did to it.

    Returns
    -------
    corrected : (2, n) complex baseband quantum branch
    residual_freq_hz : float
        Pilot frequency (after the nominal shift) minus the quantum IF.
    phasor : (n,) complex
        Unit carrier phasor that was removed.
    """
    if branches.pilot is None:
        raise PilotLostError("no pilot branch available")
    if branches.pilot_snr < cfg.min_pilot_snr:
        raise PilotLostError(f"pilot SNR {branches.pilot_snr:.3g} below {cfg.min_pilot_snr}")
    p = branches.pilot
    n = p.shape[1]
    coh = p @ p.conj().T / n
    _, vecs = np.linalg.eigh(coh)
    v = vecs[:, -1]
    r = v.conj() @ p
    mag = np.abs(r)
    if not np.all(mag > 0):
        raise PilotLostError("pilot amplitude vanishes")

    t = np.arange(n) / branches.sample_rate
    phase = np.unwrap(np.angle(r))
    slope = np.polyfit(t, phase, 1)[0]
    f_hat = slope / (2 * np.pi)
    residual = f_hat - branches.quantum_if_hz

    if cfg.pilot_smoothing > 1:
        carrier = np.exp(2j * np.pi * f_hat * t)
        r = _moving_average(r * carrier.conj(), cfg.pilot_smoothing) * carrier
    u = r / np.abs(r)
    return branches.quantum * u.conj(), float(residual), u


def _decimate(x, h, start, sps, n_symbols):
    """Samples ``start, start+sps, ...`` of the full convolution ``x * h`` (per row)."""
    z = (-start) % sps
    m0 = (start + z) // sps
    need = (m0 + n_symbols - 1) * sps + 1 - z
    if need > x.shape[1]:
        raise LengthMismatchError("record too short for the requested number of symbols")
    xp = x[:, :need]
    if z:
        xp = np.concatenate([np.zeros((x.shape[0], z), dtype=x.dtype), xp], axis=1)
    y = upfirdn(h, xp, 1, sps, axis=1)
    return y[:, m0:m0 + n_symbols]


def matched_filter_downsample(corrected, training, n_symbols, cfg=RxConfig(), offset=None, if_hz=0.0,
                              sample_rate=None):
    """RRC matched filter then decimation at the training-aligned phase.

    Parameters
    ----------
    corrected : (2, n) complex
        Baseband record, or a record still at ``if_hz`` (the filter taps
        are then moved to the IF and the output brought to baseband).
    training : complex array
        Known training preamble (any common scale).
    n_symbols : int
        Frame length in symbols.
    offset : int, optional
        Skip the search and decimate from this sample.
    if_hz, sample_rate : float
        IF of ``corrected`` and the record's sample rate (needed only when
        ``if_hz`` is non-zero).

    Returns
    -------
    streams : (n_symbols, 4) real
        Re/Im of pol-x then pol-y.
    offset : int
        Index of symbol 0 in the full matched-filter output.
    """
    n_symbols = check_int(n_symbols, "n_symbols", low=1)
    corrected = np.atleast_2d(corrected)
    h = rrc_taps(cfg.rolloff, cfg.span, cfg.sps).astype(np.complex128)
    w = 2 * np.pi * if_hz / sample_rate if if_hz else 0.0
    if if_hz:
        h = h * np.exp(1j * w * np.arange(h.size))

    if offset is None:
        training = np.asarray(training, dtype=np.complex128)
        if training.size == 0:
            raise SyncLostError("no training symbols to synchronize on")
        up = np.zeros((training.size - 1) * cfg.sps + 1, dtype=np.complex128)
        up[:: cfg.sps] = training
        seg_len = (cfg.span + cfg.max_lag_symbols) * cfg.sps + up.size
        if corrected.shape[1] < seg_len:
            raise SyncLostError("record shorter than the training search window")
        seg = fftconvolve(corrected[:, :seg_len], h[None, :], axes=1)[:, :seg_len]
        if if_hz:
            seg = seg * np.exp(-1j * w * np.arange(seg_len))
        metric = sum(np.abs(correlate(seg[b], up, mode="valid", method="fft")) ** 2 for b in range(2))
        offset = int(np.argmax(metric))
        floor = np.median(metric)
        if not floor > 0 or metric[offset] < cfg.sync_threshold * floor:
            raise SyncLostError(f"training correlation peak only {metric[offset] / max(floor, 1e-300):.3g}× the median")

    d = _decimate(corrected, h, offset, cfg.sps, n_symbols)
    if if_hz:
        d = d * np.exp(-1j * w * (offset + cfg.sps * np.arange(n_symbols)))
    return np.column_stack([d[0].real, d[0].imag, d[1].real, d[1].imag]), offset


def lms_equalize(streams, training_xp, n_training, taps=1, step=1e-3, n_epochs=3,
                 vacuum_streams=None, dark_streams=None):
    """Train the MIMO equalizer on the preamble and apply it to the frame.

    When vacuum and dark streams (same DSP, no signal) are given, each
    output is rescaled to shot-noise units through the same taps.
    """
    streams = np.asarray(streams, dtype=float)
    n_training = check_int(n_training, "n_training", low=1)
    eq = LMSEqualizer(n_taps=taps, step=step, n_epochs=n_epochs)
    eq.fit(streams[:n_training], np.asarray(training_xp, dtype=float)[:n_training])
    out = eq.transform(streams)
    mask = np.zeros(streams.shape[0], dtype=bool)
    mask[:n_training] = True
    block = RecoveredBlock(symbols=out, training_mask=mask, residual_freq_hz=0.0,
                           equalizer_taps=eq.coef_)
    if vacuum_streams is not None:
        vac = eq.transform(vacuum_streams)
        dark = eq.transform(dark_streams)
        cals = [calibrate_snu(vac[:, k], dark[:, k]) for k in range(out.shape[1])]
        scale = np.array([c.snu_scale for c in cals])
        block.symbols = out * np.sqrt(scale)
        block.snu_scale = scale
        block.v_ele_hat = np.array([c.v_ele for c in cals])
    return block


class Receiver:
    """Full DSP chain for one detected frame."""

    def __init__(self, cfg=RxConfig()):
        self.cfg = cfg

    def noise_streams(self, record, offset, n_symbols, phasor=None):
        """Push a calibration record through the same filters and sampling.

        Noise records carry no pilot, so the whole chain (quantum bandpass,
        response compensation, matched filter at the IF) runs as a single
        frequency-domain product; the nominal downconversion is applied at
        the symbol instants only. With ``phasor`` the record is instead
        rotated by ``conj(phasor)`` exactly like the signal.
        """
        cfg = self.cfg
        if phasor is not None:
            branches = bandpass_and_shift(record, cfg, pilot=False)
            s, _ = matched_filter_downsample(branches.quantum * phasor.conj(), None, n_symbols, cfg,
                                             offset=offset)
            return s
        fs, n = record.sample_rate, record.n_samples
        k = offset + cfg.sps * np.arange(check_int(n_symbols, "n_symbols", low=1))
        if k[-1] >= n:
            raise LengthMismatchError("record too short for the requested number of symbols")
        f = sfft.fftfreq(n, 1 / fs)
        mask = _band_mask(f, cfg.quantum_if_hz, cfg.quantum_bw_hz)
        h = rrc_taps(cfg.rolloff, cfg.span, cfg.sps)
        hq = h * np.exp(2j * np.pi * cfg.quantum_if_hz * np.arange(h.size) / fs)
        resp = sfft.fft(hq, n)[mask] / bpd_response(f[mask], cfg.bpd_bandwidth_hz, fs)
        spec = sfft.fft(record.as_array(), axis=1)
        filt = np.zeros_like(spec)
        if n % cfg.sps == 0:
            # sampling every sps-th point == folding the spectrum into n/sps bins
            bins = np.flatnonzero(mask)
            k0, j0 = offset % cfg.sps, offset // cfg.sps
            filt[:, mask] = spec[:, mask] * resp * np.exp(2j * np.pi * bins * k0 / n)
            folded = filt.reshape(2, cfg.sps, n // cfg.sps).sum(axis=1)
            d = sfft.ifft(folded, axis=1)[:, j0:j0 + k.size] / cfg.sps
        else:
            filt[:, mask] = spec[:, mask] * resp
            d = sfft.ifft(filt, axis=1)[:, k]
        d = d * np.exp(-2j * np.pi * cfg.quantum_if_hz * k / fs)
        return np.column_stack([d[0].real, d[0].imag, d[1].real, d[1].imag])

    def process(self, detected, training_alpha, n_symbols, vacuum=None, dark=None, pilot=True):
        cfg = self.cfg
        branches = bandpass_and_shift(detected, cfg, pilot=pilot)
        phasor = None
        if pilot:
            corrected, residual, phasor = carrier_recovery(branches, cfg)
            if_hz = 0.0
        else:
            corrected, residual, if_hz = branches.quantum, 0.0, branches.quantum_if_hz
        streams, offset = matched_filter_downsample(corrected, training_alpha, n_symbols, cfg,
                                                    if_hz=if_hz, sample_rate=detected.sample_rate)
        vac_s = dark_s = None
        if vacuum is not None:
            ph = phasor if cfg.calibration_phasor else None
            vac_s = self.noise_streams(vacuum, offset, n_symbols, ph)
            dark_s = self.noise_streams(dark, offset, n_symbols, ph)
        training_xp = alice_quadratures(training_alpha)
        block = lms_equalize(streams, training_xp, len(training_alpha), cfg.eq_taps, cfg.eq_step,
                             cfg.eq_epochs, vac_s, dark_s)
        block.residual_freq_hz = residual
        block.timing_offset = offset
        block.pilot_snr = branches.pilot_snr if pilot else float("nan")
        return block


def genie_block(detected, state, tx_shift_hz, n_symbols, n_training, vacuum, dark, cfg=RxConfig()):
    """Reference receiver that knows the true carrier phase and polarization.

    Same bandpass, response compensation, matched filter and calibration
    as :class:`Receiver`, but the carrier and Jones rotation are undone
    with the channel's ground truth and no equalizer is trained. Comparing
    its estimate with the DSP's on the same record isolates the penalty
    added by carrier recovery, timing and equalization.
    """
    offset = cfg.span * cfg.sps
    fs = detected.sample_rate
    undo_tx = np.exp(-2j * np.pi * tx_shift_hz * np.arange(detected.n_samples) / fs)

    # calibration records get the same de-rotation so their noise lines up with the signal's
    def streams(record):
        branches = bandpass_and_shift(record, cfg, pilot=False)
        field = state.inverse(WaveformBuffer.from_array(fs, branches.quantum))
        out, _ = matched_filter_downsample(field.as_array() * undo_tx, None, n_symbols, cfg, offset=offset)
        return out

    sig = streams(detected)
    vac = streams(vacuum)
    drk = streams(dark)
    cals = [calibrate_snu(vac[:, k], drk[:, k]) for k in (0, 1)]
    scale = np.array([c.snu_scale for c in cals])
    mask = np.zeros(n_symbols, dtype=bool)
    mask[:n_training] = True
    return RecoveredBlock(symbols=sig[:, :2] * np.sqrt(scale), training_mask=mask,
                          residual_freq_hz=0.0, equalizer_taps=np.eye(2, 4), timing_offset=offset,
                          snu_scale=scale, v_ele_hat=np.array([c.v_ele for c in cals]))
