"""Transmitter: frame assembly, RRC pulse shaping, frequency shift and pilot.

Symbols are coherent-state amplitudes ``α``. On the optical field they are
carried as ``√2·α`` so that, in shot-noise units, a field quadrature of
variance 1 is one vacuum unit and ``2 Re α`` is Alice's x quadrature.
"""

from dataclasses import asdict, dataclass

import numpy as np
from scipy.fft import next_fast_len
from scipy.signal import fftconvolve

from ._validation import as_rng, check_int, check_real
from .exceptions import BandwidthError, InvalidParameterError, LengthMismatchError
from .shaping import shape_block
from .waveform import WaveformBuffer

__all__ = [
    "FIELD_PER_ALPHA",
    "FrameLayout",
    "Frame",
    "TxConfig",
    "rrc_taps",
    "training_symbols",
    "build_frame",
    "modulate",
    "add_pilot",
    "transmit",
]

FIELD_PER_ALPHA = np.sqrt(2.0)


@dataclass(frozen=True)
class FrameLayout:
    """Training preamble followed by payload."""

    n_training: int
    n_payload: int

    def __post_init__(self):
        check_int(self.n_training, "n_training", low=0)
        check_int(self.n_payload, "n_payload", low=0)
        if self.n_training + self.n_payload == 0:
            raise LengthMismatchError("frame must hold at least one symbol")

    @classmethod
    def from_ratio(cls, n_symbols, p_ts=0.2):
        """Layout with ``round(p_ts * n_symbols)`` training symbols."""
        n_symbols = check_int(n_symbols, "n_symbols", low=1)
        p_ts = check_real(p_ts, "p_ts", low=0.0, high=1.0, high_inclusive=False)
        n_train = int(round(p_ts * n_symbols))
        return cls(n_train, n_symbols - n_train)

    @property
    def n_symbols(self):
        return self.n_training + self.n_payload

    @property
    def training_ratio(self):
        return self.n_training / self.n_symbols

    def training_mask(self):
        mask = np.zeros(self.n_symbols, dtype=bool)
        mask[: self.n_training] = True
        return mask


@dataclass(frozen=True)
class Frame:
    layout: FrameLayout
    symbols: np.ndarray

    @property
    def training(self):
        return self.symbols[: self.layout.n_training]

    @property
    def payload(self):
        return self.symbols[self.layout.n_training:]


@dataclass(frozen=True)
class TxConfig:
    sample_rate: float = 10e9
    sps: int = 10
    rolloff: float = 0.3
    span: int = 16
    shift_hz: float = -750e6
    pilot_db: float = 20.0
    pilot_freq_hz: float = 0.0
    pilot: bool = True

    @property
    def symbol_rate(self):
        return self.sample_rate / self.sps

    def to_dict(self):
        return asdict(self)


def rrc_taps(rolloff, span_symbols, sps):
    """Unit-energy root-raised-cosine impulse response, ``span*sps + 1`` taps."""
    beta = check_real(rolloff, "rolloff", low=0.0, high=1.0, low_inclusive=False)
    span = check_int(span_symbols, "span_symbols")
    sps = check_int(sps, "sps")
    if span < 4:
        raise InvalidParameterError(f"span must be >= 4 symbols, got {span}")
    if sps < 2:
        raise InvalidParameterError(f"sps must be >= 2, got {sps}")

    t = (np.arange(span * sps + 1) - span * sps / 2) / sps
    h = np.empty_like(t)
    at_zero = np.isclose(t, 0.0)
    at_pole = np.isclose(np.abs(t), 1 / (4 * beta))
    rest = ~(at_zero | at_pole)
    tr = t[rest]
    h[rest] = (np.sin(np.pi * tr * (1 - beta)) + 4 * beta * tr * np.cos(np.pi * tr * (1 + beta))) / (
        np.pi * tr * (1 - (4 * beta * tr) ** 2)
    )
    h[at_zero] = 1 - beta + 4 * beta / np.pi
    h[at_pole] = beta / np.sqrt(2) * (
        (1 + 2 / np.pi) * np.sin(np.pi / (4 * beta)) + (1 - 2 / np.pi) * np.cos(np.pi / (4 * beta))
    )
    return h / np.sqrt(np.sum(h * h))


def training_symbols(c, n, seed):
    """I.i.d. draws from ``c`` (the receiver regenerates them from ``seed``)."""
    rng = as_rng(seed)
    idx = rng.choice(len(c.points), size=check_int(n, "n", low=0), p=c.probabilities)
    return c.points[idx]


def build_frame(c, layout, payload_source, training_seed, ccdm_length=1024):
    """Training preamble plus CCDM-shaped payload, as amplitudes ``α``."""
    train = training_symbols(c, layout.n_training, training_seed)
    if layout.n_payload:
        payload = shape_block(c, layout.n_payload, payload_source, ccdm_length=ccdm_length)
    else:
        payload = np.zeros(0, dtype=np.complex128)
    return Frame(layout, np.concatenate([train, payload]))


def _check_band(center_hz, half_width_hz, sample_rate):
    if abs(center_hz) + half_width_hz >= sample_rate / 2:
        raise BandwidthError(
            f"band {center_hz / 1e6:.1f} ± {half_width_hz / 1e6:.1f} MHz exceeds Nyquist "
            f"({sample_rate / 2e6:.1f} MHz)"
        )


def modulate(symbols, sps=10, shift_hz=0.0, sample_rate=10e9, rolloff=0.3, span=16, layout=None):
    """Upsample, RRC-shape and frequency-shift a symbol stream onto pol_x.

    The output keeps the full filter tails (``len(symbols)*sps + span*sps``
    samples) and is zero padded up to an FFT-friendly multiple of ``sps``. Symbol ``k``
    is centred on sample ``k*sps + span*sps/2``.
    """
    symbols = np.asarray(symbols, dtype=np.complex128)
    if symbols.ndim != 1 or symbols.size == 0:
        raise LengthMismatchError("symbols must be a non-empty 1-D array")
    if layout is not None and layout.n_symbols != symbols.size:
        raise LengthMismatchError(f"layout expects {layout.n_symbols} symbols, got {symbols.size}")
    sample_rate = check_real(sample_rate, "sample_rate", low=0.0, low_inclusive=False)
    sps = check_int(sps, "sps", low=2)
    _check_band(shift_hz, (1 + rolloff) / 2 * sample_rate / sps, sample_rate)

    h = rrc_taps(rolloff, span, sps)
    up = np.zeros(symbols.size * sps, dtype=np.complex128)
    up[::sps] = symbols
    x = fftconvolve(up, h)[: symbols.size * sps + h.size - 1]
    n_out = sps * next_fast_len(-(-x.size // sps))
    x = np.concatenate([x, np.zeros(n_out - x.size, dtype=x.dtype)])
    if shift_hz:
        x = x * np.exp(2j * np.pi * shift_hz * np.arange(x.size) / sample_rate)
    return WaveformBuffer(sample_rate, x, np.zeros_like(x))


def add_pilot(w, pilot_power_ratio_db, pilot_freq_hz=0.0):
    """Put a CW tone on pol_y at ``pilot_power_ratio_db`` above pol_x's mean power."""
    if abs(pilot_freq_hz) >= w.sample_rate / 2:
        raise BandwidthError(f"pilot at {pilot_freq_hz} Hz is beyond Nyquist")
    p_x, _ = w.power()
    amp = np.sqrt(p_x * 10 ** (pilot_power_ratio_db / 10))
    tone = amp * np.exp(2j * np.pi * pilot_freq_hz * w.time)
    return WaveformBuffer(w.sample_rate, w.pol_x, tone)


def transmit(frame, cfg=TxConfig()):
    """Field waveform for ``frame``: shaped quantum signal plus optional pilot."""
    w = modulate(FIELD_PER_ALPHA * frame.symbols, sps=cfg.sps, shift_hz=cfg.shift_hz,
                 sample_rate=cfg.sample_rate, rolloff=cfg.rolloff, span=cfg.span,
                 layout=frame.layout)
    if cfg.pilot:
        w = add_pilot(w, cfg.pilot_db, cfg.pilot_freq_hz)
    return w
