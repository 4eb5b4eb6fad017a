"""Dual-polarization sampled field and the CVQW file format.

CVQW layout (little-endian throughout)::

    offset 0   4 bytes   magic b"CVQW"
    offset 4   u16       version (1)
    offset 6   u16       channel count (2 polarizations)
    offset 8   f64       sample rate in Hz
    offset 16  f64 × 4n  Ix, Qx, Iy, Qy per sample
"""

import struct
from dataclasses import dataclass

import numpy as np

from ._validation import check_complex_1d, check_real
from .exceptions import ConfigurationError, InvalidParameterError, LengthMismatchError

__all__ = ["WaveformBuffer", "write_cvqw", "read_cvqw", "CVQW_MAGIC", "CVQW_VERSION"]

CVQW_MAGIC = b"CVQW"
CVQW_VERSION = 1
_HEADER = struct.Struct("<4sHHd")


@dataclass(frozen=True)
class WaveformBuffer:
    """Complex baseband-equivalent field samples on two polarizations."""

    sample_rate: float
    pol_x: np.ndarray
    pol_y: np.ndarray

    def __post_init__(self):
        fs = check_real(self.sample_rate, "sample_rate", low=0.0, low_inclusive=False)
        x = check_complex_1d(self.pol_x, "pol_x")
        y = check_complex_1d(self.pol_y, "pol_y")
        if x.shape != y.shape:
            raise LengthMismatchError(f"pol_x has {x.size} samples but pol_y has {y.size}")
        object.__setattr__(self, "sample_rate", fs)
        object.__setattr__(self, "pol_x", x)
        object.__setattr__(self, "pol_y", y)

    @classmethod
    def from_array(cls, sample_rate, array):
        """Build from a ``(2, n)`` complex array."""
        array = np.asarray(array)
        if array.ndim != 2 or array.shape[0] != 2:
            raise InvalidParameterError(f"expected shape (2, n), got {array.shape}")
        return cls(sample_rate, array[0], array[1])

    @classmethod
    def zeros(cls, sample_rate, n_samples):
        z = np.zeros(n_samples, dtype=np.complex128)
        return cls(sample_rate, z, z.copy())

    def as_array(self):
        return np.vstack([self.pol_x, self.pol_y])

    @property
    def n_samples(self):
        return self.pol_x.size

    @property
    def time(self):
        return np.arange(self.n_samples) / self.sample_rate

    def power(self):
        """Mean power per polarization, ``(P_x, P_y)``."""
        return float(np.mean(np.abs(self.pol_x) ** 2)), float(np.mean(np.abs(self.pol_y) ** 2))

    def energy(self):
        return float(np.sum(np.abs(self.pol_x) ** 2) + np.sum(np.abs(self.pol_y) ** 2))


def write_cvqw(path, w):
    data = np.empty((w.n_samples, 4), dtype="<f8")
    data[:, 0] = w.pol_x.real
    data[:, 1] = w.pol_x.imag
    data[:, 2] = w.pol_y.real
    data[:, 3] = w.pol_y.imag
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(CVQW_MAGIC, CVQW_VERSION, 2, w.sample_rate))
        fh.write(data.tobytes())


def read_cvqw(path):
    with open(path, "rb") as fh:
        header = fh.read(_HEADER.size)
        if len(header) != _HEADER.size:
            raise ConfigurationError(f"{path}: truncated CVQW header")
        magic, version, channels, fs = _HEADER.unpack(header)
        if magic != CVQW_MAGIC:
            raise ConfigurationError(f"{path}: bad magic {magic!r}")
        if version != CVQW_VERSION or channels != 2:
            raise ConfigurationError(f"{path}: unsupported version {version} / channels {channels}")
        raw = fh.read()
    if len(raw) % 32:
        raise ConfigurationError(f"{path}: payload is not a whole number of samples")
    data = np.frombuffer(raw, dtype="<f8").reshape(-1, 4)
    return WaveformBuffer(fs, data[:, 0] + 1j * data[:, 1], data[:, 2] + 1j * data[:, 3])
