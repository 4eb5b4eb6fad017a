"""Probabilistically shaped square QAM constellations.

Points sit on the odd-integer grid ``{±1, ±3, ..., ±(√M-1)}`` in each
quadrature, multiplied by a positive gain. Point probabilities follow a
discrete Maxwell-Boltzmann law ``P ∝ exp(-nu * (x² + p²))`` evaluated on the
*unscaled* grid, so ``nu`` fixes the shape and ``gain`` fixes the scale.

Units: points are coherent-state amplitudes ``α``; a coherent state
``|α⟩`` has quadrature means ``(2 Re α, 2 Im α)`` in shot-noise units, so the
modulation variance is ``V_A = 2 E|α|²``.
"""

import json
from dataclasses import dataclass, field
from math import isqrt

import numpy as np

from ._validation import check_real
from .exceptions import (
    DegenerateConstellationError,
    InvalidOrderError,
    InvalidParameterError,
)

__all__ = [
    "Constellation",
    "build_mb_constellation",
    "modulation_variance",
    "scale_to_variance",
    "amplitude_levels",
    "quadrature_distribution",
]


def _side(order):
    if isinstance(order, bool) or not isinstance(order, (int, np.integer)):
        raise InvalidOrderError(f"order must be an integer, got {order!r}")
    order = int(order)
    side = isqrt(order) if order > 0 else 0
    # M = 4**k: square grid whose side is a power of two
    if side < 2 or side * side != order or side & (side - 1):
        raise InvalidOrderError(f"order must be a power of 4 (4, 16, 64, 256, ...), got {order}")
    return side


def amplitude_levels(order):
    """Positive amplitude levels ``1, 3, ..., √M-1`` of one quadrature."""
    side = _side(order)
    return np.arange(1, side, 2, dtype=np.float64)


def _grid(order):
    side = _side(order)
    axis = np.arange(-(side - 1), side, 2, dtype=np.float64)
    x, p = np.meshgrid(axis, axis, indexing="ij")
    return x.ravel(), p.ravel()


def _mb_weights(energy, nu):
    # shift by the minimum energy so large nu cannot underflow the normaliser
    w = np.exp(-nu * (energy - energy.min()))
    return w / w.sum()


@dataclass(frozen=True)
class Constellation:
    """Immutable shaped QAM constellation.

    Only ``order``, ``nu`` and ``gain`` are stored; ``points`` and
    ``probabilities`` are recomputed from them on construction.
    """

    order: int
    nu: float
    gain: float = 1.0
    points: np.ndarray = field(init=False, repr=False, compare=False)
    probabilities: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        _side(self.order)
        nu = check_real(self.nu, "nu", low=0.0)
        gain = check_real(self.gain, "gain", low=0.0, low_inclusive=False)
        x, p = _grid(self.order)
        points = gain * (x + 1j * p)
        probs = _mb_weights(x * x + p * p, nu)
        points.setflags(write=False)
        probs.setflags(write=False)
        object.__setattr__(self, "nu", nu)
        object.__setattr__(self, "gain", gain)
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "probabilities", probs)

    @property
    def grid(self):
        """Unscaled integer-grid coordinates as complex numbers."""
        return self.points / self.gain

    @property
    def modulation_variance(self):
        return modulation_variance(self)

    def to_dict(self):
        return {"order": self.order, "nu": self.nu, "gain": self.gain}

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, record):
        return cls(order=int(record["order"]), nu=float(record["nu"]),
                   gain=float(record.get("gain", 1.0)))

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def build_mb_constellation(order, nu):
    """Maxwell-Boltzmann shaped ``order``-QAM with unit gain.

    Raises
    ------
    InvalidOrderError
        If ``order`` is not 4, 16, 64, 256, 1024, ...
    InvalidParameterError
        If ``nu`` is negative.
    """
    if isinstance(nu, (int, float)) and not isinstance(nu, bool) and nu < 0:
        raise InvalidParameterError(f"nu must be >= 0, got {nu}")
    return Constellation(order=order, nu=nu, gain=1.0)


def modulation_variance(c):
    """Per-quadrature modulation variance ``V_A = 2 Σ P_k |α_k|²`` in SNU."""
    return float(2.0 * np.dot(c.probabilities, np.abs(c.points) ** 2))


def scale_to_variance(c, target_va):
    """Return a copy of ``c`` whose gain gives modulation variance ``target_va``."""
    target_va = check_real(target_va, "target_va", low=0.0, low_inclusive=False)
    current = modulation_variance(c)
    if current <= 0.0:
        raise DegenerateConstellationError("cannot rescale a zero-variance constellation")
    return Constellation(order=c.order, nu=c.nu, gain=c.gain * np.sqrt(target_va / current))


def quadrature_distribution(c):
    """Marginal law of one quadrature's magnitude.

    The Maxwell-Boltzmann weight factorises as ``P(x, p) = P1(x) P1(p)``,
    so each quadrature can be shaped independently. Returns
    ``(levels, probs)`` where ``levels`` are the positive grid amplitudes and
    ``probs[i]`` is the probability of ``±levels[i]`` (both signs together).
    """
    levels = amplitude_levels(c.order)
    w = np.exp(-c.nu * (levels ** 2 - levels[0] ** 2))
    return levels, w / w.sum()
