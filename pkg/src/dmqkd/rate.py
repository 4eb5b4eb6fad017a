"""Asymptotic secret key rate with a trusted, noisy heterodyne receiver.

``SKR = R_s (1 - P_TS) (β I_AB - χ_EB)``. Everything is in shot-noise
units with ``V = V_A + 1``. Eve's information comes from the two-mode
covariance matrix of the entanglement-based picture

    γ_AB = [[a·I, c·Z], [c·Z, b·I]],  a = V, b = T (V + χ_line), c = √T z

where ``z`` is the Alice-Bob correlation. For Gaussian modulation
``z = √(V² - 1)``; for a finite constellation it is replaced by a lower
bound computed from the constellation's average state (``dm`` mode).

Bob's detector is trusted: efficiency ``η`` is a beamsplitter that mixes in
one arm of an EPR pair whose variance realizes the electronic noise. The
conditional entropy term is computed by explicitly conditioning the
joint state on the heterodyne outcome.
"""

from dataclasses import asdict, dataclass, replace
from functools import lru_cache
from typing import Optional

import numpy as np
from scipy.special import gammaln

from ._validation import check_real
from .constellation import Constellation, build_mb_constellation, scale_to_variance
from .exceptions import ConfigurationError, InvalidParameterError, UnphysicalStateError

__all__ = [
    "RateParams",
    "RateReport",
    "g_function",
    "mutual_information",
    "gaussian_z",
    "trace_correlation",
    "effective_z",
    "symplectic_eigenvalues",
    "holevo_bound",
    "secret_key_rate",
    "with_distance",
    "Z_MODELS",
]

Z_MODELS = ("gaussian", "dm")
_EIG_TOL = 1e-9

_I2 = np.eye(2)
_Z2 = np.diag([1.0, -1.0])
_OMEGA3 = np.kron(np.eye(3), np.array([[0.0, 1.0], [-1.0, 0.0]]))


@dataclass(frozen=True)
class RateParams:
    va_snu: float
    xi_snu: float
    transmittance: float
    eta: float = 0.56
    v_ele: float = 0.15
    beta: float = 0.95
    p_ts: float = 0.2
    rs_baud: float = 1e9
    z_model: str = "gaussian"
    constellation: Optional[Constellation] = None  # shape for the dm model

    def __post_init__(self):
        check_real(self.va_snu, "va_snu", low=0.0)
        check_real(self.xi_snu, "xi_snu", low=0.0)
        check_real(self.transmittance, "transmittance", low=0.0, high=1.0, low_inclusive=False)
        check_real(self.eta, "eta", low=0.0, high=1.0, low_inclusive=False)
        check_real(self.v_ele, "v_ele", low=0.0)
        check_real(self.beta, "beta", low=0.0, high=1.0, low_inclusive=False)
        check_real(self.p_ts, "p_ts", low=0.0, high=1.0)
        check_real(self.rs_baud, "rs_baud", low=0.0, low_inclusive=False)
        if self.z_model not in Z_MODELS:
            raise ConfigurationError(f"z_model must be one of {Z_MODELS}, got {self.z_model!r}")
        if self.z_model == "dm" and self.constellation is None:
            raise ConfigurationError("the dm z model needs a constellation")
        if self.eta == 1.0 and self.v_ele > 0:
            raise InvalidParameterError("electronic noise needs eta < 1 in the trusted-detector model")

    @property
    def chi_line(self):
        return 1 / self.transmittance - 1 + self.xi_snu

    @property
    def chi_het(self):
        return (2 - self.eta + 2 * self.v_ele) / self.eta

    @property
    def chi_total(self):
        return self.chi_line + self.chi_het / self.transmittance

    def to_dict(self):
        d = asdict(self)
        d["constellation"] = None if self.constellation is None else self.constellation.to_dict()
        return d


@dataclass(frozen=True)
class RateReport:
    i_ab: float
    chi_eb: float
    bracket: float  # β I_AB - χ_EB, bits per symbol, never clamped
    skr_bps: float
    clamped: bool
    z_eff: float

    def to_dict(self):
        return asdict(self)


def g_function(x):
    """``G(x) = (x+1) log2(x+1) - x log2 x`` with ``G(0) = 0``."""
    x = np.maximum(np.asarray(x, dtype=float), 0.0)
    safe = np.where(x > 0, x, 1.0)
    out = np.where(x > 0, (x + 1) * np.log2(x + 1) - x * np.log2(safe), 0.0)
    return out if out.ndim else float(out)


def mutual_information(p):
    """``I_AB = log2((V + χ_tot) / (1 + χ_tot))`` in bits per symbol."""
    v = p.va_snu + 1
    return float(np.log2((v + p.chi_total) / (1 + p.chi_total)))


def gaussian_z(va):
    """Correlation of a Gaussian-modulated EPR source, ``√(V_A² + 2 V_A)``."""
    va = check_real(va, "va", low=0.0)
    return float(np.sqrt(va * va + 2 * va))


# ---------------------------------------------------------------- dm model

def _quadrant(c):
    """Points in the open first quadrant; a square QAM grid is invariant
    under 90° rotations, so these represent all four quadrants."""
    pts = np.asarray(c.points)
    q = (pts.real > 0) & (pts.imag > 0)
    return pts[q], np.asarray(c.probabilities)[q]


def _fock_cutoff(alpha, probs, weight_floor=1e-15):
    keep = probs > weight_floor * probs.max()
    m = float(np.max(np.abs(alpha[keep]) ** 2))
    return int(m + 12 * np.sqrt(m) + 30)


def _sqrt_psd(block):
    lam, u = np.linalg.eigh(block)
    return (u * np.sqrt(np.clip(lam, 0.0, None))) @ u.T


def trace_correlation(c):
    """``Tr(√τ a √τ a†)`` and ``⟨n⟩`` for the average state ``τ`` of ``c``.

    ``τ = Σ_k P_k |α_k⟩⟨α_k|``. The four-fold rotation symmetry of square
    QAM makes ``τ`` block diagonal in the photon number modulo 4, and real
    (mirror symmetry), so the square root is taken block by block.
    """
    alpha, probs = _quadrant(c)
    n_mean = float(np.dot(c.probabilities, np.abs(c.points) ** 2))
    if n_mean == 0:
        return 0.0, 0.0
    n_max = _fock_cutoff(alpha, probs)
    n = np.arange(n_max)
    r = np.abs(alpha)
    logc = -0.5 * r[:, None] ** 2 + n[None, :] * np.log(r)[:, None] - 0.5 * gammaln(n + 1)[None, :]
    coef = np.exp(logc) * np.exp(1j * np.angle(alpha)[:, None] * n[None, :])
    w = 4 * probs
    blocks = []
    for res in range(4):
        idx = n[res::4]
        cb = coef[:, idx]
        blocks.append(_sqrt_psd(np.real((cb * w[:, None]).T @ cb.conj())))
    total = 0.0
    for res in range(4):
        s, t = blocks[res], blocks[(res + 1) % 4]
        i = n[res::4]
        # (a S a†)_{ji} = √((i+1)(j+1)) S_{j+1, i+1}; rows of block res+1 start at res+1
        off = 1 if res == 3 else 0
        m = min(s.shape[0], t.shape[0] - off)
        root = np.sqrt(i[:m] + 1.0)
        total += float(np.sum(s[:m, :m] * t[off:off + m, off:off + m].T * np.outer(root, root)))
    return total, n_mean


@lru_cache(maxsize=65536)
def _dm_terms(order, nu, va):
    c = scale_to_variance(build_mb_constellation(order, nu), va)
    tc, n_mean = trace_correlation(c)
    w = max(n_mean + 1 - tc * tc / n_mean, 0.0) if n_mean > 0 else 0.0
    return tc, w


def effective_z(c, va, transmittance=None, xi=0.0):
    """Alice-Bob correlation used in ``γ_AB``.

    ``c`` is ``"gaussian"`` or a :class:`Constellation` (its shape is kept,
    its scale is set to ``va``). For a constellation the bound is
    ``2 Tr(√τ a √τ a†) - √(2 W ξ)`` with ``W = ⟨n⟩ + 1 - Tr(...)² / ⟨n⟩``,
    floored at 0 and never above the Gaussian value. ``transmittance`` is
    accepted for interface symmetry; the bound does not depend on it.
    """
    va = check_real(va, "va", low=0.0)
    xi = check_real(xi, "xi", low=0.0)
    zg = gaussian_z(va)
    if isinstance(c, str):
        if c != "gaussian":
            raise ConfigurationError(f"unknown z model {c!r}")
        return zg
    if not isinstance(c, Constellation):
        raise ConfigurationError(f"expected 'gaussian' or a Constellation, got {type(c).__name__}")
    if va == 0:
        return 0.0
    tc, w = _dm_terms(c.order, round(float(c.nu), 12), round(va, 12))
    z = 2 * tc - np.sqrt(2 * w * xi)
    return float(min(max(z, 0.0), zg))


# ----------------------------------------------------------- Holevo bound

def _two_mode(p, z):
    v = p.va_snu + 1
    a = v
    b = p.transmittance * (v + p.chi_line)
    c = np.sqrt(p.transmittance) * z
    return a, b, c


def _conditional_covariance(p, a, b, c):
    """Covariance of (A, detector output F, purifying mode G) given Bob's heterodyne outcome."""
    eta = p.eta
    g = np.zeros((8, 8))
    g[0:2, 0:2] = a * _I2
    g[2:4, 2:4] = b * _I2
    g[0:2, 2:4] = g[2:4, 0:2] = c * _Z2
    v = 1 + 2 * p.v_ele / (1 - eta) if eta < 1 else 1.0
    sq = np.sqrt(max(v * v - 1, 0.0))
    g[4:6, 4:6] = g[6:8, 6:8] = v * _I2
    g[4:6, 6:8] = g[6:8, 4:6] = sq * _Z2
    s = np.eye(8)
    t, r = np.sqrt(eta), np.sqrt(1 - eta)
    s[2:4, 2:4] = t * _I2
    s[2:4, 4:6] = r * _I2
    s[4:6, 2:4] = -r * _I2
    s[4:6, 4:6] = t * _I2
    g = s @ g @ s.T
    keep = [0, 1, 4, 5, 6, 7]
    ga = g[np.ix_(keep, keep)]
    gc = g[np.ix_(keep, [2, 3])]
    return ga - gc @ np.linalg.inv(g[2:4, 2:4] + _I2) @ gc.T


def _check_eigs(ev):
    ev = np.asarray(ev, dtype=float)
    if np.any(ev < 1 - _EIG_TOL):
        raise UnphysicalStateError(f"symplectic eigenvalue {ev.min():.12g} < 1")
    return np.maximum(ev, 1.0)


def symplectic_eigenvalues(p, z_eff):
    """``(λ1, λ2)`` of ``γ_AB`` and ``(λ3, λ4, λ5)`` of the conditional state.

    Values in ``[1 - 1e-9, 1)`` are clamped to 1; anything smaller raises
    :class:`UnphysicalStateError`.
    """
    zmax = gaussian_z(p.va_snu)  # √(V²-1) without the cancellation at small V_A
    if z_eff > zmax * (1 + 1e-12):
        raise InvalidParameterError(f"z_eff {z_eff} exceeds √(V²-1) = {zmax}")
    a, b, c = _two_mode(p, z_eff)
    delta = a * a + b * b - 2 * c * c
    det = (a * b - c * c) ** 2
    disc = np.sqrt(max(delta * delta - 4 * det, 0.0))
    l12 = np.sqrt(np.maximum([(delta + disc) / 2, (delta - disc) / 2], 0.0))
    cond = _conditional_covariance(p, a, b, c)
    ev = np.sort(np.abs(np.linalg.eigvals(1j * _OMEGA3 @ cond)))[::2]
    return _check_eigs(l12), _check_eigs(ev)


def holevo_bound(p, z_eff):
    """``χ_EB`` in bits per symbol."""
    l12, l345 = symplectic_eigenvalues(p, z_eff)
    chi = float(np.sum(g_function((l12 - 1) / 2)) - np.sum(g_function((l345 - 1) / 2)))
    return max(chi, 0.0)


def secret_key_rate(p):
    if p.z_model == "gaussian":
        z = gaussian_z(p.va_snu)
    else:
        z = effective_z(p.constellation, p.va_snu, p.transmittance, p.xi_snu)
    i_ab = mutual_information(p)
    chi = holevo_bound(p, z)
    bracket = p.beta * i_ab - chi
    clamped = bracket <= 0
    skr = 0.0 if clamped else p.rs_baud * (1 - p.p_ts) * bracket
    return RateReport(i_ab=i_ab, chi_eb=chi, bracket=bracket, skr_bps=skr, clamped=bool(clamped), z_eff=z)


def with_distance(p, distance_km, atten_db_per_km=0.2):
    """Copy of ``p`` at another fiber length."""
    return replace(p, transmittance=10 ** (-atten_db_per_km * distance_km / 10))
