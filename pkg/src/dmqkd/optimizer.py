"""Grid search for the shaping parameter ``ν`` and modulation variance ``V_A``.

A coarse scan of the whole grid is followed by a finer scan of the
neighbourhood of the coarse maximum. Ties go to the smaller ``ν``, then
to the smaller ``V_A``, so identical grids always give identical answers.
"""

import csv
from dataclasses import dataclass, field

import numpy as np

from ._validation import check_real
from .constellation import build_mb_constellation
from .exceptions import ConfigurationError, InvalidParameterError
from .rate import RateParams, effective_z, holevo_bound, mutual_information

__all__ = ["GridSpec", "OptimizationResult", "optimize", "skr_surface", "write_surface_csv"]


@dataclass(frozen=True)
class GridSpec:
    nu_min: float = 0.0
    nu_max: float = 0.2
    nu_step: float = 0.01
    va_min: float = 0.5
    va_max: float = 20.0
    va_step: float = 0.5
    fine_nu_step: float = 0.001
    fine_va_step: float = 0.05

    def __post_init__(self):
        check_real(self.nu_min, "nu_min", low=0.0)
        check_real(self.va_min, "va_min", low=0.0, low_inclusive=False)
        for name in ("nu_step", "va_step", "fine_nu_step", "fine_va_step"):
            check_real(getattr(self, name), name, low=0.0, low_inclusive=False)
        if self.nu_max < self.nu_min or self.va_max < self.va_min:
            raise InvalidParameterError("grid upper bounds must not be below lower bounds")

    def coarse(self):
        return _axis(self.nu_min, self.nu_max, self.nu_step), _axis(self.va_min, self.va_max, self.va_step)

    def fine(self, nu0, va0):
        nus = _axis(max(self.nu_min, nu0 - self.nu_step), min(self.nu_max, nu0 + self.nu_step), self.fine_nu_step)
        vas = _axis(max(self.va_min, va0 - self.va_step), min(self.va_max, va0 + self.va_step), self.fine_va_step)
        return nus, vas


def _axis(lo, hi, step):
    n = int(np.floor((hi - lo) / step + 1e-9)) + 1
    return np.round(lo + step * np.arange(n), 10)


@dataclass
class OptimizationResult:
    order: object  # int, or "gaussian"
    distance_km: float
    xi: float
    z_model: str
    nu_opt: float
    va_opt: float
    skr_opt: float
    positive: bool  # False when no grid point gives a positive rate
    nu_insensitive: bool  # True when the rate cannot depend on ν (gaussian z model)
    nus: np.ndarray = field(repr=False)
    vas: np.ndarray = field(repr=False)
    surface: np.ndarray = field(repr=False)  # coarse SKR grid, shape (len(nus), len(vas))
    fine_nus: np.ndarray = field(repr=False)
    fine_vas: np.ndarray = field(repr=False)
    fine_surface: np.ndarray = field(repr=False)

    def summary(self):
        return {
            "order": self.order,
            "distance_km": self.distance_km,
            "xi": self.xi,
            "z_model": self.z_model,
            "nu_opt": self.nu_opt,
            "va_opt": self.va_opt,
            "skr_opt_bps": self.skr_opt,
            "positive": self.positive,
            "nu_insensitive": self.nu_insensitive,
        }


def _bracket_rate(base, order, nu, va, z_model):
    p = RateParams(va_snu=va, xi_snu=base.xi_snu, transmittance=base.transmittance, eta=base.eta,
                   v_ele=base.v_ele, beta=base.beta, p_ts=base.p_ts, rs_baud=base.rs_baud)
    if z_model == "gaussian":
        z = effective_z("gaussian", va)
    else:
        z = effective_z(build_mb_constellation(order, nu), va, p.transmittance, p.xi_snu)
    raw = p.beta * mutual_information(p) - holevo_bound(p, z)
    return p.rs_baud * (1 - p.p_ts) * raw


def skr_surface(base, order, nus, vas, z_model="dm"):
    """Unclamped ``R_s (1-P_TS)(β I_AB - χ_EB)`` on the ``nus × vas`` grid."""
    out = np.empty((len(nus), len(vas)))
    for i, nu in enumerate(nus):
        for j, va in enumerate(vas):
            out[i, j] = _bracket_rate(base, order, float(nu), float(va), z_model)
    return out


def _argmax(surface):
    # np.argmax returns the first maximum in C order: smallest ν row, then smallest V_A
    return np.unravel_index(int(np.argmax(surface)), surface.shape)


def optimize(order, distance_km, xi, z_model="dm", grid=GridSpec(), eta=0.56, v_ele=0.15, beta=0.95,
             p_ts=0.2, rs_baud=1e9, atten_db_per_km=0.2):
    """Maximize the key rate over ``(ν, V_A)``.

    ``order`` is a QAM order or ``"gaussian"``; the latter (or
    ``z_model="gaussian"``) makes the ν axis flat and the result is
    flagged ``nu_insensitive``. The reported rate is the unclamped bracket
    times ``R_s (1 - P_TS)``; ``positive`` is False when it is never above 0.
    """
    distance_km = check_real(distance_km, "distance_km", low=0.0)
    if order == "gaussian":
        z_model = "gaussian"
    if z_model not in ("gaussian", "dm"):
        raise ConfigurationError(f"z_model must be 'gaussian' or 'dm', got {z_model!r}")
    if z_model == "dm":
        build_mb_constellation(order, 0.0)  # validates the order
    T = 10 ** (-atten_db_per_km * distance_km / 10)
    base = RateParams(va_snu=1.0, xi_snu=xi, transmittance=T, eta=eta, v_ele=v_ele, beta=beta, p_ts=p_ts,
                      rs_baud=rs_baud)

    nus, vas = grid.coarse()
    surf = skr_surface(base, order, nus, vas, z_model)
    i, j = _argmax(surf)
    fnus, fvas = grid.fine(nus[i], vas[j])
    fine = skr_surface(base, order, fnus, fvas, z_model)
    k, m = _argmax(fine)
    best = fine[k, m]
    return OptimizationResult(
        order=order, distance_km=distance_km, xi=float(xi), z_model=z_model,
        nu_opt=float(fnus[k]), va_opt=float(fvas[m]), skr_opt=float(best),
        positive=bool(best > 0), nu_insensitive=z_model == "gaussian",
        nus=nus, vas=vas, surface=surf, fine_nus=fnus, fine_vas=fvas, fine_surface=fine,
    )


def write_surface_csv(result, path, fine=False):
    """Rows ``nu, va, skr`` for plotting."""
    nus, vas, surf = ((result.fine_nus, result.fine_vas, result.fine_surface) if fine
                      else (result.nus, result.vas, result.surface))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["nu", "va", "skr"])
        for i, nu in enumerate(nus):
            for j, va in enumerate(vas):
                w.writerow([repr(float(nu)), repr(float(va)), repr(float(surf[i, j]))])
