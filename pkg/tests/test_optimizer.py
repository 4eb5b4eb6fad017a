import csv

import numpy as np
import pytest

from dmqkd.exceptions import ConfigurationError, InvalidOrderError, InvalidParameterError
from dmqkd.optimizer import GridSpec, optimize, skr_surface, write_surface_csv
from dmqkd.rate import RateParams

SMALL = GridSpec(nu_max=0.12, va_max=12.0)


def test_default_grid_bounds_and_resolution():
    g = GridSpec()
    nus, vas = g.coarse()
    assert nus[0] == 0.0 and nus[-1] == pytest.approx(0.2)
    assert vas[0] == 0.5 and vas[-1] == pytest.approx(20.0)
    fn, fv = g.fine(0.05, 5.0)
    assert np.diff(fn).max() <= 0.001 + 1e-12
    assert np.diff(fv).max() <= 0.05 + 1e-12
    assert fn[0] == pytest.approx(0.04) and fn[-1] == pytest.approx(0.06)


def test_fine_window_clipped_to_grid():
    fn, fv = GridSpec().fine(0.0, 20.0)
    assert fn[0] == 0.0 and fv[-1] == pytest.approx(20.0)


def test_gaussian_mode_degenerate_point():
    # lossless, noiseless: the rate grows with V_A and ν does nothing
    r = optimize(256, 0.0, 0.0, z_model="gaussian")
    assert r.nu_insensitive
    assert r.va_opt == pytest.approx(20.0)
    assert r.nu_opt == 0.0
    assert np.ptp(r.surface, axis=0).max() == 0.0


def test_gaussian_order_forces_gaussian_mode():
    r = optimize("gaussian", 25.0, 0.05, grid=SMALL)
    assert r.z_model == "gaussian" and r.nu_insensitive


def test_dm_mode_degenerate_point_interior():
    r = optimize(64, 0.0, 0.0, z_model="dm")
    assert not r.nu_insensitive
    assert 0.5 < r.va_opt < 20.0
    assert 0.0 < r.nu_opt < 0.2


def test_argmax_is_surface_max():
    r = optimize(64, 25.0, 0.05, grid=SMALL)
    assert r.skr_opt == r.fine_surface.max()
    assert r.skr_opt >= r.surface.max()
    k, m = np.argwhere(r.fine_surface == r.skr_opt)[0]
    assert (r.fine_nus[k], r.fine_vas[m]) == (r.nu_opt, r.va_opt)


def test_deterministic():
    a = optimize(64, 10.0, 0.03, grid=SMALL)
    b = optimize(64, 10.0, 0.03, grid=SMALL)
    assert (a.nu_opt, a.va_opt, a.skr_opt) == (b.nu_opt, b.va_opt, b.skr_opt)
    np.testing.assert_array_equal(a.surface, b.surface)


@pytest.mark.parametrize("order", [64, 256])
def test_robust_to_excess_noise(order):
    g = GridSpec()
    res = [optimize(order, 25.0, xi) for xi in (0.02, 0.08)]
    assert abs(res[0].nu_opt - res[1].nu_opt) < 0.25 * (g.nu_max - g.nu_min)
    assert abs(res[0].va_opt - res[1].va_opt) < 0.25 * (g.va_max - g.va_min)


def test_no_positive_rate_flagged():
    r = optimize(64, 50.0, 0.5, grid=SMALL)
    assert not r.positive
    assert r.skr_opt < 0
    assert r.skr_opt == r.fine_surface.max()


def test_surface_matches_rate_engine():
    from dmqkd.constellation import build_mb_constellation, scale_to_variance
    from dmqkd.rate import secret_key_rate

    base = RateParams(va_snu=1.0, xi_snu=0.03, transmittance=10**-0.5)
    s = skr_surface(base, 64, [0.05], [4.0], z_model="dm")
    c = scale_to_variance(build_mb_constellation(64, 0.05), 4.0)
    p = RateParams(va_snu=4.0, xi_snu=0.03, transmittance=10**-0.5, z_model="dm", constellation=c)
    assert s[0, 0] == pytest.approx(secret_key_rate(p).skr_bps, rel=1e-12)


def test_surface_csv(tmp_path):
    r = optimize(64, 25.0, 0.05, grid=SMALL)
    path = tmp_path / "s.csv"
    write_surface_csv(r, path)
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == r.surface.size
    assert float(rows[0]["nu"]) == r.nus[0] and float(rows[0]["va"]) == r.vas[0]
    assert float(rows[-1]["skr"]) == r.surface[-1, -1]
    write_surface_csv(r, tmp_path / "f.csv", fine=True)
    assert sum(1 for _ in open(tmp_path / "f.csv")) == r.fine_surface.size + 1


def test_invalid_inputs():
    with pytest.raises(ConfigurationError):
        optimize(64, 25.0, 0.05, z_model="exact")
    with pytest.raises(InvalidOrderError):
        optimize(60, 25.0, 0.05)
    with pytest.raises(InvalidParameterError):
        optimize(64, -1.0, 0.05)
    with pytest.raises(InvalidParameterError):
        GridSpec(nu_max=-0.1)
    with pytest.raises(InvalidParameterError):
        GridSpec(va_step=0.0)
