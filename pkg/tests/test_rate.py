import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dmqkd.constellation import build_mb_constellation, scale_to_variance
from dmqkd.exceptions import ConfigurationError, InvalidParameterError, UnphysicalStateError
from dmqkd.rate import (RateParams, effective_z, g_function, gaussian_z, holevo_bound, mutual_information,
                        secret_key_rate, symplectic_eigenvalues, trace_correlation, with_distance)


def textbook_holevo(va, T, xi, eta, vel):
    """Closed-form trusted-heterodyne χ_EB for Gaussian modulation (λ5 = 1)."""
    V = va + 1
    cl = 1 / T - 1 + xi
    ch = (2 - eta + 2 * vel) / eta
    ct = cl + ch / T
    A = V**2 * (1 - 2 * T) + 2 * T + T**2 * (V + cl) ** 2
    B = T**2 * (V * cl + 1) ** 2
    C = (A * ch**2 + B + 1 + 2 * ch * (V * np.sqrt(B) + T * (V + cl)) + 2 * T * (V**2 - 1)) / (T * (V + ct)) ** 2
    D = ((V + np.sqrt(B) * ch) / (T * (V + ct))) ** 2
    l12 = np.sqrt([(A + np.sqrt(A * A - 4 * B)) / 2, (A - np.sqrt(A * A - 4 * B)) / 2])
    l34 = np.sqrt([(C + np.sqrt(C * C - 4 * D)) / 2, (C - np.sqrt(C * C - 4 * D)) / 2])

    def G(x):
        return (x + 1) * np.log2(x + 1) - x * np.log2(x) if x > 0 else 0.0

    return sum(G((l - 1) / 2) for l in l12) - sum(G((l - 1) / 2) for l in l34)


def table_params(d=5, va=14.35, xi=0.037, **kw):
    return RateParams(va_snu=va, xi_snu=xi, transmittance=10 ** (-0.02 * d), **kw)


# ------------------------------------------------------------ G and I_AB

def test_g_function_values():
    assert g_function(0.0) == 0.0
    assert g_function(1.0) == pytest.approx(2.0)
    x = np.linspace(0, 50, 500)
    assert np.all(np.diff(g_function(x)) > 0)


def test_mutual_information_ideal_link():
    p = RateParams(va_snu=2.0, xi_snu=0.0, transmittance=1.0, eta=1.0, v_ele=0.0)
    assert p.chi_total == pytest.approx(1.0)
    assert mutual_information(p) == pytest.approx(1.0)


def test_mutual_information_5km_row():
    p = table_params()
    T, V = 10**-0.1, 15.35
    chi = 1 / T - 1 + 0.037 + (2 - 0.56 + 0.3) / 0.56 / T
    assert mutual_information(p) == pytest.approx(np.log2((V + chi) / (1 + chi)), rel=1e-12)
    assert mutual_information(p) == pytest.approx(1.91, abs=0.01)


def test_no_modulation_no_information():
    assert mutual_information(table_params(va=0.0)) == 0.0
    for va in (0.0, 1e-6):
        p = table_params(va=va, xi=0.0)
        assert holevo_bound(p, gaussian_z(va)) < 1e-4


def test_no_modulation_with_excess_noise():
    # Eve still purifies the excess noise Bob sees, so χ_EB stays at the closed-form value
    p = table_params(va=0.0)
    chi = holevo_bound(p, 0.0)
    assert chi > 0
    assert chi == pytest.approx(textbook_holevo(1e-12, 10**-0.1, 0.037, 0.56, 0.15), rel=1e-6)
    assert secret_key_rate(p).clamped


# --------------------------------------------------------------- Holevo

def test_lossless_noiseless_channel_leaks_nothing():
    for va in (0.5, 2.0, 14.35):
        p = RateParams(va_snu=va, xi_snu=0.0, transmittance=1.0, eta=1.0, v_ele=0.0)
        l12, _ = symplectic_eigenvalues(p, gaussian_z(va))
        np.testing.assert_allclose(l12, 1.0, atol=1e-6)
        assert holevo_bound(p, gaussian_z(va)) == pytest.approx(0.0, abs=1e-6)


@pytest.mark.parametrize("va,d,xi,eta,vel", [
    (14.35, 5, 0.037, 0.56, 0.15), (12.319, 10, 0.032, 0.56, 0.15), (6.332, 25, 0.029, 0.56, 0.15),
    (4.03, 50, 0.042, 0.56, 0.15), (4.0, 100, 0.05, 0.6, 0.1), (2.0, 1, 0.0, 0.9, 0.01),
])
def test_holevo_matches_textbook_closed_form(va, d, xi, eta, vel):
    T = 10 ** (-0.02 * d)
    p = RateParams(va_snu=va, xi_snu=xi, transmittance=T, eta=eta, v_ele=vel)
    assert holevo_bound(p, gaussian_z(va)) == pytest.approx(textbook_holevo(va, T, xi, eta, vel), rel=1e-9)


def test_fifth_conditional_eigenvalue_is_vacuum_for_gaussian_source():
    _, l345 = symplectic_eigenvalues(table_params(), gaussian_z(14.35))
    assert l345.min() == pytest.approx(1.0, abs=1e-6)


def test_z_above_gaussian_rejected():
    with pytest.raises(InvalidParameterError):
        holevo_bound(table_params(), 1.01 * gaussian_z(14.35))


@settings(max_examples=300, deadline=None)
@given(va=st.floats(0.01, 30), T=st.floats(1e-4, 1.0), xi=st.floats(0, 0.2), eta=st.floats(0.05, 0.99),
       vel=st.floats(0, 0.5), zf=st.floats(0, 1))
def test_symplectic_eigenvalues_physical(va, T, xi, eta, vel, zf):
    p = RateParams(va_snu=va, xi_snu=xi, transmittance=T, eta=eta, v_ele=vel)
    l12, l345 = symplectic_eigenvalues(p, zf * gaussian_z(va))
    assert np.all(l12 >= 1) and np.all(l345 >= 1)


def test_unphysical_state_raises(monkeypatch):
    import dmqkd.rate as rate

    p = table_params()
    real = rate._two_mode
    # an uncorrelated pair with sub-vacuum variance on Bob's side
    monkeypatch.setattr(rate, "_two_mode", lambda p, z: (real(p, z)[0], 0.5, 0.0))
    with pytest.raises(UnphysicalStateError):
        symplectic_eigenvalues(p, 0.0)


# ------------------------------------------------------------ z models

def test_gaussian_z_closed_form():
    assert gaussian_z(3.0) == pytest.approx(np.sqrt(15))
    assert effective_z("gaussian", 3.0) == pytest.approx(np.sqrt(15))


def test_dm_256_close_to_gaussian():
    c = build_mb_constellation(256, 0.023)
    z = effective_z(c, 14.35, 10**-0.1, 0.037)
    zg = gaussian_z(14.35)
    assert z <= zg
    assert z == pytest.approx(zg, rel=0.01)


def test_dm_qpsk_strictly_below_gaussian():
    c = build_mb_constellation(4, 0.0)
    assert effective_z(c, 14.35, 10**-0.1, 0.037) < gaussian_z(14.35)


@pytest.mark.parametrize("nu", [0.01, 0.023])
def test_dm_approaches_gaussian_with_order(nu):
    zs = [effective_z(build_mb_constellation(m, nu), 14.35, 1.0, 0.037) for m in (16, 64, 256, 1024)]
    assert np.all(np.diff(zs) > 0)
    assert zs[-1] <= gaussian_z(14.35)


def test_dm_skr_dominated_by_gaussian():
    for m, nu in ((64, 0.057), (256, 0.023)):
        c = scale_to_variance(build_mb_constellation(m, nu), 14.35)
        dm = secret_key_rate(table_params(z_model="dm", constellation=c))
        g = secret_key_rate(table_params())
        assert dm.skr_bps <= g.skr_bps


def test_trace_correlation_bounded_by_gaussian():
    # the Gaussian source with the same ⟨n⟩ has correlation √(⟨n⟩² + ⟨n⟩)
    for m, va in ((4, 2.0), (16, 5.0), (64, 0.5)):
        c = scale_to_variance(build_mb_constellation(m, 0.0), va)
        tc, n = trace_correlation(c)
        assert n == pytest.approx(va / 2)
        assert 0 < tc <= np.sqrt(n * n + n)


def test_dm_z_falls_with_excess_noise():
    c = build_mb_constellation(64, 0.05)
    zs = [effective_z(c, 6.0, 0.3, xi) for xi in (0.0, 0.02, 0.05, 0.1)]
    assert np.all(np.diff(zs) < 0)


def test_effective_z_bad_model():
    with pytest.raises(ConfigurationError):
        effective_z("exact", 3.0)
    with pytest.raises(ConfigurationError):
        effective_z(42, 3.0)


# ------------------------------------------------------------------ SKR

def test_skr_is_rate_times_bracket():
    r = secret_key_rate(table_params())
    assert r.skr_bps == pytest.approx(1e9 * 0.8 * r.bracket, rel=1e-12)
    assert r.bracket == pytest.approx(0.95 * r.i_ab - r.chi_eb)
    # 0.408 bits per symbol at 1 GBaud with 20% training
    assert 1e9 * (1 - 0.2) * 0.408 == pytest.approx(3.264e8)


def test_negative_bracket_clamped_raw_kept():
    r = secret_key_rate(table_params(d=50, va=4.0, xi=0.2))
    assert r.clamped
    assert r.skr_bps == 0.0
    assert r.bracket < 0


def test_all_training_gives_zero_rate():
    r = secret_key_rate(table_params(p_ts=1.0))
    assert r.skr_bps == 0.0
    assert not r.clamped


def test_report_fields_nonnegative():
    r = secret_key_rate(table_params())
    assert r.i_ab >= 0 and r.chi_eb >= 0 and r.skr_bps >= 0
    assert set(r.to_dict()) == {"i_ab", "chi_eb", "bracket", "skr_bps", "clamped", "z_eff"}


@pytest.mark.parametrize("field,values,direction", [
    ("xi_snu", np.linspace(0.0, 0.1, 11), -1),
    ("beta", np.linspace(0.85, 1.0, 7), 1),
    ("eta", np.linspace(0.3, 0.95, 8), 1),
])
def test_skr_monotone(field, values, direction):
    from dataclasses import replace

    for d in (5, 10, 25, 50):
        base = table_params(d=d, va=6.0, xi=0.03)
        b = [secret_key_rate(replace(base, **{field: float(v)})).bracket for v in values]
        assert np.all(direction * np.diff(b) > 0)


def test_skr_decreases_with_distance():
    base = table_params(va=6.0, xi=0.03)
    b = [secret_key_rate(with_distance(base, d)).bracket for d in np.linspace(0, 60, 25)]
    assert np.all(np.diff(b) < 0)


def test_with_distance():
    p = with_distance(table_params(), 25)
    assert p.transmittance == pytest.approx(10**-0.5)


@pytest.mark.parametrize("kw", [
    dict(transmittance=0.0), dict(transmittance=1.5), dict(xi_snu=-0.01), dict(va_snu=-1.0),
    dict(beta=0.0), dict(beta=1.1), dict(p_ts=-0.1), dict(eta=0.0), dict(v_ele=-0.1),
    dict(eta=1.0, v_ele=0.1),
])
def test_invalid_params(kw):
    args = dict(va_snu=4.0, xi_snu=0.02, transmittance=0.5)
    args.update(kw)
    with pytest.raises(InvalidParameterError):
        RateParams(**args)


def test_dm_requires_constellation():
    with pytest.raises(ConfigurationError):
        RateParams(va_snu=4.0, xi_snu=0.02, transmittance=0.5, z_model="dm")
    with pytest.raises(ConfigurationError):
        RateParams(va_snu=4.0, xi_snu=0.02, transmittance=0.5, z_model="dm-exact")
