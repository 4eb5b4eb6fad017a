import json

import numpy as np
import pytest

from dmqkd.channel import ChannelParams, DetectorParams, apply_channel, dark_record, detect, vacuum_record
from dmqkd.constellation import build_mb_constellation, scale_to_variance
from dmqkd.estimation import estimate_channel
from dmqkd.exceptions import BandwidthError, PilotLostError, SyncLostError
from dmqkd.rxchain import (
    Receiver,
    RxConfig,
    alice_quadratures,
    bandpass_and_shift,
    carrier_recovery,
    genie_block,
    matched_filter_downsample,
)
from dmqkd.seeding import derive_rng
from dmqkd.txchain import FIELD_PER_ALPHA, FrameLayout, TxConfig, build_frame, modulate, rrc_taps, transmit
from dmqkd.waveform import WaveformBuffer

FS = 10e9
ETA, VELE = 0.56, 0.15


def frame(n=20_000, seed=0, order=256, nu=0.039, va=6.332):
    c = scale_to_variance(build_mb_constellation(order, nu), va)
    return build_frame(c, FrameLayout.from_ratio(n, 0.2), derive_rng(seed, "payload"), seed)


def tone(freq, n=100_000, amp=1.0):
    t = np.arange(n) / FS
    return amp * np.exp(2j * np.pi * freq * t)


def cascade_isi_power(span=16, sps=10, rolloff=0.3):
    h = rrc_taps(rolloff, span, sps)
    rc = np.convolve(h, h)
    c = rc.size // 2
    s = rc[c % sps::sps]
    return np.sum(np.delete(s, c // sps) ** 2)


def test_bandpass_pilot_tone():
    cfg = RxConfig(bpd_bandwidth_hz=None)
    w = WaveformBuffer(FS, tone(1.5e9), np.zeros(100_000, dtype=complex))
    b = bandpass_and_shift(w, cfg)
    assert np.mean(np.abs(b.pilot[0]) ** 2) == pytest.approx(1.0, rel=1e-9)
    assert 10 * np.log10(np.mean(np.abs(b.quantum) ** 2)) < -60
    # shifted onto the quantum IF
    f = np.fft.fftfreq(100_000, 1 / FS)
    assert f[np.argmax(np.abs(np.fft.fft(b.pilot[0])))] == pytest.approx(750e6)


def test_bandpass_white_noise_fraction():
    cfg = RxConfig(bpd_bandwidth_hz=None)
    rng = np.random.default_rng(0)
    n = 1_000_000
    z = (rng.standard_normal((2, n)) + 1j * rng.standard_normal((2, n))) / np.sqrt(2)
    b = bandpass_and_shift(WaveformBuffer.from_array(FS, z), cfg, pilot=False)
    # complex record: the 1.3 GHz window keeps 1.3/10 of the two-sided band
    assert np.mean(np.abs(b.quantum) ** 2) == pytest.approx(1.3 / 10, rel=0.01)


def test_bandpass_zero_in_zero_out():
    b = bandpass_and_shift(WaveformBuffer.zeros(FS, 1000), RxConfig())
    assert np.all(b.quantum == 0) and np.all(b.pilot == 0)


def test_bandpass_beyond_nyquist():
    with pytest.raises(BandwidthError):
        bandpass_and_shift(WaveformBuffer.zeros(FS, 100), RxConfig(quantum_if_hz=4.5e9))


def test_carrier_recovery_noiseless_offset():
    n = 1_000_000
    w = WaveformBuffer(FS, np.zeros(n, dtype=complex), tone(0.0, n))
    ch = ChannelParams(tx_linewidth_hz=0, lo_linewidth_hz=0, pol_angle=0.3, initial_phase=1.1)
    y = apply_channel(w, ch, 0)
    cfg = RxConfig(bpd_bandwidth_hz=None)
    _, residual, _ = carrier_recovery(bandpass_and_shift(y, cfg), cfg)
    assert abs(residual) < 1.0


def test_carrier_recovery_identity():
    n = 100_000
    rng = np.random.default_rng(1)
    q = rng.standard_normal((2, n)) + 1j * rng.standard_normal((2, n))
    w = WaveformBuffer(FS, np.zeros(n, dtype=complex), tone(0.0, n))
    cfg = RxConfig(quantum_if_hz=0.0, pilot_if_hz=0.0, bpd_bandwidth_hz=None)
    b = bandpass_and_shift(w, cfg)
    b.quantum = q
    corrected, residual, phasor = carrier_recovery(b, cfg)
    np.testing.assert_allclose(np.abs(phasor), 1.0, atol=1e-12)
    # the eigenvector's phase is arbitrary; the correction is a constant rotation
    rot = np.mean(corrected * q.conj()) / np.mean(np.abs(q) ** 2)
    np.testing.assert_allclose(corrected, q * rot, atol=1e-9)
    assert abs(residual) < 1e-6


@pytest.mark.parametrize("distance", [5, 50])
def test_carrier_phase_error_bound(distance):
    w = transmit(frame(100_000))
    ch = ChannelParams(distance_km=distance, pol_angle=0.4)
    yy, state = apply_channel(w, ch, 2, return_state=True)
    y = detect(yy, DetectorParams(), 3)
    cfg = RxConfig()
    b = bandpass_and_shift(y, cfg)
    _, _, u = carrier_recovery(b, cfg)
    t = np.arange(y.n_samples) / FS
    truth = np.exp(1j * (state.carrier_phase - 2 * np.pi * (cfg.pilot_if_hz - cfg.quantum_if_hz) * t))
    d = u * truth.conj()
    err = np.angle(d * np.conj(np.mean(d)))[1000:-1000]
    linewidth = ch.tx_linewidth_hz + ch.lo_linewidth_hz
    # pilot-noise floor plus Wiener phase outside the pilot filter
    bound = 1 / (2 * b.pilot_snr) + 2 * linewidth / (np.pi * cfg.pilot_bw_hz)
    assert err.var() < bound


def test_residual_frequency_rms_below_1khz():
    n = 1_000_000
    w = WaveformBuffer(FS, np.zeros(n, dtype=complex), tone(0.0, n))
    cfg = RxConfig(bpd_bandwidth_hz=None)
    res = []
    for s in range(10):
        y = detect(apply_channel(w, ChannelParams(), s), DetectorParams(bpd_bandwidth_hz=None), 100 + s)
        res.append(carrier_recovery(bandpass_and_shift(y, cfg), cfg)[1])
    assert np.sqrt(np.mean(np.square(res))) < 1000


def test_pilot_lost():
    w = transmit(frame(2000), TxConfig(pilot=False))
    y = detect(apply_channel(w, ChannelParams(), 0), DetectorParams(), 1)
    cfg = RxConfig()
    with pytest.raises(PilotLostError):
        carrier_recovery(bandpass_and_shift(y, cfg), cfg)
    b = bandpass_and_shift(y, cfg, pilot=False)
    with pytest.raises(PilotLostError):
        carrier_recovery(b, cfg)


def test_pilot_leakage_ideal_lasers():
    fr = frame(20_000)
    w = transmit(fr)
    ps = w.power()[0]
    pilot_only = WaveformBuffer(FS, np.zeros_like(w.pol_x), w.pol_y)
    ch = ChannelParams(tx_linewidth_hz=0, lo_linewidth_hz=0, pol_angle=0.4)
    y = detect(apply_channel(pilot_only, ch, 0), DetectorParams(eta=1.0, bpd_bandwidth_hz=None), noiseless=True)
    q = bandpass_and_shift(y, RxConfig(bpd_bandwidth_hz=None)).quantum
    assert 10 * np.log10(np.sum(np.mean(np.abs(q) ** 2, axis=1)) / ps) < -50


@pytest.mark.xfail(strict=True, reason="Lorentzian tails of a 200 Hz Wiener pilot leave about -45 dB in band")
def test_pilot_leakage_with_phase_noise():
    fr = frame(20_000)
    w = transmit(fr)
    ps = w.power()[0]
    pilot_only = WaveformBuffer(FS, np.zeros_like(w.pol_x), w.pol_y)
    y = detect(apply_channel(pilot_only, ChannelParams(pol_angle=0.4), 0),
               DetectorParams(eta=1.0, bpd_bandwidth_hz=None), noiseless=True)
    q = bandpass_and_shift(y, RxConfig(bpd_bandwidth_hz=None)).quantum
    assert 10 * np.log10(np.sum(np.mean(np.abs(q) ** 2, axis=1)) / ps) < -50


def back_to_back(fr, delay=0, rolloff=0.3):
    w = modulate(FIELD_PER_ALPHA * fr.symbols)
    x = np.concatenate([np.zeros(delay, dtype=complex), w.pol_x])[: w.n_samples]
    rec = np.vstack([x, np.zeros_like(x)])
    cfg = RxConfig(rolloff=rolloff)
    return matched_filter_downsample(rec, fr.training, fr.symbols.size, cfg)


def test_back_to_back_error_is_the_rrc_truncation_floor():
    fr = frame(20_000)
    streams, offset = back_to_back(fr)
    assert offset == 160
    sent = FIELD_PER_ALPHA * fr.symbols
    got = streams[:, 0] + 1j * streams[:, 1]
    mse = np.mean(np.abs(got - sent) ** 2)
    expected = cascade_isi_power() * np.mean(np.abs(sent) ** 2)
    assert mse == pytest.approx(expected, rel=0.1)
    np.testing.assert_array_equal(streams[:, 2:], 0)


@pytest.mark.xfail(strict=True, reason="span-16 RRC truncation leaves ~4e-3 relative RMS error")
def test_back_to_back_identity_1e6():
    fr = frame(20_000)
    streams, _ = back_to_back(fr)
    got = streams[:, 0] + 1j * streams[:, 1]
    assert np.sqrt(np.mean(np.abs(got - FIELD_PER_ALPHA * fr.symbols) ** 2)) < 1e-6


def test_delay_is_absorbed_by_sync():
    fr = frame(20_000)
    a, off_a = back_to_back(fr)
    b, off_b = back_to_back(fr, delay=3)
    assert off_b == off_a + 3
    np.testing.assert_allclose(a[:-1], b[:-1], atol=1e-12)


def test_wrong_rolloff_degrades_evm():
    fr = frame(20_000)
    sent = FIELD_PER_ALPHA * fr.symbols

    def evm(rolloff):
        s, _ = back_to_back(fr, rolloff=rolloff)
        return np.sqrt(np.mean(np.abs(s[:, 0] + 1j * s[:, 1] - sent) ** 2) / np.mean(np.abs(sent) ** 2))

    assert evm(0.5) > 3 * evm(0.3)


def test_sync_lost_on_noise():
    fr = frame(20_000)
    rng = np.random.default_rng(4)
    rec = rng.standard_normal((2, 200_500)) + 0j
    with pytest.raises(SyncLostError):
        matched_filter_downsample(rec, fr.training, fr.symbols.size, RxConfig())
    with pytest.raises(SyncLostError):
        matched_filter_downsample(rec, np.zeros(0), 10, RxConfig())


def link(fr, ch, seed, tx=TxConfig(), det=DetectorParams()):
    w = transmit(fr, tx)
    yy, state = apply_channel(w, ch, derive_rng(seed, "ch"), return_state=True)
    y = detect(yy, det, derive_rng(seed, "det"))
    vac = vacuum_record(w.n_samples, FS, det, derive_rng(seed, "vac"))
    drk = dark_record(w.n_samples, FS, det, derive_rng(seed, "dark"))
    return y, state, vac, drk


def test_receiver_recovers_link_parameters():
    n = 100_000
    fr = frame(n)
    ch = ChannelParams(distance_km=25, excess_noise_snu=0.029, pol_angle=0.6, initial_phase=2.0)
    y, _, vac, drk = link(fr, ch, 0)
    blk = Receiver().process(y, fr.training, n, vac, drk)
    assert blk.symbols.shape == (n, 2)
    assert blk.training_mask.sum() == fr.layout.n_training
    np.testing.assert_allclose(blk.v_ele_hat, VELE, atol=0.005)
    r = estimate_channel(alice_quadratures(fr.payload), blk.payload, ETA, float(blk.v_ele_hat.mean()))
    assert abs(r.transmittance_hat - ch.transmittance) / ch.transmittance < 0.01
    assert abs(r.xi_hat_snu - 0.029) < 4 * r.xi_std_error


def test_receiver_is_deterministic_and_serializes(tmp_path):
    n = 20_000
    fr = frame(n)
    y, _, vac, drk = link(fr, ChannelParams(distance_km=10), 1)
    a = Receiver().process(y, fr.training, n, vac, drk)
    b = Receiver().process(y, fr.training, n, vac, drk)
    assert np.array_equal(a.symbols, b.symbols)
    a.to_csv(tmp_path / "b.csv")
    lines = (tmp_path / "b.csv").read_text().splitlines()
    assert lines[0] == "index,x,p,is_training"
    assert len(lines) == n + 1
    assert lines[1].endswith(",1") and lines[-1].endswith(",0")
    a.to_json(tmp_path / "b.json")
    summary = json.loads((tmp_path / "b.json").read_text())
    assert summary["n_training"] == fr.layout.n_training
    assert summary["timing_offset"] == a.timing_offset


def test_genie_and_dsp_agree():
    n = 100_000
    fr = frame(n)
    ch = ChannelParams(distance_km=25, excess_noise_snu=0.029, pol_angle=0.6)
    y, state, vac, drk = link(fr, ch, 2)
    cfg = RxConfig(calibration_phasor=True)
    blk = Receiver(cfg).process(y, fr.training, n, vac, drk)
    gen = genie_block(y, state, TxConfig().shift_hz, n, fr.layout.n_training, vac, drk, cfg)
    ref = alice_quadratures(fr.payload)
    d = estimate_channel(ref, blk.payload, ETA, float(blk.v_ele_hat.mean()))
    g = estimate_channel(ref, gen.payload, ETA, float(gen.v_ele_hat.mean()))
    # same noise realization: the paired difference is far below either standard error
    assert abs(d.xi_hat_snu - g.xi_hat_snu) < 0.01
    assert d.xi_std_error > 0.04


@pytest.mark.slow
def test_linear_model_closure_over_a_million_symbols():
    n, frames = 100_000, 10
    ch = ChannelParams(distance_km=25, excess_noise_snu=0.029, pol_angle=0.6)
    xs, ys, v = [], [], []
    for s in range(frames):
        fr = frame(n, seed=10 + s)
        y, _, vac, drk = link(fr, ch, 10 + s)
        blk = Receiver().process(y, fr.training, n, vac, drk)
        xs.append(alice_quadratures(fr.payload))
        ys.append(blk.payload)
        v.append(blk.v_ele_hat.mean())
    x, y = np.vstack(xs), np.vstack(ys)
    r = estimate_channel(x, y, ETA, float(np.mean(v)))
    t2 = ETA * ch.transmittance / 2
    assert r.t_hat ** 2 == pytest.approx(t2, rel=0.01)
    assert r.var_z_hat == pytest.approx(1 + VELE + t2 * 0.029, rel=0.01)
