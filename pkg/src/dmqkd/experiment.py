"""Seeded end-to-end runs: shape → modulate → channel → detect → DSP →
estimate → rate.

Every random draw comes from ``cfg.seed`` through labeled derivation
(``("test", i, stage)``), so test ``i`` sees the same numbers whether it runs
alone or inside a series, and adding a stage does not disturb the others.
"""

import csv
import json
import os
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager
from dataclasses import asdict, dataclass, replace

import numpy as np

from .channel import ChannelParams, apply_channel, dark_record, detect, vacuum_record
from .estimation import estimate_channel
from .exceptions import DMQKDError, StageError
from .rate import RateParams, secret_key_rate
from .rxchain import Receiver, alice_quadratures, bandpass_and_shift, genie_block, matched_filter_downsample
from .seeding import derive_rng, derive_seed
from .txchain import Frame, FrameLayout, build_frame, training_symbols, transmit
from .waveform import WaveformBuffer

__all__ = [
    "TestRecord",
    "RunResult",
    "DspPenalty",
    "stage",
    "make_frame",
    "simulate_link",
    "run_test",
    "run_end_to_end",
    "summarize",
    "rate_from_estimates",
    "ideal_link",
    "dsp_excess_noise",
    "genie_distortion",
    "write_records_csv",
    "read_records_csv",
]


@contextmanager
def stage(name):
    """Re-raise package errors from inside the block as :class:`StageError`."""
    try:
        yield
    except StageError:
        raise
    except (DMQKDError, ValueError, ArithmeticError) as exc:
        raise StageError(name, exc) from exc


@dataclass
class TestRecord:
    test: int
    seed: int
    n_used: int
    t_hat: float
    transmittance_hat: float
    transmittance_se: float
    xi_hat: float
    xi_se: float
    v_ele_hat: float
    residual_freq_hz: float
    pilot_snr: float
    timing_offset: int
    i_ab: float
    chi_eb: float
    skr_bps: float
    clamped: bool


@dataclass
class RunResult:
    records: list
    summary: dict


def _gaussian_alpha(rng, n, va):
    # V_A = 2 E|α|², split evenly over the two quadratures
    return (rng.standard_normal(n) + 1j * rng.standard_normal(n)) * np.sqrt(va / 4)


def make_frame(cfg, test):
    mod, fr = cfg.modulation, cfg.frame
    layout = FrameLayout.from_ratio(fr.n_symbols, fr.p_ts)
    train_seed = derive_seed(cfg.seed, "test", test, "training")
    payload_rng = derive_rng(cfg.seed, "test", test, "payload")
    c = mod.constellation()
    if c is None:
        train = _gaussian_alpha(np.random.default_rng(train_seed), layout.n_training, mod.va)
        payload = _gaussian_alpha(payload_rng, layout.n_payload, mod.va)
        return Frame(layout, np.concatenate([train, payload]))
    return build_frame(c, layout, payload_rng, train_seed, ccdm_length=fr.ccdm_length)


def regenerate_training(cfg, test):
    """The training preamble Bob regenerates from the shared seed."""
    layout = FrameLayout.from_ratio(cfg.frame.n_symbols, cfg.frame.p_ts)
    seed = derive_seed(cfg.seed, "test", test, "training")
    c = cfg.modulation.constellation()
    if c is None:
        return _gaussian_alpha(np.random.default_rng(seed), layout.n_training, cfg.modulation.va)
    return training_symbols(c, layout.n_training, seed)


def simulate_link(cfg, test, frame, return_state=False):
    """Detected signal record plus vacuum and dark calibration records."""
    with stage("modulate"):
        w = transmit(frame, cfg.tx)
    with stage("channel"):
        out = apply_channel(w, cfg.channel, derive_rng(cfg.seed, "test", test, "channel"),
                            return_state=return_state)
        field, state = out if return_state else (out, None)
    with stage("detect"):
        det = cfg.detector
        signal = detect(field, det, derive_rng(cfg.seed, "test", test, "detect"))
        vac = vacuum_record(w.n_samples, w.sample_rate, det, derive_rng(cfg.seed, "test", test, "vacuum"))
        drk = dark_record(w.n_samples, w.sample_rate, det, derive_rng(cfg.seed, "test", test, "dark"))
    records = {"signal": signal, "vacuum": vac, "dark": drk}
    return (records, state) if return_state else records


def rate_from_estimates(cfg, xi, transmittance):
    """Key rate at the estimated channel; ``ξ̂ < 0`` is reported at 0 and ``T̂`` capped at 1."""
    c = cfg.modulation.constellation()
    z_model = cfg.rate.z_model if c is not None else "gaussian"
    p = RateParams(
        va_snu=cfg.modulation.va, xi_snu=max(float(xi), 0.0),
        transmittance=min(max(float(transmittance), 1e-12), 1.0),
        eta=cfg.detector.eta, v_ele=cfg.detector.v_ele_snu, beta=cfg.rate.beta, p_ts=cfg.frame.p_ts,
        rs_baud=cfg.rate.rs_baud, z_model=z_model, constellation=c if z_model == "dm" else None,
    )
    return secret_key_rate(p)


def run_test(cfg, test):
    with stage("shape"):
        frame = make_frame(cfg, test)
    rec = simulate_link(cfg, test, frame)
    with stage("dsp"):
        block = Receiver(cfg.dsp).process(rec["signal"], frame.training, frame.layout.n_symbols,
                                          rec["vacuum"], rec["dark"])
    with stage("estimate"):
        v_ele = float(np.mean(block.v_ele_hat))
        est = estimate_channel(alice_quadratures(frame.payload), block.payload, cfg.detector.eta, v_ele)
    with stage("rate"):
        rr = rate_from_estimates(cfg, est.xi_hat_snu, est.transmittance_hat)
    return TestRecord(
        test=test, seed=cfg.seed, n_used=est.n_used, t_hat=est.t_hat,
        transmittance_hat=est.transmittance_hat, transmittance_se=est.transmittance_std_error,
        xi_hat=est.xi_hat_snu, xi_se=est.xi_std_error, v_ele_hat=v_ele,
        residual_freq_hz=block.residual_freq_hz, pilot_snr=float(block.pilot_snr),
        timing_offset=int(block.timing_offset), i_ab=rr.i_ab, chi_eb=rr.chi_eb, skr_bps=rr.skr_bps,
        clamped=rr.clamped,
    )


def summarize(cfg, records):
    xi = np.array([r.xi_hat for r in records])
    T = np.array([r.transmittance_hat for r in records])
    skr = np.array([r.skr_bps for r in records])
    n = len(records)

    def se(a):
        return float(a.std(ddof=1) / np.sqrt(a.size)) if a.size > 1 else float("nan")

    out = {
        "config_hash": cfg.config_hash(),
        "seed": cfg.seed,
        "n_tests": n,
        "n_symbols": cfg.frame.n_symbols,
        "format": cfg.modulation.format,
        "nu": cfg.modulation.nu,
        "va": cfg.modulation.va,
        "distance_km": cfg.channel.distance_km,
        "xi_injected": cfg.channel.excess_noise_snu,
        "transmittance_true": cfg.channel.transmittance,
        "xi_mean": float(xi.mean()) if n else float("nan"),
        "xi_std": float(xi.std(ddof=1)) if n > 1 else float("nan"),
        "xi_se": se(xi),
        "transmittance_mean": float(T.mean()) if n else float("nan"),
        "transmittance_se": se(T),
        "skr_mean_bps": float(skr.mean()) if n else float("nan"),
    }
    if n:
        rr = rate_from_estimates(cfg, out["xi_mean"], out["transmittance_mean"])
        out.update(i_ab=rr.i_ab, chi_eb=rr.chi_eb, skr_at_mean_bps=rr.skr_bps, clamped_at_mean=rr.clamped)
    return out


_FIELDS = [f for f in TestRecord.__dataclass_fields__]


def write_records_csv(records, path, config_hash=""):
    with open(path, "w", newline="") as fh:
        fh.write(f"# config_hash={config_hash}\n")
        w = csv.writer(fh)
        w.writerow(_FIELDS)
        for r in records:
            row = asdict(r)
            w.writerow([repr(row[k]) if isinstance(row[k], float) else row[k] for k in _FIELDS])


def read_records_csv(path):
    types = {k: f.type for k, f in TestRecord.__dataclass_fields__.items()}
    conv = {int: int, float: float, bool: lambda s: s == "True", "int": int, "float": float,
            "bool": lambda s: s == "True"}
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    rows = list(csv.DictReader(lines))
    return [TestRecord(**{k: conv[types[k]](v) for k, v in row.items()}) for row in rows]


def run_end_to_end(cfg, out_dir=None, progress=None, workers=1):
    """Run ``cfg.n_tests`` seeded tests; optionally write ``tests.csv`` and ``summary.json``.

    With ``workers > 1`` tests run in worker processes. Each test draws only
    from its own derived seeds and records are kept in test order, so the
    output does not depend on the worker count.
    """
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(run_test, [cfg] * cfg.n_tests, range(cfg.n_tests)))
        if progress is not None:
            for r in records:
                progress(r)
    else:
        records = []
        for i in range(cfg.n_tests):
            records.append(run_test(cfg, i))
            if progress is not None:
                progress(records[-1])
    summary = summarize(cfg, records)
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        write_records_csv(records, os.path.join(out_dir, "tests.csv"), summary["config_hash"])
        with open(os.path.join(out_dir, "summary.json"), "w") as fh:
            json.dump({"config": cfg.to_dict(), "summary": summary}, fh, indent=2, sort_keys=True)
    return RunResult(records, summary)


# ------------------------------------------------------------ DSP penalty

def ideal_link(cfg):
    """Same operating point without lasers' phase noise, offset or polarization change.

    With no offset the pilot stays at 0 Hz and the quantum signal at the
    transmitter's shift, so the receiver's IFs move accordingly.
    """
    ch = cfg.channel
    channel = ChannelParams.ideal(ch.distance_km, ch.excess_noise_snu)
    channel = replace(channel, atten_db_per_km=ch.atten_db_per_km)
    dsp = replace(cfg.dsp, quantum_if_hz=cfg.tx.shift_hz, pilot_if_hz=cfg.tx.pilot_freq_hz)
    return replace(cfg, channel=channel, dsp=dsp)


@dataclass
class DspPenalty:
    """Excess noise added by the blind DSP relative to a genie receiver."""

    mean: float
    se: float
    differences: np.ndarray
    xi_dsp: np.ndarray
    xi_genie: np.ndarray
    n_symbols: int

    def summary(self):
        return {"mean": self.mean, "se": self.se, "n_frames": int(self.differences.size),
                "n_symbols": self.n_symbols, "differences": self.differences.tolist()}


def dsp_excess_noise(cfg, n_frames):
    """Paired ``ξ̂_DSP - ξ̂_genie`` over ``n_frames`` frames.

    Both receivers process the same detected record and calibration
    records; the genie undoes the channel's true carrier phase and
    polarization and skips the equalizer. The calibration records are
    rotated by the pilot phasor in the DSP path so both receivers see the
    same noise realization, which cancels the statistical error shared by
    the two estimates.
    """
    cfg = replace(cfg, dsp=replace(cfg.dsp, calibration_phasor=True))
    dsp_xi, gen_xi = [], []
    for i in range(n_frames):
        with stage("shape"):
            frame = make_frame(cfg, i)
        rec, state = simulate_link(cfg, i, frame, return_state=True)
        n = frame.layout.n_symbols
        with stage("dsp"):
            blk = Receiver(cfg.dsp).process(rec["signal"], frame.training, n, rec["vacuum"], rec["dark"])
            gen = genie_block(rec["signal"], state, cfg.tx.shift_hz, n, frame.layout.n_training,
                              rec["vacuum"], rec["dark"], cfg.dsp)
        with stage("estimate"):
            ref = alice_quadratures(frame.payload)
            eta = cfg.detector.eta
            d = estimate_channel(ref, blk.payload, eta, float(np.mean(blk.v_ele_hat)))
            g = estimate_channel(ref, gen.payload, eta, float(np.mean(gen.v_ele_hat)))
        dsp_xi.append(d.xi_hat_snu)
        gen_xi.append(g.xi_hat_snu)
    dsp_xi, gen_xi = np.array(dsp_xi), np.array(gen_xi)
    diff = dsp_xi - gen_xi
    se = float(diff.std(ddof=1) / np.sqrt(diff.size)) if diff.size > 1 else float("nan")
    return DspPenalty(float(diff.mean()), se, diff, dsp_xi, gen_xi, n_frames * cfg.frame.n_symbols)


def genie_distortion(cfg, test=0):
    """Input-referred distortion [SNU] of the genie receiver on a noiseless record.

    What is left after undoing the channel exactly comes from the pulse
    shaping, band limits and detector response. It is the floor under the
    paired difference of :func:`dsp_excess_noise`.
    """
    cfg = replace(cfg, channel=replace(cfg.channel, excess_noise_snu=0.0))
    frame = make_frame(cfg, test)
    w = transmit(frame, cfg.tx)
    field, state = apply_channel(w, cfg.channel, derive_rng(cfg.seed, "test", test, "channel"),
                                 return_state=True)
    det = cfg.detector
    y = detect(field, det, noiseless=True)
    fs = y.sample_rate
    branches = bandpass_and_shift(y, cfg.dsp, pilot=False)
    undone = state.inverse(WaveformBuffer.from_array(fs, branches.quantum)).as_array()
    undone = undone * np.exp(-2j * np.pi * cfg.tx.shift_hz * np.arange(y.n_samples) / fs)
    s, _ = matched_filter_downsample(undone, None, frame.layout.n_symbols, cfg.dsp,
                                     offset=cfg.dsp.span * cfg.dsp.sps)
    t = det.raw_gain * np.sqrt(det.eta * cfg.channel.transmittance / 2)
    e = s[:, :2] / t - alice_quadratures(frame.symbols)
    return float(e[frame.layout.n_training:].var(axis=0).mean())
