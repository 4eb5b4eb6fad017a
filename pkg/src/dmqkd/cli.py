"""Command-line entry point ``dmqkd``.

Stages can run one at a time, passing files through a directory::

    dmqkd simulate --out run1          # symbols.csv, signal/vacuum/dark.cvqw
    dmqkd dsp --in run1 --out run1     # recovered.csv, dsp.json
    dmqkd estimate --in run1 --out run1

or all at once with ``dmqkd run``. Every output records the config hash and
seed so a file can be traced back to the inputs that made it.
"""

import argparse
import csv
import json
import os
import sys
from dataclasses import replace

import numpy as np

from .config import FORMATS, ExperimentConfig, load_config
from .exceptions import DMQKDError
from .experiment import (make_frame, rate_from_estimates, regenerate_training, run_end_to_end,
                         simulate_link)
from .estimation import estimate_channel
from .optimizer import optimize, write_surface_csv
from .rate import Z_MODELS, RateParams, secret_key_rate
from .report import collect_rows, format_table, write_report_csv
from .rxchain import Receiver, alice_quadratures
from .txchain import FrameLayout
from .waveform import read_cvqw, write_cvqw

__all__ = ["main", "build_parser"]


def _common():
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", metavar="PATH", help="TOML experiment config")
    p.add_argument("--seed", type=int, help="root seed")
    p.add_argument("--out", metavar="DIR", default=".", help="output directory (default: .)")
    p.add_argument("--symbols", type=int, help="symbols per frame")
    p.add_argument("--tests", type=int, help="number of tests")
    p.add_argument("--format", choices=sorted(FORMATS), help="modulation format")
    p.add_argument("--distance", type=float, metavar="KM", help="fiber length")
    p.add_argument("--z-model", choices=Z_MODELS, help="cross-correlation model for the rate")
    p.add_argument("--full-scale", action="store_true", default=None,
                   help="allow frames above the desk-scale limit")
    return p


def build_parser():
    common = _common()
    ap = argparse.ArgumentParser(prog="dmqkd", description="DM CV-QKD link simulator")
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("shape", parents=[common], help="shaped symbol frame to CSV")
    s.add_argument("--test", type=int, default=0)

    s = sub.add_parser("simulate", parents=[common], help="frame through link and detector to CVQW")
    s.add_argument("--test", type=int, default=0)

    s = sub.add_parser("dsp", parents=[common], help="receiver DSP on simulated CVQW records")
    s.add_argument("--in", dest="in_dir", metavar="DIR", help="directory from 'simulate' (default: --out)")

    s = sub.add_parser("estimate", parents=[common], help="channel estimate from symbols and DSP output")
    s.add_argument("--in", dest="in_dir", metavar="DIR", help="directory from 'dsp' (default: --out)")

    s = sub.add_parser("rate", parents=[common], help="key rate as JSON")
    s.add_argument("--xi", type=float, help="excess noise [SNU] (default: config)")
    s.add_argument("--transmittance", type=float, help="overrides the distance")
    s.add_argument("--va", type=float, help="modulation variance [SNU] (default: config)")
    s.add_argument("--batch", metavar="CSV", help="parameter rows; writes rate_batch.csv with results appended")

    s = sub.add_parser("optimize", parents=[common], help="grid search over nu and V_A")
    s.add_argument("--xi", type=float, help="excess noise [SNU] (default: config)")

    s = sub.add_parser("run", parents=[common], help="end-to-end tests and summary")
    s.add_argument("--workers", type=int, default=1)

    s = sub.add_parser("report", parents=[common], help="table from run summaries")
    s.add_argument("inputs", nargs="*", help="summary.json files or run directories")
    return ap


def _config(args):
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    return cfg.with_overrides(seed=args.seed, n_symbols=args.symbols, n_tests=args.tests, fmt=args.format,
                              distance_km=args.distance, z_model=args.z_model, full_scale=args.full_scale)


def _stamp(cfg, **extra):
    return {"config_hash": cfg.config_hash(), "seed": cfg.seed, **extra}


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)


def _dump(obj):
    print(json.dumps(obj, indent=2, sort_keys=True))


def _write_symbols(path, cfg, frame, test):
    mask = frame.layout.training_mask()
    with open(path, "w", newline="") as fh:
        fh.write(f"# config_hash={cfg.config_hash()} seed={cfg.seed} test={test}\n")
        w = csv.writer(fh)
        w.writerow(["index", "re", "im", "is_training"])
        for i, (a, tr) in enumerate(zip(frame.symbols, mask)):
            w.writerow([i, repr(float(a.real)), repr(float(a.imag)), int(tr)])


def _read_table(path):
    with open(path, newline="") as fh:
        meta = {}
        lines = []
        for ln in fh:
            if ln.startswith("#"):
                meta.update(kv.split("=", 1) for kv in ln[1:].split())
            else:
                lines.append(ln)
    return meta, list(csv.DictReader(lines))


def cmd_shape(args, cfg):
    frame = make_frame(cfg, args.test)
    _write_symbols(os.path.join(args.out, "symbols.csv"), cfg, frame, args.test)
    info = _stamp(cfg, test=args.test, n_training=frame.layout.n_training, n_payload=frame.layout.n_payload,
                  va_empirical=float(2 * np.mean(np.abs(frame.payload) ** 2)) if frame.layout.n_payload else 0.0)
    _write_json(os.path.join(args.out, "shape.json"), info)
    _dump(info)


def cmd_simulate(args, cfg):
    frame = make_frame(cfg, args.test)
    rec = simulate_link(cfg, args.test, frame)
    _write_symbols(os.path.join(args.out, "symbols.csv"), cfg, frame, args.test)
    for name, w in rec.items():
        write_cvqw(os.path.join(args.out, f"{name}.cvqw"), w)
    info = _stamp(cfg, test=args.test, n_samples=rec["signal"].n_samples, sample_rate=rec["signal"].sample_rate,
                  config=cfg.to_dict())
    _write_json(os.path.join(args.out, "simulate.json"), info)
    _dump({k: v for k, v in info.items() if k != "config"})


def _test_index(in_dir):
    with open(os.path.join(in_dir, "simulate.json")) as fh:
        return int(json.load(fh)["test"])


def cmd_dsp(args, cfg):
    src = args.in_dir or args.out
    test = _test_index(src)
    rec = {n: read_cvqw(os.path.join(src, f"{n}.cvqw")) for n in ("signal", "vacuum", "dark")}
    training = regenerate_training(cfg, test)
    n = FrameLayout.from_ratio(cfg.frame.n_symbols, cfg.frame.p_ts).n_symbols
    block = Receiver(cfg.dsp).process(rec["signal"], training, n, rec["vacuum"], rec["dark"])
    with open(os.path.join(args.out, "recovered.csv"), "w", newline="") as fh:
        fh.write(f"# config_hash={cfg.config_hash()} seed={cfg.seed} test={test}\n")
        w = csv.writer(fh)
        w.writerow(["index", "x", "p", "is_training"])
        for i, ((x, p), tr) in enumerate(zip(block.symbols, block.training_mask)):
            w.writerow([i, repr(float(x)), repr(float(p)), int(tr)])
    info = _stamp(cfg, test=test, **block.summary())
    _write_json(os.path.join(args.out, "dsp.json"), info)
    _dump(info)


def cmd_estimate(args, cfg):
    src = args.in_dir or args.out
    _, sent = _read_table(os.path.join(src, "symbols.csv"))
    _, recv = _read_table(os.path.join(src, "recovered.csv"))
    with open(os.path.join(src, "dsp.json")) as fh:
        dsp = json.load(fh)
    alpha = np.array([complex(float(r["re"]), float(r["im"])) for r in sent if r["is_training"] == "0"])
    y = np.array([[float(r["x"]), float(r["p"])] for r in recv if r["is_training"] == "0"])
    v_ele = float(np.mean(dsp["v_ele_hat"])) if "v_ele_hat" in dsp else cfg.detector.v_ele_snu
    est = estimate_channel(alice_quadratures(alpha), y, cfg.detector.eta, v_ele)
    rr = rate_from_estimates(cfg, est.xi_hat_snu, est.transmittance_hat)
    info = _stamp(cfg, test=dsp.get("test"), v_ele_hat=v_ele, **est.to_dict(),
                  rate={k: v for k, v in rr.to_dict().items()})
    _write_json(os.path.join(args.out, "estimate.json"), info)
    _dump(info)


_BATCH_KEYS = ("va_snu", "xi_snu", "transmittance", "distance_km", "eta", "v_ele", "beta", "p_ts", "rs_baud")


def _rate_params(cfg, row):
    c = cfg.modulation.constellation()
    z_model = cfg.rate.z_model if c is not None else "gaussian"
    if "transmittance" in row:
        T = float(row["transmittance"])
    else:
        ch = cfg.channel
        T = 10 ** (-ch.atten_db_per_km * float(row.get("distance_km", ch.distance_km)) / 10)
    va = float(row.get("va_snu", cfg.modulation.va))
    if z_model == "dm":
        c = replace(cfg.modulation, va=va).constellation()
    return RateParams(
        va_snu=va, xi_snu=float(row.get("xi_snu", cfg.channel.excess_noise_snu)), transmittance=T,
        eta=float(row.get("eta", cfg.detector.eta)), v_ele=float(row.get("v_ele", cfg.detector.v_ele_snu)),
        beta=float(row.get("beta", cfg.rate.beta)), p_ts=float(row.get("p_ts", cfg.frame.p_ts)),
        rs_baud=float(row.get("rs_baud", cfg.rate.rs_baud)), z_model=z_model,
        constellation=c if z_model == "dm" else None,
    )


def cmd_rate(args, cfg):
    if args.batch:
        with open(args.batch, newline="") as fh:
            reader = csv.DictReader(ln for ln in fh if not ln.startswith("#"))
            cols = list(reader.fieldnames or [])
            rows = list(reader)
        unknown = set(cols) - set(_BATCH_KEYS)
        if unknown:
            raise DMQKDError(f"unknown batch columns: {sorted(unknown)}")
        path = os.path.join(args.out, "rate_batch.csv")
        with open(path, "w", newline="") as fh:
            fh.write(f"# config_hash={cfg.config_hash()} seed={cfg.seed}\n")
            w = csv.writer(fh)
            w.writerow(cols + ["i_ab", "chi_eb", "skr_bps"])
            for row in rows:
                rr = secret_key_rate(_rate_params(cfg, {k: v for k, v in row.items() if v != ""}))
                w.writerow([row[c] for c in cols] + [repr(rr.i_ab), repr(rr.chi_eb), repr(rr.skr_bps)])
        _dump(_stamp(cfg, rows=len(rows), output=path))
        return
    row = {}
    if args.xi is not None:
        row["xi_snu"] = args.xi
    if args.transmittance is not None:
        row["transmittance"] = args.transmittance
    if args.va is not None:
        row["va_snu"] = args.va
    p = _rate_params(cfg, row)
    rr = secret_key_rate(p)
    params = p.to_dict()
    _dump(_stamp(cfg, params=params, **rr.to_dict()))


def cmd_optimize(args, cfg):
    order = cfg.modulation.order if cfg.modulation.order is not None else "gaussian"
    z_model = args.z_model or "dm"
    xi = args.xi if args.xi is not None else cfg.channel.excess_noise_snu
    d = cfg.detector
    res = optimize(order, cfg.channel.distance_km, xi, z_model=z_model, eta=d.eta, v_ele=d.v_ele_snu,
                   beta=cfg.rate.beta, p_ts=cfg.frame.p_ts, rs_baud=cfg.rate.rs_baud,
                   atten_db_per_km=cfg.channel.atten_db_per_km)
    write_surface_csv(res, os.path.join(args.out, "surface.csv"))
    write_surface_csv(res, os.path.join(args.out, "surface_fine.csv"), fine=True)
    info = _stamp(cfg, **res.summary())
    _write_json(os.path.join(args.out, "optimize.json"), info)
    _dump(info)


def cmd_run(args, cfg):
    def progress(r):
        print(f"test {r.test}: T={r.transmittance_hat:.5f} xi={r.xi_hat:+.4f} skr={r.skr_bps / 1e6:.3f} Mbps",
              file=sys.stderr)

    res = run_end_to_end(cfg, args.out, progress=progress, workers=args.workers)
    _dump(res.summary)


def cmd_report(args, cfg):
    rows = collect_rows(args.inputs)
    write_report_csv(rows, os.path.join(args.out, "report.csv"))
    print(format_table(rows))


_COMMANDS = {"shape": cmd_shape, "simulate": cmd_simulate, "dsp": cmd_dsp, "estimate": cmd_estimate,
             "rate": cmd_rate, "optimize": cmd_optimize, "run": cmd_run, "report": cmd_report}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = _config(args)
        os.makedirs(args.out, exist_ok=True)
        _COMMANDS[args.command](args, cfg)
    except (DMQKDError, OSError, KeyError) as exc:
        print(f"dmqkd {args.command}: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
