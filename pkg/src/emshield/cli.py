"""Command-line front end.

Exit codes: 0 ok, 2 usage or config error, 3 I/O error, 4 sweep finished
with failed cells. Data goes to files; stdout gets a one-line summary.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import config as cfgio
from . import detector, scenarios
from .errors import ConfigError, DegenerateK, EmShieldError, Infeasible, InvalidRegime, InvalidSpec

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_PARTIAL = 0, 2, 3, 4

class _Usage(Exception):
    pass


def _float_list(text: str) -> list[float]:
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def _count(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 0:
        raise argparse.ArgumentTypeError("must be >= 0")
    return v


def _args_hash(payload: dict) -> str:
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _write(path, text: str) -> None:
    Path(path).write_text(text, encoding="utf-8")


def _emit(out, text: str, summary: str) -> None:
    if out:
        _write(out, text)
        print(summary)
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_calibrate(args) -> int:
    base, _ = cfgio.load(args.config)
    cal = scenarios.calibrate(base, runs=args.runs, margin=args.margin, workers=args.workers,
                              floor=args.floor)
    doc = cal.to_dict()
    _write(args.out, json.dumps(doc, indent=2, sort_keys=True) + "\n")
    print(f"epsilon={cal.epsilon:.6g} V from {cal.runs} runs (worst {cal.worst_peak:.6g} V, "
          f"margin {cal.margin}){' floor applied' if cal.floor_applied else ''} "
          f"config_hash={cal.config_hash}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    base, grid = cfgio.load(args.config)
    if args.seed is not None:
        base = replace(base, seed=args.seed)
    if grid is None and (args.freqs is None or args.amps is None) and not args.no_attack:
        raise _Usage("no grid in config; pass --freqs and --amps")
    freqs = args.freqs if args.freqs is not None else (grid.freqs if grid else ())
    amps = args.amps if args.amps is not None else (grid.amplitudes if grid else ())
    repeats = args.repeats if args.repeats is not None else (grid.repeats if grid else 1)
    clean = args.no_attack if args.no_attack is not None else (grid.include_no_attack if grid else 0)
    grid = scenarios.SweepGrid(tuple(freqs), tuple(amps), repeats, clean)
    report = scenarios.run_sweep(base, grid, workers=args.workers)
    _write(f"{args.out}.csv", report.csv_text())
    _write(f"{args.out}.json", report.json_text())
    s = report.summary()
    print(f"{base.system}: {s['n_attack']} attack + {s['n_no_attack']} clean runs, "
          f"tpr={_fmt(report.tpr)} fpr={_fmt(report.fpr)} errors={s['n_errors']} "
          f"config_hash={s['config_hash']}")
    return EXIT_PARTIAL if report.n_errors else EXIT_OK


def _fmt(v) -> str:
    return "n/a" if v is None else f"{v:.4f}"


def cmd_design(args) -> int:
    params = detector.design_params(args.pmin, args.noise_peak, args.g, args.kmax)
    inputs = {"pmin": args.pmin, "noise_peak": args.noise_peak, "g": list(args.g), "kmax": args.kmax}
    doc = {"k": params.k, "g": params.g, "epsilon": params.epsilon,
           "feasible": detector.feasibility_check(params, args.pmin, args.noise_peak),
           "inputs": inputs, "config_hash": _args_hash({"design": inputs})}
    _emit(args.out, json.dumps(doc, indent=2, sort_keys=True) + "\n",
          f"K={params.k:g} G={params.g:g} epsilon={params.epsilon:.6g} V "
          f"config_hash={doc['config_hash']}")
    return EXIT_OK


def cmd_curve(args) -> int:
    rows = detector.min_power_curve(args.k_list, args.g, args.epsilon, args.noise_peak)
    inputs = {"k_list": list(args.k_list), "g": args.g, "epsilon": args.epsilon,
              "noise_peak": args.noise_peak}
    h = _args_hash({"curve": inputs})
    buf = io.StringIO()
    buf.write(f"# config_hash={h}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["k", "p_min"])
    for k, p in rows:
        w.writerow([repr(float(k)), repr(float(p))])
    _emit(args.out, buf.getvalue(), f"{len(rows)} curve points config_hash={h}")
    return EXIT_OK


def cmd_cancel(args) -> int:
    req = detector.cancellation_requirements(args.spacing, args.g, args.k)
    inputs = {"spacing": args.spacing, "g": args.g, "k": args.k}
    doc = {**req, "config_hash": _args_hash({"cancel": inputs})}
    _emit(args.out, json.dumps(doc, indent=2, sort_keys=True) + "\n",
          f"f_required={req['f_required']:.6g} Hz power_ratio_required={req['power_ratio_required']:g} "
          f"config_hash={doc['config_hash']}")
    return EXIT_OK


def cmd_preset(args) -> int:
    if args.system == "speaker":
        cfg = scenarios.speaker_preset()
        grid = scenarios.SweepGrid(tuple(np.geomspace(1e6, 1e9, 8)), scenarios.SPEAKER_AMPLITUDES,
                                   5, 100)
    else:
        cfg = scenarios.motor_preset()
        grid = scenarios.SweepGrid(scenarios.MOTOR_FREQS, scenarios.MOTOR_AMPLITUDES, 10, 50)
    _emit(args.out, cfgio.dumps(cfg, grid),
          f"{args.system} preset written config_hash={scenarios.config_hash(cfg, grid)}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="emshield", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("calibrate", help="derive the detection threshold from attack-free runs")
    c.add_argument("config")
    c.add_argument("--runs", type=_positive_int, default=50)
    c.add_argument("--margin", type=float, default=1.2)
    c.add_argument("--floor", type=float, default=1e-6, help="lowest threshold written (V)")
    c.add_argument("--workers", type=_positive_int, default=None)
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_calibrate)

    s = sub.add_parser("sweep", help="run a frequency x amplitude attack grid")
    s.add_argument("config")
    s.add_argument("--freqs", type=_float_list, help="carrier frequencies, Hz, comma separated")
    s.add_argument("--amps", type=_float_list, help="attack amplitudes, Vpp, comma separated")
    s.add_argument("--repeats", type=_positive_int)
    s.add_argument("--no-attack", type=_count, dest="no_attack", help="attack-free runs to add")
    s.add_argument("--seed", type=int)
    s.add_argument("--workers", type=_positive_int, default=None)
    s.add_argument("--out", required=True, help="output prefix; writes PREFIX.csv and PREFIX.json")
    s.set_defaults(func=cmd_sweep)

    d = sub.add_parser("design", help="pick K, G and epsilon for a minimum attack level")
    d.add_argument("--pmin", type=float, required=True)
    d.add_argument("--noise-peak", type=float, required=True, dest="noise_peak")
    d.add_argument("--g", type=_float_list, required=True, help="available gains")
    d.add_argument("--kmax", type=float, required=True)
    d.add_argument("--out")
    d.set_defaults(func=cmd_design)

    k = sub.add_parser("curve", help="minimum detectable level against K")
    k.add_argument("--k-list", type=_float_list, required=True, dest="k_list")
    k.add_argument("--g", type=float, required=True)
    k.add_argument("--epsilon", type=float, required=True)
    k.add_argument("--noise-peak", type=float, default=0.0, dest="noise_peak")
    k.add_argument("--out")
    k.set_defaults(func=cmd_curve)

    x = sub.add_parser("cancel", help="what an attacker needs to cancel the detector")
    x.add_argument("--spacing", type=float, required=True, help="wire spacing, m")
    x.add_argument("--g", type=float, required=True)
    x.add_argument("--k", type=float, required=True)
    x.add_argument("--out")
    x.set_defaults(func=cmd_cancel)

    r = sub.add_parser("preset", help="write a preset config with its default grid")
    r.add_argument("system", choices=("speaker", "motor"))
    r.add_argument("--out")
    r.set_defaults(func=cmd_preset)
    return p


def _reason(exc: Exception) -> str:
    return getattr(exc, "reason", None) or str(exc)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except _Usage as exc:
        parser.print_usage(sys.stderr)
        print(f"emshield: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (Infeasible, InvalidRegime, DegenerateK) as exc:
        print(json.dumps({"error": type(exc).__name__, "reason": _reason(exc)}), file=sys.stderr)
        return EXIT_USAGE
    except (ConfigError, InvalidSpec, EmShieldError) as exc:
        print(f"emshield: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"emshield: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
