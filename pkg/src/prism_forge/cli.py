"""Command-line front end.

Exit codes: 0 success, 1 validation found violations, 2 parse/usage errors
(with line and column where known), 3 engine errors.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import acquisition, experiment, extraction, floquet, metrics, scenario

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_PARSE = 2
EXIT_ENGINE = 3


def _err(msg):
    print(f"prism-forge: error: {msg}", file=sys.stderr)


def _resolve_spec(path):
    if os.path.exists(path):
        return path
    try:
        return experiment.bundled_spec_path(path)
    except FileNotFoundError:
        raise experiment.SpecError(f"spec file not found: {path}") from None


def _load(args):
    spec = experiment.load_spec(_resolve_spec(args.spec))
    target = scenario.read_waveform_csv(args.target_csv) if getattr(args, "target_csv", None) else None
    return spec, target


def cmd_simulate(args):
    spec, target = _load(args)
    raw = {k: v for k, v in spec.raw.items() if k != "sweep"}
    summary = experiment.run_point(spec, raw, args.out, target, args.seed)
    experiment._dump_json({"name": spec.name, "points": [{"index": 0, "dir": ".",
                                                          "summary": summary}]},
                          os.path.join(args.out, "index.json"))
    return EXIT_OK


def cmd_sweep(args):
    spec, target = _load(args)
    experiment.run_experiment(spec, args.out, experiment.default_threads(args.threads),
                              args.seed, target)
    return EXIT_OK


def cmd_extract(args):
    rec = acquisition.read_record_csv(args.record)
    os.makedirs(args.out, exist_ok=True)
    d = experiment.extract(rec, args.variant, args.baseline_window)
    experiment.write_extraction_csv(d, os.path.join(args.out, "extraction.csv"))
    if args.calibration_end is not None:
        hint = extraction.CalibrationHint(args.calibration_end, args.frame0_sign)
        r3 = extraction.reconstruct_3d(rec, hint, envelope_window=args.envelope_window,
                                       baseline_window=args.baseline_window)
        with open(os.path.join(args.out, "reconstruction.csv"), "w") as fh:
            fh.write("time_s,frame,mx,my,mz,norm\n")
            for row in zip(r3.times, r3.frame, r3.mx, r3.my, r3.mz, r3.norm):
                fh.write(f"{float(row[0])!r},{int(row[1])},"
                         + ",".join(repr(float(v)) for v in row[2:]) + "\n")
    return EXIT_OK


def cmd_metrics(args):
    rec = acquisition.read_record_csv(args.record)
    os.makedirs(args.out, exist_ok=True)
    d = experiment.extract(rec, args.variant, args.baseline_window)
    mcfg = {"calibration": args.calibration}
    if args.f_test is not None:
        mcfg["f_test"] = args.f_test
    summary = experiment.record_metrics(rec, d, mcfg)
    experiment._dump_json(summary, os.path.join(args.out, "metrics.json"))
    spec = metrics.amplitude_spectrum(d.values, d.sample_rate)
    with open(os.path.join(args.out, "spectrum.csv"), "w") as fh:
        fh.write("freq_hz,magnitude\n")
        for f, m in zip(spec.freqs, spec.magnitudes):
            fh.write(f"{float(f)!r},{float(m)!r}\n")
    return EXIT_OK


def cmd_stability_map(args):
    spec, _ = _load(args)
    plan = experiment.build(spec)
    if plan.protocol is None:
        raise experiment.SpecError("spec has no protocol section")
    os.makedirs(args.out, exist_ok=True)
    experiment.write_stability_map(plan.protocol, os.path.join(args.out, "stability_map.csv"),
                                   args.count)
    return EXIT_OK


def cmd_validate(args):
    spec = experiment.load_spec(_resolve_spec(args.spec))
    rep = experiment.validate(spec)
    print(json.dumps(rep, indent=2, sort_keys=True))
    return EXIT_INVALID if rep["violations"] else EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="prism-forge", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, spec=True):
        if spec:
            sp.add_argument("--spec", required=True,
                            help="spec file, or a bundled name (fig4c, fig5c)")
        sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--seed", type=int, default=None, help="override the scenario seed")
        sp.add_argument("--threads", type=int, default=None,
                        help="worker threads (default: $PRISM_FORGE_THREADS or 1)")

    s = sub.add_parser("simulate", help="run one configuration (sweep ignored)")
    common(s)
    s.add_argument("--target-csv", help="target waveform CSV (time_s,value)")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("sweep", help="run every sweep point of a spec")
    common(s)
    s.add_argument("--target-csv", help="target waveform CSV (time_s,value)")
    s.set_defaults(func=cmd_sweep)

    def extraction_args(sp):
        sp.add_argument("--record", required=True, help="record CSV (time_s,mx,my,frame)")
        sp.add_argument("--variant", choices=("plain", "normalized", "extended"), default="plain")
        sp.add_argument("--baseline-window", type=int, default=101)

    s = sub.add_parser("extract", help="differential extraction of a record CSV")
    common(s, spec=False)
    extraction_args(s)
    s.add_argument("--envelope-window", type=int, default=100)
    s.add_argument("--calibration-end", type=float, default=None,
                   help="end of the calibration rotation (s); enables 3D reconstruction")
    s.add_argument("--frame0-sign", type=int, choices=(-1, 1), default=1)
    s.set_defaults(func=cmd_extract)

    s = sub.add_parser("metrics", help="spectrum, response and sensitivity of a record CSV")
    common(s, spec=False)
    extraction_args(s)
    s.add_argument("--f-test", type=float, default=None)
    s.add_argument("--calibration", type=float, default=1.0,
                   help="field units per magnitude unit")
    s.set_defaults(func=cmd_metrics)

    s = sub.add_parser("stability-map", help="one-cycle displacement over a sphere grid")
    common(s)
    s.add_argument("--count", type=int, default=10_000)
    s.set_defaults(func=cmd_stability_map)

    s = sub.add_parser("validate", help="check a spec without running it")
    s.add_argument("--spec", required=True)
    s.set_defaults(func=cmd_validate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except scenario.WaveformParseError as exc:
        _err(f"{getattr(args, 'target_csv', None) or 'waveform'}: {exc}")
        return EXIT_PARSE
    except experiment.SpecError as exc:
        _err(f"{getattr(args, 'spec', None) or 'spec'}: {exc}")
        return EXIT_PARSE
    except (acquisition.EngineError, floquet.DegenerateProtocolError) as exc:
        _err(f"engine: {exc}")
        return EXIT_ENGINE
    except (OSError, ValueError) as exc:
        _err(str(exc))
        return EXIT_PARSE


if __name__ == "__main__":
    sys.exit(main())
