"""Experiment spec files: parsing, validation and execution.

A spec is a JSON document with a ``schema_version`` field::

    {
      "schema_version": 1,
      "name": "...",
      "protocol": {"pulse_duration": 1e-4, "spacing": 1e-4, "flip_angle_deg": 166, ...},
      "scenario": {"duration": 1.0, "target": {"kind": "sine", ...}, ...},
      "mode": {"kind": "geometric"},
      "extraction": {"variant": "plain"},
      "metrics": {"f_test": 20.0},
      "outputs": ["record", "extraction", "metrics"],
      "sweep": {"parameter": "protocol.flip_angle_deg", "values": [...], "order": "given"}
    }

Angles may be given in degrees by suffixing the key with ``_deg``
(``flip_angle_deg``, ``orbit_phase_deg``); ``orbit_rate_deg_per_100us`` sets
``orbit_amplitude``. The analysis ``"suppression_curve"`` runs the synthetic
suppression sweep instead of the engine.
"""

from __future__ import annotations

import copy
import json
import math
import os
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields

import numpy as np

from . import acquisition, extraction, floquet, metrics, scenario

SCHEMA_VERSION = 1

OUTPUT_KINDS = ("record", "extraction", "metrics", "stability_map", "trace")
TOP_KEYS = {"schema_version", "name", "description", "protocol", "scenario", "mode",
            "extraction", "metrics", "outputs", "sweep", "analysis", "stability_map"}


class SpecError(ValueError):
    """Spec parse or schema error, located by 1-based line and column."""

    def __init__(self, message, line=1, column=1):
        super().__init__(f"line {line}, column {column}: {message}")
        self.message = message
        self.line = line
        self.column = column


def _locate(text: str, key: str):
    i = text.find(f'"{key}"')
    if i < 0:
        return 1, 1
    line = text.count("\n", 0, i) + 1
    col = i - (text.rfind("\n", 0, i) + 1) + 1
    return line, col


@dataclass
class ExperimentSpec:
    raw: dict
    text: str = ""
    source: str = "<spec>"
    warnings: list = field(default_factory=list)

    @property
    def name(self) -> str:
        return str(self.raw.get("name", "experiment"))

    def fail(self, message, key=None):
        line, col = _locate(self.text, key) if key else (1, 1)
        raise SpecError(message, line, col)


def parse_spec(text: str, source: str = "<spec>") -> ExperimentSpec:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SpecError(exc.msg, exc.lineno, exc.colno) from None
    if not isinstance(raw, dict):
        raise SpecError("spec must be a JSON object")
    spec = ExperimentSpec(raw, text, source)
    ver = raw.get("schema_version")
    if ver is None:
        spec.fail("missing schema_version")
    if not isinstance(ver, int) or ver > SCHEMA_VERSION or ver < 1:
        spec.fail(f"unsupported schema_version {ver!r} (this build reads {SCHEMA_VERSION})",
                  "schema_version")
    for k in raw:
        if k not in TOP_KEYS:
            spec.fail(f"unknown top-level key {k!r}", k)
    return spec


def load_spec(path) -> ExperimentSpec:
    with open(path) as fh:
        return parse_spec(fh.read(), str(path))


def bundled_spec_path(name: str) -> str:
    """Path of a spec shipped with the package (``fig4c`` or ``fig5c``)."""
    here = os.path.join(os.path.dirname(__file__), "specs")
    p = os.path.join(here, name if name.endswith(".spec") else name + ".spec")
    if not os.path.exists(p):
        raise FileNotFoundError(p)
    return p


def bundled_specs() -> list:
    here = os.path.join(os.path.dirname(__file__), "specs")
    return sorted(f[:-5] for f in os.listdir(here) if f.endswith(".spec"))


# --- building domain objects --------------------------------------------------------

def _field_names(cls):
    return {f.name for f in fields(cls)}


def _protocol(d: dict, spec: ExperimentSpec) -> floquet.ProtocolConfig:
    d = dict(d)
    for key in ("flip_angle", "orbit_phase"):
        if key + "_deg" in d:
            d[key] = math.radians(d.pop(key + "_deg"))
    if "orbit_rate_deg_per_100us" in d:
        d["orbit_amplitude"] = math.radians(d.pop("orbit_rate_deg_per_100us")) / 100e-6
    names = _field_names(floquet.ProtocolConfig)
    for k in d:
        if k not in names:
            spec.fail(f"unknown protocol field {k!r}", k)
    try:
        return floquet.ProtocolConfig(**d)
    except (TypeError, floquet.ConfigError) as exc:
        spec.fail(f"protocol: {exc}", "protocol")


def _waveform(d, spec, key):
    if d is None:
        return scenario.Waveform()
    names = _field_names(scenario.Waveform)
    for k in d:
        if k not in names:
            spec.fail(f"unknown waveform field {k!r}", k)
    try:
        return scenario.Waveform(**d)
    except (TypeError, scenario.ScenarioError) as exc:
        spec.fail(f"{key}: {exc}", key)


def _scenario(d: dict, spec: ExperimentSpec, target_override=None, seed=None):
    d = dict(d)
    try:
        d["target"] = target_override or _waveform(d.get("target"), spec, "target")
        if isinstance(d.get("bias"), dict):
            d["bias"] = _waveform(d["bias"], spec, "bias")
        d["backgrounds"] = tuple(scenario.BackgroundSpec(**b) for b in d.get("backgrounds", ()))
        if d.get("vibration") is not None:
            v = dict(d["vibration"])
            if isinstance(v.get("trajectory"), dict):
                v["trajectory"] = _waveform(v["trajectory"], spec, "trajectory")
            d["vibration"] = scenario.VibrationSpec(**v)
        if "decay" in d:
            d["decay"] = scenario.DecaySpec(**d["decay"])
        if seed is not None:
            d["rng_seed"] = int(seed)
        names = _field_names(scenario.FieldScenario)
        for k in d:
            if k not in names:
                spec.fail(f"unknown scenario field {k!r}", k)
        return scenario.FieldScenario(**d)
    except (TypeError, scenario.ScenarioError) as exc:
        spec.fail(f"scenario: {exc}", "scenario")


def _mode(d, spec):
    try:
        return acquisition.EngineMode(**(d or {}))
    except (TypeError, ValueError) as exc:
        spec.fail(f"mode: {exc}", "mode")


def set_path(raw: dict, path: str, value) -> dict:
    """Copy of ``raw`` with the dotted ``path`` set to ``value``."""
    out = copy.deepcopy(raw)
    parts = path.split(".")
    node = out
    for p in parts[:-1]:
        if not isinstance(node.get(p), dict):
            raise KeyError(path)
        node = node[p]
    node[parts[-1]] = value
    return out


@dataclass
class RunPlan:
    protocol: floquet.ProtocolConfig | None
    scenario: scenario.FieldScenario | None
    mode: acquisition.EngineMode | None


def build(spec: ExperimentSpec, raw=None, target_override=None, seed=None) -> RunPlan:
    raw = spec.raw if raw is None else raw
    if raw.get("analysis") == "suppression_curve":
        return RunPlan(None, None, None)
    if "protocol" not in raw:
        spec.fail("missing 'protocol' section")
    if "scenario" not in raw:
        spec.fail("missing 'scenario' section")
    return RunPlan(_protocol(raw["protocol"], spec),
                   _scenario(raw["scenario"], spec, target_override, seed),
                   _mode(raw.get("mode"), spec))


def validate(spec: ExperimentSpec) -> dict:
    """Schema and invariant checks without running anything.

    Returns ``{"violations": [...], "warnings": [...]}``.
    """
    violations, warns = [], []
    raw = spec.raw
    for k in raw.get("outputs", []):
        if k not in OUTPUT_KINDS:
            violations.append(f"outputs: unknown artifact {k!r}")
    if raw.get("analysis") not in (None, "suppression_curve"):
        violations.append(f"analysis: unknown analysis {raw.get('analysis')!r}")
    ex = raw.get("extraction", {})
    if ex.get("variant", "plain") not in ("plain", "normalized", "extended"):
        violations.append(f"extraction.variant: unknown variant {ex.get('variant')!r}")
    if raw.get("analysis") != "suppression_curve":
        proto = dict(raw.get("protocol", {}))
        try:
            for key in ("flip_angle", "orbit_phase"):
                if key + "_deg" in proto:
                    proto[key] = math.radians(proto.pop(key + "_deg"))
            if "orbit_rate_deg_per_100us" in proto:
                proto["orbit_amplitude"] = math.radians(proto.pop("orbit_rate_deg_per_100us")) / 100e-6
            unknown = set(proto) - _field_names(floquet.ProtocolConfig)
            violations += [f"protocol.{k}: unknown field" for k in sorted(unknown)]
            if not unknown:
                # bypass __post_init__ so every violation is listed, not just the first
                probe = object.__new__(floquet.ProtocolConfig)
                defaults = {f.name: f.default for f in fields(floquet.ProtocolConfig)}
                defaults.update(proto)
                for k, v in defaults.items():
                    object.__setattr__(probe, k, v)
                for v in probe.violations():
                    if v.startswith("warning:"):
                        warns.append(v[len("warning: "):])
                    else:
                        violations.append("protocol." + v)
        except (TypeError, ValueError) as exc:
            violations.append(f"protocol: {exc}")
        try:
            _scenario(raw.get("scenario", {}), spec)
        except SpecError as exc:
            violations.append(exc.message)
        try:
            _mode(raw.get("mode"), spec)
        except SpecError as exc:
            violations.append(exc.message)
    sw = raw.get("sweep")
    if sw:
        path = sw.get("parameter", "")
        try:
            set_path(raw, path, None)
            head = raw
            for p in path.split("."):
                head = head[p]
        except (KeyError, TypeError):
            violations.append(f"sweep.parameter: path {path!r} does not exist in the spec file")
        if sw.get("order", "given") not in ("given", "shuffled"):
            violations.append("sweep.order: must be 'given' or 'shuffled'")
        if not isinstance(sw.get("values"), list):
            violations.append("sweep.values: must be a list")
    return {"violations": violations, "warnings": warns}


# --- execution ----------------------------------------------------------------------

def _dump_json(obj, path):
    tmp = str(path) + ".tmp"
    with open(tmp, "w") as fh:
        json.dump(obj, fh, sort_keys=True, indent=2, allow_nan=True)
        fh.write("\n")
    os.replace(tmp, path)


def _f(x):
    x = float(x)
    return x if math.isfinite(x) else repr(x)


def write_extraction_csv(d: extraction.DifferentialSignal, path):
    with open(path, "w") as fh:
        fh.write(f"time_s,{d.variant}\n")
        for t, v in zip(d.times, d.values):
            fh.write(f"{float(t)!r},{float(v)!r}\n")


def extract(record, variant="plain", baseline_window=101):
    if variant == "plain":
        return extraction.differential(record)
    if variant == "normalized":
        return extraction.normalized_differential(record, baseline_window)
    if variant == "extended":
        return extraction.extended_extraction(record)
    raise ValueError(f"unknown variant {variant!r}")


def record_metrics(record, d, mcfg: dict) -> dict:
    out = {"samples": len(record), "sample_rate_hz": _f(record.sample_rate),
           "extracted_samples": int(len(d.values))}
    spec = metrics.amplitude_spectrum(d.values, d.sample_rate)
    k = int(np.argmax(spec.magnitudes[1:])) + 1
    out["dominant_frequency_hz"] = _f(spec.freqs[k])
    out["dominant_magnitude"] = _f(spec.magnitudes[k])
    f_test = mcfg.get("f_test")
    mask = []
    if f_test is not None:
        r = metrics.measured_response_from(d, float(f_test))
        out["response"] = {"f_test_hz": float(f_test), "amplitude": _f(r.amplitude),
                           "floor": _f(r.floor), "weak": bool(r.weak)}
        mask = metrics.tone_mask(spec, [float(f_test)])
    try:
        rep = metrics.sensitivity(spec, mask, calibration=float(mcfg.get("calibration", 1.0)))
        out["sensitivity"] = {"value": _f(rep.sensitivity), "rms_floor": _f(rep.rms_floor),
                              "masked_bins": rep.masked_bins}
    except metrics.MetricError as exc:
        out["sensitivity"] = {"error": str(exc)}
    return out


def run_point(spec: ExperimentSpec, raw: dict, out_dir, target_override=None, seed=None) -> dict:
    """Run one configuration and write its artifacts into ``out_dir``."""
    os.makedirs(out_dir, exist_ok=True)
    outputs = raw.get("outputs", ["record", "extraction", "metrics"])
    if raw.get("analysis") == "suppression_curve":
        return run_suppression_curve(raw, out_dir)
    plan = build(spec, raw, target_override, seed)
    record, trace = acquisition.run(plan.protocol, plan.scenario, plan.mode)
    exc = raw.get("extraction", {})
    d = extract(record, exc.get("variant", "plain"), int(exc.get("baseline_window", 101)))
    summary = record_metrics(record, d, raw.get("metrics", {}))
    if "record" in outputs:
        acquisition.write_record_csv(record, os.path.join(out_dir, "record.csv"))
        acquisition.write_record_sidecar(record, os.path.join(out_dir, "record.json"))
    if "trace" in outputs:
        with open(os.path.join(out_dir, "trace.csv"), "w") as fh:
            fh.write("time_s,frame,mx,my,mz,ax,ay,az\n")
            for t, f, m, a in zip(trace.times, trace.frame, trace.states, trace.axes):
                fh.write(",".join([repr(float(t)), str(int(f))] + [repr(float(v)) for v in m]
                                  + [repr(float(v)) for v in a]) + "\n")
    if "extraction" in outputs:
        write_extraction_csv(d, os.path.join(out_dir, "extraction.csv"))
    if "stability_map" in outputs:
        write_stability_map(plan.protocol, os.path.join(out_dir, "stability_map.csv"),
                            int(raw.get("stability_map", {}).get("count", 10_000)))
    if "metrics" in outputs:
        _dump_json(summary, os.path.join(out_dir, "metrics.json"))
    return summary


def write_stability_map(cfg, path, count=10_000):
    sm = floquet.stability_map(cfg, count=count)
    with open(path, "w") as fh:
        fh.write("x,y,z,displacement1,displacement2\n")
        for p, d1, d2 in zip(sm.points, sm.displacement1, sm.displacement2):
            fh.write(",".join(repr(float(v)) for v in (*p, d1, d2)) + "\n")
    return sm


def run_suppression_curve(raw: dict, out_dir) -> dict:
    p = raw.get("suppression_curve", raw.get("metrics", {}))
    f_sig = float(p.get("f_signal", 10.0))
    f_s = float(p.get("f_s", 5000.0))
    freqs = np.arange(float(p.get("f_min", 0.0)), float(p.get("f_max", 1200.0)) + 1e-9,
                      float(p.get("step", 0.5)))
    curve = metrics.suppression_curve(freqs, f_sig, f_s, float(p.get("duration", 1.0)))
    closed = metrics.suppression_closed_form(freqs, f_sig, f_s)
    with open(os.path.join(out_dir, "suppression_curve.csv"), "w") as fh:
        fh.write("bg_freq_hz,eta,eta_closed_form\n")
        for f, e, c in zip(freqs, curve.eta, closed):
            fh.write(f"{float(f)!r},{float(e)!r},{float(c)!r}\n")
    finite = np.isfinite(curve.eta)
    summary = {"f_signal_hz": f_sig, "f_s_hz": f_s, "points": int(freqs.size),
               "eta_min": _f(np.min(curve.eta[finite])),
               "eta_at_20hz": _f(curve.eta[np.argmin(np.abs(freqs - 20.0))]),
               "eta_at_100hz": _f(curve.eta[np.argmin(np.abs(freqs - 100.0))])}
    _dump_json(summary, os.path.join(out_dir, "metrics.json"))
    return summary


def sweep_points(spec: ExperimentSpec) -> list:
    """``[(index, value, raw)]`` in execution order."""
    sw = spec.raw.get("sweep")
    if not sw:
        return [(0, None, spec.raw)]
    values = list(sw.get("values", []))
    if not values:
        return [(0, None, spec.raw)]
    base = {k: v for k, v in spec.raw.items() if k != "sweep"}
    pts = []
    for i, v in enumerate(values):
        try:
            pts.append((i, v, set_path(base, sw["parameter"], v)))
        except KeyError:
            spec.fail(f"sweep parameter path {sw['parameter']!r} does not exist", "parameter")
    if sw.get("order", "given") == "shuffled":
        seed = int(spec.raw.get("scenario", {}).get("rng_seed", 0))
        random.Random(seed).shuffle(pts)
    return pts


def run_experiment(spec: ExperimentSpec, out_dir, threads: int = 1, seed=None,
                   target_override=None) -> dict:
    """Execute an experiment (all sweep points) and write an ``index.json``."""
    os.makedirs(out_dir, exist_ok=True)
    pts = sweep_points(spec)
    if len(pts) == 1 and pts[0][1] is None:
        summary = run_point(spec, pts[0][2], out_dir, target_override, seed)
        index = {"name": spec.name, "points": [{"index": 0, "dir": ".", "summary": summary}]}
        _dump_json(index, os.path.join(out_dir, "index.json"))
        return index
    # validate every point up front so a bad value fails before any work
    for _, _, raw in pts:
        build(spec, raw, target_override, seed)

    def job(p):
        i, v, raw = p
        sub = os.path.join(out_dir, f"point_{i:04d}")
        return i, v, run_point(spec, raw, sub, target_override, seed)

    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            results = list(ex.map(job, pts))
    else:
        results = [job(p) for p in pts]
    results.sort(key=lambda r: r[0])
    param = spec.raw["sweep"]["parameter"]
    index = {"name": spec.name, "parameter": param,
             "points": [{"index": i, "value": v, "dir": f"point_{i:04d}", "summary": s}
                        for i, v, s in results]}
    with open(os.path.join(out_dir, "sweep.csv.tmp"), "w") as fh:
        fh.write(f"{param},response_amplitude,dominant_frequency_hz\n")
        for i, v, s in results:
            amp = s.get("response", {}).get("amplitude", "nan")
            cells = (v, amp, s.get("dominant_frequency_hz", "nan"))
            fh.write(",".join(repr(float(c)) for c in cells) + "\n")
    os.replace(os.path.join(out_dir, "sweep.csv.tmp"), os.path.join(out_dir, "sweep.csv"))
    _dump_json(index, os.path.join(out_dir, "index.json"))
    return index


def default_threads(cli_value=None) -> int:
    if cli_value:
        return max(1, int(cli_value))
    env = os.environ.get("PRISM_FORGE_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return 1
