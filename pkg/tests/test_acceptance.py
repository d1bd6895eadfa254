"""Acceptance checks, one per criterion, each printing a PASS/FAIL line.

Run under pytest (``pytest -s tests/test_acceptance.py`` shows the lines) or
directly as a script (``python tests/test_acceptance.py``). Criteria known to
miss their tolerance are marked ``xfail(strict=True)``; the reasons are
recorded in ``notes/decisions.md``.
"""

import filecmp
import math
import os
import sys
import tempfile
import time
import warnings

import numpy as np
import pytest

from prism_forge import acquisition as A
from prism_forge import experiment
from prism_forge import extraction as E
from prism_forge import floquet as F
from prism_forge import metrics as M
from prism_forge import scenario as S

LEDGER = "known miss, see notes/decisions.md"
RESULTS = []


def report(label, ok, detail, elapsed):
    line = f"[{'PASS' if ok else 'FAIL'}] {label}: {detail} ({elapsed:.2f} s)"
    RESULTS.append((label, ok, line))
    print(line)
    return ok


def _timed(fn):
    t0 = time.perf_counter()
    ok, detail = fn()
    return ok, detail, time.perf_counter() - t0


# --- 1 ------------------------------------------------------------------------------

EPS_DEG = (5.0, 14.0, 20.0)
PHI_A = (0.05, 0.1, 0.2)


def _short_pulse(eps_deg, phi_a):
    tp, ts = 1e-6, 100e-6
    return F.ProtocolConfig(tp, ts, math.pi + math.radians(eps_deg),
                            orbit_amplitude=F.orbit_amplitude_for_phase(phi_a, tp, ts))


def check_elevation_law():
    worst = 0.0
    for e in EPS_DEG:
        for p in PHI_A:
            cfg = _short_pulse(e, p)
            el = F.axes_for(cfg).elevation1
            worst = max(worst, abs(el - F.delta_pulse_elevation(p, cfg.epsilon)))
    return worst < 1e-3, f"max |elev - arctan(phi_a/eps)| = {worst:.2e} rad (tol 1e-3)"


# --- 2 ------------------------------------------------------------------------------

def check_convergence():
    a = F.axes_for(F.reference_protocol(segments_per_pulse=8))
    b = F.axes_for(F.reference_protocol(segments_per_pulse=128))
    d = max(F.geodesic_distance(a.n1, b.n1), F.geodesic_distance(a.n2, b.n2))
    return d < 1e-4, f"N=8 vs N=128 axis distance {d:.2e} rad (tol 1e-4)"


# --- 3 ------------------------------------------------------------------------------

_CURVE = {}


def _suppression():
    if "c" not in _CURVE:
        _CURVE["c"] = M.suppression_curve(np.arange(0.0, 1200.0 + 1e-9, 0.5), 10.0, 5000.0, 1.0,
                                          threads=os.cpu_count() or 1)
    return _CURVE["c"]


def check_suppression_low():
    c = _suppression()
    sel = (c.bg_freqs <= 100.0) & np.isfinite(c.eta)
    worst = float(np.min(c.eta[sel]))
    at = float(c.bg_freqs[sel][np.argmin(c.eta[sel])])
    return worst > 1e3, f"min eta for f_bg <= 100 Hz = {worst:.1f} at {at:g} Hz (need > 1e3)"


def check_suppression_high():
    c = _suppression()
    sel = c.bg_freqs >= 300.0
    bound = M.suppression_closed_form(c.bg_freqs[sel], c.f_signal, c.f_s)
    rel = float(np.max(np.abs(c.eta[sel] / bound - 1.0)))
    return rel < 0.05, f"max |eta/closed form - 1| for f_bg >= 300 Hz = {rel:.2e} (tol 5%)"


# --- 4 ------------------------------------------------------------------------------

TRANSIENT_EPS = (10.0, 12.5, 15.0, 17.5, 20.0, 22.5, 25.0)


def transient_slope():
    freqs = []
    for e in TRANSIENT_EPS:
        cfg = F.ProtocolConfig(100e-6, 100e-6, math.radians(180.0 - e))
        r, _ = A.run(cfg, S.FieldScenario(0.1, bias=5e-6), A.EngineMode("dynamic", n_eq=1e4))
        x = M.dealternate(r.my[: int(0.04 * r.sample_rate)])
        freqs.append(M.transient_fit(x, r.sample_rate).freq)
    return float(np.polyfit(TRANSIENT_EPS, freqs, 1)[0])


def check_transient_slope():
    k = transient_slope()
    ok = abs(k / 13.9 - 1) < 0.02 and abs(k / 14.68 - 1) < 0.10
    return ok, (f"slope {k:.3f} Hz/deg; {100 * (k / 13.9 - 1):+.2f}% vs 13.9 (tol 2%), "
                f"{100 * (k / 14.68 - 1):+.2f}% vs 14.68 (tol 10%)")


# --- 5 ------------------------------------------------------------------------------

def step_overshoot(t, x, period):
    """Overshoot of each step of a square response, as a fraction of the step.

    The settled level is the mean over the last 40% of each half-period; the
    overshoot is the largest excursion beyond it in the direction of the step.
    """
    hp = 0.5 * period
    out = []
    for k in range(1, int(t[-1] / hp)):
        seg = x[(t >= k * hp) & (t < (k + 1) * hp)]
        prev = x[(t >= (k - 0.4) * hp) & (t < k * hp)]
        fin = float(np.mean(seg[int(0.6 * seg.size):]))
        step = fin - float(np.mean(prev))
        out.append(float(np.max((seg - fin) * np.sign(step))) / abs(step))
    return np.array(out)


def check_transient_cancellation():
    s = S.FieldScenario(0.5, target=S.Waveform("square", 16.5e-6, 10.0))
    r, _ = A.run(F.reference_protocol(), s, A.EngineMode("dynamic", n_eq=25))
    d = E.differential(r)
    f0 = r.frame == 0
    diff = float(np.max(step_overshoot(d.times, d.values, 0.1)))
    single = float(np.min(step_overshoot(r.times[f0], r.mx[f0], 0.1)))
    return diff < 0.05 and single > 0.30, (f"differential overshoot {100 * diff:.1f}% (need < 5%), "
                                           f"single-frame {100 * single:.1f}% (need > 30%)")


# --- 6 ------------------------------------------------------------------------------

def check_resonator_nulls():
    t_acq = 76e-6
    k = np.arange(1, 4)
    f = k / t_acq
    g = A.resonator_gain(f, t_acq)
    rounded = bool(np.all(np.abs(f - k * 13.158e3) < 0.5 * k))
    ok = bool(np.all(g < 1e-12)) and rounded
    return ok, (f"gain at k/t_acq = {np.array2string(f, precision=1)} Hz: max {g.max():.1e} "
                f"(tol 1e-12); nulls round to k*13.158 kHz: {rounded}")


# --- 7 ------------------------------------------------------------------------------

def check_bias_parabola():
    cfg = F.reference_protocol()
    bs = np.linspace(-10e-6, 10e-6, 11)
    resp = []
    for b in bs:
        s = S.FieldScenario(1.0, target=S.Waveform("sine", 1.8e-6, 20.0), bias=float(b))
        r, _ = A.run(cfg, s)
        resp.append(M.measured_response(r, 20.0).amplitude)
    c2, c1, _ = np.polyfit(bs, resp, 2)
    ratio = abs(c1 * 10e-6) / abs(c2 * 10e-6 ** 2)
    return ratio < 0.05, f"|linear| / |quadratic| at 10 uT = {ratio:.2e} (tol 5%)"


# --- 8 ------------------------------------------------------------------------------

def _response(theta_deg, mode):
    cfg = F.reference_protocol(flip_angle=math.radians(theta_deg))
    s = S.FieldScenario(1.0, target=S.Waveform("sine", 1.8e-6, 20.0))
    r, _ = A.run(cfg, s, mode)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return M.measured_response(r, 20.0).amplitude


def check_flip_plateau():
    mode = A.EngineMode("dynamic", n_eq=25)
    v = np.array([_response(th, mode) for th in range(163, 173)])
    spread = float((v.max() - v.min()) / v.max())
    drop = float(np.mean(v) / _response(180.0, mode))
    ax = F.axes_for(F.reference_protocol(flip_angle=math.pi))
    sm = F.stability_map(F.reference_protocol(flip_angle=math.pi))
    polar = min(abs(ax.n1[2]), abs(ax.n2[2]), abs(sm.minimum(1)[2]), abs(sm.minimum(2)[2]))
    ok = spread < 0.05 and drop > 10 and polar > 0.99
    return ok, (f"dynamic-mode spread over 163-172 deg {100 * spread:.1f}% (tol 5%), "
                f"drop at 180 deg {drop:.0f}x (need > 10x), axes at 180 deg |z| >= {polar:.4f}")


# --- 9 ------------------------------------------------------------------------------

def _rec(values):
    n = len(values)
    return A.AcquisitionRecord(np.arange(n) / 5000.0, np.asarray(values, float), np.zeros(n),
                               A.frame_tags(n))


def check_differential_algebra():
    n = 101
    k = np.arange(n, dtype=float)
    alt = np.where(A.frame_tags(n) == 0, 0.75, -0.75)
    x, y = 3.0 * k - 7.0, np.where(k % 3 == 0, 1.0, -2.0)
    d = lambda v, c=0: E.differential(_rec(v), centre_frame=c).values
    checks = {
        "constant": np.all(d(np.full(n, 4.25)) == 0.0),
        "ramp": np.all(d(x) == 0.0),
        "alternating": np.all(d(alt) == 1.5),
        "linearity": np.array_equal(d(2.0 * x + 0.5 * y), 2.0 * d(x) + 0.5 * d(y)),
        "negation": np.array_equal(d(-y), -d(y)),
        "parity": np.all(d(alt, 1) == -1.5),
    }
    bad = [name for name, v in checks.items() if not v]
    return not bad, "exact: " + ", ".join(f"{k}={'ok' if v else 'FAIL'}" for k, v in checks.items())


# --- 10 -----------------------------------------------------------------------------

def check_reconstruction():
    cfg = F.reference_protocol(orbit_frequency_offset=1.0, calibration_duration=2.0)
    sign = int(np.sign(F.axes_for(F.reference_protocol()).elevation1))
    hint = E.CalibrationHint(2.0, frame0_sign=sign)
    r, tr = A.run(cfg, S.FieldScenario(3.0))
    with warnings.catch_warnings():
        # a few samples clamp where rounding puts |M_xy| above the fitted norm
        warnings.simplefilter("ignore", RuntimeWarning)
        rec = E.reconstruct_3d(r, hint)
    rms = float(np.sqrt(np.mean((rec.mz - tr.states[:, 2]) ** 2)))
    r2, _ = A.run(cfg, S.FieldScenario(3.0, noise_sigma=0.01, rng_seed=3))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        rec2 = E.reconstruct_3d(r2, hint)
    sens = r.times > 2.0
    truth = np.array([F.elevation(tr.states[sens & (r.frame == f)][0]) for f in (0, 1)])
    err = float(np.degrees(np.max(np.abs(rec2.elevation(sens) - truth))))
    return rms < 1e-3 and err < 1.0, (f"noiseless M_z RMS error {rms:.1e} (tol 1e-3), "
                                      f"1% noise elevation error {err:.2f} deg (tol 1 deg)")


# --- 11 -----------------------------------------------------------------------------

def check_sensitivity():
    sigma, cfg = 0.01, F.reference_protocol()
    vals = []
    for seed in range(100):
        r, _ = A.run(cfg, S.FieldScenario(1.0, noise_sigma=sigma, rng_seed=seed))
        vals.append(M.sensitivity(M.amplitude_spectrum(r.mx, r.sample_rate)).sensitivity)
    vals = np.array(vals)
    expect = 2 * sigma / math.sqrt(5000.0)
    mean_err = abs(vals.mean() / expect - 1)
    worst = float(np.max(np.abs(vals / expect - 1)))
    return mean_err < 0.10 and worst < 0.10, (f"mean S / (2 sigma/sqrt(f_s)) - 1 = {mean_err:+.2e}, "
                                              f"worst trial {worst:.2e} (tol 10%)")


# --- 12 -----------------------------------------------------------------------------

def _same_tree(a, b):
    cmp = filecmp.dircmp(a, b)
    if cmp.left_only or cmp.right_only or cmp.funny_files:
        return False
    _, mismatch, errors = filecmp.cmpfiles(a, b, cmp.common_files, shallow=False)
    if mismatch or errors:
        return False
    return all(_same_tree(os.path.join(a, d), os.path.join(b, d)) for d in cmp.common_dirs)


def check_determinism():
    names = experiment.bundled_specs()
    out = []
    with tempfile.TemporaryDirectory() as tmp:
        for name in names:
            spec = experiment.load_spec(experiment.bundled_spec_path(name))
            a, b = os.path.join(tmp, name, "a"), os.path.join(tmp, name, "b")
            experiment.run_experiment(spec, a, threads=1)
            experiment.run_experiment(spec, b, threads=4)
            out.append((name, _same_tree(a, b)))
    ok = bool(names) and all(v for _, v in out)
    return ok, ", ".join(f"{n}: {'identical' if v else 'DIFFERENT'}" for n, v in out)


CRITERIA = [
    ("1 elevation law", check_elevation_law, True),
    ("2 segment convergence", check_convergence, True),
    ("3a suppression below 100 Hz", check_suppression_low, True),
    ("3b suppression vs closed form", check_suppression_high, False),
    ("4 transient slope", check_transient_slope, False),
    ("5 transient cancellation", check_transient_cancellation, True),
    ("6 resonator nulls", check_resonator_nulls, False),
    ("7 bias insensitivity", check_bias_parabola, False),
    ("8 flip-angle plateau", check_flip_plateau, True),
    ("9 differential algebra", check_differential_algebra, False),
    ("10 3D reconstruction", check_reconstruction, False),
    ("11 white-noise sensitivity", check_sensitivity, False),
    ("12 determinism", check_determinism, False),
]


def _params():
    for label, fn, known_miss in CRITERIA:
        marks = [pytest.mark.xfail(strict=True, reason=LEDGER)] if known_miss else []
        yield pytest.param(label, fn, id=label.replace(" ", "_"), marks=marks)


@pytest.mark.parametrize("label,fn", list(_params()))
def test_criterion(label, fn):
    ok, detail, dt = _timed(fn)
    report(label, ok, detail, dt)
    assert ok, detail


if __name__ == "__main__":
    for label, fn, _ in CRITERIA:
        report(label, *_timed(fn))
    passed = sum(ok for _, ok, _ in RESULTS)
    print(f"{passed}/{len(RESULTS)} criteria pass")
    sys.exit(0 if passed == len(RESULTS) else 1)
