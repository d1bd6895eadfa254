import json
import math

import numpy as np
import pytest

from prism_forge import acquisition as A
from prism_forge import floquet as F
from prism_forge import scenario as S
from prism_forge.rotor import geodesic_distance


def test_frame_tags_alternate_starting_with_frame_two():
    np.testing.assert_array_equal(A.frame_tags(5), [1, 0, 1, 0, 1])


def test_resonator_gain_nulls_exact():
    t = 76e-6
    np.testing.assert_array_equal(A.resonator_gain(np.arange(1, 6) / t, t), 0.0)
    assert A.resonator_gain(0.0, t) == 1.0


def test_resonator_gain_literal_rounded_null_is_small_not_zero():
    g = float(A.resonator_gain(13.158e3, 76e-6))
    assert 0 < g < 1e-4


def test_resonator_gain_lorentzian():
    g = A.resonator_gain(1000.0, 1e-9, q=50, carrier=1e5)
    assert g == pytest.approx(1 / math.sqrt(2), rel=1e-6)


def test_resonator_gain_rejects_bad_window():
    with pytest.raises(ValueError):
        A.resonator_gain(1.0, 0.0)


def test_window_average():
    assert A.window_average([1 + 1j, 3 - 1j]) == 2
    assert A.window_average(np.arange(10), slice(2, 4)) == 2.5
    with pytest.raises(ValueError):
        A.window_average([])


def test_sample_times_centre_of_window(ref):
    t = A.sample_times(ref, 3)
    np.testing.assert_allclose(t, [250e-6, 450e-6, 650e-6])


def test_engine_mode_validation():
    with pytest.raises(ValueError):
        A.EngineMode("other")
    with pytest.raises(ValueError):
        A.EngineMode("dynamic", n_eq=0.0)
    with pytest.raises(ValueError):
        A.EngineMode(initial="z")
    assert A.EngineMode("dynamic", n_eq=math.inf).relax == 1.0


def test_geometric_record_is_the_axis(ref):
    r, tr = A.run(ref, S.FieldScenario(0.01))
    ax = F.axes_for(ref)
    np.testing.assert_allclose(tr.states[tr.frame == 0], np.tile(ax.n1, (25, 1)), atol=1e-12)
    np.testing.assert_allclose(tr.states[tr.frame == 1], np.tile(ax.n2, (25, 1)), atol=1e-12)
    np.testing.assert_allclose(r.mx, tr.states[:, 0])
    np.testing.assert_allclose(r.my, tr.states[:, 1])


def test_record_rate_and_length(ref):
    r, _ = A.run(ref, S.FieldScenario(1.0))
    assert len(r) == 5000
    assert r.sample_rate == pytest.approx(5000.0)
    assert r.meta["backend"] in ("cython", "python")


def test_too_short_run_is_engine_error(ref):
    with pytest.raises(A.EngineError):
        A.run(ref, S.FieldScenario(1e-3))


def test_degenerate_protocol_is_engine_error():
    cfg = F.ProtocolConfig(100e-6, 100e-6, 2 * math.pi)
    with pytest.raises(A.EngineError, match="degenerate"):
        A.run(cfg, S.FieldScenario(0.01))


def test_dynamic_direction_converges_to_geometric(ref):
    s = S.FieldScenario(0.4, bias=2e-6)
    _, geo = A.run(ref, s)
    _, dyn = A.run(ref, s, A.EngineMode("dynamic", 25))
    u = dyn.states[-100:] / np.linalg.norm(dyn.states[-100:], axis=1, keepdims=True)
    err = max(geodesic_distance(a, b) for a, b in zip(u, geo.states[-100:]))
    assert err < 1e-6


def test_dynamic_projection_shrinks_norm(ref):
    _, dyn = A.run(ref, S.FieldScenario(0.1), A.EngineMode("dynamic", 25))
    assert np.linalg.norm(dyn.states[-1]) < 0.99


def test_initial_on_axis_starts_settled(ref):
    _, dyn = A.run(ref, S.FieldScenario(0.01), A.EngineMode("dynamic", 25, initial="axis"))
    ax = F.axes_for(ref)
    np.testing.assert_allclose(dyn.states[0], ax.n2, atol=1e-9)
    np.testing.assert_allclose(dyn.states[1], ax.n1, atol=1e-9)


def test_decay_applied(ref):
    s = S.FieldScenario(0.1, decay=S.DecaySpec(R_d=2.0))
    r, tr = A.run(ref, s)
    _, tr0 = A.run(ref, S.FieldScenario(0.1))
    np.testing.assert_allclose(tr.states, tr0.states * np.exp(-2.0 * r.times)[:, None])


def test_noise_is_seeded(ref):
    a, _ = A.run(ref, S.FieldScenario(0.1, noise_sigma=0.01, rng_seed=3))
    b, _ = A.run(ref, S.FieldScenario(0.1, noise_sigma=0.01, rng_seed=3))
    c, _ = A.run(ref, S.FieldScenario(0.1, noise_sigma=0.01, rng_seed=4))
    np.testing.assert_array_equal(a.mx, b.mx)
    assert not np.array_equal(a.mx, c.mx)


def test_background_added_with_window_sinc(ref):
    bg = S.BackgroundSpec(carrier_offset=2000.0, amplitude=0.1)
    r, tr = A.run(ref, S.FieldScenario(0.1, backgrounds=(bg,)))
    off, L = ref.window
    expect = S.background_window_average(bg, r.times - 0.5 * L, L)
    np.testing.assert_allclose(r.mx - tr.states[:, 0], expect.real, atol=1e-15)
    np.testing.assert_allclose(r.my - tr.states[:, 1], expect.imag, atol=1e-15)


def test_transient_spirals_agree_between_frames(ref):
    s = S.FieldScenario(0.2, target=S.Waveform("square", 16.5e-6, 10.0))
    _, tr = A.run(ref, s, A.EngineMode("dynamic", 25))
    out = []
    for f in (0, 1):
        sel = (tr.frame == f) & (tr.times > 0.15) & (tr.times < 0.1995)
        m = tr.states[sel]
        ax = tr.axes[sel][-1]
        dev = m[:60] - m[-1]
        ang = [math.atan2(np.dot(np.cross(a, b), ax), np.dot(a, b))
               for a, b in zip(dev[:-1], dev[1:])]
        amp = np.linalg.norm(dev, axis=1)
        out.append((np.mean(ang), np.mean(amp[1:30] / amp[:29]), amp[0]))
    (a0, d0, m0), (a1, d1, m1) = out
    assert a1 == pytest.approx(a0, rel=0.05)
    assert d1 == pytest.approx(d0, rel=0.05)
    assert m1 == pytest.approx(m0, rel=0.05)
    assert tr.axes[-2][2] * tr.axes[-1][2] < 0


def test_csv_round_trip(ref, tmp_path):
    r, _ = A.run(ref, S.FieldScenario(0.01, noise_sigma=0.1))
    A.write_record_csv(r, tmp_path / "r.csv")
    A.write_record_sidecar(r, tmp_path / "r.json")
    back = A.read_record_csv(tmp_path / "r.csv")
    np.testing.assert_array_equal(back.mx, r.mx)
    np.testing.assert_array_equal(back.times, r.times)
    np.testing.assert_array_equal(back.frame, r.frame)
    assert (tmp_path / "r.csv").read_text().splitlines()[0] == "time_s,mx,my,frame"
    assert json.loads((tmp_path / "r.json").read_text())["gamma"] == pytest.approx(F.GAMMA_C13)


def test_csv_header_checked(tmp_path):
    p = tmp_path / "r.csv"
    p.write_text("t,a,b,c\n0,1,2,0\n")
    with pytest.raises(ValueError, match="header"):
        A.read_record_csv(p)
