"""Simulation engine and readout model.

Sample ``k`` is taken in the spacing that follows pulse ``k`` (half-cycle ``k``
= spacing then pulse). Odd ``k`` end on pulse 2 and belong to frame I
(``frame == 0``); even ``k`` belong to frame II (``frame == 1``).
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, is_dataclass

import numpy as np

from . import kernels
from .floquet import GAMMA_C13, ProtocolConfig
from .scenario import (
    CHANNEL_NOISE_I,
    CHANNEL_NOISE_Q,
    FieldScenario,
    background_window_average,
    channel_rng,
    effective_params_at,
)

DEFAULT_N_EQ = 25.0


class EngineError(RuntimeError):
    """The engine could not advance (degenerate protocol or non-finite state)."""


@dataclass(frozen=True)
class EngineMode:
    """``geometric``: pinned to the instantaneous axis. ``dynamic``: rotate, then
    shrink the part transverse to the axis by ``exp(-1/n_eq)`` per sample.

    ``initial`` is ``"x"`` (start along +x) or ``"axis"`` (start on the first
    prethermal axis), scaled by the scenario's ``magnetization0``.
    """

    kind: str = "geometric"
    n_eq: float = DEFAULT_N_EQ
    initial: str = "x"

    def __post_init__(self):
        if self.kind not in ("geometric", "dynamic"):
            raise ValueError(f"unknown engine mode {self.kind!r}")
        if self.kind == "dynamic" and not self.n_eq > 0:
            raise ValueError("n_eq must be > 0 in dynamic mode")
        if self.initial not in ("x", "axis"):
            raise ValueError(f"unknown initial state {self.initial!r}")

    @property
    def relax(self) -> float:
        return math.exp(-1.0 / self.n_eq) if math.isfinite(self.n_eq) else 1.0


@dataclass(frozen=True)
class AcquisitionRecord:
    times: np.ndarray
    mx: np.ndarray
    my: np.ndarray
    frame: np.ndarray
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.times)

    @property
    def sample_rate(self) -> float:
        return 1.0 / float(self.times[1] - self.times[0])

    def with_values(self, mx, my=None) -> "AcquisitionRecord":
        return AcquisitionRecord(self.times, np.asarray(mx, float),
                                 self.my if my is None else np.asarray(my, float),
                                 self.frame, dict(self.meta))


@dataclass(frozen=True)
class TrajectoryTrace:
    """Simulation truth: state right after each pulse (decay applied) and the
    prethermal axis of the frame ending at that pulse."""

    times: np.ndarray
    states: np.ndarray
    axes: np.ndarray
    frame: np.ndarray


def frame_tags(n: int) -> np.ndarray:
    return (1 - np.arange(n) % 2).astype(np.int8)


def resonator_gain(f_offset, t_acq, q=None, carrier=None):
    """Readout gain for a tone ``f_offset`` Hz from the carrier.

    ``|sinc(f*t_acq)|`` from window averaging, times a Lorentzian amplitude
    response ``1/sqrt(1 + (2*q*f/carrier)**2)`` when ``q`` and ``carrier`` are
    given.
    """
    if not t_acq > 0:
        raise ValueError("t_acq must be > 0")
    f = np.asarray(f_offset, dtype=float)
    x = f * t_acq
    # exact zero at integer multiples of 1/t_acq; np.sinc leaves ~1e-17 there
    g = np.where((x != 0) & (np.round(x) == x), 0.0, np.abs(np.sinc(x)))
    if q is not None and carrier is not None:
        g = g / np.sqrt(1.0 + (2.0 * q * f / carrier) ** 2)
    return g


def window_average(iq_stream, window=None) -> complex:
    """Arithmetic mean of complex baseband samples (optionally a slice)."""
    x = np.asarray(iq_stream)
    if window is not None:
        x = x[window]
    if x.size == 0:
        raise ValueError("empty acquisition window")
    return complex(np.mean(x))


def sample_times(cfg: ProtocolConfig, n: int) -> np.ndarray:
    off, length = cfg.window
    return (np.arange(n) + 1) * cfg.half_cycle + off + 0.5 * length


def _digest(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True, default=str).encode()).hexdigest()[:16]


def _plain(obj):
    if is_dataclass(obj):
        return {k: _plain(v) for k, v in asdict(obj).items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return obj


def engine_inputs(cfg: ProtocolConfig, s: FieldScenario, gamma: float = GAMMA_C13):
    """Per-half-cycle kernel arrays, with fields evaluated mid half-cycle."""
    n = int(math.floor(s.duration / cfg.half_cycle + 1e-9))
    if n < 8:
        raise EngineError("duration must cover at least 4 cycles")
    tc = (np.arange(n) + 0.5) * cfg.half_cycle
    eff = effective_params_at(s, tc)
    omega_x = cfg.rabi * eff.flip_scale
    extra_z = cfg.detuning + gamma * (eff.bias_total + eff.target_value)
    amp = np.full(n, cfg.orbit_amplitude)
    phase = cfg.orbit_phase_at(tc)
    return n, omega_x, extra_z, amp, phase, eff


def run(cfg: ProtocolConfig, s: FieldScenario, mode: EngineMode = EngineMode(),
        gamma: float = GAMMA_C13):
    """Advance the spins through the scenario and apply the readout model.

    Returns
    -------
    record : AcquisitionRecord
    trace : TrajectoryTrace

    Raises
    ------
    EngineError
        Degenerate protocol (identity cycle) or a non-finite state.
    """
    n, omega_x, extra_z, amp, phase, eff = engine_inputs(cfg, s, gamma)
    m0 = np.array([s.magnetization0, 0.0, 0.0])
    if mode.initial == "axis":
        # t = 0 is a frame-I stroboscopic instant; sample 1 carries that axis
        _, ax, st, _ = kernels.run_engine(omega_x[:2], extra_z[:2], amp[:2], phase[:2],
                                          cfg.pulse_duration, cfg.spacing, cfg.period,
                                          int(cfg.segments_per_pulse), kernels.GEOMETRIC,
                                          1.0, m0)
        if st == kernels.STATUS_OK:
            m0 = s.magnetization0 * ax[1]
    kind = kernels.GEOMETRIC if mode.kind == "geometric" else kernels.DYNAMIC
    states, axes, status, bad = kernels.run_engine(
        omega_x, extra_z, amp, phase, cfg.pulse_duration, cfg.spacing, cfg.period,
        int(cfg.segments_per_pulse), kind, mode.relax, m0)
    if status == kernels.STATUS_DEGENERATE:
        raise EngineError(f"degenerate protocol: identity cycle rotation at sample {bad}")
    if status == kernels.STATUS_NONFINITE:
        raise EngineError(f"non-finite state at sample {bad}")

    times = sample_times(cfg, n)
    decay = s.decay.factor(times)
    frame = frame_tags(n)
    truth = states * decay[:, None]
    trace = TrajectoryTrace(times, truth, axes, frame)

    sig = truth[:, 0] * eff.coupling + 1j * truth[:, 1] * eff.coupling
    off, length = cfg.window
    starts = times - 0.5 * length
    for b in s.backgrounds:
        sig = sig + background_window_average(b, starts, length)
    if s.noise_sigma > 0:
        sig = sig + s.noise_sigma * channel_rng(s.rng_seed, CHANNEL_NOISE_I).standard_normal(n)
        sig = sig + 1j * s.noise_sigma * channel_rng(s.rng_seed, CHANNEL_NOISE_Q).standard_normal(n)
    meta = {
        "protocol": _plain(cfg),
        "scenario_digest": _digest(_plain(s)),
        "mode": _plain(mode),
        "gamma": gamma,
        "backend": kernels.BACKEND,
    }
    record = AcquisitionRecord(times, sig.real.copy(), sig.imag.copy(), frame, meta)
    return record, trace


# --- export -------------------------------------------------------------------------

def write_record_csv(record: AcquisitionRecord, path) -> None:
    """``time_s,mx,my,frame`` with full-precision repr floats."""
    with open(path, "w", newline="") as fh:
        fh.write("time_s,mx,my,frame\n")
        for t, x, y, f in zip(record.times, record.mx, record.my, record.frame):
            fh.write(f"{float(t)!r},{float(x)!r},{float(y)!r},{int(f)}\n")


def write_record_sidecar(record: AcquisitionRecord, path) -> None:
    with open(path, "w") as fh:
        json.dump(record.meta, fh, sort_keys=True, indent=2)
        fh.write("\n")


def read_record_csv(path, meta=None) -> AcquisitionRecord:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    with open(path) as fh:
        header = fh.readline().strip()
    if header != "time_s,mx,my,frame":
        raise ValueError(f"{path}: expected header 'time_s,mx,my,frame', got {header!r}")
    return AcquisitionRecord(data[:, 0], data[:, 1], data[:, 2], data[:, 3].astype(np.int8),
                             dict(meta or {}))
