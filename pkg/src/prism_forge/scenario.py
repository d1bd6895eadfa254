"""Field scenarios: everything the sensor sees, as deterministic sampled channels.

Channels are plain functions of time. A scenario never holds mutable state;
random channels draw from generators keyed by ``(seed, channel)`` so any
subset can be regenerated independently and in any order.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

MU0 = 4e-7 * math.pi

WAVEFORM_KINDS = ("sine", "square", "chirp", "swish", "table", "none")
MODULATIONS = ("none", "triangular", "sweep")

# stable channel ids for the seeded generators
CHANNEL_NOISE_I = 1
CHANNEL_NOISE_Q = 2


class ScenarioError(ValueError):
    """Invalid scenario or out-of-range evaluation."""


class WaveformParseError(ScenarioError):
    """Malformed waveform CSV. Carries 1-based ``line`` and ``column``."""

    def __init__(self, message, line, column):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


def _tri_unit(x):
    """Triangle wave over one unit cycle: -1 at 0, +1 at 1/2."""
    x = np.mod(x, 1.0)
    return np.where(x < 0.5, 4.0 * x - 1.0, 3.0 - 4.0 * x)


def _tri_unit_integral(x):
    # integral of _tri_unit from 0 to frac(x); zero over each full cycle
    x = np.mod(x, 1.0)
    return np.where(x < 0.5, 2.0 * x * x - x, -2.0 * x * x + 3.0 * x - 1.0)


@dataclass(frozen=True)
class Waveform:
    """A scalar waveform.

    Kinds
    -----
    ``sine``
        ``amplitude * sin(2*pi*frequency*t + phase)``.
    ``square``
        ``+amplitude`` on the first half of each cycle, ``-amplitude`` on the
        second. The rising edge belongs to the high half.
    ``chirp``
        Sine whose frequency follows a triangle law, ``frequency +/-
        deviation`` at ``rate`` Hz.
    ``swish``
        Linear sweep from ``frequency`` to ``f_end`` over ``sweep_duration``.
    ``table``
        Linear interpolation of ``(table_t, table_v)``.
    ``none``
        Identically zero.
    """

    kind: str = "none"
    amplitude: float = 0.0
    frequency: float = 0.0
    phase: float = 0.0
    deviation: float = 0.0
    rate: float = 0.0
    f_end: float = 0.0
    sweep_duration: float = 1.0
    table_t: tuple = ()
    table_v: tuple = ()

    def __post_init__(self):
        if self.kind not in WAVEFORM_KINDS:
            raise ScenarioError(f"unknown waveform kind {self.kind!r}")
        for name in ("amplitude", "frequency", "phase", "deviation", "rate", "f_end"):
            if not math.isfinite(getattr(self, name)):
                raise ScenarioError(f"waveform {name} must be finite")
        if self.kind == "swish" and not self.sweep_duration > 0:
            raise ScenarioError("swish sweep_duration must be > 0")
        if self.kind == "table":
            t = np.asarray(self.table_t, dtype=float)
            v = np.asarray(self.table_v, dtype=float)
            if t.ndim != 1 or t.shape != v.shape or t.size < 2:
                raise ScenarioError("table waveform needs >= 2 (time, value) pairs")
            if np.any(np.diff(t) <= 0):
                raise ScenarioError("table times must be strictly increasing")
            if not (np.all(np.isfinite(t)) and np.all(np.isfinite(v))):
                raise ScenarioError("table entries must be finite")
            object.__setattr__(self, "table_t", tuple(t.tolist()))
            object.__setattr__(self, "table_v", tuple(v.tolist()))

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        k = self.kind
        if k == "none":
            return np.zeros_like(t)
        if k == "sine":
            return self.amplitude * np.sin(2 * np.pi * self.frequency * t + self.phase)
        if k == "square":
            frac = np.mod(self.frequency * t + self.phase / (2 * np.pi), 1.0)
            return np.where(frac < 0.5, self.amplitude, -self.amplitude)
        if k == "chirp":
            if self.rate > 0:
                ph = self.frequency * t + self.deviation / self.rate * _tri_unit_integral(self.rate * t)
            else:
                ph = self.frequency * t
            return self.amplitude * np.sin(2 * np.pi * ph + self.phase)
        if k == "swish":
            slope = (self.f_end - self.frequency) / self.sweep_duration
            ph = self.frequency * t + 0.5 * slope * t * t
            return self.amplitude * np.sin(2 * np.pi * ph + self.phase)
        tt = np.asarray(self.table_t)
        if np.any(t < tt[0] - 1e-12) or np.any(t > tt[-1] + 1e-12):
            raise ScenarioError("time outside the table waveform's range")
        return np.interp(t, tt, np.asarray(self.table_v))

    def period_mean(self, cycles: int = 1, samples: int = 4096) -> float:
        """Numerical mean over an integer number of periods (periodic kinds)."""
        if self.frequency <= 0:
            raise ScenarioError("period_mean needs a positive frequency")
        t = np.arange(samples * cycles) / (samples * self.frequency)
        return float(np.mean(self(t)))


def read_waveform_csv(path) -> Waveform:
    """Load a ``time_s,value`` CSV (header required, strictly increasing time).

    Raises
    ------
    WaveformParseError
        With the 1-based line and column of the first problem.
    """
    with open(path, newline="") as fh:
        return parse_waveform_csv(fh.read())


def parse_waveform_csv(text: str) -> Waveform:
    rows = list(csv.reader(text.splitlines()))
    if not rows:
        raise WaveformParseError("empty file; expected header 'time_s,value'", 1, 1)
    header = [h.strip() for h in rows[0]]
    if header != ["time_s", "value"]:
        raise WaveformParseError(f"expected header 'time_s,value', got {','.join(header)!r}", 1, 1)
    ts, vs = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 2:
            raise WaveformParseError(f"expected 2 fields, got {len(row)}", lineno, 1)
        col = 1
        vals = []
        for cell in row:
            try:
                x = float(cell)
            except ValueError:
                raise WaveformParseError(f"not a number: {cell.strip()!r}", lineno, col) from None
            if not math.isfinite(x):
                raise WaveformParseError(f"non-finite value {cell.strip()!r}", lineno, col)
            vals.append(x)
            col += len(cell) + 1
        if ts and vals[0] <= ts[-1]:
            raise WaveformParseError("time_s must be strictly increasing", lineno, 1)
        ts.append(vals[0])
        vs.append(vals[1])
    if len(ts) < 2:
        raise WaveformParseError("need at least two data rows", len(rows) + 1, 1)
    return Waveform(kind="table", table_t=tuple(ts), table_v=tuple(vs))


# --- backgrounds --------------------------------------------------------------------

@dataclass(frozen=True)
class BackgroundSpec:
    """Additive readout tone at ``carrier_offset`` Hz from the Larmor frequency.

    ``modulation`` is ``none``, ``triangular`` (offset swings by
    ``+/- deviation`` with a triangle law at ``rate`` Hz) or ``sweep`` (offset
    ramps linearly from ``carrier_offset`` to ``carrier_offset + f_max`` over
    ``sweep_duration`` seconds).
    """

    carrier_offset: float = 0.0
    amplitude: float = 0.0
    phase: float = 0.0
    modulation: str = "none"
    deviation: float = 0.0
    rate: float = 0.0
    f_max: float = 0.0
    sweep_duration: float = 1.0
    half_band: float = 13.2e3

    def __post_init__(self):
        if self.modulation not in MODULATIONS:
            raise ScenarioError(f"unknown background modulation {self.modulation!r}")
        if abs(self.carrier_offset) > self.half_band:
            raise ScenarioError("background carrier_offset lies outside the resonator half-band")
        if self.modulation == "sweep" and not self.sweep_duration > 0:
            raise ScenarioError("sweep_duration must be > 0")

    def instantaneous_offset(self, t):
        t = np.asarray(t, dtype=float)
        if self.modulation == "triangular":
            return self.carrier_offset + self.deviation * _tri_unit(self.rate * t)
        if self.modulation == "sweep":
            return self.carrier_offset + self.f_max * t / self.sweep_duration
        return self.carrier_offset + np.zeros_like(t)

    def phase_at(self, t):
        """Accumulated carrier phase ``2*pi*int_0^t f(t') dt' + phase``."""
        t = np.asarray(t, dtype=float)
        cyc = self.carrier_offset * t
        if self.modulation == "triangular" and self.rate > 0:
            cyc = cyc + self.deviation / self.rate * _tri_unit_integral(self.rate * t)
        elif self.modulation == "sweep":
            cyc = cyc + 0.5 * self.f_max * t * t / self.sweep_duration
        return 2 * np.pi * cyc + self.phase


def background_signal(b: BackgroundSpec, t):
    """Complex baseband contribution ``A * exp(i * phase(t))`` before filtering."""
    return b.amplitude * np.exp(1j * b.phase_at(t))


def background_window_average(b: BackgroundSpec, t_start, length):
    """Mean of :func:`background_signal` over ``[t_start, t_start + length]``.

    Exact for a constant offset; for modulated offsets the instantaneous
    frequency at the window centre is used (the modulation is slow on the
    window scale).
    """
    t_start = np.asarray(t_start, dtype=float)
    mid = t_start + 0.5 * length
    f = b.instantaneous_offset(mid)
    return background_signal(b, mid) * np.sinc(f * length)


# --- vibration and coil -------------------------------------------------------------

def coil_field_on_axis(radius, z, turns=1, current=1.0, turn_positions=None):
    """On-axis field of a stack of circular loops (Biot-Savart), in tesla.

    ``turn_positions`` are the axial offsets of the loops (default all at 0).
    """
    if not radius > 0:
        raise ScenarioError("coil radius must be > 0")
    z = np.asarray(z, dtype=float)
    pos = np.zeros(int(turns)) if turn_positions is None else np.asarray(turn_positions, float)
    zz = z[..., None] - pos
    return np.sum(MU0 * current * radius ** 2 / (2.0 * (radius ** 2 + zz ** 2) ** 1.5), axis=-1)


def coil_field_averaged(radius, z, thickness, segments=64, **kw):
    """Coil field averaged over a sample of axial ``thickness`` centred at ``z``."""
    off = (np.arange(segments) + 0.5) / segments * thickness - 0.5 * thickness
    z = np.asarray(z, dtype=float)
    vals = coil_field_on_axis(radius, z[..., None] + off, **kw)
    return np.mean(vals, axis=-1)


@dataclass(frozen=True)
class VibrationSpec:
    """Axial sample motion ``z(t)`` through the RF coil.

    ``z(t) = amplitude * sin(2*pi*frequency*t)`` unless ``trajectory`` (a
    table :class:`Waveform` in metres) is given. The coil profile normalised
    to 1 at ``z = 0`` scales the flip angle, the detected amplitude and the
    target field.
    """

    amplitude: float = 0.0
    frequency: float = 0.0
    trajectory: Waveform | None = None
    coil_radius: float = 5e-3
    turns: int = 2
    turn_spacing: float = 1e-3
    sample_thickness: float = 0.0
    travel: float = 2e-3

    def __post_init__(self):
        if not self.coil_radius > 0:
            raise ScenarioError("coil radius must be > 0")
        if not self.travel > 0:
            raise ScenarioError("travel must be > 0")

    def z(self, t):
        if self.trajectory is not None:
            return self.trajectory(t)
        return self.amplitude * np.sin(2 * np.pi * self.frequency * np.asarray(t, dtype=float))

    def _turns(self):
        n = int(self.turns)
        return (np.arange(n) - 0.5 * (n - 1)) * self.turn_spacing

    def profile(self, z):
        """Relative coil field at sample position ``z`` (1 at the centre)."""
        z = np.asarray(z, dtype=float)
        if np.any(np.abs(z) > self.travel):
            warnings.warn("vibration z outside declared travel; clamping", RuntimeWarning,
                          stacklevel=2)
            z = np.clip(z, -self.travel, self.travel)
        kw = dict(turn_positions=self._turns())
        if self.sample_thickness > 0:
            b = coil_field_averaged(self.coil_radius, z, self.sample_thickness, **kw)
            b0 = coil_field_averaged(self.coil_radius, 0.0, self.sample_thickness, **kw)
        else:
            b = coil_field_on_axis(self.coil_radius, z, **kw)
            b0 = coil_field_on_axis(self.coil_radius, 0.0, **kw)
        return b / b0


@dataclass(frozen=True)
class DecaySpec:
    """Amplitude decay ``exp(-sqrt(R_p t)) * exp(-R_d t)``."""

    R_p: float = 0.0
    R_d: float = 0.0

    def __post_init__(self):
        if not (self.R_p >= 0 and self.R_d >= 0):
            raise ScenarioError("decay rates must be >= 0")

    def factor(self, t):
        t = np.asarray(t, dtype=float)
        return np.exp(-np.sqrt(self.R_p * t) - self.R_d * t)


# --- scenario -----------------------------------------------------------------------

@dataclass(frozen=True)
class FieldScenario:
    """Time-dependent environment of one run.

    ``target`` and ``bias`` are in tesla (``bias`` may be a float or a
    :class:`Waveform`). ``noise_sigma`` is the per-sample Gaussian sigma added
    to both readout quadratures.
    """

    duration: float
    target: Waveform = field(default_factory=Waveform)
    bias: float | Waveform = 0.0
    backgrounds: tuple = ()
    vibration: VibrationSpec | None = None
    decay: DecaySpec = field(default_factory=DecaySpec)
    noise_sigma: float = 0.0
    magnetization0: float = 1.0
    rng_seed: int = 0

    def __post_init__(self):
        if not (math.isfinite(self.duration) and self.duration > 0):
            raise ScenarioError("duration must be > 0")
        if not self.noise_sigma >= 0:
            raise ScenarioError("noise_sigma must be >= 0")
        if not self.magnetization0 > 0:
            raise ScenarioError("magnetization0 must be > 0")
        object.__setattr__(self, "backgrounds", tuple(self.backgrounds))

    def _check_range(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t < -1e-12) or np.any(t > self.duration * (1 + 1e-12)):
            raise ScenarioError(f"time outside [0, {self.duration}]")
        return t

    def bias_at(self, t):
        t = np.asarray(t, dtype=float)
        if isinstance(self.bias, Waveform):
            return self.bias(t)
        return np.full_like(t, float(self.bias))


def sample_target(s: FieldScenario, t):
    """Target field at ``t`` (tesla), without the coil-geometry scale."""
    return s.target(s._check_range(t))


@dataclass(frozen=True)
class EffectiveParams:
    flip_scale: np.ndarray
    bias_total: np.ndarray
    target_value: np.ndarray
    decay_factor: np.ndarray
    coupling: np.ndarray


def effective_params_at(s: FieldScenario, t) -> EffectiveParams:
    """Per-instant modifiers the engine needs (vectorised over ``t``)."""
    t = s._check_range(t)
    if s.vibration is None:
        prof = np.ones_like(t)
    else:
        prof = s.vibration.profile(s.vibration.z(t))
    return EffectiveParams(
        flip_scale=prof,
        bias_total=s.bias_at(t),
        target_value=s.target(t) * prof,
        decay_factor=s.decay.factor(t),
        coupling=prof,
    )


def channel_rng(seed: int, channel: int) -> np.random.Generator:
    """Independent generator for one random channel of a seeded scenario."""
    return np.random.default_rng([int(seed), int(channel)])
