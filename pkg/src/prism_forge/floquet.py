"""One Floquet cycle of the pulsed spin lock with an orbit (z) drive.

Timeline of one orbit period ``T = 2*(tau_p + tau_s)``::

    | spacing a | pulse 1 | spacing b | pulse 2 |
    0          tau_s     half        half+tau_s  T      (half = tau_p + tau_s)

The orbit drive is a z-rotation rate ``A*cos(2*pi*(t - tau_s/2)/T + phase)``;
with ``phase = 0`` its crest sits in the middle of spacing a and both pulses
straddle zero crossings, the phase-locked arrangement.

Frame I is sampled right after pulse 2 (``r_frame1 = H_b @ H_a``), frame II
right after pulse 1 (``r_frame2 = H_a @ H_b``), where ``H_a`` and ``H_b`` are
the two half-cycle propagators (spacing followed by a pulse).

Flip-angle error is signed as ``eps = theta - pi`` throughout this module. With
that sign the leading-order elevation of the frame-I axis is
``arctan(phi_a / eps)``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels
from .rotor import (
    AxisUndefinedError,
    Rotation3,
    axis_angle,
    geodesic_distance,
    polar_orthogonalize,
)

GAMMA_C13 = 2.0 * math.pi * 10.7084e6  # rad/s/T
MIN_SEGMENTS = 8


class ConfigError(ValueError):
    """Invalid protocol configuration."""


class DegenerateProtocolError(RuntimeError):
    """A cycle rotation is the identity, so its invariant axis is undefined."""


@dataclass(frozen=True)
class ProtocolConfig:
    """Pulse timing and orbit drive for one Floquet cycle.

    Parameters
    ----------
    pulse_duration, spacing : float
        ``tau_p`` and ``tau_s`` in seconds.
    flip_angle : float
        Nominal x-rotation per pulse (rad). Rabi rate is ``flip_angle / tau_p``.
    detuning : float
        Pulse-carrier offset ``delta_omega`` (rad/s), a constant z-rate.
    orbit_amplitude : float
        Peak z-rotation rate of the orbit drive (rad/s).
    orbit_phase : float
        Phase of the orbit drive (rad); 0 is the phase-locked arrangement.
    orbit_period : float or None
        Defaults to ``2*(tau_p + tau_s)``.
    orbit_frequency_offset : float
        Explicit orbit-frequency offset in Hz. The orbit phase then slips by
        ``2*pi*offset*t``; this is how calibration rotations are produced.
    calibration_duration : float or None
        If set, the phase slip stops at this time and the phase is held
        afterwards (a calibration interval followed by sensing).
    segments_per_pulse : int
        Number of equal sub-intervals per pulse, at least 8.
    acquisition_offset, acquisition_length : float or None
        Readout window inside the spacing, measured from the end of the pulse.
        ``None`` gives a window centred in the spacing of length ``0.76*tau_s``.
    """

    pulse_duration: float
    spacing: float
    flip_angle: float
    detuning: float = 0.0
    orbit_amplitude: float = 0.0
    orbit_phase: float = 0.0
    orbit_period: float | None = None
    orbit_frequency_offset: float = 0.0
    calibration_duration: float | None = None
    segments_per_pulse: int = 8
    acquisition_offset: float | None = None
    acquisition_length: float | None = None

    def __post_init__(self):
        errs = [v for v in self.violations() if not v.startswith("warning:")]
        if errs:
            raise ConfigError("; ".join(errs))

    def violations(self) -> list[str]:
        """All invariant violations; entries starting with ``warning:`` are soft."""
        out = []
        finite = ("pulse_duration", "spacing", "flip_angle", "detuning", "orbit_amplitude",
                  "orbit_phase", "orbit_frequency_offset")
        for name in finite:
            if not math.isfinite(getattr(self, name)):
                out.append(f"{name}: must be finite")
        if not self.pulse_duration > 0:
            out.append("pulse_duration: must be > 0")
        if not self.spacing > 0:
            out.append("spacing: must be > 0")
        if int(self.segments_per_pulse) != self.segments_per_pulse or \
                self.segments_per_pulse < MIN_SEGMENTS:
            out.append(f"segments_per_pulse: must be an integer >= {MIN_SEGMENTS}")
        if self.calibration_duration is not None and not self.calibration_duration >= 0:
            out.append("calibration_duration: must be >= 0")
        if self.orbit_period is not None:
            if not (math.isfinite(self.orbit_period) and self.orbit_period > 0):
                out.append("orbit_period: must be > 0")
            elif abs(self.orbit_period - 2 * self.half_cycle) > 1e-12 * self.orbit_period \
                    and self.orbit_frequency_offset == 0.0:
                out.append("warning: orbit_period differs from 2*(pulse_duration + spacing) "
                           "without an explicit orbit_frequency_offset")
        if any(not v.startswith("warning:") for v in out):
            return out
        off, length = self.window
        if off < 0 or length <= 0 or off + length > self.spacing * (1 + 1e-12):
            out.append("acquisition_length: acquisition window must fit inside the spacing")
        return out

    @property
    def half_cycle(self) -> float:
        return self.pulse_duration + self.spacing

    @property
    def period(self) -> float:
        """Nominal orbit period ``2*(tau_p + tau_s)`` used by the cycle builder."""
        return 2.0 * self.half_cycle

    @property
    def rabi(self) -> float:
        return self.flip_angle / self.pulse_duration

    @property
    def epsilon(self) -> float:
        """Signed flip-angle error ``theta - pi``."""
        return self.flip_angle - math.pi

    @property
    def window(self) -> tuple[float, float]:
        length = self.acquisition_length
        if length is None:
            length = 0.76 * self.spacing
        off = self.acquisition_offset
        if off is None:
            off = 0.5 * (self.spacing - length)
        return off, length

    @property
    def phase_slip_rate(self) -> float:
        """Orbit phase advance in rad/s relative to the nominal period."""
        f = self.orbit_frequency_offset
        if self.orbit_period is not None:
            f += 1.0 / self.orbit_period - 1.0 / self.period
        return 2.0 * math.pi * f

    def orbit_phase_at(self, t):
        """Orbit phase at time(s) ``t`` including any slip."""
        t = np.asarray(t, dtype=float)
        if self.calibration_duration is not None:
            t = np.minimum(t, self.calibration_duration)
        return self.orbit_phase + self.phase_slip_rate * t

    def with_(self, **kw) -> "ProtocolConfig":
        return replace(self, **kw)


def reference_protocol(**overrides) -> ProtocolConfig:
    """100 us pulses and spacings, 166 deg flip, 18 deg / 100 us orbit rate."""
    base = dict(pulse_duration=100e-6, spacing=100e-6, flip_angle=math.radians(166.0),
                orbit_amplitude=math.radians(18.0) / 100e-6)
    base.update(overrides)
    return ProtocolConfig(**base)


@dataclass(frozen=True)
class CycleRotations:
    r_frame1: Rotation3
    r_frame2: Rotation3
    phi_a: float
    phi_b: float


@dataclass(frozen=True)
class PrethermalAxes:
    n1: np.ndarray
    n2: np.ndarray
    elevation1: float
    elevation2: float
    inter_vector_angle: float = field(default=0.0)


def build_cycle(cfg: ProtocolConfig, extra_z_field: float = 0.0) -> CycleRotations:
    """Frame-I and frame-II one-cycle rotations.

    ``extra_z_field`` is a constant z-rate in rad/s (bias or quasi-static
    sensed field times the gyromagnetic ratio).
    """
    if not math.isfinite(extra_z_field):
        raise ConfigError("extra_z_field must be finite")
    args = (cfg.rabi, cfg.detuning + extra_z_field, cfg.orbit_amplitude, cfg.orbit_phase,
            cfg.pulse_duration, cfg.spacing, cfg.period, int(cfg.segments_per_pulse))
    h_a, phi_a = kernels.half_cycle(0.0, *args)
    h_b, phi_b = kernels.half_cycle(cfg.half_cycle, *args)
    r1 = Rotation3(polar_orthogonalize(h_b @ h_a))
    r2 = Rotation3(polar_orthogonalize(h_a @ h_b))
    return CycleRotations(r1, r2, float(phi_a), float(phi_b))


def elevation(n) -> float:
    """Signed latitude of ``n``: ``atan2(n_z, hypot(n_x, n_y))``."""
    n = np.asarray(n, dtype=float)
    return math.atan2(float(n[2]), math.hypot(float(n[0]), float(n[1])))


def _frame_axis(r: Rotation3) -> np.ndarray:
    try:
        a, _ = axis_angle(r)
    except AxisUndefinedError as exc:
        raise DegenerateProtocolError(f"degenerate protocol: {exc}") from None
    return -a if a[0] < 0 else a


def prethermal_axes(cyc: CycleRotations) -> PrethermalAxes:
    """Invariant axes of both frames, signed towards +x."""
    n1 = _frame_axis(cyc.r_frame1)
    n2 = _frame_axis(cyc.r_frame2)
    return PrethermalAxes(n1, n2, elevation(n1), elevation(n2), geodesic_distance(n1, n2))


def axes_for(cfg: ProtocolConfig, extra_z_field: float = 0.0) -> PrethermalAxes:
    return prethermal_axes(build_cycle(cfg, extra_z_field))


def mid_spacing_axes(cfg: ProtocolConfig, extra_z_field: float = 0.0) -> PrethermalAxes:
    """Prethermal axes carried to the centre of the following spacing.

    Frame I is followed by spacing a and frame II by spacing b; the z-phase
    of the first half of that spacing is applied. For a phase-locked drive
    the two axes are then mirror images under ``z -> -z``.
    """
    ax = axes_for(cfg, extra_z_field)
    zr = cfg.detuning + extra_z_field
    half = 0.5 * cfg.spacing

    def phase(t0):
        return (kernels.drive_mean(cfg.orbit_amplitude, cfg.orbit_phase, cfg.period,
                                   cfg.spacing, t0, t0 + half) + zr) * half

    n1 = _rz(phase(0.0)) @ ax.n1
    n2 = _rz(phase(cfg.half_cycle)) @ ax.n2
    return PrethermalAxes(n1, n2, elevation(n1), elevation(n2), geodesic_distance(n1, n2))


def _rz(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


# --- closed forms -----------------------------------------------------------------

def spacing_phase(cfg: ProtocolConfig) -> float:
    """Orbit-drive z-phase accumulated over spacing a (``phi_a``), detuning excluded."""
    T = cfg.period
    return cfg.orbit_amplitude * T / math.pi * math.sin(math.pi * cfg.spacing / T) \
        * math.cos(cfg.orbit_phase)


def orbit_amplitude_for_phase(phi_a: float, pulse_duration: float, spacing: float) -> float:
    """Peak orbit rate that accumulates ``phi_a`` over one phase-locked spacing."""
    T = 2.0 * (pulse_duration + spacing)
    return phi_a * math.pi / (T * math.sin(math.pi * spacing / T))


def delta_pulse_elevation(phi_a: float, eps: float) -> float:
    """Leading-order frame-I elevation ``arctan(phi_a / eps)``."""
    if eps == 0.0:
        return math.copysign(0.5 * math.pi, phi_a)
    return math.atan(phi_a / eps)


def delta_pulse_elevation_exact(phi_a: float, eps: float) -> float:
    """Exact frame-I elevation for instantaneous pulses.

    ``arctan(sin(phi_a/2) / tan(eps/2))``; reduces to the leading-order law
    for small ``phi_a`` and ``eps``.
    """
    return math.atan(math.sin(0.5 * phi_a) / math.tan(0.5 * eps))


def spin_lock_tilt(delta_omega_total: float, rabi: float) -> float:
    """Tilt of the spin-lock axis towards z, ``arctan(delta_omega / rabi)``."""
    if not rabi > 0:
        raise ConfigError("Rabi rate must be > 0")
    return math.atan(delta_omega_total / rabi)


def response_function(delta_b, phi) -> np.ndarray:
    """``sin(phi) * dphi/dB`` on a sampled elevation curve.

    Central differences inside, one-sided at the ends (``numpy.gradient``).
    """
    b = np.asarray(delta_b, dtype=float)
    p = np.asarray(phi, dtype=float)
    if b.shape != p.shape or b.ndim != 1:
        raise ValueError("delta_b and phi must be 1-D arrays of equal length")
    if b.size < 3:
        raise ValueError("response_function needs at least 3 points")
    if np.any(np.diff(b) <= 0):
        raise ValueError("delta_b grid must be strictly increasing")
    return np.sin(p) * np.gradient(p, b, edge_order=1)


# --- transient model ----------------------------------------------------------------

@dataclass(frozen=True)
class TransientParams:
    """Parameters of the post-step relaxation ``g(n)`` (``g = M_y + i M_z``).

    ``epsilon`` is the per-cycle precession angle of the de-alternated
    deviation, equal to ``theta - pi`` of the engine.
    """

    g0: complex
    g_eq: complex
    epsilon: float
    n_eq: float
    tau_cycle: float = 200e-6
    m0: float = 1.0

    def __post_init__(self):
        if not self.n_eq > 0:
            raise ConfigError("n_eq must be > 0")
        if abs(self.g0) > self.m0 * (1 + 1e-12) or abs(self.g_eq) > self.m0 * (1 + 1e-12):
            raise ConfigError("|g0| and |g_eq| must not exceed the magnetization norm")


def transient_series(p: TransientParams, n_max: int):
    """``g(n)`` for ``n = 0..n_max`` and the matching ``M_x`` series.

    Returns
    -------
    g : complex ndarray
    mx : ndarray
        ``sqrt(m0**2 - |g|**2)``; clamped at zero (with a warning) if the
        parameters would make ``|g|`` exceed ``m0``.
    """
    n = np.arange(int(n_max) + 1, dtype=float)
    alt = np.where(np.arange(n.size) % 2 == 0, 1.0, -1.0)
    rate = 1j * p.epsilon - (0.0 if math.isinf(p.n_eq) else 1.0 / p.n_eq)
    g = alt * (p.g_eq + (p.g0 - p.g_eq) * np.exp(rate * n))
    g[0] = p.g0
    rest = p.m0 ** 2 - np.abs(g) ** 2
    if np.any(rest < -1e-12):
        warnings.warn("transient |g(n)| exceeds the magnetization norm; clamping M_x to 0",
                      RuntimeWarning, stacklevel=2)
    return g, np.sqrt(np.clip(rest, 0.0, None))


def transient_frequency(eps: float, tau_cycle: float) -> float:
    """Precession frequency ``|eps| / (2*pi*tau_cycle)`` of the de-alternated transient."""
    return abs(eps) / (2.0 * math.pi * tau_cycle)


# --- stability map ------------------------------------------------------------------

def fibonacci_sphere(count: int = 10_000) -> np.ndarray:
    """Near-uniform unit vectors on the sphere (Fibonacci lattice), shape ``(count, 3)``."""
    if count < 1:
        raise ValueError("grid must contain at least one point")
    i = np.arange(count) + 0.5
    z = 1.0 - 2.0 * i / count
    r = np.sqrt(np.clip(1.0 - z * z, 0.0, None))
    phi = math.pi * (3.0 - math.sqrt(5.0)) * i
    return np.column_stack([r * np.cos(phi), r * np.sin(phi), z])


@dataclass(frozen=True)
class StabilityMap:
    points: np.ndarray
    displacement1: np.ndarray
    displacement2: np.ndarray

    def minimum(self, frame: int = 1) -> np.ndarray:
        d = self.displacement1 if frame == 1 else self.displacement2
        return self.points[int(np.argmin(d))]


def displacement(r: Rotation3, points) -> np.ndarray:
    """Arc distance between each point and its image after one cycle."""
    p = np.asarray(points, dtype=float)
    q = p @ r.m.T
    return np.arctan2(np.linalg.norm(np.cross(p, q), axis=1), np.sum(p * q, axis=1))


def stability_map(cfg: ProtocolConfig, grid=None, extra_z_field: float = 0.0,
                  count: int = 10_000) -> StabilityMap:
    """One-cycle displacement field for both frames over a sphere grid."""
    pts = fibonacci_sphere(count) if grid is None else np.asarray(grid, dtype=float)
    if pts.ndim != 2 or pts.shape[0] == 0 or pts.shape[1] != 3:
        raise ValueError("grid must be a non-empty (n, 3) array")
    pts = pts / np.linalg.norm(pts, axis=1, keepdims=True)
    cyc = build_cycle(cfg, extra_z_field)
    return StabilityMap(pts, displacement(cyc.r_frame1, pts), displacement(cyc.r_frame2, pts))
