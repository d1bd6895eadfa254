"""Signal recovery from alternating-frame records.

The differential signal is evaluated at the frame-I samples (``frame == 0``
by default)::

    d_c = M_c - (M_{c-1} + M_{c+1}) / 2

Backgrounds common to both frames cancel up to the linear-interpolation
error; a field imprint whose sign flips between the frames is doubled.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import uniform_filter1d
from scipy.signal import find_peaks

from .acquisition import AcquisitionRecord


class ExtractionError(ValueError):
    pass


@dataclass(frozen=True)
class DifferentialSignal:
    times: np.ndarray
    values: np.ndarray
    variant: str = "plain"
    scale: float = 1.0

    @property
    def sample_rate(self) -> float:
        return 1.0 / float(self.times[1] - self.times[0])


def _component(record, component):
    if component == "mx":
        return np.asarray(record.mx, dtype=float)
    if component == "my":
        return np.asarray(record.my, dtype=float)
    raise ExtractionError(f"unknown component {component!r}")


def _check_tags(record, min_len):
    n = len(record.times)
    if n < min_len:
        raise ExtractionError(f"need at least {min_len} samples, got {n}")
    f = getattr(record, "frame", None)
    if f is None or len(f) != n:
        raise ExtractionError("record has no frame alternation tags")
    f = np.asarray(f)
    if not np.all((f == 0) | (f == 1)) or np.any(f[1:] == f[:-1]):
        raise ExtractionError("frame tags must alternate 0/1 sample to sample")
    return f


def _centres(frame, centre_frame):
    n = len(frame)
    idx = np.flatnonzero(frame == centre_frame)
    return idx[(idx >= 1) & (idx <= n - 2)]


def differential(record: AcquisitionRecord, component: str = "mx", centre_frame: int = 0,
                 half_scale: bool = False) -> DifferentialSignal:
    """Plain differential signal on the ``centre_frame`` grid.

    ``half_scale=True`` multiplies by 1/2 (the ``(M_I - M_II)/2`` convention).
    With frame I at the odd samples the output has ``(n - 1) // 2`` points.
    """
    frame = _check_tags(record, 3)
    m = _component(record, component)
    c = _centres(frame, centre_frame)
    d = m[c] - 0.5 * (m[c - 1] + m[c + 1])
    s = 0.5 if half_scale else 1.0
    return DifferentialSignal(np.asarray(record.times)[c], s * d, "plain", s)


def _parity_interp(m, frame, which):
    # linear interpolation of one parity's samples onto the full grid
    n = len(m)
    idx = np.flatnonzero(frame == which)
    return np.interp(np.arange(n), idx, m[idx])


def normalized_differential(record: AcquisitionRecord, baseline_window: int = 101,
                            component: str = "mx", centre_frame: int = 0) -> DifferentialSignal:
    """Differential signal divided by a slowly varying amplitude baseline.

    The baseline is the moving average (``baseline_window`` samples, odd,
    >= 3) of the mean of both parities interpolated onto the full grid.
    """
    if baseline_window < 3 or baseline_window % 2 == 0:
        raise ExtractionError("baseline_window must be odd and >= 3")
    frame = _check_tags(record, 3)
    m = _component(record, component)
    mean = 0.5 * (_parity_interp(m, frame, 0) + _parity_interp(m, frame, 1))
    base = uniform_filter1d(mean, size=baseline_window, mode="nearest")
    d = differential(record, component, centre_frame)
    c = _centres(frame, centre_frame)
    b = base[c]
    sgn = np.sign(b)
    bad = np.flatnonzero((sgn == 0) | (sgn != sgn[0]))
    if bad.size:
        raise ExtractionError(f"baseline crosses zero at sample {int(c[bad[0]])}")
    return DifferentialSignal(d.times, d.values / b, "normalized", 1.0)


def extended_extraction(record: AcquisitionRecord, component: str = "mx") -> DifferentialSignal:
    """Full-rate difference of the two parities, each interpolated to every sample.

    At frame-0 samples this equals :func:`differential`. Common-mode residuals
    alternate in sign from sample to sample, so a common-mode tone at ``f``
    leaves its residual at ``f_Nyquist - f``; imprints stay at their own
    frequency.
    """
    frame = _check_tags(record, 4)
    m = _component(record, component)
    n = len(m)
    e = _parity_interp(m, frame, 0) - _parity_interp(m, frame, 1)
    k = np.arange(1, n - 1)
    return DifferentialSignal(np.asarray(record.times)[k], e[k], "extended", 1.0)


# --- 3D reconstruction --------------------------------------------------------------

@dataclass(frozen=True)
class CalibrationHint:
    """Where the calibration rotation ends, and the M_z sign of frame 0 after it."""

    calibration_end: float
    frame0_sign: int = 1


@dataclass(frozen=True)
class Reconstruction3D:
    times: np.ndarray
    mx: np.ndarray
    my: np.ndarray
    mz: np.ndarray
    norm: np.ndarray
    frame: np.ndarray
    maxima: tuple
    clamped: int

    def elevation(self, mask=None) -> np.ndarray:
        """Per-frame mean elevation ``atan2(mz, |m_xy|)`` over ``mask``."""
        sel = np.ones(len(self.times), bool) if mask is None else np.asarray(mask)
        out = []
        for f in (0, 1):
            s = sel & (self.frame == f)
            out.append(math.atan2(float(np.mean(self.mz[s])),
                                  float(np.mean(np.hypot(self.mx[s], self.my[s])))))
        return np.array(out)


def smooth(x, window: int, method: str = "mean"):
    """Moving average, or a local quadratic (Savitzky-Golay) fit with ``method='quadratic'``."""
    if window <= 1:
        return np.asarray(x, float).copy()
    if method == "quadratic":
        from scipy.signal import savgol_filter

        w = window + 1 - window % 2
        return savgol_filter(x, max(w, 5), 2, mode="interp")
    return uniform_filter1d(np.asarray(x, float), size=int(window), mode="nearest")


def _peak_norm(t, env, i, half):
    lo, hi = max(0, i - half), min(len(env), i + half + 1)
    if hi - lo < 5:
        return float(env[i])
    tt = t[lo:hi] - t[i]
    c = np.polyfit(tt, env[lo:hi], 2)
    if c[0] >= 0:
        return float(np.max(env[lo:hi]))
    tv = -c[1] / (2 * c[0])
    if not (tt[0] <= tv <= tt[-1]):
        return float(np.max(env[lo:hi]))
    return float(np.polyval(c, tv))


def reconstruct_3d(record: AcquisitionRecord, hint: CalibrationHint,
                   envelope_window: int = 100, baseline_window: int = 2000,
                   fit_window: int | None = None,
                   smoothing: str = "mean") -> Reconstruction3D:
    """Recover the signed M_z of each frame from the in-plane components.

    During the calibration rotation the axes sweep through the xy-plane, where
    ``|M_xy|`` equals the full norm. Maxima of the smoothed per-frame envelope
    mark those crossings; the norm at each one comes from a local quadratic
    fit to the raw envelope, and is linearly interpolated in between. After
    calibration the norm follows a linear fit to the maxima inside the last
    ``baseline_window`` samples. M_z flips sign at every crossing, and is
    seeded so that frame 0 carries ``hint.frame0_sign`` after calibration.
    """
    frame = _check_tags(record, 8)
    t = np.asarray(record.times, dtype=float)
    mx = np.asarray(record.mx, dtype=float)
    my = np.asarray(record.my, dtype=float)
    env_all = np.hypot(mx, my)
    n = len(t)
    norm = np.zeros(n)
    mz = np.zeros(n)
    maxima = []
    clamped = 0
    half = (fit_window or envelope_window) // 2
    for f in (0, 1):
        idx = np.flatnonzero(frame == f)
        tf, env = t[idx], env_all[idx]
        cal = tf < hint.calibration_end
        if np.count_nonzero(cal) < 3:
            raise ExtractionError("calibration interval too short")
        sm = smooth(env, max(1, envelope_window // 2), smoothing)
        envc = sm[cal]
        rng = float(np.ptp(envc))
        if rng <= 0:
            raise ExtractionError(f"no envelope maxima found in frame {f}")
        pk, _ = find_peaks(envc, prominence=0.05 * rng)
        if pk.size == 0:
            raise ExtractionError(f"no envelope maxima found in frame {f}")
        pn = np.array([_peak_norm(tf, env, int(i), half // 2 + 2) for i in pk])
        pt = tf[pk]
        maxima.append(tuple(int(idx[i]) for i in pk))

        nf = np.interp(tf, pt, pn)
        after = ~cal
        if np.any(after):
            t_end = tf[cal][-1]
            span = baseline_window * (t[1] - t[0])
            sel = pt >= t_end - span
            if np.count_nonzero(sel) >= 2:
                c = np.polyfit(pt[sel], pn[sel], 1)
                nf[after] = np.polyval(c, tf[after])
            else:
                nf[after] = pn[-1]
        # sign: seeded after calibration, flipped at every crossing going back
        seed = hint.frame0_sign if f == 0 else -hint.frame0_sign
        flips = np.searchsorted(pt, tf, side="right")
        sign = seed * np.where((len(pt) - flips) % 2 == 0, 1.0, -1.0)
        rest = nf ** 2 - env ** 2
        clamped += int(np.count_nonzero(rest < 0))
        mz[idx] = sign * np.sqrt(np.clip(rest, 0.0, None))
        norm[idx] = nf
    if clamped:
        warnings.warn(f"norm below |M_xy| at {clamped} samples; M_z clamped to 0",
                      RuntimeWarning, stacklevel=2)
    return Reconstruction3D(t, mx, my, mz, norm, frame, tuple(maxima), clamped)
