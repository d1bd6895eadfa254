"""Spectra and figures of merit.

Amplitude spectra use the one-sided ``2|X_k|/L`` normalisation, so a
unit-amplitude sine on an exact bin reads 1. The DC bin (and the Nyquist bin
for even ``L``) is reported as ``|X_k|/L``, i.e. the mean, not doubled. With
that convention::

    sum(x**2) = L * (mag[0]**2 + mag[nyq]**2 + 0.5 * sum(mag[1:nyq]**2))
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .acquisition import AcquisitionRecord
from .extraction import differential


class MetricError(ValueError):
    pass


class NoPeakError(MetricError):
    pass


@dataclass(frozen=True)
class Spectrum:
    freqs: np.ndarray
    magnitudes: np.ndarray
    df: float

    def bin(self, f: float) -> int:
        return int(np.clip(round(f / self.df), 0, len(self.freqs) - 1))

    def at(self, f: float) -> float:
        return float(self.magnitudes[self.bin(f)])


def amplitude_spectrum(series, f_s: float, window: str = "rect") -> Spectrum:
    """One-sided amplitude spectrum, ``2|X_k|/L`` (DC and Nyquist not doubled)."""
    x = np.asarray(series, dtype=float)
    L = x.size
    if L == 0:
        raise MetricError("empty series")
    if L < 8:
        raise MetricError("amplitude_spectrum needs at least 8 samples")
    if window == "hann":
        w = np.hanning(L)
        x = x * w / np.mean(w)
    elif window != "rect":
        raise MetricError(f"unknown window {window!r}")
    X = np.fft.rfft(x)
    mag = 2.0 * np.abs(X) / L
    mag[0] *= 0.5
    if L % 2 == 0:
        mag[-1] *= 0.5
    return Spectrum(np.fft.rfftfreq(L, 1.0 / f_s), mag, f_s / L)


# --- suppression --------------------------------------------------------------------

def suppression_factor(before, after, f_signal: float, f_bg: float,
                       fs_before: float, fs_after: float | None = None) -> float:
    """``(bg_before / bg_after) * (sig_after / sig_before)`` from peak magnitudes.

    ``before`` and ``after`` are series (or :class:`Spectrum`); magnitudes
    are read at the nearest bins.
    """
    sb = before if isinstance(before, Spectrum) else amplitude_spectrum(before, fs_before)
    sa = after if isinstance(after, Spectrum) else amplitude_spectrum(after, fs_after or fs_before)
    df = max(sb.df, sa.df)
    if abs(f_signal - f_bg) < 3 * df:
        raise MetricError("signal and background peaks are closer than 3 bins")
    bg_b, bg_a = sb.at(f_bg), sa.at(f_bg)
    sig_b, sig_a = sb.at(f_signal), sa.at(f_signal)
    if sig_b == 0:
        raise MetricError("no signal peak before extraction")
    if bg_a == 0:
        return math.inf
    return (bg_b / bg_a) * (sig_a / sig_b)


def synthetic_alternating_record(f_signal, f_bg, f_s=5000.0, duration=1.0,
                                 signal_amp=1.0, bg_amp=1.0, bg_phase=0.3):
    """Background sine plus a signal sine whose sign flips every other sample.

    ``f_s*duration + 1`` samples, so the differential grid spans exactly
    ``duration`` and integer-Hz tones fall on exact bins.
    """
    n = int(round(f_s * duration)) + 1
    t = np.arange(n) / f_s
    alt = np.where(np.arange(n) % 2 == 1, 1.0, -1.0)  # frame 0 (odd samples) positive
    x = bg_amp * np.sin(2 * np.pi * f_bg * t + bg_phase) + \
        alt * signal_amp * np.sin(2 * np.pi * f_signal * t)
    frame = (1 - np.arange(n) % 2).astype(np.int8)
    return AcquisitionRecord(t, x, np.zeros(n), frame)


def suppression_of_record(rec: AcquisitionRecord, f_signal: float, f_bg: float) -> float:
    """Suppression factor of the plain differential, referenced to the frame-0 samples."""
    d = differential(rec)
    fs = rec.sample_rate
    c = np.flatnonzero(rec.frame == 0)
    c = c[(c >= 1) & (c <= len(rec) - 2)]
    return suppression_factor(rec.mx[c], d.values, f_signal, f_bg, fs / 2, fs / 2)


def suppression_closed_form(f_bg, f_signal: float, f_s: float = 5000.0):
    """``(1 + cos(2 pi f_sig / f_s)) / (1 - cos(2 pi f_bg / f_s))``.

    Linear interpolation between neighbours one sample away leaves a
    common-mode residual ``1 - cos(2 pi f / f_s)``; the flipped imprint gains
    ``1 + cos(2 pi f_sig / f_s)``.
    """
    f_bg = np.asarray(f_bg, dtype=float)
    with np.errstate(divide="ignore"):
        return (1 + math.cos(2 * math.pi * f_signal / f_s)) / \
            (1 - np.cos(2 * np.pi * f_bg / f_s))


@dataclass(frozen=True)
class SuppressionCurve:
    bg_freqs: np.ndarray
    eta: np.ndarray
    f_signal: float = 10.0
    f_s: float = 5000.0


def suppression_curve(bg_freqs=None, f_signal: float = 10.0, f_s: float = 5000.0,
                      duration: float = 1.0, threads: int = 1) -> SuppressionCurve:
    """Synthetic suppression-vs-background-frequency sweep.

    Points where the background sits within 3 bins of the signal are NaN;
    a DC background cancels to rounding error, so its factor is ``inf`` or
    astronomically large.
    """
    if bg_freqs is None:
        bg_freqs = np.arange(0.0, 1200.0 + 1e-9, 0.5)
    bg = np.asarray(bg_freqs, dtype=float)

    def one(f):
        rec = synthetic_alternating_record(f_signal, f, f_s, duration)
        try:
            return suppression_of_record(rec, f_signal, f)
        except MetricError:
            return math.nan

    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(threads) as ex:
            eta = np.array(list(ex.map(one, bg)))
    else:
        eta = np.array([one(f) for f in bg])
    return SuppressionCurve(bg, eta, f_signal, f_s)


# --- sensitivity --------------------------------------------------------------------

@dataclass(frozen=True)
class SensitivityReport:
    sensitivity: float
    masked_bins: list = field(default_factory=list)
    rms_floor: float = 0.0


def sensitivity(spec: Spectrum, mask=(), calibration: float = 1.0,
                mask_dc: bool = True) -> SensitivityReport:
    """``S = RMS(unmasked magnitudes) / sqrt(df)`` in calibrated field units.

    For white noise of per-sample sigma this gives ``2*sigma/sqrt(f_s)``.
    ``mask`` lists bin indices to exclude (the signal); DC is always excluded
    unless ``mask_dc`` is False. ``calibration`` converts magnitude units to
    tesla (e.g. injected-tone amplitude over its measured peak).
    """
    masked = sorted({int(b) for b in mask} | ({0} if mask_dc else set()))
    keep = np.ones(len(spec.magnitudes), bool)
    keep[[b for b in masked if 0 <= b < keep.size]] = False
    if not np.any(keep):
        raise MetricError("all bins are masked")
    if np.count_nonzero(keep) < 16:
        raise MetricError("need at least 16 unmasked bins")
    rms = float(np.sqrt(np.mean(spec.magnitudes[keep] ** 2))) * calibration
    return SensitivityReport(rms / math.sqrt(spec.df), masked, rms)


def tone_mask(spec: Spectrum, freqs, halfwidth: int = 2) -> list:
    out = []
    for f in freqs:
        b = spec.bin(f)
        out.extend(range(max(0, b - halfwidth), min(len(spec.freqs), b + halfwidth + 1)))
    return out


# --- transients ---------------------------------------------------------------------

@dataclass(frozen=True)
class TransientFit:
    freq: float
    stderr: float


def transient_fit(series, f_s: float, window: float | None = None, start: int = 0,
                  pad: int = 16) -> TransientFit:
    """Dominant frequency of a transient, refined by three-bin quadratic interpolation.

    The segment ``series[start:start + window*f_s]`` is mean-subtracted and
    zero-padded by ``pad`` before the FFT. ``stderr`` is a quarter of the
    padded bin width, the resolution of the quadratic refinement.
    """
    x = np.asarray(series, dtype=float)[start:]
    if window is not None:
        x = x[: int(round(window * f_s))]
    if x.size < 8:
        raise MetricError("transient window needs at least 8 samples")
    x = x - np.mean(x)
    nfft = int(pad) * x.size
    mag = np.abs(np.fft.rfft(x, nfft))
    if mag.size < 4 or np.max(mag[1:]) <= 1e-12 * max(1.0, float(np.max(np.abs(x))) * x.size):
        raise NoPeakError("no spectral peak (flat spectrum)")
    k = int(np.argmax(mag[1:-1])) + 1
    floor = float(np.median(mag[1:]))
    if mag[k] < 3 * floor:
        raise NoPeakError("no spectral peak above the floor")
    a, b, c = mag[k - 1], mag[k], mag[k + 1]
    den = a - 2 * b + c
    delta = 0.5 * (a - c) / den if den != 0 else 0.0
    df = f_s / nfft
    return TransientFit((k + delta) * df, 0.25 * df)


def dealternate(series, remove_parity_means: bool = True):
    """Multiply by ``(-1)**n``.

    Static offsets that do not alternate would land at the Nyquist frequency
    after de-alternation; by default each parity's mean is removed first.
    """
    x = np.array(series, dtype=float)
    if remove_parity_means:
        x[0::2] -= np.mean(x[0::2])
        x[1::2] -= np.mean(x[1::2])
    return x * np.where(np.arange(x.size) % 2 == 0, 1.0, -1.0)


# --- response -----------------------------------------------------------------------

@dataclass(frozen=True)
class ResponseMeasurement:
    amplitude: float
    floor: float
    weak: bool


def measured_response(record: AcquisitionRecord, f_test: float, variant: str = "plain",
                      component: str = "mx") -> ResponseMeasurement:
    """Peak magnitude of the differential spectrum at ``f_test``.

    ``weak`` is set (and a warning issued) when the peak is below three times
    the median of the surrounding bins.
    """
    if variant == "normalized":
        from .extraction import normalized_differential

        d = normalized_differential(record, component=component)
    elif variant == "extended":
        from .extraction import extended_extraction

        d = extended_extraction(record, component)
    else:
        d = differential(record, component)
    return measured_response_from(d, f_test)


def measured_response_from(d, f_test: float) -> ResponseMeasurement:
    """:func:`measured_response` on an already extracted differential signal."""
    spec = amplitude_spectrum(d.values, d.sample_rate)
    if f_test > spec.freqs[-1]:
        raise MetricError("test tone above the Nyquist frequency")
    k = spec.bin(f_test)
    lo, hi = max(1, k - 25), min(len(spec.freqs), k + 26)
    neigh = np.r_[spec.magnitudes[lo:max(lo, k - 2)], spec.magnitudes[min(hi, k + 3):hi]]
    floor = float(np.median(neigh)) if neigh.size else 0.0
    amp = float(spec.magnitudes[k])
    weak = amp < 3 * floor
    if weak:
        warnings.warn(f"test tone at {f_test} Hz is below 3x the local floor", RuntimeWarning,
                      stacklevel=2)
    return ResponseMeasurement(amp, floor, weak)
