"""Pure-Python reference implementation of the hot kernels.

Mirrors ``_ckernels.pyx`` function for function; ``prism_forge.kernels``
picks whichever is available. Keep the two in lock-step.
"""

import math

import numpy as np

GEOMETRIC = 0
DYNAMIC = 1

STATUS_OK = 0
STATUS_DEGENERATE = 1
STATUS_NONFINITE = 2

_MIN_ANGLE = 1e-9


def drive_mean(amp, phase, period, tau_s, t0, t1):
    """Mean of ``amp*cos(2*pi*(t - tau_s/2)/period + phase)`` over ``[t0, t1]``."""
    w = 2.0 * math.pi / period
    u0 = w * (t0 - 0.5 * tau_s) + phase
    u1 = w * (t1 - 0.5 * tau_s) + phase
    return amp * (math.sin(u1) - math.sin(u0)) / (w * (t1 - t0))


def rodrigues_into(out, ax, ay, az, angle):
    s = math.sin(angle)
    c1 = 1.0 - math.cos(angle)
    out[0, 0] = 1.0 - c1 * (ay * ay + az * az)
    out[1, 1] = 1.0 - c1 * (ax * ax + az * az)
    out[2, 2] = 1.0 - c1 * (ax * ax + ay * ay)
    out[0, 1] = -s * az + c1 * ax * ay
    out[1, 0] = s * az + c1 * ax * ay
    out[0, 2] = s * ay + c1 * ax * az
    out[2, 0] = -s * ay + c1 * ax * az
    out[1, 2] = -s * ax + c1 * ay * az
    out[2, 1] = s * ax + c1 * ay * az
    return out


def segment_product(omega_x, wz, dt):
    """Time-ordered product of segment rotations about ``(omega_x, 0, wz[j])``."""
    acc = np.eye(3)
    r = np.empty((3, 3))
    for w in wz:
        rate = math.hypot(omega_x, w)
        if rate == 0.0:
            continue
        rodrigues_into(r, omega_x / rate, 0.0, w / rate, rate * dt)
        acc = r @ acc
    return acc


def half_cycle(t0, omega_x, extra_z, amp, phase, tau_p, tau_s, period, n_seg):
    """Spacing (z-rotation) followed by one segmented pulse, starting at ``t0``.

    Returns the 3x3 matrix and the spacing z-phase.
    """
    phi = (drive_mean(amp, phase, period, tau_s, t0, t0 + tau_s) + extra_z) * tau_s
    dt = tau_p / n_seg
    ts = t0 + tau_s
    wz = [drive_mean(amp, phase, period, tau_s, ts + j * dt, ts + (j + 1) * dt) + extra_z
          for j in range(n_seg)]
    rz = np.empty((3, 3))
    rodrigues_into(rz, 0.0, 0.0, 1.0, phi)
    return segment_product(omega_x, wz, dt) @ rz, phi


def quat_axis(m):
    """Axis (angle in (0, pi]) and angle of rotation matrix ``m`` (Shepperd)."""
    t = m[0, 0] + m[1, 1] + m[2, 2]
    k = 0
    best = t
    for i in range(3):
        if m[i, i] > best:
            best = m[i, i]
            k = i + 1
    if k == 0:
        w = 0.5 * math.sqrt(max(1.0 + t, 0.0))
        f = 0.25 / w
        q = (w, (m[2, 1] - m[1, 2]) * f, (m[0, 2] - m[2, 0]) * f, (m[1, 0] - m[0, 1]) * f)
    elif k == 1:
        x = 0.5 * math.sqrt(max(1.0 + 2 * m[0, 0] - t, 0.0))
        f = 0.25 / x
        q = ((m[2, 1] - m[1, 2]) * f, x, (m[0, 1] + m[1, 0]) * f, (m[0, 2] + m[2, 0]) * f)
    elif k == 2:
        y = 0.5 * math.sqrt(max(1.0 + 2 * m[1, 1] - t, 0.0))
        f = 0.25 / y
        q = ((m[0, 2] - m[2, 0]) * f, (m[0, 1] + m[1, 0]) * f, y, (m[1, 2] + m[2, 1]) * f)
    else:
        z = 0.5 * math.sqrt(max(1.0 + 2 * m[2, 2] - t, 0.0))
        f = 0.25 / z
        q = ((m[1, 0] - m[0, 1]) * f, (m[0, 2] + m[2, 0]) * f, (m[1, 2] + m[2, 1]) * f, z)
    qw, qx, qy, qz = q
    if qw < 0:
        qw, qx, qy, qz = -qw, -qx, -qy, -qz
    s = math.sqrt(qx * qx + qy * qy + qz * qz)
    angle = 2.0 * math.atan2(s, qw)
    if angle < _MIN_ANGLE:
        return None, angle
    return np.array([qx / s, qy / s, qz / s]), angle


def run_engine(omega_x, extra_z, amp, phase, tau_p, tau_s, period, n_seg,
               mode, relax, m0):
    """Advance the magnetisation through ``len(omega_x)`` half-cycles.

    Half-cycle ``k`` starts at ``k*(tau_p + tau_s)`` with a spacing and ends
    with a pulse. Per-half-cycle arrays carry the instantaneous Rabi rate,
    constant z-rate, orbit amplitude and orbit phase.

    Returns ``(states, axes, status, bad_index)``; ``states[k]`` is the
    magnetisation right after pulse ``k`` and ``axes[k]`` the prethermal axis
    of the frame ending at that pulse (sign: positive x-component).
    """
    n = len(omega_x)
    half = tau_p + tau_s
    states = np.zeros((n, 3))
    axes = np.zeros((n, 3))
    m = np.array(m0, dtype=float)
    norm0 = math.sqrt(float(m @ m))
    for k in range(n):
        t0 = k * half
        args = (omega_x[k], extra_z[k], amp[k], phase[k], tau_p, tau_s, period, n_seg)
        h_now, _ = half_cycle(t0, *args)
        h_prev, _ = half_cycle(t0 - half, *args)
        a, _ = quat_axis(h_now @ h_prev)
        if a is None:
            return states, axes, STATUS_DEGENERATE, k
        m = h_now @ m
        p = float(a @ m)
        if mode == GEOMETRIC:
            if p < 0.0 or (p == 0.0 and a[0] < 0.0):
                m = -norm0 * a
            else:
                m = norm0 * a
        else:
            m = p * a + relax * (m - p * a)
        if not np.all(np.isfinite(m)):
            return states, axes, STATUS_NONFINITE, k
        states[k] = m
        axes[k] = -a if a[0] < 0.0 else a
    return states, axes, STATUS_OK, -1
