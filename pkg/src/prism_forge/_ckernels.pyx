# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels. Same contract as ``_kernels_py``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sin, cos, sqrt, atan2, hypot, M_PI, isfinite

cnp.import_array()

GEOMETRIC = 0
DYNAMIC = 1

STATUS_OK = 0
STATUS_DEGENERATE = 1
STATUS_NONFINITE = 2

cdef double _MIN_ANGLE = 1e-9


cdef inline double _drive_mean(double amp, double phase, double period, double tau_s,
                               double t0, double t1) noexcept nogil:
    cdef double w = 2.0 * M_PI / period
    cdef double u0 = w * (t0 - 0.5 * tau_s) + phase
    cdef double u1 = w * (t1 - 0.5 * tau_s) + phase
    return amp * (sin(u1) - sin(u0)) / (w * (t1 - t0))


cdef inline void _rodrigues(double* out, double ax, double ay, double az,
                            double angle) noexcept nogil:
    cdef double s = sin(angle)
    cdef double c1 = 1.0 - cos(angle)
    out[0] = 1.0 - c1 * (ay * ay + az * az)
    out[4] = 1.0 - c1 * (ax * ax + az * az)
    out[8] = 1.0 - c1 * (ax * ax + ay * ay)
    out[1] = -s * az + c1 * ax * ay
    out[3] = s * az + c1 * ax * ay
    out[2] = s * ay + c1 * ax * az
    out[6] = -s * ay + c1 * ax * az
    out[5] = -s * ax + c1 * ay * az
    out[7] = s * ax + c1 * ay * az


cdef inline void _matmul(double* out, const double* a, const double* b) noexcept nogil:
    # out = a @ b, row-major 3x3; out must not alias a or b
    cdef int i, j
    for i in range(3):
        for j in range(3):
            out[3 * i + j] = (a[3 * i] * b[j] + a[3 * i + 1] * b[3 + j]
                              + a[3 * i + 2] * b[6 + j])


cdef inline void _copy9(double* dst, const double* src) noexcept nogil:
    cdef int i
    for i in range(9):
        dst[i] = src[i]


cdef void _segment_product(double* acc, double omega_x, const double* wz, int n,
                           double dt) noexcept nogil:
    cdef double r[9]
    cdef double tmp[9]
    cdef double rate
    cdef int j
    for j in range(9):
        acc[j] = 0.0
    acc[0] = 1.0
    acc[4] = 1.0
    acc[8] = 1.0
    for j in range(n):
        rate = hypot(omega_x, wz[j])
        if rate == 0.0:
            continue
        _rodrigues(r, omega_x / rate, 0.0, wz[j] / rate, rate * dt)
        _matmul(tmp, r, acc)
        _copy9(acc, tmp)


cdef double _half_cycle(double* out, double* wz, double t0, double omega_x, double extra_z,
                        double amp, double phase, double tau_p, double tau_s,
                        double period, int n_seg) noexcept nogil:
    cdef double phi = (_drive_mean(amp, phase, period, tau_s, t0, t0 + tau_s) + extra_z) * tau_s
    cdef double dt = tau_p / n_seg
    cdef double ts = t0 + tau_s
    cdef double rz[9]
    cdef double p[9]
    cdef int j
    for j in range(n_seg):
        wz[j] = _drive_mean(amp, phase, period, tau_s, ts + j * dt, ts + (j + 1) * dt) + extra_z
    _rodrigues(rz, 0.0, 0.0, 1.0, phi)
    _segment_product(p, omega_x, wz, n_seg, dt)
    _matmul(out, p, rz)
    return phi


cdef double _quat_axis(const double* m, double* axis) noexcept nogil:
    # returns angle; axis filled when angle >= _MIN_ANGLE
    cdef double t = m[0] + m[4] + m[8]
    cdef int k = 0
    cdef double best = t
    cdef double qw, qx, qy, qz, f, s, angle
    if m[0] > best:
        best = m[0]
        k = 1
    if m[4] > best:
        best = m[4]
        k = 2
    if m[8] > best:
        best = m[8]
        k = 3
    if k == 0:
        qw = 0.5 * sqrt(max(1.0 + t, 0.0))
        f = 0.25 / qw
        qx = (m[7] - m[5]) * f
        qy = (m[2] - m[6]) * f
        qz = (m[3] - m[1]) * f
    elif k == 1:
        qx = 0.5 * sqrt(max(1.0 + 2 * m[0] - t, 0.0))
        f = 0.25 / qx
        qw = (m[7] - m[5]) * f
        qy = (m[1] + m[3]) * f
        qz = (m[2] + m[6]) * f
    elif k == 2:
        qy = 0.5 * sqrt(max(1.0 + 2 * m[4] - t, 0.0))
        f = 0.25 / qy
        qw = (m[2] - m[6]) * f
        qx = (m[1] + m[3]) * f
        qz = (m[5] + m[7]) * f
    else:
        qz = 0.5 * sqrt(max(1.0 + 2 * m[8] - t, 0.0))
        f = 0.25 / qz
        qw = (m[3] - m[1]) * f
        qx = (m[2] + m[6]) * f
        qy = (m[5] + m[7]) * f
    if qw < 0:
        qw = -qw
        qx = -qx
        qy = -qy
        qz = -qz
    s = sqrt(qx * qx + qy * qy + qz * qz)
    angle = 2.0 * atan2(s, qw)
    if angle >= _MIN_ANGLE:
        axis[0] = qx / s
        axis[1] = qy / s
        axis[2] = qz / s
    return angle


def drive_mean(double amp, double phase, double period, double tau_s, double t0, double t1):
    return _drive_mean(amp, phase, period, tau_s, t0, t1)


def segment_product(double omega_x, wz, double dt):
    cdef double[::1] w = np.ascontiguousarray(wz, dtype=np.float64)
    out = np.empty((3, 3))
    cdef double[:, ::1] o = out
    if w.shape[0] == 0:
        return np.eye(3)
    _segment_product(&o[0, 0], omega_x, &w[0], w.shape[0], dt)
    return out


def half_cycle(double t0, double omega_x, double extra_z, double amp, double phase,
               double tau_p, double tau_s, double period, int n_seg):
    out = np.empty((3, 3))
    cdef double[:, ::1] o = out
    cdef double[::1] wz = np.empty(n_seg)
    phi = _half_cycle(&o[0, 0], &wz[0], t0, omega_x, extra_z, amp, phase,
                      tau_p, tau_s, period, n_seg)
    return out, phi


def quat_axis(m):
    cdef double[:, ::1] mm = np.ascontiguousarray(m, dtype=np.float64)
    cdef double ax[3]
    angle = _quat_axis(&mm[0, 0], ax)
    if angle < _MIN_ANGLE:
        return None, angle
    return np.array([ax[0], ax[1], ax[2]]), angle


def run_engine(omega_x, extra_z, amp, phase, double tau_p, double tau_s, double period,
               int n_seg, int mode, double relax, m0):
    cdef double[::1] ox = np.ascontiguousarray(omega_x, dtype=np.float64)
    cdef double[::1] ez = np.ascontiguousarray(extra_z, dtype=np.float64)
    cdef double[::1] am = np.ascontiguousarray(amp, dtype=np.float64)
    cdef double[::1] ph = np.ascontiguousarray(phase, dtype=np.float64)
    cdef Py_ssize_t n = ox.shape[0]
    states_arr = np.zeros((n, 3))
    axes_arr = np.zeros((n, 3))
    cdef double[:, ::1] states = states_arr
    cdef double[:, ::1] axes = axes_arr
    cdef double[::1] wz = np.empty(n_seg)
    cdef double[::1] m0v = np.ascontiguousarray(m0, dtype=np.float64)
    cdef double half = tau_p + tau_s
    cdef double h_now[9]
    cdef double h_prev[9]
    cdef double cyc[9]
    cdef double a[3]
    cdef double m[3]
    cdef double mn[3]
    cdef double norm0, p, t0, angle, sgn
    cdef Py_ssize_t k
    cdef int i, status = 0
    cdef Py_ssize_t bad = -1
    m[0] = m0v[0]
    m[1] = m0v[1]
    m[2] = m0v[2]
    norm0 = sqrt(m[0] * m[0] + m[1] * m[1] + m[2] * m[2])
    with nogil:
        for k in range(n):
            t0 = k * half
            _half_cycle(h_now, &wz[0], t0, ox[k], ez[k], am[k], ph[k], tau_p, tau_s, period, n_seg)
            _half_cycle(h_prev, &wz[0], t0 - half, ox[k], ez[k], am[k], ph[k], tau_p, tau_s,
                        period, n_seg)
            _matmul(cyc, h_now, h_prev)
            angle = _quat_axis(cyc, a)
            if angle < _MIN_ANGLE:
                status = 1
                bad = k
                break
            for i in range(3):
                mn[i] = h_now[3 * i] * m[0] + h_now[3 * i + 1] * m[1] + h_now[3 * i + 2] * m[2]
            p = a[0] * mn[0] + a[1] * mn[1] + a[2] * mn[2]
            if mode == 0:
                if p < 0.0 or (p == 0.0 and a[0] < 0.0):
                    sgn = -norm0
                else:
                    sgn = norm0
                for i in range(3):
                    m[i] = sgn * a[i]
            else:
                for i in range(3):
                    m[i] = p * a[i] + relax * (mn[i] - p * a[i])
            if not (isfinite(m[0]) and isfinite(m[1]) and isfinite(m[2])):
                status = 2
                bad = k
                break
            sgn = -1.0 if a[0] < 0.0 else 1.0
            for i in range(3):
                states[k, i] = m[i]
                axes[k, i] = sgn * a[i]
    return states_arr, axes_arr, status, bad
