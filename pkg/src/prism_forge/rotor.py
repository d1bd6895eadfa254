"""Exact SO(3) kernel: axis-angle rotations, composition and invariant axes.

Vectors are plain ``numpy`` arrays of shape ``(3,)``. Rotations are wrapped in
:class:`Rotation3`, an immutable value type that checks orthogonality on
construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

ORTHO_TOL = 1e-9
UNIT_TOL = 1e-9
MIN_AXIS_ANGLE = 1e-9
REORTHO_EVERY = 10_000


class RotationError(ValueError):
    """Raised when a rotation contract is violated."""


class AxisUndefinedError(RotationError):
    """The rotation is (numerically) the identity, so it has no axis."""


def as_vec3(v) -> np.ndarray:
    a = np.asarray(v, dtype=float).reshape(3)
    if not np.all(np.isfinite(a)):
        raise RotationError(f"non-finite vector {a!r}")
    return a


def as_unit(v, tol: float = UNIT_TOL) -> np.ndarray:
    a = as_vec3(v)
    n = float(np.linalg.norm(a))
    if abs(n - 1.0) > tol:
        raise RotationError(f"expected a unit vector, got norm {n!r}")
    return a


def normalized(v) -> np.ndarray:
    a = as_vec3(v)
    n = float(np.linalg.norm(a))
    if n == 0.0:
        raise RotationError("cannot normalise the zero vector")
    return a / n


def skew(n) -> np.ndarray:
    x, y, z = as_vec3(n)
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


@dataclass(frozen=True, eq=False)
class Rotation3:
    """Proper orthogonal 3x3 matrix. ``a @ b`` means *b acts first*."""

    m: np.ndarray = field(repr=True)

    def __post_init__(self):
        m = np.array(self.m, dtype=float).reshape(3, 3)
        if not np.all(np.isfinite(m)):
            raise RotationError("rotation matrix has non-finite entries")
        err = np.max(np.abs(m.T @ m - np.eye(3)))
        if err > ORTHO_TOL:
            raise RotationError(f"matrix is not orthogonal (max |m^T m - I| = {err:.3e})")
        det = float(np.linalg.det(m))
        if abs(det - 1.0) > ORTHO_TOL:
            raise RotationError(f"matrix is not proper (det = {det!r})")
        m.setflags(write=False)
        object.__setattr__(self, "m", m)

    @classmethod
    def identity(cls) -> "Rotation3":
        return cls(np.eye(3))

    def __matmul__(self, other):
        if isinstance(other, Rotation3):
            return compose(self, other)
        return self.m @ np.asarray(other, dtype=float)

    def apply(self, v) -> np.ndarray:
        return self.m @ as_vec3(v)

    def inverse(self) -> "Rotation3":
        return Rotation3(self.m.T)

    @property
    def angle(self) -> float:
        return rotation_angle(self)

    def allclose(self, other: "Rotation3", atol: float = 1e-12) -> bool:
        return bool(np.allclose(self.m, other.m, rtol=0.0, atol=atol))


def rodrigues_matrix(axis, angle: float) -> np.ndarray:
    """Raw Rodrigues matrix ``I + sin(t) K + (1 - cos(t)) K^2``; no checks."""
    K = skew(axis)
    return np.eye(3) + math.sin(angle) * K + (1.0 - math.cos(angle)) * (K @ K)


def rodrigues(axis, angle: float) -> Rotation3:
    """Right-handed rotation by ``angle`` about the unit vector ``axis``."""
    n = as_unit(axis)
    if not math.isfinite(angle):
        raise RotationError(f"non-finite rotation angle {angle!r}")
    return Rotation3(rodrigues_matrix(n, angle))


def rot_x(angle: float) -> Rotation3:
    return rodrigues((1.0, 0.0, 0.0), angle)


def rot_z(angle: float) -> Rotation3:
    return rodrigues((0.0, 0.0, 1.0), angle)


def compose(a: Rotation3, b: Rotation3) -> Rotation3:
    """Return ``a . b``; ``b`` is applied first."""
    return Rotation3(a.m @ b.m)


def polar_orthogonalize(m) -> np.ndarray:
    """Closest rotation matrix to ``m`` in Frobenius norm (polar factor)."""
    u, _, vt = np.linalg.svd(np.asarray(m, dtype=float))
    r = u @ vt
    if np.linalg.det(r) < 0:
        u[:, -1] = -u[:, -1]
        r = u @ vt
    return r


def compose_chain(rotations, reortho_every: int = REORTHO_EVERY) -> Rotation3:
    """Compose ``rotations`` in time order (first element acts first).

    Products are accumulated on raw matrices and snapped back onto SO(3) with a
    polar decomposition every ``reortho_every`` factors, which bounds drift for
    very long chains.
    """
    acc = np.eye(3)
    for i, r in enumerate(rotations, start=1):
        m = r.m if isinstance(r, Rotation3) else np.asarray(r, dtype=float)
        acc = m @ acc
        if i % reortho_every == 0:
            acc = polar_orthogonalize(acc)
    return Rotation3(polar_orthogonalize(acc))


def _quaternion(m: np.ndarray) -> np.ndarray:
    # Shepperd's method: pick the largest of (w, x, y, z) to divide by.
    t = m[0, 0] + m[1, 1] + m[2, 2]
    cand = (t, m[0, 0], m[1, 1], m[2, 2])
    k = int(np.argmax(cand))
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
    q = np.array(q)
    if q[0] < 0:
        q = -q
    return q


def axis_angle(r: Rotation3) -> tuple[np.ndarray, float]:
    """Axis and angle with the angle in ``(0, pi]`` (right-handed about the axis).

    Raises
    ------
    AxisUndefinedError
        If the rotation angle is below ``MIN_AXIS_ANGLE``.
    """
    q = _quaternion(r.m)
    s = float(np.linalg.norm(q[1:]))
    angle = 2.0 * math.atan2(s, q[0])
    if angle < MIN_AXIS_ANGLE:
        raise AxisUndefinedError(f"axis undefined: rotation angle {angle:.3e} rad")
    axis = q[1:] / s
    if not np.all(np.isfinite(axis)):
        raise RotationError("eigen-axis solver failed")
    return axis, angle


def rotation_angle(r: Rotation3) -> float:
    q = _quaternion(r.m)
    return 2.0 * math.atan2(float(np.linalg.norm(q[1:])), q[0])


def invariant_axis(r: Rotation3) -> np.ndarray:
    """Unit eigenvector of ``r`` for eigenvalue +1.

    The sign is the one for which ``r`` is a right-handed turn by an angle in
    ``(0, pi]`` about the returned axis.
    """
    axis, _ = axis_angle(r)
    return axis


def geodesic_distance(a, b) -> float:
    """Great-circle distance between two unit vectors, in ``[0, pi]``."""
    ua, ub = as_unit(a), as_unit(b)
    # atan2 form: same value as acos(clamp(a.b)) but accurate near 0 and pi.
    return math.atan2(float(np.linalg.norm(np.cross(ua, ub))), float(ua @ ub))
