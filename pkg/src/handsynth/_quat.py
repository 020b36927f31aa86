"""Quaternion helpers. Quaternions are stored as (..., 4) arrays in (w, x, y, z) order."""

import numpy as np


def identity(n=None):
    if n is None:
        return np.array([1.0, 0.0, 0.0, 0.0])
    q = np.zeros((n, 4))
    q[:, 0] = 1.0
    return q


def normalize(q):
    q = np.asarray(q, dtype=float)
    return q / np.linalg.norm(q, axis=-1, keepdims=True)


def conjugate(q):
    q = np.asarray(q, dtype=float)
    return q * np.array([1.0, -1.0, -1.0, -1.0])


def multiply(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    aw, ax, ay, az = a[..., 0], a[..., 1], a[..., 2], a[..., 3]
    bw, bx, by, bz = b[..., 0], b[..., 1], b[..., 2], b[..., 3]
    return np.stack([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ], axis=-1)


def rotate(q, v):
    """Rotate vectors ``v`` (..., 3) by unit quaternions ``q`` (..., 4)."""
    q = np.asarray(q, dtype=float)
    v = np.asarray(v, dtype=float)
    w = q[..., :1]
    u = q[..., 1:]
    t = 2.0 * np.cross(u, v)
    return v + w * t + np.cross(u, t)


def to_matrix(q):
    q = np.asarray(q, dtype=float)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    m = np.empty(q.shape[:-1] + (3, 3))
    m[..., 0, 0] = 1 - 2 * (y * y + z * z)
    m[..., 0, 1] = 2 * (x * y - w * z)
    m[..., 0, 2] = 2 * (x * z + w * y)
    m[..., 1, 0] = 2 * (x * y + w * z)
    m[..., 1, 1] = 1 - 2 * (x * x + z * z)
    m[..., 1, 2] = 2 * (y * z - w * x)
    m[..., 2, 0] = 2 * (x * z - w * y)
    m[..., 2, 1] = 2 * (y * z + w * x)
    m[..., 2, 2] = 1 - 2 * (x * x + y * y)
    return m


def from_axis_angle(axis, angle):
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis, axis=-1, keepdims=True)
    half = 0.5 * np.asarray(angle, dtype=float)[..., None]
    return np.concatenate([np.cos(half), np.sin(half) * axis], axis=-1)


def from_euler_xzy(flex, abduct, twist):
    """Intrinsic X-Z-Y rotation (flexion about X, abduction about Z, twist about Y), radians."""
    qx = from_axis_angle([1.0, 0.0, 0.0], flex)
    qz = from_axis_angle([0.0, 0.0, 1.0], abduct)
    qy = from_axis_angle([0.0, 1.0, 0.0], twist)
    return multiply(multiply(qx, qz), qy)


def to_euler_xzy(q):
    """Inverse of :func:`from_euler_xzy`. Returns (..., 3) radians, abduction in [-pi/2, pi/2]."""
    m = to_matrix(q)
    # R = Rx(a) Rz(b) Ry(c): R[0,1] = -sin b, R[2,1]/R[1,1] = tan a, R[0,2]/R[0,0] = tan c
    b = np.arcsin(np.clip(-m[..., 0, 1], -1.0, 1.0))
    a = np.arctan2(m[..., 2, 1], m[..., 1, 1])
    c = np.arctan2(m[..., 0, 2], m[..., 0, 0])
    return np.stack([a, b, c], axis=-1)


def angle_between(a, b):
    """Rotation angle (radians) taking ``a`` to ``b``, sign-insensitive."""
    d = np.abs(np.sum(np.asarray(a) * np.asarray(b), axis=-1))
    return 2.0 * np.arccos(np.clip(d, 0.0, 1.0))


def slerp(a, b, t):
    """Shortest-arc spherical interpolation, elementwise over leading axes."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    same = np.all(a == b, axis=-1, keepdims=True)
    d = np.sum(a * b, axis=-1, keepdims=True)
    b = np.where(d < 0.0, -b, b)
    d = np.abs(d)
    theta = np.arccos(np.clip(d, -1.0, 1.0))
    s = np.sin(theta)
    small = s < 1e-9
    safe = np.where(small, 1.0, s)
    wa = np.where(small, 1.0 - t, np.sin((1.0 - t) * theta) / safe)
    wb = np.where(small, t, np.sin(t * theta) / safe)
    # equal endpoints stay bit-exact rather than picking up rounding from renormalisation
    return np.where(same, a, normalize(wa * a + wb * b))
