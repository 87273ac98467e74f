"""Unit quaternion utilities.

Quaternions are float arrays of shape (..., 4) in (w, x, y, z) order,
scalar part first. Rotations act on column vectors, R(q) v, and q and -q
denote the same rotation; `canonical` picks one representative per
rotation so equality tests and serialization are stable.
"""

import numpy as np


def normalize(q):
    q = np.asarray(q, dtype=np.float64)
    return q / np.linalg.norm(q, axis=-1, keepdims=True)


def canonical(q):
    """Flip sign so w > 0; w == 0 ties resolved by first nonzero component > 0."""
    q = np.asarray(q, dtype=np.float64)
    s = np.sign(q[..., 0])
    for i in (1, 2, 3):
        s = np.where(s == 0.0, np.sign(q[..., i]), s)
    s = np.where(s == 0.0, 1.0, s)
    return q * s[..., None]


def multiply(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    aw, ax, ay, az = a[..., 0], a[..., 1], a[..., 2], a[..., 3]
    bw, bx, by, bz = b[..., 0], b[..., 1], b[..., 2], b[..., 3]
    return np.stack(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ],
        axis=-1,
    )


def conjugate(q):
    q = np.asarray(q, dtype=np.float64)
    return q * np.array([1.0, -1.0, -1.0, -1.0])


def rotate(q, v):
    """Rotate vectors v (..., 3) by quaternions q (..., 4)."""
    q = np.asarray(q, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    qv = q[..., 1:]
    t = 2.0 * np.cross(qv, v)
    return v + q[..., :1] * t + np.cross(qv, t)


def to_matrix(q):
    q = np.asarray(q, dtype=np.float64)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    m = np.empty(q.shape[:-1] + (3, 3), dtype=np.float64)
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
    axis = np.asarray(axis, dtype=np.float64)
    angle = np.asarray(angle, dtype=np.float64)
    axis = axis / np.linalg.norm(axis, axis=-1, keepdims=True)
    half = angle / 2.0
    return np.concatenate(
        [np.cos(half)[..., None], np.sin(half)[..., None] * axis], axis=-1
    )


def random_rotations(rng, n=None):
    """Haar-uniform rotations via normalized 4-normals."""
    shape = (4,) if n is None else (n, 4)
    q = rng.standard_normal(shape)
    return canonical(normalize(q))


def geodesic_distance(a, b):
    """Relative rotation angle in radians, in [0, pi]."""
    dot = np.abs(np.sum(np.asarray(a) * np.asarray(b), axis=-1))
    return 2.0 * np.arccos(np.clip(dot, -1.0, 1.0))


def trace_of_relative(a, b):
    """tr(R(a)^T R(b)) without forming matrices."""
    dot = np.sum(np.asarray(a) * np.asarray(b), axis=-1)
    # tr(R) = 4 w^2 - 1 for the relative quaternion, whose w is |<a, b>|
    return 4.0 * dot * dot - 1.0
