"""Equivolumetric SO(3) grid from the Hopf fibration.

A rotation is coordinatized as (theta, phi, psi): (theta, phi) pick a point
on S^2 (pixelized with nested HEALPix) and psi in [0, 2 pi) moves along the
Hopf circle (6 * 2^r bins at recursion r). The product is an equal-volume
partition of SO(3) into 72 * 8^r cells. Total volume convention: pi^2.

Cell index layout: the base-cell id in [0, 72) followed by r octal digits,
one per refinement, where digit = (healpix child rank in [0,4)) * 2 +
(psi half in [0,2)). Hence parent(i) = i // 8 and children are
{8i, ..., 8i+7}.

Quaternion convention (w, x, y, z):
    q = (cos(t/2) cos(p/2), cos(t/2) sin(p/2),
         sin(t/2) cos(f + p/2), sin(t/2) sin(f + p/2))
with t = theta, f = phi, p = psi. q(psi + 2 pi) = -q(psi), so psi in
[0, 2 pi) covers each rotation exactly once and lookups are double-cover
invariant by construction.
"""

from dataclasses import dataclass, field

import numpy as np

from . import healpix, quat

N_BASE = 72
BRANCHING = 8
MAX_RECURSION = 7
SO3_VOLUME = np.pi * np.pi


def _check_recursion(recursion):
    r = int(recursion)
    if not 0 <= r <= MAX_RECURSION:
        raise ValueError(f"recursion must be in [0, {MAX_RECURSION}], got {recursion}")
    return r


def n_cells(recursion):
    r = _check_recursion(recursion)
    return N_BASE * 8**r


def n_side(recursion):
    return 1 << _check_recursion(recursion)


def n_psi(recursion):
    return 6 << _check_recursion(recursion)


def cell_volume(recursion):
    return SO3_VOLUME / n_cells(recursion)


def identity_quat():
    return np.array([1.0, 0.0, 0.0, 0.0])


@dataclass(frozen=True)
class So3Frame:
    """Rigid offset of the whole grid: cell c sits at offset * center(c)."""

    offset: np.ndarray = field(default_factory=identity_quat)

    def apply(self, q):
        return quat.multiply(self.offset, q)

    def invert(self, q):
        return quat.multiply(quat.conjugate(self.offset), q)


IDENTITY_SO3_FRAME = So3Frame()


def pack(pix, psi, recursion):
    """Cell index from (healpix pixel, psi bin) at a recursion."""
    r = _check_recursion(recursion)
    pix = np.asarray(pix, dtype=np.int64)
    psi = np.asarray(psi, dtype=np.int64)
    idx = (pix >> (2 * r)) * 6 + (psi >> r)
    for j in range(1, r + 1):
        hp_rank = (pix >> (2 * (r - j))) & 3
        psi_half = (psi >> (r - j)) & 1
        idx = idx * 8 + hp_rank * 2 + psi_half
    return idx


def unpack(index, recursion):
    """(healpix pixel, psi bin) for a cell index at a recursion."""
    r = _check_recursion(recursion)
    index = np.asarray(index, dtype=np.int64)
    base = index >> (3 * r)
    pix = base // 6
    psi = base - pix * 6
    for j in range(1, r + 1):
        d = (index >> (3 * (r - j))) & 7
        pix = pix * 4 + (d >> 1)
        psi = psi * 2 + (d & 1)
    return pix, psi


def parent(index, recursion):
    if _check_recursion(recursion) == 0:
        raise ValueError("recursion-0 cells have no parent")
    return np.asarray(index, dtype=np.int64) // 8


def children(index, recursion):
    """Indices of the 8 children at recursion + 1, ordered by child digit."""
    _check_recursion(recursion + 1)
    index = np.asarray(index, dtype=np.int64)
    return index[..., None] * 8 + np.arange(8, dtype=np.int64)


def hopf_to_quat(theta, phi, psi):
    theta = np.asarray(theta, dtype=np.float64)
    phi = np.asarray(phi, dtype=np.float64)
    psi = np.asarray(psi, dtype=np.float64)
    ct = np.cos(theta / 2.0)
    st = np.sin(theta / 2.0)
    return np.stack(
        [
            ct * np.cos(psi / 2.0),
            ct * np.sin(psi / 2.0),
            st * np.cos(phi + psi / 2.0),
            st * np.sin(phi + psi / 2.0),
        ],
        axis=-1,
    )


def quat_to_hopf(q):
    """Inverse of hopf_to_quat; psi and phi wrapped into [0, 2 pi).

    Antipodal quaternions map to the same coordinates: the input is
    canonicalized, and phi is formed from the unwrapped half-angle
    atan2(x, w) so that the sign flip cancels between the two terms.
    """
    q = quat.canonical(q)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    half_psi = np.arctan2(x, w)
    psi = np.mod(2.0 * half_psi, 2.0 * np.pi)
    theta = 2.0 * np.arctan2(np.hypot(y, z), np.hypot(w, x))
    phi = np.mod(np.arctan2(z, y) - half_psi, 2.0 * np.pi)
    return theta, phi, psi


def lookup(q, recursion, frame=IDENTITY_SO3_FRAME):
    """Cell index containing rotation q at a recursion."""
    r = _check_recursion(recursion)
    theta, phi, psi = quat_to_hopf(frame.invert(q))
    pix = healpix.ang2pix(n_side(r), theta, phi)
    width = 2.0 * np.pi / n_psi(r)
    psi_i = np.minimum((psi / width).astype(np.int64), n_psi(r) - 1)
    return pack(pix, psi_i, r)


def cell_center(index, recursion, frame=IDENTITY_SO3_FRAME):
    """Center rotation of a cell, canonicalized, shape (..., 4)."""
    r = _check_recursion(recursion)
    pix, psi_i = unpack(index, r)
    theta, phi = healpix.pix2ang(n_side(r), pix)
    psi = (psi_i + 0.5) * (2.0 * np.pi / n_psi(r))
    return quat.canonical(frame.apply(hopf_to_quat(theta, phi, psi)))


def sample_in_cell(index, recursion, rng, frame=IDENTITY_SO3_FRAME):
    """Uniform (Haar) rotation samples, one per entry of index.

    Uses the equal-area in-pixel map for the sphere factor and uniform
    jitter within the psi bin, which together are Haar-uniform in the cell.
    """
    r = _check_recursion(recursion)
    index = np.asarray(index, dtype=np.int64)
    pix, psi_i = unpack(index, r)
    dx = rng.random(index.shape)
    dy = rng.random(index.shape)
    theta, phi = healpix.pix2ang(n_side(r), pix, dx, dy)
    width = 2.0 * np.pi / n_psi(r)
    psi = (psi_i + rng.random(index.shape)) * width
    return quat.canonical(frame.apply(hopf_to_quat(theta, phi, psi)))
