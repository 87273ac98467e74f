"""Nested-scheme HEALPix sphere pixelization.

Equal-area hierarchical tessellation of the unit sphere: 12 base pixels,
each split into nside x nside quads (nside a power of two). Pixels are
indexed in the nested scheme, so the four children of pixel p at the next
resolution are {4p, ..., 4p+3} and integer division by 4 recovers the
parent. Alongside the usual center transforms, `pix2ang` accepts
fractional in-pixel offsets; the face-plane map is area preserving, so
uniform (dx, dy) gives uniform-area samples inside a pixel.
"""

import numpy as np

# north-south and east-west offsets of the 12 base faces in ring units
_JRLL = np.array([2, 2, 2, 2, 3, 3, 3, 3, 4, 4, 4, 4], dtype=np.int64)
_JPLL = np.array([1, 3, 5, 7, 0, 2, 4, 6, 1, 3, 5, 7], dtype=np.int64)

_M1 = np.int64(0x5555555555555555)
_M2 = np.int64(0x3333333333333333)
_M4 = np.int64(0x0F0F0F0F0F0F0F0F)
_M8 = np.int64(0x00FF00FF00FF00FF)
_M16 = np.int64(0x0000FFFF0000FFFF)
_M32 = np.int64(0x00000000FFFFFFFF)

TWOTHIRD = 2.0 / 3.0


def check_nside(nside):
    nside = int(nside)
    if nside < 1 or (nside & (nside - 1)) != 0:
        raise ValueError(f"nside must be a positive power of two, got {nside}")
    return nside


def npix(nside):
    return 12 * nside * nside


def _spread_bits(v):
    """Insert a zero bit between the low 32 bits of v."""
    v = v & _M32
    v = (v | (v << 16)) & _M16
    v = (v | (v << 8)) & _M8
    v = (v | (v << 4)) & _M4
    v = (v | (v << 2)) & _M2
    v = (v | (v << 1)) & _M1
    return v


def _compact_bits(v):
    """Inverse of _spread_bits: gather the even-position bits."""
    v = v & _M1
    v = (v | (v >> 1)) & _M2
    v = (v | (v >> 2)) & _M4
    v = (v | (v >> 4)) & _M8
    v = (v | (v >> 8)) & _M16
    v = (v | (v >> 16)) & _M32
    return v


def xyf2pix(nside, ix, iy, face):
    ix = np.asarray(ix, dtype=np.int64)
    iy = np.asarray(iy, dtype=np.int64)
    face = np.asarray(face, dtype=np.int64)
    return face * (nside * nside) + (_spread_bits(ix) | (_spread_bits(iy) << 1))


def pix2xyf(nside, pix):
    pix = np.asarray(pix, dtype=np.int64)
    face = pix // (nside * nside)
    rel = pix - face * (nside * nside)
    return _compact_bits(rel), _compact_bits(rel >> 1), face


def ang2pix(nside, theta, phi):
    """Nested pixel index containing direction (theta, phi)."""
    nside = check_nside(nside)
    factor = int(nside).bit_length() - 1
    theta = np.asarray(theta, dtype=np.float64)
    phi = np.asarray(phi, dtype=np.float64)
    z = np.cos(theta)
    za = np.abs(z)
    tt = np.mod(phi, 2.0 * np.pi) * (2.0 / np.pi)  # in [0, 4)

    # equatorial-belt candidate (valid where |z| <= 2/3)
    temp1 = nside * (0.5 + tt)
    temp2 = nside * (0.75 * z)
    jp = (temp1 - temp2).astype(np.int64)  # ascending edge line index
    jm = (temp1 + temp2).astype(np.int64)  # descending edge line index
    ifp = jp >> factor
    ifm = jm >> factor
    face_e = np.where(ifp == ifm, ifp | 4, np.where(ifp < ifm, ifp, ifm + 8))
    ix_e = jm & (nside - 1)
    iy_e = (nside - 1) - (jp & (nside - 1))

    # polar-cap candidate (valid where |z| > 2/3)
    ntt = np.minimum(tt.astype(np.int64), 3)
    tp = tt - ntt
    tmp = nside * np.sqrt(3.0 * (1.0 - za))
    jp_p = np.minimum((tp * tmp).astype(np.int64), nside - 1)
    jm_p = np.minimum(((1.0 - tp) * tmp).astype(np.int64), nside - 1)
    north = z >= 0
    face_p = np.where(north, ntt, ntt + 8)
    ix_p = np.where(north, nside - 1 - jm_p, jp_p)
    iy_p = np.where(north, nside - 1 - jp_p, jm_p)

    eq = za <= TWOTHIRD
    face = np.where(eq, face_e, face_p)
    ix = np.where(eq, ix_e, ix_p)
    iy = np.where(eq, iy_e, iy_p)
    return xyf2pix(nside, ix, iy, face)


def pix2ang(nside, pix, dx=0.5, dy=0.5):
    """Direction (theta, phi) at fractional position (dx, dy) inside a pixel.

    The default (0.5, 0.5) is the pixel center. The face-plane
    parameterization is equal-area, so uniform (dx, dy) in [0, 1)^2 maps
    to uniform area inside the pixel.
    """
    nside = check_nside(nside)
    ix, iy, face = pix2xyf(nside, pix)
    u = ix + np.asarray(dx, dtype=np.float64)
    v = iy + np.asarray(dy, dtype=np.float64)

    jr = _JRLL[face] * nside - u - v  # real-valued ring coordinate in (0, 4 nside)
    nr = np.where(jr < nside, jr, np.where(jr > 3 * nside, 4 * nside - jr, nside))
    z = np.where(
        jr < nside,
        1.0 - (jr * jr) / (3.0 * nside * nside),
        np.where(
            jr > 3 * nside,
            (4.0 * nside - jr) * (4.0 * nside - jr) / (3.0 * nside * nside) - 1.0,
            (2.0 * nside - jr) * (2.0 / (3.0 * nside)),
        ),
    )
    # guard the pole corner where nr -> 0 and u - v -> 0
    phi = (np.pi / 4.0) * (_JPLL[face] + (u - v) / np.maximum(nr, 1e-300))
    theta = np.arccos(np.clip(z, -1.0, 1.0))
    return theta, np.mod(phi, 2.0 * np.pi)
