"""Position grid: an octree over a unit cube mapped through an affine frame.

The canonical grid g^(r) divides the cube [-1/2, 1/2]^3 into 8^r cells
(recursion r >= 1). World positions are p = t_est + A g, where the bounds
matrix A has columns (d, 0, 0), (0, d, 0), (t_x, t_y, t_z): a box of side
`d` (the object diameter) sheared along the detection ray, so that a
detection error e = A e_tilde with ||e_tilde||_2 <= 1/2 always stays
inside. Cells are Morton-indexed: index digit j is
(x bit) * 4 + (y bit) * 2 + (z bit), so parent(i) = i // 8.
"""

from dataclasses import dataclass, field

import numpy as np

from . import quat

BRANCHING = 8
MAX_RECURSION = 7
DEFAULT_SIGMA = 1.0 / 6.0


def _check_recursion(recursion):
    r = int(recursion)
    if not 1 <= r <= MAX_RECURSION:
        raise ValueError(f"recursion must be in [1, {MAX_RECURSION}], got {recursion}")
    return r


def n_cells(recursion):
    return 8 ** _check_recursion(recursion)


@dataclass(frozen=True)
class Bounds:
    """Affine map of the unit cube: p = t_est + matrix @ g."""

    matrix: np.ndarray
    t_est: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "matrix", np.asarray(self.matrix, dtype=np.float64))
        object.__setattr__(self, "t_est", np.asarray(self.t_est, dtype=np.float64))
        det = float(np.linalg.det(self.matrix))
        if not det > 0.0:
            raise ValueError(f"bounds matrix must have positive determinant, got {det}")
        object.__setattr__(self, "det", det)
        object.__setattr__(self, "inverse", np.linalg.inv(self.matrix))

    def cell_volume(self, recursion):
        return self.det / n_cells(recursion)


def detection_bounds(t_est, diameter):
    """Bounds elongated along the detection ray: columns d ex, d ey, t_est."""
    t_est = np.asarray(t_est, dtype=np.float64)
    a = np.array(
        [
            [diameter, 0.0, t_est[0]],
            [0.0, diameter, t_est[1]],
            [0.0, 0.0, t_est[2]],
        ]
    )
    return Bounds(a, t_est)


def cubic_bounds(t_est, diameter):
    """Axis-aligned cubic bounds A = d I (shared world grid for fusion)."""
    return Bounds(np.eye(3) * diameter, np.asarray(t_est, dtype=np.float64))


def identity_quat():
    return np.array([1.0, 0.0, 0.0, 0.0])


def zero_offset():
    return np.zeros(3)


@dataclass(frozen=True)
class R3Frame:
    """Grid jitter: g is rotated, then the mapped grid is shifted.

    offset is in world length units (applied after the affine map);
    rotation acts on the unit-cube coordinates g before the map.
    """

    offset: np.ndarray = field(default_factory=zero_offset)
    rotation: np.ndarray = field(default_factory=identity_quat)

    def apply(self, g, bounds):
        return bounds.t_est + self.offset + quat.rotate(self.rotation, g) @ bounds.matrix.T

    def invert(self, t, bounds):
        g = (t - bounds.t_est - self.offset) @ bounds.inverse.T
        return quat.rotate(quat.conjugate(self.rotation), g)


IDENTITY_R3_FRAME = R3Frame()


def _morton_pack(ix, iy, iz, recursion):
    idx = np.zeros_like(np.asarray(ix, dtype=np.int64))
    for j in range(1, recursion + 1):
        s = recursion - j
        idx = idx * 8 + ((ix >> s) & 1) * 4 + ((iy >> s) & 1) * 2 + ((iz >> s) & 1)
    return idx


def _morton_unpack(index, recursion):
    index = np.asarray(index, dtype=np.int64)
    ix = np.zeros_like(index)
    iy = np.zeros_like(index)
    iz = np.zeros_like(index)
    for j in range(1, recursion + 1):
        d = (index >> (3 * (recursion - j))) & 7
        ix = ix * 2 + (d >> 2)
        iy = iy * 2 + ((d >> 1) & 1)
        iz = iz * 2 + (d & 1)
    return ix, iy, iz


def unit_center(index, recursion):
    """Cell center in unit-cube coordinates, shape (..., 3)."""
    r = _check_recursion(recursion)
    ix, iy, iz = _morton_unpack(index, r)
    scale = 1.0 / (1 << r)
    return np.stack(
        [(ix + 0.5) * scale - 0.5, (iy + 0.5) * scale - 0.5, (iz + 0.5) * scale - 0.5],
        axis=-1,
    )


def position_center(index, recursion, bounds, frame=IDENTITY_R3_FRAME):
    return frame.apply(unit_center(index, recursion), bounds)


def position_lookup(t, recursion, bounds, frame=IDENTITY_R3_FRAME):
    """(cell index, inside mask) for world positions t at a recursion.

    The cube is treated as closed, [-1/2, 1/2]^3, with boundary points
    assigned to the last cell along each axis, so the truncated detection
    error is never outside.
    """
    r = _check_recursion(recursion)
    g = frame.invert(np.asarray(t, dtype=np.float64), bounds)
    # tolerate affine round-trip rounding on the closed boundary
    eps = 1e-12
    inside = np.all((g >= -0.5 - eps) & (g <= 0.5 + eps), axis=-1)
    n = 1 << r
    lattice = np.clip(((g + 0.5) * n).astype(np.int64), 0, n - 1)
    idx = _morton_pack(lattice[..., 0], lattice[..., 1], lattice[..., 2], r)
    return idx, inside


def parent(index, recursion):
    if _check_recursion(recursion) == 1:
        raise ValueError("recursion-1 cells have no parent here")
    return np.asarray(index, dtype=np.int64) // 8


def children(index, recursion):
    _check_recursion(recursion + 1)
    index = np.asarray(index, dtype=np.int64)
    return index[..., None] * 8 + np.arange(8, dtype=np.int64)


def sample_unit_error(sigma, rng, n=None):
    """Rejection-sample e_tilde ~ N(0, sigma^2 I) until ||e_tilde|| <= 1/2."""
    shape = (1, 3) if n is None else (int(n), 3)
    out = np.empty(shape)
    need = np.ones(shape[0], dtype=bool)
    while need.any():
        cand = rng.standard_normal((int(need.sum()), 3)) * sigma
        ok = np.linalg.norm(cand, axis=1) <= 0.5
        rows = np.flatnonzero(need)[: len(cand)]
        take = rows[ok]
        out[take] = cand[ok]
        need[take] = False
    return out[0] if n is None else out


def sample_detection_error(bounds, sigma, rng, n=None):
    """World-frame detection error e = A e_tilde, truncated to the bounds."""
    e = sample_unit_error(sigma, rng, n)
    return e @ bounds.matrix.T


def sample_in_cell(index, recursion, bounds, rng, frame=IDENTITY_R3_FRAME):
    """Uniform world positions inside each cell."""
    r = _check_recursion(recursion)
    index = np.asarray(index, dtype=np.int64)
    lo = unit_center(index, r) - 0.5 / (1 << r)
    g = lo + rng.random(index.shape + (3,)) / (1 << r)
    return frame.apply(g, bounds)
