"""SE(3) pyramid: cartesian product of the rotation and position grids.

Pyramid level r pairs rotation cells at recursion r with position cells at
recursion r + 1, giving 72 * 8 = 576 level-0 cells and branching 64. The
level-r index is the 576-way base id followed by r base-64 digits,
digit = (rotation child rank) * 8 + (position child rank), so
parent(i) = i // 64 and children are {64 i, ..., 64 i + 63}.

`SO3Pyramid` and `SE3Pyramid` expose one scoring-friendly interface
(widths, branching, volumes, centers, lookups, sibling arithmetic) so
estimation, inference, and training are space-agnostic.
"""

from dataclasses import dataclass, replace

import numpy as np

from . import r3_grid, so3_grid

MAX_RECURSION = 7

SE3_N_BASE = so3_grid.N_BASE * r3_grid.BRANCHING  # 576
SE3_BRANCHING = so3_grid.BRANCHING * r3_grid.BRANCHING  # 64


def _check_recursion(recursion):
    r = int(recursion)
    if not 0 <= r <= MAX_RECURSION:
        raise ValueError(f"recursion must be in [0, {MAX_RECURSION}], got {recursion}")
    return r


def n_cells(recursion):
    return SE3_N_BASE * SE3_BRANCHING ** _check_recursion(recursion)


def pair(rot_index, pos_index, recursion):
    """SE(3) index at level r from rotation index at r, position at r + 1."""
    r = _check_recursion(recursion)
    rot_index = np.asarray(rot_index, dtype=np.int64)
    pos_index = np.asarray(pos_index, dtype=np.int64)
    rot_base = rot_index >> (3 * r)
    idx = rot_base * 8 + (pos_index >> (3 * r))
    for j in range(1, r + 1):
        rot_d = (rot_index >> (3 * (r - j))) & 7
        pos_d = (pos_index >> (3 * (r - j))) & 7
        idx = idx * 64 + rot_d * 8 + pos_d
    return idx


def unpair(index, recursion):
    """(rotation index at r, position index at r + 1) for an SE(3) index."""
    r = _check_recursion(recursion)
    index = np.asarray(index, dtype=np.int64)
    base = index >> (6 * r)
    rot = base >> 3
    pos = base & 7
    for j in range(1, r + 1):
        d = (index >> (6 * (r - j))) & 63
        rot = rot * 8 + (d >> 3)
        pos = pos * 8 + (d & 7)
    return rot, pos


def se3_parent(index, recursion):
    if _check_recursion(recursion) == 0:
        raise ValueError("recursion-0 cells have no parent")
    return np.asarray(index, dtype=np.int64) // 64


def se3_cell_volume(recursion, bounds):
    return bounds.det * np.pi**2 / n_cells(recursion)


@dataclass(frozen=True)
class SO3Pyramid:
    """Rotation-only pyramid (branching 8). Positions are pinned at t_est."""

    t_est: np.ndarray = None
    frame: so3_grid.So3Frame = so3_grid.IDENTITY_SO3_FRAME

    @property
    def width0(self):
        return so3_grid.N_BASE

    @property
    def branching(self):
        return so3_grid.BRANCHING

    @property
    def total_volume(self):
        return so3_grid.SO3_VOLUME

    def n_cells(self, recursion):
        return so3_grid.n_cells(recursion)

    def cell_volume(self, recursion):
        return so3_grid.cell_volume(recursion)

    def centers(self, recursion, index):
        q = so3_grid.cell_center(index, recursion, self.frame)
        t = self.t_est
        if t is None:
            t = np.zeros(3)
        return q, np.broadcast_to(t, q.shape[:-1] + (3,))

    def lookup(self, q, t, recursion):
        idx = so3_grid.lookup(q, recursion, self.frame)
        return idx, np.ones(np.shape(idx), dtype=bool)

    def sample_in_cell(self, index, recursion, rng):
        q = so3_grid.sample_in_cell(index, recursion, rng, self.frame)
        t = self.t_est if self.t_est is not None else np.zeros(3)
        return q, np.broadcast_to(t, q.shape[:-1] + (3,))

    def jittered(self, so3_frame=None, r3_frame=None):
        return replace(self, frame=so3_frame or self.frame)

    def parent(self, index, recursion):
        return so3_grid.parent(index, recursion)


@dataclass(frozen=True)
class SE3Pyramid:
    """Full pose pyramid (branching 64) over rotation x position."""

    bounds: r3_grid.Bounds
    so3_frame: so3_grid.So3Frame = so3_grid.IDENTITY_SO3_FRAME
    r3_frame: r3_grid.R3Frame = r3_grid.IDENTITY_R3_FRAME

    @property
    def width0(self):
        return SE3_N_BASE

    @property
    def branching(self):
        return SE3_BRANCHING

    @property
    def total_volume(self):
        return self.bounds.det * so3_grid.SO3_VOLUME

    def n_cells(self, recursion):
        return n_cells(recursion)

    def cell_volume(self, recursion):
        return se3_cell_volume(recursion, self.bounds)

    def centers(self, recursion, index):
        rot, pos = unpair(index, recursion)
        q = so3_grid.cell_center(rot, recursion, self.so3_frame)
        t = r3_grid.position_center(pos, recursion + 1, self.bounds, self.r3_frame)
        return q, t

    def lookup(self, q, t, recursion):
        rot = so3_grid.lookup(q, recursion, self.so3_frame)
        pos, inside = r3_grid.position_lookup(t, recursion + 1, self.bounds, self.r3_frame)
        return pair(rot, pos, recursion), inside

    def sample_in_cell(self, index, recursion, rng):
        rot, pos = unpair(index, recursion)
        q = so3_grid.sample_in_cell(rot, recursion, rng, self.so3_frame)
        t = r3_grid.sample_in_cell(pos, recursion + 1, self.bounds, rng, self.r3_frame)
        return q, t

    def jittered(self, so3_frame=None, r3_frame=None):
        return replace(
            self,
            so3_frame=so3_frame or self.so3_frame,
            r3_frame=r3_frame or self.r3_frame,
        )

    def parent(self, index, recursion):
        return se3_parent(index, recursion)


def children_block(index, branching):
    """All children of each index at the next level, shape (..., branching)."""
    index = np.asarray(index, dtype=np.int64)
    return index[..., None] * branching + np.arange(branching, dtype=np.int64)


def sibling_block(index, recursion, width0, branching):
    """Indices sharing the parent of `index` (the whole level at recursion 0)."""
    index = np.asarray(index, dtype=np.int64)
    if recursion == 0:
        start = np.zeros_like(index)
        return start[..., None] + np.arange(width0, dtype=np.int64)
    return (index // branching)[..., None] * branching + np.arange(
        branching, dtype=np.int64
    )
