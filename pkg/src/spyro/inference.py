"""Sparse top-k pyramid inference and belief queries.

Level 0 is scored densely and normalized. At each deeper level the top
k cells (by probability, ties broken by ascending index) are expanded;
their children are scored and the expanded mass is redistributed over
all newly scored children in proportion to exp(score). Cells never
expanded, plus everything at the final level, are the belief's leaves;
their probabilities sum to one by construction.
"""

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericError
from .estimation import cell_scorer, logsumexp
from .pyramid import children_block, unpair

BELIEF_MAGIC = b"SPYROBLF"
BELIEF_VERSION_SO3 = 1
BELIEF_VERSION_SE3 = 2

_RECORD = np.dtype([("recursion", "u1"), ("index", "<u8"), ("prob", "<f8")])


@dataclass(frozen=True)
class LevelTable:
    """Cells scored at one level with their redistributed log mass."""

    recursion: int
    indices: np.ndarray
    log_probs: np.ndarray
    log_mass: float  # p_k of the parent level routed into this table


@dataclass(frozen=True)
class SparseBelief:
    grid: object
    depth: int
    k: int
    tables: tuple
    leaf_indices: tuple  # per recursion 0..depth, sorted ascending
    leaf_log_probs: tuple
    n_scored: int

    def leaf_records(self):
        """Flat (recursion, index, probability) arrays over all leaves."""
        rec = np.concatenate(
            [np.full(ix.size, r, dtype=np.uint8) for r, ix in enumerate(self.leaf_indices)]
        )
        idx = np.concatenate(self.leaf_indices).astype(np.uint64)
        prob = np.exp(np.concatenate(self.leaf_log_probs))
        return rec, idx, prob

    def total_mass(self):
        return float(np.exp(logsumexp(np.concatenate(self.leaf_log_probs))))

    def entropy(self):
        """Differential entropy of the piecewise-constant density, nats."""
        h = 0.0
        for r in range(self.depth + 1):
            lp = self.leaf_log_probs[r]
            if lp.size == 0:
                continue
            p = np.exp(lp)
            h -= np.sum(p * (lp - np.log(self.grid.cell_volume(r))))
        return float(h)

    def leaf_lookup(self, rotations, positions):
        """Leaf containing each pose: (recursion, log_prob, inside)."""
        idx, inside = self.grid.lookup(rotations, positions, self.depth)
        idx = np.atleast_1d(np.asarray(idx, dtype=np.int64))
        inside = np.atleast_1d(inside).copy()
        rec = np.full(idx.shape, -1, dtype=np.int64)
        lp = np.full(idx.shape, -np.inf)
        cur = idx
        for r in range(self.depth, -1, -1):
            if self.leaf_indices[r].size > 0:
                pos = np.searchsorted(self.leaf_indices[r], cur)
                pos_c = np.minimum(pos, self.leaf_indices[r].size - 1)
                hit = (pos_c == pos) & (self.leaf_indices[r][pos_c] == cur) & (rec < 0)
                rec[hit] = r
                lp[hit] = self.leaf_log_probs[r][pos_c[hit]]
            cur = cur // self.grid.branching
        ok = inside & (rec >= 0)
        lp[~ok] = -np.inf
        return rec, lp, ok

    def cell_log_prob(self, indices, recursion):
        """Belief mass of cells at a fixed recursion.

        Cells below a coarser leaf split the leaf mass evenly over its
        descendants (the belief is uniform within a leaf); cells above
        deeper leaves sum the mass of the leaves they contain.
        """
        query = np.atleast_1d(np.asarray(indices, dtype=np.int64))
        out = np.full(query.shape, -np.inf)
        done = np.zeros(query.shape, dtype=bool)
        log_b = np.log(self.grid.branching)
        cur = query
        for r in range(recursion, -1, -1):
            if self.leaf_indices[r].size > 0:
                pos = np.searchsorted(self.leaf_indices[r], cur)
                pos_c = np.minimum(pos, self.leaf_indices[r].size - 1)
                hit = (pos_c == pos) & (self.leaf_indices[r][pos_c] == cur) & ~done
                out[hit] = self.leaf_log_probs[r][pos_c[hit]] - (recursion - r) * log_b
                done |= hit
            cur = cur // self.grid.branching
        deeper_anc = []
        deeper_p = []
        for r in range(recursion + 1, self.depth + 1):
            if self.leaf_indices[r].size > 0:
                deeper_anc.append(
                    self.leaf_indices[r] // self.grid.branching ** (r - recursion)
                )
                deeper_p.append(np.exp(self.leaf_log_probs[r]))
        if deeper_anc:
            anc = np.concatenate(deeper_anc)
            p = np.concatenate(deeper_p)
            uniq, inv = np.unique(anc, return_inverse=True)
            mass = np.zeros(uniq.size)
            np.add.at(mass, inv, p)
            pos = np.searchsorted(uniq, query)
            pos_c = np.minimum(pos, uniq.size - 1)
            hit = (pos_c == pos) & (uniq[pos_c] == query) & ~done
            with np.errstate(divide="ignore"):
                out[hit] = np.log(mass[pos_c[hit]])
        return out


def sparse_infer(model, grid, depth, k):
    """Build a sparse belief by top-k expansion (see module docstring)."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if depth < 0:
        raise ValueError(f"depth must be >= 0, got {depth}")
    score_fn = cell_scorer(model, grid)
    idx = np.arange(grid.width0, dtype=np.int64)
    scores = np.asarray(score_fn(idx, 0), dtype=np.float64)
    _check_scores(scores)
    lp = scores - logsumexp(scores)
    tables = [LevelTable(0, idx, lp, 0.0)]
    leaf_idx = []
    leaf_lp = []
    n_scored = idx.size
    for r in range(1, depth + 1):
        order = np.lexsort((idx, -lp))
        kk = min(k, idx.size)
        expanded = order[:kk]
        keep = np.ones(idx.size, dtype=bool)
        keep[expanded] = False
        leaf_idx.append(idx[keep])
        leaf_lp.append(lp[keep])
        log_pk = float(logsumexp(lp[expanded]))
        children = children_block(idx[expanded], grid.branching).ravel()
        cs = np.asarray(score_fn(children, r), dtype=np.float64)
        _check_scores(cs)
        n_scored += children.size
        lp = log_pk + cs - logsumexp(cs)
        idx = children
        tables.append(LevelTable(r, idx, lp, log_pk))
    leaf_idx.append(idx)
    leaf_lp.append(lp)
    sorted_leaves = []
    for ix, l in zip(leaf_idx, leaf_lp):
        order = np.argsort(ix)
        sorted_leaves.append((ix[order], l[order]))
    return SparseBelief(
        grid=grid,
        depth=depth,
        k=k,
        tables=tuple(tables),
        leaf_indices=tuple(ix for ix, _ in sorted_leaves),
        leaf_log_probs=tuple(l for _, l in sorted_leaves),
        n_scored=n_scored,
    )


def _check_scores(scores):
    if np.isnan(scores).any():
        raise NumericError("model produced NaN scores")
    if np.all(np.isinf(scores)):
        raise NumericError("model produced no finite scores")


def eval_count(k, depth, width0, branching):
    """Cells scored by sparse_infer in closed form."""
    scored = width0
    total = width0
    for _ in range(1, depth + 1):
        scored = branching * min(k, scored)
        total += scored
    return total


def continuous_log_likelihood(belief, rotations, positions=None):
    """Log density at poses: leaf log mass minus leaf log volume.

    Returns (log_density, inside); outside poses get -inf and False.
    """
    rec, lp, ok = belief.leaf_lookup(rotations, positions)
    out = np.full(lp.shape, -np.inf)
    for r in range(belief.depth + 1):
        sel = ok & (rec == r)
        out[sel] = lp[sel] - np.log(belief.grid.cell_volume(r))
    return out, ok


def marginal_so3(belief, recursion):
    """Sum belief mass over positions into rotation cells at a recursion.

    Leaves coarser than the requested recursion spread their mass evenly
    over rotation descendants. Returns (cell indices, probabilities).
    """
    from .pyramid import SE3Pyramid

    rec, idx, prob = belief.leaf_records()
    return marginal_so3_records(
        rec, idx.astype(np.int64), prob, recursion, isinstance(belief.grid, SE3Pyramid)
    )


def marginal_so3_records(recursions, indices, probs, recursion, se3):
    """marginal_so3 over flat leaf records (as stored in belief files)."""
    from . import so3_grid

    all_rot = []
    all_p = []
    for r in np.unique(recursions):
        sel = recursions == r
        p = probs[sel]
        rot = unpair(indices[sel], int(r))[0] if se3 else indices[sel]
        if r >= recursion:
            rot = rot // so3_grid.BRANCHING ** int(r - recursion)
        else:
            d = int(recursion - r)
            n_desc = so3_grid.BRANCHING**d
            rot = (rot[:, None] * n_desc + np.arange(n_desc, dtype=np.int64)).ravel()
            p = np.repeat(p / n_desc, n_desc)
        all_rot.append(rot)
        all_p.append(p)
    rot = np.concatenate(all_rot)
    p = np.concatenate(all_p)
    cells, inv = np.unique(rot, return_inverse=True)
    out = np.zeros(cells.size)
    np.add.at(out, inv, p)
    return cells, out


def fuse_multiview(view_models, extrinsics, grid, depth, k):
    """Sparse inference on the mean of per-view scores (shared grid)."""
    from .models import FusedViews

    fused = FusedViews(list(zip(view_models, extrinsics)))
    return sparse_infer(fused, grid, depth, k)


def save_belief(path, belief):
    """Write leaves as packed records behind a 16-byte header."""
    from .pyramid import SE3Pyramid

    version = (
        BELIEF_VERSION_SE3 if isinstance(belief.grid, SE3Pyramid) else BELIEF_VERSION_SO3
    )
    rec, idx, prob = belief.leaf_records()
    records = np.empty(rec.size, dtype=_RECORD)
    records["recursion"] = rec
    records["index"] = idx
    records["prob"] = prob
    with open(path, "wb") as f:
        f.write(BELIEF_MAGIC)
        f.write(struct.pack("<II", version, rec.size))
        f.write(records.tobytes())


def load_belief(path):
    """Read a belief file; returns (version, recursions, indices, probs)."""
    with open(path, "rb") as f:
        head = f.read(16)
        if len(head) != 16 or head[:8] != BELIEF_MAGIC:
            raise ValueError(f"{path} is not a belief file")
        version, count = struct.unpack("<II", head[8:])
        if version not in (BELIEF_VERSION_SO3, BELIEF_VERSION_SE3):
            raise ValueError(f"unsupported belief version {version}")
        body = f.read(count * _RECORD.itemsize)
    if len(body) != count * _RECORD.itemsize:
        raise ValueError(f"{path} is truncated")
    records = np.frombuffer(body, dtype=_RECORD)
    return (
        version,
        records["recursion"].astype(np.int64),
        records["index"].astype(np.int64),
        records["prob"].copy(),
    )
