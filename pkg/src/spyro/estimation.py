"""Contrastive estimation over pyramid levels.

The loss at one level is InfoNCE between the positive cell and a
weighted negative set whose weighted scores estimate the level's
partition function. Negatives come either from uniform cell draws
(weight one) or from ancestral importance sampling: trajectories walk
the pyramid root to leaf, at each level sampling one child from the
softmax over the sibling block, and every scored block contributes its
children as negatives with weights that undo the proposal probability.
"""

from dataclasses import dataclass

import numpy as np

from .pyramid import children_block


def logsumexp(x, axis=None, keepdims=False):
    x = np.asarray(x, dtype=np.float64)
    m = np.max(x, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        # all--inf slices legitimately produce log(0)
        out = np.log(np.sum(np.exp(x - m), axis=axis, keepdims=True)) + m
    return out if keepdims else np.squeeze(out, axis=axis) if axis is not None else out.reshape(())


def cell_scorer(model, grid):
    """Adapt a pose-scoring model to score cells at their centers.

    Models may instead score cells by index directly (a score_cells
    method), which bypasses the center transform.
    """
    if hasattr(model, "score_cells"):
        return model.score_cells

    def score_fn(indices, recursion):
        q, t = grid.centers(recursion, indices)
        return model.score_poses(q, t, recursion)

    return score_fn


def infonce_loss(pos_scores, neg_scores, neg_log_weights=None):
    """Contrastive loss and analytic score gradients.

    pos_scores is (B,); neg_scores and neg_log_weights are (N,) shared
    across the batch or (B, N) per sample. The positive enters its own
    denominator with weight one. Returns (mean loss, dpos (B,),
    dneg (B, N)), gradients of the mean loss with respect to the raw
    scores.
    """
    pos = np.atleast_1d(np.asarray(pos_scores, dtype=np.float64))
    neg = np.asarray(neg_scores, dtype=np.float64)
    if neg_log_weights is not None:
        neg = neg + np.asarray(neg_log_weights, dtype=np.float64)
    neg = np.broadcast_to(neg, (pos.shape[0],) + neg.shape[-1:])
    logits = np.concatenate([pos[:, None], neg], axis=1)
    lse = logsumexp(logits, axis=1)
    loss = float(np.mean(lse - pos))
    p = np.exp(logits - lse[:, None])
    b = pos.shape[0]
    dpos = (p[:, 0] - 1.0) / b
    dneg = p[:, 1:] / b
    return loss, dpos, dneg


@dataclass(frozen=True)
class LevelNegatives:
    """Negative cells for one level with loss log weights."""

    recursion: int
    indices: np.ndarray
    log_weights: np.ndarray


def _categorical_rows(log_probs, rng):
    """One draw per row from normalized log probabilities (Gumbel trick)."""
    g = -np.log(-np.log(rng.random(log_probs.shape)))
    return np.argmax(log_probs + g, axis=1)


def uniform_negatives(grid, depth, n_per_level, rng):
    """Level 0 dense, deeper levels uniform with-replacement, weight one."""
    out = [
        LevelNegatives(
            0,
            np.arange(grid.width0, dtype=np.int64),
            np.zeros(grid.width0),
        )
    ]
    for r in range(1, depth + 1):
        idx = rng.integers(0, grid.n_cells(r), size=n_per_level, dtype=np.int64)
        out.append(LevelNegatives(r, idx, np.zeros(n_per_level)))
    return out


def sample_trajectories(score_fn, grid, depth, n_traj, rng):
    """Ancestral importance-sampled negatives for levels 0..depth.

    Level 0 is scored densely. At level r, each trajectory's parent
    contributes its whole child block; a block with a parent sampled m
    times under path probability pbar carries per-cell log weight
    log(branching * m / n_cells(r)) - log pbar, which makes the weighted
    exp-score sum estimate n_negatives / n_cells(r) times the level's
    partition function (n_negatives = n_traj * branching).
    """
    width0 = grid.width0
    branching = grid.branching
    all0 = np.arange(width0, dtype=np.int64)
    s0 = np.asarray(score_fn(all0, 0), dtype=np.float64)
    out = [LevelNegatives(0, all0, np.zeros(width0))]
    logq0 = s0 - logsumexp(s0)
    parents = rng.choice(width0, size=n_traj, p=np.exp(logq0))
    logpbar = logq0[parents]
    for r in range(1, depth + 1):
        uniq, inv, mult = np.unique(parents, return_inverse=True, return_counts=True)
        # pbar depends only on the cell (its ancestor path is unique)
        uniq_logpbar = np.empty(uniq.size)
        uniq_logpbar[inv] = logpbar
        blocks = children_block(uniq, branching)
        scores = np.asarray(
            score_fn(blocks.ravel(), r), dtype=np.float64
        ).reshape(uniq.size, branching)
        log_w = (
            np.log(branching * mult.astype(np.float64))
            - np.log(float(grid.n_cells(r)))
            - uniq_logpbar
        )
        out.append(
            LevelNegatives(
                r,
                blocks.ravel(),
                np.repeat(log_w, branching),
            )
        )
        if r == depth:
            break
        logq = scores - logsumexp(scores, axis=1, keepdims=True)
        traj_logq = logq[inv]
        pick = _categorical_rows(traj_logq, rng)
        parents = blocks[inv, pick]
        logpbar = logpbar + traj_logq[np.arange(n_traj), pick]
    return out


def partition_uniform(score_fn, grid, recursion, n, rng, replace=True):
    """Monte Carlo partition estimate from uniform cell draws.

    Unbiased for sum over level cells of exp(score); without
    replacement and n equal to the level size it is the dense sum.
    """
    total = grid.n_cells(recursion)
    if replace:
        idx = rng.integers(0, total, size=n, dtype=np.int64)
    else:
        if n > total:
            raise ValueError("cannot draw more cells than the level holds")
        idx = rng.choice(total, size=n, replace=False).astype(np.int64)
    s = np.asarray(score_fn(idx, recursion), dtype=np.float64)
    return float(total) * float(np.mean(np.exp(s)))


def partition_is(score_fn, grid, recursion, n_traj, rng):
    """Partition estimate from ancestral importance sampling.

    Each trajectory descends to the target level's parent and scores the
    full child block there; exp(logsumexp(block) - log pbar) averaged
    over trajectories is unbiased for the level's partition function.
    Consumes n_traj * branching target-level evaluations.
    """
    width0 = grid.width0
    branching = grid.branching
    all0 = np.arange(width0, dtype=np.int64)
    s0 = np.asarray(score_fn(all0, 0), dtype=np.float64)
    if recursion == 0:
        return float(np.sum(np.exp(s0)))
    logq = s0 - logsumexp(s0)
    parents = rng.choice(width0, size=n_traj, p=np.exp(logq))
    logpbar = logq[parents]
    for r in range(1, recursion + 1):
        blocks = children_block(parents, branching)
        scores = np.asarray(
            score_fn(blocks.ravel(), r), dtype=np.float64
        ).reshape(n_traj, branching)
        if r == recursion:
            terms = logsumexp(scores, axis=1) - logpbar
            return float(np.mean(np.exp(terms)))
        logq_r = scores - logsumexp(scores, axis=1, keepdims=True)
        pick = _categorical_rows(logq_r, rng)
        rows = np.arange(n_traj)
        parents = blocks[rows, pick]
        logpbar = logpbar + logq_r[rows, pick]
    raise AssertionError("unreachable")
