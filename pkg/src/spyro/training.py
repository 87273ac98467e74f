"""Contrastive training of per-level heads against analytic targets.

Each step draws a batch of poses from the target, looks up their cells
once at the deepest level (ancestors follow by integer division), draws
one shared negative set, and applies one InfoNCE gradient step per
level. Negatives come from ancestral importance sampling through the
current heads or from uniform cell draws. Grids can be re-jittered
every step so heads cannot memorize cell boundaries.
"""

import csv
from dataclasses import dataclass, field

import numpy as np

from . import estimation, quat, r3_grid, so3_grid
from .errors import NumericError
from .inference import sparse_infer
from .pyramid import SE3Pyramid


@dataclass(frozen=True)
class TrainConfig:
    depth: int = 4
    steps: int = 2000
    batch_size: int = 16
    learning_rate: float = 0.1
    use_importance_sampling: bool = True
    n_trajectories: int = 128
    n_uniform_negatives: int = 1024
    jitter: bool = True
    jitter_translation: float = 0.5  # in level-1 position cell widths
    dropout: float = 0.0
    eval_every: int = 500
    eval_samples: int = 256
    eval_top_k: int = 128
    seed: int = 0

    def __post_init__(self):
        if self.steps < 0 or self.batch_size < 1:
            raise ValueError("steps must be >= 0 and batch_size >= 1")
        if self.use_importance_sampling and self.n_trajectories < 1:
            raise ValueError("importance sampling needs n_trajectories >= 1")


@dataclass
class TrainReport:
    rows: list = field(default_factory=list)  # (step, level, ll)
    continuous_rows: list = field(default_factory=list)  # (step, ll)
    skipped_outside: int = 0
    n_positives: int = 0

    def write_csv(self, path):
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["step", "level", "ll"])
            for step, level, ll in self.rows:
                w.writerow([step, level, f"{ll:.9g}"])

    def level_series(self, level):
        return [(s, ll) for s, lvl, ll in self.rows if lvl == level]


def _jittered(grid, cfg, rng):
    so3f = so3_grid.So3Frame(offset=quat.random_rotations(rng, 1)[0])
    r3f = None
    if isinstance(grid, SE3Pyramid):
        width = grid.bounds.matrix @ np.full(3, 0.5**1)
        amp = cfg.jitter_translation * np.abs(width)
        r3f = r3_grid.R3Frame(offset=rng.uniform(-amp, amp))
    return grid.jittered(so3_frame=so3f, r3_frame=r3f)


class _CachingScorer:
    """Scores cells through the head while retaining features for grads."""

    def __init__(self, extractor, head, grid, mask_rng, dropout):
        self.extractor = extractor
        self.head = head
        self.grid = grid
        self.mask_rng = mask_rng
        self.dropout = dropout
        self.cache = {}

    def features(self, indices, recursion):
        q, t = self.grid.centers(recursion, indices)
        f = self.extractor.extract(q, t)
        if self.dropout > 0.0:
            keep = self.mask_rng.random(f.shape) >= self.dropout
            f = f * keep / (1.0 - self.dropout)
        return f

    def __call__(self, indices, recursion):
        f = self.features(indices, recursion)
        self.cache[recursion] = (np.asarray(indices, dtype=np.int64), f)
        return self.head.score(f, recursion)


def train(extractor, head, grid, target, config):
    """Fit the head's levels to the target; returns a TrainReport."""
    rng = np.random.default_rng(config.seed)
    eval_rng = np.random.default_rng((config.seed, 0xE7A1))
    report = TrainReport()
    depth = config.depth
    _record_eval(report, 0, extractor, head, grid, target, config, eval_rng)
    for step in range(1, config.steps + 1):
        grid_s = _jittered(grid, config, rng) if config.jitter else grid
        scorer = _CachingScorer(extractor, head, grid_s, rng, config.dropout)
        qs, ts = target.sample(rng, config.batch_size)
        if ts is None:
            ts = np.zeros((config.batch_size, 3))
        deep, inside = grid_s.lookup(qs, ts, depth)
        report.skipped_outside += int((~inside).sum())
        if not inside.any():
            continue
        deep = deep[inside]
        qs, ts = qs[inside], ts[inside]
        report.n_positives += deep.size
        if config.use_importance_sampling:
            negatives = estimation.sample_trajectories(
                scorer, grid_s, depth, config.n_trajectories, rng
            )
        else:
            negatives = estimation.uniform_negatives(
                grid_s, depth, config.n_uniform_negatives, rng
            )
        updates = []
        for ln in negatives:
            r = ln.recursion
            cached = scorer.cache.get(r)
            if cached is not None and np.array_equal(cached[0], ln.indices):
                neg_feat = cached[1]
                neg_scores = head.score(neg_feat, r)
            else:
                neg_feat = scorer.features(ln.indices, r)
                neg_scores = head.score(neg_feat, r)
            pos_cells = deep // grid_s.branching ** (depth - r)
            pos_feat = scorer.features(pos_cells, r)
            pos_scores = head.score(pos_feat, r)
            loss, dpos, dneg = estimation.infonce_loss(
                pos_scores, neg_scores, ln.log_weights
            )
            if not np.isfinite(loss):
                raise NumericError(f"non-finite loss at step {step}, level {r}")
            updates.append((r, pos_feat, dpos, neg_feat, dneg.sum(axis=0)))
        for r, pos_feat, dpos, neg_feat, dneg in updates:
            head.apply_grads(pos_feat, dpos, r, config.learning_rate)
            head.apply_grads(neg_feat, dneg, r, config.learning_rate)
        if config.eval_every > 0 and (
            step % config.eval_every == 0 or step == config.steps
        ):
            _record_eval(report, step, extractor, head, grid, target, config, eval_rng)
    return report


def evaluate(model, grid, target, depth, k, n_samples, rng):
    """Held-out true-cell LL per level plus continuous-pose LL.

    Builds one sparse belief and reads the mass of the cells holding
    fresh target samples at every level. Returns (per-level list, mean
    continuous log density, number of samples outside the grid).
    """
    from .inference import continuous_log_likelihood

    belief = sparse_infer(model, grid, depth, k)
    qs, ts = target.sample(rng, n_samples)
    if ts is None:
        ts = np.zeros((n_samples, 3))
    deep, inside = grid.lookup(qs, ts, depth)
    deep = deep[inside]
    levels = []
    for r in range(depth + 1):
        cells = deep // grid.branching ** (depth - r)
        levels.append(float(np.mean(belief.cell_log_prob(cells, r))))
    ll, _ = continuous_log_likelihood(belief, qs[inside], ts[inside])
    return levels, float(np.mean(ll)), int((~inside).sum())


def _record_eval(report, step, extractor, head, grid, target, config, rng):
    from .models import KeypointModel

    model = KeypointModel(extractor, head)
    levels, cont, _ = evaluate(
        model, grid, target, config.depth, config.eval_top_k, config.eval_samples, rng
    )
    for r, ll in enumerate(levels):
        report.rows.append((step, r, ll))
    report.continuous_rows.append((step, cont))
