"""Contrastive training loop: baselines, convergence, reporting."""

import csv

import numpy as np
import pytest

from spyro import estimation, keypoints, quat, r3_grid, so3_grid, targets, training
from spyro.heads import KeypointHead
from spyro.models import AnalyticModel, KeypointModel
from spyro.pyramid import SE3Pyramid, SO3Pyramid

from conftest import TableModel, make_rng


def make_scene(seed, kappa, channels=4, radii=(2.5, 6.0), depth=3):
    """Synthetic single-object scene with a unimodal rotation target."""
    rng = make_rng(seed, 77)
    cam = keypoints.Camera(fx=320.0, fy=320.0, cx=64.0, cy=64.0, width=128, height=128)
    kp = keypoints.cube_keypoints(0.3)
    t_obj = np.array([0.0, 0.0, 1.0])
    q0 = quat.random_rotations(rng, 1)[0]
    target = targets.AnalyticPoseTarget([targets.Mode(rotation=q0, kappa=kappa)])
    fmap = keypoints.scene_feature_map(cam, kp, [(q0, t_obj)], [1.0], channels, radii, rng)
    ex = keypoints.FeatureExtractor(cam, kp, fmap, sentinel_seed=1)
    head = KeypointHead(dim=ex.dim, depth=depth, dropout=0.0)
    return ex, head, SO3Pyramid(t_est=t_obj), target


def dense_fit_optimum(target, grid, recursion, seed, steps=5000, batch=64, lr=1.0,
                      n_eval=4096):
    """Free per-cell logits fitted by full-softmax SGD; held-out mean LL.

    Upper bound for what any scoring model can reach at this level: the
    logits are unconstrained, one per cell, trained on the exact
    objective the heads approximate.
    """
    rng = make_rng(seed, 101)
    logits = np.zeros(grid.n_cells(recursion))
    for _ in range(steps):
        q = target.sample(rng, batch)[0]
        cells = so3_grid.lookup(q, recursion)
        p = np.exp(logits - logits.max())
        p /= p.sum()
        g = batch * p
        np.add.at(g, cells, -1.0)
        logits -= lr * g / batch
    q = target.sample(make_rng(seed, 202), n_eval)[0]
    cells = so3_grid.lookup(q, recursion)
    logz = estimation.logsumexp(logits)
    return float(np.mean(logits[cells] - logz))


# ------------------------------------------------------------ baselines


def test_zero_steps_leaves_heads_unchanged():
    ex, head, grid, target = make_scene(3, 20.0)
    cfg = training.TrainConfig(depth=3, steps=0, seed=0)
    report = training.train(ex, head, grid, target, cfg)
    assert np.all(head.weights == 0.0)
    assert np.all(head.biases == 0.0)
    # untrained model is uniform, so the true-cell LL is -log |level|
    for step, level, ll in report.rows:
        assert step == 0
        np.testing.assert_allclose(ll, -np.log(grid.n_cells(level)), atol=1e-9)
    step0, cont = report.continuous_rows[0]
    assert step0 == 0
    np.testing.assert_allclose(cont, -np.log(np.pi**2), atol=1e-9)


def test_config_validation():
    with pytest.raises(ValueError):
        training.TrainConfig(steps=-1)
    with pytest.raises(ValueError):
        training.TrainConfig(batch_size=0)
    with pytest.raises(ValueError):
        training.TrainConfig(use_importance_sampling=True, n_trajectories=0)


# ---------------------------------------------------------- convergence


def test_short_run_raises_true_cell_ll():
    ex, head, grid, target = make_scene(0, 30.0)
    cfg = training.TrainConfig(depth=3, steps=300, eval_every=300, seed=0)
    report = training.train(ex, head, grid, target, cfg)
    for level in (1, 2, 3):
        series = report.level_series(level)
        assert series[0][0] == 0 and series[-1][0] == 300
        assert series[-1][1] > series[0][1] + 1.5


def test_training_is_deterministic():
    runs = []
    for _ in range(2):
        ex, head, grid, target = make_scene(5, 25.0)
        cfg = training.TrainConfig(depth=3, steps=25, eval_every=0, seed=11)
        training.train(ex, head, grid, target, cfg)
        runs.append((head.weights.copy(), head.biases.copy()))
    np.testing.assert_array_equal(runs[0][0], runs[1][0])
    np.testing.assert_array_equal(runs[0][1], runs[1][1])


def test_trained_heads_near_dense_fit_optimum():
    # unimodal concentrated rotation target: after 5k steps the head's
    # held-out true-cell LL on the coarse levels should be within 1 nat
    # of what unconstrained per-cell logits reach on the same objective
    ex, head, grid, target = make_scene(0, 60.0, channels=8, radii=(2.0, 5.0, 12.0),
                                        depth=4)
    cfg = training.TrainConfig(depth=4, steps=5000, eval_every=0, seed=0)
    training.train(ex, head, grid, target, cfg)
    levels, _, _ = training.evaluate(
        KeypointModel(ex, head), grid, target, 4, 512, 2048, make_rng(0, 5)
    )
    for r in range(3):
        optimum = dense_fit_optimum(target, grid, r, seed=0)
        assert abs(optimum - levels[r]) < 1.0, (r, optimum, levels[r])


# ----------------------------------------------------------- evaluation


def test_evaluate_matches_dense_softmax_on_full_expansion():
    rng = make_rng(41)
    grid = SO3Pyramid()
    model = TableModel.random(grid, 2, rng, consistent=True)
    target = targets.AnalyticPoseTarget(
        [targets.Mode(rotation=quat.random_rotations(rng, 1)[0], kappa=4.0)]
    )
    levels, _, n_out = training.evaluate(model, grid, target, 2, 10**5, 512,
                                         make_rng(7))
    assert n_out == 0
    qs, _ = target.sample(make_rng(7), 512)
    deep = so3_grid.lookup(qs, 2)
    for r in range(3):
        dense = model.tables[r] - estimation.logsumexp(model.tables[r])
        expect = float(np.mean(dense[deep // 8 ** (2 - r)]))
        np.testing.assert_allclose(levels[r], expect, rtol=1e-9)


def test_evaluate_deterministic_given_rng():
    rng = make_rng(42)
    grid = SO3Pyramid()
    target = targets.AnalyticPoseTarget(
        [targets.Mode(rotation=quat.random_rotations(rng, 1)[0], kappa=12.0)]
    )
    model = AnalyticModel(target)
    a = training.evaluate(model, grid, target, 3, 64, 128, make_rng(3))
    b = training.evaluate(model, grid, target, 3, 64, 128, make_rng(3))
    assert a == b
    c = training.evaluate(model, grid, target, 3, 64, 128, make_rng(4))
    assert a[1] != c[1]


# -------------------------------------------------------- outside skips


class TruncatedPositionTarget:
    """Rotation target with positions drawn as truncated detection errors."""

    def __init__(self, rotation_target, bounds, sigma):
        self.rotation_target = rotation_target
        self.bounds = bounds
        self.sigma = sigma

    def sample(self, rng, n):
        qs, _ = self.rotation_target.sample(rng, n)
        e = r3_grid.sample_unit_error(self.sigma, rng, n)
        return qs, self.bounds.t_est + e @ self.bounds.matrix.T


def test_no_positives_skipped_with_truncated_errors():
    # position errors are rejection-sampled into the half-unit ball, so
    # with the grid frame fixed every positive stays inside the bounds
    rng = make_rng(8, 77)
    cam = keypoints.Camera(fx=320.0, fy=320.0, cx=64.0, cy=64.0, width=128, height=128)
    kp = keypoints.cube_keypoints(0.3)
    t_obj = np.array([0.0, 0.0, 1.0])
    q0 = quat.random_rotations(rng, 1)[0]
    fmap = keypoints.scene_feature_map(cam, kp, [(q0, t_obj)], [1.0], 4, (2.5, 6.0), rng)
    ex = keypoints.FeatureExtractor(cam, kp, fmap, sentinel_seed=1)
    grid = SE3Pyramid(bounds=r3_grid.detection_bounds(t_obj, 0.3))
    rot_target = targets.AnalyticPoseTarget([targets.Mode(rotation=q0, kappa=10.0)])
    target = TruncatedPositionTarget(rot_target, grid.bounds, sigma=1.0 / 6.0)
    head = KeypointHead(dim=ex.dim, depth=2, dropout=0.0)
    cfg = training.TrainConfig(depth=2, steps=40, jitter=False, eval_every=0, seed=0)
    report = training.train(ex, head, grid, target, cfg)
    assert report.n_positives == 40 * cfg.batch_size
    assert report.skipped_outside == 0


# ------------------------------------------------------------ reporting


def test_report_csv_format(tmp_path):
    ex, head, grid, target = make_scene(1, 20.0)
    cfg = training.TrainConfig(depth=3, steps=60, eval_every=30, seed=2)
    report = training.train(ex, head, grid, target, cfg)
    path = tmp_path / "report.csv"
    report.write_csv(path)
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    assert rows[0] == ["step", "level", "ll"]
    assert len(rows) == 1 + len(report.rows)
    for raw, (step, level, ll) in zip(rows[1:], report.rows):
        assert int(raw[0]) == step and int(raw[1]) == level
        np.testing.assert_allclose(float(raw[2]), ll, rtol=1e-8)
    # records at steps 0, 30, 60 for levels 0..3
    assert sorted({r[0] for r in report.rows}) == [0, 30, 60]
    assert len(report.level_series(3)) == 3
