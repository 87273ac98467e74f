import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import logsumexp as scipy_lse

from spyro import estimation, quat, targets
from spyro.models import AnalyticModel
from spyro.pyramid import SO3Pyramid

from conftest import TableModel, make_rng

IDENTITY = np.array([1.0, 0.0, 0.0, 0.0])


def concentrated_scorer(kappa=5.0, seed=81):
    rng = make_rng(seed)
    q0 = quat.random_rotations(rng, 1)[0]
    t = targets.AnalyticPoseTarget([targets.Mode(rotation=q0, kappa=kappa)])
    grid = SO3Pyramid()
    return estimation.cell_scorer(AnalyticModel(t), grid), grid


# -------------------------------------------------------------- logsumexp


@settings(deadline=None)
@given(
    st.lists(st.floats(-50, 50), min_size=1, max_size=20),
)
def test_logsumexp_matches_scipy(vals):
    x = np.array(vals)
    np.testing.assert_allclose(
        estimation.logsumexp(x), scipy_lse(x), rtol=1e-9, atol=1e-12
    )


def test_logsumexp_all_neg_inf():
    assert estimation.logsumexp(np.array([-np.inf, -np.inf])) == -np.inf


def test_logsumexp_axis_and_keepdims(rng):
    x = rng.standard_normal((4, 6))
    x[2, :] = -np.inf
    np.testing.assert_allclose(
        estimation.logsumexp(x, axis=1), scipy_lse(x, axis=1), rtol=1e-12
    )
    assert estimation.logsumexp(x, axis=1, keepdims=True).shape == (4, 1)


# ---------------------------------------------------------------- infonce


def test_infonce_constant_model():
    # equal scores everywhere: the positive is one of N+1 indistinguishable
    # candidates, so the loss is exactly log(N+1)
    for n in [1, 7, 63]:
        loss, dpos, dneg = estimation.infonce_loss(
            np.zeros(4), np.zeros(n), np.zeros(n)
        )
        np.testing.assert_allclose(loss, np.log(n + 1), rtol=1e-12)
        np.testing.assert_allclose(dpos, (1.0 / (n + 1) - 1.0) / 4, rtol=1e-12)
        np.testing.assert_allclose(dneg, 1.0 / (n + 1) / 4, rtol=1e-12)


def _fd_check(pos, neg, logw, h=1e-4):
    # central differences; relative error is measured against
    # max(|fd|, |grad|, 1e-3) so near-zero gradients are judged absolutely
    loss, dpos, dneg = estimation.infonce_loss(pos, neg, logw)
    worst = 0.0
    for b in range(pos.shape[0]):
        e = np.zeros_like(pos)
        e[b] = h
        lp = estimation.infonce_loss(pos + e, neg, logw)[0]
        lm = estimation.infonce_loss(pos - e, neg, logw)[0]
        fd = (lp - lm) / (2 * h)
        worst = max(worst, abs(fd - dpos[b]) / max(abs(fd), abs(dpos[b]), 1e-3))
    # probe a few negative coordinates; shared negatives perturb all rows
    for j in range(0, neg.shape[-1], max(1, neg.shape[-1] // 5)):
        e = np.zeros_like(neg)
        e[..., j] = h
        lp = estimation.infonce_loss(pos, neg + e, logw)[0]
        lm = estimation.infonce_loss(pos, neg - e, logw)[0]
        fd = (lp - lm) / (2 * h)
        if neg.ndim == 1:
            grad = dneg[:, j].sum()
        else:
            grad = dneg[..., j].sum()
        worst = max(worst, abs(fd - grad) / max(abs(fd), abs(grad), 1e-3))
    return worst


def test_infonce_gradients_finite_difference():
    rng = make_rng(82)
    for trial in range(10):
        b, n = int(rng.integers(1, 6)), int(rng.integers(2, 30))
        pos = rng.standard_normal(b) * 2
        if trial % 2 == 0:
            neg = rng.standard_normal(n) * 2
            logw = rng.standard_normal(n)
        else:
            neg = rng.standard_normal((b, n)) * 2
            logw = rng.standard_normal((b, n))
        assert _fd_check(pos, neg, logw) < 1e-6


def test_infonce_weights_shift_scores():
    # adding log weights to negatives is the same as shifting their scores
    rng = make_rng(83)
    pos = rng.standard_normal(3)
    neg = rng.standard_normal(8)
    logw = rng.standard_normal(8)
    a = estimation.infonce_loss(pos, neg, logw)
    b = estimation.infonce_loss(pos, neg + logw, None)
    np.testing.assert_allclose(a[0], b[0], rtol=1e-12)
    np.testing.assert_allclose(a[2], b[2], rtol=1e-12)


# -------------------------------------------------------------- negatives


def test_uniform_negatives_structure():
    rng = make_rng(84)
    grid = SO3Pyramid()
    levels = estimation.uniform_negatives(grid, 3, 256, rng)
    assert [lv.recursion for lv in levels] == [0, 1, 2, 3]
    np.testing.assert_array_equal(levels[0].indices, np.arange(72))
    for lv in levels:
        np.testing.assert_array_equal(lv.log_weights, 0.0)
        assert lv.indices.min() >= 0
        assert lv.indices.max() < grid.n_cells(lv.recursion)
    assert levels[2].indices.size == 256


def test_trajectory_negatives_structure():
    score_fn, grid = concentrated_scorer()
    rng = make_rng(85)
    levels = estimation.sample_trajectories(score_fn, grid, 3, 32, rng)
    assert [lv.recursion for lv in levels] == [0, 1, 2, 3]
    np.testing.assert_array_equal(levels[0].indices, np.arange(72))
    np.testing.assert_array_equal(levels[0].log_weights, 0.0)
    for lv in levels[1:]:
        # repeated parents are deduplicated into a single block whose
        # weight carries the multiplicity, so each parent appears exactly
        # once as a whole sibling group of 8
        assert 0 < lv.indices.size <= 32 * 8
        parents, counts = np.unique(lv.indices // 8, return_counts=True)
        assert np.all(counts == 8)
        assert lv.indices.max() < grid.n_cells(lv.recursion)
        # weights are constant within a block
        w = lv.log_weights.reshape(-1, 8)
        np.testing.assert_array_equal(w, w[:, :1] * np.ones(8))


def test_trajectory_weights_uniform_proposal():
    # with a flat score the proposal is uniform and the weight of each
    # block reduces to the parent's sampling multiplicity: a positive
    # integer, and the multiplicities account for every trajectory
    grid = SO3Pyramid()
    rng = make_rng(86)
    flat = lambda idx, r: np.zeros(np.shape(idx))
    n_traj = 64
    levels = estimation.sample_trajectories(flat, grid, 2, n_traj, rng)
    for lv in levels[1:]:
        w = np.exp(lv.log_weights.reshape(-1, 8)[:, 0])
        np.testing.assert_allclose(w, np.round(w), atol=1e-9)
        assert w.min() >= 1.0 - 1e-9
        np.testing.assert_allclose(w.sum(), n_traj, rtol=1e-9)


def test_trajectory_weighted_sum_unbiased():
    # weighted exp-score sums estimate (n_negatives / level size) * Z_r
    score_fn, grid = concentrated_scorer(kappa=5.0)
    rng = make_rng(87)
    r = 2
    dense_z = float(np.sum(np.exp(score_fn(np.arange(grid.n_cells(r)), r))))
    n_traj = 64
    ests = []
    for _ in range(300):
        levels = estimation.sample_trajectories(score_fn, grid, r, n_traj, rng)
        lv = levels[r]
        s = score_fn(lv.indices, r)
        total = np.sum(np.exp(s + lv.log_weights))
        ests.append(total * grid.n_cells(r) / (n_traj * 8))
    ests = np.array(ests)
    se = ests.std(ddof=1) / np.sqrt(ests.size)
    assert abs(ests.mean() - dense_z) < 4 * se


# -------------------------------------------------------------- partition


def test_partition_uniform_without_replacement_is_dense():
    score_fn, grid = concentrated_scorer()
    rng = make_rng(88)
    r = 2
    n = grid.n_cells(r)
    dense = float(np.sum(np.exp(score_fn(np.arange(n), r))))
    est = estimation.partition_uniform(score_fn, grid, r, n, rng, replace=False)
    np.testing.assert_allclose(est, dense, rtol=1e-12)
    with pytest.raises(ValueError):
        estimation.partition_uniform(score_fn, grid, r, n + 1, rng, replace=False)


def test_partition_estimators_unbiased():
    score_fn, grid = concentrated_scorer(kappa=5.0)
    rng = make_rng(89)
    r = 2
    dense = float(np.sum(np.exp(score_fn(np.arange(grid.n_cells(r)), r))))
    unif = np.array(
        [estimation.partition_uniform(score_fn, grid, r, 512, rng) for _ in range(400)]
    )
    isest = np.array(
        [estimation.partition_is(score_fn, grid, r, 64, rng) for _ in range(400)]
    )
    for ests in (unif, isest):
        se = ests.std(ddof=1) / np.sqrt(ests.size)
        assert abs(ests.mean() - dense) < 4 * se


def test_partition_is_exact_at_level_zero():
    score_fn, grid = concentrated_scorer()
    rng = make_rng(90)
    dense = float(np.sum(np.exp(score_fn(np.arange(72), 0))))
    np.testing.assert_allclose(
        estimation.partition_is(score_fn, grid, 0, 8, rng), dense, rtol=1e-12
    )


def test_partition_is_lower_variance_when_concentrated():
    # a proposal that follows the density focuses evaluations on the mass;
    # at matched per-estimate budget its spread is smaller. The mode sits
    # on the equatorial band of the sphere grid, where cell centers track
    # cell mass well; modes inside the distorted polar cells can defeat a
    # center-scored proposal.
    from spyro import so3_grid

    q0 = so3_grid.hopf_to_quat(np.array(np.pi / 2), np.array(2.0), np.array(3.0))
    t = targets.AnalyticPoseTarget([targets.Mode(rotation=q0, kappa=5.0)])
    grid = SO3Pyramid()
    score_fn = estimation.cell_scorer(AnalyticModel(t), grid)
    rng = make_rng(92)
    r = 3
    unif = np.array(
        [estimation.partition_uniform(score_fn, grid, r, 1024, rng) for _ in range(300)]
    )
    isest = np.array(
        [estimation.partition_is(score_fn, grid, r, 128, rng) for _ in range(300)]
    )
    assert isest.var(ddof=1) < 0.8 * unif.var(ddof=1)


# ------------------------------------------------------------ cell_scorer


def test_cell_scorer_dispatches_to_tables():
    grid = SO3Pyramid()
    rng = make_rng(93)
    model = TableModel.random(grid, 2, rng)
    score_fn = estimation.cell_scorer(model, grid)
    idx = np.array([0, 5, 71])
    np.testing.assert_array_equal(score_fn(idx, 0), model.tables[0][idx])


def test_cell_scorer_scores_centers():
    score_fn, grid = concentrated_scorer(seed=94)
    idx = np.arange(0, 72, 7)
    rng = make_rng(94)
    q0 = quat.random_rotations(rng, 1)[0]
    t = targets.AnalyticPoseTarget([targets.Mode(rotation=q0, kappa=5.0)])
    q, _ = grid.centers(0, idx)
    np.testing.assert_allclose(score_fn(idx, 0), t.log_pdf(q), rtol=1e-12)
