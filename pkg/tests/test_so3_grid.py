import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from spyro import quat, so3_grid

from conftest import make_rng


def test_cell_counts():
    assert so3_grid.n_cells(0) == 72
    assert so3_grid.n_cells(1) == 576
    assert so3_grid.n_cells(2) == 4608
    assert so3_grid.n_cells(6) == 18_874_368


def test_recursion_bounds():
    with pytest.raises(ValueError):
        so3_grid.n_cells(-1)
    with pytest.raises(ValueError):
        so3_grid.n_cells(so3_grid.MAX_RECURSION + 1)


def test_volume_partition():
    for r in range(5):
        total = so3_grid.n_cells(r) * so3_grid.cell_volume(r)
        np.testing.assert_allclose(total, np.pi**2, rtol=1e-12)


@given(st.integers(0, 5), st.integers(0, 2**31))
def test_pack_unpack_roundtrip(recursion, raw):
    index = raw % so3_grid.n_cells(recursion)
    pix, psi = so3_grid.unpack(np.int64(index), recursion)
    assert 0 <= pix < 12 * so3_grid.n_side(recursion) ** 2
    assert 0 <= psi < so3_grid.n_psi(recursion)
    assert so3_grid.pack(pix, psi, recursion) == index


@given(st.integers(1, 5), st.integers(0, 2**31))
def test_parent_child_consistency(recursion, raw):
    index = np.int64(raw % so3_grid.n_cells(recursion))
    p = so3_grid.parent(index, recursion)
    kids = so3_grid.children(p, recursion - 1)
    assert kids.shape[-1] == so3_grid.BRANCHING
    assert index in kids
    assert np.all(so3_grid.parent(kids, recursion) == p)


def test_children_partition_level():
    # every level-r+1 cell is the child of exactly one level-r cell
    for r in [0, 1]:
        kids = so3_grid.children(np.arange(so3_grid.n_cells(r)), r).ravel()
        np.testing.assert_array_equal(np.sort(kids), np.arange(so3_grid.n_cells(r + 1)))


def test_hopf_quat_roundtrip(rng):
    theta = np.arccos(rng.uniform(-1, 1, 500))
    phi = rng.uniform(0, 2 * np.pi, 500)
    psi = rng.uniform(0, 2 * np.pi, 500)
    q = so3_grid.hopf_to_quat(theta, phi, psi)
    np.testing.assert_allclose(np.linalg.norm(q, axis=-1), 1.0, atol=1e-12)
    t2, p2, s2 = so3_grid.quat_to_hopf(q)
    np.testing.assert_allclose(t2, theta, atol=1e-9)
    np.testing.assert_allclose(p2, phi, atol=1e-9)
    np.testing.assert_allclose(s2, psi, atol=1e-9)


def test_lookup_center_fixed_point():
    rng = make_rng(21)
    for r in [0, 1, 3, 5]:
        cells = rng.integers(0, so3_grid.n_cells(r), 20_000)
        q = so3_grid.cell_center(cells, r)
        np.testing.assert_array_equal(so3_grid.lookup(q, r), cells)


def test_lookup_sign_invariance(rng):
    q = quat.random_rotations(rng, 1000)
    for r in [0, 2, 4]:
        np.testing.assert_array_equal(so3_grid.lookup(q, r), so3_grid.lookup(-q, r))


def test_sample_in_cell_stays_inside():
    rng = make_rng(22)
    for r in [0, 2, 4]:
        cells = rng.integers(0, so3_grid.n_cells(r), 5000)
        q = so3_grid.sample_in_cell(cells, r, rng)
        np.testing.assert_array_equal(so3_grid.lookup(q, r), cells)


def test_center_inside_own_parent():
    rng = make_rng(23)
    for r in [1, 3, 5]:
        cells = rng.integers(0, so3_grid.n_cells(r), 5000)
        q = so3_grid.cell_center(cells, r)
        np.testing.assert_array_equal(
            so3_grid.lookup(q, r - 1), so3_grid.parent(cells, r)
        )


def test_occupancy_uniform():
    # Haar-random rotations occupy equal-volume cells uniformly.
    rng = make_rng(24)
    q = quat.random_rotations(rng, 200_000)
    for r in [0, 1, 2]:
        cells = so3_grid.lookup(q, r)
        counts = np.bincount(cells, minlength=so3_grid.n_cells(r))
        chi2 = np.sum((counts - counts.mean()) ** 2 / counts.mean())
        p = stats.chi2.sf(chi2, counts.size - 1)
        assert p > 1e-3, f"r={r} occupancy p={p}"


def test_frame_moves_grid():
    rng = make_rng(25)
    offset = quat.random_rotations(rng, 1)[0]
    frame = so3_grid.So3Frame(offset=offset)
    q = quat.random_rotations(rng, 1000)
    # looking up q in the rotated frame equals looking up the unrotated
    # representative in the identity frame
    rel = frame.invert(q)
    np.testing.assert_array_equal(
        so3_grid.lookup(q, 3, frame), so3_grid.lookup(rel, 3)
    )
    cells = rng.integers(0, so3_grid.n_cells(3), 1000)
    np.testing.assert_array_equal(so3_grid.lookup(so3_grid.cell_center(cells, 3, frame), 3, frame), cells)


def test_cell_diameter_shrinks():
    # Typical geodesic spread of samples around the center halves per
    # recursion. The median is the right statistic: the four cells touching
    # each sphere pole keep a fixed lifted extent at every depth (the Hopf
    # section is degenerate there), so the max does not contract.
    rng = make_rng(26)
    spread = []
    for r in [1, 2, 3, 4]:
        cells = rng.integers(0, so3_grid.n_cells(r), 4000)
        center = so3_grid.cell_center(cells, r)
        s = so3_grid.sample_in_cell(cells, r, rng)
        spread.append(np.median(quat.geodesic_distance(center, s)))
    ratios = np.array(spread[:-1]) / np.array(spread[1:])
    assert np.all(ratios > 1.8), spread
    assert np.all(ratios < 2.2), spread
