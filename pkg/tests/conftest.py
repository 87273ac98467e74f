import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def make_rng(*key):
    """Deterministic per-test generator keyed by small integers."""
    return np.random.default_rng(key)


class TableModel:
    """Scores read from free per-level tables, keyed by cell index.

    When built with `consistent=True` the parent score equals the
    logsumexp of its children's scores, which makes sparse inference
    collapse exactly onto dense evaluation at any k.
    """

    def __init__(self, tables):
        self.tables = tables

    @classmethod
    def random(cls, grid, depth, rng, consistent=False, scale=3.0):
        tables = [None] * (depth + 1)
        tables[depth] = scale * rng.standard_normal(grid.n_cells(depth))
        for r in range(depth - 1, -1, -1):
            if consistent:
                child = tables[r + 1].reshape(grid.n_cells(r), -1)
                m = child.max(axis=1)
                tables[r] = m + np.log(np.exp(child - m[:, None]).sum(axis=1))
            else:
                tables[r] = scale * rng.standard_normal(grid.n_cells(r))
        return cls(tables)

    def score_cells(self, indices, recursion):
        return self.tables[recursion][indices]

    def score_poses(self, rotations, positions, recursion):
        raise NotImplementedError("table models score cells, not poses")
