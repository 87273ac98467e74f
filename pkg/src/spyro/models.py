"""Scoring models: anything mapping poses at a level to unnormalized
log densities.

The pyramid machinery only needs `score_poses(rotations, positions,
recursion)`; these wrappers cover the cases used throughout: a flat
baseline, an analytic target used as oracle, a trained keypoint head,
and multi-view fusion by score averaging.
"""

from dataclasses import dataclass, field

import numpy as np

from . import quat


class UniformModel:
    """Scores every pose zero; the belief it induces is uniform."""

    def score_poses(self, rotations, positions, recursion):
        return np.zeros(np.shape(rotations)[:-1])


class AnalyticModel:
    """Scores poses by an analytic target's log density.

    With scale != 1 the density is tempered, which keeps it a valid
    unnormalized model while making the induced belief sharper or
    flatter than the target.
    """

    def __init__(self, target, scale=1.0):
        self.target = target
        self.scale = scale

    def score_poses(self, rotations, positions, recursion):
        pos = None if self.target.rotation_only else positions
        return self.scale * self.target.log_pdf(rotations, pos)


class KeypointModel:
    """Feature extractor plus trained per-level head."""

    def __init__(self, extractor, head):
        self.extractor = extractor
        self.head = head

    def score_poses(self, rotations, positions, recursion):
        return self.head.score(self.extractor.extract(rotations, positions), recursion)


@dataclass(frozen=True)
class ViewExtrinsic:
    """World-to-camera transform: p_cam = R p_world + t."""

    rotation: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0, 0.0]))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def apply(self, rotations, positions):
        q = quat.multiply(self.rotation, rotations)
        t = quat.rotate(self.rotation, positions) + self.translation
        return q, t

    def ray_direction(self, point_world):
        """Unit world-frame direction from the camera center to a point."""
        center = -quat.rotate(quat.conjugate(self.rotation), self.translation)
        ray = np.asarray(point_world, dtype=np.float64) - center
        return ray / np.linalg.norm(ray)


class FusedViews:
    """Averages per-view scores on a shared world grid.

    Each view scores the pose expressed in its own camera frame; the
    fused score is the arithmetic mean, so log densities combine like a
    geometric mean of the per-view beliefs.
    """

    def __init__(self, views):
        if not views:
            raise ValueError("need at least one view")
        self.views = list(views)

    def score_poses(self, rotations, positions, recursion):
        scores = [
            model.score_poses(*ext.apply(rotations, positions), recursion)
            for model, ext in self.views
        ]
        return np.mean(scores, axis=0)
