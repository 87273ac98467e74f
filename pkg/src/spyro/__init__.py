"""Hierarchical pose-distribution estimation on SO(3) and SE(3).

Equivolumetric grid pyramids over rotations and positions, density heads
trained with an importance-sampled contrastive objective, sparse top-k
inference, and multi-view fusion.
"""

from .errors import ConfigError, NumericError
from .inference import (
    SparseBelief,
    continuous_log_likelihood,
    eval_count,
    fuse_multiview,
    load_belief,
    marginal_so3,
    save_belief,
    sparse_infer,
)
from .pyramid import SE3Pyramid, SO3Pyramid
from .targets import AnalyticPoseTarget, Mode
from .training import TrainConfig, TrainReport, train

__version__ = "0.1.0"

__all__ = [
    "AnalyticPoseTarget",
    "ConfigError",
    "Mode",
    "NumericError",
    "SE3Pyramid",
    "SO3Pyramid",
    "SparseBelief",
    "TrainConfig",
    "TrainReport",
    "continuous_log_likelihood",
    "eval_count",
    "fuse_multiview",
    "load_belief",
    "marginal_so3",
    "save_belief",
    "sparse_infer",
    "train",
]
