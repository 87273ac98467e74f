"""Per-level log-linear scoring heads.

One weight vector and bias per pyramid level; the score of a pose is
w[r] . features + b[r]. Zero initialization makes the untrained model
score every cell equally, i.e. the belief starts uniform. Training uses
inverted dropout on the feature vector so inference needs no rescaling.
"""

import numpy as np


class KeypointHead:
    def __init__(self, dim, depth, dropout=0.0):
        if not 0.0 <= dropout < 1.0:
            raise ValueError(f"dropout must be in [0, 1), got {dropout}")
        self.dim = dim
        self.depth = depth
        self.dropout = dropout
        self.weights = np.zeros((depth + 1, dim))
        self.biases = np.zeros(depth + 1)

    def score(self, features, recursion):
        return np.asarray(features) @ self.weights[recursion] + self.biases[recursion]

    def dropout_mask(self, rng):
        """Inverted-dropout multiplier for one training step (shape (dim,))."""
        if self.dropout == 0.0:
            return np.ones(self.dim)
        keep = rng.random(self.dim) >= self.dropout
        return keep / (1.0 - self.dropout)

    def apply_grads(self, features, dscores, recursion, lr):
        """SGD step from per-sample score gradients.

        features is (n, dim) as seen by score (dropout already applied),
        dscores is (n,) of dL/dscore.
        """
        features = np.asarray(features)
        dscores = np.asarray(dscores)
        self.weights[recursion] -= lr * (dscores @ features)
        self.biases[recursion] -= lr * dscores.sum()

    def save(self, path):
        np.savez(
            path,
            weights=self.weights,
            biases=self.biases,
            dropout=np.float64(self.dropout),
        )

    @classmethod
    def load(cls, path):
        data = np.load(path)
        head = cls(
            dim=data["weights"].shape[1],
            depth=data["weights"].shape[0] - 1,
            dropout=float(data["dropout"]),
        )
        head.weights[:] = data["weights"]
        head.biases[:] = data["biases"]
        return head
