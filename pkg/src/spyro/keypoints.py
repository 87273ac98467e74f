"""Object keypoints, pinhole projection, and feature-map sampling.

Per-pose features come from projecting a fixed set of object keypoints
into one or more feature maps and bilinearly sampling each map at the
projected pixel locations. Keypoints that fall outside the image (or
behind the camera) read a fixed learned-constant sentinel instead, so
feature dimensionality never depends on visibility.
"""

from dataclasses import dataclass

import numpy as np

from . import quat


def farthest_point_sample(points, count):
    """Greedy farthest-point subset of a point cloud.

    Starts from the point farthest from the centroid; ties take the
    lowest index. Deterministic for a fixed input ordering.
    """
    points = np.asarray(points, dtype=np.float64)
    if count > len(points):
        raise ValueError(f"asked for {count} of {len(points)} points")
    centroid = points.mean(axis=0)
    chosen = [int(np.argmax(np.linalg.norm(points - centroid, axis=1)))]
    dist = np.linalg.norm(points - points[chosen[0]], axis=1)
    for _ in range(count - 1):
        nxt = int(np.argmax(dist))
        chosen.append(nxt)
        dist = np.minimum(dist, np.linalg.norm(points - points[nxt], axis=1))
    return points[chosen].copy()


def cube_keypoints(diameter):
    """16 canonical keypoints: corners of two nested cubes (sides d, d/2)."""
    corners = np.array(
        [[x, y, z] for x in (-0.5, 0.5) for y in (-0.5, 0.5) for z in (-0.5, 0.5)]
    )
    return np.concatenate([corners * diameter, corners * (diameter / 2.0)])


def load_points(path):
    """Load an (n, 3) point cloud from a whitespace-separated text file."""
    pts = np.loadtxt(path, dtype=np.float64)
    pts = np.atleast_2d(pts)
    if pts.shape[1] != 3:
        raise ValueError(f"expected 3 columns in {path}, got {pts.shape[1]}")
    return pts


@dataclass(frozen=True)
class Camera:
    """Pinhole intrinsics; image is height rows by width columns."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int


def project(camera, points):
    """Project camera-frame points to pixels.

    Returns (uv, valid); valid is False behind the camera (z <= 0) or
    outside [0, width) x [0, height).
    """
    points = np.asarray(points, dtype=np.float64)
    z = points[..., 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        u = camera.fx * points[..., 0] / z + camera.cx
        v = camera.fy * points[..., 1] / z + camera.cy
    uv = np.stack([u, v], axis=-1)
    valid = (
        (z > 0.0)
        & (u >= 0.0)
        & (u < camera.width)
        & (v >= 0.0)
        & (v < camera.height)
    )
    uv[~valid] = 0.0
    return uv, valid


def bilinear_sample(feature_map, uv):
    """Sample (C, H, W) maps at pixel locations (..., 2), edge-clamped."""
    c, h, w = feature_map.shape
    uv = np.asarray(uv, dtype=np.float64)
    u = np.clip(uv[..., 0], 0.0, w - 1.0)
    v = np.clip(uv[..., 1], 0.0, h - 1.0)
    u0 = np.clip(np.floor(u).astype(np.int64), 0, w - 2) if w > 1 else np.zeros_like(u, dtype=np.int64)
    v0 = np.clip(np.floor(v).astype(np.int64), 0, h - 2) if h > 1 else np.zeros_like(v, dtype=np.int64)
    du = u - u0
    dv = v - v0
    f00 = feature_map[:, v0, u0]
    f01 = feature_map[:, v0, u0 + 1] if w > 1 else f00
    f10 = feature_map[:, v0 + 1, u0] if h > 1 else f00
    f11 = feature_map[:, v0 + 1, u0 + 1] if w > 1 and h > 1 else f00
    out = (
        f00 * (1 - du) * (1 - dv)
        + f01 * du * (1 - dv)
        + f10 * (1 - du) * dv
        + f11 * du * dv
    )
    # sampled axes end up first; put channels last
    return np.moveaxis(out, 0, -1)


class FeatureExtractor:
    """Pose -> flat feature vector against a fixed feature map.

    Feature layout is keypoint-major: for keypoint k the slice
    [k*C : (k+1)*C] holds the C sampled channels, replaced by a fixed
    out-of-image sentinel row when the keypoint is not visible.
    """

    def __init__(self, camera, keypoints, feature_map, sentinel_seed=0):
        self.camera = camera
        self.keypoints = np.asarray(keypoints, dtype=np.float64)
        self.feature_map = np.asarray(feature_map, dtype=np.float64)
        c = self.feature_map.shape[0]
        rng = np.random.default_rng(sentinel_seed)
        self.sentinel = rng.standard_normal((len(self.keypoints), c))

    @property
    def dim(self):
        return len(self.keypoints) * self.feature_map.shape[0]

    def extract(self, rotations, positions):
        """Features for poses; rotations (..., 4), positions (..., 3)."""
        rotations = np.asarray(rotations, dtype=np.float64)
        positions = np.asarray(positions, dtype=np.float64)
        pts = quat.rotate(rotations[..., None, :], self.keypoints) + positions[..., None, :]
        uv, valid = project(self.camera, pts)
        feats = bilinear_sample(self.feature_map, uv)
        feats = np.where(valid[..., None], feats, self.sentinel)
        return feats.reshape(feats.shape[:-2] + (self.dim,))


def scene_feature_map(camera, keypoints, poses, weights, channels, radii, rng):
    """Feature map for a synthetic scene with known pose hypotheses.

    The first channels are smooth noise; one extra channel per radius
    holds soft discs at the projected keypoints of every pose (weighted),
    so a matched pose reads high responses at all its keypoints. poses
    is a sequence of (rotation, position).
    """
    fmap = synth_feature_map(camera, channels + len(radii), rng)
    uvs = []
    ws = []
    for (q, t), w in zip(poses, weights):
        uv, valid = project(camera, quat.rotate(q, keypoints) + t)
        uvs.append(uv[valid])
        ws.append(np.full(valid.sum(), w, dtype=np.float64))
    uv = np.concatenate(uvs) if uvs else np.empty((0, 2))
    w = np.concatenate(ws) if ws else np.empty(0)
    vv, uu = np.mgrid[0 : camera.height, 0 : camera.width]
    for i, radius in enumerate(radii):
        d2 = (uu[None] - uv[:, 0, None, None]) ** 2 + (
            vv[None] - uv[:, 1, None, None]
        ) ** 2
        fmap[channels + i] = np.sum(
            w[:, None, None] * np.exp(-0.5 * d2 / radius**2), axis=0
        )
    return fmap


def synth_feature_map(camera, channels, rng, splat=None, splat_radius=6.0):
    """Smooth random feature map, optionally with a keypoint splat.

    Channels are white noise blurred at a few scales (structure for the
    heads to latch onto). If splat is given as (uv, valid) projected
    keypoints, a soft disc is stamped around each visible keypoint into
    a dedicated final channel, which is what makes one pose stand out.
    """
    from scipy import ndimage

    h, w = camera.height, camera.width
    maps = []
    for i in range(channels):
        noise = rng.standard_normal((h, w))
        sigma = 2.0 ** (1 + i % 3)
        m = ndimage.gaussian_filter(noise, sigma)
        m /= m.std() + 1e-12
        maps.append(m)
    out = np.stack(maps)
    if splat is not None:
        uv, valid = splat
        vv, uu = np.mgrid[0:h, 0:w]
        layer = np.zeros((h, w))
        for (u, v), ok in zip(np.atleast_2d(uv), np.atleast_1d(valid)):
            if not ok:
                continue
            d2 = (uu - u) ** 2 + (vv - v) ** 2
            layer += np.exp(-0.5 * d2 / splat_radius**2)
        out[-1] = out[-1] * 0.1 + layer
    return out
