"""Mollweide scatter rendering of rotation marginals.

A rotation is drawn at the Mollweide image of the direction its
canonical object axis points at; the remaining degree of freedom (the
twist about that axis) picks the hue, and the cell's probability sets
the deposited intensity. Deposits are additive, so overlapping cells
brighten and total painted intensity tracks total marginal mass.
"""

import numpy as np

from . import quat, so3_grid


def mollweide_xy(directions):
    """Equal-area projection of unit vectors to x in [-2sqrt2, 2sqrt2],
    y in [-sqrt2, sqrt2]."""
    d = np.asarray(directions, dtype=np.float64)
    lat = np.arcsin(np.clip(d[..., 2], -1.0, 1.0))
    lon = np.arctan2(d[..., 1], d[..., 0])
    theta = lat.copy()
    target = np.pi * np.sin(lat)
    for _ in range(12):
        f = 2.0 * theta + np.sin(2.0 * theta) - target
        fp = 2.0 + 2.0 * np.cos(2.0 * theta)
        step = f / np.where(np.abs(fp) < 1e-9, 1e-9, fp)
        theta = theta - step
    x = 2.0 * np.sqrt(2.0) / np.pi * lon * np.cos(theta)
    y = np.sqrt(2.0) * np.sin(theta)
    return x, y


def twist_angle(rotations, axis):
    """Rotation angle about the (rotated) canonical axis, in [0, 2pi).

    Swing-twist decomposition: the twist is the quaternion built from
    the scalar part and the vector part's projection onto the axis.
    """
    q = np.asarray(rotations, dtype=np.float64)
    a = np.asarray(axis, dtype=np.float64)
    a = a / np.linalg.norm(a)
    proj = np.sum(q[..., 1:] * a, axis=-1)
    return np.mod(2.0 * np.arctan2(proj, q[..., 0]), 2.0 * np.pi)


def _hue_rgb(angle):
    """Saturated RGB around the hue circle; angle in radians."""
    h = np.atleast_1d(np.asarray(angle, dtype=np.float64)).ravel()
    h = (h / (2.0 * np.pi) * 6.0) % 6.0
    c = np.ones_like(h)
    x = 1.0 - np.abs(h % 2.0 - 1.0)
    zeros = np.zeros_like(h)
    sector = h.astype(np.int64) % 6
    rgb_by_sector = np.stack(
        [
            np.stack([c, x, zeros], axis=-1),
            np.stack([x, c, zeros], axis=-1),
            np.stack([zeros, c, x], axis=-1),
            np.stack([zeros, x, c], axis=-1),
            np.stack([x, zeros, c], axis=-1),
            np.stack([c, zeros, x], axis=-1),
        ]
    )
    return rgb_by_sector[sector, np.arange(h.size)]


def render_marginal(
    cells,
    probs,
    recursion,
    axis=(1.0, 0.0, 0.0),
    width=720,
    grayscale=False,
    frame=so3_grid.IDENTITY_SO3_FRAME,
    splat=1.5,
):
    """Accumulate a marginal into a float (H, W, 3) buffer (H = W/2)."""
    cells = np.asarray(cells, dtype=np.int64)
    probs = np.asarray(probs, dtype=np.float64)
    height = width // 2
    buf = np.zeros((height, width, 3))
    if cells.size == 0:
        return buf
    q = so3_grid.cell_center(cells, recursion, frame)
    a = np.asarray(axis, dtype=np.float64)
    a = a / np.linalg.norm(a)
    dirs = quat.rotate(q, a)
    x, y = mollweide_xy(dirs)
    if grayscale:
        rgb = np.ones((cells.size, 3))
    else:
        rgb = _hue_rgb(twist_angle(q, a))
    col = (x + 2.0 * np.sqrt(2.0)) / (4.0 * np.sqrt(2.0)) * (width - 1)
    row = (np.sqrt(2.0) - y) / (2.0 * np.sqrt(2.0)) * (height - 1)
    rad = max(int(np.ceil(2.0 * splat)), 1)
    offs = np.arange(-rad, rad + 1)
    dy, dx = np.meshgrid(offs, offs, indexing="ij")
    kernel = np.exp(-0.5 * (dx**2 + dy**2) / splat**2)
    kernel /= kernel.sum()
    ci = np.round(col).astype(np.int64)
    ri = np.round(row).astype(np.int64)
    for oy, ox, kw in zip(dy.ravel(), dx.ravel(), kernel.ravel()):
        rr = np.clip(ri + oy, 0, height - 1)
        cc = np.clip(ci + ox, 0, width - 1)
        np.add.at(buf, (rr, cc), (probs * kw)[:, None] * rgb)
    return buf


def draw_truth(buf, rotation, axis=(1.0, 0.0, 0.0), radius=9.0):
    """Mark a rotation with a white circle outline."""
    height, width = buf.shape[:2]
    a = np.asarray(axis, dtype=np.float64)
    a = a / np.linalg.norm(a)
    d = quat.rotate(np.asarray(rotation, dtype=np.float64), a)
    x, y = mollweide_xy(d)
    cx = (x + 2.0 * np.sqrt(2.0)) / (4.0 * np.sqrt(2.0)) * (width - 1)
    cy = (np.sqrt(2.0) - y) / (2.0 * np.sqrt(2.0)) * (height - 1)
    peak = buf.max() if buf.max() > 0 else 1.0
    ang = np.linspace(0.0, 2.0 * np.pi, 256, endpoint=False)
    for w_ring in (0.0, 0.5):
        rr = np.clip(np.round(cy + (radius + w_ring) * np.sin(ang)).astype(np.int64), 0, height - 1)
        cc = np.clip(np.round(cx + (radius + w_ring) * np.cos(ang)).astype(np.int64), 0, width - 1)
        buf[rr, cc] = peak
    return buf


def to_uint8(buf, gamma=0.5):
    """Tone-map the additive buffer for display."""
    peak = buf.max()
    if peak <= 0:
        return np.zeros(buf.shape, dtype=np.uint8)
    img = (buf / peak) ** gamma
    return np.round(img * 255.0).astype(np.uint8)


def write_ppm(path, image):
    """Binary P6 portable pixmap."""
    image = np.ascontiguousarray(image, dtype=np.uint8)
    height, width = image.shape[:2]
    with open(path, "wb") as f:
        f.write(f"P6\n{width} {height}\n255\n".encode())
        f.write(image.tobytes())


def read_ppm(path):
    with open(path, "rb") as f:
        data = f.read()
    parts = data.split(b"\n", 3)
    if parts[0] != b"P6":
        raise ValueError(f"{path} is not a binary PPM")
    width, height = map(int, parts[1].split())
    return np.frombuffer(parts[3], dtype=np.uint8, count=width * height * 3).reshape(
        height, width, 3
    )


def write_image(path, buf, gamma=0.5):
    """PPM always works; PNG when Pillow is available."""
    image = to_uint8(buf, gamma=gamma)
    if str(path).lower().endswith(".png"):
        try:
            from PIL import Image
        except ImportError as e:
            raise ValueError("PNG output needs Pillow; use a .ppm path") from e
        Image.fromarray(image).save(path)
    else:
        write_ppm(path, image)
