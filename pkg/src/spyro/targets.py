"""Analytic pose densities used as ground-truth targets and oracles.

A target is a mixture over modes; each mode contributes a rotation kernel
exp(kappa (tr(R0^T R) - 3) / 2) and, unless the target is rotation-only,
an isotropic Gaussian in position. Kernels are normalized per mode (the
rotation normalizer by 1-D quadrature over the relative angle, using the
pi^2 total-volume convention), so densities integrate to one and a
kappa = 0 rotation-only target is the uniform density 1/pi^2.
"""

from dataclasses import dataclass

import numpy as np
from scipy import integrate

from . import quat

LOG_SO3_VOLUME = 2.0 * np.log(np.pi)


@dataclass(frozen=True)
class Mode:
    rotation: np.ndarray
    kappa: float
    position: np.ndarray = None
    pos_std: float = 0.0
    weight: float = 1.0


def _log_rotation_normalizer(kappa):
    """log of integral over SO(3) (volume pi^2) of the trace kernel."""
    if kappa < 0:
        raise ValueError(f"kappa must be >= 0, got {kappa}")
    # relative-angle density under Haar is (1 - cos w) / pi on [0, pi]
    val, _ = integrate.quad(
        lambda w: np.exp(kappa * (np.cos(w) - 1.0)) * (1.0 - np.cos(w)) / np.pi,
        0.0,
        np.pi,
        limit=200,
    )
    return 2.0 * np.log(np.pi) + np.log(val)


def _angle_cdf_grid(kappa, n=4096):
    """Inverse-transform table for the relative rotation angle."""
    w = np.linspace(0.0, np.pi, n)
    pdf = np.exp(kappa * (np.cos(w) - 1.0)) * (1.0 - np.cos(w))
    cdf = np.concatenate([[0.0], np.cumsum((pdf[1:] + pdf[:-1]) * 0.5 * np.diff(w))])
    return w, cdf / cdf[-1]


def cyclic_group(axis, order):
    """Quaternions of the cyclic rotation group of a given order about axis."""
    angles = 2.0 * np.pi * np.arange(order) / order
    return quat.from_axis_angle(np.broadcast_to(axis, (order, 3)), angles)


class AnalyticPoseTarget:
    """Normalized mixture density over SE(3) poses (or SO(3) only).

    Symmetry generators, if given, expand every mode by the generated
    group acting in the object frame (rotations post-multiplied), with
    the mode weight split evenly over the copies.
    """

    def __init__(self, modes, symmetry=None):
        modes = list(modes)
        if not modes:
            raise ValueError("target needs at least one mode")
        if symmetry is not None:
            group = _group_closure(symmetry)
            modes = [
                Mode(
                    rotation=quat.canonical(quat.multiply(m.rotation, g)),
                    kappa=m.kappa,
                    position=m.position,
                    pos_std=m.pos_std,
                    weight=m.weight / len(group),
                )
                for m in modes
                for g in group
            ]
        self.rotation_only = modes[0].position is None
        for m in modes:
            if (m.position is None) != self.rotation_only:
                raise ValueError("all modes must agree on having a position part")
        self.modes = modes
        w = np.array([m.weight for m in modes], dtype=np.float64)
        if not np.all(w > 0):
            raise ValueError("mode weights must be positive")
        self._log_w = np.log(w / w.sum())
        self._rot = np.stack([np.asarray(m.rotation, dtype=np.float64) for m in modes])
        self._kappa = np.array([m.kappa for m in modes], dtype=np.float64)
        self._log_zrot = np.array(
            [_log_rotation_normalizer(k) for k in self._kappa]
        )
        if not self.rotation_only:
            self._pos = np.stack([np.asarray(m.position, dtype=np.float64) for m in modes])
            self._pos_std = np.array([m.pos_std for m in modes], dtype=np.float64)
            if not np.all(self._pos_std > 0):
                raise ValueError("pos_std must be positive for pose targets")
            self._log_zpos = 1.5 * np.log(2.0 * np.pi) + 3.0 * np.log(self._pos_std)

    def log_pdf(self, q, t=None):
        """Log density at rotations q (..., 4) and positions t (..., 3)."""
        q = np.asarray(q, dtype=np.float64)
        tr = quat.trace_of_relative(self._rot, q[..., None, :])
        comp = self._log_w + self._kappa * (tr - 3.0) / 2.0 - self._log_zrot
        if not self.rotation_only:
            if t is None:
                raise ValueError("pose target needs positions")
            t = np.asarray(t, dtype=np.float64)
            d2 = np.sum((t[..., None, :] - self._pos) ** 2, axis=-1)
            comp = comp - 0.5 * d2 / self._pos_std**2 - self._log_zpos
        m = np.max(comp, axis=-1)
        return m + np.log(np.sum(np.exp(comp - m[..., None]), axis=-1))

    def sample(self, rng, n):
        """Draw n poses; returns (quats, positions) (positions None if
        rotation-only)."""
        which = rng.choice(len(self.modes), size=n, p=np.exp(self._log_w))
        # relative angle by inverse transform, axis uniform on the sphere
        qs = np.empty((n, 4))
        for k in np.unique(which):
            rows = np.flatnonzero(which == k)
            grid, cdf = _angle_cdf_grid(self._kappa[k])
            ang = np.interp(rng.random(rows.size), cdf, grid)
            axis = rng.standard_normal((rows.size, 3))
            axis /= np.linalg.norm(axis, axis=1, keepdims=True)
            rel = quat.from_axis_angle(axis, ang)
            qs[rows] = quat.multiply(self._rot[k], rel)
        qs = quat.canonical(qs)
        if self.rotation_only:
            return qs, None
        ts = self._pos[which] + rng.standard_normal((n, 3)) * self._pos_std[which, None]
        return qs, ts

    def max_density_pose(self):
        """(rotation, position) of the strongest mode peak."""
        peak = self._log_w + self._log_kernel_peak()
        k = int(np.argmax(peak))
        pos = None if self.rotation_only else self._pos[k]
        return self._rot[k], pos

    def _log_kernel_peak(self):
        peak = -self._log_zrot
        if not self.rotation_only:
            peak = peak - self._log_zpos
        return peak


def _group_closure(generators, tol=1e-9, cap=512):
    """Close a set of rotation generators under multiplication."""
    group = [quat.canonical(np.array([1.0, 0.0, 0.0, 0.0]))]
    frontier = [quat.canonical(np.asarray(g, dtype=np.float64)) for g in generators]
    while frontier:
        g = frontier.pop()
        if any(quat.geodesic_distance(g, h) < tol for h in group):
            continue
        group.append(g)
        if len(group) > cap:
            raise ValueError("symmetry group closure exceeded cap")
        for h in list(group):
            frontier.append(quat.canonical(quat.multiply(g, h)))
            frontier.append(quat.canonical(quat.multiply(h, g)))
    return group


def cell_log_prob(target, grid, recursion, index, n_mc, rng):
    """MC estimate of log integral of the target density over cells.

    Returns (log_prob, standard_error_of_prob). Samples are uniform in
    the cell, so the integral is cell_volume * mean(density).
    """
    index = np.atleast_1d(np.asarray(index, dtype=np.int64))
    vol = grid.cell_volume(recursion)
    dens = np.empty((n_mc, index.size))
    for i in range(n_mc):
        q, t = grid.sample_in_cell(index, recursion, rng)
        dens[i] = np.exp(target.log_pdf(q, None if target.rotation_only else t))
    mean = dens.mean(axis=0)
    se = dens.std(axis=0, ddof=1) / np.sqrt(n_mc) * vol
    with np.errstate(divide="ignore"):
        logp = np.log(mean * vol)
    return logp, se
