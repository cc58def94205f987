"""Seeded generators for scenes, pose sequences and gaze traces."""
from __future__ import annotations

import math

import numpy as np

from .scene import SH_C0, Camera, Scene, look_at, sh_coeff_count


def synthetic_scene(n_gaussians: int = 3000, seed: int = 0, n_clusters: int = 12,
                    sh_degree: int = 1, depth_range=(3.0, 9.0), spread: float = 0.9,
                    name: str | None = None) -> Scene:
    """Random clustered Gaussians in front of a camera at the origin looking down +z.

    Clusters are placed inside a 90 degree frustum (``|x|, |y| < spread * z``).
    """
    rng = np.random.default_rng(seed)
    z_c = rng.uniform(*depth_range, n_clusters)
    xy_c = rng.uniform(-spread, spread, (n_clusters, 2)) * z_c[:, None]
    centers = np.column_stack([xy_c, z_c])
    extent = rng.uniform(0.3, 1.2, n_clusters)
    base_rgb = rng.uniform(0.05, 0.95, (n_clusters, 3))

    which = rng.integers(0, n_clusters, n_gaussians)
    means = centers[which] + rng.normal(0.0, 1.0, (n_gaussians, 3)) * extent[which, None]
    means[:, 2] = np.maximum(means[:, 2], 0.5)
    scales = np.exp(rng.uniform(np.log(0.01), np.log(0.15), (n_gaussians, 3)))
    q = rng.normal(size=(n_gaussians, 4))
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    opac = rng.uniform(0.3, 0.95, n_gaussians)

    K = sh_coeff_count(sh_degree)
    sh = np.zeros((n_gaussians, K, 3))
    rgb = np.clip(base_rgb[which] + rng.normal(0.0, 0.08, (n_gaussians, 3)), 0.0, 1.0)
    sh[:, 0, :] = (rgb - 0.5) / SH_C0
    if K > 1:
        sh[:, 1:, :] = rng.normal(0.0, 0.05, (n_gaussians, K - 1, 3))
    return Scene(means, scales, q, opac, sh, name=name or f"synthetic{seed}")


def synthetic_poses(n: int, width: int = 1280, height: int = 720, fov_deg: float = 90.0,
                    seed: int = 0, jitter: float = 0.25) -> list[Camera]:
    """``n`` cameras near the origin, each looking roughly down +z."""
    rng = np.random.default_rng(seed)
    cams = []
    for _ in range(n):
        eye = rng.normal(0.0, jitter, 3) * np.array([1.0, 0.5, 1.0])
        target = np.array([rng.normal(0.0, jitter), rng.normal(0.0, jitter), 6.0])
        cams.append(Camera.from_fov(fov_deg, width, height, look_at(eye, target)))
    return cams


def synthetic_saccade_trace(duration_ms: float = 2000.0, width: int = 1280, height: int = 720,
                            seed: int = 0, step_ms: float = 5.0,
                            fixation_ms=(200.0, 400.0), saccade_ms: float = 40.0):
    """Fixations joined by linear saccades, as rows ``(t_ms, x_px, y_px)``."""
    rng = np.random.default_rng(seed)

    def pick():
        return rng.uniform(0.2, 0.8) * width, rng.uniform(0.2, 0.8) * height

    rows = []
    t = 0.0
    cur = pick()
    while t <= duration_ms:
        hold = rng.uniform(*fixation_ms)
        end = min(t + hold, duration_ms)
        while t <= end:
            rows.append((t, cur[0], cur[1]))
            t += step_ms
        nxt = pick()
        steps = max(1, int(math.ceil(saccade_ms / step_ms)))
        for k in range(1, steps + 1):
            if t > duration_ms:
                break
            f = k / steps
            rows.append((t, cur[0] + f * (nxt[0] - cur[0]), cur[1] + f * (nxt[1] - cur[1])))
            t += step_ms
        cur = nxt
    return rows
