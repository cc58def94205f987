"""
Foveal radii, exit profiling and per-tile refinement requests.

Angles are in degrees and converted to screen distances with
``r = rho_d * tan(theta)``, where ``rho_d`` is the viewing distance in pixels
(pixel density times eye-to-display distance).
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, DomainError
from .scene import Camera
from .splat import TILE


@dataclass(frozen=True)
class FoveationConfig:
    """Eccentricity bands around the gaze point.

    ``band_edges`` separate four regions (fovea, near-center, inter-foveal,
    periphery) rendered at ``levels`` from the inside out.  ``delta_theta``
    widens the foveal disk to absorb residual tracking error.
    """

    rho_d: float
    theta_i: float = 18.0
    delta_theta: float = 2.0
    band_edges: tuple[float, float, float] = (18.0, 27.0, 33.0)
    levels: tuple[int, int, int, int] = (4, 3, 2, 1)

    def __post_init__(self):
        edges = tuple(float(e) for e in self.band_edges)
        object.__setattr__(self, "band_edges", edges)
        object.__setattr__(self, "levels", tuple(int(v) for v in self.levels))
        if not self.rho_d > 0:
            raise ConfigurationError("rho_d must be positive")
        if not self.theta_i > 0:
            raise ConfigurationError("theta_i must be positive")
        if self.delta_theta < 0:
            raise ConfigurationError("delta_theta must be non-negative")
        if len(edges) != 3 or not edges[0] < edges[1] < edges[2]:
            raise ConfigurationError(f"band_edges must be 3 increasing angles, got {edges}")
        if abs(edges[0] - self.theta_i) > 1e-12:
            raise ConfigurationError("the first band edge must equal theta_i")
        if len(self.levels) != 4 or any(not 1 <= v <= 4 for v in self.levels):
            raise ConfigurationError("levels must be four values in 1..4")
        if list(self.levels) != sorted(self.levels, reverse=True):
            raise ConfigurationError("levels must not increase outward")

    @classmethod
    def for_camera(cls, cam: Camera, **kwargs) -> FoveationConfig:
        """Config whose ``rho_d`` maps the horizontal half-FOV to ``W/2`` pixels."""
        rho_d = cam.width / (2.0 * math.tan(math.radians(cam.fov_deg) / 2.0))
        return cls(rho_d=rho_d, **kwargs)

    @property
    def theta_f(self) -> float:
        return self.theta_i + self.delta_theta

    def deg_to_px(self, deg):
        return self.rho_d * np.tan(np.radians(deg))

    def px_to_deg(self, px):
        return np.degrees(np.arctan(np.asarray(px, dtype=np.float64) / self.rho_d))

    def with_edges(self, band_edges) -> FoveationConfig:
        return replace(self, band_edges=tuple(band_edges), theta_i=band_edges[0])


def foveal_radius(cfg: FoveationConfig | None = None, *, rho_d: float | None = None,
                  theta_i: float | None = None, delta_theta: float | None = None) -> float:
    """Foveal disk radius ``rho_d * tan(theta_i + delta_theta)`` in pixels.

    Keyword arguments override the corresponding ``cfg`` fields, which also
    allows the degenerate ``theta_i = 0`` that a config rejects.
    """
    rho_d = cfg.rho_d if rho_d is None else rho_d
    theta_i = cfg.theta_i if theta_i is None else theta_i
    delta_theta = cfg.delta_theta if delta_theta is None else delta_theta
    theta = theta_i + delta_theta
    if not 0 <= theta < 90:
        raise DomainError(f"theta_i + delta_theta = {theta} must lie in [0, 90)")
    return rho_d * math.tan(math.radians(theta))


@dataclass
class FoveationProfile:
    """Offline-profiled radii per exit (index 0 is exit 1).

    ``r_f[i]`` is the radius rendered at full level as soon as exit ``i``
    arrives; ``r_max[i]`` caps speculative growth around that exit.
    """

    expected_dist_deg: np.ndarray
    expected_dist_px: np.ndarray
    r_f: np.ndarray
    r_max: np.ndarray
    r_fN: float
    samples: int = 0
    seed: int = 0

    @property
    def n_exits(self) -> int:
        return len(self.r_f)

    def check(self) -> None:
        """Raise ``ConfigurationError`` if an invariant is violated."""
        N = self.n_exits
        if np.any(np.diff(self.r_f) < 0):
            raise ConfigurationError("r_f must be non-decreasing in the exit index")
        if self.r_f[N - 1] != self.r_fN:
            raise ConfigurationError("r_f of the last exit must equal the foveal radius")
        if np.any(self.r_max < self.r_fN):
            raise ConfigurationError("r_max must be at least the foveal radius")
        bound = np.maximum(0.0, self.r_fN - self.expected_dist_px)
        if np.any(self.r_f > bound):
            raise ConfigurationError("r_f exceeds max(0, r_fN - E[dist])")

    def to_dict(self) -> dict:
        return {
            "n_exits": self.n_exits,
            "r_fN": self.r_fN,
            "samples": self.samples,
            "seed": self.seed,
            "expected_dist_deg": [float(v) for v in self.expected_dist_deg],
            "expected_dist_px": [float(v) for v in self.expected_dist_px],
            "r_f": [float(v) for v in self.r_f],
            "r_max": [float(v) for v in self.r_max],
        }

    @classmethod
    def from_dict(cls, d: dict) -> FoveationProfile:
        prof = cls(
            expected_dist_deg=np.array(d["expected_dist_deg"], dtype=np.float64),
            expected_dist_px=np.array(d["expected_dist_px"], dtype=np.float64),
            r_f=np.array(d["r_f"], dtype=np.float64),
            r_max=np.array(d["r_max"], dtype=np.float64),
            r_fN=float(d["r_fN"]),
            samples=int(d.get("samples", 0)),
            seed=int(d.get("seed", 0)),
        )
        prof.check()
        return prof

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))

    @classmethod
    def load(cls, path) -> FoveationProfile:
        return cls.from_dict(json.loads(Path(path).read_text()))


def profile_from_distances(expected_px, expected_deg, cfg: FoveationConfig,
                           samples: int = 0, seed: int = 0) -> FoveationProfile:
    """Fill radii from known expected distances (last entry must be 0)."""
    e_px = np.asarray(expected_px, dtype=np.float64)
    r_fN = foveal_radius(cfg)
    raw = np.maximum(0.0, r_fN - e_px)
    raw[-1] = r_fN
    # suffix minimum keeps r_f non-decreasing without exceeding any bound
    r_f = np.minimum.accumulate(raw[::-1])[::-1]
    r_max = r_fN + e_px
    prof = FoveationProfile(np.asarray(expected_deg, dtype=np.float64), e_px,
                            r_f, r_max, r_fN, samples, seed)
    prof.check()
    return prof


def profile_exits(error_models, samples: int = 100_000, seed: int = 0,
                  cfg: FoveationConfig | None = None, correlation: float = 0.0
                  ) -> FoveationProfile:
    """Estimate ``E[dist(u_i, u_N)]`` per exit by Monte Carlo and derive radii.

    Parameters
    ----------
    error_models : array_like, shape (N, 2)
        Per-exit error standard deviations ``(sigma_x, sigma_y)`` in degrees.
    samples : int
        Monte Carlo draws per exit.
    seed : int
    cfg : FoveationConfig
    correlation : float
        Per-axis correlation between an exit's error and the final exit's
        error; 0 treats them as independent (the largest expected distance
        for equal marginals).

    Returns
    -------
    FoveationProfile
    """
    if cfg is None:
        raise ConfigurationError("profile_exits needs a FoveationConfig")
    sig = np.asarray(getattr(error_models, "sigma", error_models), dtype=np.float64)
    if sig.ndim != 2 or sig.shape[1] != 2 or len(sig) < 2:
        raise ConfigurationError("error_models must hold (sigma_x, sigma_y) for N >= 2 exits")
    if np.any(sig < 0) or not np.all(np.isfinite(sig)):
        raise ConfigurationError("error standard deviations must be finite and non-negative")
    if not -1.0 <= correlation <= 1.0:
        raise ConfigurationError("correlation must lie in [-1, 1]")
    N = len(sig)
    rng = np.random.default_rng(seed)
    zN = rng.standard_normal((samples, 2))
    eN = zN * sig[-1]
    e_deg = np.zeros(N)
    e_px = np.zeros(N)
    for i in range(N - 1):
        z = rng.standard_normal((samples, 2))
        ei = (correlation * zN + math.sqrt(1.0 - correlation ** 2) * z) * sig[i]
        d = np.hypot(*(ei - eN).T)
        e_deg[i] = d.mean()
        e_px[i] = cfg.deg_to_px(d).mean()
    return profile_from_distances(e_px, e_deg, cfg, samples, seed)


# ---------------------------------------------------------------------------
# tile classification

def tile_centers(cam_or_size) -> tuple[np.ndarray, np.ndarray]:
    """Centers of the (possibly clipped) tiles, each of shape (tiles_y, tiles_x)."""
    if isinstance(cam_or_size, Camera):
        W, H = cam_or_size.width, cam_or_size.height
    else:
        W, H = cam_or_size
    x0 = np.arange(0, W, TILE)
    y0 = np.arange(0, H, TILE)
    cx = (x0 + np.minimum(x0 + TILE, W)) / 2.0
    cy = (y0 + np.minimum(y0 + TILE, H)) / 2.0
    return np.meshgrid(cx, cy)


def band_level(ecc_deg, cfg: FoveationConfig):
    """Refinement level of each eccentricity by band (edges belong to the inner band)."""
    ecc = np.asarray(ecc_deg, dtype=np.float64)
    band = np.searchsorted(np.asarray(cfg.band_edges), ecc, side="left")
    return np.asarray(cfg.levels)[band]


def level_requests(gaze, inner_r: float, outer_r: float, cfg: FoveationConfig,
                   cam) -> np.ndarray:
    """Absolute per-tile level requests for a gaze point.

    Tiles whose center lies within ``outer_r`` pixels of ``gaze`` get the
    foveal level.  Every other tile gets the level of its eccentricity band,
    except that the foveal level is never granted outside the disk: such
    tiles drop to the near-center level.  ``inner_r`` is the radius already
    rendered around this gaze and only matters for logging; since requests
    are absolute, re-requesting covered tiles costs nothing.

    Returns
    -------
    ndarray of int, shape (tiles_y, tiles_x)
    """
    if inner_r > outer_r:
        raise ValueError("inner_r must not exceed outer_r")
    X, Y = tile_centers(cam)
    dist = np.hypot(X - gaze[0], Y - gaze[1])
    ecc = np.degrees(np.arctan(dist / cfg.rho_d))
    lv = band_level(ecc, cfg)
    lv = np.minimum(lv, cfg.levels[1])
    return np.where(dist <= outer_r, cfg.levels[0], lv).astype(np.int64)


def disk_outside_fraction(u_i, r_i: float, u_N, r_N: float) -> float:
    """Fraction of disk ``(u_i, r_i)`` lying outside disk ``(u_N, r_N)``.

    This is the share of early full-level rendering that the final foveal
    region does not use.
    """
    if r_i <= 0:
        return 0.0
    d = math.hypot(u_i[0] - u_N[0], u_i[1] - u_N[1])
    if d >= r_i + r_N:
        return 1.0
    if d <= r_N - r_i:
        return 0.0
    if d <= r_i - r_N:
        return 1.0 - (r_N / r_i) ** 2
    # lens-shaped overlap of two partially intersecting circles
    a1 = r_i * r_i * math.acos(min(1.0, (d * d + r_i * r_i - r_N * r_N) / (2 * d * r_i)))
    a2 = r_N * r_N * math.acos(min(1.0, (d * d + r_N * r_N - r_i * r_i) / (2 * d * r_N)))
    k = (-d + r_i + r_N) * (d + r_i - r_N) * (d - r_i + r_N) * (d + r_i + r_N)
    inter = a1 + a2 - 0.5 * math.sqrt(max(k, 0.0))
    return min(1.0, max(0.0, 1.0 - inter / (math.pi * r_i * r_i)))
