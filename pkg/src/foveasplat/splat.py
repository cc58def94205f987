"""
Projection of 3D Gaussians to screen space, tile binning and depth sorting.

The output of :func:`build_workset` is computed once per frame and reused by
every later rendering round, so nothing here depends on gaze.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .scene import Camera, Scene, quat_to_rotmat, sh_to_color

TILE = 32
NEAR_PLANE = 0.2
COV_DILATION = 0.3
ALPHA_MIN = 1.0 / 255.0


@dataclass(frozen=True)
class Splat2D:
    mean2d: tuple[float, float]
    conic: tuple[float, float, float]
    depth: float
    color: tuple[float, float, float]
    opacity: float
    radius_px: int


@dataclass(eq=False)
class Splats:
    """Screen-space splats stored column-wise.

    ``conic`` holds ``(a, b, c)`` of the inverse covariance ``[[a, b], [b, c]]``.
    ``source`` maps each splat back to its Gaussian index in the scene.
    """

    mean2d: np.ndarray
    conic: np.ndarray
    cov2d: np.ndarray
    depth: np.ndarray
    color: np.ndarray
    opacity: np.ndarray
    radius: np.ndarray
    source: np.ndarray
    dropped: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.depth)

    def __getitem__(self, i: int) -> Splat2D:
        return Splat2D(
            tuple(map(float, self.mean2d[i])),
            tuple(map(float, self.conic[i])),
            float(self.depth[i]),
            tuple(map(float, self.color[i])),
            float(self.opacity[i]),
            int(self.radius[i]),
        )

    @classmethod
    def empty(cls) -> Splats:
        z = np.zeros(0)
        return cls(np.zeros((0, 2)), np.zeros((0, 3)), np.zeros((0, 3)), z,
                   np.zeros((0, 3)), z, np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64))

    @classmethod
    def from_list(cls, splats) -> Splats:
        """Pack :class:`Splat2D` records; handy for hand-built test cases."""
        splats = list(splats)
        conic = np.array([s.conic for s in splats], dtype=np.float64).reshape(-1, 3)
        a, b, c = conic.T
        det = a * c - b * b
        cov = np.stack([c / det, -b / det, a / det], axis=1) if len(splats) else conic
        return cls(
            mean2d=np.array([s.mean2d for s in splats], dtype=np.float64).reshape(-1, 2),
            conic=conic,
            cov2d=cov,
            depth=np.array([s.depth for s in splats], dtype=np.float64),
            color=np.array([s.color for s in splats], dtype=np.float64).reshape(-1, 3),
            opacity=np.array([s.opacity for s in splats], dtype=np.float64),
            radius=np.array([s.radius_px for s in splats], dtype=np.int64),
            source=np.arange(len(splats)),
        )


def extent_sigmas(opacity: np.ndarray) -> np.ndarray:
    """Screen extent in standard deviations along the major axis.

    At least 3; widened for opaque splats so the square always holds every
    pixel where ``opacity * gaussian >= 1/255``.
    """
    opacity = np.asarray(opacity, dtype=np.float64)
    k2 = 2.0 * np.log(np.maximum(opacity / ALPHA_MIN, 1.0))
    return np.sqrt(np.maximum(k2, 9.0))


def project(scene: Scene, cam: Camera, near: float = NEAR_PLANE) -> Splats:
    """Project every Gaussian of ``scene`` into ``cam``.

    Gaussians behind ``near``, with a non positive-definite screen covariance,
    or whose extent misses the image are dropped; ``Splats.dropped`` counts
    them per reason.
    """
    R = cam.rotation
    t = cam.translation
    p_cam = scene.means @ R.T + t
    x, y, z = p_cam[:, 0], p_cam[:, 1], p_cam[:, 2]
    dropped = {"near": 0, "degenerate": 0, "offscreen": 0}

    front = z > near
    dropped["near"] = int((~front).sum())
    idx = np.flatnonzero(front)
    x, y, z = x[idx], y[idx], z[idx]

    Rq = quat_to_rotmat(scene.rotations[idx])
    M = Rq * scene.scales[idx][:, None, :]
    cov3 = M @ np.swapaxes(M, 1, 2)

    J = np.zeros((len(idx), 2, 3))
    J[:, 0, 0] = cam.fx / z
    J[:, 0, 2] = -cam.fx * x / (z * z)
    J[:, 1, 1] = cam.fy / z
    J[:, 1, 2] = -cam.fy * y / (z * z)
    T = J @ R
    cov2 = T @ cov3 @ np.swapaxes(T, 1, 2)
    a = cov2[:, 0, 0] + COV_DILATION
    b = cov2[:, 0, 1]
    c = cov2[:, 1, 1] + COV_DILATION
    det = a * c - b * b

    ok = np.isfinite(det) & (det > 0) & (a > 0)
    dropped["degenerate"] = int((~ok).sum())
    keep = np.flatnonzero(ok)
    idx, x, y, z, a, b, c, det = (arr[keep] for arr in (idx, x, y, z, a, b, c, det))

    mid = 0.5 * (a + c)
    lam_max = mid + np.sqrt(np.maximum(mid * mid - det, 0.0))
    opacity = scene.opacities[idx]
    radius = np.ceil(extent_sigmas(opacity) * np.sqrt(lam_max)).astype(np.int64)
    mx = cam.fx * x / z + cam.cx
    my = cam.fy * y / z + cam.cy

    onscreen = (
        (mx + radius >= 0) & (mx - radius < cam.width)
        & (my + radius >= 0) & (my - radius < cam.height)
    )
    dropped["offscreen"] = int((~onscreen).sum())
    keep = np.flatnonzero(onscreen)
    idx, mx, my, z, a, b, c, det, radius, opacity = (
        arr[keep] for arr in (idx, mx, my, z, a, b, c, det, radius, opacity)
    )

    dirs = scene.means[idx] - cam.center
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    color = np.clip(sh_to_color(scene.sh[idx], dirs), 0.0, 1.0)

    return Splats(
        mean2d=np.stack([mx, my], axis=1),
        conic=np.stack([c / det, -b / det, a / det], axis=1),
        cov2d=np.stack([a, b, c], axis=1),
        depth=z,
        color=color,
        opacity=opacity,
        radius=radius,
        source=idx,
        dropped=dropped,
    )


@dataclass(eq=False)
class TileWorkset:
    """Per-tile depth-sorted splat lists, buffered across rendering rounds.

    Tile ``(tx, ty)`` has flat id ``ty * tiles_x + tx`` and its sorted splat
    indices are ``order[offsets[id]:offsets[id + 1]]``.
    """

    splats: Splats
    camera: Camera
    tiles_x: int
    tiles_y: int
    offsets: np.ndarray
    order: np.ndarray
    build_time: float = 0.0

    @property
    def tile_grid(self) -> tuple[int, int]:
        return self.tiles_x, self.tiles_y

    @property
    def n_tiles(self) -> int:
        return self.tiles_x * self.tiles_y

    def tile_id(self, tile) -> int:
        if isinstance(tile, (tuple, list)):
            tx, ty = tile
            return int(ty) * self.tiles_x + int(tx)
        return int(tile)

    def tile_list(self, tile) -> np.ndarray:
        t = self.tile_id(tile)
        return self.order[self.offsets[t]:self.offsets[t + 1]]

    def tile_rect(self, tile) -> tuple[int, int, int, int]:
        """Pixel rectangle ``(x0, y0, x1, y1)`` of a tile, clipped to the image."""
        t = self.tile_id(tile)
        tx, ty = t % self.tiles_x, t // self.tiles_x
        x0, y0 = tx * TILE, ty * TILE
        return x0, y0, min(x0 + TILE, self.camera.width), min(y0 + TILE, self.camera.height)

    def counts(self) -> np.ndarray:
        """Splats per tile, shape (tiles_y, tiles_x)."""
        return np.diff(self.offsets).reshape(self.tiles_y, self.tiles_x)


def tile_grid_for(width: int, height: int) -> tuple[int, int]:
    return -(-width // TILE), -(-height // TILE)


def tile_ranges(splats: Splats, width: int, height: int):
    """Inclusive tile index ranges covered by each splat's bounding square."""
    tiles_x, tiles_y = tile_grid_for(width, height)
    r = splats.radius.astype(np.float64)
    mx, my = splats.mean2d[:, 0], splats.mean2d[:, 1]
    x0 = np.clip(np.floor((mx - r) / TILE), 0, tiles_x - 1).astype(np.int64)
    x1 = np.clip(np.floor((mx + r) / TILE), 0, tiles_x - 1).astype(np.int64)
    y0 = np.clip(np.floor((my - r) / TILE), 0, tiles_y - 1).astype(np.int64)
    y1 = np.clip(np.floor((my + r) / TILE), 0, tiles_y - 1).astype(np.int64)
    visible = (mx + r >= 0) & (mx - r < width) & (my + r >= 0) & (my - r < height)
    return x0, x1, y0, y1, visible


def build_workset(splats: Splats, cam: Camera) -> TileWorkset:
    """Bin splats into 32x32 tiles and sort each tile by (depth, index)."""
    start = time.perf_counter()
    tiles_x, tiles_y = tile_grid_for(cam.width, cam.height)
    x0, x1, y0, y1, visible = tile_ranges(splats, cam.width, cam.height)
    nx = np.where(visible, x1 - x0 + 1, 0)
    ny = np.where(visible, y1 - y0 + 1, 0)
    per = nx * ny
    total = int(per.sum())

    sid = np.repeat(np.arange(len(splats)), per)
    # position of each pair within its splat's rectangle
    first = np.repeat(np.cumsum(per) - per, per)
    local = np.arange(total) - first
    w = nx[sid]
    tx = x0[sid] + local % np.maximum(w, 1)
    ty = y0[sid] + local // np.maximum(w, 1)
    tid = ty * tiles_x + tx

    perm = np.lexsort((sid, splats.depth[sid], tid))
    tid = tid[perm]
    order = sid[perm]
    offsets = np.searchsorted(tid, np.arange(tiles_x * tiles_y + 1), side="left")
    ws = TileWorkset(splats, cam, tiles_x, tiles_y, offsets.astype(np.int64), order)
    ws.build_time = (time.perf_counter() - start) * 1e3
    return ws


def dump_workset(ws: TileWorkset) -> str:
    """Text dump: one line per non-empty tile, ``tx ty: idx:depth ...``."""
    lines = [f"# workset {ws.tiles_x}x{ws.tiles_y} tiles, {len(ws.splats)} splats"]
    for t in range(ws.n_tiles):
        lst = ws.tile_list(t)
        if len(lst) == 0:
            continue
        pairs = " ".join(f"{int(i)}:{float(ws.splats.depth[i])!r}" for i in lst)
        lines.append(f"{t % ws.tiles_x} {t // ws.tiles_x}: {pairs}")
    return "\n".join(lines) + "\n"


def parse_workset_dump(text: str) -> dict[tuple[int, int], list[tuple[int, float]]]:
    out = {}
    for line in text.splitlines():
        if not line or line.startswith("#"):
            continue
        head, _, body = line.partition(":")
        tx, ty = map(int, head.split())
        out[(tx, ty)] = [(int(p.split(":")[0]), float(p.split(":")[1])) for p in body.split()]
    return out
