"""
Incremental adaptive-resolution tile rasterization.

Every tile is split into 2x2 pixel blocks.  Refinement level ``L`` means the
pattern slots ``1..L`` of every block have been composited; the remaining
pixels copy slot 1 of their block.  Slots are visited in the order

    level 1 -> (0, 0)  top-left
    level 2 -> (1, 1)  bottom-right
    level 3 -> (1, 0)  top-right
    level 4 -> (0, 1)  bottom-left

(offsets are ``(dx, dy)``).  Each slot is composited as an independent batch
of identical shape no matter how the upgrade was reached, which is what makes
multi-round rendering bit-identical to a one-shot render.
"""
from __future__ import annotations

import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .splat import ALPHA_MIN, TILE, TileWorkset

SLOT_OFFSETS = {1: (0, 0), 2: (1, 1), 3: (1, 0), 4: (0, 1)}
MAX_LEVEL = 4
ALPHA_MAX = 0.99
T_MIN = 1e-4


def composite_pixels(px, py, means, conics, colors, opacities, background) -> np.ndarray:
    """Front-to-back alpha compositing of pre-sorted splats at pixel centers.

    Parameters
    ----------
    px, py : ndarray, shape (P,)
        Pixel-center coordinates.
    means, conics, colors, opacities : ndarray
        Sorted splat attributes, shapes (K, 2), (K, 3), (K, 3), (K,).
    background : array_like, shape (3,)

    Returns
    -------
    ndarray, shape (P, 3)
    """
    bg = np.asarray(background, dtype=np.float64)
    P = len(px)
    if len(opacities) == 0:
        return np.broadcast_to(bg, (P, 3)).copy()
    dx = px[None, :] - means[:, 0:1]
    dy = py[None, :] - means[:, 1:2]
    a, b, c = conics[:, 0:1], conics[:, 1:2], conics[:, 2:3]
    power = -0.5 * (a * dx * dx + c * dy * dy) - b * dx * dy
    alpha = np.minimum(ALPHA_MAX, opacities[:, None] * np.exp(power))
    alpha[alpha < ALPHA_MIN] = 0.0
    t_after = np.cumprod(1.0 - alpha, axis=0)
    t_before = np.empty_like(t_after)
    t_before[0] = 1.0
    t_before[1:] = t_after[:-1]
    # a splat contributes while transmittance before it is still >= T_MIN
    live = t_before >= T_MIN
    weight = np.where(live, t_before * alpha, 0.0)
    rgb = (weight[:, :, None] * colors[:, None, :]).sum(axis=0)
    t_final = np.where(live, t_after, np.inf).min(axis=0)
    return rgb + t_final[:, None] * bg


def slot_pixels(ws_or_rect, level: int, tile=None):
    """Integer pixel coordinates of pattern slot ``level`` inside a tile."""
    if tile is not None:
        x0, y0, x1, y1 = ws_or_rect.tile_rect(tile)
    else:
        x0, y0, x1, y1 = ws_or_rect
    dx, dy = SLOT_OFFSETS[level]
    xs = np.arange(x0 + dx, x1, 2)
    ys = np.arange(y0 + dy, y1, 2)
    X, Y = np.meshgrid(xs, ys)
    return X.ravel(), Y.ravel()


def tile_slot_size(ws: TileWorkset, tile) -> int:
    """Pixels per pattern slot in a tile (256 for full 32x32 tiles)."""
    x0, y0, x1, y1 = ws.tile_rect(tile)
    return ((x1 - x0) // 2) * ((y1 - y0) // 2)


def _tile_attrs(ws: TileWorkset, tile):
    lst = ws.tile_list(tile)
    s = ws.splats
    return s.mean2d[lst], s.conic[lst], s.color[lst], s.opacity[lst]


@dataclass
class RenderRound:
    round_index: int
    gaze_used: tuple[float, float] | None
    tiles_upgraded: int
    pixels_composited: int
    elapsed: float
    start: float = 0.0
    kind: str = "region"
    exit_index: int | None = None
    inner_r: float | None = None
    outer_r: float | None = None
    write_count: int | None = None

    def to_dict(self) -> dict:
        return {
            "round_index": self.round_index,
            "kind": self.kind,
            "start_ms": self.start,
            "elapsed_ms": self.elapsed,
            "exit_index": self.exit_index,
            "gaze_used": None if self.gaze_used is None else [float(v) for v in self.gaze_used],
            "inner_r": self.inner_r,
            "outer_r": self.outer_r,
            "write_count": self.write_count,
            "tiles_upgraded": self.tiles_upgraded,
            "pixels_composited": self.pixels_composited,
        }


@dataclass(eq=False)
class FrameState:
    """Framebuffer plus per-tile refinement state for one frame."""

    color: np.ndarray
    level_map: np.ndarray
    background: np.ndarray = field(default_factory=lambda: np.zeros(3))
    round_log: list = field(default_factory=list)

    @classmethod
    def blank(cls, width: int, height: int, background=(0.0, 0.0, 0.0)) -> FrameState:
        tiles_x, tiles_y = -(-width // TILE), -(-height // TILE)
        bg = np.asarray(background, dtype=np.float64)
        color = np.empty((height, width, 3))
        color[...] = bg
        return cls(
            color=color,
            level_map=np.zeros((tiles_y, tiles_x), dtype=np.int64),
            background=bg,
        )

    @classmethod
    def for_workset(cls, ws: TileWorkset, background=(0.0, 0.0, 0.0)) -> FrameState:
        return cls.blank(ws.camera.width, ws.camera.height, background)

    @property
    def size(self) -> tuple[int, int]:
        return self.color.shape[1], self.color.shape[0]

    def pixels_composited(self) -> int:
        return sum(r.pixels_composited for r in self.round_log)


def composite_tile(ws: TileWorkset, tile, from_level: int, to_level: int,
                   frame: FrameState, shade: bool = True) -> int:
    """Composite pattern slots ``from_level+1 .. to_level`` of one tile.

    Updates ``frame`` in place and returns the number of pixels composited.
    With ``shade=False`` only the level bookkeeping is done.
    """
    if not 0 <= from_level < to_level <= MAX_LEVEL:
        raise ValueError(f"invalid upgrade {from_level} -> {to_level}")
    t = ws.tile_id(tile)
    attrs = _tile_attrs(ws, t) if shade else None
    count = 0
    for level in range(from_level + 1, to_level + 1):
        xs, ys = slot_pixels(ws, level, t)
        if shade:
            frame.color[ys, xs] = composite_pixels(
                xs + 0.5, ys + 0.5, *attrs, frame.background
            )
        count += len(xs)
    frame.level_map.flat[t] = to_level
    return count


def fill_holes(frame: FrameState, tile) -> None:
    """Copy slot 1 of every 2x2 block into its not-yet-rendered slots."""
    tiles_x = frame.level_map.shape[1]
    if isinstance(tile, (tuple, list)):
        tx, ty = tile
    else:
        ty, tx = divmod(int(tile), tiles_x)
    level = int(frame.level_map[ty, tx])
    if level < 1:
        raise ValueError("fill_holes needs a tile rendered at level >= 1")
    if level == MAX_LEVEL:
        return
    W, H = frame.size
    x0, y0 = tx * TILE, ty * TILE
    x1, y1 = min(x0 + TILE, W), min(y0 + TILE, H)
    block = frame.color[y0:y1, x0:x1]
    base = block[0::2, 0::2]
    for slot in range(level + 1, MAX_LEVEL + 1):
        dx, dy = SLOT_OFFSETS[slot]
        block[dy::2, dx::2] = base


def _as_request(level_request, shape) -> np.ndarray:
    if isinstance(level_request, dict):
        req = np.zeros(shape, dtype=np.int64)
        for (tx, ty), lvl in level_request.items():
            req[ty, tx] = lvl
        return req
    req = np.asarray(level_request, dtype=np.int64)
    if req.shape != shape:
        raise ValueError(f"request map has shape {req.shape}, expected {shape}")
    return req


def render_region(ws: TileWorkset, frame: FrameState, level_request, *,
                  shade: bool = True, workers: int | None = None,
                  **round_fields) -> RenderRound:
    """Upgrade every tile whose requested level exceeds its achieved level.

    ``level_request`` is either an int array of shape ``(tiles_y, tiles_x)``
    (0 meaning "no request") or a ``{(tx, ty): level}`` dict.  Only the
    missing slots are composited; the round is appended to
    ``frame.round_log`` and returned.  ``round_fields`` are copied onto the
    :class:`RenderRound` (``gaze_used``, ``kind``, ``exit_index`` ...).
    """
    start = time.perf_counter()
    req = _as_request(level_request, frame.level_map.shape)
    if req.max(initial=0) > MAX_LEVEL or req.min(initial=0) < 0:
        raise ValueError("requested levels must lie in 0..4")
    todo = np.flatnonzero(req.ravel() > frame.level_map.ravel())
    old = frame.level_map.ravel()[todo].copy()
    new = req.ravel()[todo]

    def work(i):
        t = int(todo[i])
        n = composite_tile(ws, t, int(old[i]), int(new[i]), frame, shade=shade)
        if shade:
            fill_holes(frame, t)
        return n

    if not shade:
        # bookkeeping only; every slot of a tile holds the same number of pixels
        W, H = frame.size
        ty, tx = np.divmod(todo, frame.level_map.shape[1])
        slot = (np.minimum(TILE, W - tx * TILE) // 2) * (np.minimum(TILE, H - ty * TILE) // 2)
        frame.level_map.flat[todo] = new
        counts = [int(np.sum(slot * (new - old)))]
    elif workers and workers > 1 and len(todo) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            counts = list(pool.map(work, range(len(todo))))
    else:
        counts = [work(i) for i in range(len(todo))]

    rnd = RenderRound(
        round_index=len(frame.round_log) + 1,
        gaze_used=round_fields.pop("gaze_used", None),
        tiles_upgraded=len(todo),
        pixels_composited=int(sum(counts)),
        elapsed=(time.perf_counter() - start) * 1e3,
        **round_fields,
    )
    frame.round_log.append(rnd)
    return rnd


def render_full(ws: TileWorkset, background=(0.0, 0.0, 0.0)) -> np.ndarray:
    """Plain full-resolution rasterizer: every pixel of a tile in one batch."""
    W, H = ws.camera.width, ws.camera.height
    img = np.empty((H, W, 3))
    for t in range(ws.n_tiles):
        x0, y0, x1, y1 = ws.tile_rect(t)
        X, Y = np.meshgrid(np.arange(x0, x1), np.arange(y0, y1))
        xs, ys = X.ravel(), Y.ravel()
        img[ys, xs] = composite_pixels(xs + 0.5, ys + 0.5, *_tile_attrs(ws, t), background)
    return img


def write_ppm(path, image: np.ndarray) -> None:
    """Binary P6 PPM, 8 bits per channel, values clipped to [0, 1], no gamma."""
    img = np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0)
    data = np.round(img * 255.0).astype(np.uint8)
    H, W = data.shape[:2]
    with open(path, "wb") as fh:
        fh.write(f"P6\n{W} {H}\n255\n".encode("ascii"))
        fh.write(data.tobytes())


def read_ppm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        raw = fh.read()
    m = re.match(rb"P6\s+(\d+)\s+(\d+)\s+(\d+)\s", raw)
    if m is None:
        raise ValueError("not a binary PPM")
    W, H, maxval = (int(g) for g in m.groups())
    body = raw[m.end(): m.end() + W * H * 3]
    data = np.frombuffer(body, dtype=np.uint8).reshape(H, W, 3)
    return data.astype(np.float64) / maxval


def dump_level_map(frame: FrameState) -> str:
    return "\n".join(" ".join(str(int(v)) for v in row) for row in frame.level_map) + "\n"
