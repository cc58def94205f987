"""
Simulated early-exit gaze tracking.

An :class:`ExitModel` lists, per exit head, the angular error spread and the
time at which its prediction is ready.  Predictions are the true gaze point
plus independent zero-mean normal errors drawn in degrees and mapped to
pixels with ``rho_d * tan(e)`` per axis.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, FormatError

SIGMA_SLACK = 1.05


def preset_names() -> list[str]:
    files = resources.files("foveasplat").joinpath("presets").iterdir()
    return sorted(p.name[:-5] for p in files if p.name.endswith(".json"))


@dataclass(eq=False)
class ExitModel:
    """Per-exit error spread (degrees) and availability times (ms).

    ``cumulative_ms[n]`` is the time from frame start until exit ``n + 1``
    is ready and already includes ``embed_ms``.
    """

    sigma: np.ndarray
    latency_ms: np.ndarray
    cumulative_ms: np.ndarray
    embed_ms: float = 0.0
    name: str = "custom"

    def __post_init__(self):
        self.sigma = np.asarray(self.sigma, dtype=np.float64).reshape(-1, 2)
        self.latency_ms = np.asarray(self.latency_ms, dtype=np.float64)
        self.cumulative_ms = np.asarray(self.cumulative_ms, dtype=np.float64)
        N = len(self.sigma)
        if N < 1:
            raise ConfigurationError("an exit model needs at least one exit")
        if self.latency_ms.shape != (N,) or self.cumulative_ms.shape != (N,):
            raise ConfigurationError("sigma, latency_ms and cumulative_ms lengths differ")
        if not np.all(np.isfinite(self.sigma)) or np.any(self.sigma < 0):
            raise ConfigurationError("sigma must be finite and non-negative")
        if np.any(self.sigma[1:] > SIGMA_SLACK * self.sigma[:-1] + 1e-12):
            raise ConfigurationError("sigma must not grow with the exit index (5% slack)")
        if np.any(self.latency_ms < 0) or self.embed_ms < 0:
            raise ConfigurationError("latencies must be non-negative")
        if self.cumulative_ms[0] <= 0 or np.any(np.diff(self.cumulative_ms) <= 0):
            raise ConfigurationError("cumulative_ms must be positive and strictly increasing")

    @property
    def n_exits(self) -> int:
        return len(self.sigma)

    @property
    def t_d(self) -> float:
        """Time until the last exit is ready."""
        return float(self.cumulative_ms[-1])

    @classmethod
    def from_dict(cls, d: dict) -> ExitModel:
        try:
            return cls(
                sigma=d["sigma"],
                latency_ms=d["latency_ms"],
                cumulative_ms=d["cumulative_ms"],
                embed_ms=float(d.get("embed_ms", 0.0)),
                name=str(d.get("name", "custom")),
            )
        except KeyError as exc:
            raise FormatError(f"exit model is missing field {exc.args[0]!r}") from None

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "sigma": self.sigma.tolist(),
            "latency_ms": self.latency_ms.tolist(),
            "embed_ms": self.embed_ms,
            "cumulative_ms": self.cumulative_ms.tolist(),
        }

    @classmethod
    def preset(cls, name: str = "unpruned") -> ExitModel:
        path = resources.files("foveasplat").joinpath("presets").joinpath(f"{name}.json")
        if not path.is_file():
            raise ConfigurationError(f"unknown exit model preset {name!r}; have {preset_names()}")
        return cls.from_dict(json.loads(path.read_text()))

    @classmethod
    def from_file(cls, path) -> ExitModel:
        try:
            d = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}: {exc}") from None
        return cls.from_dict(d)

    @classmethod
    def load(cls, preset_or_path: str) -> ExitModel:
        """Resolve a preset name or a JSON file path."""
        if Path(preset_or_path).is_file():
            return cls.from_file(preset_or_path)
        return cls.preset(preset_or_path)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n")

    def scaled(self, factor: float) -> ExitModel:
        """Same errors, every latency multiplied by ``factor``."""
        if factor <= 0:
            raise ConfigurationError("latency scale factor must be positive")
        return ExitModel(self.sigma, self.latency_ms * factor, self.cumulative_ms * factor,
                         self.embed_ms * factor, f"{self.name}x{factor:g}")

    def noiseless(self) -> ExitModel:
        return ExitModel(np.zeros_like(self.sigma), self.latency_ms, self.cumulative_ms,
                         self.embed_ms, f"{self.name}-noiseless")


@dataclass(frozen=True)
class GazeTruth:
    point: tuple[float, float]
    source: str = "model"

    def check(self, width: int, height: int) -> None:
        x, y = self.point
        if not (0 <= x <= width and 0 <= y <= height):
            raise ConfigurationError(f"gaze {self.point} lies outside the {width}x{height} image")


@dataclass(frozen=True)
class GazePrediction:
    exit_index: int
    point: tuple[float, float]
    available_at: float
    clamped: bool = False

    def to_dict(self) -> dict:
        return {
            "exit_index": self.exit_index,
            "point": [float(v) for v in self.point],
            "available_at_ms": self.available_at,
            "clamped": self.clamped,
        }


def sample_exit_errors(model: ExitModel, rng: np.random.Generator, n_frames: int | None = None):
    """Angular errors in degrees, shape (N, 2) or (n_frames, N, 2)."""
    shape = (model.n_exits, 2) if n_frames is None else (n_frames, model.n_exits, 2)
    return rng.standard_normal(shape) * model.sigma


def simulate_exits(truth: GazeTruth, model: ExitModel, seed, rho_d: float,
                   size: tuple[int, int]) -> list[GazePrediction]:
    """Predictions ``u_1 .. u_N`` for one frame.

    Parameters
    ----------
    truth : GazeTruth
    model : ExitModel
    seed : int or numpy Generator
    rho_d : float
        Pixels per unit tangent, used to turn angular errors into offsets.
    size : (width, height)
        Predictions outside the image are clamped onto it and flagged.
    """
    W, H = size
    truth.check(W, H)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    err = sample_exit_errors(model, rng)
    raw = np.asarray(truth.point, dtype=np.float64) + rho_d * np.tan(np.radians(err))
    pts = np.clip(raw, 0.0, [W, H])
    out = []
    for n in range(model.n_exits):
        out.append(GazePrediction(
            exit_index=n + 1,
            point=(float(pts[n, 0]), float(pts[n, 1])),
            available_at=float(model.cumulative_ms[n]),
            clamped=bool(np.any(pts[n] != raw[n])),
        ))
    return out


# ---------------------------------------------------------------------------
# traces

TRACE_COLUMNS = ("t_ms", "x_px", "y_px")


@dataclass(eq=False)
class GazeTrace:
    """Recorded gaze samples, replayed with sample-and-hold."""

    t_ms: np.ndarray
    points: np.ndarray

    def __len__(self) -> int:
        return len(self.t_ms)

    def truth_at(self, t: float) -> GazeTruth:
        """Latest sample at or before ``t`` (the first one before the trace starts)."""
        i = max(int(np.searchsorted(self.t_ms, t, side="right")) - 1, 0)
        return GazeTruth((float(self.points[i, 0]), float(self.points[i, 1])), "trace")

    def frame_truths(self, n_frames: int, frame_period_ms: float) -> list[GazeTruth]:
        return [self.truth_at(k * frame_period_ms) for k in range(n_frames)]

    def rows(self) -> list[tuple[float, GazeTruth]]:
        return [(float(t), GazeTruth((float(x), float(y)), "trace"))
                for t, (x, y) in zip(self.t_ms, self.points)]


def read_trace(path) -> GazeTrace:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise FormatError(f"{path}: empty trace")
        missing = [c for c in TRACE_COLUMNS if c not in reader.fieldnames]
        if missing:
            raise FormatError(f"{path}: missing columns {missing}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            try:
                rows.append(tuple(float(row[c]) for c in TRACE_COLUMNS))
            except (TypeError, ValueError):
                raise FormatError(f"{path}:{lineno}: non-numeric value") from None
    if not rows:
        raise FormatError(f"{path}: trace has no samples")
    arr = np.array(rows, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise FormatError(f"{path}: non-finite value")
    bad = np.flatnonzero(np.diff(arr[:, 0]) <= 0)
    if len(bad):
        raise FormatError(f"{path}: timestamps not increasing at row {bad[0] + 2}")
    return GazeTrace(arr[:, 0], arr[:, 1:])


def load_trace(path) -> list[tuple[float, GazeTruth]]:
    """``(t_ms, GazeTruth)`` rows of a trace CSV with columns ``t_ms,x_px,y_px``."""
    return read_trace(path).rows()


def write_trace(path, rows) -> None:
    """Write ``(t_ms, x, y)`` rows or ``(t_ms, GazeTruth)`` pairs."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRACE_COLUMNS)
        for row in rows:
            if isinstance(row[1], GazeTruth):
                t, (x, y) = row[0], row[1].point
            else:
                t, x, y = row
            w.writerow([repr(float(t)), repr(float(x)), repr(float(y))])


# ---------------------------------------------------------------------------
# training objective

def multi_exit_loss(preds, truth, weights=None, mode: str = "sum") -> float:
    """Weighted squared-distance loss summed over exits.

    Parameters
    ----------
    preds : array_like
        Shape (N, 2) in ``"sum"`` mode, (B, N, 2) in ``"batch_max"`` mode.
    truth : array_like
        Shape (2,) or (B, 2).
    weights : array_like, shape (N,), optional
        Non-negative exit weights, all ones by default.
    mode : {"sum", "batch_max"}
        ``"batch_max"`` takes, per exit, the largest squared error over the
        batch before weighting.
    """
    p = np.asarray(preds, dtype=np.float64)
    g = np.asarray(truth, dtype=np.float64)
    if mode == "sum":
        if p.ndim != 2 or p.shape[1] != 2 or g.shape != (2,):
            raise ValueError("sum mode expects preds (N, 2) and truth (2,)")
        sq = ((p - g) ** 2).sum(axis=1)
    elif mode == "batch_max":
        if p.ndim != 3 or p.shape[2] != 2 or g.shape != (p.shape[0], 2):
            raise ValueError("batch_max mode expects preds (B, N, 2) and truth (B, 2)")
        sq = ((p - g[:, None, :]) ** 2).sum(axis=2).max(axis=0)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    lam = np.ones(len(sq)) if weights is None else np.asarray(weights, dtype=np.float64)
    if lam.shape != sq.shape:
        raise ValueError(f"{len(lam)} weights for {len(sq)} exits")
    if np.any(lam < 0):
        raise ValueError("weights must be non-negative")
    return float((lam * sq).sum())
