"""Gaze-driven adaptive rendering of 3D Gaussian scenes on the CPU."""
from .errors import (
    ConfigurationError,
    ConsistencyError,
    DomainError,
    EmptySceneError,
    FormatError,
    FoveaSplatError,
    FrameAborted,
)
from .foveation import (
    FoveationConfig,
    FoveationProfile,
    foveal_radius,
    level_requests,
    profile_exits,
)
from .gaze import (
    ExitModel,
    GazePrediction,
    GazeTruth,
    load_trace,
    multi_exit_loss,
    simulate_exits,
    write_trace,
)
from .metrics import psnr, ssim
from .raster import FrameState, RenderRound, composite_tile, fill_holes, render_full, render_region
from .scene import Camera, Gaussian3D, Scene, evaluate_sh, load_poses, load_scene, write_scene
from .scheduler import (
    EventCostModel,
    FrameSchedule,
    LatencyBreakdown,
    SharedGazeSlot,
    account,
    run_frame,
    speculate,
)
from .splat import Splat2D, Splats, TileWorkset, build_workset, project
from .synthetic import synthetic_poses, synthetic_saccade_trace, synthetic_scene

__version__ = "0.1.0"
