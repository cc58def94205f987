# # Simulated multi-exit gaze tracking
#
# Each exit of the tracker reports a gaze estimate at a known latency with a
# known angular error spread.  Later exits are slower but more accurate.

from pathlib import Path

import numpy as np

from foveasplat.gaze import (
    ExitModel,
    GazeTruth,
    multi_exit_loss,
    preset_names,
    read_trace,
    simulate_exits,
    write_trace,
)
from foveasplat.synthetic import synthetic_saccade_trace

out = Path("demo_output")
out.mkdir(exist_ok=True)

for name in preset_names():
    m = ExitModel.preset(name)
    print(f"{name:11s} exits {m.n_exits}  final exit at {m.t_d:6.2f} ms  "
          f"final sigma {m.sigma[-1].tolist()} deg")

# ## One frame's predictions

model = ExitModel.preset("unpruned")
truth = GazeTruth((640.0, 360.0))
preds = simulate_exits(truth, model, seed=3, rho_d=640.0, size=(1280, 720))
for p in preds:
    err = np.hypot(p.point[0] - 640.0, p.point[1] - 360.0)
    print(f"exit {p.exit_index} at {p.available_at:6.2f} ms: ({p.point[0]:7.1f}, "
          f"{p.point[1]:6.1f}), {err:6.1f} px off")

# ## Error shrinks with depth

rng = np.random.default_rng(0)
errs = np.array([[np.hypot(p.point[0] - 640.0, p.point[1] - 360.0)
                  for p in simulate_exits(truth, model, rng, 640.0, (1280, 720))]
                 for _ in range(5000)])
print("mean pixel error per exit:", np.round(errs.mean(axis=0), 1).tolist())

pts = np.array([[p.point for p in simulate_exits(truth, model, rng, 640.0, (1280, 720))]
                for _ in range(200)])
print("training loss of 200 samples, summed over exits:",
      round(np.mean([multi_exit_loss(p, truth.point) for p in pts]), 1))

# ## Gaze traces
#
# A trace drives the true gaze across frames with sample-and-hold playback.

write_trace(out / "saccades.csv", synthetic_saccade_trace(2000.0, seed=4))
trace = read_trace(out / "saccades.csv")
for k, g in enumerate(trace.frame_truths(5, 100.0)):
    print(f"frame {k} truth ({g.point[0]:.0f}, {g.point[1]:.0f})")
