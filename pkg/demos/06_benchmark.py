# # Benchmark runs
#
# The harness runs every pose in every mode, writes one schedule JSON per frame
# plus a summary CSV, and reports latency and quality.  The same run is
# available from the command line:
#
#     foveasplat-bench --scene synthetic:0:1500 --n-poses 4 --resolution 640x360 \
#         --out demo_output/bench

from pathlib import Path

from foveasplat.bench import read_summary, run_benchmark

out = Path("demo_output") / "bench"
report = run_benchmark(["synthetic:0:1500"], resolutions=[(640, 360)], n_poses=4,
                       seeds=[0, 1], out_dir=out)

for row in read_summary(out / "summary.csv"):
    print(f"{row['mode']:>4}: t_tot {float(row['t_tot_mean_ms']):7.2f} ms, "
          f"speculative rounds {float(row['speculative_rounds_mean']):4.1f}, "
          f"fovea PSNR min {row['psnr_fovea_min_db']}, "
          f"PSNR {float(row['psnr_mean_db']):.2f} dB, SSIM {float(row['ssim_mean']):.4f}")
print(f"{len(report.schedule_files)} schedule files in {out}")

# ## Latency at several resolutions
#
# One anchor calibrates the per-pixel cost at the first resolution; larger
# frames cost proportionally more.  Skipping compositing keeps this fast.

report = run_benchmark(["synthetic:0:200"], resolutions=[(1280, 720), (1920, 1080)],
                       n_poses=5, latency_only=True)
for row in report.rows():
    print(f"{row['width']}x{row['height']} {row['mode']:>4}: {row['t_tot_mean_ms']:7.2f} ms")
