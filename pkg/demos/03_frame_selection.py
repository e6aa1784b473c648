"""
Pruning a dense acquisition to 16 frames
========================================

Start from frames every 10 ms across the whole pulse train and drop, one
at a time, the frame whose removal hurts the metric least. Small problems
can be checked against the exhaustive optimum.
"""

import time

import numpy as np

from ndmultiplex.design import (
    exhaustive_frame_selection,
    greedy_frame_selection,
    standard_candidates,
)
from ndmultiplex.dynamics import SignalMatrix, build_signal_matrix, default_models

from _plot import plt, save

seq = standard_candidates()
S = build_signal_matrix(default_models(), seq)
t0 = time.perf_counter()
sel = greedy_frame_selection(S, 16)
print(f"{S.shape[1]} candidates -> {len(sel.kept)} frames in {time.perf_counter() - t0:.2f} s")

# %%
# Where the kept frames sit relative to the pulses.
t = S.frame_times_s[list(sel.kept)]
pulses = seq.pulse_times()
for ti in t:
    before = pulses[pulses <= ti]
    where = "baseline" if before.size == 0 else f"+{(ti - before[-1]) * 1e3:.1f} ms"
    print(f"  t={ti:.4f} s  {where}")

# %%
# Greedy against brute force on random 3 x 12 problems.
rng = np.random.default_rng(0)
ratios = []
for _ in range(50):
    R = SignalMatrix(rng.random((3, 12)), ["a", "b", "c"], np.arange(12.0))
    ratios.append(greedy_frame_selection(R, 6).metric / exhaustive_frame_selection(R, 6).metric)
print(f"greedy/exhaustive: min {min(ratios):.4f}, mean {np.mean(ratios):.4f}")

if plt is not None:
    fig, ax = plt.subplots(figsize=(7, 2.5))
    ax.plot(S.frame_times_s, S.values[1], lw=0.8, label="ND56")
    ax.plot(S.frame_times_s, S.values[0], lw=0.8, label="ND28")
    ax.vlines(t, 0, S.values.max(), colors="k", lw=0.5, alpha=0.6)
    ax.set_xlabel("time (s)")
    ax.legend()
    save(fig, "03_frames.png")
