"""
Droplet signal models across a pulse train
==========================================

Two droplet species answer a focused-ultrasound pulse differently. The
low-boiling one (ND28) vaporizes into bubbles that persist, so its signal
steps up and keeps creeping upward with every pulse. The high-boiling one
(ND56) flashes and recondenses, giving a spike that decays within tens of
milliseconds. A constant background sits under both.
"""

import numpy as np

from ndmultiplex.design import standard_sequence
from ndmultiplex.dynamics import build_signal_matrix, default_models

from _plot import plt, save

# %%
# The standard sequence: 6 baseline frames, then 5 pulses 400 ms apart,
# each imaged 0.5 ms after the pulse and again just before the next one.
seq = standard_sequence()
S = build_signal_matrix(default_models(), seq)
print(f"{seq.n_frames} frames, pulses at {np.round(seq.pulse_times(), 4)} s")
for label, row in zip(S.labels, S.values):
    print(f"{label:>10}: {np.array2string(row, precision=3, max_line_width=200)}")

# %%
# Right after each pulse ND56 is bright. By the next frame, 400 ms later,
# it has decayed to nothing while ND28 keeps its step. That contrast is
# what makes the two separable.
post = S.values[:, 6::2]
late = S.values[:, 7::2]
print("ND56 post/late ratio per pulse:", np.round(post[1] / np.maximum(late[1], 1e-300), 1))

if plt is not None:
    t = S.frame_times_s
    fig, ax = plt.subplots(figsize=(7, 3))
    for label, row in zip(S.labels, S.values):
        ax.plot(t, row, "o-", label=label, ms=4)
    ax.set_xlabel("time (s)")
    ax.set_ylabel("signal (a.u.)")
    ax.legend()
    save(fig, "01_signal_models.png")
