"""
Choosing pulse count and spacing
================================

Each candidate sequence gives a 3 x n signal matrix. The product of its
singular values measures how well the three rows can be told apart (it is
the square root of the D-optimality determinant). After scaling every row
to unit norm the number lies in [0, 1]: 1 means mutually orthogonal
signatures, 0 means one is a mix of the others.
"""

import numpy as np

from ndmultiplex.design import DEFAULT_PULSE_COUNTS, DEFAULT_TAUS_S, sweep_sequences
from ndmultiplex.dynamics import default_models
from ndmultiplex.pipeline import knee_by_tau

from _plot import plt, save

res = sweep_sequences(default_models(), DEFAULT_PULSE_COUNTS, DEFAULT_TAUS_S, workers=4)
grid = res.metric_grid()
print(f"best: {res.best.n_pulses} pulses at {res.best.tau_fus_s * 1e3:.0f} ms, "
      f"metric {res.best.metric:.4f}")

# %%
# Longer spacing lets ND56 fully decay between pulses, which separates it
# from the persistent ND28 signal.
j50, j400 = DEFAULT_TAUS_S.index(0.05), DEFAULT_TAUS_S.index(0.4)
print(f"5 pulses: {grid[4, j50]:.4f} at 50 ms vs {grid[4, j400]:.4f} at 400 ms")

# %%
# Each extra pulse helps, but less than the previous one did.
gains = np.diff(grid[:, j400])
print("gain per added pulse at 400 ms:", np.round(gains, 4))
print("knee (relative gain < 10%) at 400 ms:", knee_by_tau(res, 0.1)[0.4], "pulses")

if plt is not None:
    fig, ax = plt.subplots(figsize=(6, 4))
    im = ax.imshow(grid, origin="lower", aspect="auto",
                   extent=[DEFAULT_TAUS_S[0] * 1e3, DEFAULT_TAUS_S[-1] * 1e3, 0.5, 10.5])
    ax.set_xlabel("pulse spacing (ms)")
    ax.set_ylabel("pulses")
    fig.colorbar(im, label="normalized metric")
    save(fig, "02_sweep.png")
