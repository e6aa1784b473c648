"""Acquisition-sequence design driven by the product of singular values.

Two stages:

1. :func:`sweep_sequences` scores candidate pulse trains (count x spacing)
   sampled on a dense frame grid.
2. :func:`greedy_frame_selection` prunes the frames of a chosen train one
   column at a time, always dropping the frame whose removal leaves the
   largest product of singular values.

The product of singular values of a k-row matrix is ``sqrt(det(M M^T))``,
the square root of the D-optimality criterion; both are reported.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from itertools import combinations, islice
import math

import numpy as np

from .dynamics import PulseSequence, SignalMatrix, build_signal_matrix
from .errors import BudgetError, InfeasibleError, ValidationError
from .numerics import _gram_det_batch, sv_product

__all__ = [
    "DEFAULT_PULSE_COUNTS",
    "DEFAULT_TAUS_S",
    "SweepEntry",
    "SweepResult",
    "FrameSelection",
    "standard_sequence",
    "dense_sequence",
    "standard_candidates",
    "sequence_metric",
    "sweep_sequences",
    "greedy_frame_selection",
    "exhaustive_frame_selection",
]

DEFAULT_PULSE_COUNTS = tuple(range(1, 11))
DEFAULT_TAUS_S = tuple(round(0.05 * k, 10) for k in range(1, 17))
EXHAUSTIVE_BUDGET = 10**6
# relative gap under which two metrics count as tied
TIE_RTOL = 1e-12


def standard_sequence():
    """6 baseline frames 0.5 ms apart, 5 pulses 400 ms apart, frames at +0.5 ms and +400 ms."""
    return PulseSequence(
        n_baseline=6,
        baseline_spacing_s=0.5e-3,
        n_pulses=5,
        tau_fus_s=0.4,
        post_pulse_offsets_s=(0.5e-3, 0.4),
    )


def dense_sequence(n_pulses, tau_fus_s, spacing_s=0.01, n_baseline=1,
                   baseline_spacing_s=None, first_offset_s=None):
    """Pulse train with frames every ``spacing_s`` up to and including ``tau_fus_s``.

    With the defaults a single baseline frame sits one spacing before the
    first pulse. ``first_offset_s`` adds an extra early frame after each pulse
    (e.g. 0.5 ms) ahead of the regular grid.
    """
    if not spacing_s > 0:
        raise ValidationError("dense frame spacing must be > 0")
    if baseline_spacing_s is None:
        baseline_spacing_s = spacing_s
    n_steps = int(math.floor(tau_fus_s / spacing_s + 1e-9))
    if n_steps < 1:
        raise ValidationError(
            f"pulse spacing {tau_fus_s} s is shorter than the frame spacing {spacing_s} s"
        )
    offsets = [k * spacing_s for k in range(1, n_steps + 1)]
    if abs(offsets[-1] - tau_fus_s) <= 1e-9 * tau_fus_s:
        offsets[-1] = tau_fus_s
    if first_offset_s is not None and first_offset_s < offsets[0]:
        offsets.insert(0, first_offset_s)
    return PulseSequence(n_baseline, baseline_spacing_s, n_pulses, tau_fus_s, offsets)


def standard_candidates(spacing_s=0.01):
    """Densely sampled version of :func:`standard_sequence` used for frame pruning."""
    std = standard_sequence()
    return dense_sequence(
        std.n_pulses, std.tau_fus_s, spacing_s,
        n_baseline=std.n_baseline,
        baseline_spacing_s=std.baseline_spacing_s,
        first_offset_s=std.post_pulse_offsets_s[0],
    )


def _normalized_rows(values):
    norms = np.linalg.norm(values, axis=1, keepdims=True)
    if np.any(norms == 0):
        return None
    return values / norms


def sequence_metric(matrix, normalize="rows"):
    """Score a signal matrix; returns ``(sv_product, det(M M^T))``.

    ``normalize="rows"`` scales every signal row to unit norm first, so the
    score measures how far the signals are from being parallel (a volume in
    [0, 1]) independent of how many frames were sampled. ``None`` scores the
    raw amplitudes.
    """
    values = matrix.values if isinstance(matrix, SignalMatrix) else np.asarray(matrix, float)
    if normalize == "rows":
        values = _normalized_rows(values)
        if values is None:
            return 0.0, 0.0
    elif normalize is not None:
        raise ValidationError(f"unknown normalization {normalize!r}")
    if values.shape[0] > values.shape[1]:
        return 0.0, 0.0
    det = float(_gram_det_batch(values))
    return math.sqrt(det), det


@dataclass(frozen=True)
class SweepEntry:
    n_pulses: int
    tau_fus_s: float
    metric: float
    d_optimality: float


@dataclass(frozen=True)
class SweepResult:
    entries: tuple
    best: SweepEntry
    normalize: str = "rows"

    def metric_grid(self, pulse_counts=None, taus=None):
        """Metrics as a (pulse count x tau) array in sorted grid order."""
        ns = sorted({e.n_pulses for e in self.entries}) if pulse_counts is None else pulse_counts
        ts = sorted({e.tau_fus_s for e in self.entries}) if taus is None else taus
        lookup = {(e.n_pulses, e.tau_fus_s): e.metric for e in self.entries}
        return np.array([[lookup[(n, t)] for t in ts] for n in ns])

    def lookup(self, n_pulses, tau_fus_s):
        for e in self.entries:
            if e.n_pulses == n_pulses and math.isclose(e.tau_fus_s, tau_fus_s, rel_tol=1e-12):
                return e
        raise KeyError((n_pulses, tau_fus_s))


def _pick_best(scores):
    """Index of the maximum score; near-ties resolve to the earliest index."""
    scores = np.asarray(scores, dtype=float)
    top = np.max(scores)
    return int(np.flatnonzero(scores >= top - TIE_RTOL * abs(top))[0])


def sweep_sequences(models, pulse_counts=DEFAULT_PULSE_COUNTS, taus=DEFAULT_TAUS_S,
                    dense_frame_spacing_s=0.01, template=None, normalize="rows",
                    workers=None):
    """Score every (pulse count, pulse spacing) pair on a dense frame grid.

    Parameters
    ----------
    models : sequence of endmember models
        Usually ND28, ND56 and background.
    pulse_counts, taus : sequences
        Grid axes; ``taus`` in seconds.
    dense_frame_spacing_s : float
        Candidate frame spacing, 10 ms by default.
    template : PulseSequence, optional
        Supplies the baseline frame count and spacing. Default: one baseline
        frame one grid step before the first pulse.
    normalize : {"rows", None}
        Passed to :func:`sequence_metric`.
    workers : int, optional
        Evaluate grid points on a thread pool. Results do not depend on it.

    Returns
    -------
    SweepResult
        Entries sorted by (pulse count, tau). The best entry breaks ties
        toward fewer pulses, then shorter spacing.
    """
    pulse_counts = sorted({int(n) for n in pulse_counts})
    taus = sorted({float(t) for t in taus})
    if not pulse_counts or not taus:
        raise ValidationError("sweep grid is empty")
    if not dense_frame_spacing_s > 0:
        raise ValidationError("dense frame spacing must be > 0")
    if any(n < 1 for n in pulse_counts) or any(t <= 0 for t in taus):
        raise ValidationError("pulse counts must be >= 1 and taus > 0")
    models = list(models)
    if template is None:
        n_base, base_dt = 1, dense_frame_spacing_s
    else:
        n_base, base_dt = template.n_baseline, template.baseline_spacing_s

    grid = [(n, t) for n in pulse_counts for t in taus]

    def score(point):
        n, t = point
        seq = dense_sequence(n, t, dense_frame_spacing_s, n_base, base_dt)
        m, d = sequence_metric(build_signal_matrix(models, seq), normalize)
        return SweepEntry(n, t, m, d)

    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            entries = tuple(pool.map(score, grid))
    else:
        entries = tuple(score(p) for p in grid)
    best = entries[_pick_best([e.metric for e in entries])]
    return SweepResult(entries, best, normalize or "none")


@dataclass(frozen=True)
class FrameSelection:
    """Result of frame pruning.

    ``kept`` indexes the original frames in increasing order. For the
    greedy search ``removed`` lists dropped frames in removal order and
    ``metric_trace[i]`` is the product of singular values after the
    ``i``-th removal; the exhaustive search leaves both empty.
    """

    kept: tuple
    matrix: SignalMatrix
    metric_trace: tuple = ()
    removed: tuple = ()

    @property
    def metric(self):
        return sv_product(self.matrix.values)

    def to_dict(self):
        return {
            "kept": list(self.kept),
            "removed": list(self.removed),
            "metric_trace": list(self.metric_trace),
            "metric": self.metric,
            "kept_times_s": [float(t) for t in self.matrix.frame_times_s],
        }


def _check_target(S, target):
    k, n = S.values.shape
    if int(target) != target:
        raise ValidationError("target must be an integer")
    if target < k:
        raise InfeasibleError(
            f"cannot keep {target} frames: {k} endmembers need at least {k}"
        )
    if target > n:
        raise ValidationError(f"target {target} exceeds the {n} available frames")


def greedy_frame_selection(S, target):
    """Backward elimination of frames down to ``target`` columns.

    Each pass tries deleting every remaining column and permanently drops
    the one whose removal leaves the largest product of singular values.
    Ties drop the lowest-index column.
    """
    _check_target(S, target)
    values = S.values
    keep = list(range(values.shape[1]))
    removed, trace = [], []
    while len(keep) > target:
        sub = values[:, keep]
        n = len(keep)
        # candidate j drops column j: stack of (k, n-1) matrices
        mask = ~np.eye(n, dtype=bool)
        stack = np.stack([sub[:, mask[j]] for j in range(n)])
        j = _pick_best(_gram_det_batch(stack))
        removed.append(keep.pop(j))
        trace.append(sv_product(values[:, keep]))
    return FrameSelection(tuple(keep), S.columns(keep), tuple(trace), tuple(removed))


def exhaustive_frame_selection(S, target, budget=EXHAUSTIVE_BUDGET, chunk=20000):
    """Best ``target``-column subset by brute force.

    Ties resolve to the lexicographically smallest index set.

    Raises
    ------
    BudgetError
        If there are more than ``budget`` subsets to score.
    """
    _check_target(S, target)
    values = S.values
    n = values.shape[1]
    if math.comb(n, target) > budget:
        raise BudgetError(
            f"C({n}, {target}) = {math.comb(n, target)} subsets exceeds budget {budget}"
        )
    best_idx, best_det = None, -1.0
    it = combinations(range(n), target)
    while True:
        block = list(islice(it, chunk))
        if not block:
            break
        idx = np.array(block)
        dets = _gram_det_batch(values[:, idx].transpose(1, 0, 2))
        j = _pick_best(dets)
        if best_idx is None or dets[j] > best_det + TIE_RTOL * abs(best_det):
            best_idx, best_det = block[j], float(dets[j])
    return FrameSelection(tuple(best_idx), S.columns(best_idx))
