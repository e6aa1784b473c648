"""Experiment runners behind the command-line interface.

Each ``run_*`` function takes an :class:`~ndmultiplex.config.ExperimentConfig`
and, when given an output directory, writes its products there and returns
the list of files it wrote. :func:`run_pipeline` chains everything into the
two-batch calibration experiment and records a manifest of checksums.

Seeds for every simulated acquisition are derived from the config seed, a
batch tag, the fraction index and the replicate index, so reruns reproduce
byte-identical files regardless of ``threads``.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
import logging
from pathlib import Path
import time

import numpy as np

from . import __version__
from . import formats
from .config import (
    STREAM_CALIBRATION,
    STREAM_MAPS,
    STREAM_REFERENCE,
    STREAM_SIMULATE,
    STREAM_VALIDATION,
    derive_seed,
)
from .design import (
    dense_sequence,
    greedy_frame_selection,
    sweep_sequences,
)
from .dynamics import build_signal_matrix
from .errors import ValidationError
from .phantom import (
    AcquisitionConfig,
    Roi,
    extract_roi_trace,
    simulate_acquisition,
    uniform_phantom,
)
from .unmix import (
    apply_calibration,
    build_endmember_matrix,
    fit_calibration,
    unmix_stack,
    unmix_trace,
)

__all__ = [
    "BatchResult",
    "PipelineResult",
    "knee_by_tau",
    "run_optimize",
    "run_select",
    "run_simulate",
    "run_unmix",
    "run_calibrate",
    "run_pipeline",
    "write_manifest",
]

log = logging.getLogger(__name__)


def _map(fn, items, threads):
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(i) for i in items]


def _acquire(cfg, frac56, seed, amplitude_scale=None):
    scale = cfg.nd56_amplitude_scale if amplitude_scale is None else amplitude_scale
    ph = uniform_phantom(frac56, cfg.width, cfg.height, cfg.pixel_pitch_mm,
                         nd_amplitude_scale=scale,
                         background_level=cfg.background_level)
    acq = AcquisitionConfig(cfg.sequence, cfg.models, None, cfg.focal_sigma_mm,
                            cfg.noise_sigma, seed)
    return simulate_acquisition(ph, acq)


def _roi(cfg, width=None, height=None):
    width = cfg.width if width is None else width
    height = cfg.height if height is None else height
    return Roi.centered_on_pixel((width // 2, height // 2), cfg.pixel_pitch_mm,
                                 cfg.roi_size_mm)


def _frac_tag(f):
    return f"{int(round(f * 1000)):04d}"


# ---------------------------------------------------------------- optimize

def knee_by_tau(result, threshold):
    """Smallest pulse count after which every added pulse gains less than ``threshold``.

    Gains are relative to the current metric. Early gains can grow before
    they shrink, so the knee is where the tail stays below the threshold.
    """
    ns = sorted({e.n_pulses for e in result.entries})
    taus = sorted({e.tau_fus_s for e in result.entries})
    grid = result.metric_grid(ns, taus)
    out = {}
    for j, t in enumerate(taus):
        m = grid[:, j]
        knee = ns[-1]
        for i in range(len(ns) - 2, -1, -1):
            if not (m[i] > 0 and (m[i + 1] - m[i]) / m[i] < threshold):
                break
            knee = ns[i]
        out[t] = knee
    return out


def run_optimize(cfg, out=None, threads=None):
    res = sweep_sequences(cfg.models, cfg.pulse_counts, cfg.taus_s,
                          cfg.dense_frame_spacing_s, normalize=cfg.sweep_normalize,
                          workers=threads)
    if out is None:
        return res, []
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    e = res.entries
    formats.write_table_csv(
        out / "sweep.csv", ["n_pulses", "tau_fus_s", "metric", "d_optimality"],
        [[x.n_pulses for x in e], [x.tau_fus_s for x in e],
         [x.metric for x in e], [x.d_optimality for x in e]])
    best = res.best
    knees = knee_by_tau(res, cfg.gain_threshold)
    chosen = dense_sequence(best.n_pulses, best.tau_fus_s, cfg.dense_frame_spacing_s)
    formats.write_json(out / "sequence.json", {
        "argmax": {"n_pulses": best.n_pulses, "tau_fus_s": best.tau_fus_s,
                   "metric": best.metric, "d_optimality": best.d_optimality},
        "normalize": res.normalize,
        "sequence": chosen.to_dict(),
        "diminishing_returns": {
            "gain_threshold": cfg.gain_threshold,
            "knee_n_pulses_by_tau": [{"tau_fus_s": t, "n_pulses": n}
                                     for t, n in sorted(knees.items())],
        },
    })
    return res, [out / "sweep.csv", out / "sequence.json"]


# ---------------------------------------------------------------- select

def candidate_sequence(cfg):
    """Dense candidate frames around the configured pulse train."""
    seq = cfg.sequence
    first = seq.post_pulse_offsets_s[0] if seq.post_pulse_offsets_s else None
    return dense_sequence(seq.n_pulses, seq.tau_fus_s, cfg.dense_frame_spacing_s,
                          n_baseline=seq.n_baseline,
                          baseline_spacing_s=seq.baseline_spacing_s,
                          first_offset_s=first)


def run_select(cfg, out=None):
    S = build_signal_matrix(cfg.models, candidate_sequence(cfg))
    sel = greedy_frame_selection(S, cfg.selection_target)
    if out is None:
        return sel, []
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    formats.write_json(out / "selection.json", sel.to_dict())
    formats.write_signal_matrix_csv(out / "selected_matrix.csv", sel.matrix)
    formats.write_signal_matrix_csv(out / "candidate_matrix.csv", S)
    return sel, [out / "selection.json", out / "selected_matrix.csv",
                 out / "candidate_matrix.csv"]


# ---------------------------------------------------------------- simulate

def run_simulate(cfg, out, threads=None):
    """Write one FRS1 stack per (fraction, replicate) plus ``ground_truth.json``."""
    fracs = cfg.calibration_fractions
    if not fracs:
        raise ValidationError("fraction grid is empty")
    out = Path(out)
    (out / "stacks").mkdir(parents=True, exist_ok=True)
    jobs = [(i, f, r) for i, f in enumerate(fracs) for r in range(cfg.calibration_replicates)]

    def one(job):
        i, f, r = job
        seed = derive_seed(cfg.seed, STREAM_SIMULATE, i, r)
        path = out / "stacks" / f"frac{_frac_tag(f)}_rep{r:02d}.frs"
        formats.write_frs1(path, _acquire(cfg, f, seed))
        return {"file": str(path.relative_to(out)), "frac56": f, "replicate": r,
                "seed": seed}

    records = _map(one, jobs, threads)
    formats.write_json(out / "ground_truth.json", {
        "nd56_amplitude_scale": cfg.nd56_amplitude_scale,
        "stacks": records,
    })
    return records, [out / rec["file"] for rec in records] + [out / "ground_truth.json"]


# ---------------------------------------------------------------- unmix

def write_maps(out, stem, maps, calibration=None):
    """Write CSV/PGM/PPM renderings of one stack's per-pixel unmixing."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    frac = maps.frac56 if calibration is None else apply_calibration(calibration, maps.frac56)
    files = []
    for name, arr in (("c28", maps.c28), ("c56", maps.c56), ("cbg", maps.cbg),
                      ("frac56", frac)):
        p = out / f"{stem}_{name}.csv"
        formats.write_dense_csv(p, arr)
        files.append(p)
    p = out / f"{stem}_frac56.pgm"
    formats.write_pgm(p, formats.fraction_to_gray(frac))
    files.append(p)
    p = out / f"{stem}_mask.pgm"
    formats.write_pgm(p, np.where(np.isnan(frac), 0, 255).astype(np.uint8))
    files.append(p)
    p = out / f"{stem}_overlay.ppm"
    c28 = maps.c28
    c56 = maps.c56
    if calibration is not None:
        # recolour with the corrected share, keeping total droplet signal
        tot = c28 + c56
        share = np.nan_to_num(frac)
        c28, c56 = tot * (1 - share), tot * share
    formats.write_ppm(p, formats.overlay_rgb(c28, c56))
    files.append(p)
    return files


def run_unmix(cfg, stack_paths, endmember_path, out, threads=None, maps=True):
    """Unmix FRS1 stacks against reference traces from a headerless CSV.

    The CSV holds the ND28 and ND56 reference traces as its first two
    columns (any scale); an optional third column must be all ones.
    """
    ref = formats.read_dense_csv(endmember_path)
    if ref.shape[1] not in (2, 3):
        raise ValidationError("endmember CSV needs 2 or 3 columns")
    if ref.shape[1] == 3 and not np.all(ref[:, 2] == 1.0):
        raise ValidationError("third endmember column must be all ones")
    A = build_endmember_matrix(ref[:, 0], ref[:, 1])
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    names, traces, rows, files = [], [], [], []
    for sp in stack_paths:
        stack = formats.read_frs1(sp)
        if stack.n_frames != A.n_frames:
            raise ValidationError(f"{sp}: {stack.n_frames} frames, matrix has {A.n_frames}")
        stem = Path(sp).stem
        roi = Roi.centered_on_pixel((stack.width // 2, stack.height // 2),
                                    stack.pixel_pitch_mm, cfg.roi_size_mm)
        y = extract_roi_trace(stack, roi)
        r = unmix_trace(A, y)
        names.append(stem)
        traces.append(y)
        rows.append(r)
        if maps:
            files += write_maps(out / "maps", stem, unmix_stack(A, stack, threads))
    t = formats.read_frs1(stack_paths[0]).frame_times_s if stack_paths else []
    formats.write_table_csv(out / "roi_traces.csv", ["t_s"] + names, [t] + traces)
    formats.write_table_csv(
        out / "fractions.csv",
        ["stack", "c28", "c56", "cbg", "frac56", "residual_norm"],
        [names, [r.c28 for r in rows], [r.c56 for r in rows], [r.cbg for r in rows],
         [r.frac56 for r in rows], [r.residual_norm for r in rows]])
    return rows, [out / "roi_traces.csv", out / "fractions.csv"] + files


# ---------------------------------------------------------------- calibrate

def run_calibrate(data_path, out, apply_path=None):
    """Fit est-vs-true from a CSV with ``true_frac56`` and ``est_frac56`` columns."""
    header, cols = formats.read_table_csv(data_path)
    try:
        t = cols[header.index("true_frac56")]
        e = cols[header.index("est_frac56")]
    except ValueError:
        raise ValidationError(f"{data_path}: need true_frac56 and est_frac56 columns") from None
    if t.dtype.kind != "f" or e.dtype.kind != "f":
        raise ValidationError(f"{data_path}: fraction columns must be numeric")
    curve = fit_calibration(t, e)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    formats.write_json(out / "fit.json", curve.to_dict())
    files = [out / "fit.json"]
    if apply_path is not None:
        h2, c2 = formats.read_table_csv(apply_path)
        if "est_frac56" not in h2:
            raise ValidationError(f"{apply_path}: no est_frac56 column")
        est = c2[h2.index("est_frac56")]
        if est.dtype.kind != "f":
            raise ValidationError(f"{apply_path}: est_frac56 must be numeric")
        corrected = apply_calibration(curve, est)
        formats.write_table_csv(out / "calibrated.csv", h2 + ["calibrated_frac56"],
                                c2 + [corrected])
        files.append(out / "calibrated.csv")
    return curve, files


# ---------------------------------------------------------------- pipeline

@dataclass
class BatchResult:
    true_frac: np.ndarray
    replicate: np.ndarray
    est_frac: np.ndarray
    seeds: np.ndarray

    def mean_abs_error(self, est=None):
        est = self.est_frac if est is None else est
        return float(np.nanmean(np.abs(est - self.true_frac)))


@dataclass
class PipelineResult:
    endmembers: object
    calibration_batch: BatchResult
    curve: object
    validation_batch: BatchResult
    validation_corrected: np.ndarray
    files: list

    @property
    def uncalibrated_error(self):
        return self.calibration_batch.mean_abs_error()

    @property
    def calibrated_error(self):
        return self.validation_batch.mean_abs_error(self.validation_corrected)


def reference_traces(cfg, threads=None):
    """Average ROI traces of pure ND28 and pure ND56 phantoms at unit amplitude."""
    roi = _roi(cfg)

    def one(job):
        species, r = job
        seed = derive_seed(cfg.seed, STREAM_REFERENCE, species, r)
        return extract_roi_trace(_acquire(cfg, float(species), seed, amplitude_scale=1.0), roi)

    jobs = [(s, r) for s in (0, 1) for r in range(cfg.reference_replicates)]
    traces = _map(one, jobs, threads)
    n = cfg.reference_replicates
    return np.mean(traces[:n], axis=0), np.mean(traces[n:], axis=0)


def _run_batch(cfg, A, fractions, replicates, stream, threads):
    roi = _roi(cfg)
    jobs = [(i, f, r) for i, f in enumerate(fractions) for r in range(replicates)]

    def one(job):
        i, f, r = job
        seed = derive_seed(cfg.seed, stream, i, r)
        y = extract_roi_trace(_acquire(cfg, f, seed), roi)
        return seed, unmix_trace(A, y).frac56

    res = _map(one, jobs, threads)
    return BatchResult(np.array([j[1] for j in jobs]), np.array([j[2] for j in jobs]),
                       np.array([r[1] for r in res]), np.array([r[0] for r in res]))


def run_pipeline(cfg, out=None, threads=None):
    """Reference traces, calibration batch, line fit, corrected validation batch, maps."""
    files = []
    t28, t56 = reference_traces(cfg, threads)
    A = build_endmember_matrix(t28, t56)
    cal = _run_batch(cfg, A, cfg.calibration_fractions, cfg.calibration_replicates,
                     STREAM_CALIBRATION, threads)
    curve = fit_calibration(cal.true_frac, cal.est_frac)
    val = _run_batch(cfg, A, cfg.validation_fractions, cfg.validation_replicates,
                     STREAM_VALIDATION, threads)
    corrected = apply_calibration(curve, val.est_frac)
    log.info("fit slope=%.4f intercept=%.4f R2=%.4f", curve.slope, curve.intercept,
             curve.r_squared)

    if out is not None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        formats.write_dense_csv(out / "reference_traces.csv", np.column_stack([t28, t56]))
        formats.write_dense_csv(out / "endmembers.csv", A.matrix)
        formats.write_table_csv(
            out / "fig5a.csv", ["true_frac56", "replicate", "seed", "est_frac56"],
            [cal.true_frac, cal.replicate, [str(s) for s in cal.seeds], cal.est_frac])
        fit_doc = curve.to_dict()
        fit_doc["mean_abs_error_uncalibrated"] = cal.mean_abs_error()
        fit_doc["endmember_scales"] = list(A.scales)
        formats.write_json(out / "fit.json", fit_doc)
        formats.write_table_csv(
            out / "fig5b.csv",
            ["true_frac56", "replicate", "seed", "est_frac56", "calibrated_frac56"],
            [val.true_frac, val.replicate, [str(s) for s in val.seeds], val.est_frac,
             corrected])
        files += [out / n for n in ("reference_traces.csv", "endmembers.csv", "fig5a.csv",
                                    "fit.json", "fig5b.csv")]
        if cfg.write_maps:
            for i, f in enumerate(cfg.validation_fractions):
                stack = _acquire(cfg, f, derive_seed(cfg.seed, STREAM_MAPS, i))
                maps = unmix_stack(A, stack, threads)
                files += write_maps(out / "maps", f"frac{_frac_tag(f)}", maps, curve)
    return PipelineResult(A, cal, curve, val, corrected, files)


def write_manifest(out, cfg, files, command, timings=None):
    """Record config, version and checksums; timings go to a separate file.

    Keeping wall-clock numbers out of ``manifest.json`` makes the manifest
    itself byte-identical across reruns.
    """
    out = Path(out)
    entries = {str(Path(f).relative_to(out)): formats.sha256_file(f) for f in files}
    doc = {
        "command": command,
        "config": cfg.to_dict(),
        "config_sha256": cfg.digest(),
        "files": dict(sorted(entries.items())),
        "toolkit": "ndmultiplex",
        "version": __version__,
    }
    formats.write_json(out / "manifest.json", doc)
    if timings is not None:
        formats.write_json(out / "timings.json", timings)
    return out / "manifest.json"


class Timer:
    def __init__(self):
        self.start = time.perf_counter()

    def elapsed(self):
        return time.perf_counter() - self.start
