"""Endmember unmixing, ND56 fraction and linear calibration.

The endmember matrix has one row per frame and three columns: the ND28 and
ND56 reference traces, each scaled to unit peak, and a column of ones for
background. Unmixing solves a nonnegative least-squares problem per trace
(or per pixel); the peak scales are kept so coefficients can be reported
as concentrations relative to the reference phantoms.
"""

from dataclasses import dataclass

import numpy as np

from .errors import NormalizationError, ShapeError, ValidationError
from .numerics import LineFit, linear_fit, nnls

__all__ = [
    "EndmemberMatrix",
    "UnmixResult",
    "UnmixMaps",
    "CalibrationCurve",
    "build_endmember_matrix",
    "unmix_trace",
    "unmix_stack",
    "fit_calibration",
    "apply_calibration",
    "fraction56",
]

LABELS = ("ND28", "ND56", "background")


@dataclass(frozen=True)
class EndmemberMatrix:
    """``(n_frames, 3)`` unmixing matrix plus the peak used to scale each column."""

    matrix: np.ndarray
    scales: tuple = (1.0, 1.0, 1.0)
    labels: tuple = LABELS

    def __post_init__(self):
        A = np.asarray(self.matrix, dtype=float)
        object.__setattr__(self, "matrix", A)
        object.__setattr__(self, "scales", tuple(float(s) for s in self.scales))
        if A.ndim != 2 or A.shape[1] != 3 or A.shape[0] < 3:
            raise ShapeError(f"endmember matrix must be (n>=3, 3), got {A.shape}")
        if not np.all(np.isfinite(A)) or np.any(A < 0):
            raise ValidationError("endmember matrix entries must be finite and >= 0")
        if not np.all(A[:, 2] == 1.0):
            raise ValidationError("background column must be all ones")
        if len(self.scales) != 3 or any(s <= 0 for s in self.scales):
            raise ValidationError("need three positive column scales")

    @property
    def n_frames(self):
        return self.matrix.shape[0]


def build_endmember_matrix(trace28, trace56):
    """Normalize two reference traces to unit peak and append a ones column.

    Raises
    ------
    NormalizationError
        If a trace is identically zero.
    """
    t28 = np.asarray(trace28, dtype=float).ravel()
    t56 = np.asarray(trace56, dtype=float).ravel()
    if t28.shape != t56.shape:
        raise ShapeError("reference traces differ in length")
    if t28.size < 3:
        raise ValidationError("need at least 3 frames to separate 3 endmembers")
    for name, t in (("ND28", t28), ("ND56", t56)):
        if not np.all(np.isfinite(t)) or np.any(t < 0):
            raise ValidationError(f"{name} reference trace must be finite and >= 0")
    p28, p56 = float(t28.max()), float(t56.max())
    if p28 == 0.0 or p56 == 0.0:
        raise NormalizationError("cannot normalize an all-zero reference trace")
    A = np.column_stack([t28 / p28, t56 / p56, np.ones_like(t28)])
    return EndmemberMatrix(A, (p28, p56, 1.0))


def fraction56(c28, c56):
    """ND56 share of the droplet signal; NaN where no droplet signal exists."""
    c28 = np.asarray(c28, dtype=float)
    c56 = np.asarray(c56, dtype=float)
    tot = c28 + c56
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(tot > 0, c56 / np.where(tot > 0, tot, 1.0), np.nan)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class UnmixResult:
    """Unmixing of one trace.

    ``coefficients`` are the raw NNLS weights on the normalized columns.
    ``c28``/``c56``/``cbg`` divide those by the column scales, giving
    concentrations relative to the reference traces. ``frac56`` is NaN when
    ``c28 + c56 == 0``.
    """

    coefficients: tuple
    c28: float
    c56: float
    cbg: float
    residual_norm: float
    frac56: float

    @property
    def defined(self):
        return not np.isnan(self.frac56)


def unmix_trace(A, y):
    """Nonnegative least-squares unmixing of one amplitude trace."""
    y = np.asarray(y, dtype=float).ravel()
    if y.size != A.n_frames:
        raise ShapeError(f"trace has {y.size} frames, matrix expects {A.n_frames}")
    coef = nnls(A.matrix, y)
    c = coef / np.asarray(A.scales)
    resid = float(np.linalg.norm(A.matrix @ coef - y))
    return UnmixResult(tuple(float(v) for v in coef), float(c[0]), float(c[1]),
                       float(c[2]), resid, fraction56(c[0], c[1]))


@dataclass
class UnmixMaps:
    """Per-pixel unmixing output, each array ``(height, width)``."""

    c28: np.ndarray
    c56: np.ndarray
    cbg: np.ndarray
    frac56: np.ndarray
    residual: np.ndarray

    @property
    def defined(self):
        return ~np.isnan(self.frac56)


def unmix_stack(A, stack, workers=None):
    """Apply :func:`unmix_trace` to every pixel of a frame stack.

    Pixels are independent; ``workers`` > 1 spreads rows over threads with
    identical results.
    """
    if stack.n_frames != A.n_frames:
        raise ShapeError(
            f"stack has {stack.n_frames} frames, endmember matrix has {A.n_frames}"
        )
    h, w = stack.height, stack.width
    Y = stack.voxels.reshape(stack.n_frames, h * w).astype(np.float64)
    coef = np.empty((h * w, 3))
    resid = np.empty(h * w)
    M = A.matrix

    def solve_rows(rows):
        for r in rows:
            for p in range(r * w, (r + 1) * w):
                c = nnls(M, Y[:, p])
                coef[p] = c
                resid[p] = np.linalg.norm(M @ c - Y[:, p])

    if workers and workers > 1:
        from concurrent.futures import ThreadPoolExecutor

        chunks = np.array_split(np.arange(h), workers)
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(solve_rows, chunks))
    else:
        solve_rows(range(h))
    conc = (coef / np.asarray(A.scales)).reshape(h, w, 3)
    return UnmixMaps(conc[..., 0], conc[..., 1], conc[..., 2],
                     fraction56(conc[..., 0], conc[..., 1]), resid.reshape(h, w))


@dataclass(frozen=True)
class CalibrationCurve:
    """Linear map from true to estimated ND56 fraction."""

    fit: LineFit

    @property
    def slope(self):
        return self.fit.slope

    @property
    def intercept(self):
        return self.fit.intercept

    @property
    def r_squared(self):
        return self.fit.r_squared

    def to_dict(self):
        return self.fit.to_dict()

    @classmethod
    def from_dict(cls, d):
        return cls(LineFit.from_dict(d))


def fit_calibration(true_fracs, est_fracs):
    """Fit ``est = slope * true + intercept``; NaN estimates are skipped."""
    t = np.asarray(true_fracs, dtype=float).ravel()
    e = np.asarray(est_fracs, dtype=float).ravel()
    if t.shape != e.shape:
        raise ShapeError("true and estimated fraction vectors differ in length")
    ok = ~np.isnan(e)
    if np.unique(t[ok]).size < 2:
        raise ValidationError("calibration needs at least two distinct true fractions")
    return CalibrationCurve(linear_fit(t[ok], e[ok]))


def apply_calibration(curve, est_frac):
    """Invert the calibration line and clamp to [0, 1]; NaN stays NaN."""
    if curve.slope == 0.0:
        raise ValidationError("calibration slope is zero; curve is not invertible")
    e = np.asarray(est_frac, dtype=float)
    out = np.clip((e - curve.intercept) / curve.slope, 0.0, 1.0)
    return out if out.ndim else float(out)
