"""Synthetic mixture phantoms and frame-stack acquisition.

The simulator is deliberately phenomenological: each pixel sees the two
droplet traces mixed by its local fractions and scaled by a Gaussian focal
weight, plus a spatially uniform background and additive Gaussian noise::

    voxel(x, y, t) = w(x, y) * (f28 * s28(t) + g * f56 * s56(t))
                     + b * bg(t) + noise

where ``g`` is the phantom's ND56 amplitude scale and ``b`` its background
level (a multiplier on the background endmember). Voxels are clamped at 0
and stored as float32.
"""

from dataclasses import dataclass, field
import math

import numpy as np

from .dynamics import PulseSequence, default_models, sample_endmember
from .errors import ValidationError

__all__ = [
    "MixturePhantom",
    "AcquisitionConfig",
    "FrameStack",
    "Roi",
    "uniform_phantom",
    "focal_weight",
    "noiseless_signal",
    "simulate_acquisition",
    "extract_roi_trace",
]

DEFAULT_WIDTH = 128
DEFAULT_HEIGHT = 64
DEFAULT_PITCH_MM = 0.1
DEFAULT_ROI_MM = 3.9


@dataclass(frozen=True)
class MixturePhantom:
    """Per-pixel ND28/ND56 fractions on a ``height x width`` grid."""

    frac28: np.ndarray
    frac56: np.ndarray
    pixel_pitch_mm: float = DEFAULT_PITCH_MM
    nd_amplitude_scale: float = 1.0
    background_level: float = 1.0

    def __post_init__(self):
        f28 = np.asarray(self.frac28, dtype=float)
        f56 = np.asarray(self.frac56, dtype=float)
        object.__setattr__(self, "frac28", f28)
        object.__setattr__(self, "frac56", f56)
        if f28.ndim != 2 or f28.shape != f56.shape or min(f28.shape) < 1:
            raise ValidationError("fraction maps must be equal-shape, non-empty 2-D arrays")
        for f in (f28, f56):
            if not np.all(np.isfinite(f)) or np.any(f < 0) or np.any(f > 1):
                raise ValidationError("fractions must lie in [0, 1]")
        if np.any(f28 + f56 > 1 + 1e-12):
            raise ValidationError("frac28 + frac56 exceeds 1")
        if not self.pixel_pitch_mm > 0:
            raise ValidationError("pixel pitch must be > 0")
        if not (self.nd_amplitude_scale >= 0 and self.background_level >= 0):
            raise ValidationError("amplitude scale and background level must be >= 0")

    @property
    def height(self):
        return self.frac28.shape[0]

    @property
    def width(self):
        return self.frac28.shape[1]


def uniform_phantom(frac56, width=DEFAULT_WIDTH, height=DEFAULT_HEIGHT,
                    pixel_pitch_mm=DEFAULT_PITCH_MM, nd_amplitude_scale=1.0,
                    background_level=1.0):
    """Homogeneous phantom: ``frac56`` everywhere, ND28 fills the rest."""
    if not (math.isfinite(frac56) and 0.0 <= frac56 <= 1.0):
        raise ValidationError(f"frac56 must be in [0, 1], got {frac56}")
    if width < 1 or height < 1:
        raise ValidationError("phantom dimensions must be >= 1")
    f56 = np.full((height, width), float(frac56))
    return MixturePhantom(1.0 - f56, f56, pixel_pitch_mm, nd_amplitude_scale,
                          background_level)


@dataclass(frozen=True)
class AcquisitionConfig:
    """How a phantom is imaged.

    ``focal_center_px`` is ``(x, y)`` in pixel indices; ``None`` puts the
    focus on the pixel at ``(width // 2, height // 2)``.
    """

    sequence: PulseSequence
    models: tuple = field(default_factory=default_models)
    focal_center_px: tuple = None
    focal_sigma_mm: float = 1.5
    noise_sigma: float = 0.05
    rng_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "models", tuple(self.models))
        if len(self.models) != 3:
            raise ValidationError("need exactly three models: ND28, ND56, background")
        if not self.focal_sigma_mm > 0:
            raise ValidationError("focal_sigma_mm must be > 0")
        if not self.noise_sigma >= 0:
            raise ValidationError("noise_sigma must be >= 0")
        if int(self.rng_seed) != self.rng_seed or self.rng_seed < 0:
            raise ValidationError("rng_seed must be a nonnegative integer")


@dataclass
class FrameStack:
    """Frames of amplitude images, shape ``(n_frames, height, width)``."""

    voxels: np.ndarray
    frame_times_s: np.ndarray
    pixel_pitch_mm: float = DEFAULT_PITCH_MM

    def __post_init__(self):
        self.voxels = np.ascontiguousarray(self.voxels, dtype=np.float32)
        self.frame_times_s = np.asarray(self.frame_times_s, dtype=float)
        if self.voxels.ndim != 3:
            raise ValidationError("voxels must be (n_frames, height, width)")
        if self.frame_times_s.shape != (self.voxels.shape[0],):
            raise ValidationError("one frame time per frame required")

    @property
    def n_frames(self):
        return self.voxels.shape[0]

    @property
    def height(self):
        return self.voxels.shape[1]

    @property
    def width(self):
        return self.voxels.shape[2]


def _focal_center(cfg, width, height):
    if cfg.focal_center_px is None:
        return width // 2, height // 2
    return cfg.focal_center_px


def focal_weight(width, height, pixel_pitch_mm, center_px, sigma_mm):
    """Gaussian weight map, exactly 1 at ``center_px``."""
    cx, cy = center_px
    x = (np.arange(width) - cx) * pixel_pitch_mm
    y = (np.arange(height) - cy) * pixel_pitch_mm
    r2 = y[:, None] ** 2 + x[None, :] ** 2
    return np.exp(-r2 / (2.0 * sigma_mm**2))


def noiseless_signal(ph, cfg):
    """Float64 noise-free voxel field, shape ``(n_frames, height, width)``."""
    m28, m56, mbg = cfg.models
    s28 = sample_endmember(m28, cfg.sequence)
    s56 = sample_endmember(m56, cfg.sequence)
    bg = sample_endmember(mbg, cfg.sequence)
    w = focal_weight(ph.width, ph.height, ph.pixel_pitch_mm,
                     _focal_center(cfg, ph.width, ph.height), cfg.focal_sigma_mm)
    a28 = w * ph.frac28
    a56 = w * ph.frac56 * ph.nd_amplitude_scale
    return (a28[None] * s28[:, None, None] + a56[None] * s56[:, None, None]
            + ph.background_level * bg[:, None, None])


def simulate_acquisition(ph, cfg):
    """Image ``ph`` with ``cfg``; identical seeds give bit-identical stacks.

    Noise comes from one PCG64 stream seeded with ``cfg.rng_seed`` and drawn
    in (frame, row, column) order.
    """
    field_ = noiseless_signal(ph, cfg)
    if cfg.noise_sigma > 0:
        rng = np.random.default_rng(cfg.rng_seed)
        field_ = field_ + rng.normal(0.0, cfg.noise_sigma, size=field_.shape)
    np.maximum(field_, 0.0, out=field_)
    return FrameStack(field_.astype(np.float32), cfg.sequence.frame_times(), ph.pixel_pitch_mm)


@dataclass(frozen=True)
class Roi:
    """Axis-aligned rectangle in millimetres, centred on ``(x_mm, y_mm)``."""

    x_mm: float
    y_mm: float
    width_mm: float = DEFAULT_ROI_MM
    height_mm: float = DEFAULT_ROI_MM

    @classmethod
    def centered_on_pixel(cls, px, pitch_mm, width_mm=DEFAULT_ROI_MM, height_mm=None):
        return cls(px[0] * pitch_mm, px[1] * pitch_mm, width_mm,
                   width_mm if height_mm is None else height_mm)

    def mask(self, width, height, pitch_mm):
        # pixel centers sit at index * pitch
        x = np.arange(width) * pitch_mm
        y = np.arange(height) * pitch_mm
        tol = 1e-9 * pitch_mm
        inx = np.abs(x - self.x_mm) <= self.width_mm / 2 + tol
        iny = np.abs(y - self.y_mm) <= self.height_mm / 2 + tol
        return iny[:, None] & inx[None, :]


def extract_roi_trace(stack, roi):
    """Per-frame mean of the pixels whose centres fall inside ``roi``."""
    m = roi.mask(stack.width, stack.height, stack.pixel_pitch_mm)
    if not m.any():
        raise ValidationError("ROI does not cover any pixel centre")
    return stack.voxels[:, m].astype(np.float64).mean(axis=1)
