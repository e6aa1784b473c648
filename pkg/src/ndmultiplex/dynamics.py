"""Acquisition schedules and parametric temporal endmember models.

A :class:`PulseSequence` places baseline frames, then a train of evenly
spaced FUS pulses with a fixed set of capture delays after each pulse.
Endmember models describe how one signal source responds over time:

* :class:`StepRamp` -- one-shot vaporization that persists and slowly grows
  (the low-boiling-point droplets).
* :class:`PulsedExponential` -- a decaying transient relaunched by every
  pulse (the recondensing high-boiling-point droplets).
* :class:`ConstantBackground` -- tissue signal, flat in time.

Every post-pulse frame is anchored to the pulse it follows. A frame whose
delay equals the pulse spacing lands on the instant of the next pulse; it
still belongs to the earlier pulse and sees the pre-pulse (decayed) state.
"""

from dataclasses import dataclass, field
import math

import numpy as np

from .errors import ValidationError

__all__ = [
    "PulseSequence",
    "StepRamp",
    "PulsedExponential",
    "ConstantBackground",
    "SignalMatrix",
    "default_models",
    "frame_times",
    "sample_endmember",
    "build_signal_matrix",
    "model_to_dict",
    "model_from_dict",
]


@dataclass(frozen=True)
class PulseSequence:
    """One acquisition: baseline frames, then pulses with post-pulse frames.

    Baseline frame ``i`` is captured at ``i * baseline_spacing_s``; the first
    pulse fires one baseline spacing after the last baseline frame (at t=0
    when there are no baseline frames). Pulse ``k`` fires at
    ``t_first + k * tau_fus_s`` and is followed by frames at each offset in
    ``post_pulse_offsets_s``.
    """

    n_baseline: int
    baseline_spacing_s: float
    n_pulses: int
    tau_fus_s: float
    post_pulse_offsets_s: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "post_pulse_offsets_s",
                           tuple(float(o) for o in self.post_pulse_offsets_s))
        if int(self.n_baseline) != self.n_baseline or self.n_baseline < 0:
            raise ValidationError("n_baseline must be a nonnegative integer")
        if int(self.n_pulses) != self.n_pulses or self.n_pulses < 0:
            raise ValidationError("n_pulses must be a nonnegative integer")
        for name in ("baseline_spacing_s", "tau_fus_s"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ValidationError(f"{name} must be finite and > 0, got {v}")
        offs = self.post_pulse_offsets_s
        if any(not math.isfinite(o) or o < 0 for o in offs):
            raise ValidationError("post-pulse offsets must be finite and >= 0")
        if any(b <= a for a, b in zip(offs, offs[1:])):
            raise ValidationError("post-pulse offsets must be strictly increasing")
        if self.n_pulses > 1 and offs and offs[-1] > self.tau_fus_s:
            raise ValidationError(
                f"offset {offs[-1]} s exceeds the pulse spacing {self.tau_fus_s} s"
            )
        if self.n_frames == 0:
            raise ValidationError("sequence captures no frames")
        t = self.frame_times()
        if np.any(np.diff(t) <= 0):
            raise ValidationError(
                "frame times collide; an offset equal to tau_fus cannot be "
                "combined with a zero offset"
            )

    @property
    def n_frames(self):
        return self.n_baseline + self.n_pulses * len(self.post_pulse_offsets_s)

    @property
    def first_pulse_s(self):
        return self.n_baseline * self.baseline_spacing_s

    def pulse_times(self):
        return self.first_pulse_s + self.tau_fus_s * np.arange(self.n_pulses)

    def frame_times(self):
        base = self.baseline_spacing_s * np.arange(self.n_baseline)
        offs = np.asarray(self.post_pulse_offsets_s, dtype=float)
        post = (self.pulse_times()[:, None] + offs[None, :]).ravel()
        return np.concatenate([base, post])

    def frame_anchors(self):
        """Number of pulses that have fired as seen by each frame."""
        n_off = len(self.post_pulse_offsets_s)
        base = np.zeros(self.n_baseline, dtype=int)
        post = np.repeat(np.arange(1, self.n_pulses + 1), n_off)
        return np.concatenate([base, post])

    def to_dict(self):
        return {
            "n_baseline": self.n_baseline,
            "baseline_spacing_s": self.baseline_spacing_s,
            "n_pulses": self.n_pulses,
            "tau_fus_s": self.tau_fus_s,
            "post_pulse_offsets_s": list(self.post_pulse_offsets_s),
        }

    @classmethod
    def from_dict(cls, d):
        try:
            return cls(
                n_baseline=int(d["n_baseline"]),
                baseline_spacing_s=float(d["baseline_spacing_s"]),
                n_pulses=int(d["n_pulses"]),
                tau_fus_s=float(d["tau_fus_s"]),
                post_pulse_offsets_s=tuple(d["post_pulse_offsets_s"]),
            )
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"bad sequence document: {exc}") from exc


def frame_times(seq):
    """Capture times (seconds) of every frame in ``seq``, strictly increasing."""
    return seq.frame_times()


def _check_nonneg(name, v):
    if not (math.isfinite(v) and v >= 0):
        raise ValidationError(f"{name} must be finite and >= 0, got {v}")


@dataclass(frozen=True)
class StepRamp:
    """Step at the first pulse followed by a linear ramp."""

    step_amplitude: float = 1.0
    ramp_rate: float = 1.0
    label: str = "ND28"

    def __post_init__(self):
        _check_nonneg("step_amplitude", self.step_amplitude)
        _check_nonneg("ramp_rate", self.ramp_rate)

    def sample(self, seq):
        t = seq.frame_times()
        fired = seq.frame_anchors() > 0
        dt = t - seq.first_pulse_s
        return np.where(fired, self.step_amplitude + self.ramp_rate * dt, 0.0)

    def scaled(self, alpha):
        return StepRamp(alpha * self.step_amplitude, alpha * self.ramp_rate, self.label)


@dataclass(frozen=True)
class PulsedExponential:
    """Sum of exponential decays, one launched at every pulse."""

    peak_amplitude: float = 1.0
    decay_tau_s: float = 0.05
    label: str = "ND56"

    def __post_init__(self):
        _check_nonneg("peak_amplitude", self.peak_amplitude)
        if not (math.isfinite(self.decay_tau_s) and self.decay_tau_s > 0):
            raise ValidationError("decay_tau_s must be finite and > 0")

    def sample(self, seq):
        t = seq.frame_times()
        anchors = seq.frame_anchors()
        pulses = seq.pulse_times()
        out = np.zeros_like(t)
        for k, tp in enumerate(pulses):
            seen = anchors > k
            out[seen] += np.exp(-(t[seen] - tp) / self.decay_tau_s)
        return self.peak_amplitude * out

    def scaled(self, alpha):
        return PulsedExponential(alpha * self.peak_amplitude, self.decay_tau_s, self.label)


@dataclass(frozen=True)
class ConstantBackground:
    level: float = 0.2
    label: str = "background"

    def __post_init__(self):
        _check_nonneg("level", self.level)

    def sample(self, seq):
        return np.full(seq.n_frames, float(self.level))

    def scaled(self, alpha):
        return ConstantBackground(alpha * self.level, self.label)


_MODEL_TYPES = {
    "step_ramp": StepRamp,
    "pulsed_exponential": PulsedExponential,
    "constant_background": ConstantBackground,
}


def model_to_dict(model):
    name = {v: k for k, v in _MODEL_TYPES.items()}[type(model)]
    d = {"type": name}
    d.update(model.__dict__)
    return d


def model_from_dict(d):
    d = dict(d)
    kind = d.pop("type", None)
    if kind not in _MODEL_TYPES:
        raise ValidationError(f"unknown endmember model type {kind!r}")
    try:
        return _MODEL_TYPES[kind](**d)
    except TypeError as exc:
        raise ValidationError(f"bad parameters for {kind}: {exc}") from exc


def default_models():
    """ND28 step-ramp, ND56 pulsed exponential and constant background."""
    return (StepRamp(), PulsedExponential(), ConstantBackground())


def sample_endmember(model, seq):
    """Amplitude of ``model`` at every frame of ``seq``."""
    return model.sample(seq)


@dataclass(frozen=True)
class SignalMatrix:
    """Endmembers x frames amplitudes with labels and frame times."""

    values: np.ndarray
    labels: tuple
    frame_times_s: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        t = np.asarray(self.frame_times_s, dtype=float)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "frame_times_s", t)
        object.__setattr__(self, "labels", tuple(self.labels))
        if v.ndim != 2:
            raise ValidationError("signal matrix must be 2-D")
        if len(self.labels) != v.shape[0] or t.shape != (v.shape[1],):
            raise ValidationError("labels/frame times do not match matrix shape")
        if not np.all(np.isfinite(v)) or np.any(v < 0):
            raise ValidationError("signal matrix entries must be finite and >= 0")

    @property
    def shape(self):
        return self.values.shape

    def columns(self, idx):
        idx = np.asarray(idx, dtype=int)
        return SignalMatrix(self.values[:, idx], self.labels, self.frame_times_s[idx])


def build_signal_matrix(models, seq):
    """Stack sampled endmember traces row by row."""
    models = list(models)
    if not models:
        raise ValidationError("need at least one endmember model")
    rows = np.vstack([sample_endmember(m, seq) for m in models])
    return SignalMatrix(rows, [m.label for m in models], seq.frame_times())
