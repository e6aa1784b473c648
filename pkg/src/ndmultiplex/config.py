"""Experiment configuration (JSON, schema version 1).

Every field has a default; :meth:`ExperimentConfig.to_dict` returns the
fully resolved document, which is what gets hashed and embedded in run
manifests. Unknown keys are rejected so typos cannot fall back silently to
defaults.

Example document::

    {
      "schema_version": 1,
      "seed": 7,
      "sequence": "standard",
      "noise_sigma": 0.05,
      "nd56_amplitude_scale": 0.76,
      "calibration_fractions": [0.0, 0.5, 1.0],
      "calibration_replicates": 15
    }
"""

from dataclasses import dataclass, field, fields, replace
import hashlib
import json

import numpy as np

from .design import DEFAULT_PULSE_COUNTS, DEFAULT_TAUS_S, standard_sequence
from .dynamics import PulseSequence, default_models, model_from_dict, model_to_dict
from .errors import ValidationError

__all__ = ["SCHEMA_VERSION", "ExperimentConfig", "derive_seed", "load_config"]

SCHEMA_VERSION = 1

# stream tags keep every batch's seeds disjoint
STREAM_REFERENCE = 0
STREAM_CALIBRATION = 1
STREAM_VALIDATION = 2
STREAM_MAPS = 3
STREAM_SIMULATE = 4


def derive_seed(base, *keys):
    """Deterministic 63-bit child seed for ``(base, *keys)``."""
    ss = np.random.SeedSequence([int(base), *[int(k) for k in keys]])
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


def _tenths():
    return tuple(round(0.1 * k, 10) for k in range(11))


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 0
    models: tuple = field(default_factory=default_models)
    sequence: PulseSequence = field(default_factory=standard_sequence)
    # sequence optimization
    pulse_counts: tuple = DEFAULT_PULSE_COUNTS
    taus_s: tuple = DEFAULT_TAUS_S
    dense_frame_spacing_s: float = 0.01
    sweep_normalize: str = "rows"
    gain_threshold: float = 0.10
    selection_target: int = 16
    # phantom and acquisition
    width: int = 128
    height: int = 64
    pixel_pitch_mm: float = 0.1
    focal_sigma_mm: float = 1.5
    noise_sigma: float = 0.05
    nd56_amplitude_scale: float = 1.0
    background_level: float = 1.0
    roi_size_mm: float = 3.9
    # experiment batches
    reference_replicates: int = 7
    calibration_fractions: tuple = field(default_factory=_tenths)
    calibration_replicates: int = 15
    validation_fractions: tuple = (0.0, 0.25, 0.5, 0.75, 1.0)
    validation_replicates: int = 5
    write_maps: bool = True
    output_dir: str = "out"

    def __post_init__(self):
        object.__setattr__(self, "models", tuple(self.models))
        for name in ("pulse_counts", "taus_s", "calibration_fractions", "validation_fractions"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if int(self.seed) != self.seed or not 0 <= self.seed < 2**64:
            raise ValidationError("seed must be an unsigned 64-bit integer")
        if len(self.models) != 3:
            raise ValidationError("models must list ND28, ND56 and background")
        for name in ("calibration_fractions", "validation_fractions"):
            fr = getattr(self, name)
            if any(not (0.0 <= f <= 1.0) for f in fr):
                raise ValidationError(f"{name} must lie in [0, 1]")
        for name in ("reference_replicates", "calibration_replicates", "validation_replicates"):
            if getattr(self, name) < 1:
                raise ValidationError(f"{name} must be >= 1")
        if self.noise_sigma < 0 or self.roi_size_mm <= 0:
            raise ValidationError("noise_sigma must be >= 0 and roi_size_mm > 0")
        if self.sweep_normalize not in ("rows", None):
            raise ValidationError("sweep_normalize must be 'rows' or null")

    def to_dict(self):
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["models"] = [model_to_dict(m) for m in self.models]
        d["sequence"] = self.sequence.to_dict()
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        d["schema_version"] = SCHEMA_VERSION
        return d

    @classmethod
    def from_dict(cls, doc):
        doc = dict(doc)
        version = doc.pop("schema_version", SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            raise ValidationError(f"unsupported schema_version {version}")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(doc) - known)
        if unknown:
            raise ValidationError(f"unknown config keys: {', '.join(unknown)}")
        if "models" in doc:
            doc["models"] = tuple(model_from_dict(m) for m in doc["models"])
        if "sequence" in doc:
            seq = doc["sequence"]
            doc["sequence"] = standard_sequence() if seq == "standard" else PulseSequence.from_dict(seq)
        try:
            return cls(**doc)
        except TypeError as exc:
            raise ValidationError(str(exc)) from exc

    def with_overrides(self, **kw):
        return replace(self, **kw)

    def digest(self):
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


def load_config(path=None):
    """Read a config file; ``None`` gives the defaults."""
    if path is None:
        return ExperimentConfig()
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(doc, dict):
        raise ValidationError(f"{path}: config must be a JSON object")
    return ExperimentConfig.from_dict(doc)
