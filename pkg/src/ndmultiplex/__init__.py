"""Multiplex ultrasound imaging of two nanodroplet populations.

Signal models, acquisition-sequence design, phantom simulation and
nonnegative unmixing with linear calibration.
"""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    BudgetError,
    ConvergenceError,
    InfeasibleError,
    NDMultiplexError,
    NormalizationError,
    ShapeError,
    ValidationError,
)
from .numerics import LineFit, gram_determinant, linear_fit, nnls, sv_product  # noqa: E402
from .dynamics import (  # noqa: E402
    ConstantBackground,
    PulsedExponential,
    PulseSequence,
    SignalMatrix,
    StepRamp,
    build_signal_matrix,
    default_models,
    frame_times,
    sample_endmember,
)
from .design import (  # noqa: E402
    FrameSelection,
    SweepResult,
    dense_sequence,
    exhaustive_frame_selection,
    greedy_frame_selection,
    standard_candidates,
    standard_sequence,
    sweep_sequences,
)
from .phantom import (  # noqa: E402
    AcquisitionConfig,
    FrameStack,
    MixturePhantom,
    Roi,
    extract_roi_trace,
    simulate_acquisition,
    uniform_phantom,
)
from .unmix import (  # noqa: E402
    CalibrationCurve,
    EndmemberMatrix,
    UnmixResult,
    apply_calibration,
    build_endmember_matrix,
    fit_calibration,
    unmix_stack,
    unmix_trace,
)
