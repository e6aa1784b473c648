import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ndmultiplex.design import standard_sequence
from ndmultiplex.dynamics import default_models, sample_endmember
from ndmultiplex.errors import NormalizationError, ShapeError, ValidationError
from ndmultiplex.phantom import FrameStack
from ndmultiplex.unmix import (
    EndmemberMatrix,
    apply_calibration,
    build_endmember_matrix,
    fit_calibration,
    fraction56,
    unmix_stack,
    unmix_trace,
)


def reference_traces(peak28=2.0, peak56=3.0):
    seq = standard_sequence()
    m28, m56, _ = default_models()
    t28 = sample_endmember(m28, seq)
    t56 = sample_endmember(m56, seq)
    return peak28 * t28 / t28.max(), peak56 * t56 / t56.max()


@pytest.fixture
def A():
    return build_endmember_matrix(*reference_traces())


def test_columns_have_unit_peak(A):
    assert A.matrix.shape == (16, 3)
    np.testing.assert_array_equal(A.matrix.max(axis=0), [1.0, 1.0, 1.0])
    np.testing.assert_array_equal(A.matrix[:, 2], 1.0)
    assert A.scales == pytest.approx((2.0, 3.0, 1.0))


def test_zero_reference_trace_rejected():
    t28, _ = reference_traces()
    with pytest.raises(NormalizationError):
        build_endmember_matrix(t28, np.zeros_like(t28))


def test_mismatched_reference_lengths():
    t28, t56 = reference_traces()
    with pytest.raises(ShapeError):
        build_endmember_matrix(t28, t56[:-1])


def test_background_column_enforced():
    with pytest.raises(ValidationError):
        EndmemberMatrix(np.full((4, 3), 0.5))


@pytest.mark.parametrize("c28,c56,expected", [(1.0, 0.0, 0.0), (0.0, 1.0, 1.0), (0.5, 0.5, 0.5)])
def test_unmix_recovers_mixtures(A, c28, c56, expected):
    t28, t56 = reference_traces()
    r = unmix_trace(A, c28 * t28 + c56 * t56 + 0.2)
    assert r.frac56 == pytest.approx(expected, abs=1e-9)
    assert (r.c28, r.c56, r.cbg) == pytest.approx((c28, c56, 0.2), abs=1e-9)
    assert r.residual_norm < 1e-9


def test_background_only_trace_has_undefined_fraction(A):
    r = unmix_trace(A, np.full(16, 0.7))
    assert np.isnan(r.frac56)
    assert not r.defined
    assert r.cbg == pytest.approx(0.7)


def test_trace_length_mismatch(A):
    with pytest.raises(ShapeError):
        unmix_trace(A, np.ones(15))


def test_fraction56_edge_cases():
    assert np.isnan(fraction56(0.0, 0.0))
    np.testing.assert_array_equal(fraction56([1, 0, 3], [1, 2, 1]), [0.5, 1.0, 0.25])


@settings(max_examples=100, deadline=None)
@given(c28=st.floats(0, 5), c56=st.floats(0, 5), bg=st.floats(0, 2),
       alpha=st.floats(0.01, 100))
def test_noise_free_recovery_and_scale_invariance(c28, c56, bg, alpha):
    A = build_endmember_matrix(*reference_traces())
    t28, t56 = reference_traces()
    y = c28 * t28 + c56 * t56 + bg
    r = unmix_trace(A, y)
    ra = unmix_trace(A, alpha * y)
    assert np.all(np.array(r.coefficients) >= 0)
    # the solver stops at a 1e-8 relative KKT tolerance, so allow 1e-6
    if c28 + c56 > 1e-3:
        assert r.frac56 == pytest.approx(c56 / (c28 + c56), abs=1e-6)
        assert ra.frac56 == pytest.approx(r.frac56, abs=1e-6)
    np.testing.assert_allclose(ra.coefficients, alpha * np.array(r.coefficients),
                               rtol=1e-6, atol=1e-6 * alpha)


def test_unmix_stack_matches_traces(A):
    t28, t56 = reference_traces()
    rng = np.random.default_rng(0)
    c = rng.random((2, 5, 7))
    vox = c[0][None] * t28[:, None, None] + c[1][None] * t56[:, None, None] + 0.1
    stack = FrameStack(vox, standard_sequence().frame_times())
    maps = unmix_stack(A, stack)
    maps4 = unmix_stack(A, stack, workers=4)
    assert maps.frac56.shape == (5, 7)
    np.testing.assert_array_equal(maps.frac56, maps4.frac56)
    np.testing.assert_allclose(maps.c28, c[0], atol=1e-5)
    np.testing.assert_allclose(maps.c56, c[1], atol=1e-5)
    r = unmix_trace(A, stack.voxels[:, 2, 3])
    assert maps.frac56[2, 3] == pytest.approx(r.frac56, abs=1e-12)


def test_unmix_stack_frame_mismatch(A):
    with pytest.raises(ShapeError):
        unmix_stack(A, FrameStack(np.zeros((15, 2, 2)), np.arange(15.0)))


def test_calibration_fit_and_apply():
    t = np.linspace(0, 1, 11)
    curve = fit_calibration(t, 0.76 * t)
    assert curve.slope == pytest.approx(0.76)
    assert curve.intercept == pytest.approx(0.0, abs=1e-15)
    assert curve.r_squared == pytest.approx(1.0)
    assert apply_calibration(curve, 0.38) == pytest.approx(0.5)
    assert apply_calibration(curve, 1.0) == 1.0
    assert np.isnan(apply_calibration(curve, np.nan))


def test_calibration_skips_undefined_estimates():
    t = [0.0, 0.5, 1.0, 1.0]
    curve = fit_calibration(t, [0.0, 0.25, 0.5, np.nan])
    assert curve.slope == pytest.approx(0.5)


def test_zero_slope_not_invertible():
    curve = fit_calibration([0, 1, 2], [0.3, 0.3, 0.3])
    assert curve.slope == 0.0
    with pytest.raises(ValidationError):
        apply_calibration(curve, 0.3)


def test_calibration_needs_two_fractions():
    with pytest.raises(ValidationError):
        fit_calibration([0.5, 0.5], [0.4, 0.41])


def test_calibration_r2_under_noise():
    rng = np.random.default_rng(5)
    t = np.repeat(np.linspace(0, 1, 11), 15)
    curve = fit_calibration(t, 0.76 * t + 0.01 + rng.normal(0, 0.01, t.size))
    assert curve.r_squared >= 0.99
    assert curve.slope == pytest.approx(0.76, abs=0.01)


def test_calibration_round_trip_dict():
    curve = fit_calibration([0, 1], [0.1, 0.9])
    assert type(curve).from_dict(curve.to_dict()) == curve
