import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from varlab.constants import (
    CALIBRATION, GAMMA_SCALE, READING_SCALE, abs_moment_std_normal, estimate_k_r2, estimate_k_rogers_walsh,
    gamma_variation_constant, increment_grid, k_from_forms, k_from_squared_integrals, r2_quadratic_form_expkernel,
    r2_quadratic_form_xy, resolve_constant_reading, sample_r2_forms, sample_squared_field_integrals, truncation_tail,
)
from varlab.errors import ConfigurationError, DomainError
from varlab.fractional import variance_y
from varlab.models import KMethod, Normalization, Reading
from varlab.paths import Path, Seed, simulate_brownian
from varlab.quadrature import XGrid, ZGrid
from varlab.schemas import KEstimate


@pytest.mark.parametrize("p, expected", [
    (0.0, 1.0),
    (1.0, math.sqrt(2.0 / math.pi)),
    (2.0, 1.0),
    (4.0, 3.0),
    (4.0 / 3.0, 0.830862),
])
def test_abs_moment_std_normal(p, expected):
    assert abs_moment_std_normal(p) == pytest.approx(expected, rel=1e-6)


def test_abs_moment_diverges():
    with pytest.raises(DomainError):
        abs_moment_std_normal(-1.0)


def test_abs_moment_against_monte_carlo():
    draws = np.abs(Seed(40).generator().standard_normal(1_000_000)) ** (4.0 / 3.0)
    stderr = np.std(draws, ddof=1) / 1000.0
    assert abs(np.mean(draws) - abs_moment_std_normal(4.0 / 3.0)) <= 4.0 * stderr


def test_calibration_matches_stationary_variance():
    """E Q = 2/3, so Var Y_1 = (2/3) / sqrt(2π)"""
    assert CALIBRATION * 2.0 / 3.0 == pytest.approx(variance_y(1.0), rel=1e-12)


def test_scales():
    assert READING_SCALE == pytest.approx(4.0 ** (2.0 / 3.0))
    assert GAMMA_SCALE == pytest.approx(READING_SCALE**2)
    assert gamma_variation_constant(0.3) == pytest.approx(0.3 * GAMMA_SCALE)
    assert gamma_variation_constant(0.3, Normalization.PRINTED) == 0.3


def _linear_path(x_max):
    grid = increment_grid(x_max, 64)
    return Path(grid, grid.points)


def test_quadratic_form_of_zero_path():
    grid = increment_grid(5.0, 64)
    path = Path(grid, np.zeros(grid.n_steps + 1))
    x_grid = XGrid.graded(5.0)
    assert r2_quadratic_form_xy(path, x_grid) == 0.0
    assert r2_quadratic_form_expkernel(path, ZGrid.log_spaced(), x_grid) == 0.0


@pytest.mark.parametrize("x_max", [5.0, 20.0])
def test_quadratic_form_of_unit_increments(x_max):
    """ΔB ≡ 1 gives Q = (2 - sqrt 2) sqrt(X_max) by both routes"""
    path = _linear_path(x_max)
    x_grid = XGrid.graded(x_max)
    expected = (2.0 - math.sqrt(2.0)) * math.sqrt(x_max)
    assert r2_quadratic_form_xy(path, x_grid) == pytest.approx(expected, rel=1e-9)
    assert r2_quadratic_form_expkernel(path, ZGrid.log_spaced(), x_grid) == pytest.approx(expected, rel=5e-3)


def test_quadratic_form_routes_agree_per_path():
    x_grid = XGrid.graded(10.0)
    z_grid = ZGrid.log_spaced()
    grid = increment_grid(10.0, 128)
    for stream in range(5):
        path = simulate_brownian(grid, Seed(41, stream))
        xy = r2_quadratic_form_xy(path, x_grid)
        exp = r2_quadratic_form_expkernel(path, z_grid, x_grid)
        assert xy > 0.0
        assert exp == pytest.approx(xy, rel=0.01)


def test_sampled_forms_share_paths_across_grids():
    grids = [XGrid.graded(5.0), XGrid.graded(10.0)]
    forms = sample_r2_forms(4, Seed(42), grids, ZGrid.log_spaced(), steps_per_unit=64, threads=2)
    assert forms.shape == (4, 2, 2)
    path = simulate_brownian(increment_grid(10.0, 64), Seed(42).spawn(1))
    assert forms[1, 0, 0] == pytest.approx(r2_quadratic_form_xy(path, grids[0]), rel=1e-12)
    assert forms[1, 1, 0] == pytest.approx(r2_quadratic_form_xy(path, grids[1]), rel=1e-12)


def test_truncation_tail():
    assert truncation_tail(20.0) == pytest.approx(0.25 / math.sqrt(40.0), rel=0.01)
    assert truncation_tail(40.0) < truncation_tail(20.0)
    with pytest.raises(DomainError):
        truncation_tail(0.5)


def test_k_from_forms():
    forms = np.array([0.5, 0.7, 0.9])
    estimate = k_from_forms(KMethod.R2_XY_QUAD, forms, Normalization.PRINTED)
    expected = abs_moment_std_normal(4.0 / 3.0) * np.mean(forms ** (2.0 / 3.0))
    assert estimate.value == pytest.approx(expected)
    assert estimate.low_confidence
    assert estimate.stderr > 0.0

    shifted = k_from_forms(KMethod.R2_XY_QUAD, forms, Normalization.PRINTED, truncation=20.0)
    assert shifted.value > estimate.value
    assert shifted.truncation == 20.0

    calibrated = k_from_forms(KMethod.R2_XY_QUAD, forms)
    assert calibrated.value == pytest.approx(CALIBRATION ** (2.0 / 3.0) * estimate.value)


def test_k_from_single_form():
    estimate = k_from_forms(KMethod.R2_EXP_KERNEL, [0.6])
    assert estimate.stderr == 0.0
    assert estimate.n_rep == 1
    assert estimate.low_confidence
    with pytest.raises(ConfigurationError):
        k_from_forms(KMethod.R2_EXP_KERNEL, [])


def test_readings_of_squared_integrals():
    samples = np.array([0.5, 1.0, 1.5, 2.0])
    outer = k_from_squared_integrals(samples, Reading.OUTER_POWER)
    inner = k_from_squared_integrals(samples, Reading.INNER_POWER)
    moment = abs_moment_std_normal(4.0 / 3.0)
    assert outer.value == pytest.approx(moment * 1.25 ** (2.0 / 3.0))
    assert inner.value == pytest.approx(moment * np.mean(samples ** (2.0 / 3.0)))
    # Jensen: the mean of a concave power lies below the power of the mean
    assert inner.value < outer.value
    assert outer.method is KMethod.RW_OUTER_POWER
    assert inner.method is KMethod.RW_INNER_POWER


def test_rogers_walsh_estimate_from_paths():
    estimate = estimate_k_rogers_walsh(8, Reading.INNER_POWER, Seed(44), n_steps=256, threads=2)
    samples = sample_squared_field_integrals(8, Seed(44), n_steps=256)
    assert estimate.value == pytest.approx(k_from_squared_integrals(samples, Reading.INNER_POWER).value, rel=1e-12)
    assert estimate.n_rep == 8
    assert estimate.low_confidence
    assert np.all(samples > 0.0)


@settings(max_examples=50, deadline=None)
@given(samples=st.lists(st.floats(1e-3, 10.0), min_size=2, max_size=50))
def test_inner_reading_never_exceeds_outer(samples):
    outer = k_from_squared_integrals(samples, Reading.OUTER_POWER)
    inner = k_from_squared_integrals(samples, Reading.INNER_POWER)
    assert inner.value <= outer.value * (1.0 + 1e-12)


def _estimate(method, value, stderr=0.001, normalization=Normalization.CALIBRATED):
    return KEstimate(method=method, value=value, stderr=stderr, n_rep=1000, normalization=normalization)


def test_constant_reading_verdict():
    r2 = _estimate(KMethod.R2_XY_QUAD, 0.32)
    reference = READING_SCALE * 0.32
    outer = _estimate(KMethod.RW_OUTER_POWER, 1.3 * reference)
    inner = _estimate(KMethod.RW_INNER_POWER, 1.02 * reference)
    verdict = resolve_constant_reading(r2, outer, inner)
    assert verdict.reference == pytest.approx(reference)
    assert verdict.matches == [Reading.INNER_POWER]
    assert verdict.gaps[Reading.OUTER_POWER] == pytest.approx(0.3)
    assert verdict.jensen_ordering


def test_constant_reading_printed_scale():
    r2 = _estimate(KMethod.R2_XY_QUAD, 0.5, normalization=Normalization.PRINTED)
    outer = _estimate(KMethod.RW_OUTER_POWER, 0.51)
    inner = _estimate(KMethod.RW_INNER_POWER, 0.7)
    verdict = resolve_constant_reading(r2, outer, inner)
    assert verdict.scale == 1.0
    assert verdict.matches == [Reading.OUTER_POWER]
    assert not verdict.jensen_ordering


@pytest.mark.slow
def test_quadratic_form_constant_at_desk_scale():
    """With the tail restored E Q = 2/3 at any truncation"""
    xy, exp = estimate_k_r2(400, x_max=20.0, seed=Seed(43), steps_per_unit=128)
    assert xy.value == pytest.approx(exp.value, abs=2.0 * math.hypot(xy.stderr, exp.stderr) + 0.005 * xy.value)
    grid = XGrid.graded(20.0)
    forms = sample_r2_forms(400, Seed(43), [grid], ZGrid.log_spaced(), steps_per_unit=128)[:, 0, 0]
    corrected = forms + truncation_tail(20.0)
    stderr = np.std(corrected, ddof=1) / math.sqrt(len(corrected))
    assert abs(np.mean(corrected) - 2.0 / 3.0) <= 4.0 * stderr
