import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from ringcover.geometry import (TWO_PI, AnnularRegion, DensityField,
                                InvalidDensityError, PolarCurve, moment_table,
                                radial_moment, radial_moment_extrema,
                                region_integral)


def test_curve_harmonic_evaluation():
    curve = PolarCurve(1.0, cosine_coeffs=(0.0,), sine_coeffs=(0.0, 0.5))
    assert_allclose(curve.radius(math.pi / 4), 1.5, rtol=1e-15)
    outer = PolarCurve(3.0, cosine_coeffs=(0.0, 0.5))
    assert_allclose(outer.radius(0.0), 3.5, rtol=1e-15)


def test_curve_periodicity():
    curve = PolarCurve(2.0, cosine_coeffs=(0.3, -0.1), sine_coeffs=(0.05, 0.2, 0.01))
    thetas = np.linspace(0.0, TWO_PI, 17)
    assert_allclose(curve.radius(thetas), curve.radius(thetas + TWO_PI), rtol=1e-12)


def test_contains(uniform_region):
    assert uniform_region.contains((1.5, 0.0))
    assert not uniform_region.contains((0.5, 0.0))
    assert uniform_region.contains((2.0, 0.0))  # boundary inclusive
    assert not uniform_region.contains((0.0, 0.0))  # origin: angle undefined
    assert not uniform_region.contains((2.5, 0.0))


def test_region_validation():
    with pytest.raises(ValueError):
        AnnularRegion(PolarCurve(2.0), PolarCurve(1.0))
    with pytest.raises(ValueError):
        AnnularRegion(PolarCurve(0.2, cosine_coeffs=(0.5,)), PolarCurve(2.0))
    # curves touching somewhere is also invalid
    with pytest.raises(ValueError):
        AnnularRegion(PolarCurve(1.0), PolarCurve(2.0, cosine_coeffs=(-1.0,)))


def test_radial_moment_uniform(uniform_region, uniform_density):
    for theta in (0.0, 1.0, 4.5):
        assert_allclose(radial_moment(uniform_region, uniform_density, theta),
                        1.5, rtol=1e-10)
    assert_allclose(radial_moment(uniform_region, uniform_density, 1.0, "r2"),
                    15.0 / 4.0, rtol=1e-10)


def test_radial_moment_reference_closed_form(reference_region, reference_density):
    # r_in(0) = 1, r_out(0) = 3.5, rho(r, 0) = e + 0.01 r; antiderivative by hand
    expected = math.e * (3.5 ** 2 - 1.0) / 2.0 + 0.01 * (3.5 ** 3 - 1.0) / 3.0
    value = radial_moment(reference_region, reference_density, 0.0)
    assert_allclose(value, expected, rtol=1e-10)
    assert_allclose(value, 15.4299186, rtol=1e-7)


def test_radial_moment_linear_in_density(reference_region):
    # doubling a uniform density doubles the plain moment
    one = DensityField("uniform", (1.0,))
    two = DensityField("uniform", (2.0,))
    m1 = radial_moment(reference_region, one, 0.7)
    m2 = radial_moment(reference_region, two, 0.7)
    assert_allclose(m2, 2.0 * m1, rtol=1e-10)


def test_product_density_closed_form(uniform_region):
    # (2 + r) radially, (1 + 0.2 cos(theta)) angularly; by hand at theta = 0:
    # 1.2 * int_1^2 (2 + r) r dr = 1.2 * (3 + 7/3) = 6.4
    density = DensityField("radial_polynomial_times_angular", (2.0, 1.0),
                           angular=PolarCurve(1.0, cosine_coeffs=(0.2,)))
    assert_allclose(radial_moment(uniform_region, density, 0.0), 6.4, rtol=1e-10)
    lo, hi = density.bounds(uniform_region)
    assert 0.0 < lo < hi


def test_region_integral_slices(uniform_region, uniform_density):
    assert_allclose(region_integral(uniform_region, uniform_density, 0.0, TWO_PI),
                    3.0 * math.pi, rtol=1e-10)
    assert_allclose(region_integral(uniform_region, uniform_density, 0.0, math.pi / 2),
                    3.0 * math.pi / 4.0, rtol=1e-10)
    # wrap-around slice gets 2*pi added
    assert_allclose(region_integral(uniform_region, uniform_density,
                                    3.0 * math.pi / 2.0, math.pi / 2.0),
                    3.0 * math.pi / 2.0, rtol=1e-10)
    assert region_integral(uniform_region, uniform_density, 1.0, 1.0) == 0.0


def test_region_integral_additivity(reference_region, reference_density):
    rng = np.random.default_rng(5)
    cuts = np.sort(rng.uniform(0.0, TWO_PI, 5))
    total = region_integral(reference_region, reference_density, 0.0, TWO_PI,
                            rel_tol=1e-10)
    pieces = [region_integral(reference_region, reference_density, a, b, rel_tol=1e-10)
              for a, b in zip(cuts, np.roll(cuts, -1))]
    assert_allclose(sum(pieces), total, rtol=1e-8)


def test_plain_moment_matches_region_integral(reference_region, reference_density):
    # periodic trapezoid of the moment profile converges spectrally
    n = 4096
    thetas = np.arange(n) * (TWO_PI / n)
    table = moment_table(reference_region, reference_density)
    profile = table.value(thetas)[0]
    total_from_profile = float(np.mean(profile) * TWO_PI)
    total = region_integral(reference_region, reference_density, 0.0, TWO_PI,
                            rel_tol=1e-10)
    assert_allclose(total_from_profile, total, rtol=1e-8)


def test_extrema_uniform(uniform_region, uniform_density):
    lo, hi = radial_moment_extrema(uniform_region, uniform_density)
    assert_allclose([lo, hi], [1.5, 1.5], rtol=1e-10)


def test_extrema_reference_dense_oracle(reference_region, reference_density):
    lo, hi = radial_moment_extrema(reference_region, reference_density, 2048)
    lo_dense, hi_dense = radial_moment_extrema(reference_region, reference_density,
                                               16384)
    assert abs(lo - lo_dense) <= 1e-3 * lo_dense
    assert abs(hi - hi_dense) <= 1e-3 * hi_dense
    assert lo > 0.0


def test_extrema_density_scaling(reference_region):
    lo1, hi1 = radial_moment_extrema(reference_region, DensityField("uniform", (1.0,)))
    lo2, hi2 = radial_moment_extrema(reference_region, DensityField("uniform", (2.0,)))
    assert_allclose([lo2, hi2], [2.0 * lo1, 2.0 * hi1], rtol=1e-10)


def test_extrema_grid_validation(uniform_region, uniform_density):
    with pytest.raises(ValueError):
        radial_moment_extrema(uniform_region, uniform_density, 32)


def test_invalid_density_detected(uniform_region):
    # angular factor 0.5 + cos(theta) goes negative near theta = pi
    bad = DensityField("radial_polynomial_times_angular", (1.0,),
                       angular=PolarCurve(0.5, cosine_coeffs=(1.0,)))
    lo, _ = bad.bounds(uniform_region)
    assert lo <= 0.0
    with pytest.raises(InvalidDensityError):
        radial_moment_extrema(uniform_region, bad, 64)


def test_density_bounds_positive(reference_region, reference_density):
    lo, hi = reference_density.bounds(reference_region)
    assert 0.0 < lo < hi


def test_moment_table_matches_quadrature(reference_region, reference_density):
    table = moment_table(reference_region, reference_density)
    for row, weight in enumerate(("plain", "x", "y", "r2")):
        direct = region_integral(reference_region, reference_density, 0.0, TWO_PI,
                                 weight, rel_tol=1e-11)
        assert abs(table.totals[row] - direct) <= 1e-9 * (abs(direct) + 1.0)
    rng = np.random.default_rng(11)
    for _ in range(6):
        a, b = rng.uniform(0.0, TWO_PI, 2)
        sliced = table.cumulative(np.array([b]))[0, 0] - table.cumulative(np.array([a]))[0, 0]
        if b < a:
            sliced += table.totals[0]
        direct = region_integral(reference_region, reference_density, a, b,
                                 rel_tol=1e-11)
        assert abs(sliced - direct) <= 1e-9 * (abs(direct) + 1.0)


def test_moment_table_slice_moments_wrap(uniform_region, uniform_density):
    table = moment_table(uniform_region, uniform_density)
    phases = np.array([3.0 * math.pi / 2.0, math.pi / 2.0])
    moments = table.slice_moments(phases)
    assert_allclose(moments[0], [3.0 * math.pi / 2.0, 3.0 * math.pi / 2.0],
                    rtol=1e-10)


def test_quadrature_relative_tolerance(uniform_region):
    huge = DensityField("uniform", (1e6,))
    assert_allclose(region_integral(uniform_region, huge, 0.0, TWO_PI),
                    3.0 * math.pi * 1e6, rtol=1e-8)
