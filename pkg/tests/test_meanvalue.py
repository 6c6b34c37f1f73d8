import csv
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pharmonic.exponents import PLaplaceParams, lambda_k
from pharmonic.hodograph import HodographSeries, image_radius
from pharmonic.meanvalue import (
    DecayLadderReport,
    FieldEvaluationError,
    SeriesField,
    amv_remainder,
    amv_weights,
    aronsson_field,
    decay_ladder,
    default_eps_max,
    disk_statistics,
    fit_power_law,
    midrange_remainder,
)


def linear(z):
    return np.real(z)


def saddle(z):
    return np.real(z) ** 2 - np.imag(z) ** 2


@pytest.fixture(scope="module")
def two_mode_field():
    return SeriesField(HodographSeries.from_modes(4, 1, {2: 1, 3: 0.3}))


def test_linear_field_statistics():
    for eps in (1.0, 0.1, 1e-3):
        s = disk_statistics(linear, 0, eps)
        assert s.mean == pytest.approx(0, abs=1e-15 * max(eps, 1))
        assert s.max == pytest.approx(eps, rel=1e-12)
        assert s.min == pytest.approx(-eps, rel=1e-12)
        assert s.midrange == pytest.approx(0, abs=1e-12 * eps)
        assert s.min <= s.mean <= s.max
        assert s.midrange == (s.max + s.min) / 2


def test_saddle_statistics():
    s = disk_statistics(saddle, 0, 1.0)
    assert s.mean == pytest.approx(0, abs=1e-14)
    assert s.max == pytest.approx(1, abs=1e-12)
    assert s.min == pytest.approx(-1, abs=1e-12)


def test_off_center_mean_of_quadratic():
    # the disk mean of |z|^2 about c with radius r is |c|^2 + r^2/2
    c, r = 0.3 - 0.4j, 0.25
    s = disk_statistics(lambda z: np.abs(z) ** 2, c, r)
    assert s.mean == pytest.approx(abs(c) ** 2 + r * r / 2, rel=1e-4)
    assert abs(s.mean - (abs(c) ** 2 + r * r / 2)) <= 2 * s.quadrature_error_estimate


def test_interior_extrema_found_for_general_fields():
    bump = lambda z: np.exp(-np.abs(z) ** 2 / 0.01)
    s = disk_statistics(bump, 0, 1.0)
    assert s.max == pytest.approx(1.0)
    assert s.min == pytest.approx(math.exp(-100), abs=1e-40)


def test_statistics_preconditions():
    with pytest.raises(ValueError):
        disk_statistics(linear, 0, 1.0, resolution=8)
    with pytest.raises(ValueError):
        disk_statistics(linear, 0, 0.0)


def test_evaluation_failure_reports_point():
    def broken(z):
        z = np.asarray(z)
        if np.any(np.abs(z) > 0.5):
            raise ArithmeticError("outside")
        return np.zeros(z.shape)

    with pytest.raises(FieldEvaluationError) as info:
        disk_statistics(broken, 0, 1.0)
    assert abs(info.value.point) > 0.5


@pytest.mark.parametrize("field", [
    lambda z: np.real(z) ** 3 - np.imag(z),
    lambda z: np.sin(3 * np.real(z)) * np.exp(np.imag(z) ** 2),
    aronsson_field,
])
def test_odd_fields_have_zero_mean(field):
    s = disk_statistics(field, 0, 0.7)
    assert abs(s.mean) <= 1e-14


def test_quadrature_is_second_order():
    f = lambda z: np.cos(2 * np.abs(z))
    for c in (0, 0.3 + 0.2j):
        e = [disk_statistics(f, c, 1.0, r).quadrature_error_estimate for r in (16, 32, 64, 128)]
        assert all(a >= 4 * b for a, b in zip(e, e[1:]))


@pytest.mark.parametrize("field", [
    lambda z: np.exp(np.real(z)),
    lambda z: np.abs(z) ** 4,
    lambda z: np.exp(z.real) * np.cos(z.imag) + z.real**2 * z.imag,
])
def test_quadrature_ratio_tends_to_four(field):
    e = [disk_statistics(field, 0.3 + 0.2j, 0.5, r).quadrature_error_estimate for r in (32, 64, 128)]
    ratios = [a / b for a, b in zip(e, e[1:])]
    assert all(abs(q - 4) < 0.01 for q in ratios)
    assert abs(ratios[1] - 4) <= abs(ratios[0] - 4) + 1e-6


def test_amv_weights():
    assert amv_weights(2) == (0, 1)
    assert amv_weights(math.inf) == (1, 0)
    a, b = amv_weights(4)
    assert (a, b) == pytest.approx((1 / 3, 2 / 3))
    with pytest.raises(ValueError):
        amv_weights(1)


@pytest.mark.parametrize("p", [1.5, 2, 4, 10])
def test_amv_remainder_vanishes_on_linear_fields(p):
    f = lambda z: 0.3 + 2 * np.real(z) - 0.7 * np.imag(z)
    assert abs(amv_remainder(f, p, 0.2 + 0.1j, 0.05)) <= 1e-14


def test_amv_remainder_rejects_infinite_p():
    with pytest.raises(ValueError):
        amv_remainder(linear, math.inf, 0, 0.1)


def test_amv_remainder_p2_is_mean_deficit():
    f = lambda z: np.exp(np.real(z)) + np.imag(z) ** 2
    c, r = 0.1 + 0.2j, 0.3
    s = disk_statistics(f, c, r)
    assert amv_remainder(f, 2, c, r, stats=s) == s.mean - float(f(np.array([c]))[0])


@settings(max_examples=25, deadline=None)
@given(shift=st.floats(-1e3, 1e3).filter(lambda v: v == 0 or abs(v) > 1e-3))
def test_amv_remainder_constant_invariance(shift):
    f = lambda z: np.exp(np.real(z)) * np.sin(np.imag(z) + 1)
    g = lambda z: f(z) + shift
    base = amv_remainder(f, 4, 0.1j, 0.2, resolution=32)
    moved = amv_remainder(g, 4, 0.1j, 0.2, resolution=32)
    # exact in real arithmetic; the shifted samples carry rounding of size |shift| * eps
    assert moved == pytest.approx(base, abs=64 * np.finfo(float).eps * (1 + abs(shift)))


def test_midrange_remainder_linear():
    assert abs(midrange_remainder(linear, 0.4, 0.1)) <= 1e-14


def test_aronsson_values():
    assert aronsson_field(0) == 0
    assert aronsson_field(1) == 1
    assert aronsson_field(1 + 1j) == 0
    assert aronsson_field(-8) == pytest.approx(-16)
    assert aronsson_field(8j) == pytest.approx(-16)
    pts = np.array([1, 2j, -1])
    assert np.allclose(aronsson_field(pts), [1, -2 ** (4 / 3), -1])


def test_aronsson_midrange_at_origin_vanishes():
    for eps in (0.2, 0.05):
        assert abs(midrange_remainder(aronsson_field, 0, eps)) <= 1e-14


def test_aronsson_midrange_off_axis_is_order_eps_squared():
    # Richardson: remainder / eps^2 settles to a positive constant (close to 2/9)
    ratios = [midrange_remainder(aronsson_field, 1, eps) / eps**2 for eps in (0.04, 0.02, 0.01, 0.005)]
    assert all(r > 0 for r in ratios)
    diffs = np.abs(np.diff(ratios))
    assert np.all(diffs[1:] < diffs[:-1])
    richardson = 2 * ratios[-1] - ratios[-2]
    assert richardson == pytest.approx(2 / 9, rel=1e-2)


@pytest.mark.parametrize("s", [1.5, 2.0, 2.5, 3.0])
def test_fit_recovers_planted_power_law(s):
    radii = 0.1 * 0.7 ** np.arange(10)
    exponent, coeff, resid = fit_power_law(radii, -3.5 * radii**s)
    assert exponent == pytest.approx(s, abs=1e-6)
    assert coeff == pytest.approx(-3.5, rel=1e-9)
    assert resid < 1e-10


def test_default_eps_max(two_mode_field):
    assert default_eps_max(two_mode_field) == pytest.approx(0.5 * image_radius(two_mode_field.series))
    with pytest.raises(ValueError):
        default_eps_max(aronsson_field)


def test_ladder_preconditions(two_mode_field):
    with pytest.raises(ValueError):
        decay_ladder(two_mode_field, 4, rungs=3)
    with pytest.raises(ValueError):
        decay_ladder(two_mode_field, 4, ratio=1.0)


@pytest.mark.parametrize("p", [3, 4, 6])
def test_main_term_ladder_hits_floor(p):
    field = SeriesField(HodographSeries.from_modes(p, 1, {2: 1}))
    rep = decay_ladder(field, p, rungs=5)
    assert rep.floor_hit
    assert not rep.reliable
    assert math.isnan(rep.fitted_exponent)


def test_two_mode_ladder_exceeds_two(two_mode_field):
    rep = decay_ladder(two_mode_field, 4)
    assert np.all(np.diff(rep.radii) < 0)
    assert np.allclose(rep.radii[1:] / rep.radii[:-1], 0.7)
    assert not rep.floor_hit and rep.reliable
    assert rep.fitted_exponent >= 2.05
    lam2, lam3 = (lambda_k(PLaplaceParams(4, 1), k) for k in (2, 3))
    # measured order is (1 + lam3) / lam2
    assert rep.fitted_exponent == pytest.approx((1 + lam3) / lam2, abs=0.05)


def test_ladder_threads_do_not_change_results(two_mode_field):
    a = decay_ladder(two_mode_field, 4, rungs=5, resolution=32)
    b = decay_ladder(two_mode_field, 4, rungs=5, resolution=32, workers=3)
    assert np.array_equal(a.remainders, b.remainders)
    assert np.array_equal(a.noise_floors, b.noise_floors)


def test_aronsson_ladder_counterexample():
    rep = decay_ladder(aronsson_field, math.inf, center=1, eps_max=0.1)
    assert rep.fitted_exponent == pytest.approx(2.0, abs=0.05)
    assert rep.fitted_coefficient > 0
    origin = decay_ladder(aronsson_field, math.inf, center=0, eps_max=0.1, rungs=5)
    assert origin.floor_hit


def test_contrast_between_finite_p_and_infinity(two_mode_field):
    finite = decay_ladder(two_mode_field, 4, rungs=6)
    inf = decay_ladder(aronsson_field, math.inf, center=1, eps_max=0.1, rungs=6)
    assert finite.fitted_exponent > 2
    assert inf.fitted_exponent < 2.05


def test_report_serialization(tmp_path, two_mode_field):
    rep = decay_ladder(two_mode_field, 4, rungs=4, resolution=16)
    rep.write_csv(tmp_path / "r.csv")
    rep.write_json(tmp_path / "r.json")
    rows = list(csv.DictReader(open(tmp_path / "r.csv")))
    assert list(rows[0]) == ["radius", "remainder", "noise_floor", "used_in_fit"]
    assert [float(r["radius"]) for r in rows] == list(rep.radii)
    assert [float(r["remainder"]) for r in rows] == list(rep.remainders)
    doc = json.loads((tmp_path / "r.json").read_text())
    assert doc == rep.summary()


def test_report_json_encodes_non_finite(tmp_path):
    rep = DecayLadderReport(
        radii=np.array([1.0, 0.5]), remainders=np.zeros(2), noise_floors=np.ones(2),
        used_in_fit=np.zeros(2, bool), fitted_exponent=math.nan, fitted_coefficient=math.nan,
        fit_residual=math.inf, floor_hit=True,
    )
    rep.write_json(tmp_path / "r.json")
    doc = json.loads((tmp_path / "r.json").read_text())
    assert doc == {"exponent": "nan", "coefficient": "nan", "residual": "inf", "floor_hit": True}
