import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from rbcsmooth._optimize import argmin_positive, golden_section
from rbcsmooth.bandwidth import (
    METHODS,
    Pilot,
    apply_bwcheck,
    bwcheck_floor,
    ce_argmin,
    ce_objective,
    h_ce_closed_form,
    h_ce_dpi,
    h_ce_rot,
    h_imse_dpi,
    h_mse_closed_form,
    h_mse_dpi,
    h_rot,
    mse_argmin,
    mse_objective,
    pilot_derivatives,
    select_bandwidths,
)
from rbcsmooth.errors import FlatObjectiveError, InvalidInputError, UnsupportedMethodError
from rbcsmooth.lpcore import Sample
from rbcsmooth.montecarlo import dgp_draw
from rbcsmooth.variance import VceSpec


def test_golden_section_quadratic():
    assert_allclose(golden_section(lambda t: (t - 1.3) ** 2, 0, 4, tol=1e-12), 1.3, rtol=1e-8)


def test_argmin_positive_endpoints():
    assert argmin_positive(lambda h: h, 0.1, 2.0) == 0.1
    assert argmin_positive(lambda h: -h, 0.1, 2.0) == 2.0
    with pytest.raises(ValueError):
        argmin_positive(lambda h: h, 1.0, 0.5)


@given(st.floats(0.01, 100), st.floats(0.01, 100), st.integers(50, 50_000),
       st.sampled_from([(1, 0), (3, 0), (2, 1), (3, 2), (1, 1)]))
@settings(max_examples=100, deadline=None)
def test_closed_form_is_argmin(b1, v, n, pnu):
    p, nu = pnu
    h = h_mse_closed_form(b1 * b1, v, n, p, nu)
    num = mse_argmin(b1, 0.0, v, n, p, nu, h / 50, h * 50)
    assert_allclose(num, h, rtol=1e-6)


def test_closed_form_p1():
    # h = (V / (4 B^2 n))^(1/5) for p=1, nu=0
    assert_allclose(h_mse_closed_form(2.0, 3.0, 400, 1, 0), (3.0 / (4 * 2.0 * 400)) ** 0.2)


def test_mse_objective_values():
    assert_allclose(mse_objective(0.5, 2.0, 0.0, 1.0, 100, 1, 0), 0.5 ** 4 * 4 + 1 / 50)
    # even case keeps the h*B2 term inside the square
    assert_allclose(mse_objective(0.5, 2.0, 1.0, 1.0, 100, 2, 0), 0.5 ** 6 * 2.5 ** 2 + 1 / 50)


@given(st.floats(0.1, 10), st.floats(0.1, 10), st.integers(100, 5000), st.sampled_from([1, 3]))
@settings(max_examples=60, deadline=None)
def test_ce_closed_form_is_argmin(e1, e2, n, p):
    h = h_ce_closed_form(e1, e2, n, p)
    num = ce_argmin(e1, e2, 0.0, n, p, h / 50, h * 50)
    assert_allclose(num, h, rtol=1e-6)
    assert ce_objective(h, e1, e2, 0.0, 0.0, 0.0, n, p) > 0


def test_ce_rot_factors():
    assert h_ce_rot(1.0, 500, 1) == pytest.approx(500 ** (-1 / 20), rel=1e-15)
    assert h_ce_rot(1.0, 500, 2) == pytest.approx(500 ** (-4 / 45), rel=1e-15)
    # the quoted 5-digit values are approximations (500^(-1/20) = 0.732911...)
    assert_allclose(h_ce_rot(1.0, 500, 1), 0.73255, rtol=1e-3)
    assert_allclose(h_ce_rot(1.0, 500, 2), 0.57558, rtol=1e-3)
    assert h_ce_rot(0.3, 1, 1) == 0.3
    with pytest.raises(InvalidInputError):
        h_ce_rot(-1.0, 500, 1)


def test_bwcheck_floor_brute_force(rng):
    x = rng.uniform(0, 1, 50)
    s = Sample(x, x)
    for x0 in (0.0, 0.37, 1.2):
        for nmin in (1, 5, 21, 50):
            f = bwcheck_floor(s, x0, nmin)
            assert np.count_nonzero(np.abs(x - x0) <= f) >= nmin
            assert np.count_nonzero(np.abs(x - x0) < f) < nmin
    assert apply_bwcheck(10.0, s, 0.5, 21) == 10.0
    assert apply_bwcheck(1e-6, s, 0.5, 21) == bwcheck_floor(s, 0.5, 21)


@pytest.mark.parametrize("p", [1, 2])
def test_pilot_derivatives_exact_on_polynomials(rng, p):
    x = rng.uniform(0, 1, 300)
    coef = np.array([0.3, -1.0, 2.0, 1.5, -2.5, 0.7])[: p + 3]
    y = np.polyval(coef[::-1], x)
    s = Sample(x, y)
    der = np.polynomial.Polynomial(coef)
    for x0 in (0.0, 0.5, 1.0):
        d = pilot_derivatives(s, x0, p)
        assert_allclose(d["d_p1"], der.deriv(p + 1)(x0), rtol=1e-6, atol=1e-6)
        assert_allclose(d["d_p2"], der.deriv(p + 2)(x0), rtol=1e-6, atol=1e-6)


def test_pilot_bandwidth_wider_at_boundary(sim_sample):
    pil = Pilot.build(sim_sample, 1, "epa", VceSpec())
    assert pil.pilot_bandwidth("d_p1", 0.0) > pil.h_d1
    assert pil.pilot_bandwidth("d_p1", 0.5) == pil.h_d1


def test_imse_single_point_equals_mse(sim_sample):
    for x0 in (0.0, 0.3):
        assert_allclose(h_imse_dpi(sim_sample, [x0]), h_mse_dpi(sim_sample, x0), rtol=1e-12)


def test_imse_symmetric_design_equals_pointwise(rng):
    half = rng.uniform(0, 0.5, 200)
    x = np.r_[half, 1.0 - half]
    noise = rng.standard_normal(200)
    y = np.r_[np.cos(6 * half) + 0.3 * noise, np.cos(6 * half) + 0.3 * noise]
    s = Sample(x, y)
    h_imse = h_imse_dpi(s, [0.2, 0.8], bwcheck=0)
    assert_allclose(h_imse, h_mse_dpi(s, 0.2, bwcheck=0), rtol=1e-8)
    assert_allclose(h_imse, h_mse_dpi(s, 0.8, bwcheck=0), rtol=1e-8)


def test_selected_bandwidths_respect_floor_and_range(sim_sample):
    grid = np.linspace(0, 1, 9)
    for method in METHODS:
        choices = select_bandwidths(sim_sample, grid, method)
        for c in choices:
            assert np.isfinite(c.h), (method, c)
            assert c.h >= bwcheck_floor(sim_sample, c.eval, 21) - 1e-15
            assert c.h <= np.ptp(sim_sample.x) + 1e-15
            assert c.b == pytest.approx(c.h)
        if method.startswith("imse"):
            assert len({c.h for c in choices}) == 1


def test_ce_dpi_is_local_minimum(sim_sample):
    from rbcsmooth import bandwidth as bw

    seen = {}
    orig = bw.ce_argmin

    def spy(e1, e2, e3, n, p, lo, hi, e4=0.0, e5=0.0):
        seen.update(e=(e1, e2, e3), n=n, p=p)
        return orig(e1, e2, e3, n, p, lo, hi, e4, e5)

    bw.ce_argmin = spy
    try:
        h = h_ce_dpi(sim_sample, 0.25, bwcheck=0)
    finally:
        bw.ce_argmin = orig
    e1, e2, e3 = seen["e"]

    def f(t):
        return ce_objective(t, e1, e2, e3, 0.0, 0.0, seen["n"], seen["p"])

    assert f(h) <= f(0.5 * h) and f(h) <= f(2.0 * h)


def test_ce_dpi_rate_relative_to_mse():
    """Median h_ce/h_mse shrinks by about 4^(-1/20) from n=500 to n=2000."""
    ratios = {}
    for n in (500, 2000):
        ce, ms = [], []
        for r in range(200):
            s = dgp_draw(n, np.random.default_rng([n, r]))
            pil = Pilot.build(s, 1, "epa", VceSpec())
            ce.append(h_ce_dpi(s, 0.5, pilot=pil))
            ms.append(h_mse_dpi(s, 0.5, pilot=pil))
        ratios[n] = np.median(ce) / np.median(ms)
    change = ratios[2000] / ratios[500]
    assert abs(change / 4 ** (-1 / 20) - 1) < 0.15


def test_even_order_numerical_and_interior_variants(sim_sample):
    h_full = h_mse_dpi(sim_sample, 0.5, p=2, nu=0)
    h_int = h_mse_dpi(sim_sample, 0.5, p=2, nu=0, interior=True)
    assert 0 < h_full < 1 and 0 < h_int < 1
    # boundary point: full-bias objective keeps the h^(p+1) rate term
    assert h_mse_dpi(sim_sample, 0.0, p=2) > 0
    with pytest.raises(UnsupportedMethodError, match="ce-dpi requires odd p"):
        select_bandwidths(sim_sample, [0.5], "ce-dpi", p=2)
    with pytest.raises(UnsupportedMethodError):
        h_ce_dpi(sim_sample, 0.5, p=2)


def test_rot_targets(sim_sample):
    h1 = h_rot(sim_sample, 0.5, target="mse")
    h2 = h_rot(sim_sample, [0.0, 0.5, 1.0], target="imse")
    assert 0 < h1 < 1 and 0 < h2 < 1
    with pytest.raises(InvalidInputError):
        h_rot(sim_sample, [0.1, 0.2], target="mse")


def test_flat_objective_guard(rng):
    x = rng.uniform(0, 1, 200)
    s = Sample(x, 2.0 + 3.0 * x)
    warns = []
    h = h_mse_dpi(s, 0.5, warnings=warns)
    assert "degenerate-bias" in warns
    assert_allclose(h, 2 * bwcheck_floor(s, 0.5, 21))
    with pytest.raises(FlatObjectiveError, match="supply h"):
        h_mse_dpi(s, 0.5, strict=True)


def test_per_point_failure_is_flagged(sim_sample):
    from rbcsmooth.inference import FitSpec, lprobust

    rows = lprobust(sim_sample, FitSpec(bwselect="mse-dpi", bwcheck=0), grid=[0.5, 5.0])
    assert np.isfinite(rows[0].est)
    assert np.isnan(rows[1].est) and "singular-design" in rows[1].warnings
    # with the floor on, the window grows until it holds 21 observations
    wide = select_bandwidths(sim_sample, [5.0], "mse-dpi")[0]
    assert wide.h >= bwcheck_floor(sim_sample, 5.0, 21)


def test_invalid_arguments(sim_sample):
    with pytest.raises(InvalidInputError):
        select_bandwidths(sim_sample, [0.5], "cv")
    with pytest.raises(InvalidInputError):
        select_bandwidths(sim_sample, [0.5], "mse-dpi", rho=0)
    with pytest.raises(InvalidInputError):
        select_bandwidths(sim_sample, [0.5], "mse-dpi", p=1, nu=2)
    with pytest.raises(InvalidInputError):
        select_bandwidths(dgp_draw(10, 1), [0.5], "mse-dpi", bwcheck=21)


def test_bandwidth_shrinks_with_n():
    hs = [h_imse_dpi(dgp_draw(n, np.random.default_rng(n)), [0.25, 0.5, 0.75])
          for n in (400, 6400)]
    # 16x the data: expect roughly 16^(-1/5) = 0.57
    assert 0.35 < hs[1] / hs[0] < 0.85
    assert math.isfinite(hs[1])
