import json
import math

import numpy as np
import pytest

from fracseg.asymptotics import (align_translation, blowdown_scaling, circle_integral,
                                 default_window, derivative_trace, discrete_exponents,
                                 emden_fowler_residual, extract_expansion, fit_decay,
                                 fit_mode, kappa_profile, translate_pair)
from fracseg.core import build_grid, make_params, pair_from_arrays
from fracseg.errors import DomainError, FitError, HypothesisError
from fracseg.spectral import exact_homogeneous_pair, segregated_profile


def _exact(s, t_min=-2.0, t_max=8.0, n_t=641, n_theta=64):
    return exact_homogeneous_pair(build_grid(t_min, t_max, n_t, n_theta, make_params(s)))


def test_fit_decay_recovers_slope():
    t = np.linspace(0, 5, 101)
    fit = fit_decay(t, 3.0 * np.exp(-1.7 * t), (1.0, 4.0), expected_slope=-1.7)
    assert fit.slope == pytest.approx(-1.7, abs=1e-12)
    assert fit.relative_error < 1e-12
    with pytest.raises(FitError):
        fit_decay(t, -np.ones_like(t), (1.0, 4.0))
    with pytest.raises(FitError):
        fit_decay(t, np.ones_like(t), (10.0, 11.0))


def test_default_window_policy():
    g = build_grid(-6.0, 4.0, 65, 16, make_params(0.5))
    lo, hi = default_window(g)
    assert lo == pytest.approx(1.0) and hi == pytest.approx(2.0)
    with pytest.raises(FitError):
        default_window(build_grid(-6.0, 1.0, 65, 16, make_params(0.5)))


@pytest.mark.parametrize("s", [0.5, 0.75])
def test_blowdown_scaling_of_homogeneous_pair(s):
    pair = _exact(s)
    k0 = int(np.argmin(np.abs(pair.grid.t_nodes)))
    # normalise so that the circle integral at R = 1 is one
    H1 = circle_integral(pair, k0)
    w = pair.unscaled()
    pair = pair_from_arrays(pair.grid, w.u.values / math.sqrt(H1), w.v.values / math.sqrt(H1))
    for k in (160, 320, 480):
        R = float(np.exp(pair.grid.t_nodes[k]))
        bl = blowdown_scaling(pair, R)
        assert bl.L == pytest.approx(R**s, rel=1e-12)
        assert bl.kappa == pytest.approx(R ** (4 * s), rel=1e-12)
        resc = bl.rescaled()
        assert circle_integral(resc, k) == pytest.approx(1.0, rel=1e-12)
    kap = kappa_profile(pair)
    assert kap[k0] == pytest.approx(1.0)
    with pytest.raises(DomainError):
        blowdown_scaling(pair, 1.2345)


def test_unweighted_circle_integral_differs_unless_a_is_zero():
    p5, p3 = _exact(0.5), _exact(0.3)
    k = 100
    assert circle_integral(p5, k, False) == pytest.approx(circle_integral(p5, k, True))
    assert circle_integral(p3, k, False) != pytest.approx(circle_integral(p3, k, True))


def test_emden_fowler_weak_residual_converges():
    norms = []
    for n_t, n_th in ((81, 16), (161, 32), (321, 64)):
        ef = emden_fowler_residual(_exact(0.75, 0.0, 4.0, n_t, n_th))
        norms.append(ef["u"]["interior_weak"])
    assert norms[0] > norms[1] > norms[2]
    assert math.log2(norms[1] / norms[2]) > 1.0


def test_emden_fowler_defect_vanishes_on_the_ray_where_field_lives():
    ef = emden_fowler_residual(_exact(0.5))
    # u lives on theta=0, where v vanishes, so the coupling term is zero there
    assert ef["u"]["boundary_0"] < 1e-2
    assert ef["u"]["boundary_pi"] > 0.1


def _synthetic(grid, A, C, delta):
    """First-mode field ``(e^{st} + A e^{(s-1)t} + C e^{(s-1-delta)t}) phi``."""
    s = grid.params.s
    T, TH = grid.mesh()
    phi = segregated_profile(TH, s)[0]
    g = np.exp(s * T) + A * np.exp((s - 1) * T) + C * np.exp((s - 1 - delta) * T)
    return g * phi


def test_fit_mode_recovers_subleading_coefficient_and_rate():
    g = build_grid(-2.0, 8.0, 641, 64, make_params(0.75))
    fit = fit_mode(g, _synthetic(g, 0.4, 0.3, 0.5), (1.0, 6.0), exponent="continuum")
    # the window mean of c keeps the O(e^{-(1+delta) t}) term
    assert fit.leading == pytest.approx(1.0, abs=0.3 * math.exp(-1.5))
    assert fit.coeff == pytest.approx(0.4, abs=1e-6)
    assert fit.rate == pytest.approx(0.5, abs=1e-4)
    flat = fit_mode(g, _synthetic(g, 0.4, 0.0, 0.5), (1.0, 6.0), exponent="continuum")
    assert math.isinf(flat.rate) and flat.coeff == pytest.approx(0.4, abs=1e-8)
    with pytest.raises(DomainError):
        fit_mode(g, _synthetic(g, 0.4, 0.0, 0.5), (1.0, 6.0), exponent="other")
    with pytest.raises(FitError):
        fit_mode(g, _synthetic(g, 0.4, 0.3, -0.5), (1.0, 6.0), exponent="continuum")


def test_discrete_exponents_converge_to_continuum():
    errs = []
    for n_t in (161, 321, 641):
        g = build_grid(-2.0, 8.0, n_t, 256, make_params(0.5))
        dp, dm, lam = discrete_exponents(g)
        errs.append(max(abs(dp - 0.5), abs(dm + 0.5)))
    # the angular eigenvalue error (fixed n_theta) sets the floor
    assert errs[0] > errs[1] > errs[2]
    assert errs[-1] < 1e-5


@pytest.mark.parametrize("s", [0.5, 0.75])
def test_expansion_of_homogeneous_pair(s):
    rep = extract_expansion(_exact(s), exponent="continuum")
    assert rep.b_scale == pytest.approx(1.0, abs=1e-10)
    assert abs(rep.a_coeff) < 1e-10 and abs(rep.b_coeff) < 1e-10 and abs(rep.T) < 1e-10
    assert rep.slopes["u_0"]["slope"] == pytest.approx(s, abs=1e-10)
    assert rep.slopes["v_pi"]["slope"] == pytest.approx(s, abs=1e-10)
    data = json.loads(rep.to_json())
    assert data["b_scale"] == pytest.approx(rep.b_scale)


def test_expansion_needs_s_above_quarter():
    with pytest.raises(HypothesisError):
        extract_expansion(_exact(0.25))
    rep = extract_expansion(_exact(0.25), subleading=False, exponent="continuum")
    assert rep.b_scale == pytest.approx(1.0, abs=1e-10)


@pytest.mark.parametrize("s", [0.5, 0.75])
def test_translation_moves_subleading_coefficients(s):
    pair = _exact(s)
    rep = extract_expansion(pair, exponent="continuum")
    shifted, inside = translate_pair(pair, 0.3)
    assert inside.mean() > 0.9
    rep2 = extract_expansion(shifted, exponent="continuum", window=(2.0, 6.0))
    assert rep2.a_coeff == pytest.approx(0.3 * s, rel=2e-2)
    assert rep2.b_coeff == pytest.approx(-0.3 * s, rel=2e-2)
    assert rep2.coeff_sum == pytest.approx(rep.coeff_sum, abs=1e-6)
    t0, mismatch = align_translation(rep, rep2, pair, shifted)
    assert t0 == pytest.approx(0.3, rel=1e-6)
    assert mismatch < 1e-6


def test_swapping_fields_mirrors_coefficients():
    pair = _exact(0.75)
    shifted, _ = translate_pair(pair, 0.3)
    w = shifted.unscaled()
    swapped = pair_from_arrays(w.grid, w.v.values[:, ::-1], w.u.values[:, ::-1])
    r1 = extract_expansion(shifted, exponent="continuum", window=(2.0, 6.0))
    r2 = extract_expansion(swapped, exponent="continuum", window=(2.0, 6.0))
    assert r2.a_coeff == pytest.approx(r1.b_coeff, abs=1e-8)
    assert r2.T == pytest.approx(-r1.T, abs=1e-8)


def test_align_translation_rejects_different_scales():
    pair = _exact(0.75)
    rep = extract_expansion(pair, exponent="continuum")
    w = pair.unscaled()
    big = pair_from_arrays(w.grid, 2 * w.u.values, 2 * w.v.values)
    rep2 = extract_expansion(big, exponent="continuum")
    with pytest.raises(HypothesisError):
        align_translation(rep, rep2, pair, big)


def test_derivative_trace_of_homogeneous_pair():
    pair = _exact(0.5)
    t = pair.grid.t_nodes
    d = derivative_trace(pair, "u", 0)
    # u(x, 0) = x^s on the positive axis: |u_x| = s x^{s-1}
    assert np.allclose(d[5:-5], 0.5 * np.exp(-0.5 * t[5:-5]), rtol=1e-6)
