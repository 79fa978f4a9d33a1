import math

import numpy as np
import pytest
from scipy.special import gamma, kv

from fracseg.core import make_params
from fracseg.errors import DomainError, TruncationError
from fracseg.kernels import (Extension, appendix_checks, ball_mean, fourier_kernel,
                             graded_window, harnack_certificate, hyperbolic_distance,
                             kernel_mass, kernel_table, kernel_tail_mass, make_kernel,
                             poisson_extend, poisson_kernel, robin_half_disk, solve_phi,
                             sphere_mean)


def _bessel_phi(t, s):
    return 2 ** (1 - s) / gamma(s) * t**s * kv(s, t)


def test_half_laplacian_kernel_is_cauchy():
    ev = make_kernel(make_params(0.5))
    assert poisson_kernel(0.0, 1.0, ev) == pytest.approx(1 / math.pi, rel=1e-14)
    x = np.array([-2.0, 0.3, 5.0])
    assert np.allclose(poisson_kernel(x, 2.0, ev), 2.0 / (math.pi * (x**2 + 4.0)))
    assert ev.exponent == pytest.approx(1.0)


@pytest.mark.parametrize("s", [0.3, 0.5, 0.75])
@pytest.mark.parametrize("y", [0.5, 1.0, 3.0])
def test_kernel_has_unit_mass(s, y):
    assert kernel_mass(y, make_kernel(make_params(s))) == pytest.approx(1.0, abs=1e-8)


@pytest.mark.parametrize("s", [0.3, 0.75])
def test_kernel_scaling_identity(s):
    ev = make_kernel(make_params(s))
    x = np.linspace(-3, 3, 13)
    for lam in (0.5, 2.0):
        assert np.allclose(poisson_kernel(lam * x, lam, ev), poisson_kernel(x, 1.0, ev) / lam)


def test_tail_mass_complements_window():
    ev = make_kernel(make_params(0.3))
    x = graded_window(1e6, 5.0, 500, 2000)
    inside = np.trapezoid(poisson_kernel(x, 1.0, ev), x)
    assert inside + kernel_tail_mass(x[0], x[-1], 1.0, ev) == pytest.approx(1.0, abs=1e-5)


def test_indicator_extension_at_centre():
    ev = make_kernel(make_params(0.5))
    xi = np.linspace(-50, 50, 200001)
    g = (np.abs(xi) <= 1).astype(float)
    g[np.abs(np.abs(xi) - 1) < 1e-12] = 0.5
    # Cauchy mass of [-1, 1] at height 1 is (2/pi) atan 1
    assert poisson_extend(g, xi, [1.0], ev, x_eval=[0.0])[0, 0] == pytest.approx(0.5, abs=1e-6)


def test_constant_data_extends_to_constant():
    ev = make_kernel(make_params(0.5))
    x = graded_window(1e8, 5.0, 500, 2000)
    ext = poisson_extend(np.ones_like(x), x, [0.5, 1.0, 2.0], ev, x_eval=[0.0, 1.0, 3.0])
    assert ext.shape == (3, 3)
    assert np.allclose(ext, 1.0, atol=1e-5)


def test_extension_of_nonnegative_data_is_nonnegative():
    ev = make_kernel(make_params(0.3))
    x = np.linspace(-200, 200, 40001)
    g = np.exp(-x**2) * (1 + np.sin(3 * x)) ** 2
    ext = Extension(g, x, ev)
    X, Y = np.meshgrid(np.linspace(-3, 3, 9), np.geomspace(0.05, 5, 6))
    assert np.all(ext(X, Y) >= 0)


def test_short_window_raises_truncation():
    ev = make_kernel(make_params(0.5))
    x = np.linspace(-5, 5, 201)
    with pytest.raises(TruncationError):
        poisson_extend(np.ones_like(x), x, [1.0], ev)
    with pytest.raises(DomainError):
        poisson_extend(np.ones_like(x), x, [0.0], ev, tail_tol=1.0)
    with pytest.raises(DomainError):
        poisson_extend(np.ones(3), x, [1.0], ev)


def test_kernel_validation():
    with pytest.raises(DomainError):
        make_kernel(make_params(0.5), n=0)
    ev2 = make_kernel(make_params(0.5), n=2)
    with pytest.raises(DomainError):
        kernel_mass(1.0, ev2)
    with pytest.raises(DomainError):
        poisson_kernel(0.0, -1.0, make_kernel(make_params(0.5)))


@pytest.mark.parametrize("s", [0.3, 0.5, 0.75])
def test_phi_matches_bessel_closed_form(s):
    ph = solve_phi(make_params(s))
    assert ph.at_zero() == pytest.approx(1.0, abs=1e-6)
    assert np.max(np.abs(ph.phi - _bessel_phi(ph.t, s))) < 1e-6
    assert np.all(np.diff(ph.phi) <= 0) and np.all(ph.phi > 0)
    for z in (0.5, 1.0, 2.0):
        assert ph(z) == pytest.approx(_bessel_phi(z, s), abs=1e-6)


@pytest.mark.parametrize("s", [0.3, 0.75])
def test_fourier_transform_of_kernel_is_phi(s):
    ev = make_kernel(make_params(s))
    for z in (0.5, 1.0, 2.0):
        assert fourier_kernel(z, ev) == pytest.approx(_bessel_phi(z, s), abs=1e-6)


def test_phi_validation(tmp_path):
    with pytest.raises(DomainError):
        solve_phi(make_params(0.5), T_max=5.0)
    ph = solve_phi(make_params(0.5), n_points=200)
    ph.to_csv(tmp_path / "phi.csv")
    lines = (tmp_path / "phi.csv").read_text().splitlines()
    assert lines[0] == "t,phi,dphi" and len(lines) == 201


def test_hyperbolic_distance():
    assert hyperbolic_distance([0, 1], [0, math.e]) == pytest.approx(1.0)
    z1, z2 = np.array([0.3, 0.7]), np.array([-1.2, 2.5])
    assert hyperbolic_distance(z1, z2) == pytest.approx(hyperbolic_distance(z2, z1))
    assert hyperbolic_distance(z1, z1) == 0.0
    # invariant under z -> lam z + x0
    assert hyperbolic_distance(3 * z1 + [1, 0], 3 * z2 + [1, 0]) == pytest.approx(
        hyperbolic_distance(z1, z2))
    with pytest.raises(DomainError):
        hyperbolic_distance([0, 0], [0, 1])


def test_harnack_certificate():
    centres = [(x, y) for x, y in zip(np.linspace(-3, 3, 10), np.linspace(0.3, 3, 10))]
    one = harnack_certificate(lambda x, y: np.ones_like(x), centres)
    assert one.yau == 0.0 and one.gradient == 0.0 and one.harnack == 1.0
    ev = make_kernel(make_params(0.5))
    xi = np.linspace(-50, 50, 200001)
    g = (np.abs(xi) <= 1).astype(float)
    c1 = harnack_certificate(Extension(g, xi, ev), centres, seed=1)
    c2 = harnack_certificate(Extension(g, xi, ev), centres, seed=1)
    assert c1 == c2
    assert 0 < c1.yau < 10 and 0 < c1.gradient < 10 and 1 < c1.harnack < 100
    with pytest.raises(DomainError):
        harnack_certificate(lambda x, y: np.ones_like(x), [(0.0, -1.0)])
    with pytest.raises(DomainError):
        harnack_certificate(lambda x, y: -np.ones_like(x), centres)


def test_sphere_and_ball_means_of_constants():
    from scipy.special import beta

    for s in (0.3, 0.75):
        p = make_params(s)
        B = beta(0.5, 0.5 + p.a / 2)  # int_0^pi sin^a
        one = lambda x, y: np.ones_like(x)  # noqa: E731
        assert sphere_mean(one, 0.7, p) == pytest.approx(2 * B, rel=1e-12)
        assert ball_mean(one, 0.7, p) == pytest.approx(2 * B / (2 + p.a), rel=1e-12)
        sq = lambda x, y: x**2 + y**2  # noqa: E731
        assert sphere_mean(sq, 0.7, p) == pytest.approx(0.49 * 2 * B, rel=1e-12)


def test_robin_solution_is_bounded_and_decreasing_in_M():
    p = make_params(0.5)
    v10 = robin_half_disk(p, 10.0, n_t=128, n_theta=32)
    v100 = robin_half_disk(p, 100.0, n_t=128, n_theta=32)
    assert np.all(v10.values >= -1e-12) and np.all(v10.values <= 1 + 1e-12)
    assert np.all(v100.values <= v10.values + 1e-12)
    with pytest.raises(DomainError):
        robin_half_disk(p, 0.0)


def test_kernel_table(tmp_path):
    ev = make_kernel(make_params(0.5))
    kernel_table(ev, np.linspace(-1, 1, 5), [1.0, 2.0], tmp_path / "k.csv")
    lines = (tmp_path / "k.csv").read_text().splitlines()
    assert lines[0] == "x,y,P" and len(lines) == 11


@pytest.mark.parametrize("s", [0.3, 0.5, 0.75])
def test_appendix_checks(s):
    rep = appendix_checks(make_params(s))
    assert rep.passed, rep.failures
    assert rep.mean_monotone and rep.sup_stable and rep.decay_ok
