import math

import numpy as np
import pytest

from fracseg.core import build_grid, make_params, theta_rule
from fracseg.errors import DomainError
from fracseg.spectral import (cone_exponent, exact_homogeneous_pair, interval_eigen,
                              poincare_constant, project_mode, rayleigh_quotient,
                              segregated_profile, solve_mixed_eigen, write_eigen_csv)


@pytest.mark.parametrize("s", [0.3, 0.5, 0.75])
def test_first_mixed_eigenvalue(s):
    eig = solve_mixed_eigen(make_params(s), 2, n_theta=2048)
    assert abs(eig.eigenvalues[0] - s * (1 - s)) <= 1e-6
    assert eig.eigenvalues[1] > eig.eigenvalues[0] + 0.5  # simple
    assert np.all(eig.mode(1) > 0)


def test_first_mode_is_half_angle_power():
    s = 0.75
    eig = solve_mixed_eigen(make_params(s), 1, n_theta=1024)
    phi = segregated_profile(eig.nodes, s)[0]
    phi = phi / math.sqrt(np.sum(eig.weights * phi**2))
    assert np.max(np.abs(eig.mode(1) - phi)) < 1e-5


def test_modes_are_orthonormal():
    eig = solve_mixed_eigen(make_params(0.3), 4, n_theta=256)
    G = (eig.eigenfunctions * eig.weights) @ eig.eigenfunctions.T
    assert np.allclose(G, np.eye(4), atol=1e-10)


def test_eigenvalue_converges_at_second_order():
    p = make_params(0.3)
    errs = [abs(solve_mixed_eigen(p, 1, n_theta=n).eigenvalues[0] - p.lambda1)
            for n in (64, 128, 256)]
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders > 1.8)


def test_rayleigh_quotient_of_mode_equals_eigenvalue():
    eig = solve_mixed_eigen(make_params(0.5), 2, n_theta=128)
    for j in (1, 2):
        assert rayleigh_quotient(eig.mode(j), eig) == pytest.approx(eig.eigenvalues[j - 1],
                                                                     rel=1e-10)


def test_cone_exponent_half_laplacian():
    # a = 0, Neumann at 0 and Dirichlet at eps: lambda = (pi / 2 eps)^2, d = sqrt(lambda)
    assert cone_exponent(math.pi / 8, make_params(0.5)) == pytest.approx(4.0, rel=1e-5)
    with pytest.raises(DomainError):
        cone_exponent(math.pi / 3, make_params(0.5))


def test_poincare_constant_half_laplacian():
    # a = 0, Dirichlet on an interval of length h: (pi / h)^2
    assert poincare_constant(math.pi / 4, make_params(0.5)) == pytest.approx(16.0, rel=1e-5)
    with pytest.raises(DomainError):
        poincare_constant(2.0, make_params(0.5))


def test_interval_eigen_validates_range():
    with pytest.raises(DomainError):
        interval_eigen(1.0, 0.5, make_params(0.5), "dirichlet", "dirichlet")


def test_exact_pairs():
    p = make_params(0.75)
    g = build_grid(-1.0, 1.0, 9, 8, p)
    seg = exact_homogeneous_pair(g)
    assert np.allclose(seg.u.values[:, 0], np.exp(0.75 * g.t_nodes))
    assert np.allclose(seg.v.values[:, 0], 0.0)
    deg = exact_homogeneous_pair(g, "degenerate")
    assert np.allclose(deg.u.values[:, 3], np.exp(0.5 * g.t_nodes))
    with pytest.raises(DomainError):
        exact_homogeneous_pair(build_grid(-1.0, 1.0, 9, 8, make_params(0.4)), "degenerate")


def test_project_mode_and_csv(tmp_path):
    p = make_params(0.5)
    rule = theta_rule(64, p.a)
    eig = solve_mixed_eigen(p, 2, rule=rule)
    assert project_mode(eig.mode(1), eig.mode(1), rule) == pytest.approx(1.0)
    assert abs(project_mode(eig.mode(1), eig.mode(2), rule)) < 1e-10
    write_eigen_csv(eig, tmp_path / "e.csv")
    lines = (tmp_path / "e.csv").read_text().splitlines()
    assert lines[0] == "j,lambda,theta,psi"
    assert len(lines) == 1 + 2 * 64
