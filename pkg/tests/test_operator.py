import math

import numpy as np
import pytest

from fracseg.core import LogPolarField, build_grid, make_params, sin_power_integral
from fracseg.errors import DomainError, StructuralError
from fracseg.operator import (apply_La, assemble_operator, boundary_trace, dump_stencil,
                              max_principle_violation, residual_norms, theta_transmissibility,
                              weak_residual_norm)
from fracseg.spectral import exact_homogeneous_pair


def test_transmissibility_closed_form():
    # a = 0: 1 / (hi - lo)
    assert theta_transmissibility(0.2, 0.7, 0.0) == pytest.approx(2.0)
    from scipy.integrate import quad

    for a in (-0.5, 0.5):
        ref = 1.0 / quad(lambda x: math.sin(x) ** (-a), 0.0, 0.1)[0]
        assert theta_transmissibility(0.0, 0.1, a) == pytest.approx(ref, rel=1e-9)
    with pytest.raises(DomainError):
        theta_transmissibility(0.5, 0.4, 0.0)
    with pytest.raises(DomainError):
        theta_transmissibility(0.1, 0.2, 1.0)


@pytest.mark.parametrize("s", [0.3, 0.5, 0.75])
def test_constants_and_ray_profiles_are_in_the_kernel(s):
    """``c + beta int_0^theta sin^{-a}`` is annihilated by the angular stencil."""
    p = make_params(s)
    g = build_grid(-1.0, 1.0, 9, 12, p)
    op = assemble_operator(g)
    ones = np.ones(g.shape)
    assert np.max(np.abs(op.matrix @ ones.ravel())) < 1e-12
    prof = np.broadcast_to(sin_power_integral(g.theta, -p.a), g.shape).copy()
    r = (op.matrix @ prof.ravel()).reshape(g.shape)
    assert np.max(np.abs(r[:, 1:-1])) < 1e-11


def test_operator_is_symmetric_on_interior_and_row_sums_vanish():
    g = build_grid(-2.0, 1.0, 17, 10, make_params(0.3))
    op = assemble_operator(g)
    A = op.matrix.toarray()
    assert np.allclose(A.sum(axis=1), 0.0, atol=1e-12)
    inner = np.zeros(g.shape, dtype=bool)
    inner[:, 1:-1] = True
    ii = np.flatnonzero(inner)
    B = A[np.ix_(ii, ii)]
    assert np.allclose(B, B.T, atol=1e-12)


@pytest.mark.parametrize("s", [0.3, 0.75])
def test_weak_residual_of_exact_pair_converges(s):
    p = make_params(s)
    norms = []
    for n_t, n_th in ((33, 16), (65, 32), (129, 64)):
        g = build_grid(-2.0, 2.0, n_t, n_th, p)
        norms.append(weak_residual_norm(exact_homogeneous_pair(g).u))
    orders = np.log2(np.array(norms[:-1]) / np.array(norms[1:]))
    assert np.all(orders >= 1.0)


def test_pointwise_residual_of_separated_solution_small_in_the_bulk():
    # w = e^{s t} psi with psi = 1 solves the Neumann-Neumann problem only for s=0 or -a
    p = make_params(0.3)
    g = build_grid(-1.0, 1.0, 129, 16, p)
    T, _ = g.mesh()
    w = LogPolarField(g, np.exp(-p.a * T))
    res = apply_La(w)
    sup, l2 = residual_norms(res)
    assert sup < 1e-3 and l2 < 1e-3


def test_boundary_trace_of_linear_ray_profile():
    p = make_params(0.5)
    g = build_grid(-1.0, 1.0, 9, 8, p)
    prof = np.broadcast_to(g.theta, g.shape).copy()  # a = 0: weighted flux is 1
    tr0 = boundary_trace(LogPolarField(g, prof), 0)
    trpi = boundary_trace(LogPolarField(g, prof), "pi")
    assert np.allclose(tr0, 1.0) and np.allclose(trpi, -1.0)


def test_max_principle_and_stencil_dump(tmp_path):
    g = build_grid(-1.0, 1.0, 9, 8, make_params(0.5))
    f = exact_homogeneous_pair(g).u
    assert max_principle_violation(f) == 0.0
    op = assemble_operator(g)
    dump_stencil(op, tmp_path / "A.txt")
    lines = (tmp_path / "A.txt").read_text().splitlines()
    assert len(lines) == op.matrix.nnz
    r, c, v = lines[0].split()
    assert int(r) >= 0 and int(c) >= 0 and math.isfinite(float(v))


def test_field_on_other_grid_is_rejected():
    g1 = build_grid(-1.0, 1.0, 9, 8, make_params(0.5))
    g2 = build_grid(-1.0, 1.0, 9, 10, make_params(0.5))
    with pytest.raises(StructuralError):
        apply_La(LogPolarField(g1, np.ones(g1.shape)), assemble_operator(g2))
