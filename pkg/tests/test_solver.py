import json

import numpy as np
import pytest

from fracseg.core import build_grid, make_params, pair_from_arrays
from fracseg.errors import ConfigurationError, DomainError, SolverError
from fracseg.solver import SolverConfig, farfield_data, residual_report, solve_profile
from fracseg.spectral import exact_homogeneous_pair


def test_coarse_solve_converges_and_stays_positive(coarse_solution):
    pair, report = coarse_solution
    assert report.converged
    assert report.final_residual <= 1e-10
    assert report.positivity_violations == 0
    assert np.all(pair.u.values >= 0) and np.all(pair.v.values >= 0)
    assert report.stages[-1] == pytest.approx(4.0)


def test_coarse_solve_is_mirror_symmetric(coarse_solution):
    pair, _ = coarse_solution
    u, v = pair.u.values, pair.v.values
    assert np.max(np.abs(u - v[:, ::-1])) <= 1e-8 * np.max(np.abs(u))


def test_coarse_solve_matches_farfield_data(coarse_solution):
    pair, _ = coarse_solution
    gu, gv = farfield_data(pair.params, pair.grid.t_max, pair.grid.theta)
    assert np.allclose(pair.unscaled().u.values[-1], gu)
    assert np.allclose(pair.unscaled().v.values[-1], gv)


def test_residual_report_of_solution(coarse_solution):
    pair, _ = coarse_solution
    rep = residual_report(pair)
    assert not rep["degenerate"]
    for name in ("u", "v"):
        assert rep[name]["boundary_0"] < 1e-8
        assert rep[name]["boundary_pi"] < 1e-8
        assert rep[name]["interior_weak"] < 1e-8


def test_report_json_roundtrip(coarse_solution, tmp_path):
    _, report = coarse_solution
    text = report.to_json(tmp_path / "r.json")
    data = json.loads(text)
    assert data["converged"] is True
    assert data["iterations"] == report.iterations
    assert json.loads((tmp_path / "r.json").read_text()) == data


def test_continuation_decreases_stage_changes(coarse_solution):
    _, report = coarse_solution
    ch = np.asarray(report.stage_changes)
    assert np.all(np.diff(ch) < 0)
    assert report.continuation_rate is not None and report.continuation_rate > 0


def test_perturbed_start_reaches_same_profile(coarse_solution):
    pair, _ = coarse_solution
    cfg = SolverConfig.at_resolution("coarse", initial_guess="perturbed", noise=0.1, seed=3)
    other, rep = solve_profile(make_params(0.5), cfg)
    assert rep.converged
    diff = np.max(np.abs(other.u.values - pair.u.values)) / np.max(np.abs(pair.u.values))
    assert diff < 1e-8


def test_custom_start_from_previous_solution(coarse_solution):
    pair, _ = coarse_solution
    cfg = SolverConfig.at_resolution("coarse", initial_guess="custom", custom_guess=pair,
                                     schedule=())
    other, rep = solve_profile(make_params(0.5), cfg)
    assert rep.converged and rep.iterations <= 3
    assert np.allclose(other.u.values, pair.u.values, atol=1e-9)


@pytest.mark.parametrize("kw", [
    {"damping": 0.0}, {"damping": 1.5}, {"tol": 0.0}, {"max_iter": 0},
    {"initial_guess": "zero"}, {"initial_guess": "custom"},
    {"schedule": (2.0, 1.0)}, {"schedule": (-7.0,)}, {"n_t": 4},
])
def test_invalid_configs_are_rejected(kw):
    with pytest.raises(ConfigurationError):
        SolverConfig(**kw)
    with pytest.raises(ConfigurationError):
        SolverConfig.at_resolution("huge")


def test_iteration_cap_raises_with_report():
    cfg = SolverConfig(n_t=64, n_theta=16, max_iter=1, schedule=())
    with pytest.raises(SolverError) as info:
        solve_profile(make_params(0.5), cfg)
    assert info.value.report["iterations"] >= 1


def test_residual_report_rejects_other_params():
    g = build_grid(-1.0, 1.0, 9, 8, make_params(0.5))
    pair = exact_homogeneous_pair(g)
    with pytest.raises(DomainError):
        residual_report(pair, make_params(0.3))
    zero = pair_from_arrays(g, np.zeros(g.shape), np.zeros(g.shape))
    assert residual_report(zero)["degenerate"]
