"""Nonlinear solve of the segregation profile on a truncated log-polar domain.

Unknowns are the unscaled fields ``w_u, w_v`` at every node, rays
included.  Per field the equations are

* interior columns, ``t < t_max``: finite-volume balance of
  ``div(e^{at} sin^a grad w) = 0`` (zero flux through ``t = t_min``);
* ray columns: discrete weighted trace ``= e^{(1-a)t} w w_other**2``;
* ``t = t_max``: Dirichlet data from the leading-order blow-down profile.

The fully coupled system is solved by damped Newton with a sparse direct
factorisation.  A field-wise Gauss-Seidel pass (solve for ``u`` with ``v``
frozen, then for ``v``) is used as a positivity-preserving warm-up and as
the fallback when a Newton step cannot be accepted.
"""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .core import (FieldPair, FracParam, LogPolarGrid, build_grid, pair_from_arrays,
                   regrid_t)
from .errors import ConfigurationError, DomainError, PositivityError, SolverError
from .operator import (DiscreteOperator, apply_La, assemble_operator, boundary_trace,
                       residual_norms, weak_residual_norm)
from .spectral import segregated_profile

log = logging.getLogger(__name__)

INITIAL_GUESSES = ("farfield-extension", "perturbed", "custom")
RESOLUTIONS = {"coarse": (256, 64), "reference": (512, 128), "fine": (1024, 256)}


@dataclass
class SolverConfig:
    """Grid and iteration settings for :func:`solve_profile`, including continuation.

    ``schedule`` lists the intermediate outer radii (in ``t``); the final
    ``t_max`` is appended if missing.  ``n_t`` is the node count of the
    final domain; intermediate domains reuse its spacing.
    """

    t_min: float = -6.0
    t_max: float = 4.0
    n_t: int = 512
    n_theta: int = 128
    damping: float = 1.0
    tol: float = 1e-10
    max_iter: int = 40
    schedule: tuple = (1.0, 2.0, 3.0)
    initial_guess: str = "farfield-extension"
    noise: float = 0.1
    seed: int = 0
    warmup_sweeps: int = 2
    custom_guess: FieldPair | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.schedule = tuple(float(t) for t in self.schedule)
        if not 0.0 < self.damping <= 1.0:
            raise ConfigurationError(f"damping must lie in (0, 1], got {self.damping}")
        if not self.tol > 0:
            raise ConfigurationError(f"tolerance must be positive, got {self.tol}")
        if self.max_iter < 1:
            raise ConfigurationError("max_iter must be at least 1")
        if self.initial_guess not in INITIAL_GUESSES:
            raise ConfigurationError(f"unknown initial guess {self.initial_guess!r}")
        if self.initial_guess == "custom" and self.custom_guess is None:
            raise ConfigurationError("initial_guess='custom' needs custom_guess")
        stages = self.stages()
        if np.any(np.diff(stages) <= 0) or stages[0] <= self.t_min:
            raise ConfigurationError(f"schedule must increase from above t_min: {stages}")
        if self.n_t < 8 or self.n_theta < 8:
            raise ConfigurationError("n_t and n_theta must be at least 8")

    @classmethod
    def at_resolution(cls, name: str, **kw) -> "SolverConfig":
        if name not in RESOLUTIONS:
            raise ConfigurationError(f"unknown resolution {name!r}")
        n_t, n_theta = RESOLUTIONS[name]
        return cls(n_t=n_t, n_theta=n_theta, **kw)

    @property
    def h_t(self) -> float:
        return (self.t_max - self.t_min) / (self.n_t - 1)

    def stages(self) -> list[float]:
        st = [t for t in self.schedule if t < self.t_max]
        return st + [self.t_max]

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("custom_guess")
        d["schedule"] = list(self.schedule)
        return d


@dataclass
class SolveReport:
    iterations: int = 0
    residual_history: list = field(default_factory=list)
    final_residual: float = math.inf
    positivity_violations: int = 0
    fallback_sweeps: int = 0
    stages: list = field(default_factory=list)
    stage_changes: list = field(default_factory=list)
    continuation_rate: float | None = None
    converged: bool = False
    seconds: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict(), indent=2, sort_keys=True, default=float)
        if path is not None:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(text + "\n")
        return text


def farfield_data(params: FracParam, t_max: float, theta):
    """Dirichlet data ``e^{s t_max} (cos(theta/2)**(2s), sin(theta/2)**(2s))``."""
    phi, psi = segregated_profile(theta, params.s)
    scale = math.exp(params.s * t_max)
    return scale * phi, scale * psi


class _System:
    """Residual and Jacobian of the discrete problem on one grid."""

    def __init__(self, grid: LogPolarGrid):
        self.grid = grid
        self.op: DiscreteOperator = assemble_operator(grid)
        n_t, ncol = grid.shape
        self.n = n_t * ncol
        a = grid.params.a
        self.c = np.exp((1.0 - a) * grid.t_nodes)
        idx = np.arange(self.n).reshape(n_t, ncol)
        self.ray0, self.raypi = idx[:, 0], idx[:, -1]
        self.dirichlet = idx[-1]
        gu, gv = farfield_data(grid.params, grid.t_max, grid.theta)
        self.gu, self.gv = gu, gv
        keep = np.ones(self.n)
        keep[self.dirichlet] = 0.0
        K = sp.diags(keep)
        self.A = (K @ self.op.matrix + sp.diags(1.0 - keep)).tocsr()
        self.diagA = np.abs(self.A.diagonal())

    def boundary_rows(self):
        return np.concatenate([self.ray0[:-1], self.raypi[:-1]])

    def residual(self, wu, wv):
        Fu = self.A @ wu
        Fv = self.A @ wv
        rows = self.boundary_rows()
        c = np.concatenate([self.c[:-1], self.c[:-1]])
        Fu[rows] -= c * wu[rows] * wv[rows] ** 2
        Fv[rows] -= c * wv[rows] * wu[rows] ** 2
        Fu[self.dirichlet] -= self.gu
        Fv[self.dirichlet] -= self.gv
        return Fu, Fv

    def jacobian(self, wu, wv):
        rows = self.boundary_rows()
        c = np.concatenate([self.c[:-1], self.c[:-1]])
        du = sp.csr_matrix((-c * wv[rows] ** 2, (rows, rows)), shape=(self.n, self.n))
        dv = sp.csr_matrix((-c * wu[rows] ** 2, (rows, rows)), shape=(self.n, self.n))
        cross_u = sp.csr_matrix((-2 * c * wu[rows] * wv[rows], (rows, rows)),
                                shape=(self.n, self.n))
        cross_v = sp.csr_matrix((-2 * c * wv[rows] * wu[rows], (rows, rows)),
                                shape=(self.n, self.n))
        return sp.bmat([[self.A + du, cross_u], [cross_v, self.A + dv]], format="csc")

    def scale(self, wu, wv):
        """Row scales: diagonal size times the local field magnitude."""
        n_t, ncol = self.grid.shape
        mag = np.maximum(np.abs(wu).reshape(n_t, ncol).max(axis=1),
                         np.abs(wv).reshape(n_t, ncol).max(axis=1))
        mag = np.repeat(np.maximum(mag, 1e-300), ncol)
        return self.diagA * mag

    def merit(self, wu, wv):
        Fu, Fv = self.residual(wu, wv)
        sc = self.scale(wu, wv)
        return float(max(np.max(np.abs(Fu) / sc), np.max(np.abs(Fv) / sc)))

    def frozen_solve(self, w_other, data):
        """Linear solve for one field with the other frozen in the trace term."""
        rows = self.boundary_rows()
        c = np.concatenate([self.c[:-1], self.c[:-1]])
        M = self.A - sp.csr_matrix((c * w_other[rows] ** 2, (rows, rows)),
                                   shape=(self.n, self.n))
        rhs = np.zeros(self.n)
        rhs[self.dirichlet] = data
        return spla.spsolve(M.tocsc(), rhs)

    def gauss_seidel(self, wu, wv, sweeps):
        for _ in range(sweeps):
            wu = self.frozen_solve(wv, self.gu)
            wv = self.frozen_solve(wu, self.gv)
        return wu, wv


def _newton(system: _System, wu, wv, config: SolverConfig, report: SolveReport):
    merit = system.merit(wu, wv)
    report.residual_history.append(merit)
    for _ in range(config.max_iter):
        if merit <= config.tol:
            return wu, wv, merit
        Fu, Fv = system.residual(wu, wv)
        J = system.jacobian(wu, wv)
        try:
            step = spla.spsolve(J, -np.concatenate([Fu, Fv]))
        except RuntimeError as exc:  # singular factor
            raise SolverError(f"Newton linear solve failed: {exc}",
                              report=report.to_dict()) from exc
        su, sv = step[:system.n], step[system.n:]
        alpha = config.damping
        accepted = False
        while alpha > 1e-4:
            nu, nv = wu + alpha * su, wv + alpha * sv
            if nu.min() >= 0.0 and nv.min() >= 0.0:
                trial = system.merit(nu, nv)
                if trial < merit:
                    accepted = True
                    break
            alpha *= 0.5
        report.iterations += 1
        if accepted:
            wu, wv, merit = nu, nv, trial
        else:
            # fallback keeps iterates positive and makes progress on the coupling
            wu, wv = system.gauss_seidel(wu, wv, 1)
            report.fallback_sweeps += 1
            trial = system.merit(wu, wv)
            if trial >= merit:
                raise SolverError("no descent from Newton or Gauss-Seidel",
                                  report=report.to_dict())
            merit = trial
        report.residual_history.append(merit)
        # a converged relative update is also accepted
        rel = alpha * max(np.max(np.abs(su)), np.max(np.abs(sv))) / max(
            np.max(np.abs(wu)), np.max(np.abs(wv)))
        if accepted and rel <= 1e-3 * config.tol and merit <= 1e3 * config.tol:
            return wu, wv, merit
    return wu, wv, merit


def _initial_guess(grid: LogPolarGrid, config: SolverConfig):
    T, TH = grid.mesh()
    phi, psi = segregated_profile(TH, grid.params.s)
    r_s = np.exp(grid.params.s * T)
    wu, wv = r_s * phi, r_s * psi
    if config.initial_guess == "perturbed":
        rng = np.random.default_rng(config.seed)
        wu = wu * (1 + config.noise * rng.uniform(-1, 1, wu.shape))
        wv = wv * (1 + config.noise * rng.uniform(-1, 1, wv.shape))
    elif config.initial_guess == "custom":
        wu, wv = _extend(config.custom_guess, grid)
    return wu, wv


def _extend(pair: FieldPair, grid: LogPolarGrid):
    """Values of ``pair`` on the first rows of ``grid``, the exact pair beyond."""
    w = pair.unscaled()
    if not np.array_equal(w.grid.rule.nodes, grid.rule.nodes):
        raise ConfigurationError("custom guess must share the theta rule")
    T, TH = grid.mesh()
    phi, psi = segregated_profile(TH, grid.params.s)
    r_s = np.exp(grid.params.s * T)
    wu, wv = r_s * phi, r_s * psi
    m = min(w.grid.n_t, grid.n_t)
    if not np.allclose(w.grid.t_nodes[:m], grid.t_nodes[:m], rtol=0, atol=1e-9):
        raise ConfigurationError("custom guess must share the t spacing and t_min")
    wu[:m], wv[:m] = w.u.values[:m], w.v.values[:m]
    if m < grid.n_t and m > 0:
        # rescale the tail so the seam is continuous
        ratio = np.exp(grid.params.s * (T[m:] - T[m - 1]))
        wu[m:] = w.u.values[m - 1] * ratio
        wv[m:] = w.v.values[m - 1] * ratio
    return wu, wv


def solve_profile(params: FracParam, config: SolverConfig | None = None
                  ) -> tuple[FieldPair, SolveReport]:
    """Compute the symmetric profile pinned by ``b = 1`` and ``T = 0``.

    Returns the unscaled fields on the final grid and a :class:`SolveReport`.
    Raises :class:`SolverError` if the final stage does not reach
    ``config.tol``, :class:`PositivityError` if a node ends up negative.
    """
    config = SolverConfig() if config is None else config
    start = time.perf_counter()
    report = SolveReport()
    final = build_grid(config.t_min, config.t_max, config.n_t, config.n_theta, params)
    prev: FieldPair | None = None
    for k, t_end in enumerate(config.stages()):
        grid = final if t_end == config.t_max else regrid_t(final, t_end)
        system = _System(grid)
        if prev is None:
            wu, wv = _initial_guess(grid, config)
            wu, wv = wu.ravel(), wv.ravel()
            wu, wv = system.gauss_seidel(wu, wv, config.warmup_sweeps)
        else:
            wu, wv = (x.ravel() for x in _extend(prev, grid))
        wu, wv, merit = _newton(system, wu, wv, config, report)
        report.stages.append(float(grid.t_max))
        pair = pair_from_arrays(grid, wu.reshape(grid.shape), wv.reshape(grid.shape))
        if prev is not None:
            m = prev.grid.n_t
            old = prev.u.values
            new = pair.u.values[:m]
            change = float(np.max(np.abs(new - old)) / np.max(np.abs(old)))
            report.stage_changes.append(change)
        log.info("stage t_max=%.3f merit=%.3e iterations=%d", grid.t_max, merit,
                 report.iterations)
        prev = pair
    report.final_residual = merit
    report.seconds = time.perf_counter() - start
    report.continuation_rate = _continuation_rate(report)
    neg = int(np.sum(pair.u.values < 0) + np.sum(pair.v.values < 0))
    report.positivity_violations = neg
    if merit > config.tol:
        raise SolverError(f"residual {merit:.3e} above tolerance {config.tol:.1e}",
                          report=report.to_dict())
    if neg:
        raise PositivityError(f"{neg} negative nodes", report=report.to_dict())
    report.converged = True
    return pair, report


def _continuation_rate(report: SolveReport):
    """Fitted ``c`` in ``change ~ exp(-c t_max)`` across the stages."""
    ch = np.asarray(report.stage_changes)
    if ch.size < 2 or np.any(ch <= 0):
        return None
    t = np.asarray(report.stages[1:])
    return float(-np.polyfit(t, np.log(ch), 1)[0])


def residual_report(pair: FieldPair, params: FracParam | None = None) -> dict:
    """Interior and boundary residual norms, separately for ``u`` and ``v``.

    Interior norms are the pointwise sup/RMS of ``w_tt + a w_t + L w`` away
    from the first and last t rows, and the weak (dual) norm of the cell
    balances.  Boundary defects are ``trace - e^{(1-a)t} w w_other**2`` on
    each ray, relative to the local field size.
    """
    w = pair.unscaled()
    grid = w.grid
    params = grid.params if params is None else params
    if params != grid.params:
        raise DomainError("params do not match the grid")
    op = assemble_operator(grid)
    c = np.exp((1.0 - params.a) * grid.t_nodes)
    scale = np.maximum(np.max(np.abs(w.u.values), axis=1), np.max(np.abs(w.v.values), axis=1))
    degenerate = bool(np.all(scale == 0))
    scale = np.where(scale > 0, scale, 1.0)
    out = {"degenerate": degenerate}
    for name, f, g in (("u", w.u, w.v), ("v", w.v, w.u)):
        sup, l2 = residual_norms(apply_La(f, op))
        rows = slice(0, -1)
        d0 = boundary_trace(f, 0, op) - c * f.trace(0) * g.trace(0) ** 2
        dpi = boundary_trace(f, "pi", op) - c * f.trace("pi") * g.trace("pi") ** 2
        out[name] = {
            "interior_sup": sup,
            "interior_l2": l2,
            "interior_weak": weak_residual_norm(f, op),
            "boundary_0": float(np.max(np.abs(d0[rows]) / scale[rows])),
            "boundary_pi": float(np.max(np.abs(dpi[rows]) / scale[rows])),
        }
    return out
