"""Almgren frequency, Pohozaev residual, doubling bound and the ACF functional.

All quantities are evaluated radius by radius on a log-polar grid.  In
``(t, theta)`` variables with ``r = e^t``:

* ``int_{B_r^+} y^a |grad u|^2 = int_{-inf}^{t} e^{a t'} int sin^a (w_t^2 + w_theta^2)``,
* ``int_{d^0 B_r^+} u^2 v^2 = int_{-inf}^{t} e^{t'} (u^2 v^2 |_{theta=0} + u^2 v^2 |_{theta=pi})``,
* ``H(r) = int_0^pi sin^a (w_u^2 + w_v^2) dtheta``.

Angular derivatives enter through the same exact transmissibilities as the
operator, t derivatives through a cubic spline in t, and t integrals
through cumulative Simpson sums.  The ball ``|z| < e^{t_min}`` left out of
the grid is added back by extrapolating the first row's exponential rate.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_simpson
from scipy.interpolate import CubicSpline

from .core import FieldPair, FracParam, LogPolarGrid
from .errors import DegenerateFieldError, DomainError
from .operator import assemble_operator

OUTER_EXCLUSION = 0.2


@dataclass(frozen=True, eq=False)
class FrequencyTrace:
    """Per-radius Almgren data of a pair of fields.

    ``pohozaev`` holds the relative Pohozaev residual at each radius and
    ``J`` the ACF functional (``None`` unless requested).
    """

    radii: np.ndarray
    E: np.ndarray
    H: np.ndarray
    N: np.ndarray
    pohozaev: np.ndarray
    params: FracParam
    J: np.ndarray | None = None
    M_star: float | None = None
    b_est: float | None = None

    @property
    def t(self) -> np.ndarray:
        return np.log(self.radii)

    def to_csv(self, path) -> None:
        J = self.J if self.J is not None else np.full(self.radii.size, np.nan)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["r", "E", "H", "N", "pohozaev", "J"])
            for row in zip(self.radii, self.E, self.H, self.N, self.pohozaev, J):
                writer.writerow([repr(float(x)) for x in row])


def _check_params(pair: FieldPair, params: FracParam | None) -> FracParam:
    if params is not None and params != pair.params:
        raise DomainError(f"params {params} do not match the grid ({pair.params})")
    return pair.params


def _t_derivative(grid: LogPolarGrid, values):
    return CubicSpline(grid.t_nodes, values, axis=0)(grid.t_nodes, 1)


def _theta_energy(grid: LogPolarGrid, values):
    """Rowwise ``int sin^a w_theta^2`` from the exact face transmissibilities."""
    T = assemble_operator(grid).T_theta
    return np.sum(T[None, :] * np.diff(values, axis=1) ** 2, axis=1)


def _t_energy(grid: LogPolarGrid, wt):
    return wt[:, 1:-1] ** 2 @ grid.rule.weights


def _cumulative(t, density):
    """``int_{-inf}^{t_k} density`` with the tail below ``t_0`` extrapolated.

    The tail assumes ``density ~ exp(k t)`` with ``k`` read off the first
    two rows; it is dropped when the density does not decay towards ``t_0``.
    """
    body = cumulative_simpson(density, x=t, initial=0.0)
    d0, d1 = density[0], density[1]
    tail = 0.0
    if d0 > 0 and d1 > d0:
        rate = math.log(d1 / d0) / (t[1] - t[0])
        tail = d0 / rate
    return body + tail


@dataclass(frozen=True)
class _Rows:
    sphere_grad: np.ndarray  # int sin^a (w_t^2 + w_theta^2), u and v summed
    sphere_t: np.ndarray  # int sin^a w_t^2
    sphere_theta: np.ndarray  # int sin^a w_theta^2
    H: np.ndarray
    product: np.ndarray  # u^2 v^2 on theta=0 plus theta=pi
    volume: np.ndarray  # int_{B_r^+} y^a (|grad u|^2 + |grad v|^2)
    flat: np.ndarray  # int_{d^0 B_r^+} u^2 v^2


def _rows(pair: FieldPair) -> _Rows:
    w = pair.unscaled()
    grid = w.grid
    t = grid.t_nodes
    a = grid.params.a
    et = eth = 0.0
    for f in (w.u.values, w.v.values):
        eth = eth + _theta_energy(grid, f)
        et = et + _t_energy(grid, _t_derivative(grid, f))
    H = (w.u.values[:, 1:-1] ** 2 + w.v.values[:, 1:-1] ** 2) @ grid.rule.weights
    u, v = w.u.values, w.v.values
    product = (u[:, 0] * v[:, 0]) ** 2 + (u[:, -1] * v[:, -1]) ** 2
    volume = _cumulative(t, np.exp(a * t) * (et + eth))
    flat = _cumulative(t, np.exp(t) * product)
    return _Rows(et + eth, et, eth, H, product, volume, flat)


def _pohozaev_terms(rows: _Rows, grid: LogPolarGrid):
    t = grid.t_nodes
    a = grid.params.a
    ea = np.exp(a * t)
    lhs = a * rows.volume
    rhs = ea * (rows.sphere_theta - rows.sphere_t) + np.exp(t) * rows.product - rows.flat
    scale = np.abs(lhs) + ea * rows.sphere_grad + np.exp(t) * rows.product + rows.flat
    return lhs - rhs, scale


def frequency_trace(pair: FieldPair, params: FracParam | None = None, *,
                    with_acf: bool = False, M_star: float | None = None) -> FrequencyTrace:
    """``E``, ``H``, ``N`` and the relative Pohozaev residual at every grid radius."""
    params = _check_params(pair, params)
    grid = pair.grid
    rows = _rows(pair)
    t = grid.t_nodes
    E = np.exp(-params.a * t) * (rows.volume + rows.flat)
    H = rows.H
    nontrivial = np.max(np.abs(pair.unscaled().u.values) + np.abs(pair.unscaled().v.values),
                        axis=1) > 0
    if np.any((H <= 0) & nontrivial):
        raise DegenerateFieldError("H vanishes on a radius where the fields do not")
    with np.errstate(invalid="ignore", divide="ignore"):
        N = np.where(H > 0, E / np.where(H > 0, H, 1.0), 0.0)
        res, scale = _pohozaev_terms(rows, grid)
        poh = np.where(scale > 0, res / np.where(scale > 0, scale, 1.0), 0.0)
    J = b_est = None
    if with_acf:
        J, b_est, M_star = acf_trace(pair, params, M_star)
    return FrequencyTrace(np.exp(t), E, H, N, poh, params, J, M_star, b_est)


def pohozaev_residual(pair: FieldPair, params: FracParam | None, r: float,
                      relative: bool = False) -> float:
    """LHS minus RHS of the Pohozaev identity on ``B_r^+`` (``n = 1``, centre 0).

    ``(n-1+a) int y^a |grad|^2 = r int_{d^+} y^a (|grad|^2 - 2 |d_r|^2)
    + r (u^2 v^2)(+-r, 0) - n int_{d^0} u^2 v^2``, summed over ``u`` and ``v``.
    """
    _check_params(pair, params)
    grid = pair.grid
    k = _radius_index(grid, r)
    res, scale = _pohozaev_terms(_rows(pair), grid)
    if relative:
        return float(res[k] / scale[k]) if scale[k] > 0 else 0.0
    return float(res[k])


def _radius_index(grid: LogPolarGrid, r: float) -> int:
    if r <= 0:
        raise DomainError(f"radius must be positive, got {r}")
    t = math.log(r)
    k = int(np.argmin(np.abs(grid.t_nodes - t)))
    if abs(grid.t_nodes[k] - t) > 1e-9 * max(1.0, abs(t)):
        raise DomainError(f"r={r} is not a grid radius")
    return k


def doubling_check(trace: FrequencyTrace, d: float, mask=None) -> float:
    """Worst ``H(r2)/H(r1) - e^{d/(1-a)} (r2/r1)^{2d}`` over ``r1 <= r2``.

    A nonpositive value means the doubling inequality holds at every pair.
    ``mask`` restricts the radii considered.
    """
    H, t = trace.H, trace.t
    if mask is not None:
        H, t = H[mask], t[mask]
    a = trace.params.a
    logH = np.log(H)
    bound = d / (1.0 - a)
    # pairwise in log form, then back to the ratio scale of the statement
    dlog = logH[None, :] - logH[:, None]
    dt = t[None, :] - t[:, None]
    upper = np.triu(np.ones_like(dlog, dtype=bool))
    ratio = np.exp(dlog[upper])
    rhs = np.exp(bound + 2 * d * dt[upper])
    return float(np.max(ratio - rhs))


def log_h_slope(trace: FrequencyTrace) -> np.ndarray:
    """``d log H / d log r`` by cubic spline differentiation."""
    return CubicSpline(trace.t, np.log(trace.H))(trace.t, 1)


def _conformal_energy(grid: LogPolarGrid, f):
    """``int_{B_r^+} y^a |grad f|^2 / |z|^a`` at every grid radius."""
    wt = _t_derivative(grid, f)
    dens = _theta_energy(grid, f) + _t_energy(grid, wt)
    return _cumulative(grid.t_nodes, dens)


def _truncated_energy(grid: LogPolarGrid, f, M):
    g = np.maximum(f - M, 0.0)
    wt = _t_derivative(grid, f) * (f > M)
    dens = _theta_energy(grid, g) + _t_energy(grid, wt)
    return _cumulative(grid.t_nodes, dens)


def acf_constant(grid: LogPolarGrid) -> float:
    """``C(s)``: the truncated energy of ``r^s cos(theta/2)^(2s)`` on ``B_1^+``.

    Evaluated with the same quadrature as :func:`acf_trace` on the given
    grid; the continuum value is ``(1/2) int sin^a cos(theta/2)^(4s)``.
    """
    from .spectral import exact_homogeneous_pair

    s = grid.params.s
    exact = exact_homogeneous_pair(grid).u.values
    I = _conformal_energy(grid, exact) * np.exp(-2 * s * grid.t_nodes)
    return float(np.mean(I[grid.n_t // 4: 3 * grid.n_t // 4]))


def default_m_star(pair: FieldPair) -> float:
    w = pair.unscaled()
    grid = w.grid
    k = int(np.argmin(np.abs(grid.t_nodes - (grid.t_min + 1.0))))
    return 2.0 * float(max(w.u.values[k].max(), w.v.values[k].max()))


def acf_trace(pair: FieldPair, params: FracParam | None = None,
              M_star: float | None = None, window=None):
    """ACF functional ``J(r)`` and the leading-coefficient estimate ``b_est``.

    ``J = r^{-4s} I_1 I_2`` with ``I_k`` the conformal energy of
    ``(u - M*)_+`` and ``(v - M*)_+``.  ``b_est = (J_lim / C(s)^2)^(1/4)``
    where ``J_lim`` is the mean of ``J`` over ``window`` (default: the last
    decade of radii below the outer 20% of the t range).

    Returns ``(J, b_est, M_star)``.
    """
    params = _check_params(pair, params)
    w = pair.unscaled()
    grid = w.grid
    s = params.s
    M = default_m_star(pair) if M_star is None else float(M_star)
    if M < 0:
        raise DomainError("M_star must be nonnegative")
    if not (np.any(w.u.values > M) and np.any(w.v.values > M)):
        raise DomainError(f"M_star={M:g} leaves an empty truncation")
    I1 = _truncated_energy(grid, w.u.values, M)
    I2 = _truncated_energy(grid, w.v.values, M)
    J = np.exp(-4 * s * grid.t_nodes) * I1 * I2
    t = grid.t_nodes
    if window is None:
        hi = grid.t_max - OUTER_EXCLUSION * (grid.t_max - grid.t_min)
        window = (hi - math.log(10.0), hi)
    sel = (t >= window[0]) & (t <= window[1])
    if not np.any(sel):
        raise DomainError(f"empty limit window {window}")
    C = acf_constant(grid)
    b_est = float((np.mean(J[sel]) / C**2) ** 0.25)
    return J, b_est, M
