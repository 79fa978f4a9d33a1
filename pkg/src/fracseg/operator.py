"""Finite-volume discretisation of ``div(y^a grad w)`` in log-polar variables.

In ``(t, theta)`` the operator is ``div(exp(a t) sin(theta)**a grad w)``,
i.e. ``w_tt + a w_t + L_theta^a w`` up to the positive factor
``exp(a t) sin(theta)**a``.  Face transmissibilities are reciprocals of the
exact integrals of the inverse weight, so profiles of the form
``c + beta * int_0^theta sin**(-a)`` are reproduced exactly next to the
degenerate rays.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .core import (LogPolarField, LogPolarGrid, _side_index, exp_integral,
                   sin_power_interval)
from .errors import DomainError, StructuralError


def theta_transmissibility(theta_lo, theta_hi, a: float):
    """``1 / int_lo^hi sin(theta)**(-a) dtheta``.

    The integral is evaluated in closed form through the incomplete beta
    function, which resolves the endpoint singularity at ``0`` and ``pi``.
    """
    if not -1.0 < a < 1.0:
        raise DomainError(f"sin(theta)**{-a} is not integrable for |a| >= 1")
    lo = np.asarray(theta_lo, dtype=float)
    hi = np.asarray(theta_hi, dtype=float)
    if np.any(lo < 0) or np.any(hi > np.pi) or np.any(hi <= lo):
        raise DomainError("need 0 <= theta_lo < theta_hi <= pi")
    out = 1.0 / sin_power_interval(lo, hi, -a)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True, eq=False)
class DiscreteOperator:
    """Assembled five-point operator on a :class:`LogPolarGrid`.

    ``matrix`` acts on row-major flattened fields of shape ``grid.shape``.
    Rows of interior theta columns hold the flux balance of the dual cell
    (the cell integral of ``div(e^{at} sin^a grad w)``); rows of the two
    boundary columns hold the discrete weighted normal trace.  The flux
    through ``t = t_min`` is zero (natural condition).
    """

    grid: LogPolarGrid
    T_theta: np.ndarray  # (n_theta + 1,) between adjacent columns
    T_t: np.ndarray  # (n_t - 1,) per unit theta weight
    m_t: np.ndarray  # (n_t,) int exp(a t) over the dual t cell
    mass: np.ndarray  # (n_t, n_theta + 2) cell measure, 0 on the rays
    matrix: sp.csr_matrix

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    def flat_index(self, i, j):
        return np.asarray(i) * (self.grid.n_theta + 2) + np.asarray(j)

    def fluxes(self, values):
        """Face fluxes ``(F_t, F_theta)`` of a field given as an array.

        ``F_t[i, j]`` flows from row ``i`` into row ``i+1`` through the face
        between them (interior columns only); ``F_theta[i, k]`` flows from
        column ``k`` into ``k+1``.  Both are already integrated over the face.
        """
        w = np.asarray(values, dtype=float)
        wts = self.grid.rule.weights
        Ft = -(self.T_t[:, None] * wts[None, :]) * np.diff(w[:, 1:-1], axis=0)
        Fth = -(self.m_t[:, None] * self.T_theta[None, :]) * np.diff(w, axis=1)
        return Ft, Fth


def assemble_operator(grid: LogPolarGrid) -> DiscreteOperator:
    return _assemble_cached(grid)


@lru_cache(maxsize=16)
def _assemble_cached(grid: LogPolarGrid) -> DiscreteOperator:
    a = grid.params.a
    n_t, n_th = grid.n_t, grid.n_theta
    ncol = n_th + 2
    theta = grid.theta
    T_theta = theta_transmissibility(theta[:-1], theta[1:], a)
    t = grid.t_nodes
    T_t = 1.0 / exp_integral(-a, t[:-1], t[1:])
    edges = grid.t_cell_edges()
    m_t = exp_integral(a, edges[:-1], edges[1:])
    wts = grid.rule.weights

    idx = np.arange(n_t * ncol).reshape(n_t, ncol)
    rows, cols, vals = [], [], []

    def add(r, c, v):
        rows.append(r.ravel())
        cols.append(c.ravel())
        vals.append(np.broadcast_to(v, r.shape).ravel())

    # theta faces: flux between columns k and k+1, row i
    I, K = np.meshgrid(np.arange(n_t), np.arange(n_th + 1), indexing="ij")
    coef = m_t[:, None] * T_theta[None, :]
    left, right = idx[I, K], idx[I, K + 1]
    # the balance of an interior column gets both neighbours
    interior_left = (K >= 1)  # column k is interior
    interior_right = (K + 1 <= n_th)
    add(left[interior_left], right[interior_left], coef[interior_left])
    add(left[interior_left], left[interior_left], -coef[interior_left])
    add(right[interior_right], left[interior_right], coef[interior_right])
    add(right[interior_right], right[interior_right], -coef[interior_right])

    # t faces on interior columns
    I, J = np.meshgrid(np.arange(n_t - 1), np.arange(1, n_th + 1), indexing="ij")
    coef = T_t[:, None] * wts[None, :]
    lo, hi = idx[I, J], idx[I + 1, J]
    add(lo, hi, coef)
    add(lo, lo, -coef)
    add(hi, lo, coef)
    add(hi, hi, -coef)

    # trace rows on the rays (no cell volume)
    i = np.arange(n_t)
    add(idx[i, 0], idx[i, 1], np.full(n_t, T_theta[0]))
    add(idx[i, 0], idx[i, 0], np.full(n_t, -T_theta[0]))
    add(idx[i, -1], idx[i, -2], np.full(n_t, T_theta[-1]))
    add(idx[i, -1], idx[i, -1], np.full(n_t, -T_theta[-1]))

    A = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(n_t * ncol, n_t * ncol))
    A.sum_duplicates()
    mass = np.zeros((n_t, ncol))
    mass[:, 1:-1] = m_t[:, None] * wts[None, :]
    return DiscreteOperator(grid=grid, T_theta=T_theta, T_t=T_t, m_t=m_t, mass=mass,
                            matrix=A)


def _check(w: LogPolarField, op: DiscreteOperator):
    if not w.grid.same_as(op.grid):
        raise StructuralError("field and operator live on different grids")


def apply_La(w: LogPolarField, op: DiscreteOperator | None = None) -> LogPolarField:
    """Pointwise residual of ``w_tt + a w_t + L_theta^a w`` at interior nodes.

    The finite-volume balance of each interior cell is divided by the cell
    measure of ``exp(a t) sin(theta)**a``; first/last t rows and the two
    rays are set to zero.
    """
    op = assemble_operator(w.grid) if op is None else op
    _check(w, op)
    vals = w.unscaled().values if w.kind == "bar" else w.values
    flux = (op.matrix @ vals.ravel()).reshape(vals.shape)
    res = np.zeros_like(vals)
    res[1:-1, 1:-1] = flux[1:-1, 1:-1] / op.mass[1:-1, 1:-1]
    return LogPolarField(w.grid, res, "residual")


def residual_norms(res: LogPolarField, t_window=None) -> tuple[float, float]:
    """Sup norm and angular-weighted RMS of an interior residual field.

    Next to the degenerate rays the pointwise residual of a smooth exact
    solution does not vanish under refinement (the stencil is exact only
    for ``c + beta int sin**(-a)`` there); use :func:`weak_residual_norm`
    to measure convergence.
    """
    grid = res.grid
    vals = res.values[1:-1, 1:-1]
    if t_window is not None:
        t = grid.t_nodes[1:-1]
        vals = vals[(t >= t_window[0]) & (t <= t_window[1])]
    if vals.size == 0:
        raise DomainError("empty t window")
    wts = grid.rule.weights
    l2 = np.sqrt(np.mean(vals**2 @ wts) / np.sum(wts))
    return float(np.max(np.abs(vals))), float(l2)


def weak_residual_norm(w: LogPolarField, op: DiscreteOperator | None = None) -> float:
    """Discrete dual norm ``sqrt(r . S^{-1} r)`` of the flux-balance residual.

    ``r`` is the cell balance of ``w`` at interior nodes and ``S`` the
    negative operator with all boundary values (rays and both t ends)
    frozen.  This is the energy norm of the discrete correction that would
    make ``w`` satisfy the interior equation, i.e. the residual measured in
    the weak finite-volume form.
    """
    op = assemble_operator(w.grid) if op is None else op
    _check(w, op)
    vals = w.unscaled().values if w.kind == "bar" else w.values
    inner = np.zeros(w.grid.shape, dtype=bool)
    inner[1:-1, 1:-1] = True
    ii = np.flatnonzero(inner)
    r = (op.matrix @ vals.ravel())[ii]
    S = -op.matrix[ii][:, ii]
    e = spla.spsolve(S.tocsc(), r)
    return float(np.sqrt(max(r @ e, 0.0)))


def boundary_trace(w: LogPolarField, side, op: DiscreteOperator | None = None) -> np.ndarray:
    """Discrete weighted normal trace ``d^a_theta w`` on one ray, over t.

    At ``theta = 0`` this approximates ``lim sin(theta)**a w_theta``, at
    ``theta = pi`` it approximates ``-lim sin(theta)**a w_theta``; in both
    cases it is the Cartesian ``lim y**a u_y`` times ``exp((1-a) t)``.
    """
    grid = w.grid
    if op is None:
        theta = grid.theta
        a = grid.params.a
        T0 = theta_transmissibility(0.0, theta[1], a)
        Tpi = theta_transmissibility(theta[-2], np.pi, a)
    else:
        _check(w, op)
        T0, Tpi = op.T_theta[0], op.T_theta[-1]
    vals = w.unscaled().values if w.kind == "bar" else w.values
    if _side_index(side) == 0:
        return T0 * (vals[:, 1] - vals[:, 0])
    return Tpi * (vals[:, -2] - vals[:, -1])


def max_principle_violation(w: LogPolarField) -> float:
    """How far interior values leave the range of boundary and trace values."""
    v = w.values
    bnd = np.concatenate([v[0], v[-1], v[:, 0], v[:, -1]])
    inner = v[1:-1, 1:-1]
    return float(max(inner.max() - bnd.max(), bnd.min() - inner.min(), 0.0))


def dump_stencil(op: DiscreteOperator, path) -> None:
    """Write the sparse matrix as ``row col value`` lines."""
    coo = op.matrix.tocoo()
    with open(path, "w", encoding="utf-8") as fh:
        for r, c, v in zip(coo.row, coo.col, coo.data):
            fh.write(f"{r} {c} {v:.17g}\n")
