"""Blow-down scaling, Emden-Fowler diagnostics, decay fits and expansion coefficients.

Far from the origin the profile behaves like

    u = b r^s cos(theta/2)^(2s) + a r^(s-1) cos(theta/2)^(2s) + ...,
    v = b r^s sin(theta/2)^(2s) + b' r^(s-1) sin(theta/2)^(2s) + ...,

and an x-translation by ``x0`` moves ``(a, b')`` to ``(a + s x0, b' - s x0)``.
The coefficients are read off the projection of ``e^{-st} w`` onto the first
angular mode.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats
from scipy.interpolate import CubicSpline, RectBivariateSpline

from .core import (FieldPair, FracParam, LogPolarGrid, build_grid, exp_integral,
                   pair_from_arrays)
from .errors import DegenerateFieldError, DomainError, FitError, HypothesisError
from .operator import (apply_La, assemble_operator, boundary_trace, residual_norms,
                       weak_residual_norm)
from .spectral import segregated_profile, solve_mixed_eigen

INNER_EXCLUSION = 0.3
OUTER_EXCLUSION = 0.2
ASYMPTOTIC_FLOOR = 1.0


def default_window(grid: LogPolarGrid, inner: float = INNER_EXCLUSION,
                   outer: float = OUTER_EXCLUSION, floor: float | None = ASYMPTOTIC_FLOOR):
    """Fit window ``[lo, hi]`` in ``t``.

    The outer ``outer`` fraction of the t range is dropped (far-field
    truncation), as is the inner ``inner`` fraction.  ``floor`` additionally
    keeps the window above a fixed ``t``: the transition layer of the
    ``b = 1`` profile has unit size, so its corrections are ``O(e^{-t})``
    regardless of how the domain is chosen.
    """
    span = grid.t_max - grid.t_min
    hi = grid.t_max - outer * span
    lo = grid.t_min + inner * span
    if floor is not None:
        lo = max(lo, floor)
    if not lo < hi:
        raise FitError(f"empty fit window [{lo:.3g}, {hi:.3g}]; enlarge t_max")
    return (float(lo), float(hi))


def _window_mask(t, window):
    lo, hi = window
    sel = (t >= lo) & (t <= hi)
    if sel.sum() < 3:
        raise FitError(f"window {window} holds fewer than 3 samples")
    return sel


# ---------------------------------------------------------------------------
# blow-down


@dataclass(frozen=True, eq=False)
class BlowdownScaling:
    """``L(R)`` and ``kappa_R = L^2 R^{1-a}`` of a pair at radius ``R``."""

    R: float
    L: float
    kappa: float
    weighted: bool
    pair: FieldPair = field(repr=False)

    def rescaled(self) -> FieldPair:
        """``(u(R z), v(R z)) / L`` on the grid shifted by ``-log R``."""
        w = self.pair.unscaled()
        g = w.grid
        shift = math.log(self.R)
        grid = build_grid(g.t_min - shift, g.t_max - shift, g.n_t, g.n_theta, g.params)
        return pair_from_arrays(grid, w.u.values / self.L, w.v.values / self.L)


def circle_integral(pair: FieldPair, k: int, weighted: bool = True) -> float:
    """``R^{-1-a} int y^a (u^2+v^2)`` (weighted) or ``R^{-1} int (u^2+v^2)`` at row ``k``."""
    w = pair.unscaled()
    grid = w.grid
    vals = w.u.values[k, 1:-1] ** 2 + w.v.values[k, 1:-1] ** 2
    wts = grid.rule.weights
    if not weighted:
        wts = wts * np.sin(grid.rule.nodes) ** (-grid.params.a)
    return float(vals @ wts)


def blowdown_scaling(pair: FieldPair, R: float, weighted: bool = True) -> BlowdownScaling:
    grid = pair.grid
    if R <= 0:
        raise DomainError("R must be positive")
    k = int(np.argmin(np.abs(grid.t_nodes - math.log(R))))
    if abs(grid.t_nodes[k] - math.log(R)) > 1e-9 * max(1.0, abs(math.log(R))):
        raise DomainError(f"R={R} is not a grid radius")
    L2 = circle_integral(pair, k, weighted)
    if L2 <= 0:
        raise DegenerateFieldError(f"circle integral vanishes at R={R}")
    L = math.sqrt(L2)
    return BlowdownScaling(R, L, L2 * R ** (1.0 - grid.params.a), weighted, pair)


def kappa_profile(pair: FieldPair, weighted: bool = True) -> np.ndarray:
    """``kappa_R`` at every grid radius."""
    a = pair.params.a
    return np.array([circle_integral(pair, k, weighted) for k in range(pair.grid.n_t)]) \
        * np.exp((1.0 - a) * pair.grid.t_nodes)


# ---------------------------------------------------------------------------
# Emden-Fowler form


def emden_fowler_residual(pair: FieldPair, params: FracParam | None = None) -> dict:
    """Residuals of the scaled system for ``ubar = e^{-st} w``.

    Interior: ``ubar_tt + ubar_t + s(1-s) ubar + L_theta^a ubar``, which is
    ``e^{-st}`` times the unscaled operator, as pointwise sup and RMS, plus
    the weak (dual) norm of the unscaled cell balances, the one that
    converges under refinement next to the rays.  Boundary:
    ``d_theta^a ubar - e^{4st} ubar vbar^2`` on each ray, relative to the
    row maximum of ``ubar``.  For the exact segregated pair the defect on
    the ray where a field vanishes stays O(1): that pair solves the
    segregated limit, whose weighted flux there is finite.
    """
    grid = pair.grid
    if params is not None and params != grid.params:
        raise DomainError("params do not match the grid")
    s = grid.params.s
    bar = pair.scaled()
    w = pair.unscaled()
    op = assemble_operator(grid)
    e_st = np.exp(-s * grid.t_nodes)
    c = np.exp(4 * s * grid.t_nodes)
    out = {}
    for name, f, g, fb, gb in (("u", w.u, w.v, bar.u, bar.v), ("v", w.v, w.u, bar.v, bar.u)):
        res = apply_La(f, op)
        res = res.with_values(res.values * e_st[:, None])
        sup, l2 = residual_norms(res)
        scale = np.maximum(np.max(np.abs(fb.values), axis=1), 1e-300)
        rows = slice(0, -1)
        d0 = e_st * boundary_trace(f, 0, op) - c * fb.trace(0) * gb.trace(0) ** 2
        dpi = e_st * boundary_trace(f, "pi", op) - c * fb.trace("pi") * gb.trace("pi") ** 2
        out[name] = {
            "interior_sup": sup,
            "interior_l2": l2,
            "interior_weak": weak_residual_norm(f, op),
            "boundary_0": float(np.max(np.abs(d0[rows]) / scale[rows])),
            "boundary_pi": float(np.max(np.abs(dpi[rows]) / scale[rows])),
        }
    return out


# ---------------------------------------------------------------------------
# decay fits


@dataclass(frozen=True)
class DecayFit:
    slope: float
    stderr: float
    window: tuple
    expected: float | None = None

    @property
    def relative_error(self) -> float | None:
        if self.expected is None or self.expected == 0:
            return None
        return abs(self.slope - self.expected) / abs(self.expected)


def fit_decay(t, trace, window, expected_slope: float | None = None) -> DecayFit:
    """Least-squares slope of ``log(trace)`` against ``t`` over ``window``."""
    t = np.asarray(t, dtype=float)
    trace = np.asarray(trace, dtype=float)
    sel = _window_mask(t, window)
    if np.any(trace[sel] <= 0):
        raise FitError("trace must be positive on the fit window")
    fit = stats.linregress(t[sel], np.log(trace[sel]))
    return DecayFit(float(fit.slope), float(fit.stderr), tuple(map(float, window)),
                    expected_slope)


def derivative_trace(pair: FieldPair, field_name: str, side) -> np.ndarray:
    """``|d/dx|`` of a boundary trace along its ray: ``e^{-t} |d_t w|``."""
    w = getattr(pair.unscaled(), field_name)
    grid = w.grid
    tr = w.trace(side)
    return np.exp(-grid.t_nodes) * np.abs(CubicSpline(grid.t_nodes, tr)(grid.t_nodes, 1))


# ---------------------------------------------------------------------------
# expansion coefficients


def _finite(obj):
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


@dataclass
class ExpansionReport:
    b_scale: float
    a_coeff: float
    b_coeff: float
    T: float
    slopes: dict = field(default_factory=dict)
    windows: dict = field(default_factory=dict)
    residuals: dict = field(default_factory=dict)

    @property
    def a_stderr(self) -> float:
        return self.residuals.get("a_stderr", math.nan)

    @property
    def b_stderr(self) -> float:
        return self.residuals.get("b_stderr", math.nan)

    @property
    def coeff_sum(self) -> float:
        return self.a_coeff + self.b_coeff

    def to_dict(self) -> dict:
        """Plain dict; non-finite numbers become ``None`` so the JSON is strict."""
        return _finite(asdict(self))

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict(), indent=2, sort_keys=True, allow_nan=False)
        if path is not None:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(text + "\n")
        return text


@dataclass(frozen=True)
class ModeFit:
    """Leading and subleading coefficient of one field's first-mode projection."""

    leading: float
    coeff: float
    stderr: float
    rate: float
    rate_stderr: float
    t: np.ndarray = field(repr=False)
    projection: np.ndarray = field(repr=False)  # c(t)
    f: np.ndarray = field(repr=False)  # -e^t c'(t), tends to coeff


def discrete_exponents(grid: LogPolarGrid):
    """Growth exponents of the first separated mode of the discrete operator.

    Projected onto the discrete first eigenvector (eigenvalue ``lam_h``),
    the scheme reduces on a uniform t grid to the recurrence
    ``tau (c+ - c) - tau e^{-ah} (c - c-) = mu lam_h c``, whose solutions
    are ``exp(d t)`` with ``d`` the two returned roots.  They converge to
    ``s`` and ``s - 1`` at second order; using them instead of the continuum
    values keeps the O(h^2) drift from being amplified by ``e^t``.
    """
    a = grid.params.a
    h = grid.h_t
    lam = solve_mixed_eigen(grid.params, 1, rule=grid.rule).eigenvalues[0]
    tau = 1.0 / float(exp_integral(-a, 0.0, h))
    mu = float(exp_integral(a, -0.5 * h, 0.5 * h))
    q = np.roots([tau, -(tau + tau * math.exp(-a * h) + mu * lam), tau * math.exp(-a * h)])
    d = np.sort(np.log(q.real)) / h
    return float(d[1]), float(d[0]), float(lam)


def _mode_projection(grid: LogPolarGrid, values, mirrored: bool):
    """First-mode amplitude of the unscaled field, normalised so ``r^s psi -> 1``."""
    s = grid.params.s
    phi = segregated_profile(grid.rule.nodes, s)[0]
    psi_h = solve_mixed_eigen(grid.params, 1, rule=grid.rule).mode(1)
    if mirrored:
        phi, psi_h = phi[::-1], psi_h[::-1]
    w = grid.rule.weights
    return values[:, 1:-1] @ (w * psi_h) / float(np.sum(w * psi_h * phi))


def fit_mode(grid: LogPolarGrid, values, window, mirrored: bool = False,
             subleading: bool = True, exponent: str = "discrete") -> ModeFit:
    """Fit ``c(t) = b + a e^{-t} + o(e^{-t})`` for the first-mode projection.

    ``c(t)`` is the first-mode amplitude of the unscaled field ``values``
    divided by ``e^{d+ t}`` (see :func:`discrete_exponents`).  ``a`` is read
    off ``f(t) = -e^{D t} c'(t) / D`` with ``D = d+ - d-``, which tends to
    ``a`` without reference to ``b``: its decay rate ``delta`` is the slope
    of ``log |f'|``, and ``a`` comes from a least-squares fit of
    ``f = a + C e^{-delta t}``.  ``b`` is the window mean of ``c - a e^{-D t}``.

    ``exponent="continuum"`` uses ``s`` and ``s - 1`` instead, the right
    choice for fields sampled from a closed form rather than solved on the
    grid.  An ``f`` that is constant to rounding is reported as converged
    (``rate = inf``).
    """
    t = grid.t_nodes
    if exponent == "discrete":
        d_plus, d_minus, _ = discrete_exponents(grid)
    elif exponent == "continuum":
        d_plus, d_minus = grid.params.s, grid.params.s - 1.0
    else:
        raise DomainError(f"exponent must be 'discrete' or 'continuum', got {exponent!r}")
    gap = d_plus - d_minus
    c = _mode_projection(grid, values, mirrored) * np.exp(-d_plus * t)
    sel = _window_mask(t, window)
    if not subleading:
        b = float(np.mean(c[sel]))
        return ModeFit(b, math.nan, math.nan, math.nan, math.nan, t, c, np.full_like(c, np.nan))
    spline = CubicSpline(t, c)
    f = -np.exp(gap * t) * spline(t, 1) / gap
    fp = CubicSpline(t, f)(t, 1)
    if np.max(np.abs(f[sel] - np.mean(f[sel]))) <= 1e-10 * max(np.max(np.abs(c[sel])), 1e-300):
        a = float(np.mean(f[sel]))
        b = float(np.mean(c[sel] - a * np.exp(-gap * t[sel])))
        return ModeFit(b, a, 0.0, math.inf, 0.0, t, c, f)
    if np.any(fp[sel] == 0):
        raise FitError("f'(t) vanishes on the window; rate undefined")
    lin = stats.linregress(t[sel], np.log(np.abs(fp[sel])))
    rate, rate_err = -float(lin.slope), float(lin.stderr)
    if not rate > 0:
        raise FitError(f"f(t) does not converge on {window}: fitted rate {rate:.3g}")
    X = np.column_stack([np.ones(sel.sum()), np.exp(-rate * t[sel])])
    coef, *_ = np.linalg.lstsq(X, f[sel], rcond=None)
    resid = f[sel] - X @ coef
    dof = max(sel.sum() - 2, 1)
    cov = np.linalg.inv(X.T @ X) * (resid @ resid) / dof
    a = float(coef[0])
    b = float(np.mean(c[sel] - a * np.exp(-gap * t[sel])))
    return ModeFit(b, a, float(math.sqrt(cov[0, 0])), rate, rate_err, t, c, f)


def extract_expansion(pair: FieldPair, params: FracParam | None = None, window=None,
                      subleading: bool = True, exponent: str = "discrete") -> ExpansionReport:
    """Leading scale, subleading coefficients, symmetry centre and decay slopes."""
    grid = pair.grid
    if params is not None and params != grid.params:
        raise DomainError("params do not match the grid")
    s = grid.params.s
    if subleading and s <= 0.25:
        raise HypothesisError(f"subleading extraction needs s > 1/4, got s={s}")
    window = default_window(grid) if window is None else tuple(window)
    w = pair.unscaled()
    fu = fit_mode(grid, w.u.values, window, False, subleading, exponent)
    fv = fit_mode(grid, w.v.values, window, True, subleading, exponent)
    T = (fv.coeff - fu.coeff) / (2 * s) if subleading else math.nan

    t = grid.t_nodes
    bar = pair.scaled()
    slopes = {}
    expected = {"u_0": s, "u_pi": -3 * s, "du_pi": -3 * s - 1,
                "v_pi": s, "v_0": -3 * s, "dv_0": -3 * s - 1}
    traces = {"u_0": w.u.trace(0), "u_pi": w.u.trace("pi"),
              "du_pi": derivative_trace(pair, "u", "pi"),
              "v_pi": w.v.trace("pi"), "v_0": w.v.trace(0),
              "dv_0": derivative_trace(pair, "v", 0)}
    # distance of ubar from its blow-down limit, sup over theta
    phi, psi = segregated_profile(grid.theta, s)
    traces["envelope"] = np.max(np.abs(bar.u.values - fu.leading * phi[None, :]), axis=1)
    expected["envelope"] = -min(1.0, 4 * s)
    for key, tr in traces.items():
        try:
            fit = fit_decay(t, tr, window, expected[key])
        except FitError as exc:
            # e.g. a trace that vanishes identically on a closed-form pair
            slopes[key] = {"slope": None, "stderr": None, "expected": expected[key],
                           "error": str(exc)}
            continue
        slopes[key] = {"slope": fit.slope, "stderr": fit.stderr, "expected": expected[key]}

    residuals = {"b_scale_v": fv.leading}
    if subleading:
        residuals.update({
            "a_stderr": fu.stderr, "b_stderr": fv.stderr,
            "rate_u": fu.rate, "rate_u_stderr": fu.rate_stderr,
            "rate_v": fv.rate, "rate_v_stderr": fv.rate_stderr,
            "rate_expected": min((4 + grid.params.a) * s - 1, 4 * s - 1),
        })
    windows = {"fit": list(window), "t_range": [grid.t_min, grid.t_max]}
    return ExpansionReport(b_scale=fu.leading, a_coeff=fu.coeff, b_coeff=fv.coeff, T=T,
                           slopes=slopes, windows=windows, residuals=residuals)


# ---------------------------------------------------------------------------
# translations


def _field_splines(pair: FieldPair):
    w = pair.unscaled()
    g = w.grid
    return [RectBivariateSpline(g.t_nodes, g.theta, f.values, kx=3, ky=3)
            for f in (w.u, w.v)]


def _shifted_coordinates(grid: LogPolarGrid, dx: float):
    T, TH = grid.mesh()
    x = np.exp(T) * np.cos(TH) + dx
    y = np.exp(T) * np.sin(TH)
    y[:, 0] = 0.0
    y[:, -1] = 0.0
    r = np.hypot(x, y)
    with np.errstate(divide="ignore"):
        ts = np.log(r)
    ths = np.arctan2(y, x)
    return ts, ths


def translate_pair(pair: FieldPair, dx: float, target: LogPolarGrid | None = None):
    """Sample ``(u(x + dx, y), v(x + dx, y))`` on ``target`` (default: same grid).

    Returns the shifted pair and a boolean mask of nodes whose source point
    lies inside the source grid.  Outside nodes are filled with the shifted
    leading-order profile so the result stays a valid field.
    """
    src = pair.grid
    target = src if target is None else target
    ts, ths = _shifted_coordinates(target, dx)
    inside = (ts >= src.t_min) & (ts <= src.t_max)
    su, sv = _field_splines(pair)
    s = src.params.s
    phi, psi = segregated_profile(ths, s)
    with np.errstate(over="ignore", invalid="ignore"):
        rs = np.exp(s * ts)
    out = []
    for spl, lead in ((su, phi), (sv, psi)):
        vals = np.where(np.isfinite(rs), rs * lead, 0.0)
        vals[inside] = spl.ev(ts[inside], ths[inside])
        out.append(vals)
    return pair_from_arrays(target, *out), inside


def align_translation(report1: ExpansionReport, report2: ExpansionReport,
                      pair1: FieldPair, pair2: FieldPair, sum_tol: float = 1e-2):
    """``t0 = (a2 - a1)/s`` and the sup-relative mismatch of the aligned fields.

    ``pair1`` is shifted by ``t0`` in x (``u1(x + t0, y)``) and compared
    with ``pair2`` on the nodes whose shifted source stays inside the grid.
    """
    s = pair1.params.s
    if pair2.params != pair1.params:
        raise HypothesisError("pairs have different s")
    b1, b2 = report1.b_scale, report2.b_scale
    if abs(b1 - b2) > 0.01 * max(abs(b1), abs(b2)):
        raise HypothesisError(f"leading coefficients differ: {b1:.6g} vs {b2:.6g}")
    gap = abs(report1.coeff_sum - report2.coeff_sum)
    if gap > sum_tol:
        raise HypothesisError(f"a1+b1 and a2+b2 differ by {gap:.3g} > {sum_tol:g}")
    t0 = (report2.a_coeff - report1.a_coeff) / s
    shifted, inside = translate_pair(pair1, t0, pair2.grid)
    ref = pair2.unscaled()
    num = max(np.max(np.abs(shifted.u.values - ref.u.values)[inside]),
              np.max(np.abs(shifted.v.values - ref.v.values)[inside]))
    den = max(np.max(np.abs(ref.u.values)[inside]), np.max(np.abs(ref.v.values)[inside]))
    return float(t0), float(num / den)
