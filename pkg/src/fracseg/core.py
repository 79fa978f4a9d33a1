"""Parameters, log-polar grids, field storage and weighted quadrature.

Every field in the package lives on a tensor grid in Emden-Fowler variables

    x = exp(t) cos(theta),   y = exp(t) sin(theta),

with a uniform grid in ``t`` and a Gauss-Jacobi grid in ``theta`` whose
weights integrate ``sin(theta)**a`` exactly for polynomials in
``cos(theta)``.  The two boundary rays ``theta = 0`` and ``theta = pi`` are
stored as extra columns because the nonlinear coupling lives there.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .errors import ConfigurationError, DomainError, StructuralError

FIELD_KINDS = ("w", "bar", "residual")


@dataclass(frozen=True)
class FracParam:
    """Fractional exponent ``s`` and the extension weight exponent ``a = 1 - 2s``."""

    s: float

    def __post_init__(self):
        s = float(self.s)
        if not (0.0 < s < 1.0) or not math.isfinite(s):
            raise DomainError(f"s must lie in (0, 1), got {self.s!r}")
        object.__setattr__(self, "s", s)

    @property
    def a(self) -> float:
        return 1.0 - 2.0 * self.s

    @property
    def lambda1(self) -> float:
        """First mixed eigenvalue ``s(1-s)`` of the angular operator."""
        return self.s * (1.0 - self.s)


def make_params(s: float) -> FracParam:
    return FracParam(s)


# ---------------------------------------------------------------------------
# angular quadrature


def sin_power_integral(theta, p: float):
    """``int_0^theta sin(tau)**p dtau`` for ``p > -1``, vectorised.

    Uses the regularised incomplete beta function through the substitution
    ``u = sin(tau/2)**2``.  Values above ``pi/2`` are taken from the
    complement so that both ends of ``(0, pi)`` keep full relative accuracy.
    """
    if p <= -1.0:
        raise DomainError(f"sin(theta)**{p} is not integrable at 0")
    theta = np.asarray(theta, dtype=float)
    q = 0.5 * (p + 1.0)
    total = 2.0**p * special.beta(q, q)
    near = np.minimum(theta, np.pi - theta)
    part = total * special.betainc(q, q, np.sin(0.5 * near) ** 2)
    return np.where(theta <= 0.5 * np.pi, part, total - part)


def sin_power_interval(lo, hi, p: float):
    """``int_lo^hi sin(tau)**p dtau`` without cancellation near ``pi``."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    q = 0.5 * (p + 1.0)
    total = 2.0**p * special.beta(q, q)

    def left(th):
        return total * special.betainc(q, q, np.sin(0.5 * th) ** 2)

    half = 0.5 * total
    both_low = hi <= 0.5 * np.pi
    both_high = lo >= 0.5 * np.pi
    val_low = left(np.minimum(hi, 0.5 * np.pi)) - left(np.minimum(lo, 0.5 * np.pi))
    val_high = left(np.pi - np.maximum(lo, 0.5 * np.pi)) - left(
        np.pi - np.maximum(hi, 0.5 * np.pi))
    mixed = (half - left(np.minimum(lo, 0.5 * np.pi))) + (
        half - left(np.pi - np.maximum(hi, 0.5 * np.pi)))
    return np.where(both_low, val_low, np.where(both_high, val_high, mixed))


@dataclass(frozen=True, eq=False)
class ThetaRule:
    """Gauss-Jacobi rule for ``int_0^pi f(theta) sin(theta)**a dtheta``.

    ``faces`` partitions ``[0, pi]`` into cells whose weighted measure equals
    the rule weights; the nodes interlace with the faces.
    """

    nodes: np.ndarray
    weights: np.ndarray
    a: float
    faces: np.ndarray

    @property
    def n(self) -> int:
        return self.nodes.size

    @property
    def total_weight(self) -> float:
        return float(self.weights.sum())

    def integrate(self, values, axis=-1):
        return np.tensordot(np.asarray(values, dtype=float), self.weights,
                            axes=([axis], [0]))


def exact_total_weight(a: float) -> float:
    """``int_0^pi sin(theta)**a dtheta``."""
    return math.sqrt(math.pi) * math.exp(math.lgamma(0.5 * (a + 1.0)) - math.lgamma(0.5 * a + 1.0))


def theta_rule(n: int, a: float) -> ThetaRule:
    """Gauss-Jacobi nodes in ``x = cos(theta)`` with exponents ``(a-1)/2``.

    The substitution turns ``sin(theta)**a dtheta`` into the Jacobi weight
    ``(1-x**2)**((a-1)/2) dx``; the node set is symmetrised under
    ``theta -> pi - theta``.
    """
    if n < 2:
        raise ConfigurationError("a theta rule needs at least two nodes")
    if not -1.0 < a < 1.0:
        raise DomainError(f"weight exponent a must lie in (-1, 1), got {a}")
    alpha = 0.5 * (a - 1.0)
    x, w = special.roots_jacobi(n, alpha, alpha)
    theta = np.arccos(x)[::-1]
    w = w[::-1]
    theta = 0.5 * (theta + (np.pi - theta[::-1]))
    w = 0.5 * (w + w[::-1])
    w *= exact_total_weight(a) / w.sum()

    # faces where the cumulative weighted measure matches the partial sums
    q = 0.5 * (a + 1.0)
    total = exact_total_weight(a)
    frac = np.clip(np.concatenate(([0.0], np.cumsum(w))) / total, 0.0, 1.0)
    near = np.minimum(frac, 1.0 - frac)
    th_near = 2.0 * np.arcsin(np.sqrt(special.betaincinv(q, q, near)))
    faces = np.where(frac <= 0.5, th_near, np.pi - th_near)
    faces[0], faces[-1] = 0.0, np.pi
    return ThetaRule(nodes=theta, weights=w, a=float(a), faces=faces)


# ---------------------------------------------------------------------------
# exponential weights along t


def exp_integral(c: float, lo, hi):
    """``int_lo^hi exp(c t) dt`` evaluated without cancellation for small ``c``."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    if c == 0.0:
        return hi - lo
    return np.exp(c * lo) * np.expm1(c * (hi - lo)) / c


def exp_weighted_integral(t_nodes, values, c: float, lo: float | None = None,
                          hi: float | None = None):
    """``int_lo^hi f(t) exp(c t) dt`` for ``f`` piecewise linear on ``t_nodes``.

    ``values`` has the t axis first; trailing axes are carried along.  The
    exponential weight is integrated in closed form on each interval, so
    the rule is exact whenever ``f`` is piecewise linear.
    """
    t = np.asarray(t_nodes, dtype=float)
    f = np.asarray(values, dtype=float)
    lo = t[0] if lo is None else float(lo)
    hi = t[-1] if hi is None else float(hi)
    if hi <= lo:
        return np.zeros(f.shape[1:])
    a_ = np.clip(t[:-1], lo, hi)
    b_ = np.clip(t[1:], lo, hi)
    h = t[1:] - t[:-1]
    keep = b_ > a_
    a_, b_, h = a_[keep], b_[keep], h[keep]
    idx = np.nonzero(keep)[0]
    f0 = f[idx]
    f1 = f[idx + 1]
    # linear interpolant f0 + (f1 - f0) (t - t_i)/h on [a_, b_] within [t_i, t_{i+1}]
    ti = t[idx]
    m0 = exp_integral(c, a_, b_)
    if c == 0.0:
        m1 = 0.5 * ((b_ - ti) ** 2 - (a_ - ti) ** 2)
    else:
        # int (t - ti) e^{ct} dt = [(t - ti)/c - 1/c^2] e^{ct}
        m1 = (((b_ - ti) / c - 1.0 / c**2) * np.exp(c * b_)
              - ((a_ - ti) / c - 1.0 / c**2) * np.exp(c * a_))
    shape = (-1,) + (1,) * (f.ndim - 1)
    coef0 = (m0 - m1 / h).reshape(shape)
    coef1 = (m1 / h).reshape(shape)
    return np.sum(coef0 * f0 + coef1 * f1, axis=0)


def cumulative_exp_weighted(t_nodes, values, c: float):
    """Running integral ``int_{t_0}^{t_k} f exp(c t) dt`` at every node."""
    t = np.asarray(t_nodes, dtype=float)
    f = np.asarray(values, dtype=float)
    h = np.diff(t)
    m0 = exp_integral(c, t[:-1], t[1:])
    if c == 0.0:
        m1 = 0.5 * h**2
    else:
        m1 = ((h / c - 1.0 / c**2) * np.exp(c * t[1:])
              + (1.0 / c**2) * np.exp(c * t[:-1]))
    shape = (-1,) + (1,) * (f.ndim - 1)
    pieces = (m0 - m1 / h).reshape(shape) * f[:-1] + (m1 / h).reshape(shape) * f[1:]
    out = np.zeros_like(f)
    out[1:] = np.cumsum(pieces, axis=0)
    return out


# ---------------------------------------------------------------------------
# grids and fields


@dataclass(frozen=True, eq=False)
class LogPolarGrid:
    params: FracParam
    t_nodes: np.ndarray
    rule: ThetaRule
    cell_volumes: np.ndarray = field(repr=False)

    @property
    def n_t(self) -> int:
        return self.t_nodes.size

    @property
    def n_theta(self) -> int:
        return self.rule.n

    @property
    def t_min(self) -> float:
        return float(self.t_nodes[0])

    @property
    def t_max(self) -> float:
        return float(self.t_nodes[-1])

    @property
    def h_t(self) -> float:
        return (self.t_max - self.t_min) / (self.n_t - 1)

    @property
    def theta(self) -> np.ndarray:
        """Interior nodes with the two boundary rays prepended and appended."""
        return np.concatenate(([0.0], self.rule.nodes, [np.pi]))

    @property
    def radii(self) -> np.ndarray:
        return np.exp(self.t_nodes)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_t, self.n_theta + 2)

    def t_cell_edges(self) -> np.ndarray:
        """Node-centred dual cells in t, clipped to the grid extent."""
        t = self.t_nodes
        mid = 0.5 * (t[1:] + t[:-1])
        return np.concatenate(([t[0]], mid, [t[-1]]))

    def mesh(self):
        return np.meshgrid(self.t_nodes, self.theta, indexing="ij")

    def same_as(self, other: "LogPolarGrid") -> bool:
        return (self is other) or (
            self.params == other.params
            and self.t_nodes.shape == other.t_nodes.shape
            and self.rule.n == other.rule.n
            and np.array_equal(self.t_nodes, other.t_nodes)
            and np.array_equal(self.rule.nodes, other.rule.nodes))


def build_grid(t_min: float, t_max: float, n_t: int, n_theta: int,
               params: FracParam) -> LogPolarGrid:
    """Uniform t nodes on ``[t_min, t_max]`` times a Gauss-Jacobi theta rule.

    ``cell_volumes[i, j]`` is the exact integral of
    ``exp((2+a) t) sin(theta)**a`` over the dual cell of node ``(i, j)``,
    i.e. the Cartesian measure ``y**a dx dy`` of that cell.
    """
    if not (n_t >= 8 and n_theta >= 8):
        raise ConfigurationError(f"need n_t >= 8 and n_theta >= 8, got {n_t}, {n_theta}")
    if not t_min < t_max:
        raise ConfigurationError(f"need t_min < t_max, got {t_min}, {t_max}")
    t = np.linspace(float(t_min), float(t_max), int(n_t))
    rule = theta_rule(int(n_theta), params.a)
    mid = 0.5 * (t[1:] + t[:-1])
    edges = np.concatenate(([t[0]], mid, [t[-1]]))
    tvol = exp_integral(2.0 + params.a, edges[:-1], edges[1:])
    vol = np.outer(tvol, rule.weights)
    vol.flags.writeable = False
    t.flags.writeable = False
    return LogPolarGrid(params=params, t_nodes=t, rule=rule, cell_volumes=vol)


def regrid_t(grid: LogPolarGrid, t_max: float) -> LogPolarGrid:
    """Same spacing and theta rule, extent ``[grid.t_min, t_max]``."""
    n_t = int(round((t_max - grid.t_min) / grid.h_t)) + 1
    return build_grid(grid.t_min, grid.t_min + (n_t - 1) * grid.h_t, n_t,
                      grid.n_theta, grid.params)


@dataclass(frozen=True, eq=False)
class LogPolarField:
    """Samples of a scalar field on a grid, boundary rays included.

    ``values`` has shape ``(n_t, n_theta + 2)``; column 0 is the trace on
    ``theta = 0`` and the last column the trace on ``theta = pi``.
    ``kind`` is ``"w"`` for the unscaled field ``w(t, theta) = u(e^t cos, e^t sin)``
    and ``"bar"`` for ``exp(-s t) w``.
    """

    grid: LogPolarGrid
    values: np.ndarray
    kind: str = "w"

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.shape != self.grid.shape:
            raise StructuralError(
                f"field shape {vals.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(vals)):
            raise DomainError("field values must be finite")
        if self.kind not in FIELD_KINDS:
            raise ConfigurationError(f"unknown field kind {self.kind!r}")
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)

    @property
    def interior(self) -> np.ndarray:
        return self.values[:, 1:-1]

    def trace(self, side) -> np.ndarray:
        return self.values[:, 0] if _side_index(side) == 0 else self.values[:, -1]

    def unscaled(self) -> "LogPolarField":
        if self.kind == "w":
            return self
        s = self.grid.params.s
        return LogPolarField(self.grid, self.values * np.exp(s * self.grid.t_nodes)[:, None], "w")

    def scaled(self) -> "LogPolarField":
        if self.kind == "bar":
            return self
        s = self.grid.params.s
        return LogPolarField(self.grid, self.values * np.exp(-s * self.grid.t_nodes)[:, None], "bar")

    def mirrored(self) -> "LogPolarField":
        """The field composed with ``theta -> pi - theta``."""
        return LogPolarField(self.grid, self.values[:, ::-1], self.kind)

    def with_values(self, values) -> "LogPolarField":
        return LogPolarField(self.grid, values, self.kind)


def _side_index(side) -> int:
    if side in (0, 0.0, "0"):
        return 0
    if side in ("pi", "π") or (isinstance(side, float) and abs(side - np.pi) < 1e-12):
        return 1
    raise StructuralError(f"side must be 0 or pi, got {side!r}")


@dataclass(frozen=True, eq=False)
class FieldPair:
    u: LogPolarField
    v: LogPolarField

    def __post_init__(self):
        if not self.u.grid.same_as(self.v.grid):
            raise StructuralError("u and v live on different grids")
        if self.u.kind != self.v.kind:
            raise StructuralError("u and v must have the same kind")

    @property
    def grid(self) -> LogPolarGrid:
        return self.u.grid

    @property
    def params(self) -> FracParam:
        return self.u.grid.params

    def unscaled(self) -> "FieldPair":
        return FieldPair(self.u.unscaled(), self.v.unscaled())

    def scaled(self) -> "FieldPair":
        return FieldPair(self.u.scaled(), self.v.scaled())

    def swapped(self) -> "FieldPair":
        """``(v, u)`` composed with ``theta -> pi - theta`` (reflection ``x -> -x``)."""
        return FieldPair(self.v.mirrored(), self.u.mirrored())


def pair_from_arrays(grid: LogPolarGrid, u, v, kind: str = "w") -> FieldPair:
    return FieldPair(LogPolarField(grid, u, kind), LogPolarField(grid, v, kind))


def weighted_volume_integral(f: LogPolarField, region=None) -> float:
    """``int y**a f dx dy`` over the half annulus ``r_lo < |z| < r_hi``.

    In log-polar variables this is the integral of
    ``f exp((2+a) t) sin(theta)**a`` over ``t in (log r_lo, log r_hi)``.
    ``region=None`` means the full grid extent.
    """
    grid = f.grid
    if region is None:
        lo, hi = grid.t_min, grid.t_max
    else:
        r_lo, r_hi = region
        if r_lo <= 0 or r_hi < r_lo:
            raise DomainError(f"invalid radius interval {region!r}")
        lo, hi = math.log(r_lo), math.log(r_hi)
        tol = 1e-12 * max(1.0, abs(grid.t_min), abs(grid.t_max))
        if lo < grid.t_min - tol or hi > grid.t_max + tol:
            raise DomainError(
                f"region {region!r} leaves the grid radii "
                f"[{math.exp(grid.t_min):.6g}, {math.exp(grid.t_max):.6g}]")
        lo, hi = max(lo, grid.t_min), min(hi, grid.t_max)
    g = f.unscaled() if f.kind == "bar" else f
    theta_line = grid.rule.integrate(g.interior, axis=1)
    return float(exp_weighted_integral(grid.t_nodes, theta_line, 2.0 + grid.params.a, lo, hi))


# ----------------------------------------------------------------------------
# Snapshot text format


def write_snapshot(f: LogPolarField, path) -> None:
    """Write a field as ``s a t_min t_max n_t n_theta`` then ``t theta value`` rows.

    Values are printed with 17 significant digits so the round trip is exact.
    The theta column runs over the rays and the rule nodes.
    """
    grid = f.grid
    p = grid.params
    T, TH = grid.mesh()
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{p.s!r} {p.a!r} {grid.t_min!r} {grid.t_max!r} {grid.n_t} {grid.n_theta}\n")
        for t, th, v in zip(T.ravel(), TH.ravel(), f.values.ravel()):
            fh.write(f"{t:.17g} {th:.17g} {v:.17g}\n")


def read_snapshot(path, kind: str = "w") -> LogPolarField:
    """Inverse of :func:`write_snapshot`; the grid is rebuilt from the header."""
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 6:
            raise StructuralError(f"{path}: expected 6 header fields, got {len(header)}")
        s, a, t_min, t_max = (float(x) for x in header[:4])
        n_t, n_theta = int(header[4]), int(header[5])
        data = np.loadtxt(fh, ndmin=2)
    params = make_params(s)
    if abs(params.a - a) > 1e-12:
        raise StructuralError(f"{path}: header a={a} is not 1 - 2s for s={s}")
    grid = build_grid(t_min, t_max, n_t, n_theta, params)
    if data.shape != (n_t * (n_theta + 2), 3):
        raise StructuralError(f"{path}: expected {n_t * (n_theta + 2)} rows of 3 columns, "
                              f"got {data.shape}")
    T, TH = grid.mesh()
    if (np.max(np.abs(data[:, 0] - T.ravel())) > 1e-12 * max(1.0, abs(t_min), abs(t_max))
            or np.max(np.abs(data[:, 1] - TH.ravel())) > 1e-12):
        raise StructuralError(f"{path}: coordinates do not match the rebuilt grid")
    return LogPolarField(grid, data[:, 2].reshape(grid.shape), kind)


def write_field_csv(f: LogPolarField, path) -> None:
    """CSV export with columns ``t, theta, value``."""
    T, TH = f.grid.mesh()
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "theta", "value"])
        for row in zip(T.ravel(), TH.ravel(), f.values.ravel()):
            writer.writerow([repr(float(x)) for x in row])
