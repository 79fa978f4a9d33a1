"""Angular eigenproblems of ``-L_theta^a``, mode projections and exact profiles.

``L_theta^a psi = psi'' + a cot(theta) psi'`` is discretised with the same
three-point stencil (exact transmissibilities, Gauss-Jacobi masses) that
the two-dimensional operator uses on one t slice, so the discrete modes
are exactly the separated modes of the discrete Laplacian.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .core import (FieldPair, FracParam, LogPolarGrid, ThetaRule, pair_from_arrays,
                   sin_power_interval, theta_rule)
from .errors import DomainError, NumericalError, StructuralError
from .operator import theta_transmissibility

DENSE_LIMIT = 4096
BOUNDARY_CONDITIONS = ("mixed", "dirichlet", "cone")


@dataclass(frozen=True, eq=False)
class EigenSet:
    """Eigenpairs of a discrete angular problem.

    ``eigenfunctions[k]`` is mode ``k+1`` sampled at ``nodes`` and normalised
    so that ``sum(weights * psi**2) == 1``; the first mode is positive.
    """

    eigenvalues: np.ndarray
    eigenfunctions: np.ndarray
    nodes: np.ndarray
    weights: np.ndarray
    bc: str
    a: float

    @property
    def n_modes(self) -> int:
        return self.eigenvalues.size

    def mode(self, j: int) -> np.ndarray:
        """Mode ``j`` (1-based)."""
        return self.eigenfunctions[j - 1]

    def rule(self) -> ThetaRule:
        return ThetaRule(nodes=self.nodes, weights=self.weights, a=self.a,
                         faces=np.array([self.nodes[0], self.nodes[-1]]))


def _tridiagonal(T, weights, left, right):
    """Symmetric tridiagonal stiffness from node-to-node transmissibilities.

    ``T`` has ``n + 1`` entries: ``T[0]`` couples the first node to the left
    end, ``T[-1]`` the last node to the right end.  ``left``/``right`` are
    ``"neumann"`` (flux dropped) or ``"dirichlet"`` (zero end value).
    """
    n = weights.size
    diag = np.zeros(n)
    diag[1:] += T[1:n]
    diag[:-1] += T[1:n]
    if left == "dirichlet":
        diag[0] += T[0]
    if right == "dirichlet":
        diag[-1] += T[n]
    off = -T[1:n]
    return diag, off


def _solve(diag, off, weights, n_modes):
    n = weights.size
    if n_modes > n:
        raise DomainError(f"asked for {n_modes} modes from {n} unknowns")
    sw = np.sqrt(weights)
    d = diag / weights
    e = off / (sw[:-1] * sw[1:])
    try:
        if n <= DENSE_LIMIT:
            lam, vec = sla.eigh_tridiagonal(d, e, select="i",
                                            select_range=(0, n_modes - 1))
        else:
            mat = sp.diags([e, d, e], [-1, 0, 1], format="csc")
            lam, vec = spla.eigsh(mat, k=n_modes, sigma=0.0, which="LM")
            order = np.argsort(lam)
            lam, vec = lam[order], vec[:, order]
    except (np.linalg.LinAlgError, spla.ArpackNoConvergence) as exc:
        raise NumericalError(f"angular eigensolve failed: {exc}",
                             report={"n": n, "n_modes": n_modes}) from exc
    psi = (vec / sw[:, None]).T
    for k in range(psi.shape[0]):
        # sign convention: first nonzero sample positive
        pivot = psi[k][np.argmax(np.abs(psi[k]) > 1e-12 * np.abs(psi[k]).max())]
        if pivot < 0:
            psi[k] = -psi[k]
    return lam, psi


def solve_mixed_eigen(params: FracParam, n_modes: int = 4, n_theta: int = 2048,
                      rule: ThetaRule | None = None) -> EigenSet:
    """Modes of ``-L_theta^a`` on ``(0, pi)`` with ``d^a psi(0) = 0``, ``psi(pi) = 0``.

    The first eigenvalue converges to ``s(1-s)`` with eigenfunction
    proportional to ``cos(theta/2)**(2s)``.
    """
    if n_modes < 1:
        raise DomainError("n_modes must be at least 1")
    rule = theta_rule(n_theta, params.a) if rule is None else rule
    theta = np.concatenate(([0.0], rule.nodes, [np.pi]))
    T = theta_transmissibility(theta[:-1], theta[1:], params.a)
    diag, off = _tridiagonal(T, rule.weights, "neumann", "dirichlet")
    lam, psi = _solve(diag, off, rule.weights, n_modes)
    return EigenSet(lam, psi, rule.nodes.copy(), rule.weights.copy(), "mixed", params.a)


def _uniform_interval(lo: float, hi: float, a: float, n: int):
    """Cell-centred nodes on ``[lo, hi]`` with exact ``sin**a`` cell masses."""
    faces = np.linspace(lo, hi, n + 1)
    nodes = 0.5 * (faces[1:] + faces[:-1])
    weights = sin_power_interval(faces[:-1], faces[1:], a)
    ends = np.concatenate(([lo], nodes, [hi]))
    T = theta_transmissibility(ends[:-1], ends[1:], a)
    return nodes, weights, T


def interval_eigen(lo: float, hi: float, params: FracParam, left: str, right: str,
                   n_modes: int = 1, n: int = 2000) -> EigenSet:
    """Modes of ``-L_theta^a`` on a subinterval of ``[0, pi]``."""
    if not 0.0 <= lo < hi <= math.pi:
        raise DomainError(f"need 0 <= lo < hi <= pi, got {lo}, {hi}")
    nodes, weights, T = _uniform_interval(lo, hi, params.a, n)
    diag, off = _tridiagonal(T, weights, left, right)
    lam, psi = _solve(diag, off, weights, n_modes)
    bc = "dirichlet" if left == right == "dirichlet" else "cone"
    return EigenSet(lam, psi, nodes, weights, bc, params.a)


def cone_exponent(epsilon: float, params: FracParam, n: int = 2000) -> float:
    """Homogeneity ``d > 0`` of the positive harmonic in the cone ``|theta| < epsilon``.

    The weight ``|sin(theta)|**a`` is extended evenly across the axis; the
    first Dirichlet mode is even, so the problem reduces to ``(0, epsilon)``
    with a zero weighted flux at ``0``.  ``d`` is the positive root of
    ``d (d + a) = lambda_min``.
    """
    if not 0.0 < epsilon < math.pi / 4:
        raise DomainError(f"epsilon must lie in (0, pi/4), got {epsilon}")
    lam = interval_eigen(0.0, epsilon, params, "neumann", "dirichlet", 1, n).eigenvalues[0]
    a = params.a
    return 0.5 * (-a + math.sqrt(a * a + 4.0 * lam))


def poincare_constant(h: float, params: FracParam, n: int = 2000) -> float:
    """Smallest Rayleigh quotient on ``(pi - h, pi)`` with zero end values."""
    if not 0.0 < h < math.pi / 2:
        raise DomainError(f"h must lie in (0, pi/2), got {h}")
    return float(interval_eigen(math.pi - h, math.pi, params, "dirichlet", "dirichlet",
                                1, n).eigenvalues[0])


def rayleigh_quotient(psi, eig: EigenSet) -> float:
    """Discrete Rayleigh quotient of ``psi`` under the mixed stencil of ``eig``."""
    theta = np.concatenate(([0.0], eig.nodes, [np.pi]))
    T = theta_transmissibility(theta[:-1], theta[1:], eig.a)
    diag, off = _tridiagonal(T, eig.weights, "neumann", "dirichlet")
    psi = np.asarray(psi, dtype=float)
    Kpsi = diag * psi
    Kpsi[:-1] += off * psi[1:]
    Kpsi[1:] += off * psi[:-1]
    return float(psi @ Kpsi / np.sum(eig.weights * psi**2))


def segregated_profile(theta, s: float):
    """Angular factors ``(cos(theta/2)**(2s), sin(theta/2)**(2s))``."""
    theta = np.asarray(theta, dtype=float)
    return np.cos(0.5 * theta) ** (2 * s), np.sin(0.5 * theta) ** (2 * s)


def exact_homogeneous_pair(grid: LogPolarGrid, branch: str = "segregated",
                           b: float = 1.0) -> FieldPair:
    """Sample the exact homogeneous solutions of the limiting segregated system.

    ``segregated``: ``b r^s (cos(theta/2)**(2s), sin(theta/2)**(2s))``.
    ``degenerate`` (``s > 1/2`` only): ``(r^(2s-1), 0)``.
    """
    s = grid.params.s
    T, TH = grid.mesh()
    if branch == "segregated":
        phi, psi = segregated_profile(TH, s)
        r_s = b * np.exp(s * T)
        return pair_from_arrays(grid, r_s * phi, r_s * psi)
    if branch == "degenerate":
        if s <= 0.5:
            raise DomainError(f"the degenerate branch needs s > 1/2, got s={s}")
        return pair_from_arrays(grid, b * np.exp((2 * s - 1) * T), np.zeros(grid.shape))
    raise DomainError(f"unknown branch {branch!r}")


def project_mode(f_theta, mode, rule) -> float:
    """Weighted inner product ``sum_j w_j f(theta_j) psi(theta_j)``."""
    f_theta = np.asarray(f_theta, dtype=float)
    mode = np.asarray(mode, dtype=float)
    weights = rule.weights
    if f_theta.shape[-1] != weights.size or mode.shape[-1] != weights.size:
        raise StructuralError(
            f"arrays of length {f_theta.shape[-1]}, {mode.shape[-1]} do not match "
            f"{weights.size} rule nodes")
    return np.sum(f_theta * mode * weights, axis=-1)


def write_eigen_csv(eig: EigenSet, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["j", "lambda", "theta", "psi"])
        for j in range(eig.n_modes):
            lam = repr(float(eig.eigenvalues[j]))
            for th, val in zip(eig.nodes, eig.eigenfunctions[j]):
                writer.writerow([j + 1, lam, repr(float(th)), repr(float(val))])
