"""Angular spectrum, the Phi profile and the half-space Poisson kernel.

    python3 demos/spectrum_and_kernels.py
"""

import math

import numpy as np
from scipy.special import gamma, kv

from fracseg import (hyperbolic_distance, make_params, poisson_kernel, solve_mixed_eigen,
                     solve_phi)
from fracseg.kernels import kernel_mass, make_kernel


def main():
    for s in (0.3, 0.5, 0.75):
        p = make_params(s)
        eig = solve_mixed_eigen(p, 3, n_theta=512)
        lam = ", ".join(f"{x:.6f}" for x in eig.eigenvalues)
        print(f"s = {s}: mixed eigenvalues {lam}  (first should be {s * (1 - s):.6f})")

        phi = solve_phi(p)
        ref = 2 ** (1 - s) / gamma(s) * phi.t**s * kv(s, phi.t)
        print(f"   Phi(0+) = {phi.at_zero():.10f}, max |Phi - Bessel form| = "
              f"{np.max(np.abs(phi.phi - ref)):.1e}")

        ev = make_kernel(p)
        print(f"   kernel mass at y = 1: {kernel_mass(1.0, ev):.12f}, "
              f"P(0, 1) = {float(poisson_kernel(0.0, 1.0, ev)):.6f}")
    print(f"hyperbolic distance (0,1)-(0,e): {hyperbolic_distance([0, 1], [0, math.e]):.15f}")


if __name__ == "__main__":
    main()
