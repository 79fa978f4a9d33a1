"""Far-field expansion of the s = 3/4 profile on a long domain.

Solves on ``t in [-6, 10]`` at the coarse spacing, then reads off the
leading scale, the subleading coefficients of ``u`` and ``v`` and the
decay slopes of the boundary traces.

    python3 demos/expansion.py
"""

from fracseg import extract_expansion, make_params, solve_profile
from fracseg.suite import ProfileCache


def main():
    s = 0.75
    cfg = ProfileCache("coarse").config("long")
    pair, report = solve_profile(make_params(s), cfg)
    print(f"solved on t in [{cfg.t_min}, {cfg.t_max:.2f}] with {cfg.n_t} x {cfg.n_theta} nodes "
          f"in {report.seconds:.1f} s")
    rep = extract_expansion(pair)
    print(f"leading scale b = {rep.b_scale:.6f}")
    print(f"subleading a_u = {rep.a_coeff:+.5f} +- {rep.a_stderr:.1e}, "
          f"a_v = {rep.b_coeff:+.5f} +- {rep.b_stderr:.1e}")
    print(f"symmetry centre T = {rep.T:+.2e}")
    print(f"f(t) rates: u {rep.residuals['rate_u']:.2f}, v {rep.residuals['rate_v']:.2f} "
          f"(expected at least {rep.residuals['rate_expected']:.2f})")
    for key, fit in rep.slopes.items():
        print(f"  slope {key:8s} {fit['slope']:+.4f}   expected {fit['expected']:+.4f}")


if __name__ == "__main__":
    main()
