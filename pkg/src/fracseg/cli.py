"""Command-line entry point: ``python -m fracseg`` / ``fracseg``.

Configuration is a text file of ``key = value`` lines with dotted section
names, for example::

    mode = asymptotics
    s = 0.75
    resolution = reference
    grid.t_max = 10
    solver.schedule = 1, 2, 3, 4, 5, 6, 7, 8, 9
    fit.inner = 0.3

Command-line flags override the file.  Every effective setting is written
to ``config.json`` in the output directory.  Exit status: 0 on success, 2
on an invalid configuration (nothing is written), 3 on a numerical failure
(``error.json`` holds the diagnostics).
"""

from __future__ import annotations

import argparse
import ast
import json
import logging
import os
import sys
from dataclasses import asdict, dataclass, field

import numpy as np

from .asymptotics import default_window, extract_expansion
from .core import make_params, write_field_csv, write_snapshot
from .errors import ConfigurationError, DomainError, FracSegError
from .kernels import (Extension, appendix_checks, harnack_certificate, kernel_table,
                      make_kernel, solve_phi)
from .monotone import frequency_trace
from .solver import RESOLUTIONS, SolverConfig, solve_profile
from .spectral import solve_mixed_eigen, write_eigen_csv

log = logging.getLogger("fracseg")

MODES = ("profile", "spectrum", "monotonicity", "asymptotics", "kernels", "suite")
EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3

SOLVER_KEYS = ("tol", "max_iter", "damping", "schedule", "initial_guess", "noise",
               "warmup_sweeps")
GRID_KEYS = ("t_min", "t_max", "n_t", "n_theta")


@dataclass
class RunConfig:
    """Validated settings of one CLI run."""

    mode: str = "profile"
    s: float = 0.5
    resolution: str = "reference"
    seed: int = 0
    out: str = "fracseg-out"
    grid: dict = field(default_factory=dict)
    solver: dict = field(default_factory=dict)
    fit: dict = field(default_factory=lambda: {"inner": 0.3, "outer": 0.2, "floor": 1.0})
    spectrum: dict = field(default_factory=lambda: {"n_theta": 2048, "n_modes": 4})
    kernels: dict = field(default_factory=lambda: {"T_max": 20.0, "harnack_samples": 64})
    suite: dict = field(default_factory=lambda: {"criteria": list(range(1, 13))})

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ConfigurationError(f"unknown mode {self.mode!r}; choose from {MODES}")
        make_params(self.s)
        if self.resolution not in RESOLUTIONS:
            raise ConfigurationError(f"unknown resolution {self.resolution!r}")
        for name, allowed in (("grid", GRID_KEYS), ("solver", SOLVER_KEYS),
                              ("fit", ("inner", "outer", "floor")),
                              ("spectrum", ("n_theta", "n_modes")),
                              ("kernels", ("T_max", "harnack_samples")),
                              ("suite", ("criteria",))):
            extra = set(getattr(self, name)) - set(allowed)
            if extra:
                raise ConfigurationError(f"unknown {name} keys: {sorted(extra)}")
        self.solver_config()
        f = self.fit
        if not (0 <= f["inner"] < 1 and 0 <= f["outer"] < 1 and f["inner"] + f["outer"] < 1):
            raise ConfigurationError(f"invalid fit exclusions {f}")
        if int(self.spectrum["n_modes"]) < 1 or int(self.spectrum["n_theta"]) < 8:
            raise ConfigurationError(f"invalid spectrum settings {self.spectrum}")
        if float(self.kernels["T_max"]) < 10:
            raise ConfigurationError("kernels.T_max must be at least 10")
        bad = [c for c in self.suite["criteria"] if c not in range(1, 13)]
        if bad:
            raise ConfigurationError(f"unknown criteria {bad}")

    def solver_config(self) -> SolverConfig:
        n_t, n_theta = RESOLUTIONS[self.resolution]
        kw = {"n_t": n_t, "n_theta": n_theta, "seed": self.seed}
        kw.update(self.grid)
        kw.update(self.solver)
        try:
            return SolverConfig(**kw)
        except TypeError as exc:
            raise ConfigurationError(str(exc)) from exc

    def to_dict(self) -> dict:
        d = asdict(self)
        d["effective_solver"] = self.solver_config().to_dict()
        return d


def _parse_value(text: str):
    text = text.strip()
    try:
        return ast.literal_eval(text)
    except (ValueError, SyntaxError):
        pass
    if "," in text:
        return tuple(_parse_value(x) for x in text.split(","))
    return text


def parse_config_text(text: str) -> dict:
    """``key = value`` lines into a nested dict; ``#`` starts a comment."""
    out: dict = {}
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"line {n}: expected 'key = value', got {raw!r}")
        key, value = (x.strip() for x in line.split("=", 1))
        parts = key.split(".")
        if not all(parts):
            raise ConfigurationError(f"line {n}: malformed key {key!r}")
        node = out
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigurationError(f"line {n}: {key!r} nests under a value")
        node[parts[-1]] = _parse_value(value)
    return out


def build_config(settings: dict) -> RunConfig:
    cfg = RunConfig()
    for key, value in settings.items():
        if not hasattr(cfg, key):
            raise ConfigurationError(f"unknown setting {key!r}")
        current = getattr(cfg, key)
        if isinstance(current, dict):
            if not isinstance(value, dict):
                raise ConfigurationError(f"{key!r} is a section, not a value")
            current.update(value)
        else:
            setattr(cfg, key, value)
    try:
        cfg.s = float(cfg.s)
        cfg.seed = int(cfg.seed)
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(str(exc)) from exc
    for k in ("criteria",):
        v = cfg.suite.get(k)
        if isinstance(v, int):
            cfg.suite[k] = [v]
        else:
            cfg.suite[k] = [int(x) for x in v]
    if "schedule" in cfg.solver and not isinstance(cfg.solver["schedule"], (tuple, list)):
        cfg.solver["schedule"] = (cfg.solver["schedule"],)
    cfg.validate()
    return cfg


def _jsonable(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.bool_):
        return bool(x)
    if isinstance(x, (np.ndarray, tuple)):
        return list(x)
    raise TypeError(f"cannot serialise {type(x).__name__}")


def write_json(obj, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_jsonable)
        fh.write("\n")


def _split_timings(obj, prefix=""):
    """Move every ``*seconds`` entry out of ``obj``; returns ``(clean, timings)``."""
    timings = {}
    if isinstance(obj, dict):
        clean = {}
        for k, v in obj.items():
            name = f"{prefix}.{k}" if prefix else str(k)
            if str(k).endswith("seconds"):
                timings[name] = v
            else:
                clean[k], t = _split_timings(v, name)
                timings.update(t)
        return clean, timings
    if isinstance(obj, list):
        clean = []
        for i, v in enumerate(obj):
            c, t = _split_timings(v, f"{prefix}[{i}]")
            clean.append(c)
            timings.update(t)
        return clean, timings
    return obj, {}


def _emit(obj, path, timings: dict) -> None:
    clean, t = _split_timings(obj)
    timings.update({f"{os.path.basename(path)}:{k}": v for k, v in t.items()})
    write_json(clean, path)


# ----------------------------------------------------------------------------
# modes


def _solve(cfg: RunConfig):
    params = make_params(cfg.s)
    return solve_profile(params, cfg.solver_config())


def _window(cfg: RunConfig, grid):
    return default_window(grid, cfg.fit["inner"], cfg.fit["outer"], cfg.fit["floor"])


def run_profile(cfg: RunConfig, out: str, timings: dict) -> None:
    pair, report = _solve(cfg)
    write_snapshot(pair.u, os.path.join(out, "u.txt"))
    write_snapshot(pair.v, os.path.join(out, "v.txt"))
    write_field_csv(pair.u, os.path.join(out, "u.csv"))
    write_field_csv(pair.v, os.path.join(out, "v.csv"))
    _emit(report.to_dict(), os.path.join(out, "report.json"), timings)


def run_spectrum(cfg: RunConfig, out: str, timings: dict) -> None:
    eig = solve_mixed_eigen(make_params(cfg.s), int(cfg.spectrum["n_modes"]),
                            n_theta=int(cfg.spectrum["n_theta"]))
    write_eigen_csv(eig, os.path.join(out, "eigen.csv"))


def run_monotonicity(cfg: RunConfig, out: str, timings: dict) -> None:
    pair, report = _solve(cfg)
    tr = frequency_trace(pair, with_acf=True)
    tr.to_csv(os.path.join(out, "frequency.csv"))
    _emit({"M_star": tr.M_star, "b_est": tr.b_est, "solve": report.to_dict()},
          os.path.join(out, "monotonicity.json"), timings)


def run_asymptotics(cfg: RunConfig, out: str, timings: dict) -> None:
    pair, report = _solve(cfg)
    rep = extract_expansion(pair, window=_window(cfg, pair.grid), subleading=cfg.s > 0.25)
    _emit(rep.to_dict(), os.path.join(out, "expansion.json"), timings)


def run_kernels(cfg: RunConfig, out: str, timings: dict) -> None:
    params = make_params(cfg.s)
    phi = solve_phi(params, float(cfg.kernels["T_max"]))
    phi.to_csv(os.path.join(out, "phi.csv"))
    ev = make_kernel(params)
    kernel_table(ev, np.linspace(-5, 5, 101), [0.5, 1.0, 2.0], os.path.join(out, "kernel.csv"))
    x = np.linspace(-200.0, 200.0, 100_001)
    ext = Extension((np.abs(x) <= 1.0).astype(float), x, ev)
    centers = list(zip(np.linspace(-3, 3, 10), np.linspace(0.3, 3.0, 10)))
    cert = harnack_certificate(ext, centers, int(cfg.kernels["harnack_samples"]), cfg.seed)
    app = appendix_checks(params)
    _emit({"phi_zero": phi.at_zero(), "harnack": cert.to_dict(), "appendix": app.to_dict()},
          os.path.join(out, "kernels.json"), timings)


def run_suite_mode(cfg: RunConfig, out: str, timings: dict) -> None:
    from .suite import ProfileCache, run_suite, summary

    cache = ProfileCache(cfg.resolution, cfg.seed)
    results = run_suite(cfg.resolution, cfg.seed, set(cfg.suite["criteria"]), cache)
    for r in results:
        print(r.line())
        timings[f"criterion_{r.number}"] = r.seconds
    data = summary(results, cfg.to_dict())
    for r in data["criteria"].values():
        r.pop("seconds", None)
    _emit(data, os.path.join(out, "summary.json"), timings)


RUNNERS = {"profile": run_profile, "spectrum": run_spectrum,
           "monotonicity": run_monotonicity, "asymptotics": run_asymptotics,
           "kernels": run_kernels, "suite": run_suite_mode}


# ----------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fracseg", description=__doc__.split("\n\n")[0])
    p.add_argument("--config", help="key = value configuration file")
    p.add_argument("--mode", choices=MODES, help="overrides the configured mode")
    p.add_argument("--out", help="output directory")
    p.add_argument("--seed", type=int, help="seed for randomised steps")
    p.add_argument("--resolution", choices=tuple(RESOLUTIONS), help="grid preset")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="extra setting, e.g. --set s=0.75 (repeatable)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def load_config(args) -> RunConfig:
    settings: dict = {}
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                settings = parse_config_text(fh.read())
        except OSError as exc:
            raise ConfigurationError(f"cannot read {args.config}: {exc}") from exc
    extra = parse_config_text("\n".join(args.set))
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(settings.get(k), dict):
            settings[k].update(v)
        else:
            settings[k] = v
    for key in ("mode", "out", "seed", "resolution"):
        value = getattr(args, key)
        if value is not None:
            settings[key] = value
    return build_config(settings)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args)
    except (ConfigurationError, DomainError) as exc:
        print(f"fracseg: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = cfg.out
    os.makedirs(out, exist_ok=True)
    timings: dict = {}
    try:
        RUNNERS[cfg.mode](cfg, out, timings)
    except FracSegError as exc:
        diag = {"error": type(exc).__name__, "message": str(exc), "mode": cfg.mode,
                "report": getattr(exc, "report", None)}
        write_json(diag, os.path.join(out, "error.json"))
        print(f"fracseg: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    write_json(cfg.to_dict(), os.path.join(out, "config.json"))
    if timings:
        write_json(timings, os.path.join(out, "timings.json"))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
