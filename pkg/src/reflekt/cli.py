"""Command-line experiment runner.

    reflekt <subcommand> [--config FILE] [--preset NAME] [--seed N] [--out DIR]
                         [--engine grid|regression] [--override section.key=value ...]

Configuration is an INI file with the sections listed in ``DEFAULTS``.
Every run writes its CSV tables plus ``manifest.json`` (config hash, seed,
library versions, wall time, file digests) into the output directory.

Exit codes: 0 success, 2 invalid configuration or failed assumption checks,
3 numerical failure.
"""
import argparse
import configparser
import dataclasses
import io as _stdio
import json
import os
import sys
import time

import numpy as np

from . import assumptions, backward, convex, forward, pde_oracle, presets, selftest, valuefn
from . import io as rio
from .backward import SolverParams
from .cadlag import EnsembleError
from .domain import StepRejectedError
from .rng import SEED_ENV

EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

DEFAULTS = {
    "problem": {"preset": "heat", "phi": "", "psi": ""},
    "run": {"seed": "0", "out": "reflekt-out"},
    "engine": {"engine": "grid", "n_t": "50", "n_x": "50", "n_paths": "4000", "n_steps": "100",
               "degree": "4", "prox_mode": "exact_resolvent", "epsilon": "0.01",
               "transition": "reflected_gaussian", "boundary": "anchored", "order": "phi_first",
               "scheme": "symmetrized", "n_mc": "2000", "export_paths": "20"},
    "point": {"t": "", "x": ""},
    "oracle": {"n_x": "200", "n_t": "2000", "theta": "0.5"},
    "sequence": {"n_min": "1", "n_max": "8"},
    "forward": {"n_paths": "1000", "n_steps": "200", "export_paths": "20", "scheme": "projection"},
    "validate": {"sample_count": "400", "tol": "1e-8"},
    "selftest": {"n_trials": "10000", "tol": "1e-8"},
}

TYPES = {
    ("run", "seed"): int,
    ("engine", "n_t"): int, ("engine", "n_x"): int, ("engine", "n_paths"): int,
    ("engine", "n_steps"): int, ("engine", "degree"): int, ("engine", "epsilon"): float,
    ("engine", "n_mc"): int, ("engine", "export_paths"): int,
    ("point", "t"): float, ("point", "x"): float,
    ("oracle", "n_x"): int, ("oracle", "n_t"): int, ("oracle", "theta"): float,
    ("sequence", "n_min"): int, ("sequence", "n_max"): int,
    ("forward", "n_paths"): int, ("forward", "n_steps"): int, ("forward", "export_paths"): int,
    ("validate", "sample_count"): int, ("validate", "tol"): float,
    ("selftest", "n_trials"): int, ("selftest", "tol"): float,
}

CHOICES = {
    ("problem", "preset"): tuple(presets.PRESETS),
    ("engine", "engine"): ("grid", "regression"),
    ("engine", "prox_mode"): ("exact_resolvent", "moreau_penalized"),
    ("engine", "transition"): ("reflected_gaussian", "exact_gaussian_projected", "mc"),
    ("engine", "boundary"): ("anchored", "local"),
    ("engine", "order"): ("phi_first", "psi_first"),
    ("engine", "scheme"): forward.SCHEMES,
    ("forward", "scheme"): forward.SCHEMES,
}

NUMERICAL_ERRORS = (backward.BackwardConvergenceError, backward.TransitionError,
                    backward.IllConditionedError, convex.SolverError, pde_oracle.OracleError,
                    StepRejectedError, EnsembleError, FloatingPointError, np.linalg.LinAlgError)


class ConfigError(ValueError):
    def __init__(self, problems):
        super().__init__("; ".join(problems))
        self.problems = list(problems)


class NumericalFailure(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

def load_config(path=None, overrides=(), preset=None, seed=None, out=None, engine=None):
    """Merge defaults, the INI file, ``--override`` pairs and the shortcut flags.

    The seed comes from ``--seed`` if given, else ``$REFLEKT_SEED``, else the
    file.  Returns ``(typed dict, canonical text)``.
    """
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";",))
    cp.read_dict(DEFAULTS)
    problems = []
    if path is not None:
        if not os.path.exists(path):
            raise ConfigError([f"config file {path!r} not found"])
        try:
            cp.read(path)
        except configparser.Error as exc:
            raise ConfigError([f"config: {exc}"]) from None
    for item in overrides:
        key, sep, value = item.partition("=")
        section, dot, name = key.strip().partition(".")
        if not sep or not dot:
            problems.append(f"override {item!r} must look like section.key=value")
            continue
        if not cp.has_section(section):
            cp.add_section(section)
        cp.set(section, name, value.strip())
    for (section, name), value in (("problem", "preset"), preset), (("run", "out"), out), \
            (("engine", "engine"), engine):
        if value is not None:
            cp.set(section, name, str(value))
    env_seed = os.environ.get(SEED_ENV)
    if seed is not None:
        cp.set("run", "seed", str(seed))
    elif env_seed:
        cp.set("run", "seed", env_seed)
    cfg = {}
    for section in cp.sections():
        if section not in DEFAULTS:
            problems.append(f"[{section}]: unknown section")
            continue
        cfg[section] = {}
        for name, raw in cp.items(section):
            if name not in DEFAULTS[section]:
                problems.append(f"{section}.{name}: unknown key")
                continue
            kind = TYPES.get((section, name), str)
            if raw == "" and kind is not str:
                cfg[section][name] = None
                continue
            try:
                value = kind(raw)
            except ValueError:
                problems.append(f"{section}.{name}: expected {kind.__name__}, got {raw!r}")
                continue
            allowed = CHOICES.get((section, name))
            if allowed is not None and value not in allowed:
                problems.append(f"{section}.{name}: {value!r} not in {list(allowed)}")
            cfg[section][name] = value
    for section, name in (("engine", "n_t"), ("engine", "n_x"), ("engine", "n_paths"),
                          ("engine", "n_steps"), ("engine", "degree"), ("oracle", "n_t"),
                          ("forward", "n_paths"), ("forward", "n_steps"), ("selftest", "n_trials")):
        v = cfg.get(section, {}).get(name)
        if v is not None and v < 1:
            problems.append(f"{section}.{name}: must be positive")
    if cfg.get("engine", {}).get("epsilon") is not None and not cfg["engine"]["epsilon"] > 0:
        problems.append("engine.epsilon: must be positive")
    if problems:
        raise ConfigError(problems)
    buf = _stdio.StringIO()
    canonical = configparser.ConfigParser(interpolation=None)
    for section in sorted(cp.sections()):
        canonical[section] = {k: cp.get(section, k) for k in sorted(cp.options(section))}
    canonical.write(buf)
    return cfg, buf.getvalue()


def build_problem(cfg):
    prob = presets.get(cfg["problem"]["preset"])
    changes = {}
    for name in ("phi", "psi"):
        raw = cfg["problem"][name]
        if raw:
            try:
                changes[name] = convex.from_record(json.loads(raw))
            except (ValueError, KeyError, TypeError) as exc:
                raise ConfigError([f"problem.{name}: {exc}"]) from None
    if changes:
        try:
            prob = dataclasses.replace(prob, **changes)
        except ValueError as exc:
            raise ConfigError([f"problem: {exc}"]) from None
    return prob


def solver_params(cfg):
    e = cfg["engine"]
    return SolverParams(engine=e["engine"], prox_mode=e["prox_mode"], epsilon=e["epsilon"],
                        degree=e["degree"], order=e["order"], transition=e["transition"],
                        n_mc=e["n_mc"], boundary=e["boundary"])


def engine_config(cfg, engine=None):
    e = cfg["engine"]
    params = solver_params(cfg)
    engine = engine or e["engine"]
    return valuefn.EngineConfig(engine=engine, n_t=e["n_t"], n_x=e["n_x"], n_paths=e["n_paths"],
                                n_steps=e["n_steps"], seed=cfg["run"]["seed"], scheme=e["scheme"],
                                params=dataclasses.replace(params, engine=engine))


def start_point(cfg, problem):
    t = cfg["point"]["t"]
    x = cfg["point"]["x"]
    ref = problem.reference_point
    return (ref[0] if t is None else t), (ref[1] if x is None else x)


def require_valid(cfg, problem):
    ok, reports = assumptions.validate_problem(problem, sample_count=cfg["validate"]["sample_count"],
                                               rng_seed=cfg["run"]["seed"], tol=cfg["validate"]["tol"])
    if not ok:
        raise ConfigError([f"assumption {k}: residual {r['residual']:.3e} at {r['witness']}"
                           for k, r in reports.items() if r["residual"] > cfg["validate"]["tol"]])
    return reports


# ---------------------------------------------------------------------------
# subcommands: each returns ({name: path}, result summary)
# ---------------------------------------------------------------------------

def cmd_validate(cfg, problem, out):
    _, reports = assumptions.validate_problem(problem, sample_count=cfg["validate"]["sample_count"],
                                              rng_seed=cfg["run"]["seed"], tol=cfg["validate"]["tol"])
    path = os.path.join(out, "assumptions.csv")
    rio.write_rows(path, [{"check": k, "worst": r["worst"], "residual": r["residual"],
                           "witness": json.dumps(r["witness"], sort_keys=True, default=str)}
                          for k, r in reports.items()])
    worst = max(r["residual"] for r in reports.values())
    failing = [k for k, r in reports.items() if r["residual"] > cfg["validate"]["tol"]]
    if failing:
        raise ConfigError([f"assumption {k}: residual {reports[k]['residual']:.3e}" for k in failing])
    return {"assumptions.csv": path}, {"max_residual": worst}


def cmd_simulate_forward(cfg, problem, out):
    f = cfg["forward"]
    t, x = start_point(cfg, problem)
    ens = forward.simulate_ensemble(problem.domain, problem.coeffs, t, [x] if np.ndim(x) == 0 else x,
                                    f["n_paths"], f["n_steps"], problem.horizon, cfg["run"]["seed"],
                                    "cli-forward", scheme=f["scheme"])
    paths = os.path.join(out, "forward_paths.csv")
    rio.write_forward_paths(paths, ens, f["export_paths"])
    aT = ens.A[:, -1]
    summary = {"n_paths": ens.n_paths, "n_steps": ens.n_steps, "mean_A_T": float(aT.mean()),
               "se_A_T": float(aT.std(ddof=1) / np.sqrt(aT.size)),
               "max_ell": float(problem.domain.ell(ens.X.reshape(-1, ens.X.shape[2])).max()),
               "min_dA": float(ens.dA.min())}
    spath = os.path.join(out, "forward_summary.csv")
    rio.write_rows(spath, [summary])
    return {"forward_paths.csv": paths, "forward_summary.csv": spath}, summary


def _grid_surface(cfg, problem):
    ec = engine_config(cfg, "grid")
    return backward.solve_grid(problem, ec.n_t, ec.n_x, ec.params, ec.seed)


def _surface_rows(gs):
    rows = []
    for i, t in enumerate(gs.times):
        for j, x in enumerate(gs.nodes):
            rows.append({"t": t, "x": x, "u": gs.u[i, j, 0], "se": gs.se[i, j]})
    return rows


def cmd_solve(cfg, problem, out):
    if cfg["engine"]["engine"] == "grid":
        gs = _grid_surface(cfg, problem)
        path = os.path.join(out, "value_surface.csv")
        rio.write_rows(path, _surface_rows(gs), ["t", "x", "u", "se"])
        return {"value_surface.csv": path}, {"u_min": float(gs.u.min()), "u_max": float(gs.u.max())}
    ec = engine_config(cfg)
    t, x = start_point(cfg, problem)
    _, sol = valuefn._regression_start(problem, t, [x], ec)
    value, se = backward.start_value(sol, problem.coeffs, seed=ec.seed)
    paths = os.path.join(out, "solution_paths.csv")
    rio.write_solution_paths(paths, sol, cfg["engine"]["export_paths"])
    spath = os.path.join(out, "start_value.csv")
    rio.write_rows(spath, [{"t": t, "x": x, "u": value, "se": se}])
    return {"solution_paths.csv": paths, "start_value.csv": spath}, {"u": value, "se": se}


def cmd_value_surface(cfg, problem, out):
    files, result = cmd_solve({**cfg, "engine": {**cfg["engine"], "engine": "grid"}}, problem, out)
    if cfg["engine"]["engine"] == "regression":
        ec = engine_config(cfg)
        rows = []
        for t in np.linspace(0.0, problem.horizon, 5)[:-1]:
            for x in np.linspace(*problem.domain.bounds, 5):
                u, se = valuefn.evaluate_u(problem, float(t), float(x), ec)
                rows.append({"t": t, "x": x, "u": u, "se": se})
        path = os.path.join(out, "regression_spots.csv")
        rio.write_rows(path, rows, ["t", "x", "u", "se"])
        files["regression_spots.csv"] = path
    return files, result


def cmd_continuity(cfg, problem, out):
    ec = engine_config(cfg)
    t, x = start_point(cfg, problem)
    ns = list(range(cfg["sequence"]["n_min"], cfg["sequence"]["n_max"] + 1))
    seq = valuefn.geometric_sequence(t, x, ns, problem.horizon, problem.domain.bounds)
    rep = valuefn.continuity_modulus(problem, (t, x), seq, ec, labels=ns)
    path = os.path.join(out, "modulus.csv")
    rio.write_modulus(path, rep)
    return {"modulus.csv": path}, {"exponent_x": rep["exponent_x"], "exponent_t": rep["exponent_t"],
                                   "last_gap": rep["rows"][-1]["gap"]}


def cmd_compare_pde(cfg, problem, out):
    o = cfg["oracle"]
    oracle = pde_oracle.solve_pvi(problem, pde_oracle.FDGrid(o["n_x"], o["n_t"], o["theta"]))
    gs = _grid_surface(cfg, problem)
    engine = valuefn.ValueSurface(gs.times, gs.nodes, gs.u[:, :, 0])
    gap = engine.sup_gap(oracle)
    opath = os.path.join(out, "oracle_surface.csv")
    epath = os.path.join(out, "value_surface.csv")
    cpath = os.path.join(out, "compare.csv")
    oracle.to_csv(opath)
    engine.to_csv(epath)
    rio.write_rows(cpath, [{"preset": cfg["problem"]["preset"], "sup_gap": gap,
                            "engine_grid": f"{gs.times.size - 1}x{gs.nodes.size}",
                            "oracle_grid": f"{o['n_t']}x{o['n_x']}"}])
    return {"oracle_surface.csv": opath, "value_surface.csv": epath, "compare.csv": cpath}, {"sup_gap": gap}


def cmd_tightness(cfg, problem, out):
    ec = engine_config(cfg, "regression")
    t, x = start_point(cfg, problem)
    ns = [2**k for k in range(4) if cfg["sequence"]["n_min"] <= 2**k <= cfg["sequence"]["n_max"]]
    if len(ns) < 3:
        ns = list(range(cfg["sequence"]["n_min"], cfg["sequence"]["n_max"] + 1))
    seq = valuefn.geometric_sequence(t, x, ns, problem.horizon, problem.domain.bounds)
    rep = valuefn.tightness_along_sequence(problem, seq, ec, labels=ns)
    rows = []
    for name, prep in rep["processes"].items():
        for r in prep["rows"]:
            rows.append({"process": name, **r})
    for label, total in zip(rep["labels"], rep["totals"]):
        rows.append({"process": "total", "n": label, "total": total})
    path = os.path.join(out, "tightness.csv")
    rio.write_rows(path, rows, ["process", "n", "cv", "cv_se", "esup", "total"])
    return {"tightness.csv": path}, {"ratio": rep["ratio"], "bounded": rep["bounded"]}


def cmd_convex_selftest(cfg, problem, out):
    res = selftest.convex_selftest(cfg["selftest"]["n_trials"], cfg["run"]["seed"])
    path = os.path.join(out, "convex_selftest.csv")
    rio.write_rows(path, [{"spec": k, **v} for k, v in res.items()], ["spec", "moreau", "firm", "subgradient"])
    worst = max(max(v.values()) for v in res.values())
    if worst > cfg["selftest"]["tol"]:
        raise NumericalFailure(f"convex self-test residual {worst:.3e} above tolerance")
    return {"convex_selftest.csv": path}, {"worst": worst}


def cmd_cadlag_selftest(cfg, problem, out):
    res = selftest.cadlag_selftest(seed=cfg["run"]["seed"])
    path = os.path.join(out, "cadlag_selftest.csv")
    rio.write_rows(path, [{"level": k + 1, "total_variation": v} for k, v in enumerate(res["tv_sequence"])])
    summary = {k: v for k, v in res.items() if k != "tv_sequence"}
    if summary["ibp"] > 1e-10 or summary["tv_limit_error"] > 1e-4 or not summary["tv_monotone"]:
        raise NumericalFailure(f"cadlag self-test failed: {summary}")
    return {"cadlag_selftest.csv": path}, summary


COMMANDS = {
    "validate-assumptions": (cmd_validate, False),
    "simulate-forward": (cmd_simulate_forward, True),
    "solve": (cmd_solve, True),
    "value-surface": (cmd_value_surface, True),
    "continuity": (cmd_continuity, True),
    "compare-pde": (cmd_compare_pde, True),
    "tightness": (cmd_tightness, True),
    "convex-selftest": (cmd_convex_selftest, False),
    "cadlag-selftest": (cmd_cadlag_selftest, False),
}


def build_parser():
    parser = argparse.ArgumentParser(prog="reflekt", description=__doc__.split("\n\n")[0])
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", help="INI configuration file")
    parser.add_argument("--preset", help="problem preset (overrides problem.preset)")
    parser.add_argument("--seed", type=int, help="master seed (overrides run.seed and $REFLEKT_SEED)")
    parser.add_argument("--out", help="output directory (overrides run.out)")
    parser.add_argument("--engine", choices=("grid", "regression"))
    parser.add_argument("--override", action="append", default=[], metavar="SECTION.KEY=VALUE")
    return parser


def run(argv=None):
    args = build_parser().parse_args(argv)
    func, needs_valid = COMMANDS[args.command]
    try:
        cfg, text = load_config(args.config, args.override, args.preset, args.seed, args.out, args.engine)
        problem = build_problem(cfg)
        if needs_valid:
            require_valid(cfg, problem)
        out = cfg["run"]["out"]
        os.makedirs(out, exist_ok=True)
        start = time.perf_counter()
        files, result = func(cfg, problem, out)
        wall = time.perf_counter() - start
    except ConfigError as exc:
        for p in exc.problems:
            print(f"config error: {p}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalFailure,) + NUMERICAL_ERRORS as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    rio.write_manifest(os.path.join(out, "manifest.json"), command=args.command, config_text=text,
                       seed=cfg["run"]["seed"], files=files, wall_time=wall, extra=result)
    print(json.dumps(result, sort_keys=True, default=rio._json_default))
    return 0


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
