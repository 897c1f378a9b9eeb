"""Configuration parsing, CSV/manifest emission and the command-line front end.

Exit codes: 0 success, 1 configuration error, 2 a numeric check ran but
missed its tolerance, 3 internal error.  Every run writes a JSON manifest
next to its outputs; CSV bytes depend only on config + seed + version.
"""

import argparse
import dataclasses
import hashlib
import json
import os
import sys
import time

import numpy as np

from . import __version__, hydro, kernels, moments, pde
from .errors import ConfigurationError, NumericError
from .lattice import TorusGeometry
from .process import init_process
from .profiles import PROFILE_KINDS, TEST_FN_KINDS, DensityProfile, TestFunction

# ---------------------------------------------------------------------------
# config file parsing: flat `key = value` lines, `#` comments

_CONFIG_KEYS = {
    "d": int,
    "lambda": float,
    "profile": str,
    "profile_height": float,
    "profile_radius": float,
    "profile_width": float,
    "test_fn": str,
    "test_fn_height": float,
    "test_fn_radius": float,
    "N_list": "int_list",
    "t_list": "float_list",
    "replicas": int,
    "c_L": int,
    "master_seed": int,
    "output": str,
    "workers": int,
}

_DEFAULTS = {
    "d": 3,
    "lambda": 0.6,
    "profile": "gaussian_bump",
    "profile_height": 1.0,
    "profile_radius": 1.0,
    "profile_width": 0.5,
    "test_fn": "cosine_bump",
    "test_fn_height": 1.0,
    "test_fn_radius": 1.0,
    "N_list": [4, 8],
    "t_list": [0.05],
    "replicas": 200,
    "c_L": 8,
    "master_seed": 20240801,
    "output": "hydro.csv",
    "workers": 0,
}


def _convert(key, raw, lineno):
    typ = _CONFIG_KEYS[key]
    try:
        if typ == "int_list":
            return [int(v.strip()) for v in raw.split(",") if v.strip()]
        if typ == "float_list":
            return [float(v.strip()) for v in raw.split(",") if v.strip()]
        return typ(raw)
    except ValueError:
        raise ConfigurationError(
            f"line {lineno}: cannot parse value {raw!r} for key {key!r}"
        ) from None


def parse_config(text):
    """Parse the flat key=value format into an ExperimentConfig."""
    values = dict(_DEFAULTS)
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigurationError(f"line {lineno}: expected `key = value`, got {line!r}")
        key, raw = (s.strip() for s in body.split("=", 1))
        if key not in _CONFIG_KEYS:
            raise ConfigurationError(f"line {lineno}: unknown key {key!r}")
        values[key] = _convert(key, raw, lineno)
    return build_experiment_config(values)


def build_experiment_config(values):
    if values["profile"] not in PROFILE_KINDS:
        raise ConfigurationError(f"unknown profile kind {values['profile']!r}")
    if values["test_fn"] not in TEST_FN_KINDS:
        raise ConfigurationError(f"unknown test function kind {values['test_fn']!r}")
    profile = DensityProfile(
        values["profile"], values["d"], height=values["profile_height"],
        radius=values["profile_radius"], width=values["profile_width"],
    )
    test_fn = TestFunction(
        values["test_fn"], values["d"], height=values["test_fn_height"],
        radius=values["test_fn_radius"],
    )
    return hydro.ExperimentConfig(
        d=values["d"], lam=values["lambda"], profile=profile, test_fn=test_fn,
        N_list=tuple(values["N_list"]), t_list=tuple(values["t_list"]),
        replicas=values["replicas"], c_L=values["c_L"],
        master_seed=values["master_seed"], output=values["output"],
        workers=values["workers"],
    )


def canonical_config_text(values):
    return "\n".join(f"{k} = {values[k]}" for k in sorted(values)) + "\n"


def config_hash(values):
    return hashlib.sha256(canonical_config_text(values).encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# CSV + manifest emission


def format_value(v):
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    s = str(v)
    if any(c in s for c in ",\n\r"):
        raise RuntimeError(f"CSV field {s!r} contains a delimiter")
    return s


def write_csv(rows, schema, path):
    """Write rows under a fixed header; 17 significant digits for reals."""
    schema = tuple(schema)
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(schema) + "\n")
        for row in rows:
            if len(row) != len(schema):
                raise RuntimeError(
                    f"row width {len(row)} does not match schema width {len(schema)}"
                )
            fh.write(",".join(format_value(v) for v in row) + "\n")


def write_manifest(path, subcommand, cfg_values, outputs, started, finished):
    manifest = {
        "config_hash": config_hash(cfg_values),
        "subcommand": subcommand,
        "started": started,
        "finished": finished,
        "version": __version__,
        "outputs": [os.path.basename(p) for p in outputs],
    }
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest


class Runner:
    """Wraps a subcommand run: collects outputs, stamps the manifest."""

    def __init__(self, subcommand, cfg_values, out_path):
        self.subcommand = subcommand
        self.cfg_values = {k: str(v) for k, v in cfg_values.items()}
        self.out_path = out_path
        self.outputs = []
        self.started = time.strftime("%Y-%m-%dT%H:%M:%S")

    def emit(self, rows, schema, path=None):
        path = path or self.out_path
        write_csv(rows, schema, path)
        self.outputs.append(path)
        return path

    def finish(self):
        finished = time.strftime("%Y-%m-%dT%H:%M:%S")
        write_manifest(
            self.out_path + ".manifest.json", self.subcommand, self.cfg_values,
            self.outputs, self.started, finished,
        )


def _seed_from_env(seed):
    env = os.environ.get("BCPP_SEED", "").strip()
    return int(env) if env else seed


# ---------------------------------------------------------------------------
# subcommand handlers


def _cmd_simulate(args):
    geom = TorusGeometry(args.d, args.L)
    profile = DensityProfile(args.profile, args.d, height=args.profile_height,
                             radius=args.profile_radius, width=args.profile_width)
    seed = _seed_from_env(args.seed)
    runner = Runner("simulate", vars(args) | {"seed": seed}, args.out)
    rows = []
    for r in range(args.replicas):
        st = init_process(geom, args.lam, profile, args.N, [seed, r])
        st.advance(args.duration)
        rows.append((args.d, args.L, args.lam, args.N, args.duration, r,
                     st.total_mass(), st.deaths, st.infections))
    runner.emit(rows, ("d", "L", "lambda", "N", "duration", "replica",
                       "total_mass", "deaths", "infections"))
    runner.finish()
    return 0


def _cmd_kernel(args):
    geom = TorusGeometry(args.d, args.L)
    runner = Runner("kernel", vars(args), args.out)
    table = kernels.KernelTable(args.t, args.lam, geom)
    row0 = table.row(geom.site_index([0] * args.d))
    coords = geom.all_coords_centered()
    rows = [
        (args.d, args.L, args.lam, args.t, *coords[i], row0[i])
        for i in range(geom.n_sites)
    ]
    runner.emit(rows, ("d", "L", "lambda", "t",
                       *(f"dx{k + 1}" for k in range(args.d)), "probability"))
    runner.finish()
    return 0


def _cmd_gamma(args):
    seed = _seed_from_env(args.seed)
    runner = Runner("gamma", vars(args) | {"seed": seed}, args.out)
    radii = [int(v) for v in args.R_solve.split(",")]
    rows = []
    for r_solve in radii:
        if args.method in ("linear_solve", "both"):
            k = kernels._k_e1_at_radius(args.d, r_solve)
            rows.append((args.d, r_solve, "linear_solve", k, 1.0 - k, 0.0))
        if args.method in ("monte_carlo", "both"):
            e1 = [1] + [0] * (args.d - 1)
            p, se = kernels.mc_hit_probability(args.d, e1, r_solve, args.walks, seed)
            rows.append((args.d, r_solve, "monte_carlo", p, 1.0 - p, 1.96 * se))
    if len(radii) >= 2 and args.method in ("linear_solve", "both"):
        est = kernels.gamma_reference(args.d, tuple(sorted(radii)[-2:]))
        rows.append((args.d, 0, "richardson", est.k_e1, est.gamma, est.delta))
    runner.emit(rows, ("d", "R_solve", "method", "k_e1", "gamma", "ci"))
    runner.finish()
    return 0


def _cmd_moments(args):
    geom = TorusGeometry(args.d, args.L)
    seed = _seed_from_env(args.seed)
    runner = Runner("moments", vars(args) | {"seed": seed}, args.out)
    if args.eta0:
        eta0 = np.array([float(v) for v in args.eta0.split(",")])
        if eta0.size != geom.n_sites:
            raise ConfigurationError(
                f"eta0 has {eta0.size} entries, lattice has {geom.n_sites} sites"
            )
    else:
        eta0 = np.ones(geom.n_sites)
    gen = moments.build_pair_generator(args.lam, geom, "M_lambda")
    gamma0 = np.outer(eta0, eta0)
    t_values = [float(v) for v in args.t.split(",")]
    coords = geom.all_coords_centered()
    rows = []
    from .process import ProcessState

    for t in t_values:
        gamma_t = moments.evolve_pair_moments(gamma0, t, gen)
        sums = np.zeros((geom.n_sites, geom.n_sites))
        sumsq = np.zeros_like(sums)
        for r in range(args.replicas):
            st = ProcessState(geom, args.lam, eta0, [seed, int(t * 1e6), r])
            st.advance(t)
            vals = st.field_values()
            prod = np.outer(vals, vals)
            sums += prod
            sumsq += prod * prod
        mean = sums / args.replicas
        var = np.maximum(sumsq / args.replicas - mean**2, 0.0) * args.replicas / (args.replicas - 1)
        se = np.sqrt(var / args.replicas)
        for x in range(geom.n_sites):
            for y in range(geom.n_sites):
                z = (mean[x, y] - gamma_t[x, y]) / se[x, y] if se[x, y] > 0 else 0.0
                rows.append((*coords[x], *coords[y], t, gamma_t[x, y],
                             mean[x, y], se[x, y], z))
    cols = (*(f"x{k + 1}" for k in range(args.d)), *(f"y{k + 1}" for k in range(args.d)),
            "t", "gamma", "mc_estimate", "se", "z")
    runner.emit(rows, cols)
    runner.finish()
    return 0


def _cmd_bound_check(args):
    runner = Runner("bound-check", vars(args), args.out)
    est = kernels.gamma_reference(args.d)
    h = kernels.h_lambda(args.lam, args.d, est.gamma)
    if h.value <= 0:
        raise ConfigurationError(
            f"lambda={args.lam} is not above the critical bound; h={h.value:.4g}"
        )
    table = kernels.return_table(args.d, args.R, R_solve=max(4 * args.R, 40))
    t_values = [float(v) for v in args.t.split(",")]
    R, R2 = args.R, 2 * args.R
    rows = []
    worst = 0.0
    inner = args.R // 2
    for t in t_values:
        J = moments.evolve_J(t, args.lam, R, args.d)
        J2 = moments.evolve_J(t, args.lam, R2, args.d)
        sl = tuple(slice(R - inner, R + inner + 1) for _ in range(args.d))
        sl2 = tuple(slice(R2 - inner, R2 + inner + 1) for _ in range(args.d))
        delta = float(np.abs(J2[sl2] - J[sl]).max())
        for coord in np.ndindex(*([2 * inner + 1] * args.d)):
            x = np.array(coord) - inner
            bound = (table.k(x) + h.value) / h.value
            jval = float(J[tuple(c + R for c in x)])
            ratio = jval / bound
            worst = max(worst, ratio)
            rows.append((*x, t, jval, bound, ratio, R, delta))
    cols = (*(f"x{k + 1}" for k in range(args.d)), "t", "J", "bound", "ratio", "R",
            "R_doubled_delta")
    runner.emit(rows, cols)
    runner.finish()
    if worst > 1.0 + 1e-6:
        raise NumericError(f"second-moment bound violated: max ratio {worst:.9f}")
    return 0


def _cmd_positivity(args):
    geom = TorusGeometry(args.d, args.L)
    runner = Runner("positivity", vars(args), args.out)
    rows = []
    failed = False
    for t in (float(v) for v in args.t.split(",")):
        m = moments.check_eq23_positivity(t, args.lam, geom)
        rows.append((args.d, args.L, args.lam, t, m))
        failed = failed or m < -1e-9
    runner.emit(rows, ("d", "L", "lambda", "t", "min_entry"))
    runner.finish()
    if failed:
        raise NumericError("positivity check failed: min entry below -1e-9")
    return 0


def _cmd_pde(args):
    profile = DensityProfile(args.profile, args.d, height=args.profile_height,
                             radius=args.profile_radius, width=args.profile_width)
    test_fn = TestFunction(args.test_fn, args.d, radius=args.test_fn_radius)
    runner = Runner("pde", vars(args), args.out)
    sol = pde.fd_heat_solver(profile, args.t, args.lam, args.grid_step, args.box)
    pts = sol.points()
    explicit = pde.heat_solution(profile, args.t, pts, args.lam, order=args.order)
    fd_vals = sol.values.reshape(-1)
    stride = max(1, len(pts) // 20000)
    rows = [
        (args.t, *pts[i], explicit[i], fd_vals[i], abs(explicit[i] - fd_vals[i]))
        for i in range(0, len(pts), stride)
    ]
    runner.emit(rows, ("t", *(f"u{k + 1}" for k in range(args.d)),
                       "rho_explicit", "rho_fd", "abs_diff"))
    resid = pde.weak_residual(profile, test_fn, args.t, args.lam)
    stem, ext = os.path.splitext(args.out)
    runner.emit([(args.t, resid)], ("t", "weak_residual"), stem + "_weak" + (ext or ".csv"))
    runner.finish()
    return 0


def _load_experiment(args):
    values = dict(_DEFAULTS)
    if args.config:
        with open(args.config) as fh:
            text = fh.read()
        # re-parse to surface line numbers, then fold CLI overrides
        parse_config(text)
        for lineno, line in enumerate(text.splitlines(), start=1):
            body = line.split("#", 1)[0].strip()
            if body:
                key, raw = (s.strip() for s in body.split("=", 1))
                values[key] = _convert(key, raw, lineno)
    for key in _CONFIG_KEYS:
        arg_name = key.replace("lambda", "lam") if key == "lambda" else key
        override = getattr(args, arg_name, None)
        if override is not None:
            if key in ("N_list",):
                values[key] = [int(v) for v in str(override).split(",")]
            elif key in ("t_list",):
                values[key] = [float(v) for v in str(override).split(",")]
            else:
                values[key] = _CONFIG_KEYS[key](override) if not isinstance(
                    _CONFIG_KEYS[key], str) else override
    values["master_seed"] = _seed_from_env(values["master_seed"])
    if getattr(args, "out", None):
        values["output"] = args.out
    cfg = build_experiment_config(values)
    return cfg, values


def _cmd_hydro(args):
    cfg, values = _load_experiment(args)
    runner = Runner("hydro", values, cfg.output)
    rows = [
        (cfg.d, cfg.lam, r.N, r.t, r.replicas, r.mean_pairing, r.variance,
         r.target, r.abs_error, r.se)
        for r in hydro.run_convergence_experiment(cfg)
    ]
    runner.emit(rows, ("d", "lambda", "N", "t", "replicas", "mean_pairing",
                       "variance", "target", "abs_error", "se"))
    runner.finish()
    return 0


def _cmd_variance(args):
    cfg, values = _load_experiment(args)
    runner = Runner("variance", values, cfg.output)
    rows = [
        (cfg.d, cfg.lam, N, t, n, var, lo, hi)
        for (N, t, n, var, lo, hi) in hydro.variance_sweep(cfg)
    ]
    runner.emit(rows, ("d", "lambda", "N", "t", "replicas", "variance",
                       "ci_low", "ci_high"))
    runner.finish()
    return 0


def _cmd_martingale(args):
    cfg, values = _load_experiment(args)
    runner = Runner("martingale", values, cfg.output)
    rows = [
        (cfg.d, cfg.lam, r.N, r.t, r.replicas, r.mart_mean, r.mart_var,
         r.predicted_qv, r.z_mean)
        for r in hydro.martingale_diagnostics(cfg)
    ]
    runner.emit(rows, ("d", "lambda", "N", "t", "replicas", "mart_mean",
                       "mart_var", "predicted_qv", "z_mean"))
    runner.finish()
    return 0


def _cmd_report(args):
    names = sorted(n for n in os.listdir(args.dir) if n.endswith(".manifest.json"))
    rows = []
    for name in names:
        with open(os.path.join(args.dir, name)) as fh:
            m = json.load(fh)
        rows.append((m["subcommand"], m["config_hash"], m["version"], m["started"],
                     m["finished"], ";".join(m["outputs"])))
    schema = ("subcommand", "config_hash", "version", "started", "finished", "outputs")
    if args.out:
        write_csv(rows, schema, args.out)
    else:
        sys.stdout.write(",".join(schema) + "\n")
        for row in rows:
            sys.stdout.write(",".join(format_value(v) for v in row) + "\n")
    return 0


# ---------------------------------------------------------------------------
# parser assembly


def _add_profile_flags(p):
    p.add_argument("--profile", default="gaussian_bump", choices=PROFILE_KINDS)
    p.add_argument("--profile-height", type=float, default=1.0, dest="profile_height")
    p.add_argument("--profile-radius", type=float, default=1.0, dest="profile_radius")
    p.add_argument("--profile-width", type=float, default=0.5, dest="profile_width")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="bcpp",
        description="Binary contact path process: simulation and numerical checks",
    )
    sub = parser.add_subparsers(dest="cmd", metavar="subcommand")

    p = sub.add_parser("simulate", help="run raw process replicas")
    p.add_argument("--d", type=int, default=3)
    p.add_argument("--L", type=int, default=16)
    p.add_argument("--lambda", type=float, default=0.6, dest="lam")
    p.add_argument("--N", type=int, default=1)
    _add_profile_flags(p)
    p.add_argument("--duration", type=float, default=1.0, help="microscopic time")
    p.add_argument("--replicas", type=int, default=8)
    p.add_argument("--seed", type=int, default=20240801)
    p.add_argument("--out", default="simulate.csv")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("kernel", help="torus transition kernel from the origin")
    p.add_argument("--d", type=int, default=2)
    p.add_argument("--L", type=int, default=5)
    p.add_argument("--lambda", type=float, default=0.7, dest="lam")
    p.add_argument("--t", type=float, default=0.3)
    p.add_argument("--out", default="kernel.csv")
    p.set_defaults(func=_cmd_kernel)

    p = sub.add_parser("gamma", help="return probability k(e1) and escape probability")
    p.add_argument("--d", type=int, default=3)
    p.add_argument("--R-solve", default="30,40", dest="R_solve")
    p.add_argument("--method", default="linear_solve",
                   choices=("linear_solve", "monte_carlo", "both"))
    p.add_argument("--walks", type=int, default=100000)
    p.add_argument("--seed", type=int, default=20240801)
    p.add_argument("--out", default="gamma.csv")
    p.set_defaults(func=_cmd_gamma)

    p = sub.add_parser("moments", help="pair moments vs Monte Carlo")
    p.add_argument("--d", type=int, default=1)
    p.add_argument("--L", type=int, default=5)
    p.add_argument("--lambda", type=float, default=0.5, dest="lam")
    p.add_argument("--t", default="0.5,1")
    p.add_argument("--replicas", type=int, default=10000)
    p.add_argument("--eta0", default="")
    p.add_argument("--seed", type=int, default=20240801)
    p.add_argument("--out", default="moments.csv")
    p.set_defaults(func=_cmd_moments)

    p = sub.add_parser("bound-check", help="second-moment bound on the difference lattice")
    p.add_argument("--d", type=int, default=3)
    p.add_argument("--lambda", type=float, default=0.6, dest="lam")
    p.add_argument("--R", type=int, default=8)
    p.add_argument("--t", default="0.5,1,2")
    p.add_argument("--out", default="bound.csv")
    p.set_defaults(func=_cmd_bound_check)

    p = sub.add_parser("positivity", help="entrywise exp(tM) >= exp(tC) check")
    p.add_argument("--d", type=int, default=1)
    p.add_argument("--L", type=int, default=4)
    p.add_argument("--lambda", type=float, default=0.5, dest="lam")
    p.add_argument("--t", default="0.25,1,4")
    p.add_argument("--out", default="positivity.csv")
    p.set_defaults(func=_cmd_positivity)

    p = sub.add_parser("pde", help="explicit heat solution vs finite differences")
    p.add_argument("--d", type=int, default=1)
    p.add_argument("--lambda", type=float, default=0.7, dest="lam")
    _add_profile_flags(p)
    p.add_argument("--test-fn", default="cosine_bump", choices=TEST_FN_KINDS, dest="test_fn")
    p.add_argument("--test-fn-radius", type=float, default=1.0, dest="test_fn_radius")
    p.add_argument("--t", type=float, default=0.5)
    p.add_argument("--grid-step", type=float, default=0.02, dest="grid_step")
    p.add_argument("--box", type=float, default=6.0)
    p.add_argument("--order", type=int, default=24)
    p.add_argument("--out", default="pde.csv")
    p.set_defaults(func=_cmd_pde)

    for name, func in (("hydro", _cmd_hydro), ("variance", _cmd_variance),
                       ("martingale", _cmd_martingale)):
        p = sub.add_parser(name, help=f"{name} experiment over (N, t) cells")
        p.add_argument("--config", default="")
        p.add_argument("--d", type=int, default=None)
        p.add_argument("--lambda", type=float, default=None, dest="lam")
        p.add_argument("--N-list", default=None, dest="N_list")
        p.add_argument("--t-list", default=None, dest="t_list")
        p.add_argument("--replicas", type=int, default=None)
        p.add_argument("--c-L", type=int, default=None, dest="c_L")
        p.add_argument("--master-seed", type=int, default=None, dest="master_seed")
        p.add_argument("--workers", type=int, default=None)
        p.add_argument("--out", default=None)
        p.set_defaults(func=func)

    p = sub.add_parser("report", help="summarize run manifests in a directory")
    p.add_argument("--dir", default=".")
    p.add_argument("--out", default="")
    p.set_defaults(func=_cmd_report)

    return parser


def dispatch(argv):
    """Run a subcommand; returns the exit code per the documented contract."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse already printed usage; -h/--help exits 0
        return 0 if exc.code == 0 else 1
    if not getattr(args, "func", None):
        parser.print_usage(sys.stderr)
        return 1
    try:
        return args.func(args)
    except ConfigurationError as exc:
        sys.stderr.write(f"bcpp: kind=configuration cmd={args.cmd} msg={exc}\n")
        return 1
    except NumericError as exc:
        sys.stderr.write(f"bcpp: kind=tolerance cmd={args.cmd} msg={exc}\n")
        return 2
    except Exception as exc:  # noqa: BLE001
        sys.stderr.write(f"bcpp: kind=internal cmd={args.cmd} msg={type(exc).__name__}: {exc}\n")
        return 3


def main():
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
