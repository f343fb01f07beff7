"""Command-line driver.

Each subcommand reads an optional JSON config (unknown keys are rejected),
runs one computation and writes ``<out>/<subcommand>.csv``.  CSV files start
with ``#`` comment lines carrying the config hash, the seed and the package
version.

Exit codes: 0 success, 1 configuration error, 2 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigError, OverlapDetected, SpheroidError, TargetInsideParticle
from .geometry import SpheroidShape, format_suspension, load_suspension, parse_suspension

log = logging.getLogger("spheroid_bie")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2

# allowed keys and defaults per subcommand
DEFAULTS = {
    "eval": {
        "suspension": None,  # path or inline text
        "operator": "double",
        "density": {"type": "constant", "value": 1.0},
        "targets": None,  # list of points, or {"shell": distance, "order": q}
        "p": 16,
        "eta": 1.0,
        "allow_interior": True,
    },
    "converge": {
        "configuration": "prolate_trio",  # prolate_trio, mixed_trio, sphere or custom
        "suspension": None,
        "sources": None,
        "kind": "dirichlet",
        "completion": "CI",
        "p_list": [8, 16, 24, 32],
        "shells": [1, 2, 3, 4, 5, 6],
        "charges_per_particle": 2,
        "shell_order": 8,
    },
    "stress": {
        "R_list": [1.1, 2, 4, 8],
        "p_list": [8, 16, 24, 32],
        "shell": 0.5,
        "shell_order": 16,
        "completion": "CI",
        "n_charges": 2,
        "lattice": None,  # {"R": .., "d": .., "n": ..} adds a plane error field
    },
    "gmres-table": {
        "R_list": [1.1, 2, 4, 8],
        "d_list": [2.0, 1.0, 0.01],
        "completions": ["CI", "etaCI", "S", "etaS"],
        "p": 16,
    },
    "condition": {
        "kind": "prolate",
        "family": "S",
        "R_list": [1.1, 2, 4, 8, 16],
        "p": 16,
    },
    "stokes-scene": {
        "suspension": None,
        "p": 12,
        "n": 21,
        "z": 0.0,
        "extent": None,
        "mu": 1.0,
        "convention": "average",
        "scale": 1.0,
        "fd_step": 1e-3,
    },
    "selftest": {"checks": None},
}

DEFAULT_SCENE = "prolate 1.4 1.0 0 0 0\noblate 0.8 1.0 3.2 0 0 0.9238795 0 0.3826834 0\n"


# ----------------------------------------------------------------------
# config handling

def load_config(command: str, path: str | None, p_override=None) -> dict:
    cfg = json.loads(json.dumps(DEFAULTS[command]))
    if path is not None:
        try:
            with open(path) as fh:
                user = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}:{exc.lineno}: invalid JSON ({exc.msg})") from exc
        if not isinstance(user, dict):
            raise ConfigError(f"{path}: top level must be an object")
        unknown = sorted(set(user) - set(cfg))
        if unknown:
            raise ConfigError(f"{path}: unknown key(s) {', '.join(unknown)}; allowed: {', '.join(sorted(cfg))}")
        cfg.update(user)
    if p_override is not None:
        if "p_list" in cfg:
            cfg["p_list"] = p_override
        elif "p" in cfg:
            if len(p_override) != 1:
                raise ConfigError(f"{command} takes a single order; got --p {p_override}")
            cfg["p"] = p_override[0]
        else:
            raise ConfigError(f"{command} has no order parameter")
    _validate(command, cfg)
    return cfg


def _positive_ints(name, vals):
    if not isinstance(vals, list) or not vals or not all(isinstance(v, int) and v > 0 for v in vals):
        raise ConfigError(f"{name} must be a non-empty list of positive integers")


def _positive_numbers(name, vals):
    if not isinstance(vals, list) or not vals or not all(isinstance(v, (int, float)) and v > 0 for v in vals):
        raise ConfigError(f"{name} must be a non-empty list of positive numbers")


def _validate(command: str, cfg: dict):
    if "p_list" in cfg:
        _positive_ints("p_list", cfg["p_list"])
    if "p" in cfg and not (isinstance(cfg["p"], int) and cfg["p"] > 0):
        raise ConfigError("p must be a positive integer")
    if command == "eval":
        if cfg["operator"] not in ("single", "double"):
            raise ConfigError("operator must be 'single' or 'double'")
        if cfg["suspension"] is None or cfg["targets"] is None:
            raise ConfigError("eval needs 'suspension' and 'targets'")
        if cfg["density"].get("type") not in ("constant", "harmonic"):
            raise ConfigError("density type must be 'constant' or 'harmonic'")
    elif command == "converge":
        if cfg["configuration"] not in ("prolate_trio", "mixed_trio", "sphere", "custom"):
            raise ConfigError("configuration must be prolate_trio, mixed_trio, sphere or custom")
        if cfg["configuration"] == "custom" and (cfg["suspension"] is None or cfg["sources"] is None):
            raise ConfigError("custom configuration needs 'suspension' and 'sources'")
        if cfg["kind"] not in ("dirichlet", "neumann"):
            raise ConfigError("kind must be 'dirichlet' or 'neumann'")
        _positive_ints("shells", cfg["shells"])
    elif command in ("stress", "gmres-table", "condition"):
        _positive_numbers("R_list", cfg["R_list"])
        if any(r < 1 for r in cfg["R_list"]):
            raise ConfigError("aspect ratios must be at least 1")
        if command == "gmres-table":
            _positive_numbers("d_list", cfg["d_list"])
    elif command == "stokes-scene":
        if cfg["mu"] <= 0:
            raise ConfigError("mu must be positive")
        if cfg["convention"] not in ("average", "sum"):
            raise ConfigError("convention must be 'average' or 'sum'")


def config_hash(command: str, cfg: dict, seed: int) -> str:
    blob = json.dumps({"command": command, "config": cfg, "seed": seed}, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _suspension(spec) -> list[SpheroidShape]:
    if spec is None:
        raise ConfigError("missing suspension")
    if "\n" in spec or not os.path.exists(spec):
        if "\n" not in spec:
            raise ConfigError(f"suspension file {spec} does not exist")
        return parse_suspension(spec, "<config>")
    return load_suspension(spec)


# ----------------------------------------------------------------------
# output

def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_csv(path: Path, header: list, rows, meta: dict):
    buf = io.StringIO()
    for k, v in meta.items():
        buf.write(f"# {k}={v}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(x) for x in r])
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(buf.getvalue())


# ----------------------------------------------------------------------
# subcommands; each returns (header, rows, extra metadata)

def cmd_eval(cfg, seed):
    from .engine import SuspensionProblem, eval_at_targets
    from .harmonics import eval_Ynm, surface_grid

    shapes = _suspension(cfg["suspension"])
    prob = SuspensionProblem(shapes, p=cfg["p"], eta=cfg["eta"])
    prob.plan  # rejects overlapping particles
    g = surface_grid(cfg["p"])
    V, PH = g.mesh()
    dspec = cfg["density"]
    if dspec["type"] == "constant":
        dens = np.full(prob.field_shape, float(dspec.get("value", 1.0)))
    else:
        n, m = int(dspec["n"]), int(dspec["m"])
        if abs(m) > n or n > cfg["p"]:
            raise ConfigError("harmonic density needs |m| <= n <= p")
        dens = np.broadcast_to(eval_Ynm(n, m, V, np.asarray(PH)).real, prob.field_shape).copy()
    tspec = cfg["targets"]
    if isinstance(tspec, dict):
        from .experiments import shell_targets
        x = np.concatenate([shell_targets(s, float(tspec["shell"]), int(tspec.get("order", 8))) for s in shapes])
    else:
        x = np.asarray(tspec, dtype=float)
        if x.ndim != 2 or x.shape[1] != 3:
            raise ConfigError("targets must be a list of 3-vectors")
    vals = eval_at_targets(prob, cfg["operator"], dens, x, allow_interior=cfg["allow_interior"])
    rows = [(*xi, vi) for xi, vi in zip(x, vals)]
    return ["x", "y", "z", "value"], rows, {}


def cmd_converge(cfg, seed):
    from .experiments import convergence_study, prolate_trio_configuration, mixed_trio_configuration

    conf = cfg["configuration"]
    if conf == "prolate_trio":
        shapes, sources = prolate_trio_configuration(seed, cfg["charges_per_particle"])
    elif conf == "mixed_trio":
        shapes, sources = mixed_trio_configuration(seed, cfg["charges_per_particle"])
    elif conf == "sphere":
        shapes = [SpheroidShape("prolate", 20.0, 0.05)]  # aspect ratio 1.00125
        sources = [((0.05, -0.02, 0.1), 1.0), ((-0.1, 0.0, -0.05), -0.4)]
    else:
        shapes = _suspension(cfg["suspension"])
        sources = [(tuple(s["location"]), float(s["strength"])) for s in cfg["sources"]]
    rows = convergence_study(shapes, sources, cfg["kind"], cfg["p_list"], cfg["shells"],
                             cfg["completion"], cfg["shell_order"])
    return (["p", "k", "shell_distance", "max_rel_error", "iterations"],
            [(r.p, r.k, r.shell_distance, r.max_rel_error, r.iterations) for r in rows],
            {"shell_units": "particle diameter", "suspension": format_suspension(shapes).strip().replace("\n", " | ")})


def cmd_stress(cfg, seed):
    from .experiments import lattice_plane_error, stress_study

    rows = stress_study(cfg["R_list"], cfg["p_list"], seed, cfg["shell"], cfg["shell_order"],
                        cfg["completion"], cfg["n_charges"])
    out = [("single", r.R, r.p, r.max_rel_error, r.iterations, "", "") for r in rows]
    lat = cfg["lattice"]
    if lat:
        unknown = set(lat) - {"R", "d", "n"}
        if unknown or "R" not in lat:
            raise ConfigError("lattice takes keys R (required), d, n")
        for p in sorted(cfg["p_list"]):
            X, Z, err = lattice_plane_error(float(lat["R"]), p, float(lat.get("d", 1.0)), int(lat.get("n", 41)), seed)
            for xv, zv, ev in zip(X.ravel(), Z.ravel(), err.ravel()):
                if np.isfinite(ev):
                    out.append(("lattice_plane", float(lat["R"]), p, ev, "", xv, zv))
    return ["case", "R", "p", "error", "iterations", "x", "z"], out, {"error": "max|u-f|/max|f| (single), |u-f| (lattice_plane)"}


def cmd_gmres_table(cfg, seed):
    from .experiments import gmres_table

    rows = gmres_table(cfg["R_list"], cfg["d_list"], cfg["completions"], cfg["p"], seed)
    return (["R", "d", "completion", "iterations", "reference"],
            [(r.R, r.d, r.completion, r.iterations, "" if r.reference is None else r.reference) for r in rows],
            {"d": "surface gap in minor semi-axes, 2x2 lattice in the x-z plane"})


def cmd_condition(cfg, seed):
    from .solver import condition_study

    rows = condition_study(cfg["kind"], cfg["family"], cfg["R_list"], cfg["p"])
    return (["R", "eta_star", "cond_star", "cond_unscaled", "heuristic_eta", "cond_heuristic"],
            [(r.R, r.eta_star, r.cond_star, r.cond_unscaled, r.heuristic_eta, r.cond_heuristic) for r in rows], {})


def cmd_stokes_scene(cfg, seed):
    from .experiments import stokes_scene

    shapes = _suspension(cfg["suspension"] or DEFAULT_SCENE)
    res = stokes_scene(shapes, cfg["p"], cfg["n"], cfg["extent"], cfg["z"], cfg["mu"], cfg["convention"],
                       cfg["scale"], cfg["fd_step"])
    rows = [(x, y, z, *u, pr, dv) for x, y, z, u, pr, dv in
            zip(res["x"], res["y"], res["z"], res["u"], res["pressure"], res["divergence"])]
    return ["x", "y", "z", "u1", "u2", "u3", "pressure", "divergence"], rows, {}


def cmd_selftest(cfg, seed):
    from .selftest import CHECKS, run_selftest

    names = cfg["checks"]
    if names is not None and (not isinstance(names, list) or set(names) - set(CHECKS)):
        raise ConfigError(f"checks must be a subset of {sorted(CHECKS)}")
    res = run_selftest(names)
    for r in res:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.name}: {r.detail}")
    rows = [(r.name, int(r.passed), r.detail, round(r.seconds, 3)) for r in res]
    return ["check", "passed", "detail", "seconds"], rows, {"_failed": sum(not r.passed for r in res)}


COMMANDS = {
    "eval": cmd_eval,
    "converge": cmd_converge,
    "stress": cmd_stress,
    "gmres-table": cmd_gmres_table,
    "condition": cmd_condition,
    "stokes-scene": cmd_stokes_scene,
    "selftest": cmd_selftest,
}


def _p_list(text: str) -> list[int]:
    try:
        vals = [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"--p expects comma-separated integers, got {text!r}")
    if not vals or any(v <= 0 for v in vals):
        raise argparse.ArgumentTypeError("--p values must be positive")
    return vals


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with subcommand parameters")
    common.add_argument("--out", default=".", help="output directory for the CSV (default: .)")
    common.add_argument("--threads", type=int, default=None, help="BLAS thread count")
    common.add_argument("--seed", type=int, default=0, help="seed for random fixtures (default: 0)")
    common.add_argument("--p", type=_p_list, default=None, help="order or comma-separated orders")
    common.add_argument("-v", "--verbose", action="store_true")
    parser = argparse.ArgumentParser(prog="spheroid-bie", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "eval": "evaluate S or D of a density at target points",
        "converge": "solve a boundary value problem and measure errors on shells",
        "stress": "aspect-ratio sweep for one prolate (plus optional lattice plane)",
        "gmres-table": "GMRES iteration counts on the four-prolate lattice",
        "condition": "condition number of the completed operator versus eta",
        "stokes-scene": "Stokes velocity and pressure of curvature forcing on a plane",
        "selftest": "run the property suites",
    }
    for name, h in helps.items():
        sub.add_parser(name, parents=[common], help=h)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.seed < 0 or args.seed >= 2 ** 64:
        print("error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return EXIT_CONFIG
    if args.threads is not None and args.threads < 1:
        print("error: --threads must be positive", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = load_config(args.command, args.config, args.p)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    limiter = None
    if args.threads is not None:
        from threadpoolctl import threadpool_limits
        limiter = threadpool_limits(limits=args.threads)
    try:
        header, rows, meta = COMMANDS[args.command](cfg, args.seed)
    except (ConfigError, TargetInsideParticle, OverlapDetected) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SpheroidError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    finally:
        if limiter is not None:
            limiter.unregister()
    failed = meta.pop("_failed", 0)
    info = {"command": args.command, "config_hash": config_hash(args.command, cfg, args.seed),
            "seed": args.seed, "version": __version__, **meta}
    path = Path(args.out) / f"{args.command}.csv"
    write_csv(path, header, rows, info)
    log.info("wrote %s", path)
    print(path)
    return EXIT_NUMERIC if failed else EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
