"""Experiment driver: single runs, repetition batteries, parameter sweeps.

Configuration is one flat JSON document; command-line flags override file
values.  Results go to CSV with the fixed header

    schema,scheme,problem,m,M,P,N,Q,seed,run,y0,z0_1..z0_d,wall_ms

(one z0 column per Brownian coordinate).  Repetition r runs with seed
master+r, so partial reruns are possible.
"""

import argparse
import csv
import json
import sys
import time

from . import oracles
from .problems import make_problem
from .schemes import EulerParams, run_euler, run_picard, simulate_solution_paths

SCHEMA_VERSION = 1

_DEFAULTS = {
    "scheme": "euler",
    "problem": "bt_squared",
    "problem_params": {},
    "m": 10,
    "M": 10,
    "P": 2,
    "N": 10_000,
    "Q": 7,
    "seed": 0,
    "reps": 1,
    "axis": None,
    "values": None,
    "out": None,
    "paths": 10,
    "threads": 0,
    "chunk": 1 << 14,
    "retain": False,
    "diagnostics": False,
    "precision": "single",
    "d": None,
    "dump_coeffs": None,
}

_POSITIVE_INT = ("m", "M", "N", "Q", "reps", "paths", "chunk")


class ConfigError(ValueError):
    pass


def load_config(path=None, overrides=None):
    cfg = dict(_DEFAULTS)
    if path:
        try:
            with open(path) as fh:
                data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}")
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: top-level value must be an object")
        for key, value in data.items():
            if key not in _DEFAULTS:
                raise ConfigError(f"{path}: unknown key '{key}'")
            cfg[key] = value
    for key, value in (overrides or {}).items():
        if value is not None:
            cfg[key] = value
    validate_config(cfg)
    return cfg


def validate_config(cfg):
    if cfg["scheme"] not in ("euler", "picard"):
        raise ConfigError(f"scheme: must be 'euler' or 'picard', got {cfg['scheme']!r}")
    for key in _POSITIVE_INT:
        value = cfg[key]
        if not isinstance(value, int) or value < 1:
            raise ConfigError(f"{key}: must be a positive integer, got {value!r}")
    if not isinstance(cfg["P"], int) or cfg["P"] < 0:
        raise ConfigError(f"P: must be a non-negative integer, got {cfg['P']!r}")
    if not isinstance(cfg["seed"], int):
        raise ConfigError(f"seed: must be an integer, got {cfg['seed']!r}")
    if cfg["precision"] not in ("single", "double"):
        raise ConfigError(f"precision: must be 'single' or 'double', got {cfg['precision']!r}")
    if cfg["d"] is not None and (not isinstance(cfg["d"], int) or cfg["d"] < 1):
        raise ConfigError(f"d: must be a positive integer, got {cfg['d']!r}")
    if cfg["axis"] is not None:
        if cfg["axis"] not in ("m", "M", "P", "N"):
            raise ConfigError(f"axis: must be one of m, M, P, N; got {cfg['axis']!r}")
        values = cfg["values"]
        if not isinstance(values, (list, tuple)) or not values:
            raise ConfigError("values: sweep needs a non-empty list of integers")
        for v in values:
            if not isinstance(v, int) or v < (0 if cfg["axis"] == "P" else 1):
                raise ConfigError(f"values: bad sweep value {v!r} for axis {cfg['axis']}")


def _params(cfg, seed):
    return EulerParams(
        m=cfg["m"], M=cfg["M"], P=cfg["P"], N=cfg["N"], seed=seed,
        chunk=cfg["chunk"], threads=cfg["threads"],
        retain_coefficients=cfg["retain"], diagnostics=cfg["diagnostics"],
        precision=cfg["precision"],
    )


def _execute(cfg, seed):
    problem = make_problem(cfg["problem"], **cfg["problem_params"])
    if cfg["d"] is not None and cfg["d"] != problem.d:
        raise ConfigError(f"d: problem '{problem.name}' is {problem.d}-dimensional, got {cfg['d']}")
    params = _params(cfg, seed)
    start = time.perf_counter()
    if cfg["scheme"] == "euler":
        result = run_euler(problem, params)
    else:
        result = run_picard(problem, params, cfg["Q"])
    wall_ms = 1000.0 * (time.perf_counter() - start)
    return problem, result, wall_ms


def _header(d):
    z_cols = [f"z0_{gamma + 1}" for gamma in range(d)]
    return ["schema", "scheme", "problem", "m", "M", "P", "N", "Q", "seed", "run",
            "y0", *z_cols, "wall_ms"]


def _row(cfg, run_idx, seed, result, wall_ms):
    q = cfg["Q"] if cfg["scheme"] == "picard" else 0
    return [SCHEMA_VERSION, cfg["scheme"], cfg["problem"], cfg["m"], cfg["M"], cfg["P"],
            cfg["N"], q, seed, run_idx, repr(result.y0),
            *[repr(float(z)) for z in result.z0], f"{wall_ms:.3f}"]


def _write_rows(out, header, rows):
    handle = open(out, "w", newline="") if out else sys.stdout
    try:
        writer = csv.writer(handle)
        writer.writerow(header)
        writer.writerows(rows)
    finally:
        if out:
            handle.close()


def cmd_run(cfg):
    if cfg["dump_coeffs"]:
        cfg = dict(cfg, retain=True)
    problem, result, wall_ms = _execute(cfg, cfg["seed"])
    if cfg["dump_coeffs"]:
        from .chaos import dump_coefficients

        dump_coefficients(result.coefficients[0], cfg["dump_coeffs"])
    _write_rows(cfg["out"], _header(problem.d), [_row(cfg, 0, cfg["seed"], result, wall_ms)])
    return 0


def cmd_repeat(cfg):
    rows, d = [], None
    for rep in range(cfg["reps"]):
        seed = cfg["seed"] + rep
        problem, result, wall_ms = _execute(cfg, seed)
        d = problem.d
        rows.append(_row(cfg, rep, seed, result, wall_ms))
    _write_rows(cfg["out"], _header(d), rows)
    return 0


def cmd_sweep(cfg):
    if cfg["axis"] is None:
        raise ConfigError("axis: sweep mode needs a sweep axis")
    rows, d = [], None
    for value in cfg["values"]:
        point = dict(cfg)
        point[cfg["axis"]] = value
        validate_config({**point, "axis": None, "values": None})
        for rep in range(cfg["reps"]):
            seed = cfg["seed"] + rep
            problem, result, wall_ms = _execute(point, seed)
            d = problem.d
            rows.append(_row(point, rep, seed, result, wall_ms))
    _write_rows(cfg["out"], _header(d), rows)
    return 0


def cmd_paths(cfg):
    point = dict(cfg)
    point["retain"] = True
    problem, result, _ = _execute(point, cfg["seed"])
    params = _params(point, cfg["seed"])
    table = simulate_solution_paths(
        problem, params, result.coefficients, cfg["paths"],
        hedge=problem.model is not None,
    )
    d = problem.d
    header = ["path", "t", "y", *[f"z_{g + 1}" for g in range(d)]]
    if "hedge" in table:
        header += [f"h_{g + 1}" for g in range(d)]
    rows = []
    for n in range(cfg["paths"]):
        for k, t in enumerate(table["times"]):
            row = [n, repr(float(t)), repr(float(table["Y"][n, k]))]
            row += [repr(float(v)) for v in table["Z"][n, k]]
            if "hedge" in table:
                row += [repr(float(v)) for v in table["hedge"][n, k]]
            rows.append(row)
    _write_rows(cfg["out"], header, rows)
    return 0


def cmd_oracle(cfg, kind):
    problem = make_problem(cfg["problem"], **cfg["problem_params"])
    if kind == "price":
        est = oracles.mc_price(problem, cfg["N"], cfg["seed"])
        rows = [["price", repr(est.value), repr(est.stderr), est.n]]
    elif kind == "delta":
        ests = oracles.mc_delta(problem, cfg["N"], cfg["seed"])
        rows = [[f"z0_{g + 1}", repr(e.value), repr(e.stderr), e.n] for g, e in enumerate(ests)]
    elif kind == "bs":
        model = problem.model
        if model is None or model.d != 1:
            raise ConfigError("problem: closed-form oracle needs a one-dimensional market")
        price = oracles.bs_call_price(model.s0[0], model.strike, model.r, model.sigma[0], problem.T)
        delta = oracles.bs_call_delta(model.s0[0], model.strike, model.r, model.sigma[0], problem.T)
        z0 = delta * model.sigma[0] * model.s0[0]
        rows = [["bs_price", repr(float(price)), "0.0", 0], ["bs_z0", repr(float(z0)), "0.0", 0]]
    else:
        raise ConfigError(f"oracle kind: unknown '{kind}'")
    _write_rows(cfg["out"], ["quantity", "value", "stderr", "n"], rows)
    return 0


def _build_parser():
    parser = argparse.ArgumentParser(prog="chaosbsde",
                                     description="BSDE solver experiments on chaos decompositions")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("run", "repeat", "sweep", "paths", "oracle"):
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="JSON configuration file")
        p.add_argument("--scheme", choices=["euler", "picard"])
        p.add_argument("--problem")
        for key in ("m", "M", "P", "N", "Q", "seed", "reps", "paths", "threads", "chunk", "d"):
            p.add_argument(f"--{key}", type=int, dest=key)
        p.add_argument("--out")
        p.add_argument("--precision", choices=["single", "double"])
        p.add_argument("--dump-coeffs", dest="dump_coeffs")
        p.add_argument("--axis", choices=["m", "M", "P", "N"])
        p.add_argument("--values", type=lambda s: [int(v) for v in s.split(",")])
        p.add_argument("--retain", action="store_const", const=True, default=None)
        p.add_argument("--diagnostics", action="store_const", const=True, default=None)
        if name == "oracle":
            p.add_argument("--kind", choices=["price", "delta", "bs"], default="price")
    return parser


def main(argv=None):
    args = _build_parser().parse_args(argv)
    overrides = {k: v for k, v in vars(args).items() if k not in ("command", "config", "kind")}
    try:
        cfg = load_config(args.config, overrides)
        if args.command == "run":
            return cmd_run(cfg)
        if args.command == "repeat":
            return cmd_repeat(cfg)
        if args.command == "sweep":
            return cmd_sweep(cfg)
        if args.command == "paths":
            return cmd_paths(cfg)
        return cmd_oracle(cfg, args.kind)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
