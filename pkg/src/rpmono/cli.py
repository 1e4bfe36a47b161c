"""Command line front-end: ``rpmono {quantum,rpm,infrared,check,selftest}``.

Exit codes: 0 pass, 1 inequality failure, 2 usage/config error, 3 capacity.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
import time
from pathlib import Path

from rpmono import __version__

log = logging.getLogger("rpmono")

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_CAPACITY = 0, 1, 2, 3

GLOBAL_KEYS = ("out_dir", "seed", "threads")


class ConfigError(ValueError):
    pass


def read_config(path) -> dict:
    """Flat ``section.key = value`` file; '#' starts a comment."""
    out = {}
    for n, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{n}: expected key = value")
        k, v = (s.strip() for s in line.split("=", 1))
        out[k] = v
    return out


def _num(s):
    return float(s) if isinstance(s, str) else s


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="flat key=value config file; flags override it")
    p.add_argument("--out", help="output file (default: <out_dir>/<command>-<label>.<ext>)")
    p.add_argument("--out-dir", dest="out_dir")
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rpmono", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"rpmono {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    q = sub.add_parser("quantum", help="spin two-point table (dense or stochastic)")
    _add_common(q)
    q.add_argument("--d", type=int)
    q.add_argument("--L", type=int)
    q.add_argument("--S", type=str)
    q.add_argument("--u", type=float)
    q.add_argument("--beta", type=float)
    q.add_argument("--engine", choices=("dense", "stochastic"))
    q.add_argument("--R", type=int)
    q.add_argument("--degree", type=int)

    r = sub.add_parser("rpm", help="random path model two-point table")
    _add_common(r)
    r.add_argument("--d", type=int)
    r.add_argument("--L", type=int)
    r.add_argument("--N", type=int)
    r.add_argument("--beta", type=float)
    r.add_argument("--preset", choices=("loop_on", "crossing_on"))
    r.add_argument("--crossing-weight", dest="crossing_weight", type=float)
    r.add_argument("--m-max", dest="m_max", type=int)
    r.add_argument("--engine", choices=("enumerate", "worm"))
    r.add_argument("--sweeps", type=float)
    r.add_argument("--burn-in", dest="burn_in", type=float)
    r.add_argument("--batches", type=int)

    i = sub.add_parser("infrared", help="momentum sum J, c1 bound and minimal spin")
    _add_common(i)
    i.add_argument("--d", type=int)
    i.add_argument("--L", type=int)
    i.add_argument("--extrapolate", action="store_true", default=None)
    i.add_argument("--tol", type=float)
    i.add_argument("--S", type=str)
    i.add_argument("--u", type=float)
    i.add_argument("--min-spin", dest="min_spin", action="store_true", default=None)
    i.add_argument("--convention", choices=("vertex_sq", "edge_sq", "both"))
    i.add_argument("--eps", type=float)

    c = sub.add_parser("check", help="check the inequalities on a table CSV")
    _add_common(c)
    c.add_argument("table")
    c.add_argument("--sigma-k", dest="sigma_k", type=float)
    c.add_argument("--abs-tol", dest="abs_tol", type=float)
    c.add_argument("--vertex-rp", dest="vertex_rp", action="store_true", default=None)
    c.add_argument("--M", type=float, help="upper bound on G (enables the amplification and positivity checks)")
    c.add_argument("--eps", type=float)
    c.add_argument("--partition", type=int, help="number of random partition sets")

    s = sub.add_parser("selftest", help="run the acceptance suite")
    s.add_argument("--only", help="comma-separated criterion numbers")
    s.add_argument("--out", help="write the JSON results here")
    return ap


DEFAULTS = {
    "quantum": {"d": 2, "L": None, "S": "1/2", "u": -1.0, "beta": 1.0, "engine": "dense",
                "R": 100, "degree": None},
    "rpm": {"d": 2, "L": None, "N": 2, "beta": 0.5, "preset": "crossing_on", "crossing_weight": None,
            "m_max": 1, "engine": "enumerate", "sweeps": 1e5, "burn_in": None, "batches": 32},
    "infrared": {"d": 3, "L": None, "extrapolate": False, "tol": 1e-3, "S": "1/2", "u": 0.0,
                 "min_spin": False, "convention": "vertex_sq", "eps": 0.0},
    "check": {"sigma_k": 3.0, "abs_tol": 1e-10, "vertex_rp": False, "M": None, "eps": 0.25,
              "partition": 50},
}
GLOBAL_DEFAULTS = {"out_dir": ".", "seed": 0, "threads": 1}
TYPES = {"d": int, "L": int, "R": int, "degree": int, "N": int, "m_max": int, "batches": int,
         "partition": int, "seed": int, "threads": int, "u": float, "beta": float, "tol": float,
         "eps": float, "sigma_k": float, "abs_tol": float, "M": float, "sweeps": float,
         "burn_in": float, "crossing_weight": float}
BOOLS = ("extrapolate", "min_spin", "vertex_rp")


def _coerce(key, v):
    if v is None:
        return None
    if key in BOOLS:
        return v if isinstance(v, bool) else str(v).lower() in ("1", "true", "yes", "on")
    if key in TYPES and isinstance(v, str):
        f = TYPES[key]
        try:
            return f(float(v)) if f is int else f(v)
        except ValueError:
            raise ConfigError(f"bad value for {key}: {v!r}") from None
    return v


def resolve(command: str, args: argparse.Namespace) -> dict:
    """Defaults <- config file <- flags; unknown config keys are rejected."""
    cfg = dict(GLOBAL_DEFAULTS)
    cfg.update(DEFAULTS[command])
    if getattr(args, "config", None):
        for k, v in read_config(args.config).items():
            if k in GLOBAL_KEYS:
                cfg[k] = _coerce(k, v)
                continue
            sec, _, key = k.partition(".")
            if sec not in DEFAULTS or key not in DEFAULTS[sec]:
                raise ConfigError(f"unknown config key {k!r}")
            if sec == command:
                cfg[key] = _coerce(key, v)
    for k in list(cfg):
        v = getattr(args, k, None)
        if v is not None:
            cfg[k] = _coerce(k, v)
    return cfg


def _out_path(args, cfg, default_name: str) -> Path:
    if getattr(args, "out", None):
        return Path(args.out)
    d = Path(cfg["out_dir"])
    d.mkdir(parents=True, exist_ok=True)
    return d / default_name


def _provenance(command, cfg, argv, t0) -> dict:
    return {"command": "rpmono " + " ".join(argv), "subcommand": command, "config": cfg,
            "seed": cfg.get("seed"), "version": __version__, "runtime_s": round(time.time() - t0, 3)}


def _write_table(t, path: Path, prov: dict):
    from rpmono.tables import write_csv

    t.meta = {**t.meta, **prov}
    write_csv(t, path)
    Path(str(path) + ".json").write_text(json.dumps(t.meta, indent=2, sort_keys=True, default=str))
    print(path)


def _geometry(cfg):
    from rpmono.lattice import build_torus

    if cfg["L"] is None:
        raise ConfigError("--L is required")
    return build_torus(cfg["d"], cfg["L"])


def run_quantum(cfg, argv, args) -> int:
    from rpmono import quantum_gibbs as qg

    t0 = time.time()
    g = _geometry(cfg)
    p = qg.GibbsParams(g, cfg["S"], cfg["u"], cfg["beta"])
    if cfg["engine"] == "dense":
        t = qg.dense_correlations(p)
    else:
        t = qg.stochastic_correlations(p, cfg["R"], cfg["degree"], cfg["seed"], nthreads=cfg["threads"])
    _write_table(t, _out_path(args, cfg, f"quantum-{g.label}.csv"), _provenance("quantum", cfg, argv, t0))
    return EXIT_OK


def run_rpm(cfg, argv, args) -> int:
    from rpmono import random_path as rp

    t0 = time.time()
    g = _geometry(cfg)
    N = cfg["N"]
    if cfg["preset"] == "loop_on":
        U, kind = rp.loop_on(N, sources=True), rp.SPIN_SOURCE
    else:
        U, kind = rp.crossing_on(N, cfg["crossing_weight"]), rp.CROSSING
    p = rp.RPMParams(g, N, cfg["beta"], U, cfg["m_max"])
    if cfg["engine"] == "enumerate":
        t = rp.enumerate_two_point(p, kind)
    else:
        sweeps = int(cfg["sweeps"])
        burn = int(cfg["burn_in"]) if cfg["burn_in"] is not None else sweeps // 10
        t = rp.worm_estimate(p, kind, sweeps, burn, cfg["seed"], n_batches=cfg["batches"])
    _write_table(t, _out_path(args, cfg, f"rpm-{g.label}.csv"), _provenance("rpm", cfg, argv, t0))
    return EXIT_OK


def run_infrared(cfg, argv, args) -> int:
    from rpmono import infrared_bounds as ib
    from rpmono.spin_algebra import as_spin

    t0 = time.time()
    d = cfg["d"]
    S = as_spin(cfg["S"])
    if cfg["extrapolate"] or cfg["L"] is None:
        if d < 2:
            raise ConfigError("extrapolation needs d >= 2; pass --L for a finite sum")
        J, ach = ib.J_limit(d, cfg["tol"])
        Lcol = "inf"
    else:
        J, ach, Lcol = ib.J_sum(d, cfg["L"]), 0.0, cfg["L"]
    convs = ib.CONVENTIONS if cfg["convention"] == "both" else (cfg["convention"],)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(ib.IR_COLUMNS + ("note",))
    u = cfg["u"]
    for conv in convs:
        c1 = ib.c1_bound(S, u, d, J) if u <= 0 else float("nan")
        ms, note = "", ""
        if cfg["min_spin"]:
            th = ib.min_spin_threshold(u, d, J, conv, cfg["eps"])
            ms, note = str(th.min_spin), th.note
        w.writerow([d, Lcol, "%.17g" % J, str(S), u, "%.17g" % c1, "%.17g" % ib.magnetization_scale(S),
                    conv, ms, note])
    prov = _provenance("infrared", cfg, argv, t0)
    prov["achieved_tol"] = ach
    buf.write("# meta " + json.dumps(prov, sort_keys=True, default=str) + "\n")
    text = buf.getvalue()
    path = _out_path(args, cfg, f"infrared-d{d}.csv") if (args.out or args.out_dir) else None
    if path is not None:
        path.write_text(text)
    sys.stdout.write(text)
    return EXIT_OK


def run_check(cfg, argv, args) -> int:
    from rpmono import monotonicity_checker as mc
    from rpmono.tables import read_csv

    t = read_csv(args.table)
    c = mc.CheckConfig(cfg["sigma_k"], cfg["abs_tol"], cfg["vertex_rp"])
    rep = mc.run_all_checks(t, c, cfg["M"], cfg["eps"], cfg["partition"], cfg["seed"])
    rep.info["table"] = str(args.table)
    rep.info["provenance"] = {"command": "rpmono " + " ".join(argv), "config": cfg,
                              "seed": cfg["seed"], "version": __version__}
    text = rep.to_json(indent=1)
    if args.out:
        Path(args.out).write_text(text)
    for r in rep.failures(("theorem", "precondition")):
        log.warning("FAIL %s at %s: lhs=%.6g rhs=%.6g margin=%.3g slack=%.3g",
                    r.inequality, r.location, r.lhs, r.rhs, r.margin, r.slack)
    s = rep.summary()
    print(f"{s['verdict']}: {s['records']} records, {s['failed']} failed")
    return rep.exit_code


def run_selftest(args) -> int:
    from rpmono import acceptance

    only = [int(x) for x in args.only.split(",")] if args.only else None
    results = acceptance.run_all(only)
    for r in results:
        print(r.line())
    if args.out:
        Path(args.out).write_text(json.dumps([r.to_dict() for r in results], indent=1, default=str))
    bad = [r for r in results if not r.passed and not r.declared]
    return EXIT_FAIL if bad else EXIT_OK


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if e.code is not None else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    from rpmono.quantum_gibbs import CapacityError
    from rpmono.random_path import EnumerationBudgetError

    try:
        if args.command == "selftest":
            return run_selftest(args)
        cfg = resolve(args.command, args)
        runner = {"quantum": run_quantum, "rpm": run_rpm, "infrared": run_infrared,
                  "check": run_check}[args.command]
        return runner(cfg, argv, args)
    except (CapacityError, EnumerationBudgetError, MemoryError) as e:
        print(f"rpmono: {e}", file=sys.stderr)
        return EXIT_CAPACITY
    except (ConfigError, ValueError, FileNotFoundError) as e:
        print(f"rpmono: {e}", file=sys.stderr)
        ap.print_usage(sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
