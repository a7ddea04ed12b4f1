"""Command line entry point: ``helmholtz-dd run|check|plot|dump``."""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import harness
from .mesh import build_unit_square_mesh
from .partition import build_decomposition

WORKERS_ENV = "HELMHOLTZ_DD_WORKERS"


def _workers(arg):
    if arg is not None:
        return arg
    env = os.environ.get(WORKERS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise SystemExit(f"{WORKERS_ENV} must be an integer, got {env!r}") from None
    return None


def cmd_run(args) -> int:
    try:
        cfg = harness.ExperimentConfig.load(args.config)
        workers = _workers(args.workers)
        if workers is not None:
            cfg.workers = workers
        out = Path(args.out) if args.out else None
        if out is not None:
            out.mkdir(parents=True, exist_ok=True)
            cfg.csv = str(out / "results.csv")
            cfg.json = str(out / "results.json")
            cfg.plots = str(out)
        cfg.validate(args.allow_large)
    except (harness.ConfigError, OSError, json.JSONDecodeError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2

    def show(r):
        status = r.error or ("converged" if r.converged else "not converged")
        print(f"k={r.k:6.1f} m={r.m:4d} rho={r.rho:g} N={r.N:3d} overlap={r.overlap} {r.label:24s} "
              f"size={r.coarse_size:5d} its={r.iterations:4d}  {status}", flush=True)

    reports = harness.run_experiment(cfg, allow_large=args.allow_large, progress=show)
    if cfg.csv:
        harness.emit_csv(reports, cfg.csv)
    if cfg.json:
        harness.emit_json(reports, cfg.json, cfg)
    if cfg.plots:
        for (var, label, fixed), p in harness.emit_plots(reports, cfg.plots).items():
            print(f"fit: {label} coarse size ~ {var}^{p:.2f} (other={fixed})")
    return 0 if all(r.error is None for r in reports) else 1


def cmd_check(args) -> int:
    ok = True
    if args.suite in ("link", "all"):
        out = Path(args.out) if args.out else None
        if out is not None:
            out.mkdir(parents=True, exist_ok=True)
        for m, grid in ((8, (2, 2)), (12, (3, 1))):
            dest = out / f"link_m{m}_{grid[0]}x{grid[1]}.json" if out else None
            v = harness.run_link_check(harness.LinkCheckConfig(m=m, grid=grid), dest)
            err = max(s["max_rel_error"] for s in v["subdomains"])
            print(f"link m={m} {grid[0]}x{grid[1]}: {v['verdict']} (max relative error {err:.1e})")
            ok &= v["verdict"] == "PASS"
    if args.suite in ("invariants", "all"):
        for name, passed, detail in harness.run_invariant_checks():
            print(f"{'PASS' if passed else 'FAIL'}  {name}: {detail}")
            ok &= passed
    return 0 if ok else 1


def cmd_plot(args) -> int:
    reports = harness.read_csv(args.csv)
    fits = harness.emit_plots(reports, args.out)
    for (var, label, fixed), p in fits.items():
        print(f"fit: {label} coarse size ~ {var}^{p:.2f} (other={fixed})")
    return 0


def cmd_dump(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    mesh = build_unit_square_mesh(args.m)
    mesh.dump(out / "mesh.txt")
    if args.grid:
        dec = build_decomposition(mesh, "uniform", grid=tuple(args.grid), overlap=args.overlap)
    else:
        dec = build_decomposition(mesh, args.partition, args.parts, overlap=args.overlap)
    dec.dump(out / "partition.txt")
    print(f"wrote {out / 'mesh.txt'} and {out / 'partition.txt'}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="helmholtz-dd", description="Schwarz preconditioners for the 2D Helmholtz wave guide")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run an experiment grid from a JSON config")
    r.add_argument("--config", required=True)
    r.add_argument("--out", help="directory for results.csv, results.json and plots")
    r.add_argument("--workers", type=int)
    r.add_argument("--allow-large", action="store_true", help=f"allow m > {harness.MAX_DESK_RESOLUTION}")
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("check", help="run the link and exactness check suites")
    c.add_argument("--suite", choices=("link", "invariants", "all"), default="all")
    c.add_argument("--out", help="directory for JSON verdicts of the link check")
    c.set_defaults(func=cmd_check)

    pl = sub.add_parser("plot", help="re-emit coarse-size plots from a results CSV")
    pl.add_argument("--csv", required=True)
    pl.add_argument("--out", required=True)
    pl.set_defaults(func=cmd_plot)

    d = sub.add_parser("dump", help="write mesh and partition debug dumps")
    d.add_argument("--m", type=int, default=8)
    d.add_argument("--grid", type=int, nargs=2, metavar=("P", "Q"))
    d.add_argument("--partition", choices=("uniform", "graph"), default="uniform")
    d.add_argument("--parts", type=int, default=4)
    d.add_argument("--overlap", type=int, default=2)
    d.add_argument("--out", default=".")
    d.set_defaults(func=cmd_dump)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
