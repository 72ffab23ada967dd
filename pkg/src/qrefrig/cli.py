"""``qrefrig`` command line: single runs, sweeps, RWA check and the acceptance battery.

Exit codes: 0 success, 1 usage or configuration error, 2 numerical abort or
failed fit, 3 sweep finished with at least one failed row (or a failed
acceptance criterion).
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

from .dynamics import NumericalAbort
from .fitting import FitError
from .frames import FluxQubitParams, verify_rwa
from .refrigerators import run_protocol
from .sweep import (
    SUMMARY_FIELDS, ConfigError, SweepSpec, parse_config, parse_values, result_row, run_sweep, write_rows,
    write_segments, write_trajectory,
)

log = logging.getLogger("qrefrig")

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_PARTIAL = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on usage errors; 2 is reserved for numerical aborts here."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _stem(out: Path) -> Path:
    return out.with_suffix("") if out.suffix else out


def cmd_run(args) -> int:
    cfg = parse_config(args.config)
    start = time.perf_counter()
    res = run_protocol(args.protocol, cfg, progress=log.info if args.verbose else None)
    wall = time.perf_counter() - start
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_trajectory(out, res, spacing=args.csv_spacing)
    row = result_row(res, {"protocol": res.protocol})
    cols = ["protocol", *SUMMARY_FIELDS]
    if args.timing:
        row["wall_time"] = wall
        cols.append("wall_time")
    stem = _stem(out)
    write_rows(f"{stem}_summary.csv", [row], cols, f"config_sha256={cfg.digest()}")
    if res.protocol == "I":
        write_segments(f"{stem}_segments.csv", res)
    print(
        f"protocol {res.protocol}: Q_out={res.Q_out:.6g} W={res.W:.6g} COP={res.COP:.6g} "
        f"T_cool={res.summary()['T_cool']:.6g} resets={res.reset_count}"
    )
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = parse_config(args.config)
    spec = SweepSpec(args.param, parse_values(args.values), args.protocol)
    rows = run_sweep(spec, cfg, workers=args.workers)
    cols = [spec.param, *SUMMARY_FIELDS, "status"]
    if args.timing:
        cols.append("wall_time")
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_rows(out, rows, cols, f"config_sha256={cfg.digest()} protocol={spec.protocol} param={spec.param}")
    failed = [r for r in rows if r["status"] != "ok"]
    for r in failed:
        print(f"{spec.param}={r[spec.param]:g}: {r['status']}", file=sys.stderr)
    print(f"{len(rows) - len(failed)}/{len(rows)} runs succeeded; wrote {out}")
    return EXIT_PARTIAL if failed else EXIT_OK


def cmd_verify_rwa(args) -> int:
    cfg = parse_config(args.config)
    p = FluxQubitParams.from_main_text(
        omega1=cfg.omega1, omega2=cfg.omega2, omega3=cfg.omega3, lam=cfg.lam, g1=cfg.g1, g3=args.g3, delta2=cfg.delta2,
    )
    rep = verify_rwa(p, horizon=cfg.rwa_horizon or None, dt=cfg.dt)
    rows = [dict(rep.as_dict(), g1_factor=1.0)]
    if not args.no_linearity:
        rep2 = verify_rwa(p.scaled(2.0), horizon=rep.horizon, dt=cfg.dt)
        rows.append(dict(rep2.as_dict(), g1_factor=2.0))
    for r in rows:
        print(
            f"g1' x{r['g1_factor']:g}: full={r['swap_frequency_full']:.6e} eff={r['swap_frequency_eff']:.6e} "
            f"rel.err={r['relative_error']:.4f} min fidelity={r['min_fidelity']:.4f}"
            + (" (outside perturbative regime)" if r["regime_warning"] else "")
        )
    if len(rows) == 2:
        print(f"linearity ratio {rows[1]['swap_frequency_full'] / rows[0]['swap_frequency_full']:.5f} (ideal 2)")
    if args.out:
        write_rows(args.out, rows, ["g1_factor", *rep.as_dict().keys()], f"config_sha256={cfg.digest()}")
    return EXIT_OK


def cmd_acceptance(args) -> int:
    from .acceptance import AcceptanceContext, run_all

    ctx = AcceptanceContext(base=parse_config(args.config), log=log.info if args.verbose else None)
    only = {int(x) for x in args.only.split(",")} if args.only else None
    results = run_all(ctx, only=only)
    n_pass = sum(r.passed for r in results)
    print(f"{n_pass}/{len(results)} criteria passed")
    return EXIT_OK if n_pass == len(results) else EXIT_PARTIAL


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="qrefrig", description="Spin-lock quantum refrigerator simulations.")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS, help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", parents=[common], help="single protocol run; trajectory and summary CSVs")
    run.add_argument("--protocol", required=True, type=str.upper, choices=["I", "II"])
    run.add_argument("--config", help="key = value file; missing keys take the defaults")
    run.add_argument("--out", required=True, help="trajectory CSV path")
    run.add_argument("--csv-spacing", type=float, default=10.0, help="time between exported rows (default 10)")
    run.add_argument("--timing", action="store_true", help="add a wall_time column to the summary")
    run.set_defaults(func=cmd_run)

    sw = sub.add_parser("sweep", parents=[common], help="one summary row per parameter value")
    sw.add_argument("--param", required=True)
    sw.add_argument("--values", required=True, help="comma-separated list, e.g. 8e-4,1.5e-3")
    sw.add_argument("--protocol", type=str.upper, choices=["I", "II"], default="II")
    sw.add_argument("--config")
    sw.add_argument("--out", required=True)
    sw.add_argument("--workers", type=int, default=None, help="process count (default: QREFRIG_THREADS or CPU count)")
    sw.add_argument("--timing", action="store_true", help="add a wall_time column")
    sw.set_defaults(func=cmd_sweep)

    rwa = sub.add_parser("verify-rwa", parents=[common], help="full flux-qubit model vs effective swap Hamiltonian")
    rwa.add_argument("--config")
    rwa.add_argument("--g3", type=float, default=0.0, help="main-text g3 mapped onto the flux coupling (default 0)")
    rwa.add_argument("--no-linearity", action="store_true", help="skip the doubled-g1 run")
    rwa.add_argument("--out", help="optional CSV report")
    rwa.set_defaults(func=cmd_verify_rwa)

    acc = sub.add_parser("acceptance", parents=[common], help="run the numbered acceptance checks")
    acc.add_argument("--config")
    acc.add_argument("--only", help="comma-separated criterion numbers")
    acc.set_defaults(func=cmd_acceptance)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(asctime)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericalAbort, FitError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
