"""
Command-line driver.

    python -m xp_lab verify geometry --p 7 --tol 1e-9
    python -m xp_lab verify repulsion --p 7 --delta 0.1 --out json
    python -m xp_lab verify volume --check htd --r 0.5 --R 2
    python -m xp_lab report genus --p 5,7,11,13
    python -m xp_lab list cusps --p 7 --out csv

Exit codes: 0 all PASS, 1 any FAIL, 2 any INCONCLUSIVE and no FAIL, 64 usage error.
Reports go to standard output (or --out-file); logs go to standard error.
"""
import argparse
import json
import logging
import sys
import time
from typing import Any, Dict, List, Optional, Sequence

from dotenv import load_dotenv

from . import __version__
from .config import COMMANDS, JobConfig, VOLUME_CHECKS, build_config, parse_constants, parse_p_list, setup_logging
from .errors import UsageError, XpLabError
from .modular import (enumerate_cm_pairs, enumerate_cusps, enumerate_singular_bicusps, euler_characteristic,
                      genus_and_volume, hecke_degree_table)
from .report import CheckReport, OutputFormat, ReportEnvelope, emit, emit_rows, exit_code
from .verifiers import VERIFIERS, run_async

# Load environment variables
load_dotenv()

logger = logging.getLogger(__name__)

EXIT_USAGE = 64
DEFAULT_HECKE_ROWS = 12


class _Parser(argparse.ArgumentParser):
    """argparse that reports bad flags as UsageError instead of exiting with status 2."""

    def error(self, message):
        raise UsageError(message)


def _job_options() -> argparse.ArgumentParser:
    common = _Parser(add_help=False, allow_abbrev=False)
    common.add_argument("--p", nargs="+", help="primes > 3, space or comma separated")
    common.add_argument("--delta", type=float, help="repulsion exponent in (0, 0.25)")
    common.add_argument("--tol", type=float, help="numerical tolerance in [1e-12, 1e-3]")
    common.add_argument("--height-bound", dest="height_bound", type=int, help="height bound for lift searches")
    common.add_argument("--const", action="append", metavar="NAME=VALUE", help="override an O(.) constant")
    common.add_argument("--jobs", type=int, help="worker processes (default XP_LAB_JOBS or 1)")
    common.add_argument("--seed", type=int, help="sampling seed")
    common.add_argument("--samples", type=int, help="sample points per sweep")
    common.add_argument("--out", choices=[f.value for f in OutputFormat], help="output format")
    common.add_argument("--out-file", dest="out_file", help="write the report here instead of stdout")
    common.add_argument("--config", help="INI file with [job] and [constants] defaults")
    common.add_argument("--timings", action="store_true", help="keep wall time and runtimes in the report")
    common.add_argument("--log-level", dest="log_level", help="logging level (default XP_LAB_LOG_LEVEL or INFO)")
    return common


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="xp_lab", description="Desk-scale verification on the modular curves X(p)",
                     allow_abbrev=False)
    parser.add_argument("--version", action="version", version=f"xp_lab {__version__}")
    common = _job_options()
    groups = parser.add_subparsers(dest="group", required=True, parser_class=_Parser)
    targets: Dict[str, List[str]] = {}
    for command in COMMANDS:
        group, target = command.split()
        targets.setdefault(group, []).append(target)
    for group, names in targets.items():
        sub = groups.add_parser(group, help=f"{group} subcommands")
        inner = sub.add_subparsers(dest="target", required=True, parser_class=_Parser)
        for name in names:
            leaf = inner.add_parser(name, parents=[common], allow_abbrev=False)
            if (group, name) == ("verify", "volume"):
                leaf.add_argument("--check", choices=VOLUME_CHECKS, help="volume check family")
                leaf.add_argument("--r", type=float, help="inner radius")
                leaf.add_argument("--R", type=float, help="outer radius")
            if (group, name) == ("list", "hecke"):
                leaf.add_argument("--n", type=int, default=DEFAULT_HECKE_ROWS, help="largest Hecke index")
    return parser


def _flags(args: argparse.Namespace) -> Dict[str, Any]:
    return {
        "p_list": parse_p_list(" ".join(args.p)) if args.p else None,
        "delta": args.delta,
        "tol": args.tol,
        "height_bound": args.height_bound,
        "constants": parse_constants(args.const) if args.const else None,
        "jobs": args.jobs,
        "seed": args.seed,
        "samples": args.samples,
        "out": args.out,
        "volume_check": getattr(args, "check", None),
        "r": getattr(args, "r", None),
        "R": getattr(args, "R", None),
    }


def _write(data: bytes, out_file: Optional[str]) -> None:
    if out_file:
        with open(out_file, "wb") as f:
            f.write(data)
        logger.info(f"[CLI] Wrote {len(data)} bytes to {out_file}")
    else:
        sys.stdout.buffer.write(data)
        sys.stdout.flush()


def _rows_output(rows: Sequence[Dict[str, Any]], fmt: OutputFormat) -> bytes:
    if fmt == OutputFormat.JSON:
        return (json.dumps(list(rows), sort_keys=True, indent=2) + "\n").encode("utf-8")
    header = sorted(rows[0]) if rows else []
    return emit_rows(header, [[row[k] for k in header] for row in rows])


def genus_rows(p_list: Sequence[int]) -> List[Dict[str, Any]]:
    rows = []
    for p in p_list:
        genus, volume = genus_and_volume(p)
        rows.append({"p": p, "genus": genus, "volume": volume, "euler_characteristic": str(euler_characteristic(p))})
    return rows


def list_rows(target: str, config: JobConfig, n_max: int = DEFAULT_HECKE_ROWS) -> List[Dict[str, Any]]:
    if target == "hecke":
        return hecke_degree_table(n_max)
    rows: List[Dict[str, Any]] = []
    for p in config.p_list:
        if target == "cusps":
            rows += [{"p": p, "vector": list(c.vector), "component": c.component} for c in enumerate_cusps(p)]
        elif target == "bicusps":
            rows += [{"p": p, "first": list(b.first.vector), "second": list(b.second.vector)}
                     for b in enumerate_singular_bicusps(p)]
        elif target == "cm":
            rows += [{"p": p, "order": c.order, "g_x": list(c.g_x.entries), "g_y": list(c.g_y.entries),
                      "flavor": c.flavor.value}
                     for order in (2, 3) for c in enumerate_cm_pairs(p, order)]
        else:
            raise UsageError(f"unknown list target {target!r}")
    return rows


async def _verify(command: str, config: JobConfig):
    verifier = VERIFIERS[command]()
    await verifier.start()
    try:
        checks = await verifier.run(config)
        table = None
        if command == "verify volume" and config.volume_check == "profile" and config.out == OutputFormat.CSV:
            table = await verifier.profile_table(config)
        return checks, table
    finally:
        await verifier.stop()


def run_verify(command: str, config: JobConfig, out_file: Optional[str], timings: bool) -> int:
    start = time.perf_counter()
    checks: List[CheckReport]
    checks, table = run_async(_verify(command, config))
    envelope = ReportEnvelope.build(config.echo(), checks, wall_time=time.perf_counter() - start)
    summary = envelope.summary
    logger.info(f"[CLI] {command}: {summary['PASS']} pass, {summary['FAIL']} fail, "
                f"{summary['INCONCLUSIVE']} inconclusive")
    if table is not None:
        header, rows = table
        _write(emit_rows(header, rows), out_file)
    else:
        _write(emit(envelope, config.out, include_timings=timings), out_file)
    return exit_code(checks)


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        setup_logging(args.log_level)
        command = f"{args.group} {args.target}"
        logger.info(f"[CLI] {command}")
        config = build_config(command, _flags(args), args.config)
        if args.group == "verify":
            return run_verify(command, config, args.out_file, args.timings)
        if command == "report genus":
            rows = genus_rows(config.p_list)
        else:
            rows = list_rows(args.target, config, getattr(args, "n", DEFAULT_HECKE_ROWS))
        _write(_rows_output(rows, config.out), args.out_file)
        return 0
    except UsageError as exc:
        logger.error(f"[CLI] Usage error: {exc}")
        print(f"xp_lab: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except XpLabError as exc:
        logger.exception(f"[CLI] {type(exc).__name__}")
        print(f"xp_lab: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
