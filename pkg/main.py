"""
Main module.

This module is part of the LF Totality Checker project.
"""

# main.py
import argparse
import json
import logging
import sys
from typing import List, Optional, Sequence

from config import CheckerConfig
from errors import LFError, USAGE_ERROR
from lf_core import check_signature
from terms import reset_locals
from twelf_parser import parse_goal, parse_source

logger = logging.getLogger(__name__)

OK = 0


def setup_logging(config: CheckerConfig) -> None:
    # 配置日志到文件和控制台
    logging.basicConfig(
        level=config.log_level,
        format='%(asctime)s - %(levelname)s - %(name)s - %(message)s',
        handlers=[
            logging.FileHandler(config.log_file),
            logging.StreamHandler()
        ]
    )
    logging.getLogger().setLevel(config.log_level)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lfcheck", description="LF totality checker and M2 proof generator")
    parser.add_argument("--json", action="store_true", help="print a machine-readable diagnostic")
    parser.add_argument("-v", "--verbose", action="store_true")
    parser.add_argument("-q", "--quiet", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("check", help="type-check the signature and every %%total")
    p.add_argument("file")

    p = sub.add_parser("solve", help="run the logic programming engine on a goal")
    p.add_argument("file")
    p.add_argument("goal")
    p.add_argument("--depth", type=int, default=None)

    p = sub.add_parser("prove", help="emit m2proof/1 certificates for every %%total")
    p.add_argument("file")
    p.add_argument("-o", "--output", default=None)

    p = sub.add_parser("verify", help="check a certificate against the signature")
    p.add_argument("file")
    p.add_argument("certificate")

    p = sub.add_parser("trace", help="dump the coverage splitting traces")
    p.add_argument("file")
    p.add_argument("--input-only", action="store_true", help="omit the output coverage traces")
    p.add_argument("-o", "--output", default=None)
    return parser


def _read(path: str) -> str:
    with open(path, encoding="utf-8") as f:
        return f.read()


def _write(path: Optional[str], text: str) -> None:
    if path is None:
        sys.stdout.write(text)
        return
    with open(path, "w", encoding="utf-8") as f:
        f.write(text)


# ---------------------------------------------------------------------------
# 子命令
# ---------------------------------------------------------------------------

def _check_all(config: CheckerConfig, src):
    from totality import TotalityChecker

    checker = TotalityChecker(config, src.signature)
    checker.check_signature()
    return checker.check_all(src.totals)


def cmd_check(args, config: CheckerConfig) -> dict:
    src = parse_source(_read(args.file))
    reports = _check_all(config, src)
    for r in reports:
        print(f"%total {r.order} ({r.family}): {', '.join(r.passed)}")
    return {"families": [r.family for r in reports]}


def cmd_solve(args, config: CheckerConfig) -> dict:
    from lp_engine import solve
    from terms import show

    src = parse_source(_read(args.file))
    depth = args.depth if args.depth is not None else config.solve_depth
    goal = parse_goal(args.goal, src.signature, depth)
    for proof, answer in solve(goal, src.signature):
        print(f"{goal.name} = {show(proof)}")
        for name, m in answer.bindings:
            print(f"{name} = {show(m)}")
        return {"proof": show(proof), "answer": {n: show(m) for n, m in answer.bindings}}
    print("no solution")
    return {"status": "failed"}


def cmd_prove(args, config: CheckerConfig) -> dict:
    from certificates import Theorem, digest, print_certificate, verify
    from proofgen import generate

    src = parse_source(_read(args.file))
    reports = _check_all(config, src)
    theorems = [Theorem(r.family, r.order, generate(r, src.signature)) for r in reports]
    verify(theorems, src.signature)
    text = print_certificate(theorems, config.certificate_version)
    _write(args.output, text)
    sha = digest(text)
    logger.info(f"wrote {len(theorems)} certificate(s), sha256 {sha}")
    return {"theorems": [t.family for t in theorems], "sha256": sha}


def cmd_verify(args, config: CheckerConfig) -> dict:
    from certificates import digest, read_certificate, verify

    src = parse_source(_read(args.file))
    check_signature(src.signature)
    text = _read(args.certificate)
    theorems = read_certificate(text, src.signature, config.certificate_version)
    verify(theorems, src.signature)
    sha = digest(text)
    print(f"accepted {len(theorems)} theorem(s), sha256 {sha}")
    return {"theorems": [t.family for t in theorems], "sha256": sha}


def cmd_trace(args, config: CheckerConfig) -> dict:
    from traces import FamilyTraces, print_traces

    src = parse_source(_read(args.file))
    reports = _check_all(config, src)
    families = [FamilyTraces(r.family, r.input_trace,
                             () if args.input_only else
                             tuple((c, i, t) for (c, i), t in r.output_traces.items()))
                for r in reports]
    _write(args.output, print_traces(families, config.trace_version))
    return {"families": [r.family for r in reports]}


COMMANDS = {
    "check": cmd_check,
    "solve": cmd_solve,
    "prove": cmd_prove,
    "verify": cmd_verify,
    "trace": cmd_trace,
}


def run(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return USAGE_ERROR if e.code else OK

    config = CheckerConfig()
    if args.verbose:
        config.log_level = logging.DEBUG
    elif args.quiet:
        config.log_level = logging.WARNING
    setup_logging(config)
    reset_locals()

    result = {"schema": config.json_schema, "command": args.command, "status": "ok"}
    code = OK
    try:
        outcome = COMMANDS[args.command](args, config)
        if outcome.pop("status", "ok") != "ok":
            result["status"] = "failed"
            code = 1
        result.update(outcome)
    except LFError as e:
        logger.error(f"{args.command} failed: {e}")
        if not args.json:
            print(f"error: {e}", file=sys.stderr)
        result["status"] = "failed"
        result["error"] = e.to_dict()
        code = e.exit_code
    except OSError as e:
        logger.error(f"{args.command}: {e}")
        if not args.json:
            print(f"error: {e}", file=sys.stderr)
        result["status"] = "failed"
        result["error"] = {"class": type(e).__name__, "rule": "io", "detail": str(e)}
        code = USAGE_ERROR

    if args.json:
        print(json.dumps(result, sort_keys=True))
    return code


def main(argv: Optional[List[str]] = None) -> None:
    sys.exit(run(argv))


if __name__ == '__main__':
    main()
