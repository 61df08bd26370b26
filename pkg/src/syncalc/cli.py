"""Command-line entry point."""

from __future__ import annotations

import argparse
import json
import sys
from typing import Optional, TextIO

from .conventional import CDone, Config, CStuck, crun
from .generator import fuzz_class_table, gen_random_program
from .matching import SimReport, erase, simulate_run
from .parser import ParseError, SourceProgram, parse_program
from .printer import TraceRecord, render, render_config, render_oid, render_program, \
    render_rho, render_trace
from .syntactic import CapsuleCheckFailed, Done, Session, Stuck, run
from .terms import ANNOT_POLICIES, well_formed

EXIT_OK, EXIT_USAGE, EXIT_CAPSULE, EXIT_FAIL = 0, 1, 2, 3


def _load(args, out: TextIO) -> Optional[SourceProgram]:
    try:
        with open(args.file, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return None
    try:
        prog = parse_program(text, args.file, getattr(args, "annot", "reach"),
                             not getattr(args, "no_strict_affine", False))
    except ParseError as exc:
        print(f"{args.file}:{exc}", file=sys.stderr)
        return None
    if prog.diagnostics:
        for d in prog.diagnostics:
            print(f"{args.file}: {d}", file=sys.stderr)
        return None
    return prog


def cmd_parse(args, out: TextIO) -> int:
    try:
        with open(args.file, encoding="utf-8") as fh:
            prog = parse_program(fh.read(), args.file)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ParseError as exc:
        print(f"{args.file}:{exc}", file=sys.stderr)
        return EXIT_USAGE
    out.write(render_program(prog.ct, prog.main, annot=True))
    for d in prog.diagnostics:
        out.write(f"diagnostic: {d}\n")
    return EXIT_USAGE if prog.diagnostics else EXIT_OK


def _conv_start(prog: SourceProgram, policy: str) -> Config:
    e = Session(prog.ct, policy=policy).prepare(prog.main)
    try:
        return erase(e)[0]
    except ValueError:
        return Config(e)


def _syntactic_exit(outcome, out: TextIO, final) -> int:
    if isinstance(outcome, Done):
        out.write(f"value: {render(outcome.value)}\n")
        return EXIT_OK
    if isinstance(outcome, Stuck):
        out.write(f"stuck: {outcome.reason.message()}\n")
        out.write(f"term: {render(final)}\n")
        return EXIT_CAPSULE if isinstance(outcome.reason, CapsuleCheckFailed) else EXIT_FAIL
    out.write(f"fuel exhausted after {outcome.fuel} steps\n")
    return EXIT_FAIL


def _conventional_exit(res, out: TextIO) -> int:
    if isinstance(res.outcome, CDone):
        out.write(f"value: {render_config(res.outcome.value, res.outcome.mem)}\n")
        return EXIT_OK
    if isinstance(res.outcome, CStuck):
        out.write(f"stuck: {res.outcome.detail}\n")
        out.write(f"config: {render_config(res.final.expr, res.final.mem)}\n")
        return EXIT_FAIL
    out.write(f"fuel exhausted after {res.outcome.fuel} steps\n")
    return EXIT_FAIL


def cmd_run(args, out: TextIO, trace: bool = False) -> int:
    prog = _load(args, out)
    if prog is None:
        return EXIT_USAGE
    if args.calculus == "syntactic":
        r = run(prog.main, prog.ct, args.fuel, args.annot)
        if trace:
            recs = [TraceRecord(0, "", render(r.initial, args.show_annot))]
            recs += [TraceRecord(i + 1, rule, render(t, args.show_annot))
                     for i, (rule, t) in enumerate(r.steps)]
            out.write(render_trace(recs))
        return _syntactic_exit(r.outcome, out, r.final)
    cfg = _conv_start(prog, args.annot)
    res = crun(cfg, prog.ct, args.fuel)
    if trace:
        recs = [TraceRecord(0, "", render_config(cfg.expr, cfg.mem))]
        recs += [TraceRecord(i + 1, rule, render_config(c.expr, c.mem))
                 for i, (rule, c) in enumerate(res.steps)]
        out.write(render_trace(recs))
    return _conventional_exit(res, out)


def _report_lines(rep: SimReport, program: Optional[int] = None) -> list[dict]:
    rows = []
    for rec in rep.records:
        row = {"index": rec.index, "calculus": "syntactic", "rule": rec.rule,
               "term": render(rec.term), "conv_steps": rec.conv_steps,
               "conv_rules": rec.conv_rules,
               "config": render_config(rec.cfg.expr, rec.cfg.mem),
               "rho_delta": {render_oid(n): str(x) for n, x in sorted(rec.rho_delta.items())}}
        if program is not None:
            row = {"program": program, **row}
        rows.append(row)
    return rows


def _write_report(path: str, rows: list[dict]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False, sort_keys=False) + "\n")


def _sim_exit(rep: SimReport) -> int:
    if rep.verdict == "ok":
        return EXIT_OK
    if rep.verdict == "capsule-stuck":
        return EXIT_CAPSULE
    return EXIT_FAIL


def cmd_simulate(args, out: TextIO) -> int:
    prog = _load(args, out)
    if prog is None:
        return EXIT_USAGE
    rep = simulate_run(prog.main, prog.ct, args.fuel, args.max_conv_steps, args.annot)
    out.write(f"initial: {render(rep.initial)}\n")
    out.write(f"config:  {render_config(rep.initial_cfg.expr, rep.initial_cfg.mem)}\n")
    out.write(f"ρ:       {render_rho(rep.initial_rho)}\n")
    recs = [TraceRecord(r.index, r.rule, f"[{r.conv_steps}] {render(r.term)}",
                        render_rho(r.rho_delta) if r.rho_delta else None)
            for r in rep.records]
    out.write(render_trace(recs))
    out.write("conv steps: " + ",".join(str(r.conv_steps) for r in rep.records) + "\n")
    out.write(f"final config: {render_config(rep.cfg.expr, rep.cfg.mem)}\n")
    out.write(f"final ρ: {render_rho(rep.rho)}\n")
    for v in rep.violations:
        out.write(f"violation at step {v.index} ({v.rule}): {v.detail}\n")
        for line in v.transcript:
            out.write(f"    {line}\n")
    if isinstance(rep.outcome, Stuck):
        out.write(f"stuck: {rep.outcome.reason.message()}\n")
    for n in rep.notes:
        out.write(f"note: {n}\n")
    out.write(f"verdict: {rep.verdict}\n")
    if args.report:
        _write_report(args.report, _report_lines(rep))
    return _sim_exit(rep)


def fuzz_seed(seed: int, i: int) -> int:
    return seed * 1_000_003 + i


def cmd_fuzz(args, out: TextIO) -> int:
    ct = fuzz_class_table()
    counts: dict[str, int] = {}
    rows: list[dict] = []
    bad = 0
    for i in range(args.count):
        e = gen_random_program(fuzz_seed(args.seed, i), ct, args.max_depth, args.max_decls)
        if well_formed(e, ct, strict_affine=True):
            out.write(f"{i:5d}  ill-formed  {render(e)}\n")
            bad += 1
            continue
        rep = simulate_run(e, ct, args.fuel, args.max_conv_steps)
        counts[rep.verdict] = counts.get(rep.verdict, 0) + 1
        out.write(f"{i:5d}  {rep.verdict:<13}  steps={len(rep.records)}\n")
        if rep.violations or rep.verdict == "stuck":
            bad += 1
            out.write(f"       program: {render(e)}\n")
            for v in rep.violations:
                out.write(f"       violation at step {v.index} ({v.rule}): {v.detail}\n")
        if args.report:
            rows += _report_lines(rep, i)
    out.write("summary: " + ", ".join(f"{k}={v}" for k, v in sorted(counts.items()))
              + f"; failures={bad}\n")
    if args.report:
        _write_report(args.report, rows)
    return EXIT_FAIL if bad else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="syncalc")
    sub = p.add_subparsers(dest="cmd", required=True)

    sp = sub.add_parser("parse", help="parse a program and print it with annotations")
    sp.add_argument("file")

    def common(sp, calculus=True):
        sp.add_argument("file")
        if calculus:
            sp.add_argument("--calculus", choices=("syntactic", "conventional"),
                            default="syntactic")
        sp.add_argument("--fuel", type=int, default=1000)
        sp.add_argument("--annot", choices=ANNOT_POLICIES, default="reach")
        sp.add_argument("--no-strict-affine", action="store_true")

    common(sub.add_parser("run", help="reduce a program to a value"))
    tp = sub.add_parser("trace", help="print every reduction step")
    common(tp)
    tp.add_argument("--show-annot", action="store_true")

    sm = sub.add_parser("simulate", help="co-run both calculi and check matching")
    common(sm, calculus=False)
    sm.set_defaults(fuel=500)
    sm.add_argument("--max-conv-steps", type=int, default=8)
    sm.add_argument("--report")

    fz = sub.add_parser("fuzz", help="simulate randomly generated programs")
    fz.add_argument("--seed", type=int, required=True)
    fz.add_argument("--count", type=int, required=True)
    fz.add_argument("--max-depth", type=int, default=5)
    fz.add_argument("--max-decls", type=int, default=6)
    fz.add_argument("--fuel", type=int, default=500)
    fz.add_argument("--max-conv-steps", type=int, default=8)
    fz.add_argument("--report")
    return p


def main(argv: Optional[list[str]] = None, out: Optional[TextIO] = None) -> int:
    out = out or sys.stdout
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    if args.cmd == "parse":
        return cmd_parse(args, out)
    if args.cmd == "run":
        args.show_annot = False
        return cmd_run(args, out)
    if args.cmd == "trace":
        return cmd_run(args, out, trace=True)
    if args.cmd == "simulate":
        return cmd_simulate(args, out)
    return cmd_fuzz(args, out)


if __name__ == "__main__":
    sys.exit(main())
