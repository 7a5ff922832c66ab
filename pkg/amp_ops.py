#!/usr/bin/env python3
"""
AMP command line: profile -> classify -> rewrite -> run -> sweep, plus
benchmark emission. Every stage reads and writes files so the pipeline can
be run one step at a time and inspected on disk.
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

from bench import AccuracyMetric, BenchError, accuracy, bench_case
from classify import ThresholdVector, classify
from common_config import AmpError, DEFAULT_JOBS, get_data_dir, setup_logging
from interp import run
from manifest import load_manifest, write_manifest
from nir import (
    F32,
    F64,
    VOID,
    PrecisionAssignment,
    Program,
    def_use_graph,
    parse_text,
    validate,
)
from profiler import NumericalProfile, measure_overhead, profile
from rewrite import InstructionChangeSet, compute_ics, rewrite
from sweep import (
    SCALAR_COST,
    VECTOR_COST,
    GridSpec,
    cost_estimate,
    records_frame,
    sweep,
)

logger = setup_logging("amp_ops", level=logging.INFO)


# -------------------------------------------------------------------------
# FILE HELPERS
# -------------------------------------------------------------------------


def load_program(path: str, check: bool = True) -> Program:
    try:
        source = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise AmpError(f"cannot read program {path}: {e}") from e
    return parse_text(source, check=check)


def out_dir(arg: Optional[str]) -> Path:
    if arg:
        path = Path(arg)
        path.mkdir(parents=True, exist_ok=True)
        return path
    return get_data_dir()


def write_text(path: Path, text: str) -> Path:
    path.write_text(text, encoding="utf-8")
    logger.info(f"  💾 Saved {path}")
    return path


def default_metric(p: Program) -> str:
    """Score the returned value when the entry has one, else the arrays."""
    return "frobenius" if p.functions[0].ret_type == VOID else "abs"


def assignment_for(args) -> PrecisionAssignment:
    if args.precision == "f32":
        return PrecisionAssignment.uniform(F32)
    if args.precision == "f64":
        return PrecisionAssignment.uniform(F64)
    if args.precision == "mixed":
        if not args.ics:
            raise AmpError("--precision mixed needs --ics")
        return InstructionChangeSet.load(args.ics).assignment()
    return PrecisionAssignment.declared()


# -------------------------------------------------------------------------
# SUBCOMMANDS
# -------------------------------------------------------------------------


def cmd_profile(args) -> int:
    program = load_program(args.program)
    exec_input = load_manifest(args.input)
    logger.info(f"🔄 Profiling {args.program}...")
    prof, ddfg, _ = profile(program, exec_input)

    dest = out_dir(args.out_dir)
    stem = Path(args.program).stem
    write_text(dest / f"{stem}.profile.json", prof.dumps())
    write_text(dest / f"{stem}.ddfg.dot", ddfg.to_dot(stem.replace("-", "_")))
    print(prof.summary_frame().to_string(index=False))

    if args.overhead:
        report = measure_overhead(program, exec_input, stem)
        print(
            f"\nProfile runtime / baseline runtime: {report.ratio:.1f}x "
            f"({report.profile_bytes} profile bytes)"
        )
    return 0


def cmd_classify(args) -> int:
    program = load_program(args.program)
    vector = ThresholdVector.parse(args.thresholds)
    if args.profile:
        prof = NumericalProfile.load(args.profile)
        if prof.program_hash != program.fingerprint():
            raise AmpError(f"{args.profile} was recorded for another program")
    else:
        if not args.input:
            raise AmpError("classify needs --profile or --input")
        prof, _, _ = profile(program, load_manifest(args.input))

    cl = classify(prof, vector)
    ics = compute_ics(cl, def_use_graph(program))
    doc = cl.to_document()
    doc["ics"] = ics.to_document()["promoted"]
    doc["ics_id"] = ics.ics_id
    print(json.dumps(doc, indent=2))
    if args.ics_out:
        ics.save(args.ics_out)
        logger.info(f"  💾 Saved {args.ics_out} ({len(ics)} promoted)")
    return 0


def cmd_rewrite(args) -> int:
    program = load_program(args.program)
    ics = InstructionChangeSet.load(args.ics)
    mixed = rewrite(program, ics)
    if args.output:
        write_text(Path(args.output), mixed.text())
    else:
        sys.stdout.write(mixed.text())
    return 0


def cmd_run(args) -> int:
    program = load_program(args.program)
    exec_input = load_manifest(args.input)
    out = run(program, exec_input, assignment_for(args))

    doc = out.to_document()
    doc["scalar_cost"] = cost_estimate(out.op_counts, SCALAR_COST)
    doc["vector_cost"] = cost_estimate(out.op_counts, VECTOR_COST)
    if args.metric:
        baseline = run(program, exec_input, PrecisionAssignment.uniform(F64))
        doc["accuracy"] = accuracy(
            out, baseline, AccuracyMetric.parse(args.metric)
        )
    if args.overhead:
        doc["profile_overhead"] = measure_overhead(program, exec_input).ratio

    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if args.output:
        write_text(Path(args.output), text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_sweep(args) -> int:
    program = load_program(args.program)
    train = load_manifest(args.train)
    eval_input = load_manifest(args.eval or args.train)
    eval_program = (
        load_program(args.eval_program) if args.eval_program else None
    )
    if args.grid:
        grid = GridSpec.load(args.grid)
    elif args.desk:
        grid = GridSpec.desk()
    else:
        grid = GridSpec.default()

    result = sweep(
        program,
        train,
        eval_input,
        grid,
        metric=AccuracyMetric.parse(args.metric or default_metric(program)),
        eval_program=eval_program,
        jobs=args.jobs,
    )
    problems = result.report.check()
    if problems:
        raise AmpError(f"inconsistent report: {problems[0]}")

    dest = out_dir(args.out_dir)
    stem = Path(args.program).stem
    csv_path = dest / f"{stem}.sweep.csv"
    records_frame(result.records).to_csv(csv_path, index=False)
    logger.info(f"  💾 Saved {csv_path}")
    result.report.save(dest / f"{stem}.report.json")
    logger.info(f"  💾 Saved {dest / f'{stem}.report.json'}")

    print(result.report.summary_frame().to_string(index=False))
    print(f"\nsingle precision error: {result.single_accuracy:.6g}")
    return 0


def cmd_bench(args) -> int:
    case = bench_case(args.name, args.size, args.seed)
    dest = out_dir(args.out_dir)
    stem = f"{args.name}{args.size or ''}"
    write_text(dest / f"{stem}.nir", case.program.text())
    write_manifest(dest / f"{stem}.manifest", case.train, case.program)
    logger.info(f"  💾 Saved {dest / f'{stem}.manifest'}")
    if args.eval_size:
        if args.name != "lu":
            raise BenchError("--eval-size applies to lu only")
        eval_case = bench_case("lu", args.eval_size, args.seed)
        eval_stem = f"lu{args.eval_size}"
        write_text(dest / f"{eval_stem}.nir", eval_case.program.text())
        write_manifest(
            dest / f"{eval_stem}.manifest", eval_case.train, eval_case.program
        )
    return 0


def cmd_validate(args) -> int:
    program = load_program(args.program, check=False)
    assignment = (
        InstructionChangeSet.load(args.ics).assignment() if args.ics else None
    )
    violations = validate(program, assignment)
    for v in violations:
        print(f"  - {v}")
    if violations:
        logger.error(f"❌ {len(violations)} violation(s) in {args.program}")
        return 1
    print(f"✅ {args.program} is valid")
    return 0


COMMANDS = {
    "profile": cmd_profile,
    "classify": cmd_classify,
    "rewrite": cmd_rewrite,
    "run": cmd_run,
    "sweep": cmd_sweep,
    "bench": cmd_bench,
    "validate": cmd_validate,
}


# -------------------------------------------------------------------------
# MAIN CLI
# -------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description="AMP: profile-driven automated mixed precision"
    )
    subparsers = parser.add_subparsers(
        dest="command", help="Available commands"
    )

    p_prof = subparsers.add_parser(
        "profile", help="Profile a program; emit profile JSON and DDFG"
    )
    p_prof.add_argument("program", help="NIR program file")
    p_prof.add_argument("--input", required=True, help="Input manifest")
    p_prof.add_argument("--out-dir", help="Output directory (default: data/)")
    p_prof.add_argument(
        "--overhead",
        action="store_true",
        help="Also time profiled vs unprofiled runs",
    )

    p_cls = subparsers.add_parser(
        "classify", help="Classify instructions under a threshold vector"
    )
    p_cls.add_argument("program", help="NIR program file")
    p_cls.add_argument(
        "--thresholds", required=True, help="t1=..,t2=..,...,t7=.."
    )
    p_cls.add_argument("--profile", help="Profile JSON from 'profile'")
    p_cls.add_argument("--input", help="Input manifest (profile on the fly)")
    p_cls.add_argument("--ics-out", help="Write the ICS JSON here")

    p_rw = subparsers.add_parser(
        "rewrite", help="Promote an ICS and insert casts"
    )
    p_rw.add_argument("program", help="NIR program file")
    p_rw.add_argument("--ics", required=True, help="ICS JSON")
    p_rw.add_argument("-o", "--output", help="Output file (default: stdout)")

    p_run = subparsers.add_parser("run", help="Execute a program")
    p_run.add_argument("program", help="NIR program file")
    p_run.add_argument("--input", required=True, help="Input manifest")
    p_run.add_argument(
        "--precision",
        choices=["declared", "mixed", "f32", "f64"],
        default="declared",
        help="Precision mode",
    )
    p_run.add_argument("--ics", help="ICS JSON (for --precision mixed)")
    p_run.add_argument(
        "--metric",
        choices=["frobenius", "abs"],
        help="Report accuracy against the f64 run",
    )
    p_run.add_argument(
        "--overhead",
        action="store_true",
        help="Report profile runtime / baseline runtime",
    )
    p_run.add_argument("-o", "--output", help="Output file (default: stdout)")

    p_sw = subparsers.add_parser("sweep", help="Sweep a threshold grid")
    p_sw.add_argument("program", help="NIR program file (training)")
    p_sw.add_argument("--train", required=True, help="Training manifest")
    p_sw.add_argument("--eval", help="Evaluation manifest (default: train)")
    p_sw.add_argument(
        "--eval-program", help="Evaluate on another program of the family"
    )
    p_sw.add_argument("--grid", help="Grid config file")
    p_sw.add_argument(
        "--desk", action="store_true", help="Use the 3-values-per-knob grid"
    )
    p_sw.add_argument(
        "--metric",
        choices=["frobenius", "abs"],
        help="Accuracy metric (default: abs if the entry returns a value)",
    )
    p_sw.add_argument(
        "--jobs", type=int, default=DEFAULT_JOBS, help="Parallel workers"
    )
    p_sw.add_argument("--out-dir", help="Output directory (default: data/)")

    p_bench = subparsers.add_parser(
        "bench", help="Emit a benchmark program and input"
    )
    p_bench.add_argument("name", choices=["lu", "quad"])
    p_bench.add_argument(
        "--size", type=int, help="Matrix dimension or quadrature order"
    )
    p_bench.add_argument("--seed", type=int, default=42)
    p_bench.add_argument(
        "--eval-size", type=int, help="Also emit an LU of this size"
    )
    p_bench.add_argument("--out-dir", help="Output directory (default: data/)")

    p_val = subparsers.add_parser("validate", help="Validate a program")
    p_val.add_argument("program", help="NIR program file")
    p_val.add_argument("--ics", help="Check as a mixed run of this ICS")

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    if args.command is None:
        parser.print_help()
        return 2

    try:
        return COMMANDS[args.command](args)
    except AmpError as e:
        logger.error(f"❌ {args.command} failed: {e}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
