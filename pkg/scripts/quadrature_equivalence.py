#!/usr/bin/env python3
"""
Result and instruction-change equivalence on the quadrature benchmark.

Sweeps the threshold grid over the Gauss-Legendre integration of
sin(x)*exp(x) on [-10, 10] and reports, per distinct result, how many
vectors reach it, how many ICSs lead to it, its prime vectors and the
promoted-fraction range.
"""

import argparse
import sys
from pathlib import Path

# Add parent directory to path to import common modules
current_dir = Path(__file__).resolve().parent
sys.path.insert(0, str(current_dir.parent))

from bench import bench_case, quad_exact  # noqa: E402
from common_config import get_data_dir, setup_logging  # noqa: E402
from sweep import GridSpec, records_frame, sweep  # noqa: E402

logger = setup_logging("quadrature_equivalence")


def main():
    parser = argparse.ArgumentParser(
        description=__doc__.strip().splitlines()[0]
    )
    parser.add_argument("--order", type=int, default=20)
    parser.add_argument("--grid", help="Grid config file (default: desk grid)")
    parser.add_argument("--full", action="store_true", help="Use the 6^7 grid")
    parser.add_argument("--jobs", type=int, default=1)
    args = parser.parse_args()

    if args.grid:
        grid = GridSpec.load(args.grid)
    else:
        grid = GridSpec.default() if args.full else GridSpec.desk()

    case = bench_case("quad", args.order)
    result = sweep(
        case.program,
        case.train,
        case.train,
        grid,
        metric=case.metric,
        jobs=args.jobs,
    )
    report = result.report
    problems = report.check()
    if problems:
        for p in problems:
            logger.error(f"❌ {p}")
        sys.exit(1)

    summary = report.summary_frame()
    print(summary.to_string(index=False))
    best = summary["accuracy"].min()
    top = summary.iloc[0]
    print(f"\nanalytic value:      {quad_exact():.6f}")
    print(f"double result:       {float(result.baseline.ret):.6f}")
    print(f"single error:        {result.single_accuracy:.6g}")
    print(f"best mixed error:    {best:.6g}")
    if best > 0:
        gain = result.single_accuracy / best
        print(f"improvement:         {gain:.1f}x over single")
    print(
        f"most common result:  {top['share']:.1%} of vectors, "
        f"{'the best' if top['accuracy'] == best else 'not the best'}"
    )

    data_dir = get_data_dir()
    records_frame(result.records).to_csv(
        data_dir / "quad_sweep.csv", index=False
    )
    summary.to_csv(data_dir / "quad_results.csv", index=False)
    report.save(data_dir / "quad_report.json")
    logger.info(f"💾 Saved sweep, summary and report to {data_dir}")


if __name__ == "__main__":
    main()
