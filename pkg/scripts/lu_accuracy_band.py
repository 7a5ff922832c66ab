#!/usr/bin/env python3
"""
LU accuracy band.

Trains AMP on one LU size and applies every distinct ICS of the threshold
grid to larger matrices. For each evaluation size the mixed results should
lie between the double (0) and single precision errors. Without pivoting
small matrices can amplify a partial promotion past the single precision
error, so the band is only meaningful from about n = 50 upwards.
"""

import argparse
import sys
from pathlib import Path

import pandas as pd

# Add parent directory to path to import common modules
current_dir = Path(__file__).resolve().parent
sys.path.insert(0, str(current_dir.parent))

from bench import (  # noqa: E402
    AccuracyMetric,
    MatrixInput,
    gen_matrix,
    lu_program,
)
from common_config import get_data_dir, setup_logging  # noqa: E402
from sweep import GridSpec, sweep  # noqa: E402

logger = setup_logging("lu_accuracy_band")


def band_rows(train_size, eval_sizes, seed, grid: GridSpec, jobs: int):
    program = lu_program(train_size)
    train = gen_matrix(MatrixInput(train_size, seed))
    rows = []
    for size in eval_sizes:
        logger.info(f"🔄 Evaluating on {size}x{size}...")
        result = sweep(
            program,
            train,
            gen_matrix(MatrixInput(size, seed + size)),
            grid,
            metric=AccuracyMetric(),
            eval_program=lu_program(size),
            jobs=jobs,
        )
        report = result.report
        for rs in report.result_sets:
            rows.append(
                {
                    "eval_size": size,
                    "result_id": rs.result_id,
                    "vectors": len(rs.vectors),
                    "accuracy": rs.accuracy,
                    "single_accuracy": result.single_accuracy,
                    "in_band": 0.0 <= rs.accuracy <= result.single_accuracy,
                    "promoted_mean": rs.promoted_mean,
                }
            )
        logger.info(
            f"  ✅ {len(report.result_sets)} distinct results, "
            f"single error {result.single_accuracy:.6g}"
        )
    return pd.DataFrame(rows)


def main():
    parser = argparse.ArgumentParser(
        description=__doc__.strip().splitlines()[0]
    )
    parser.add_argument("--train-size", type=int, default=100)
    parser.add_argument(
        "--eval-sizes", type=int, nargs="+", default=[100, 200, 300]
    )
    parser.add_argument("--seed", type=int, default=42)
    parser.add_argument("--grid", help="Grid config file (default: desk grid)")
    parser.add_argument("--jobs", type=int, default=1)
    args = parser.parse_args()

    grid = GridSpec.load(args.grid) if args.grid else GridSpec.desk()
    df = band_rows(
        args.train_size, args.eval_sizes, args.seed, grid, args.jobs
    )
    print(df.to_string(index=False))

    out = get_data_dir() / "lu_accuracy_band.csv"
    df.to_csv(out, index=False)
    logger.info(f"💾 Saved {out}")
    outside = int((~df["in_band"]).sum())
    if outside:
        logger.warning(f"⚠️ {outside} mixed result(s) outside the band")


if __name__ == "__main__":
    main()
