#!/usr/bin/env python3
"""
Profiling overhead per input size: profiled runtime over unprofiled
runtime, and profile document size, for the LU benchmark.
"""

import argparse
import sys
from pathlib import Path

import pandas as pd

# Add parent directory to path to import common modules
current_dir = Path(__file__).resolve().parent
sys.path.insert(0, str(current_dir.parent))

from bench import MatrixInput, gen_matrix, lu_program  # noqa: E402
from common_config import get_data_dir, setup_logging  # noqa: E402
from profiler import measure_overhead  # noqa: E402

logger = setup_logging("profile_overhead")


def main():
    parser = argparse.ArgumentParser(
        description=__doc__.strip().splitlines()[0]
    )
    parser.add_argument("--sizes", type=int, nargs="+", default=[10, 20, 40])
    parser.add_argument("--seed", type=int, default=42)
    parser.add_argument("--repeats", type=int, default=3)
    args = parser.parse_args()

    rows = []
    for n in args.sizes:
        logger.info(f"🔄 Timing LU {n}x{n}...")
        report = measure_overhead(
            lu_program(n),
            gen_matrix(MatrixInput(n, args.seed)),
            label=f"lu{n}",
            repeats=args.repeats,
        )
        rows.append(report.as_row())

    df = pd.DataFrame(rows)
    print(df.to_string(index=False))
    out = get_data_dir() / "profile_overhead.csv"
    df.to_csv(out, index=False)
    logger.info(f"💾 Saved {out}")


if __name__ == "__main__":
    main()
