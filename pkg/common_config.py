#!/usr/bin/env python3
"""
Common configuration and utilities for the AMP workspace.
Provides consistent paths, defaults, logging, and shared error types.
"""

import os
import logging
from pathlib import Path
from typing import Dict, List, Union

# --- Workspace Configuration ---
WORKSPACE_ROOT = Path(__file__).parent.absolute()
SCRIPTS_DIR = WORKSPACE_ROOT / "scripts"
DATA_DIR = Path(os.environ.get("AMP_DATA_DIR", WORKSPACE_ROOT / "data"))

# --- Environment Flags ---
LOG_LEVEL = os.environ.get("AMP_LOG_LEVEL", "INFO").upper()
DEFAULT_JOBS = int(os.environ.get("AMP_JOBS", "1"))

# --- Numerical Defaults ---
F32_MANTISSA = int(os.environ.get("AMP_F32_MANTISSA", "23"))
F64_MANTISSA = 52
DEFAULT_STEP_LIMIT = 10**9
VECTOR_WIDTH_BITS = 256

# Six sample values per threshold; t6/t7 as powers of two.
DEFAULT_GRID: Dict[str, List[float]] = {
    "t1": [1, 5, 10, 25, 50, 75],
    "t2": [3, 6, 12, 25, 50, 100],
    "t3": [1, 5, 10, 25, 50, 75],
    "t4": [8, 12, 16, 20, 24, 28],
    "t5": [4, 8, 12, 16, 20, 23],
    "t6": [2.0**e for e in (100, 105, 110, 115, 120, 125)],
    "t7": [2.0**e for e in (-126, -120, -114, -108, -102, -96)],
}

# Three values per threshold (3^7 = 2187 vectors), both ends included.
DESK_GRID: Dict[str, List[float]] = {
    "t1": [1, 10, 75],
    "t2": [6, 25, 100],
    "t3": [1, 10, 75],
    "t4": [8, 16, 28],
    "t5": [4, 12, 23],
    "t6": [2.0**100, 2.0**110, 2.0**125],
    "t7": [2.0**-126, 2.0**-114, 2.0**-96],
}

# --- Logging Configuration ---
LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
DATE_FORMAT = "%Y-%m-%d %H:%M:%S"


class AmpError(RuntimeError):
    """Base class for every pipeline failure (parse, validate, run, ...)."""


def setup_logging(logger_name: str, level: Union[int, str, None] = None):
    """Setup consistent logging across all modules."""
    logging.basicConfig(
        level=level if level is not None else LOG_LEVEL,
        format=LOG_FORMAT,
        datefmt=DATE_FORMAT,
    )
    return logging.getLogger(logger_name)


# --- Path Utilities ---
def get_data_dir() -> Path:
    """Get directory for generated artifacts (profiles, CSVs, reports)."""
    DATA_DIR.mkdir(parents=True, exist_ok=True)
    return DATA_DIR


# --- Config Files ---
def parse_number(text: str) -> float:
    """Parse a decimal number, or a power of two written as ``2^k``."""
    text = text.strip()
    if text.startswith("2^"):
        return 2.0 ** int(text[2:])
    return float(text)


def load_kv_config(path: Union[str, Path]) -> Dict[str, str]:
    """Read a line-oriented ``key = value`` file; ``#`` starts a comment."""
    entries: Dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as f:
        for lineno, raw in enumerate(f, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise AmpError(f"{path}:{lineno}: expected 'key = value'")
            key, value = line.split("=", 1)
            entries[key.strip()] = value.strip()
    return entries
