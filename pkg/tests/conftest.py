import sys
from pathlib import Path

import numpy as np
import pytest

# Modules live at the workspace root, next to common_config.py
sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from interp import ExecInput  # noqa: E402
from nir import parse_text  # noqa: E402

# r3 = r1 * r2 rounds to 1.0 in f32, and r4 = r1 - r3 then cancels every
# leading bit of r1 except the last one.
CANCEL_TEXT = """\
func @cancel(%A: arr<f32,2>, %B: arr<f32,1>) -> void {
entry:
  %r1 = load f32 %A, 0
  %r2 = load f32 %A, 1
  %r3 = fmul f32 %r1, %r2
  %r4 = fsub f32 %r1, %r3
  store f32 %B, 0, %r4
  ret
}
"""

ONE_UP = 1.0 + 2.0**-23
ONE_DOWN = 1.0 - 2.0**-23


@pytest.fixture
def cancel_program():
    return parse_text(CANCEL_TEXT)


@pytest.fixture
def cancel_input():
    return ExecInput(
        arrays={
            "A": np.array([ONE_UP, ONE_DOWN], dtype=np.float32),
            "B": np.zeros(1, dtype=np.float32),
        }
    )
