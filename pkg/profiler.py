#!/usr/bin/env python3
"""
Numerical profiling: aggregate per-instance ``FpOutcome``s into one entry
per static floating instruction and attach them to the def-use graph.

Entries keep histograms and extrema rather than instance logs, so any
threshold vector can be applied afterwards without re-profiling, and the
profile size depends only on the number of static instructions.
"""

import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Tuple, Union

import networkx as nx
import numpy as np
import pandas as pd

from common_config import AmpError, setup_logging
from fpkernel import (
    DEFAULT_KERNEL,
    ERRRATIO_MAX,
    ERRRATIO_MIN,
    FpOutcome,
    KernelConfig,
)
from interp import ExecInput, ExecOutput, run
from nir import InstrId, PrecisionAssignment, Program, def_use_graph

logger = setup_logging("profiler")

ERRRATIO_BUCKETS = ERRRATIO_MAX - ERRRATIO_MIN + 1
EXPDIFF_BUCKETS = 256


def _zeros(n: int) -> np.ndarray:
    return np.zeros(n, dtype=np.int64)


@dataclass
class ProfileEntry:
    function: str
    dest: str
    opcode: str
    total: int = 0
    exact: int = 0
    errratio_hist: np.ndarray = field(
        default_factory=lambda: _zeros(ERRRATIO_BUCKETS)
    )
    expdiff_hist: np.ndarray = field(
        default_factory=lambda: _zeros(EXPDIFF_BUCKETS)
    )
    max_cancel: int = 0
    max_abs: float = 0.0
    min_abs_nonzero: float = math.inf
    range_faults: int = 0

    @property
    def iid(self) -> InstrId:
        return InstrId(self.function, self.dest)

    def add(self, outcome: FpOutcome):
        self.total += 1
        if outcome.exact:
            self.exact += 1
        else:
            self.errratio_hist[outcome.errratio_log - ERRRATIO_MIN] += 1
        if outcome.addend_expdiff is not None:
            bucket = min(outcome.addend_expdiff, EXPDIFF_BUCKETS - 1)
            self.expdiff_hist[bucket] += 1
        if outcome.cancelled_bits:
            self.max_cancel = max(self.max_cancel, outcome.cancelled_bits)
        if outcome.range_fault:
            self.range_faults += 1
            return
        magnitude = outcome.abs_result
        self.max_abs = max(self.max_abs, magnitude)
        if magnitude > 0.0:
            self.min_abs_nonzero = min(self.min_abs_nonzero, magnitude)

    def merge(self, other: "ProfileEntry") -> "ProfileEntry":
        return ProfileEntry(
            function=self.function,
            dest=self.dest,
            opcode=self.opcode,
            total=self.total + other.total,
            exact=self.exact + other.exact,
            errratio_hist=self.errratio_hist + other.errratio_hist,
            expdiff_hist=self.expdiff_hist + other.expdiff_hist,
            max_cancel=max(self.max_cancel, other.max_cancel),
            max_abs=max(self.max_abs, other.max_abs),
            min_abs_nonzero=min(self.min_abs_nonzero, other.min_abs_nonzero),
            range_faults=self.range_faults + other.range_faults,
        )

    # -- statistics the thresholds are tested against --
    def roundoff_share(self, cutoff: int) -> float:
        """Percentage of instances whose error ratio log is >= cutoff."""
        if self.total == 0:
            return 0.0
        start = min(max(cutoff - ERRRATIO_MIN, 0), ERRRATIO_BUCKETS)
        return 100.0 * int(self.errratio_hist[start:].sum()) / self.total

    def expdiff_share(self, cutoff: int) -> float:
        """Percentage of instances whose addend exponent gap exceeds cutoff."""
        if self.total == 0:
            return 0.0
        start = min(max(cutoff + 1, 0), EXPDIFF_BUCKETS)
        return 100.0 * int(self.expdiff_hist[start:].sum()) / self.total

    @property
    def all_exact(self) -> bool:
        return self.exact == self.total

    def to_document(self) -> Dict[str, Any]:
        return {
            "function": self.function,
            "dest": self.dest,
            "opcode": self.opcode,
            "total": self.total,
            "exact": self.exact,
            "errratio_hist": [int(v) for v in self.errratio_hist],
            "expdiff_hist": [int(v) for v in self.expdiff_hist],
            "max_cancel": self.max_cancel,
            "max_abs": self.max_abs,
            "min_abs_nonzero": (
                None
                if math.isinf(self.min_abs_nonzero)
                else self.min_abs_nonzero
            ),
            "range_faults": self.range_faults,
        }

    @classmethod
    def from_document(cls, doc: Dict[str, Any]) -> "ProfileEntry":
        try:
            errratio = np.asarray(doc["errratio_hist"], dtype=np.int64)
            expdiff = np.asarray(doc["expdiff_hist"], dtype=np.int64)
            if errratio.shape != (ERRRATIO_BUCKETS,) or expdiff.shape != (
                EXPDIFF_BUCKETS,
            ):
                raise AmpError("histogram has the wrong number of buckets")
            min_abs = doc.get("min_abs_nonzero")
            return cls(
                function=doc["function"],
                dest=doc["dest"],
                opcode=doc["opcode"],
                total=int(doc["total"]),
                exact=int(doc["exact"]),
                errratio_hist=errratio,
                expdiff_hist=expdiff,
                max_cancel=int(doc["max_cancel"]),
                max_abs=float(doc["max_abs"]),
                min_abs_nonzero=(
                    math.inf if min_abs is None else float(min_abs)
                ),
                range_faults=int(doc["range_faults"]),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise AmpError(f"malformed profile entry: {e}") from e

    def __eq__(self, other) -> bool:
        if not isinstance(other, ProfileEntry):
            return NotImplemented
        return self.to_document() == other.to_document()


class NumericalProfile:
    """Per-InstrId profile of one program; also the interpreter's sink."""

    def __init__(
        self,
        program_hash: str,
        entries: Optional[Dict[InstrId, ProfileEntry]] = None,
    ):
        self.program_hash = program_hash
        self.entries: Dict[InstrId, ProfileEntry] = dict(entries or {})

    @classmethod
    def for_program(cls, p: Program) -> "NumericalProfile":
        """Empty entries for every profiled instruction of ``p``."""
        entries = {}
        for fn, _, instr in p.instructions():
            if instr.is_promotable:
                iid = InstrId(fn.name, instr.dest)
                entries[iid] = ProfileEntry(fn.name, instr.dest, instr.kind)
        return cls(p.fingerprint(), entries)

    def record(self, iid: InstrId, outcome: FpOutcome):
        self.entries[iid].add(outcome)

    def merge(self, other: "NumericalProfile") -> "NumericalProfile":
        if other.program_hash != self.program_hash:
            raise AmpError("cannot merge profiles of different programs")
        merged = dict(self.entries)
        for iid, entry in other.entries.items():
            merged[iid] = merged[iid].merge(entry) if iid in merged else entry
        return NumericalProfile(self.program_hash, merged)

    def __len__(self) -> int:
        return len(self.entries)

    def __eq__(self, other) -> bool:
        if not isinstance(other, NumericalProfile):
            return NotImplemented
        return self.to_document() == other.to_document()

    # -- documents --
    def to_document(self) -> Dict[str, Any]:
        return {
            "program_hash": self.program_hash,
            "entries": [
                self.entries[iid].to_document() for iid in sorted(self.entries)
            ],
        }

    @classmethod
    def from_document(cls, doc: Dict[str, Any]) -> "NumericalProfile":
        if "program_hash" not in doc or "entries" not in doc:
            raise AmpError("profile document needs program_hash and entries")
        entries = {}
        for item in doc["entries"]:
            entry = ProfileEntry.from_document(item)
            entries[entry.iid] = entry
        return cls(doc["program_hash"], entries)

    def dumps(self) -> str:
        return json.dumps(self.to_document(), indent=1)

    def save(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.write_text(self.dumps(), encoding="utf-8")
        return path

    @classmethod
    def load(cls, path: Union[str, Path]) -> "NumericalProfile":
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as e:
            raise AmpError(f"cannot read profile {path}: {e}") from e
        return cls.from_document(doc)

    def summary_frame(self) -> pd.DataFrame:
        """One row per instruction with the headline statistics."""
        rows = []
        for iid in sorted(self.entries):
            e = self.entries[iid]
            rows.append(
                {
                    "instr": str(iid),
                    "opcode": e.opcode,
                    "total": e.total,
                    "exact": e.exact,
                    "max_cancel": e.max_cancel,
                    "max_abs": e.max_abs,
                    "min_abs_nonzero": e.min_abs_nonzero,
                    "range_faults": e.range_faults,
                }
            )
        return pd.DataFrame(
            rows,
            columns=[
                "instr", "opcode", "total", "exact", "max_cancel",
                "max_abs", "min_abs_nonzero", "range_faults",
            ],
        )


export_profile = NumericalProfile.to_document
import_profile = NumericalProfile.from_document


# --- Annotated DDFG ---
@dataclass
class AnnotatedDDFG:
    """Def-use graph whose profiled nodes carry a ``profile`` attribute."""

    graph: nx.DiGraph

    def entry(self, iid: InstrId) -> Optional[ProfileEntry]:
        return self.graph.nodes[iid].get("profile")

    def node_label(self, iid: InstrId) -> str:
        attrs = self.graph.nodes[iid]
        lines = [f"{iid.function}:{iid.dest}", attrs.get("kind", "")]
        entry = attrs.get("profile")
        if entry is not None:
            lines.append(
                f"cancel={entry.max_cancel},exact={entry.exact}/{entry.total}"
            )
        return "\\n".join(lines)

    def to_dot(self, name: str = "ddfg") -> str:
        out = [f"digraph {name} {{", "  node [shape=box];"]
        for iid in sorted(self.graph.nodes):
            style = ""
            entry = self.entry(iid)
            if entry is not None and entry.max_cancel > 0:
                style = ", style=bold"
            out.append(f'  "{iid.function}:{iid.dest}" '
                       f'[label="{self.node_label(iid)}"{style}];')
        for src, dst in sorted(self.graph.edges):
            out.append(
                f'  "{src.function}:{src.dest}" -> '
                f'"{dst.function}:{dst.dest}";'
            )
        out.append("}")
        return "\n".join(out) + "\n"


def annotate(p: Program, prof: NumericalProfile) -> AnnotatedDDFG:
    g = def_use_graph(p)
    for iid in g.nodes:
        entry = prof.entries.get(iid)
        if entry is not None:
            g.nodes[iid]["profile"] = entry
    return AnnotatedDDFG(g)


def export_ddfg(g: AnnotatedDDFG) -> str:
    return g.to_dot()


# --- Profiling Runs ---
def profile(
    p: Program,
    exec_input: ExecInput,
    config: KernelConfig = DEFAULT_KERNEL,
) -> Tuple[NumericalProfile, AnnotatedDDFG, ExecOutput]:
    """Run ``p`` at declared precision with a sink attached."""
    prof = NumericalProfile.for_program(p)
    out = run(p, exec_input, PrecisionAssignment.declared(), prof, config)
    logger.debug(
        f"profiled {len(prof)} instructions over {out.steps} steps"
    )
    return prof, annotate(p, prof), out


def profile_inputs(
    p: Program, inputs: Iterable[ExecInput]
) -> NumericalProfile:
    """Merged profile over several training inputs."""
    merged = NumericalProfile.for_program(p)
    for exec_input in inputs:
        prof, _, _ = profile(p, exec_input)
        merged = merged.merge(prof)
    return merged


@dataclass(frozen=True)
class OverheadReport:
    label: str
    dynamic_steps: int
    baseline_seconds: float
    profile_seconds: float
    profile_bytes: int

    @property
    def ratio(self) -> float:
        if self.baseline_seconds <= 0.0:
            return math.inf
        return self.profile_seconds / self.baseline_seconds

    def as_row(self) -> Dict[str, Any]:
        return {
            "benchmark": self.label,
            "dynamic_steps": self.dynamic_steps,
            "baseline_s": self.baseline_seconds,
            "profile_s": self.profile_seconds,
            "ratio": self.ratio,
            "profile_bytes": self.profile_bytes,
        }


def measure_overhead(
    p: Program, exec_input: ExecInput, label: str = "", repeats: int = 1
) -> OverheadReport:
    """Wall-clock of a profiled run against an unprofiled one."""
    baseline: List[float] = []
    profiled: List[float] = []
    prof = None
    out = None
    for _ in range(max(repeats, 1)):
        start = time.perf_counter()
        out = run(p, exec_input)
        baseline.append(time.perf_counter() - start)
        start = time.perf_counter()
        prof, _, _ = profile(p, exec_input)
        profiled.append(time.perf_counter() - start)
    return OverheadReport(
        label=label,
        dynamic_steps=out.steps,
        baseline_seconds=min(baseline),
        profile_seconds=min(profiled),
        profile_bytes=len(prof.dumps().encode("utf-8")),
    )
