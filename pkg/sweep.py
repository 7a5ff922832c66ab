#!/usr/bin/env python3
"""
Threshold-space sweeps and the equivalence analysis over their results.

A sweep profiles once, classifies every threshold vector of a grid, groups
the vectors by the ICS they produce and evaluates each distinct ICS once.
Vectors are then partitioned two ways: by bit-identical result (R-sets)
and by ICS (IC-sets, which refine the R-sets). Inside an R-set a vector is
redundant when another member promotes no more in any component; the
remaining ones are the prime vectors.
"""

import itertools
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from bench import AccuracyMetric, accuracy
from classify import (
    COMPONENTS,
    ThresholdError,
    ThresholdVector,
    TriggerSets,
    bin_triggers,
    cancellation_trigger,
    expdiff_trigger,
    monotone_direction,
    range_trigger,
    roundoff_trigger,
)
from common_config import (
    DEFAULT_GRID,
    DEFAULT_JOBS,
    DESK_GRID,
    VECTOR_WIDTH_BITS,
    load_kv_config,
    parse_number,
    setup_logging,
)
from interp import ExecInput, ExecOutput, run
from nir import (
    F32,
    F64,
    FLOAT_TYPES,
    PrecisionAssignment,
    Program,
    def_use_graph,
)
from profiler import NumericalProfile, profile
from rewrite import InstructionChangeSet, compute_ics, rewrite

logger = setup_logging("sweep")


# --- Grids ---
@dataclass(frozen=True)
class GridSpec:
    """Sample values per threshold component, each sorted ascending."""

    values: Tuple[Tuple[float, ...], ...]

    def __post_init__(self):
        if len(self.values) != len(COMPONENTS):
            raise ThresholdError("a grid needs values for t1..t7")
        for name, vals in zip(COMPONENTS, self.values):
            if not vals:
                raise ThresholdError(f"grid component {name} is empty")
        object.__setattr__(
            self, "values", tuple(tuple(sorted(v)) for v in self.values)
        )

    @classmethod
    def from_mapping(cls, samples: Dict[str, Sequence[float]]) -> "GridSpec":
        missing = [c for c in COMPONENTS if c not in samples]
        if missing:
            raise ThresholdError(f"grid is missing {', '.join(missing)}")
        return cls(
            tuple(tuple(float(v) for v in samples[c]) for c in COMPONENTS)
        )

    @classmethod
    def default(cls) -> "GridSpec":
        return cls.from_mapping(DEFAULT_GRID)

    @classmethod
    def desk(cls) -> "GridSpec":
        return cls.from_mapping(DESK_GRID)

    @classmethod
    def load(cls, path: Union[str, Path]) -> "GridSpec":
        """Grid file: ``t1 = 1, 25, 75`` lines; ``2^-126`` style allowed."""
        entries = load_kv_config(path)
        unknown = set(entries) - set(COMPONENTS)
        if unknown:
            raise ThresholdError(f"{path}: unknown keys {sorted(unknown)}")
        try:
            samples = {
                k: [parse_number(v) for v in text.split(",") if v.strip()]
                for k, text in entries.items()
            }
        except ValueError as e:
            raise ThresholdError(f"{path}: {e}") from e
        return cls.from_mapping(samples)

    @property
    def size(self) -> int:
        return math.prod(len(v) for v in self.values)

    def corners(self) -> Tuple[ThresholdVector, ThresholdVector]:
        """(least promoting, most promoting) vectors of the grid."""
        least, most = [], []
        for direction, vals in zip(monotone_direction(), self.values):
            least.append(vals[0] if direction > 0 else vals[-1])
            most.append(vals[-1] if direction > 0 else vals[0])
        return ThresholdVector(*least), ThresholdVector(*most)


def enumerate_grid(grid: GridSpec) -> List[ThresholdVector]:
    """Full Cartesian product, t1 varying slowest."""
    return [
        ThresholdVector(*combo) for combo in itertools.product(*grid.values)
    ]


# --- Cost Model ---
class CostKind(str, Enum):
    SCALAR = "scalar"
    VECTOR = "vector"


@dataclass(frozen=True)
class CostModel:
    """Analytic cost of a run from its dynamic op counts.

    Scalar: every float op and cast costs 1. Vector: a W-bit unit does W/32
    f32 or W/64 f64 ops at a time; casts cost like an f64 op plus a shuffle.
    """

    kind: CostKind = CostKind.SCALAR
    width_bits: int = VECTOR_WIDTH_BITS
    shuffle: Optional[float] = None

    def op_cost(self, key: str) -> float:
        is_cast = key in ("fpext", "fptrunc")
        width = key.rsplit(".", 1)[-1]
        if not is_cast and width not in FLOAT_TYPES:
            return 0.0
        if self.kind is CostKind.SCALAR:
            return 1.0
        lane = 64.0 / self.width_bits
        if is_cast:
            shuffle = lane if self.shuffle is None else self.shuffle
            return lane + shuffle
        return (32.0 if width == F32 else 64.0) / self.width_bits


SCALAR_COST = CostModel(CostKind.SCALAR)
VECTOR_COST = CostModel(CostKind.VECTOR)


def cost_estimate(counts: Dict[str, int], model: CostModel) -> float:
    return sum(n * model.op_cost(key) for key, n in counts.items())


# --- Prime Vectors ---
def promotion_levels(vectors: Sequence[ThresholdVector]) -> np.ndarray:
    """Rows where a larger entry means that component promotes more."""
    direction = np.asarray(monotone_direction(), dtype=np.float64)
    raw = np.asarray([v.as_tuple() for v in vectors], dtype=np.float64)
    return raw.reshape(len(vectors), len(COMPONENTS)) * direction


def prime_vectors(vectors: Sequence[ThresholdVector]) -> List[ThresholdVector]:
    """Members not dominated by a less promoting member, in input order."""
    unique = list(dict.fromkeys(vectors))
    if len(unique) <= 1:
        return unique
    levels = promotion_levels(unique)
    # Lexicographic order puts every dominating vector before those it
    # dominates, so one pass against the kept minima suffices.
    order = np.lexsort(levels.T[::-1])
    minima: List[int] = []
    for idx in order:
        if minima and np.any(np.all(levels[minima] <= levels[idx], axis=1)):
            continue
        minima.append(int(idx))
    return [unique[i] for i in sorted(minima)]


def dominates(w: ThresholdVector, v: ThresholdVector) -> bool:
    """True if ``w`` promotes no more than ``v`` in every component."""
    levels = promotion_levels([w, v])
    return bool(np.all(levels[0] <= levels[1]))


# --- Sweep ---
class IcsResolver:
    """ICS per threshold vector, caching each trigger on its components."""

    def __init__(self, prof: NumericalProfile, program: Program):
        self.prof = prof
        self.graph = def_use_graph(program)
        self._cancel: Dict[Tuple, Any] = {}
        self._roundoff: Dict[Tuple, Any] = {}
        self._expdiff: Dict[Tuple, Any] = {}
        self._range: Dict[Tuple, Any] = {}
        self._ics: Dict[TriggerSets, InstructionChangeSet] = {}

    @staticmethod
    def _cached(cache, key, fn):
        if key not in cache:
            cache[key] = fn()
        return cache[key]

    def triggers(self, t: ThresholdVector) -> TriggerSets:
        p = self.prof
        return TriggerSets(
            self._cached(self._cancel, (t.t5,),
                         lambda: cancellation_trigger(p, t.t5)),
            self._cached(self._roundoff, (t.t1, t.t2),
                         lambda: roundoff_trigger(p, t.t1, t.t2)),
            self._cached(self._expdiff, (t.t3, t.t4),
                         lambda: expdiff_trigger(p, t.t3, t.t4)),
            self._cached(self._range, (t.t6, t.t7),
                         lambda: range_trigger(p, t.t6, t.t7)),
        )

    def ics(self, t: ThresholdVector) -> InstructionChangeSet:
        trig = self.triggers(t)
        if trig not in self._ics:
            cl = bin_triggers(self.prof, trig)
            self._ics[trig] = compute_ics(cl, self.graph)
        return self._ics[trig]


@dataclass(frozen=True)
class VariantResult:
    ics: InstructionChangeSet
    result_id: str
    accuracy: float
    scalar_cost: float
    vector_cost: float


@dataclass(frozen=True)
class SweepRecord:
    vector: ThresholdVector
    ics_id: str
    result_id: str
    accuracy: float
    promoted_fraction: float
    scalar_cost: float
    vector_cost: float
    ics_size: int = 0

    def as_row(self) -> Dict[str, Any]:
        row: Dict[str, Any] = self.vector.as_dict()
        row.update(
            ics_id=self.ics_id,
            result_id=self.result_id,
            accuracy=self.accuracy,
            promoted_fraction=self.promoted_fraction,
            scalar_cost=self.scalar_cost,
            vector_cost=self.vector_cost,
        )
        return row


def evaluate_variant(
    program: Program,
    ics: InstructionChangeSet,
    eval_input: ExecInput,
    baseline: ExecOutput,
    metric: AccuracyMetric,
) -> VariantResult:
    """Rewrite for ``ics``, run on ``eval_input`` and score the output."""
    mixed = rewrite(program, ics)
    out = run(mixed, eval_input, ics.assignment())
    return VariantResult(
        ics=ics,
        result_id=out.digest()[:16],
        accuracy=accuracy(out, baseline, metric),
        scalar_cost=cost_estimate(out.op_counts, SCALAR_COST),
        vector_cost=cost_estimate(out.op_counts, VECTOR_COST),
    )


def _evaluate_job(args) -> VariantResult:
    return evaluate_variant(*args)


@dataclass
class SweepResult:
    records: List[SweepRecord]
    report: "EquivalenceReport"
    profile: NumericalProfile
    baseline: ExecOutput
    single: ExecOutput
    single_accuracy: float
    variants: Dict[str, VariantResult] = field(default_factory=dict)

    def records_frame(self) -> pd.DataFrame:
        return records_frame(self.records)


def sweep(
    p: Program,
    train: ExecInput,
    eval_input: ExecInput,
    grid: Union[GridSpec, Sequence[ThresholdVector]],
    metric: AccuracyMetric = AccuracyMetric(),
    eval_program: Optional[Program] = None,
    jobs: int = DEFAULT_JOBS,
    dedupe: bool = True,
) -> SweepResult:
    """Profile on ``train``, then evaluate every grid vector on ``eval_input``.

    ``eval_program`` may be another member of the same program family
    (e.g. a larger LU); the ICS learned on ``p`` is applied to it by InstrId.
    With ``dedupe`` off every vector is rewritten and run on its own.
    """
    target = eval_program or p
    if isinstance(grid, GridSpec):
        vectors = enumerate_grid(grid)
    else:
        vectors = list(grid)
    logger.info(f"🔄 Sweeping {len(vectors)} threshold vectors...")

    prof, _, _ = profile(p, train)
    resolver = IcsResolver(prof, p)
    assigned = [resolver.ics(v) for v in vectors]
    total_ops = max(len(prof), 1)

    baseline = run(target, eval_input, PrecisionAssignment.uniform(F64))
    single = run(target, eval_input, PrecisionAssignment.uniform(F32))

    if dedupe:
        todo = list(dict.fromkeys(assigned))
    else:
        todo = assigned
    logger.info(f"  {len(set(assigned))} distinct ICSs to evaluate")

    jobs_args = [(target, ics, eval_input, baseline, metric) for ics in todo]
    if jobs > 1 and len(todo) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_evaluate_job, jobs_args))
    else:
        results = [_evaluate_job(a) for a in jobs_args]

    if dedupe:
        by_ics = {r.ics: r for r in results}
        per_vector = [by_ics[ics] for ics in assigned]
    else:
        per_vector = results
        by_ics = {}
        for r in results:
            by_ics.setdefault(r.ics, r)

    records = [
        SweepRecord(
            vector=v,
            ics_id=r.ics.ics_id,
            result_id=r.result_id,
            accuracy=r.accuracy,
            promoted_fraction=len(r.ics) / total_ops,
            scalar_cost=r.scalar_cost,
            vector_cost=r.vector_cost,
            ics_size=len(r.ics),
        )
        for v, r in zip(vectors, per_vector)
    ]
    report = build_report(records)
    logger.info(
        f"✅ Sweep done: {len(report.result_sets)} distinct results, "
        f"{len(report.ic_sets)} distinct ICSs"
    )
    return SweepResult(
        records=records,
        report=report,
        profile=prof,
        baseline=baseline,
        single=single,
        single_accuracy=accuracy(single, baseline, metric),
        variants={r.ics.ics_id: r for r in by_ics.values()},
    )


def records_frame(records: Sequence[SweepRecord]) -> pd.DataFrame:
    columns = list(COMPONENTS) + [
        "ics_id", "result_id", "accuracy", "promoted_fraction",
        "scalar_cost", "vector_cost",
    ]
    return pd.DataFrame([r.as_row() for r in records], columns=columns)


# --- Equivalence Report ---
@dataclass
class ResultSet:
    result_id: str
    vectors: List[ThresholdVector]
    ics_ids: List[str]
    primes: List[ThresholdVector]
    accuracy: float
    promoted_min: float
    promoted_mean: float
    promoted_max: float
    scalar_cost_min: float
    vector_cost_min: float

    def to_document(self) -> Dict[str, Any]:
        return {
            "result_id": self.result_id,
            "size": len(self.vectors),
            "accuracy": self.accuracy,
            "ics_ids": self.ics_ids,
            "primes": [str(v) for v in self.primes],
            "promoted_fraction": {
                "min": self.promoted_min,
                "mean": self.promoted_mean,
                "max": self.promoted_max,
            },
            "scalar_cost_min": self.scalar_cost_min,
            "vector_cost_min": self.vector_cost_min,
        }


@dataclass
class EquivalenceReport:
    grid_size: int
    result_sets: List[ResultSet]
    ic_sets: Dict[str, List[ThresholdVector]]
    ic_result: Dict[str, str]

    def result_set(self, result_id: str) -> ResultSet:
        for rs in self.result_sets:
            if rs.result_id == result_id:
                return rs
        raise KeyError(result_id)

    def check(self) -> List[str]:
        """Bookkeeping invariants; an empty list means the report is sound."""
        problems = []
        covered = sum(len(rs.vectors) for rs in self.result_sets)
        if covered != self.grid_size:
            problems.append(
                f"R-sets cover {covered} vectors, grid has {self.grid_size}"
            )
        for ics_id, vectors in self.ic_sets.items():
            owner = self.result_set(self.ic_result[ics_id])
            members = set(owner.vectors)
            if not all(v in members for v in vectors):
                problems.append(f"IC-set {ics_id} spans several R-sets")
        for rs in self.result_sets:
            if not rs.primes:
                problems.append(f"R-set {rs.result_id} has no prime")
                continue
            members = set(rs.vectors)
            if not set(rs.primes) <= members:
                problems.append(f"R-set {rs.result_id} primes not members")
            primes = promotion_levels(rs.primes)
            for v, level in zip(rs.vectors, promotion_levels(rs.vectors)):
                if not np.any(np.all(primes <= level, axis=1)):
                    problems.append(
                        f"{v} in R-set {rs.result_id} has no dominating prime"
                    )
                    break
        return problems

    def to_document(self) -> Dict[str, Any]:
        return {
            "grid_size": self.grid_size,
            "result_sets": [rs.to_document() for rs in self.result_sets],
            "ic_sets": {
                ics_id: {
                    "size": len(vectors),
                    "result_id": self.ic_result[ics_id],
                }
                for ics_id, vectors in sorted(self.ic_sets.items())
            },
        }

    def save(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.write_text(
            json.dumps(self.to_document(), indent=2) + "\n", encoding="utf-8"
        )
        return path

    def summary_frame(self) -> pd.DataFrame:
        """Per-result statistics, most common result first."""
        return pd.DataFrame(
            [
                {
                    "result_id": rs.result_id,
                    "vectors": len(rs.vectors),
                    "share": len(rs.vectors) / max(self.grid_size, 1),
                    "accuracy": rs.accuracy,
                    "ics_count": len(rs.ics_ids),
                    "primes": len(rs.primes),
                    "promoted_min": rs.promoted_min,
                    "promoted_mean": rs.promoted_mean,
                    "promoted_max": rs.promoted_max,
                    "scalar_cost_min": rs.scalar_cost_min,
                    "vector_cost_min": rs.vector_cost_min,
                }
                for rs in self.result_sets
            ]
        )


def build_report(records: Sequence[SweepRecord]) -> EquivalenceReport:
    by_result: Dict[str, List[SweepRecord]] = {}
    ic_sets: Dict[str, List[ThresholdVector]] = {}
    ic_result: Dict[str, str] = {}
    for r in records:
        by_result.setdefault(r.result_id, []).append(r)
        ic_sets.setdefault(r.ics_id, []).append(r.vector)
        ic_result.setdefault(r.ics_id, r.result_id)

    result_sets = []
    for result_id, recs in by_result.items():
        vectors = [r.vector for r in recs]
        fractions = np.asarray([r.promoted_fraction for r in recs])
        result_sets.append(
            ResultSet(
                result_id=result_id,
                vectors=vectors,
                ics_ids=sorted({r.ics_id for r in recs}),
                primes=prime_vectors(vectors),
                accuracy=recs[0].accuracy,
                promoted_min=float(fractions.min()),
                promoted_mean=float(fractions.mean()),
                promoted_max=float(fractions.max()),
                scalar_cost_min=min(r.scalar_cost for r in recs),
                vector_cost_min=min(r.vector_cost for r in recs),
            )
        )
    result_sets.sort(key=lambda rs: (-len(rs.vectors), rs.result_id))
    return EquivalenceReport(len(records), result_sets, ic_sets, ic_result)
