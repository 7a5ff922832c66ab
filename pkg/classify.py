#!/usr/bin/env python3
"""
Threshold vectors and the four-bin classification of profiled instructions.

Bins are tried in priority order and an instruction stops at the first bin
it qualifies for: cancellation, promotion, benign, other.
"""

import math
from dataclasses import astuple, dataclass, fields, replace
from typing import Dict, FrozenSet, NamedTuple, Tuple

import numpy as np

from common_config import AmpError, parse_number, setup_logging
from nir import InstrId
from profiler import NumericalProfile

logger = setup_logging("classify")

COMPONENTS = ("t1", "t2", "t3", "t4", "t5", "t6", "t7")
BINS = ("cancellation", "promotion", "benign", "other")
F32_MAX = float(np.finfo(np.float32).max)


class ThresholdError(AmpError):
    pass


def _fmt_threshold(value: float) -> str:
    if value > 0:
        mantissa, exponent = math.frexp(value)
        if mantissa == 0.5 and abs(exponent - 1) >= 16:
            return f"2^{exponent - 1}"
    return f"{value:g}" if float(value).is_integer() else repr(float(value))


@dataclass(frozen=True, order=True)
class ThresholdVector:
    """One setting of the seven knobs.

    t1: % of instances for the round-off trigger
    t2: error ratio cutoff in % of the largest rounding error
    t3: % of instances for the exponent-difference trigger
    t4: addend exponent difference cutoff
    t5: cancelled leading bits cutoff
    t6: near-overflow magnitude
    t7: near-underflow magnitude
    """

    t1: float
    t2: float
    t3: float
    t4: float
    t5: float
    t6: float
    t7: float

    def __post_init__(self):
        problems = []
        if not 0 <= self.t1 <= 100:
            problems.append("t1 must be in [0, 100]")
        if not 0 < self.t2 <= 100:
            problems.append("t2 must be in (0, 100]")
        if not 0 <= self.t3 <= 100:
            problems.append("t3 must be in [0, 100]")
        if not 0 <= self.t4 <= 255:
            problems.append("t4 must be in [0, 255]")
        if not 0 <= self.t5 <= 24:
            problems.append("t5 must be in [0, 24]")
        if not 0 < self.t7 < self.t6 <= F32_MAX:
            problems.append("need 0 < t7 < t6 <= f32 max")
        if problems:
            raise ThresholdError(
                f"invalid threshold vector: {'; '.join(problems)}"
            )

    @property
    def roundoff_cutoff(self) -> int:
        """Smallest error ratio log that counts as exceeding t2 percent."""
        return math.ceil(math.log2(self.t2 / 100.0))

    def as_tuple(self) -> Tuple[float, ...]:
        return astuple(self)

    def as_dict(self) -> Dict[str, float]:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def with_(self, **changes) -> "ThresholdVector":
        return replace(self, **changes)

    @classmethod
    def parse(cls, text: str) -> "ThresholdVector":
        """Parse ``t1=..,t2=..,...,t7=..``; all seven are required."""
        values: Dict[str, float] = {}
        for part in text.split(","):
            part = part.strip()
            if not part:
                continue
            if "=" not in part:
                raise ThresholdError(f"expected tN=value, got {part!r}")
            key, value = (s.strip() for s in part.split("=", 1))
            if key not in COMPONENTS:
                raise ThresholdError(f"unknown threshold {key!r}")
            try:
                values[key] = parse_number(value)
            except ValueError:
                raise ThresholdError(
                    f"{key}: not a number: {value!r}"
                ) from None
        missing = [c for c in COMPONENTS if c not in values]
        if missing:
            raise ThresholdError(f"missing thresholds: {', '.join(missing)}")
        return cls(**values)

    def __str__(self) -> str:
        return ",".join(
            f"{name}={_fmt_threshold(getattr(self, name))}"
            for name in COMPONENTS
        )


def monotone_direction() -> Tuple[int, ...]:
    """Per component, the direction (-1 down, +1 up) that grows triggers."""
    return (-1, -1, -1, -1, -1, -1, +1)


class TriggerSets(NamedTuple):
    cancellation: FrozenSet[InstrId]
    roundoff: FrozenSet[InstrId]
    expdiff: FrozenSet[InstrId]
    range: FrozenSet[InstrId]

    @property
    def promotion(self) -> FrozenSet[InstrId]:
        return self.roundoff | self.expdiff | self.range


# Each trigger reads only its own components, so a sweep can cache them.
def cancellation_trigger(
    prof: NumericalProfile, t5: float
) -> FrozenSet[InstrId]:
    """Some instance cancelled more than t5 leading bits."""
    return frozenset(i for i, e in prof.entries.items() if e.max_cancel > t5)


def roundoff_trigger(
    prof: NumericalProfile, t1: float, t2: float
) -> FrozenSet[InstrId]:
    """More than t1% of instances have more than t2% error ratio."""
    cutoff = math.ceil(math.log2(t2 / 100.0))
    return frozenset(
        i for i, e in prof.entries.items() if e.roundoff_share(cutoff) > t1
    )


def expdiff_trigger(
    prof: NumericalProfile, t3: float, t4: float
) -> FrozenSet[InstrId]:
    """More than t3% of instances add across an exponent gap above t4."""
    return frozenset(
        i
        for i, e in prof.entries.items()
        if e.expdiff_share(int(t4)) > t3
    )


def range_trigger(
    prof: NumericalProfile, t6: float, t7: float
) -> FrozenSet[InstrId]:
    """Some result is above t6, below t7 (nonzero), or not finite."""
    return frozenset(
        i
        for i, e in prof.entries.items()
        if e.range_faults > 0 or e.max_abs > t6 or e.min_abs_nonzero < t7
    )


def triggers(prof: NumericalProfile, t: ThresholdVector) -> TriggerSets:
    """The raw predicate sets, before bin priority is applied."""
    return TriggerSets(
        cancellation_trigger(prof, t.t5),
        roundoff_trigger(prof, t.t1, t.t2),
        expdiff_trigger(prof, t.t3, t.t4),
        range_trigger(prof, t.t6, t.t7),
    )


@dataclass(frozen=True)
class Classification:
    cancellation: FrozenSet[InstrId]
    promotion: FrozenSet[InstrId]
    benign: FrozenSet[InstrId]
    other: FrozenSet[InstrId]

    def bin_of(self, iid: InstrId) -> str:
        for name in BINS:
            if iid in getattr(self, name):
                return name
        raise KeyError(iid)

    def all(self) -> FrozenSet[InstrId]:
        return self.cancellation | self.promotion | self.benign | self.other

    def to_document(self) -> Dict[str, list]:
        return {
            name: [
                {"function": i.function, "dest": i.dest}
                for i in sorted(getattr(self, name))
            ]
            for name in BINS
        }


def classify(prof: NumericalProfile, t: ThresholdVector) -> Classification:
    return bin_triggers(prof, triggers(prof, t))


def bin_triggers(prof: NumericalProfile, trig: TriggerSets) -> Classification:
    """Apply bin priority to precomputed trigger sets."""
    promote = trig.promotion
    bins = {name: set() for name in BINS}
    for iid, entry in prof.entries.items():
        if iid in trig.cancellation:
            bins["cancellation"].add(iid)
        elif iid in promote:
            bins["promotion"].add(iid)
        elif entry.all_exact:
            bins["benign"].add(iid)
        else:
            bins["other"].add(iid)
    return Classification(**{k: frozenset(v) for k, v in bins.items()})
