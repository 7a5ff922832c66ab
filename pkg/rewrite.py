#!/usr/bin/env python3
"""
Precision rewriting: turn a classification into an Instruction Change Set
(ICS) and a mixed-precision program.

Two passes decide what to promote. The single instruction pass takes the
promotion bin as is. The cancellation cascade pass promotes every
cancellation-bin instruction together with its backward slice, because
extra precision at the cancelling operation alone does not help; the
operands must arrive with more correct bits. Casts are then inserted
around the promoted instructions; memory keeps its declared types.
"""

import hashlib
import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Dict, FrozenSet, Iterable, Iterator, List, Set, Tuple, Union

import networkx as nx

from classify import Classification
from common_config import AmpError, setup_logging
from nir import (
    F32,
    F64,
    FLOAT_BINOPS,
    Block,
    Function,
    Instr,
    InstrId,
    PrecisionAssignment,
    Program,
    validate,
)

logger = setup_logging("rewrite")

SLICE_STOPS = frozenset({"load", "fconst", "fcall"})


class RewriteError(AmpError):
    pass


@dataclass(frozen=True)
class InstructionChangeSet:
    """Canonically ordered set of promoted instructions."""

    promoted: Tuple[InstrId, ...] = ()

    def __post_init__(self):
        canonical = tuple(sorted({InstrId(*i) for i in self.promoted}))
        object.__setattr__(self, "promoted", canonical)

    @classmethod
    def of(cls, ids: Iterable[InstrId]) -> "InstructionChangeSet":
        return cls(tuple(ids))

    def __len__(self) -> int:
        return len(self.promoted)

    def __iter__(self) -> Iterator[InstrId]:
        return iter(self.promoted)

    def __contains__(self, iid) -> bool:
        return iid in self.promoted

    @property
    def ics_id(self) -> str:
        text = "\n".join(str(i) for i in self.promoted)
        return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]

    def assignment(self) -> PrecisionAssignment:
        return PrecisionAssignment.mixed(self.promoted)

    def to_document(self) -> Dict[str, list]:
        return {
            "promoted": [
                {"function": i.function, "dest": i.dest} for i in self.promoted
            ]
        }

    @classmethod
    def from_document(cls, doc) -> "InstructionChangeSet":
        try:
            items = doc["promoted"] if isinstance(doc, dict) else doc
            return cls.of(InstrId(d["function"], d["dest"]) for d in items)
        except (KeyError, TypeError) as e:
            raise RewriteError(f"malformed ICS document: {e}") from e

    def save(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.write_text(
            json.dumps(self.to_document(), indent=2) + "\n", encoding="utf-8"
        )
        return path

    @classmethod
    def load(cls, path: Union[str, Path]) -> "InstructionChangeSet":
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as e:
            raise RewriteError(f"cannot read ICS {path}: {e}") from e
        return cls.from_document(doc)


# --- Passes ---
def backward_slice(
    seed: InstrId,
    g: nx.DiGraph,
    benign: Iterable[InstrId] = (),
    stops: FrozenSet[str] = SLICE_STOPS,
) -> FrozenSet[InstrId]:
    """Promotable producers reachable backward from ``seed``, seed included.

    Benign instructions and ``stops`` opcodes end the walk and are not
    included; parameters are not graph nodes. Phis and casts are walked
    through but are not promotable themselves.
    """
    benign = frozenset(benign)
    found: Set[InstrId] = {seed}
    seen: Set[InstrId] = {seed}
    stack = [seed]
    while stack:
        node = stack.pop()
        for pred in g.predecessors(node):
            if pred in seen:
                continue
            seen.add(pred)
            opcode = g.nodes[pred]["opcode"]
            if pred in benign or opcode in stops:
                continue
            if opcode in FLOAT_BINOPS:
                found.add(pred)
            stack.append(pred)
    return frozenset(found)


def compute_ics(cl: Classification, g: nx.DiGraph) -> InstructionChangeSet:
    promoted: Set[InstrId] = set(cl.promotion)
    for seed in cl.cancellation:
        promoted |= backward_slice(seed, g, cl.benign)
    return InstructionChangeSet.of(promoted - cl.benign)


# --- Cast Insertion ---
def _fresh(name: str, taken: Set[str]) -> str:
    candidate, n = name, 1
    while candidate in taken:
        candidate = f"{name}.{n}"
        n += 1
    taken.add(candidate)
    return candidate


def _rewrite_function(fn: Function, promoted: Set[str]) -> Function:
    types = fn.types
    taken = set(types)
    ext: Dict[str, str] = {}
    trunc: Dict[str, str] = {}

    def widened(op):
        if not isinstance(op, str) or op in promoted or types.get(op) != F32:
            return op
        if op not in ext:
            ext[op] = _fresh(f"{op}.f64", taken)
        return ext[op]

    def narrowed(op):
        if not isinstance(op, str) or op not in promoted:
            return op
        if types.get(op) != F32:
            return op
        if op not in trunc:
            trunc[op] = _fresh(f"{op}.f32", taken)
        return trunc[op]

    # An existing fpext of a promoted value becomes its source.
    alias: Dict[str, str] = {
        instr.dest: instr.operands[0]
        for block in fn.blocks
        for instr in block.instrs
        if instr.opcode == "fpext"
        and instr.dest not in promoted
        and instr.operands[0] in promoted
    }

    def operands(instr: Instr, cast):
        return tuple(
            alias[o] if isinstance(o, str) and o in alias else cast(o)
            for o in instr.operands
        )

    blocks: List[Tuple[str, List[Instr]]] = []
    for block in fn.blocks:
        out = []
        for instr in block.instrs:
            if instr.dest in alias:
                continue
            if instr.dest in promoted:
                out.append(
                    replace(
                        instr, ftype=F64, operands=operands(instr, widened)
                    )
                )
            else:
                out.append(
                    replace(instr, operands=operands(instr, narrowed))
                )
        blocks.append((block.label, out))

    # Place each cast right after its source is defined.
    after: Dict[str, List[Instr]] = {}
    for src, name in ext.items():
        after.setdefault(src, []).append(Instr("fpext", name, F64, (src,)))
    for src, name in trunc.items():
        after.setdefault(src, []).append(Instr("fptrunc", name, F32, (src,)))

    params = {p for p, _ in fn.params}
    new_blocks = []
    for bi, (label, instrs) in enumerate(blocks):
        result: List[Instr] = []
        nphi = sum(1 for i in instrs if i.opcode == "phi")
        pending: List[Instr] = []
        if bi == 0:
            for p, _ in fn.params:
                pending.extend(after.get(p, []))
        for idx, instr in enumerate(instrs):
            if idx == nphi:
                result.extend(pending)
                pending = []
            result.append(instr)
            if instr.dest is not None and instr.dest not in params:
                casts = after.get(instr.dest, [])
                if instr.opcode == "phi":
                    pending.extend(casts)
                else:
                    result.extend(casts)
        new_blocks.append(Block(label, tuple(result)))
    return replace(fn, blocks=tuple(new_blocks))


def rewrite(p: Program, ics: InstructionChangeSet) -> Program:
    """Retype the ICS members to f64 and insert fpext/fptrunc around them."""
    by_fn: Dict[str, Set[str]] = {}
    for iid in ics:
        instr = p.instr(iid)
        if instr is None:
            raise RewriteError(f"{iid}: no such instruction")
        if not instr.is_promotable:
            raise RewriteError(f"{iid}: {instr.opcode} cannot be promoted")
        by_fn.setdefault(iid.function, set()).add(iid.dest)
    if not by_fn:
        return p

    functions = tuple(
        _rewrite_function(fn, by_fn[fn.name]) if fn.name in by_fn else fn
        for fn in p.functions
    )
    mixed = Program(functions)
    violations = validate(mixed, ics.assignment())
    if violations:
        raise RewriteError(
            f"rewritten program is invalid: {violations[0]}"
        )
    casts = sum(
        1
        for _, _, i in mixed.instructions()
        if i.opcode in ("fpext", "fptrunc")
    ) - sum(
        1 for _, _, i in p.instructions() if i.opcode in ("fpext", "fptrunc")
    )
    logger.debug(f"promoted {len(ics)} instructions, inserted {casts} casts")
    return mixed
