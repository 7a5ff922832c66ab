#!/usr/bin/env python3
"""
Deterministic NIR interpreter.

Runs the entry function of a program at a ``PrecisionAssignment``. Every
fadd/fsub/fmul/fdiv/fcall instance goes through ``fpkernel``; with a sink
attached each instance's ``FpOutcome`` is delivered tagged with its InstrId.
The interpreter never converts implicitly: mixed programs carry explicit
fpext/fptrunc, and in uniform modes those casts are the identity.
"""

import hashlib
import json
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Protocol, Sequence, Union

import numpy as np

from common_config import AmpError, DEFAULT_STEP_LIMIT, setup_logging
from fpkernel import (
    DEFAULT_KERNEL,
    DTYPES,
    FpOutcome,
    KernelConfig,
    apply_op,
    exec_fp,
)
from nir import (
    ArrayType,
    F32,
    F64,
    FLOAT_BINOPS,
    FLOAT_TYPES,
    I64,
    Instr,
    InstrId,
    NirValidationError,
    PrecisionAssignment,
    Program,
    validate,
)

logger = setup_logging("interp")

Number = Union[int, float, np.floating]


class ExecError(AmpError):
    """Runtime failure; ``where`` names the InstrId or block position."""

    def __init__(self, message: str, where: Optional[str] = None):
        super().__init__(f"{where}: {message}" if where else message)
        self.where = where


class StepLimitExceeded(ExecError):
    def __init__(self, limit: int, partial: "ExecOutput"):
        super().__init__(f"step limit {limit} exceeded")
        self.partial = partial


class OutcomeSink(Protocol):
    def record(self, iid: InstrId, outcome: FpOutcome) -> None:
        ...


@dataclass
class ExecInput:
    arrays: Dict[str, Sequence[float]] = field(default_factory=dict)
    scalars: Dict[str, Number] = field(default_factory=dict)
    step_limit: int = DEFAULT_STEP_LIMIT


@dataclass
class ExecOutput:
    arrays: Dict[str, np.ndarray]
    ret: Optional[Number]
    steps: int
    op_counts: Dict[str, int]

    def digest(self) -> str:
        """Bit-exact identity of every program output."""
        h = hashlib.sha256()
        for name in sorted(self.arrays):
            arr = self.arrays[name]
            h.update(f"{name}:{arr.dtype}:".encode("utf-8"))
            h.update(np.ascontiguousarray(arr).tobytes())
        if self.ret is not None:
            ret = np.asarray(self.ret)
            h.update(f"ret:{ret.dtype}:".encode("utf-8"))
            h.update(ret.tobytes())
        return h.hexdigest()

    def to_document(self) -> Dict[str, Any]:
        ret = self.ret
        if isinstance(ret, np.floating):
            ret = float(ret)
        return {
            "arrays": {
                name: [float(v) for v in arr]
                for name, arr in sorted(self.arrays.items())
            },
            "ret": ret,
            "steps": self.steps,
            "op_counts": dict(sorted(self.op_counts.items())),
            "digest": self.digest(),
        }

    def dumps(self) -> str:
        return json.dumps(self.to_document(), indent=2, sort_keys=True)


def _storage_dtype(declared: str, assignment: PrecisionAssignment):
    return DTYPES[assignment.uniform_type or declared]


class _Machine:
    def __init__(
        self,
        program: Program,
        exec_input: ExecInput,
        assignment: PrecisionAssignment,
        sink: Optional[OutcomeSink],
        config: KernelConfig,
    ):
        self.fn = program.functions[0]
        self.assignment = assignment
        self.uniform = assignment.uniform_type
        self.sink = sink
        self.config = config
        self.limit = exec_input.step_limit
        self.steps = 0
        self.counts: Dict[str, int] = {}
        self.arrays: Dict[str, np.ndarray] = {}
        self.regs: Dict[str, Any] = {}
        self.ret: Optional[Number] = None
        self.bind(exec_input)

    def bind(self, exec_input: ExecInput):
        for name, ptype in self.fn.params:
            if isinstance(ptype, ArrayType):
                if name not in exec_input.arrays:
                    raise ExecError(f"unbound array parameter %{name}")
                # Round once to declared storage, then to the run's width.
                data = np.asarray(
                    exec_input.arrays[name], dtype=DTYPES[ptype.elem]
                )
                if data.shape != (ptype.length,):
                    raise ExecError(
                        f"array %{name} has {data.size} values, "
                        f"declared {ptype.length}"
                    )
                dtype = _storage_dtype(ptype.elem, self.assignment)
                self.arrays[name] = data.astype(dtype)
            else:
                if name not in exec_input.scalars:
                    raise ExecError(f"unbound parameter %{name}")
                value = exec_input.scalars[name]
                if ptype == I64:
                    self.regs[name] = int(value)
                else:
                    declared = DTYPES[ptype](value)
                    dtype = _storage_dtype(ptype, self.assignment)
                    self.regs[name] = dtype(declared)

    def output(self) -> ExecOutput:
        return ExecOutput(
            arrays={k: v.copy() for k, v in self.arrays.items()},
            ret=self.ret,
            steps=self.steps,
            op_counts=dict(self.counts),
        )

    def tick(self, key: str):
        self.steps += 1
        if self.steps > self.limit:
            self.steps -= 1
            raise StepLimitExceeded(self.limit, self.output())
        self.counts[key] = self.counts.get(key, 0) + 1

    def width(self, instr: Instr) -> str:
        if self.uniform is not None:
            return self.uniform
        if InstrId(self.fn.name, instr.dest) in self.assignment.promoted:
            return F64
        return instr.ftype

    def value(self, op) -> Any:
        return op if isinstance(op, int) else self.regs[op]

    def index(self, instr: Instr, where: str):
        array, idx = instr.operands[0], int(self.value(instr.operands[1]))
        data = self.arrays[array]
        if not 0 <= idx < data.shape[0]:
            raise ExecError(
                f"index {idx} out of bounds for %{array}[{data.shape[0]}]",
                where,
            )
        return data, idx

    def float_op(self, instr: Instr, kernel_op: str, a, b) -> np.floating:
        width = self.width(instr)
        self.tick(f"{instr.opcode}.{width}")
        if self.sink is None:
            return apply_op(kernel_op, a, b, width)
        outcome = exec_fp(kernel_op, a, b, width, self.config)
        self.sink.record(InstrId(self.fn.name, instr.dest), outcome)
        return outcome.result

    def execute(self) -> ExecOutput:
        fn = self.fn
        block, prev = fn.entry, None
        while True:
            instrs = block.instrs
            k = 0
            # Phis read their inputs before any of them is written.
            incoming = {}
            while k < len(instrs) and instrs[k].opcode == "phi":
                phi = instrs[k]
                self.tick("phi")
                if prev not in phi.labels:
                    raise ExecError(
                        f"no incoming value on entry to {block.label}",
                        str(InstrId(fn.name, phi.dest)),
                    )
                slot = phi.labels.index(prev)
                incoming[phi.dest] = self.value(phi.operands[slot])
                k += 1
            self.regs.update(incoming)

            for idx in range(k, len(instrs)):
                instr = instrs[idx]
                target = self.step(instr, block.label, idx)
                if target is not None:
                    prev, block = block.label, fn.block_map[target]
                    break
            else:
                return self.output()

    def step(self, instr: Instr, label: str, idx: int) -> Optional[str]:
        """Execute one instruction; return the next block label on a jump."""
        op, ops = instr.opcode, instr.operands
        if op in FLOAT_BINOPS:
            a, b = self.value(ops[0]), self.value(ops[1])
            kernel_op = FLOAT_BINOPS[op]
            self.regs[instr.dest] = self.float_op(instr, kernel_op, a, b)
        elif op == "fcall":
            a = self.value(ops[0])
            self.regs[instr.dest] = self.float_op(instr, instr.attr, a, None)
        elif op == "fconst":
            self.tick(op)
            self.regs[instr.dest] = DTYPES[self.width(instr)](instr.literal)
        elif op in ("fpext", "fptrunc"):
            self.tick(op)
            target = self.uniform or (F64 if op == "fpext" else F32)
            self.regs[instr.dest] = DTYPES[target](self.value(ops[0]))
        elif op == "iconst":
            self.tick(op)
            self.regs[instr.dest] = int(ops[0])
        elif op == "iadd":
            self.tick(op)
            self.regs[instr.dest] = self.value(ops[0]) + self.value(ops[1])
        elif op == "isub":
            self.tick(op)
            self.regs[instr.dest] = self.value(ops[0]) - self.value(ops[1])
        elif op == "imul":
            self.tick(op)
            self.regs[instr.dest] = self.value(ops[0]) * self.value(ops[1])
        elif op == "idx":
            self.tick(op)
            i, j, n = (self.value(o) for o in ops)
            self.regs[instr.dest] = i * n + j
        elif op == "icmp":
            self.tick(op)
            a, b = self.value(ops[0]), self.value(ops[1])
            pred = instr.attr
            self.regs[instr.dest] = (
                a < b if pred == "lt" else a <= b if pred == "le" else a == b
            )
        elif op == "load":
            self.tick(op)
            data, i = self.index(instr, str(InstrId(self.fn.name, instr.dest)))
            self.regs[instr.dest] = data[i]
        elif op == "store":
            self.tick(op)
            data, i = self.index(instr, f"@{self.fn.name}:{label}#{idx}")
            data[i] = self.value(ops[2])
        elif op == "br":
            self.tick(op)
            return instr.labels[0]
        elif op == "brcond":
            self.tick(op)
            return instr.labels[0] if self.value(ops[0]) else instr.labels[1]
        elif op == "ret":
            self.tick(op)
            self.ret = self.value(ops[0]) if ops else None
            return None
        else:
            raise ExecError(
                f"cannot execute {op}", f"@{self.fn.name}:{label}#{idx}"
            )
        return None


def run(
    p: Program,
    exec_input: ExecInput,
    assignment: Optional[PrecisionAssignment] = None,
    sink: Optional[OutcomeSink] = None,
    config: KernelConfig = DEFAULT_KERNEL,
) -> ExecOutput:
    """Execute the entry function of ``p``; the program must validate."""
    assignment = assignment or PrecisionAssignment.declared()
    violations = validate(p, assignment)
    if violations:
        raise NirValidationError(violations)
    machine = _Machine(p, exec_input, assignment, sink, config)
    out = machine.execute()
    logger.debug(
        f"ran @{machine.fn.name} ({assignment.mode.value}): {out.steps} steps"
    )
    return out


def float_op_counts(counts: Dict[str, int]) -> Dict[str, int]:
    """Restrict dynamic counts to floating arithmetic and casts."""
    return {
        k: v
        for k, v in counts.items()
        if k in ("fpext", "fptrunc") or k.rsplit(".", 1)[-1] in FLOAT_TYPES
    }


def uniform_run(p: Program, exec_input: ExecInput, ftype: str) -> ExecOutput:
    return run(p, exec_input, PrecisionAssignment.uniform(ftype))


def outputs_as_vector(out: ExecOutput) -> np.ndarray:
    """All float outputs (arrays by name, then ret) as one f64 vector."""
    parts: List[np.ndarray] = [
        np.asarray(out.arrays[name], dtype=np.float64).ravel()
        for name in sorted(out.arrays)
    ]
    if out.ret is not None:
        parts.append(np.asarray([out.ret], dtype=np.float64))
    return np.concatenate(parts) if parts else np.zeros(0)
