#!/usr/bin/env python3
"""
NIR: the small SSA numerical IR that AMP profiles and rewrites.

A program is a list of functions; the first one is the entry. Each function
has typed parameters (scalars or fixed-length arrays with a declared storage
precision) and basic blocks of typed instructions:

    func @axpy(%A: arr<f32,4>, %x: f32) -> f32 {
    entry:
      %r1 = load f32 %A, 0      // r1 = A[0]
      %r2 = fmul f32 %r1, %x
      ret %r2
    }

Instructions are identified across profiles, classifications and rewrites
by ``InstrId(function, dest)``, which SSA makes unique.
"""

import hashlib
import re
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import (
    Dict,
    FrozenSet,
    Iterable,
    Iterator,
    List,
    NamedTuple,
    Optional,
    Tuple,
    Union,
)

import networkx as nx

from common_config import AmpError, setup_logging

logger = setup_logging("nir")

# --- Types & Opcodes ---
F32 = "f32"
F64 = "f64"
I64 = "i64"
I1 = "i1"
VOID = "void"
FLOAT_TYPES = (F32, F64)

FLOAT_BINOPS = {"fadd": "add", "fsub": "sub", "fmul": "mul", "fdiv": "div"}
INTRINSICS = ("sin", "exp", "sqrt", "fabs")
INT_BINOPS = ("iadd", "isub", "imul")
ICMP_PREDS = ("lt", "le", "eq")
TERMINATORS = ("br", "brcond", "ret")
CASTS = ("fpext", "fptrunc")
OPCODES = frozenset(
    list(FLOAT_BINOPS)
    + list(INT_BINOPS)
    + list(TERMINATORS)
    + list(CASTS)
    + ["fconst", "fcall", "iconst", "icmp", "idx", "load", "store", "phi"]
)


@dataclass(frozen=True)
class ArrayType:
    elem: str
    length: int

    def __str__(self) -> str:
        return f"arr<{self.elem},{self.length}>"


Type = Union[str, ArrayType]
# A register name (without '%') or an integer immediate.
Operand = Union[str, int]


class InstrId(NamedTuple):
    function: str
    dest: str

    def __str__(self) -> str:
        return f"@{self.function}:%{self.dest}"


class NirParseError(AmpError):
    def __init__(self, message: str, line: int = 0, col: int = 0):
        super().__init__(f"line {line}, col {col}: {message}")
        self.line = line
        self.col = col


@dataclass(frozen=True)
class Violation:
    where: str
    message: str
    iid: Optional[InstrId] = None

    def __str__(self) -> str:
        return f"{self.where}: {self.message}"


class NirValidationError(AmpError):
    def __init__(self, violations: List[Violation]):
        head = "; ".join(str(v) for v in violations[:5])
        more = f" (+{len(violations) - 5} more)" if len(violations) > 5 else ""
        super().__init__(f"invalid program: {head}{more}")
        self.violations = violations


# --- Program Structure ---
def _fmt_operand(op: Operand) -> str:
    return f"%{op}" if isinstance(op, str) else str(op)


def _fmt_float(value: float) -> str:
    # repr is the shortest text that parses back to the same double.
    return repr(float(value))


@dataclass(frozen=True)
class Instr:
    opcode: str
    dest: Optional[str] = None
    ftype: Optional[str] = None
    operands: Tuple[Operand, ...] = ()
    labels: Tuple[str, ...] = ()
    attr: Optional[str] = None  # intrinsic name or icmp predicate
    literal: Optional[float] = None  # fconst value

    @property
    def is_promotable(self) -> bool:
        """Floating arithmetic or intrinsic call: the unit AMP promotes."""
        return self.opcode in FLOAT_BINOPS or self.opcode == "fcall"

    @property
    def is_terminator(self) -> bool:
        return self.opcode in TERMINATORS

    @property
    def uses(self) -> Tuple[str, ...]:
        return tuple(op for op in self.operands if isinstance(op, str))

    @property
    def result_type(self) -> Optional[str]:
        op = self.opcode
        if op in FLOAT_BINOPS or op in ("fconst", "fcall", "load", "phi"):
            return self.ftype
        if op == "fpext":
            return F64
        if op == "fptrunc":
            return F32
        if op in INT_BINOPS or op in ("iconst", "idx"):
            return I64
        if op == "icmp":
            return I1
        return None

    @property
    def kind(self) -> str:
        """Opcode with the intrinsic name, e.g. ``fcall.sin``."""
        return f"fcall.{self.attr}" if self.opcode == "fcall" else self.opcode

    def text(self) -> str:
        op, ops = self.opcode, [_fmt_operand(o) for o in self.operands]
        lhs = f"%{self.dest} = " if self.dest is not None else ""
        if op == "fconst":
            body = f"fconst {self.ftype} {_fmt_float(self.literal)}"
        elif op in FLOAT_BINOPS:
            body = f"{op} {self.ftype} {ops[0]}, {ops[1]}"
        elif op in CASTS:
            body = f"{op} {ops[0]}"
        elif op == "fcall":
            body = f"fcall {self.attr} {self.ftype} {ops[0]}"
        elif op == "iconst":
            body = f"iconst {ops[0]}"
        elif op == "icmp":
            body = f"icmp {self.attr} {', '.join(ops)}"
        elif op in ("load", "store"):
            body = f"{op} {self.ftype} {', '.join(ops)}"
        elif op == "phi":
            pairs = ", ".join(
                f"[{o}, {lbl}]" for o, lbl in zip(ops, self.labels)
            )
            body = f"phi {self.ftype} {pairs}"
        elif op == "br":
            body = f"br {self.labels[0]}"
        elif op == "brcond":
            body = f"brcond {ops[0]}, {self.labels[0]}, {self.labels[1]}"
        elif op == "ret":
            body = f"ret {ops[0]}" if ops else "ret"
        else:
            body = f"{op} {', '.join(ops)}"
        return lhs + body


@dataclass(frozen=True)
class Block:
    label: str
    instrs: Tuple[Instr, ...]

    @property
    def terminator(self) -> Optional[Instr]:
        if self.instrs and self.instrs[-1].is_terminator:
            return self.instrs[-1]
        return None

    @property
    def successors(self) -> Tuple[str, ...]:
        term = self.terminator
        return term.labels if term is not None else ()


@dataclass(frozen=True)
class Function:
    name: str
    params: Tuple[Tuple[str, Type], ...]
    blocks: Tuple[Block, ...]
    ret_type: str = VOID

    @cached_property
    def block_map(self) -> Dict[str, Block]:
        return {b.label: b for b in self.blocks}

    @cached_property
    def definitions(self) -> Dict[str, Instr]:
        return {
            i.dest: i for b in self.blocks for i in b.instrs if i.dest
        }

    @cached_property
    def types(self) -> Dict[str, Type]:
        """Declared type of every parameter and register."""
        types: Dict[str, Type] = dict(self.params)
        for instr in self.definitions.values():
            if instr.result_type is not None:
                types[instr.dest] = instr.result_type
        return types

    @property
    def entry(self) -> Block:
        return self.blocks[0]

    def text(self) -> str:
        params = ", ".join(f"%{n}: {t}" for n, t in self.params)
        lines = [f"func @{self.name}({params}) -> {self.ret_type} {{"]
        for block in self.blocks:
            lines.append(f"{block.label}:")
            lines.extend(f"  {i.text()}" for i in block.instrs)
        lines.append("}")
        return "\n".join(lines)


@dataclass(frozen=True)
class Program:
    functions: Tuple[Function, ...]

    @property
    def entry(self) -> str:
        return self.functions[0].name if self.functions else ""

    @cached_property
    def function_map(self) -> Dict[str, Function]:
        return {f.name: f for f in self.functions}

    def function(self, name: str) -> Function:
        return self.function_map[name]

    def instructions(self) -> Iterator[Tuple[Function, Block, Instr]]:
        for fn in self.functions:
            for block in fn.blocks:
                for instr in block.instrs:
                    yield fn, block, instr

    def instr(self, iid: InstrId) -> Optional[Instr]:
        fn = self.function_map.get(iid.function)
        return fn.definitions.get(iid.dest) if fn is not None else None

    def promotable_ids(self) -> List[InstrId]:
        return [
            InstrId(fn.name, i.dest)
            for fn, _, i in self.instructions()
            if i.is_promotable
        ]

    def text(self) -> str:
        return "\n\n".join(f.text() for f in self.functions) + "\n"

    def fingerprint(self) -> str:
        return hashlib.sha256(self.text().encode("utf-8")).hexdigest()


def print_text(p: Program) -> str:
    return p.text()


# --- Precision Assignment ---
class PrecisionMode(str, Enum):
    MIXED = "mixed"
    UNIFORM_F32 = "f32"
    UNIFORM_F64 = "f64"


@dataclass(frozen=True)
class PrecisionAssignment:
    """How a run sets operation (and, in uniform modes, storage) widths.

    In MIXED mode every instruction runs at its declared type; ``promoted``
    lists the instructions the rewriter retyped to F64, and ``validate``
    checks the program really carries those types and casts.
    """

    mode: PrecisionMode = PrecisionMode.MIXED
    promoted: FrozenSet[InstrId] = field(default_factory=frozenset)

    @classmethod
    def declared(cls) -> "PrecisionAssignment":
        return cls(PrecisionMode.MIXED, frozenset())

    @classmethod
    def mixed(cls, ids: Iterable[InstrId]) -> "PrecisionAssignment":
        return cls(PrecisionMode.MIXED, frozenset(ids))

    @classmethod
    def uniform(cls, ftype: str) -> "PrecisionAssignment":
        mode = PrecisionMode.UNIFORM_F64 if ftype == F64 else (
            PrecisionMode.UNIFORM_F32
        )
        return cls(mode, frozenset())

    @property
    def uniform_type(self) -> Optional[str]:
        if self.mode is PrecisionMode.UNIFORM_F32:
            return F32
        if self.mode is PrecisionMode.UNIFORM_F64:
            return F64
        return None


# --- Parsing ---
_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
    |(?P<nl>\n)
    |(?P<comment>//[^\n]*)
    |(?P<arrow>->)
    |(?P<reg>%[A-Za-z0-9_.]+)
    |(?P<gname>@[A-Za-z0-9_.]+)
    |(?P<num>[-+]?(?:
        0[xX][0-9a-fA-F]*\.?[0-9a-fA-F]*[pP][-+]?\d+
        |(?:\d+\.\d*|\.\d+|\d+)(?:[eE][-+]?\d+)?
        |(?:inf|nan)\b))
    |(?P<ident>[A-Za-z_][A-Za-z0-9_.]*)
    |(?P<punct>[(){}\[\],:=<>])
    """,
    re.VERBOSE,
)


class Token(NamedTuple):
    kind: str
    text: str
    line: int
    col: int


def tokenize(source: str) -> List[Token]:
    tokens: List[Token] = []
    line, line_start, pos = 1, 0, 0
    while pos < len(source):
        m = _TOKEN_RE.match(source, pos)
        if m is None:
            raise NirParseError(
                f"unexpected character {source[pos]!r}",
                line,
                pos - line_start + 1,
            )
        kind = m.lastgroup
        if kind == "nl":
            line, line_start = line + 1, m.end()
        elif kind not in ("ws", "comment"):
            tokens.append(Token(kind, m.group(), line, pos - line_start + 1))
        pos = m.end()
    return tokens


def _parse_float(text: str) -> float:
    body = text.lstrip("+-")
    if body.lower().startswith("0x"):
        value = float.fromhex(body)
        return -value if text.startswith("-") else value
    return float(text)


class _Parser:
    def __init__(self, source: str):
        self.tokens = tokenize(source)
        self.pos = 0

    # -- token helpers --
    def peek(self, k: int = 0) -> Optional[Token]:
        idx = self.pos + k
        return self.tokens[idx] if idx < len(self.tokens) else None

    def error(self, message: str, tok: Optional[Token] = None):
        tok = tok or self.peek() or (self.tokens[-1] if self.tokens else None)
        if tok is None:
            return NirParseError(message)
        return NirParseError(message, tok.line, tok.col)

    def next(self) -> Token:
        tok = self.peek()
        if tok is None:
            raise self.error("unexpected end of input")
        self.pos += 1
        return tok

    def expect(self, kind: str, text: Optional[str] = None) -> Token:
        tok = self.next()
        if tok.kind != kind or (text is not None and tok.text != text):
            want = repr(text) if text is not None else kind
            raise self.error(f"expected {want}, found {tok.text!r}", tok)
        return tok

    def at(self, kind: str, text: Optional[str] = None, k: int = 0) -> bool:
        tok = self.peek(k)
        return (
            tok is not None
            and tok.kind == kind
            and (text is None or tok.text == text)
        )

    # -- grammar --
    def parse_program(self) -> Program:
        functions: List[Function] = []
        seen = set()
        while self.peek() is not None:
            start = self.peek()
            fn = self.parse_function()
            if fn.name in seen:
                raise self.error(
                    f"duplicate definition of function @{fn.name}", start
                )
            seen.add(fn.name)
            functions.append(fn)
        return Program(tuple(functions))

    def parse_type(self, allowed: Tuple[str, ...]) -> Type:
        tok = self.expect("ident")
        if tok.text == "arr" and "arr" in allowed:
            self.expect("punct", "<")
            elem = self.expect("ident").text
            if elem not in FLOAT_TYPES:
                raise self.error(f"bad array element type {elem!r}", tok)
            self.expect("punct", ",")
            length = self.expect("num")
            self.expect("punct", ">")
            return ArrayType(elem, int(length.text))
        if tok.text not in allowed:
            raise self.error(f"unexpected type {tok.text!r}", tok)
        return tok.text

    def parse_function(self) -> Function:
        self.expect("ident", "func")
        name = self.expect("gname").text[1:]
        self.expect("punct", "(")
        params: List[Tuple[str, Type]] = []
        self.defined = set()
        while not self.at("punct", ")"):
            if params:
                self.expect("punct", ",")
            reg = self.expect("reg")
            self.expect("punct", ":")
            ptype = self.parse_type((F32, F64, I64, "arr"))
            self.define(reg)
            params.append((reg.text[1:], ptype))
        self.expect("punct", ")")
        self.expect("arrow")
        ret_type = self.parse_type((F32, F64, I64, VOID))
        self.expect("punct", "{")
        blocks: List[Block] = []
        labels = set()
        while not self.at("punct", "}"):
            label = self.expect("ident")
            self.expect("punct", ":")
            if label.text in labels:
                raise self.error(
                    f"duplicate definition of block {label.text}", label
                )
            labels.add(label.text)
            instrs: List[Instr] = []
            while not (
                self.at("punct", "}")
                or (self.at("ident") and self.at("punct", ":", k=1))
            ):
                instrs.append(self.parse_instr())
            if not instrs:
                raise self.error(f"empty block {label.text}", label)
            blocks.append(Block(label.text, tuple(instrs)))
        self.expect("punct", "}")
        if not blocks:
            raise self.error(f"function @{name} has no blocks")
        return Function(name, tuple(params), tuple(blocks), ret_type)

    def define(self, reg: Token):
        if reg.text in self.defined:
            raise self.error(f"duplicate definition of {reg.text}", reg)
        self.defined.add(reg.text)

    def operand(self) -> Operand:
        tok = self.next()
        if tok.kind == "reg":
            return tok.text[1:]
        if tok.kind == "num":
            try:
                return int(tok.text)
            except ValueError:
                raise self.error(
                    f"float literal {tok.text} outside fconst", tok
                ) from None
        raise self.error(f"expected operand, found {tok.text!r}", tok)

    def operands(self, count: int) -> Tuple[Operand, ...]:
        ops = [self.operand()]
        for _ in range(count - 1):
            self.expect("punct", ",")
            ops.append(self.operand())
        return tuple(ops)

    def parse_instr(self) -> Instr:
        if self.at("reg") and self.at("punct", "=", k=1):
            reg = self.next()
            self.next()
            self.define(reg)
            return self.parse_defining(reg.text[1:])
        tok = self.expect("ident")
        op = tok.text
        if op == "store":
            ftype = self.parse_type(FLOAT_TYPES)
            return Instr("store", None, ftype, self.operands(3))
        if op == "br":
            return Instr("br", labels=(self.expect("ident").text,))
        if op == "brcond":
            cond = self.operand()
            self.expect("punct", ",")
            on_true = self.expect("ident").text
            self.expect("punct", ",")
            on_false = self.expect("ident").text
            return Instr(
                "brcond", operands=(cond,), labels=(on_true, on_false)
            )
        if op == "ret":
            if self.at("reg") and not self.at("punct", "=", k=1):
                return Instr("ret", operands=(self.operand(),))
            return Instr("ret")
        if op in OPCODES:
            raise self.error(f"opcode {op!r} needs a destination", tok)
        raise self.error(f"unknown opcode {op!r}", tok)

    def parse_defining(self, dest: str) -> Instr:
        tok = self.expect("ident")
        op = tok.text
        if op == "fconst":
            ftype = self.parse_type(FLOAT_TYPES)
            value = _parse_float(self.expect("num").text)
            return Instr("fconst", dest, ftype, literal=value)
        if op in FLOAT_BINOPS:
            ftype = self.parse_type(FLOAT_TYPES)
            return Instr(op, dest, ftype, self.operands(2))
        if op in CASTS:
            ftype = F64 if op == "fpext" else F32
            return Instr(op, dest, ftype, self.operands(1))
        if op == "fcall":
            name = self.expect("ident").text
            ftype = self.parse_type(FLOAT_TYPES)
            return Instr("fcall", dest, ftype, self.operands(1), attr=name)
        if op == "iconst":
            return Instr("iconst", dest, None, self.operands(1))
        if op in INT_BINOPS:
            return Instr(op, dest, None, self.operands(2))
        if op == "idx":
            return Instr("idx", dest, None, self.operands(3))
        if op == "icmp":
            pred = self.expect("ident").text
            return Instr("icmp", dest, None, self.operands(2), attr=pred)
        if op == "load":
            ftype = self.parse_type(FLOAT_TYPES)
            return Instr("load", dest, ftype, self.operands(2))
        if op == "phi":
            ftype = self.parse_type((F32, F64, I64))
            values: List[Operand] = []
            labels: List[str] = []
            while True:
                self.expect("punct", "[")
                values.append(self.operand())
                self.expect("punct", ",")
                labels.append(self.expect("ident").text)
                self.expect("punct", "]")
                if not self.at("punct", ","):
                    break
                self.next()
            return Instr("phi", dest, ftype, tuple(values), tuple(labels))
        if op in OPCODES:
            raise self.error(f"opcode {op!r} takes no destination", tok)
        raise self.error(f"unknown opcode {op!r}", tok)


def parse_text(source: str, check: bool = True) -> Program:
    """Parse NIR text; with ``check`` the result must also validate."""
    program = _Parser(source).parse_program()
    if check:
        violations = validate(program)
        if violations:
            raise NirValidationError(violations)
    return program


# --- Validation ---
def _where(fn: Function, block: Block, idx: int, instr: Instr) -> str:
    if instr.dest is not None:
        return str(InstrId(fn.name, instr.dest))
    return f"@{fn.name}:{block.label}#{idx}"


class _FunctionChecker:
    def __init__(self, fn: Function, promoted: FrozenSet[str]):
        self.fn = fn
        self.promoted = promoted
        self.violations: List[Violation] = []
        self.types: Dict[str, Type] = dict(fn.params)
        for instr in fn.definitions.values():
            rtype = instr.result_type
            if instr.dest in promoted and instr.is_promotable:
                rtype = F64
            if rtype is not None:
                self.types[instr.dest] = rtype

    def report(self, where: str, message: str, dest: Optional[str] = None):
        iid = InstrId(self.fn.name, dest) if dest is not None else None
        self.violations.append(Violation(where, message, iid))

    def run(self) -> List[Violation]:
        fn = self.fn
        if not fn.blocks:
            self.report(f"@{fn.name}", "function has no blocks")
            return self.violations
        self.check_structure()
        self.check_definitions()
        for block in fn.blocks:
            for idx, instr in enumerate(block.instrs):
                self.check_types(block, idx, instr)
        self.check_dominance()
        return self.violations

    def check_structure(self):
        labels = [b.label for b in self.fn.blocks]
        if len(set(labels)) != len(labels):
            self.report(f"@{self.fn.name}", "duplicate block labels")
        for block in self.fn.blocks:
            if not block.instrs or block.terminator is None:
                self.report(
                    f"@{self.fn.name}:{block.label}",
                    "block does not end in a terminator",
                )
            seen_body = False
            for idx, instr in enumerate(block.instrs):
                where = _where(self.fn, block, idx, instr)
                if instr.opcode not in OPCODES:
                    self.report(where, f"unknown opcode {instr.opcode}")
                if instr.is_terminator and idx != len(block.instrs) - 1:
                    self.report(where, "terminator in the middle of a block")
                if instr.opcode == "phi":
                    if seen_body:
                        self.report(
                            where, "phi after non-phi instruction", instr.dest
                        )
                else:
                    seen_body = True
                for label in instr.labels:
                    if label not in self.fn.block_map:
                        self.report(where, f"unknown block {label}")

    def check_definitions(self):
        seen = {name for name, _ in self.fn.params}
        for block in self.fn.blocks:
            for idx, instr in enumerate(block.instrs):
                if instr.dest is None:
                    continue
                if instr.dest in seen:
                    self.report(
                        _where(self.fn, block, idx, instr),
                        f"%{instr.dest} defined more than once",
                        instr.dest,
                    )
                seen.add(instr.dest)

    def operand_type(self, op: Operand) -> Optional[Type]:
        if isinstance(op, int):
            return I64
        return self.types.get(op)

    def expect_type(self, where, dest, op: Operand, want: Type, what: str):
        got = self.operand_type(op)
        if got is None:
            self.report(where, f"use of undefined {_fmt_operand(op)}", dest)
        elif got != want:
            self.report(
                where,
                f"{what} {_fmt_operand(op)} is {got}, expected {want}",
                dest,
            )

    def check_types(self, block: Block, idx: int, instr: Instr):
        where = _where(self.fn, block, idx, instr)
        op, dest, ops = instr.opcode, instr.dest, instr.operands
        ftype = instr.ftype
        if dest in self.promoted:
            if not instr.is_promotable:
                self.report(
                    where, "promoted instruction is not floating arithmetic",
                    dest,
                )
            else:
                ftype = F64
                if instr.ftype != F64:
                    self.report(
                        where,
                        f"promoted instruction declared {instr.ftype}; "
                        "rewrite it before running mixed precision",
                        dest,
                    )

        arity = {
            "fconst": 0, "fpext": 1, "fptrunc": 1, "fcall": 1, "iconst": 1,
            "idx": 3, "icmp": 2, "load": 2, "store": 3, "br": 0,
            "brcond": 1,
        }
        arity.update({k: 2 for k in FLOAT_BINOPS})
        arity.update({k: 2 for k in INT_BINOPS})
        if op in arity and len(ops) != arity[op]:
            self.report(where, f"{op} takes {arity[op]} operands", dest)
            return
        if op in ("br",) and len(instr.labels) != 1:
            self.report(where, "br takes one label")
        if op == "brcond" and len(instr.labels) != 2:
            self.report(where, "brcond takes two labels")

        if op in FLOAT_BINOPS or op in ("fconst", "fcall", "load", "store"):
            if ftype not in FLOAT_TYPES:
                self.report(where, f"{op} needs f32 or f64", dest)
                return
        if op == "fconst":
            if instr.literal is None:
                self.report(where, "fconst without a value", dest)
        elif op in FLOAT_BINOPS:
            for o in ops:
                self.expect_type(where, dest, o, ftype, "operand")
        elif op == "fpext":
            self.expect_type(where, dest, ops[0], F32, "fpext source")
        elif op == "fptrunc":
            self.expect_type(where, dest, ops[0], F64, "fptrunc source")
        elif op == "fcall":
            if instr.attr not in INTRINSICS:
                self.report(where, f"unknown intrinsic {instr.attr}", dest)
            self.expect_type(where, dest, ops[0], ftype, "argument")
        elif op == "iconst":
            if not isinstance(ops[0], int):
                self.report(where, "iconst needs an integer literal", dest)
        elif op in INT_BINOPS or op == "idx":
            for o in ops:
                self.expect_type(where, dest, o, I64, "operand")
        elif op == "icmp":
            if instr.attr not in ICMP_PREDS:
                self.report(where, f"unknown predicate {instr.attr}", dest)
            for o in ops:
                self.expect_type(where, dest, o, I64, "operand")
        elif op in ("load", "store"):
            self.check_memory(where, dest, instr, ftype)
        elif op == "brcond":
            self.expect_type(where, dest, ops[0], I1, "condition")
        elif op == "phi":
            if ftype not in (F32, F64, I64):
                self.report(where, "phi needs f32, f64 or i64", dest)
            if len(ops) != len(instr.labels) or not ops:
                self.report(where, "malformed phi", dest)
            for o in ops:
                self.expect_type(where, dest, o, ftype, "incoming value")
        elif op == "ret":
            if self.fn.ret_type == VOID:
                if ops:
                    self.report(where, "void function returns a value")
            elif len(ops) != 1:
                self.report(where, f"ret needs a {self.fn.ret_type} value")
            else:
                self.expect_type(
                    where, dest, ops[0], self.fn.ret_type, "return value"
                )

    def check_memory(self, where, dest, instr: Instr, ftype: str):
        array, index = instr.operands[0], instr.operands[1]
        atype = self.operand_type(array)
        if not isinstance(atype, ArrayType):
            self.report(
                where, f"{_fmt_operand(array)} is not an array parameter",
                dest,
            )
        elif atype.elem != ftype:
            self.report(
                where,
                f"{instr.opcode} {ftype} from {_fmt_operand(array)} "
                f"declared {atype.elem}",
                dest,
            )
        self.expect_type(where, dest, index, I64, "index")
        if instr.opcode == "store":
            self.expect_type(where, dest, instr.operands[2], ftype, "value")

    def check_dominance(self):
        fn = self.fn
        cfg = nx.DiGraph()
        cfg.add_nodes_from(b.label for b in fn.blocks)
        for block in fn.blocks:
            for succ in block.successors:
                if succ in fn.block_map:
                    cfg.add_edge(block.label, succ)
        entry = fn.blocks[0].label
        idom = nx.immediate_dominators(cfg, entry)

        def dominates(a: str, b: str) -> bool:
            while True:
                if a == b:
                    return True
                parent = idom.get(b)
                if parent is None or parent == b:
                    return False
                b = parent

        site: Dict[str, Tuple[str, int]] = {
            n: (entry, -1) for n, _ in fn.params
        }
        for block in fn.blocks:
            for idx, instr in enumerate(block.instrs):
                if instr.dest is not None:
                    site.setdefault(instr.dest, (block.label, idx))

        for block in fn.blocks:
            if block.label not in idom:
                continue  # unreachable code never runs
            preds = set(cfg.predecessors(block.label))
            for idx, instr in enumerate(block.instrs):
                where = _where(fn, block, idx, instr)
                if instr.opcode == "phi":
                    if set(instr.labels) != preds or len(instr.labels) != len(
                        preds
                    ):
                        self.report(
                            where,
                            "phi needs one incoming value per predecessor",
                            instr.dest,
                        )
                    for value, pred in zip(instr.operands, instr.labels):
                        if not isinstance(value, str) or value not in site:
                            continue
                        def_block, _ = site[value]
                        if pred in idom and not dominates(def_block, pred):
                            self.report(
                                where,
                                f"incoming %{value} does not dominate {pred}",
                                instr.dest,
                            )
                    continue
                for value in instr.uses:
                    if value not in site:
                        continue  # reported by the type checks
                    def_block, def_idx = site[value]
                    ok = (
                        def_idx < idx
                        if def_block == block.label
                        else def_block in idom
                        and dominates(def_block, block.label)
                    )
                    if not ok:
                        self.report(
                            where,
                            f"use of %{value} is not dominated by its "
                            "definition",
                            instr.dest,
                        )


def validate(
    p: Program, assignment: Optional[PrecisionAssignment] = None
) -> List[Violation]:
    """Check types, SSA and dominance; an empty list means valid.

    With a MIXED assignment the promoted instructions are checked as F64
    operations, so a program that was not rewritten fails on its operands.
    """
    violations: List[Violation] = []
    if not p.functions:
        return [Violation("<program>", "program has no functions")]
    names = [f.name for f in p.functions]
    if len(set(names)) != len(names):
        violations.append(Violation("<program>", "duplicate function names"))

    promoted_by_fn: Dict[str, set] = {}
    if assignment is not None and assignment.mode is PrecisionMode.MIXED:
        for iid in assignment.promoted:
            instr = p.instr(iid)
            if instr is None:
                violations.append(
                    Violation(str(iid), "promoted instruction not found", iid)
                )
            elif not instr.is_promotable:
                violations.append(
                    Violation(
                        str(iid),
                        "promoted instruction is not floating arithmetic",
                        iid,
                    )
                )
            else:
                promoted_by_fn.setdefault(iid.function, set()).add(iid.dest)

    for fn in p.functions:
        promoted = frozenset(promoted_by_fn.get(fn.name, ()))
        violations.extend(_FunctionChecker(fn, promoted).run())
    return violations


# --- Data Flow ---
def def_use_graph(p: Program) -> nx.DiGraph:
    """Static data-flow graph over floating instructions.

    Nodes are the InstrIds of every instruction producing an F32/F64 value;
    an edge A -> B means B reads the value A defines (phi inputs included).
    Loads have no floating producers and stores define nothing, so memory
    is the graph boundary.
    """
    g = nx.DiGraph()
    for fn in p.functions:
        floating = {
            dest
            for dest, instr in fn.definitions.items()
            if instr.result_type in FLOAT_TYPES
        }
        for block in fn.blocks:
            for instr in block.instrs:
                if instr.dest not in floating:
                    continue
                node = InstrId(fn.name, instr.dest)
                g.add_node(
                    node,
                    opcode=instr.opcode,
                    kind=instr.kind,
                    ftype=instr.result_type,
                    block=block.label,
                )
                for value in instr.uses:
                    if value in floating:
                        g.add_edge(InstrId(fn.name, value), node)
    return g
