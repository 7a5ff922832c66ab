import pytest

from bench import lu_text, quad_text
from conftest import CANCEL_TEXT
from nir import (
    F64,
    InstrId,
    NirParseError,
    NirValidationError,
    PrecisionAssignment,
    def_use_graph,
    parse_text,
    validate,
)

BRANCH_USE = """\
func @f(%A: arr<f32,1>, %n: i64) -> void {
entry:
  %c = icmp lt %n, 1
  brcond %c, left, join
left:
  %x = load f32 %A, 0
  br join
join:
  store f32 %A, 0, %x
  ret
}
"""


@pytest.mark.parametrize("text", [lu_text(4), quad_text(5), CANCEL_TEXT])
def test_print_parse_is_stable(text):
    p = parse_text(text)
    again = parse_text(p.text())
    assert again.text() == p.text()
    assert again.fingerprint() == p.fingerprint()


def test_instr_ids_and_promotable():
    p = parse_text(lu_text(3))
    assert p.entry == "lu"
    assert set(p.promotable_ids()) == {
        InstrId("lu", "l"),
        InstrId("lu", "prod"),
        InstrId("lu", "diff"),
    }
    assert str(InstrId("lu", "l")) == "@lu:%l"
    assert p.instr(InstrId("lu", "prod")).opcode == "fmul"
    assert p.instr(InstrId("lu", "missing")) is None


def test_sizes_share_instr_ids():
    small, large = parse_text(lu_text(4)), parse_text(lu_text(9))
    assert small.promotable_ids() == large.promotable_ids()
    assert small.fingerprint() != large.fingerprint()


def test_hex_float_literal():
    p = parse_text(
        "func @c() -> f32 {\nentry:\n  %x = fconst f32 0x1.8p1\n  ret %x\n}\n"
    )
    assert p.instr(InstrId("c", "x")).literal == 3.0


@pytest.mark.parametrize(
    "body, message",
    [
        ("  %x = fconst f32 1.0\n  %x = fconst f32 2.0\n", "duplicate"),
        ("  %x = fconst f32 1.0\n  %y = fadd f32 %x, 1.5\n", "outside fconst"),
        ("  %x = frobnicate f32 1.0\n", "unknown opcode"),
    ],
)
def test_parse_errors(body, message):
    text = f"func @f() -> void {{\nentry:\n{body}  ret\n}}\n"
    with pytest.raises(NirParseError, match=message) as info:
        parse_text(text)
    assert info.value.line > 0


def test_duplicate_function():
    text = "func @f() -> void {\nentry:\n  ret\n}\n" * 2
    with pytest.raises(NirParseError, match="duplicate definition"):
        parse_text(text)


def test_use_not_dominated():
    p = parse_text(BRANCH_USE, check=False)
    violations = validate(p)
    assert any("not dominated" in v.message for v in violations)
    with pytest.raises(NirValidationError):
        parse_text(BRANCH_USE)


def test_operand_type_mismatch():
    text = (
        "func @f(%A: arr<f32,1>) -> void {\nentry:\n"
        "  %x = load f32 %A, 0\n"
        "  %y = fpext %x\n"
        "  %z = fadd f32 %x, %y\n"
        "  ret\n}\n"
    )
    violations = validate(parse_text(text, check=False))
    assert len(violations) == 1
    assert "is f64, expected f32" in violations[0].message
    assert violations[0].iid == InstrId("f", "z")


def test_phi_needs_every_predecessor():
    text = (
        "func @f(%n: i64) -> i64 {\nentry:\n"
        "  %c = icmp lt %n, 1\n"
        "  brcond %c, a, b\n"
        "a:\n  br join\n"
        "b:\n  br join\n"
        "join:\n  %v = phi i64 [1, a]\n  ret %v\n}\n"
    )
    violations = validate(parse_text(text, check=False))
    assert any("per predecessor" in v.message for v in violations)


def test_store_into_wrong_precision():
    text = (
        "func @f(%A: arr<f32,1>) -> void {\nentry:\n"
        "  %x = fconst f64 1.0\n"
        "  store f64 %A, 0, %x\n"
        "  ret\n}\n"
    )
    violations = validate(parse_text(text, check=False))
    assert any("declared f32" in v.message for v in violations)


def test_mixed_assignment_needs_rewritten_program(cancel_program):
    promoted = [InstrId("cancel", "r3")]
    violations = validate(cancel_program, PrecisionAssignment.mixed(promoted))
    assert any(v.iid == InstrId("cancel", "r3") for v in violations)
    assert validate(cancel_program, PrecisionAssignment.uniform(F64)) == []


def test_def_use_graph(cancel_program):
    g = def_use_graph(cancel_program)
    cancel = lambda d: InstrId("cancel", d)  # noqa: E731
    assert set(g.nodes) == {cancel(r) for r in ("r1", "r2", "r3", "r4")}
    assert set(g.edges) == {
        (cancel("r1"), cancel("r3")),
        (cancel("r2"), cancel("r3")),
        (cancel("r1"), cancel("r4")),
        (cancel("r3"), cancel("r4")),
    }
    assert g.nodes[cancel("r3")]["kind"] == "fmul"


def test_def_use_graph_through_phi():
    g = def_use_graph(parse_text(quad_text(4)))
    quad = lambda d: InstrId("quad", d)  # noqa: E731
    assert g.has_edge(quad("sum"), quad("acc"))
    assert g.has_edge(quad("acc"), quad("sum"))
    assert g.nodes[quad("s")]["kind"] == "fcall.sin"
