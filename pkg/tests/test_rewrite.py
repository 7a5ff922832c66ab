import networkx as nx
import numpy as np
import pytest

from bench import MatrixInput, gen_matrix, lu_program, quad_input, quad_program
from classify import ThresholdVector, classify
from interp import ExecInput, run
from nir import (
    F32,
    F64,
    InstrId,
    PrecisionAssignment,
    def_use_graph,
    parse_text,
)
from profiler import profile
from rewrite import (
    InstructionChangeSet,
    RewriteError,
    backward_slice,
    compute_ics,
    rewrite,
)

CANCEL_VECTOR = ThresholdVector(
    t1=10, t2=25, t3=10, t4=16, t5=4, t6=2.0**110, t7=2.0**-126
)


def cancel(dest):
    return InstrId("cancel", dest)


def quad(dest):
    return InstrId("quad", dest)


def lu(dest):
    return InstrId("lu", dest)


def casts(p):
    return [
        i
        for _, _, i in p.instructions()
        if i.opcode in ("fpext", "fptrunc")
    ]


def test_cascade_pulls_in_the_slice(cancel_program, cancel_input):
    prof, _, _ = profile(cancel_program, cancel_input)
    cl = classify(prof, CANCEL_VECTOR)
    ics = compute_ics(cl, def_use_graph(cancel_program))
    assert list(ics) == [cancel("r3"), cancel("r4")]


def test_rewritten_cancellation_recovers_double(cancel_program, cancel_input):
    ics = InstructionChangeSet.of([cancel("r4"), cancel("r3")])
    mixed = rewrite(cancel_program, ics)
    text = mixed.text()
    assert "%r1.f64 = fpext %r1" in text
    assert "%r3 = fmul f64 %r1.f64, %r2.f64" in text
    assert "%r4 = fsub f64 %r1.f64, %r3" in text
    assert "store f32 %B, 0, %r4.f32" in text
    assert len(casts(mixed)) == 3

    out = run(mixed, cancel_input, ics.assignment())
    double = run(
        cancel_program, cancel_input, PrecisionAssignment.uniform(F64)
    )
    assert out.arrays["B"].dtype == np.float32
    assert float(out.arrays["B"][0]) == float(double.arrays["B"][0])


def test_rewrite_is_parseable(cancel_program):
    mixed = rewrite(cancel_program, InstructionChangeSet.of([cancel("r3")]))
    again = parse_text(mixed.text())
    assert again.text() == mixed.text()


def test_quad_accumulator_slice():
    p = quad_program(5)
    g = def_use_graph(p)
    assert backward_slice(quad("sum"), g) == {
        quad("sum"),
        quad("t"),
        quad("p"),
    }
    assert backward_slice(quad("sum"), g, benign=[quad("t")]) == {quad("sum")}


def test_promoting_through_phi():
    p = quad_program(5)
    ics = InstructionChangeSet.of([quad("sum")])
    mixed = rewrite(p, ics)
    fn = mixed.function("quad")
    loop = fn.block_map["loop"]
    # Casts of phi results go after the phi group.
    opcodes = [i.opcode for i in loop.instrs]
    assert opcodes[:3] == ["phi", "phi", "fpext"]
    assert fn.definitions["acc"].operands == ("zero", "sum.f32")
    out = run(mixed, quad_input(5), ics.assignment())
    assert isinstance(out.ret, np.float32)


def test_ics_transfers_across_sizes():
    ics = InstructionChangeSet.of([lu("diff"), lu("prod")])
    for n in (3, 6):
        mixed = rewrite(lu_program(n), ics)
        out = run(mixed, gen_matrix(MatrixInput(n)), ics.assignment())
        assert out.arrays["A"].dtype == np.float32


def test_full_promotion_runs_in_double():
    n = 6
    p, exec_input = lu_program(n), gen_matrix(MatrixInput(n))
    ics = InstructionChangeSet.of(p.promotable_ids())
    out = run(rewrite(p, ics), exec_input, ics.assignment())
    single = run(p, exec_input, PrecisionAssignment.uniform(F32))
    # Everything promoted but memory: each store still rounds to f32.
    assert out.op_counts.get("fsub.f32", 0) == 0
    assert out.op_counts["fsub.f64"] == single.op_counts["fsub.f32"]


def test_empty_ics_is_identity(cancel_program):
    assert rewrite(cancel_program, InstructionChangeSet()) is cancel_program


@pytest.mark.parametrize(
    "iid, message",
    [
        (cancel("r1"), "cannot be promoted"),
        (cancel("nope"), "no such instruction"),
    ],
)
def test_rewrite_rejects(cancel_program, iid, message):
    with pytest.raises(RewriteError, match=message):
        rewrite(cancel_program, InstructionChangeSet.of([iid]))


def test_ics_identity_and_files(tmp_path):
    a = InstructionChangeSet.of([lu("prod"), lu("diff"), lu("prod")])
    b = InstructionChangeSet.of([lu("diff"), lu("prod")])
    assert a == b and hash(a) == hash(b)
    assert a.ics_id == b.ics_id
    assert a.ics_id != InstructionChangeSet.of([lu("diff")]).ics_id
    assert lu("diff") in a and len(a) == 2

    path = a.save(tmp_path / "ics.json")
    assert InstructionChangeSet.load(path) == a
    with pytest.raises(RewriteError, match="malformed"):
        InstructionChangeSet.from_document({"promoted": [{"dest": "x"}]})


def test_promotion_path_gives_the_cascade_ics(cancel_program, cancel_input):
    prof, _, _ = profile(cancel_program, cancel_input)
    g = def_use_graph(cancel_program)
    cascade = compute_ics(classify(prof, CANCEL_VECTOR), g)

    # No cancellation trigger; round-off catches r3, the tiny result r4.
    promoting = CANCEL_VECTOR.with_(t2=1e-5, t5=23, t7=2.0**-20)
    cl = classify(prof, promoting)
    assert cl.cancellation == frozenset()
    assert cl.promotion == {cancel("r3"), cancel("r4")}
    single = compute_ics(cl, g)

    assert single == cascade
    assert (
        rewrite(cancel_program, single).text()
        == rewrite(cancel_program, cascade).text()
    )


def test_promoting_cancellation_alone_keeps_cancelled_bits(
    cancel_program, cancel_input
):
    mixed = rewrite(cancel_program, InstructionChangeSet.of([cancel("r4")]))
    prof, _, _ = profile(mixed, cancel_input)
    assert prof.entries[cancel("r4")].max_cancel == 23


def diamond():
    g = nx.DiGraph()
    for name in "abcd":
        g.add_node(InstrId("f", name), opcode="fadd")
    for src, dst in ("ab", "ac", "bd", "cd"):
        g.add_edge(InstrId("f", src), InstrId("f", dst))
    return g


def test_slice_around_benign_branch():
    g = diamond()
    d = InstrId("f", "d")
    assert backward_slice(d, g) == {InstrId("f", n) for n in "abcd"}
    # b is excluded, a is still reached through c.
    assert backward_slice(d, g, benign=[InstrId("f", "b")]) == {
        InstrId("f", "a"),
        InstrId("f", "c"),
        d,
    }


def test_slice_of_seed_fed_by_loads(cancel_program):
    g = def_use_graph(cancel_program)
    assert backward_slice(cancel("r3"), g) == {cancel("r3")}


EXT_TEXT = """\
func @ext(%A: arr<f32,2>, %B: arr<f64,1>) -> void {
entry:
  %a = load f32 %A, 0
  %b = load f32 %A, 1
  %s = fadd f32 %a, %b
  %w = fpext %s
  %d = fmul f64 %w, %w
  store f64 %B, 0, %d
  ret
}
"""


def vacuous_casts(p):
    defs = {i.dest: i for _, _, i in p.instructions() if i.dest}
    pairs = []
    for _, _, instr in p.instructions():
        if instr.opcode not in ("fpext", "fptrunc"):
            continue
        src = defs.get(instr.operands[0])
        if src is not None and src.opcode in ("fpext", "fptrunc"):
            pairs.append((src.dest, instr.dest))
    return pairs


def test_existing_extension_of_promoted_value_is_folded():
    p = parse_text(EXT_TEXT)
    ics = InstructionChangeSet.of([InstrId("ext", "s")])
    mixed = rewrite(p, ics)
    text = mixed.text()
    assert "%s = fadd f64 %a.f64, %b.f64" in text
    assert "%d = fmul f64 %s, %s" in text
    assert "fptrunc" not in text
    assert "%w" not in text
    assert vacuous_casts(mixed) == []

    exec_input = ExecInput(
        arrays={
            "A": np.array([1.5, 2.0**-30], dtype=np.float32),
            "B": np.zeros(1),
        }
    )
    out = run(mixed, exec_input, ics.assignment())
    double = run(p, exec_input, PrecisionAssignment.uniform(F64))
    assert out.arrays["B"][0] == double.arrays["B"][0]


def test_casts_are_minimal_under_full_promotion():
    p = quad_program(5)
    ics = InstructionChangeSet.of(p.promotable_ids())
    mixed = rewrite(p, ics)
    assert vacuous_casts(mixed) == []
    ops = [i for _, _, i in mixed.instructions()]
    # One extension per f32 producer read by promoted code: x, w, acc.
    assert sorted(i.operands[0] for i in ops if i.opcode == "fpext") == [
        "acc",
        "w",
        "x",
    ]
    # One truncation per promoted value with an f32 consumer: t, sum.
    assert sorted(i.operands[0] for i in ops if i.opcode == "fptrunc") == [
        "sum",
        "t",
    ]
    stores = [i for i in ops if i.opcode == "store"]
    assert [s.operands[2] for s in stores] == ["t.f32"]
