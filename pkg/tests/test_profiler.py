import math

import pytest

from bench import MatrixInput, gen_matrix, lu_program, quad_input, quad_program
from common_config import AmpError
from fpkernel import ERRRATIO_MIN
from interp import run
from nir import InstrId
from profiler import (
    NumericalProfile,
    ProfileEntry,
    annotate,
    measure_overhead,
    profile,
    profile_inputs,
)


def cancel(dest):
    return InstrId("cancel", dest)


def test_cancellation_profile(cancel_program, cancel_input):
    prof, _, out = profile(cancel_program, cancel_input)
    assert set(prof.entries) == {cancel("r3"), cancel("r4")}
    assert prof.program_hash == cancel_program.fingerprint()

    r3 = prof.entries[cancel("r3")]
    assert (r3.total, r3.exact) == (1, 0)
    assert r3.errratio_hist[-23 - ERRRATIO_MIN] == 1
    assert r3.expdiff_hist.sum() == 0
    assert r3.max_abs == 1.0

    r4 = prof.entries[cancel("r4")]
    assert (r4.total, r4.exact) == (1, 1)
    assert r4.all_exact
    assert r4.max_cancel == 23
    assert r4.expdiff_hist[0] == 1
    assert r4.min_abs_nonzero == 2.0**-23
    assert out.arrays["B"][0] == 2.0**-23


def test_profiling_does_not_change_results():
    p = lu_program(5)
    exec_input = gen_matrix(MatrixInput(5))
    _, _, profiled = profile(p, exec_input)
    assert profiled.digest() == run(p, exec_input).digest()


def test_totals_match_dynamic_counts():
    p = lu_program(4)
    prof, _, out = profile(p, gen_matrix(MatrixInput(4)))
    assert prof.entries[InstrId("lu", "l")].total == out.op_counts["fdiv.f32"]
    assert prof.entries[InstrId("lu", "diff")].total == out.op_counts[
        "fsub.f32"
    ]


def profiles_by_size(sizes):
    return [
        profile(lu_program(n), gen_matrix(MatrixInput(n, seed=n)))[0]
        for n in sizes
    ]


def check_static_size(profiles):
    instances = [sum(e.total for e in p.entries.values()) for p in profiles]
    assert instances == sorted(set(instances))
    assert {len(p) for p in profiles} == {3}
    assert len({tuple(sorted(p.entries)) for p in profiles}) == 1
    # Only the digits of counts and extrema change with the input.
    sizes = [len(p.dumps()) for p in profiles]
    assert max(sizes) <= 1.05 * min(sizes)


def test_profile_size_is_static():
    check_static_size(profiles_by_size([4, 6, 8]))


@pytest.mark.slow
def test_profile_size_is_static_at_scale():
    check_static_size(profiles_by_size([50, 75, 100]))


def test_save_and_load(tmp_path, cancel_program, cancel_input):
    prof, _, _ = profile(cancel_program, cancel_input)
    path = prof.save(tmp_path / "cancel.profile.json")
    loaded = NumericalProfile.load(path)
    assert loaded == prof
    assert math.isinf(
        NumericalProfile.for_program(cancel_program)
        .entries[cancel("r3")]
        .min_abs_nonzero
    )


def test_load_rejects_garbage(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    with pytest.raises(AmpError, match="cannot read profile"):
        NumericalProfile.load(path)
    with pytest.raises(AmpError, match="program_hash"):
        NumericalProfile.from_document({"entries": []})
    doc = ProfileEntry("f", "x", "fadd").to_document()
    doc["errratio_hist"] = [0, 1]
    with pytest.raises(AmpError, match="buckets"):
        ProfileEntry.from_document(doc)


def test_merge_adds_counts(cancel_program, cancel_input):
    prof, _, _ = profile(cancel_program, cancel_input)
    merged = profile_inputs(cancel_program, [cancel_input, cancel_input])
    assert merged.entries[cancel("r4")].total == 2
    assert merged.entries[cancel("r4")].max_cancel == 23
    assert merged == prof.merge(prof)

    foreign = NumericalProfile("0" * 64)
    with pytest.raises(AmpError, match="different programs"):
        prof.merge(foreign)


def test_shares():
    entry = ProfileEntry("f", "x", "fadd", total=4, exact=1)
    entry.errratio_hist[-1 - ERRRATIO_MIN] = 1
    entry.errratio_hist[-10 - ERRRATIO_MIN] = 2
    entry.expdiff_hist[3] = 1
    entry.expdiff_hist[30] = 3
    assert entry.roundoff_share(-1) == 25.0
    assert entry.roundoff_share(-10) == 75.0
    assert entry.expdiff_share(3) == 75.0
    assert entry.expdiff_share(2) == 100.0
    assert ProfileEntry("f", "y", "fmul").roundoff_share(-5) == 0.0


def test_annotated_ddfg(cancel_program, cancel_input):
    prof, ddfg, _ = profile(cancel_program, cancel_input)
    assert ddfg.entry(cancel("r4")) is prof.entries[cancel("r4")]
    assert ddfg.entry(cancel("r1")) is None
    dot = ddfg.to_dot("cancel")
    assert dot.startswith("digraph cancel {")
    assert '"cancel:r1" -> "cancel:r3";' in dot
    assert "cancel=23,exact=1/1" in dot
    bold = [line for line in dot.splitlines() if "style=bold" in line]
    assert len(bold) == 1 and '"cancel:r4"' in bold[0]
    assert annotate(cancel_program, prof).graph.number_of_edges() == 4


def test_quad_profile_covers_intrinsics():
    prof, _, _ = profile(quad_program(6), quad_input(6))
    kinds = {e.opcode for e in prof.entries.values()}
    assert kinds == {"fcall.sin", "fcall.exp", "fmul", "fadd"}
    assert all(e.total == 6 for e in prof.entries.values())


def test_summary_frame(cancel_program, cancel_input):
    prof, _, _ = profile(cancel_program, cancel_input)
    frame = prof.summary_frame()
    assert list(frame["instr"]) == ["@cancel:%r3", "@cancel:%r4"]
    assert list(frame["max_cancel"]) == [0, 23]


def test_measure_overhead(cancel_program, cancel_input):
    report = measure_overhead(cancel_program, cancel_input, "cancel")
    assert report.dynamic_steps == 6
    assert report.profile_bytes > 0
    assert report.as_row()["benchmark"] == "cancel"
    assert report.ratio > 0
