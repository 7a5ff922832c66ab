import numpy as np
import pytest

from bench import SplitMix64, bench_case
from interp import ExecInput
from manifest import ManifestError, load_manifest, write_manifest


def test_write_then_load(tmp_path):
    case = bench_case("lu", 4, seed=3)
    path = write_manifest(tmp_path / "lu4.manifest", case.train, case.program)
    assert (tmp_path / "lu4.A.dat").exists()
    loaded = load_manifest(path)
    assert loaded.step_limit == case.train.step_limit
    np.testing.assert_array_equal(loaded.arrays["A"], case.train.arrays["A"])
    assert loaded.arrays["A"].dtype == np.float32


def test_generated_arrays_and_scalars(tmp_path):
    path = tmp_path / "gen.manifest"
    path.write_text(
        "# generated inputs\n"
        "step_limit = 5000\n"
        "array name=X elem=f32 length=6 gen=uniform low=-2 high=2 seed=9\n"
        "array name=F elem=f64 length=3 gen=zeros\n"
        "scalar name=n type=i64 value=4\n"
        "scalar name=tiny type=f32 value=2^-20\n"
    )
    exec_input = load_manifest(path)
    assert exec_input.step_limit == 5000
    np.testing.assert_array_equal(
        exec_input.arrays["X"], SplitMix64(9).uniform(-2.0, 2.0, 6)
    )
    assert exec_input.arrays["F"].dtype == np.float64
    assert exec_input.scalars == {"n": 4, "tiny": 2.0**-20}


def test_scalars_keep_their_types(tmp_path):
    exec_input = ExecInput(scalars={"n": 3, "x": np.float32(0.1)})
    loaded = load_manifest(write_manifest(tmp_path / "s.manifest", exec_input))
    assert loaded.scalars["n"] == 3
    assert loaded.scalars["x"] == float(np.float32(0.1))


@pytest.mark.parametrize(
    "text, message",
    [
        ("array name=A length=2 data=missing.dat\n", "missing.dat"),
        ("array name=A length=3 gen=zeros extra\n", "key=value"),
        ("array name=A gen=zeros\n", "length"),
        ("array name=A length=2\n", "data= or gen="),
        ("colour = blue\n", "unknown setting"),
        ("nonsense\n", "cannot parse"),
    ],
)
def test_bad_manifests(tmp_path, text, message):
    path = tmp_path / "bad.manifest"
    path.write_text(text)
    with pytest.raises(ManifestError, match=message):
        load_manifest(path)


def test_length_mismatch(tmp_path):
    (tmp_path / "a.dat").write_text("1.0\n2.0\n")
    path = tmp_path / "m.manifest"
    path.write_text("array name=A length=3 data=a.dat\n")
    with pytest.raises(ManifestError, match="declared 3"):
        load_manifest(path)


def test_missing_manifest(tmp_path):
    with pytest.raises(ManifestError, match="cannot read"):
        load_manifest(tmp_path / "nope.manifest")
