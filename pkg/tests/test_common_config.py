import pytest

from common_config import AmpError, load_kv_config, parse_number


@pytest.mark.parametrize(
    "text, value",
    [("25", 25.0), (" 1e-3 ", 1e-3), ("2^10", 1024.0), ("2^-126", 2.0**-126)],
)
def test_parse_number(text, value):
    assert parse_number(text) == value


def test_parse_number_rejects_words():
    with pytest.raises(ValueError):
        parse_number("many")


def test_load_kv_config(tmp_path):
    path = tmp_path / "grid.cfg"
    path.write_text("# comment\n\nt1 = 1, 5  # trailing\nt2=3\n")
    assert load_kv_config(path) == {"t1": "1, 5", "t2": "3"}
    path.write_text("t1 1\n")
    with pytest.raises(AmpError, match="grid.cfg:1"):
        load_kv_config(path)
