import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dyngrid import io as dio
from dyngrid.keyvalue import ConfigError, dump, parse, parse_bool


def test_parse_sections_and_comments():
    secs = parse("a = 1\n# note\n[x]\nk = v  # trailing\n\n[y.2]\nq=  spaced value \n")
    names = [s.name for s in secs]
    assert names == ["", "x", "y.2"]
    assert secs[1].values["k"] == ("v", 4)
    assert secs[2].values["q"][0] == "spaced value"


@pytest.mark.parametrize("text,line", [
    ("[x]\n[x]\n", 2),
    ("[x]\nk = 1\nk = 2\n", 3),
    ("[x\n", 1),
    ("[x]\njust words\n", 2),
    ("[x]\n1bad = 3\n", 2),
])
def test_parse_errors_carry_line(text, line):
    with pytest.raises(ConfigError) as err:
        parse(text, "f.cfg")
    assert err.value.line == line
    assert str(err.value).startswith(f"f.cfg:{line}:")


def test_parse_bool():
    assert parse_bool("Yes") and not parse_bool("off")
    with pytest.raises(ValueError):
        parse_bool("maybe")


keys = st.from_regex(r"[a-z_][a-z0-9_]{0,8}", fullmatch=True)
vals = st.from_regex(r"[A-Za-z0-9.;\- ]{0,12}", fullmatch=True).map(str.strip)


@given(st.dictionaries(keys, st.dictionaries(keys, vals, max_size=5), min_size=1, max_size=4))
def test_dump_parse_round_trip(data):
    text = dump([(name, list(kv.items())) for name, kv in data.items()])
    back = {s.name: {k: v for k, (v, _) in s.values.items()} for s in parse(text) if s.name}
    assert back == {k: v for k, v in data.items()}


def test_fmt_nine_digits():
    assert dio.fmt(1 / 3) == "0.333333333"
    assert dio.fmt(3) == "3"
    assert dio.fmt(True) == "1"


def test_csv_round_trip(tmp_path):
    dio.write_csv(tmp_path / "a.csv", ["x", "y"], [(1, 0.5), (2, 1 / 3)], seed=4, scenario_hash="abc")
    comment, cols, rows = dio.read_csv(tmp_path / "a.csv")
    assert comment.startswith("# ") and "seed=4" in comment and "scenario=abc" in comment
    assert cols == ["x", "y"] and rows == [["1", "0.5"], ["2", "0.333333333"]]


def test_pgm_round_trip(tmp_path):
    img = np.array([[0, 128], [255, 7]], dtype=np.uint8)
    dio.write_pgm(tmp_path / "a.pgm", img, "seed=1")
    assert np.array_equal(dio.read_pgm(tmp_path / "a.pgm"), img)


def test_gray_rounding():
    assert dio.probability_to_gray(np.array([0.0, 0.5, 1.0])).tolist() == [0, 128, 255]
