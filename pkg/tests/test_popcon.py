import io

import pytest

from dedupchain.harness.popcon import (PopconParseError, PopconRecord, format_by_inst,
                                       format_sizes, parse_by_inst, parse_popcon, parse_sizes,
                                       synthetic_dataset)

LISTING = """\
#Format
#rank name inst vote old recent no-files (maintainer)
1     foo   1200   800  100    300        0 (Foo Team)
2     bar     10     5    3      2        0 (Bar Team)
--------------------------------------------------------
Total         1210   805  103    302        0
"""


def test_example_line():
    recs = parse_popcon(LISTING, {"foo": 4096, "bar": 1})
    assert recs[0] == PopconRecord(1, "foo", 1200, 800, 100, 300, 0, 4096)
    assert [r.package for r in recs] == ["foo", "bar"]


def test_comments_and_totals_skipped():
    assert len(parse_by_inst(io.StringIO(LISTING))) == 2


def test_missing_size_names_package():
    with pytest.raises(KeyError, match="bar"):
        parse_popcon(LISTING, {"foo": 1})


@pytest.mark.parametrize("line,no,match", [
    ("1 foo 12 3", 1, "expected 7 fields"),
    ("1 foo x 1 1 1 0", 1, "inst"),
    ("1 foo 0 0 0 0 0", 1, "no installations"),
])
def test_malformed_lines(line, no, match):
    with pytest.raises(PopconParseError, match=match) as info:
        parse_by_inst(line + "\n")
    assert info.value.line_no == no


def test_error_line_number_counts_comments():
    with pytest.raises(PopconParseError) as info:
        parse_by_inst("#c\n1 foo 1 1 0 0 0\n2 bar\n")
    assert info.value.line_no == 3


def test_size_table():
    assert parse_sizes("# name bytes\nfoo 10\nbar 2\n") == {"foo": 10, "bar": 2}
    with pytest.raises(PopconParseError):
        parse_sizes("foo\n")
    with pytest.raises(PopconParseError):
        parse_sizes("foo 0\n")


def test_empty_dataset():
    with pytest.raises(ValueError):
        parse_popcon("#only comments\n", {})


@pytest.mark.parametrize("packages,requests", [(403, 270_738), (10, 200), (1, 1)])
def test_synthetic_totals(packages, requests):
    data = synthetic_dataset(packages, requests, seed=1)
    assert len(data) == packages
    assert sum(r.inst for r in data) == requests
    assert all(r.inst >= 1 and r.size_bytes >= 1 for r in data)
    assert [r.inst for r in data] == sorted((r.inst for r in data), reverse=True)


def test_synthetic_is_seeded():
    assert synthetic_dataset(20, 500, seed=9) == synthetic_dataset(20, 500, seed=9)
    assert synthetic_dataset(20, 500, seed=9) != synthetic_dataset(20, 500, seed=8)
    with pytest.raises(ValueError):
        synthetic_dataset(5, 4)


def test_format_round_trip():
    data = synthetic_dataset(15, 300, seed=2)
    again = parse_popcon(format_by_inst(data), format_sizes(data))
    assert again == data
