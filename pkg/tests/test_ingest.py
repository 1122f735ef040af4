import pytest

from swiftnorm.ingest import EntityRecord, MalformedField, parse_mt_block4, parse_plain, read_records


def test_plain_single_line():
    recs = parse_plain(["JOHN SMITH 10 MAIN ST"])
    assert recs == [EntityRecord("JOHN SMITH 10 MAIN ST", "", None, 0)]


def test_plain_skips_blank_lines_and_keeps_indices():
    assert parse_plain(["", "  "]) == []
    recs = parse_plain(["A", "", "B"])
    assert [(r.raw_text, r.line_index) for r in recs] == [("A", 0), ("B", 2)]


def test_mt_joins_continuation_lines_and_keeps_account():
    recs = parse_mt_block4(":50K:/12345678\nJOHN SMITH\n10 MAIN ST", {"50K"})
    assert len(recs) == 1
    assert recs[0].raw_text == "/12345678 JOHN SMITH 10 MAIN ST"
    assert recs[0].tag == "50K"


def test_mt_tag_filter():
    recs = parse_mt_block4(":20:REF123\n:59:ACME LTD", {"59"})
    assert [r.raw_text for r in recs] == ["ACME LTD"]


def test_mt_no_wanted_tags():
    assert parse_mt_block4(":20:REF123\n:23B:CRED", {"59"}) == []


def test_mt_counts_every_occurrence():
    text = ":59:ONE\n:59:TWO\nCONT\n:50K:THREE\n:20:X"
    recs = parse_mt_block4(text, {"59", "50K"})
    assert [r.raw_text for r in recs] == ["ONE", "TWO CONT", "THREE"]
    assert [r.line_index for r in recs] == [0, 1, 3]


def test_mt_malformed_field_reported_and_skipped():
    errors = []
    text = ":59:GOOD\n:5X:BROKEN\nSTILL BROKEN\n:59:AFTER"
    recs = parse_mt_block4(text, {"59"}, errors=errors)
    assert [r.raw_text for r in recs] == ["GOOD", "AFTER"]
    assert len(errors) == 1 and errors[0].line_number == 1
    assert isinstance(errors[0], MalformedField)


def test_mt_block4_envelope():
    text = ("{1:F01BANKXXXXAXXX0000000000}{2:I103BANKYYYYXXXXN}{4:\n"
            ":20:REF\n:50K:/1\nJANE DOE\n-}{5:{CHK:123}}\n"
            "{1:F01BANKXXXXAXXX0000000000}{4:\n:59:ACME\nLTD\n-}")
    recs = parse_mt_block4(text, {"50K", "59"})
    assert [r.raw_text for r in recs] == ["/1 JANE DOE", "ACME LTD"]


def test_read_records_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError, match="nope.txt"):
        read_records([tmp_path / "nope.txt"])


def test_read_records_formats(tmp_path):
    plain = tmp_path / "a.txt"
    plain.write_text("X\n\nY\n", encoding="utf-8")
    assert [r.raw_text for r in read_records([plain])] == ["X", "Y"]
    mt = tmp_path / "a.mt"
    mt.write_text(":59:ACME\n", encoding="utf-8")
    assert [r.tag for r in read_records([mt], "mt")] == ["59"]
    with pytest.raises(ValueError):
        read_records([plain], "xml")
