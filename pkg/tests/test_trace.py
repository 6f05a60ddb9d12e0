"""JSON-lines trace encoding and the verifier-facing index."""

import pytest

from qnetkernel.errors import ParseError
from qnetkernel.scenario import build_run, bundled_scenario
from qnetkernel.trace import dump_jsonl, index_trace, parse_jsonl


def test_round_trip_preserves_records():
    run = build_run(bundled_scenario("teleport_ayb"))
    run.run_until_quiescent()
    text = dump_jsonl(run.trace)
    assert parse_jsonl(text) == run.trace


def test_dump_is_one_compact_object_per_line():
    text = dump_jsonl([{"b": 1, "a": 2}])
    assert text == '{"a":2,"b":1}\n'


def test_parse_skips_blank_lines():
    assert parse_jsonl('\n{"x":1}\n\n{"y":2}\n') == [{"x": 1}, {"y": 2}]


def test_parse_rejects_bad_json_with_line_number():
    with pytest.raises(ParseError, match="line 2"):
        parse_jsonl('{"ok":1}\n{broken\n')


def test_parse_rejects_non_objects():
    with pytest.raises(ParseError):
        parse_jsonl("[1,2,3]\n")


def test_index_groups_by_header():
    run = build_run(bundled_scenario("teleport_ayb"))
    run.run_until_quiescent()
    view = index_trace(run.trace)
    assert view.origins == {"h1": "A"}
    assert len(view.stamp_logs["h1"]) == 7
    assert view.commit_counts == {"h1": 7}
    assert view.transfers["h1"] == [("A", "Y"), ("Y", "B")]
    assert view.dispositions == {"h1": "deliver"}
