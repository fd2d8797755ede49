import json

import pytest

from convpr.corpus import Passage, Session, Utterance, load_passages, load_sessions, save_passages


def test_tsv_two_rows_in_file_order(tmp_path):
    p = tmp_path / "c.tsv"
    p.write_text("d1\tfirst passage\nd2\tsecond passage\n", encoding="utf-8")
    got = list(load_passages(p, "tsv"))
    assert got == [Passage("d1", "first passage"), Passage("d2", "second passage")]


def test_tsv_missing_tab_names_line(tmp_path):
    p = tmp_path / "c.tsv"
    p.write_text("no tab here\n", encoding="utf-8")
    with pytest.raises(ValueError, match=r":1:"):
        list(load_passages(p, "tsv"))


def test_tsv_text_may_contain_tabs(tmp_path):
    p = tmp_path / "c.tsv"
    p.write_text("d1\ta\tb\tc\n", encoding="utf-8")
    (got,) = load_passages(p, "tsv")
    assert got.text == "a\tb\tc"


def test_duplicate_doc_id_is_an_error(tmp_path):
    p = tmp_path / "c.tsv"
    p.write_text("d1\tx\nd1\ty\n", encoding="utf-8")
    with pytest.raises(ValueError, match="duplicate doc_id"):
        list(load_passages(p, "tsv"))


def test_jsonl_three_objects(tmp_path):
    p = tmp_path / "c.jsonl"
    rows = [{"id": f"d{i}", "contents": f"text {i}"} for i in range(3)]
    p.write_text("\n".join(json.dumps(r) for r in rows) + "\n", encoding="utf-8")
    got = list(load_passages(p, "jsonl"))
    assert [g.doc_id for g in got] == ["d0", "d1", "d2"]


def test_jsonl_missing_field_is_an_error(tmp_path):
    p = tmp_path / "c.jsonl"
    p.write_text('{"id": "d0"}\n', encoding="utf-8")
    with pytest.raises(ValueError, match=r":1:"):
        list(load_passages(p, "jsonl"))


def test_unknown_format_rejected(tmp_path):
    with pytest.raises(ValueError, match="unknown passage format"):
        list(load_passages(tmp_path / "c.csv", "csv"))


@pytest.mark.parametrize("format", ["tsv", "jsonl"])
def test_round_trip_preserves_ids_and_text_bytes(tmp_path, format):
    original = [
        Passage("doc:1", "Ünïcode text — with punctuation!"),
        Passage("doc:2", "plain ascii"),
        Passage("doc:3", "trailing spaces   "),
    ]
    p = tmp_path / f"c.{format}"
    assert save_passages(p, original, format) == 3
    reloaded = list(load_passages(p, format))
    assert reloaded == original


def test_tsv_newline_in_text_cannot_round_trip(tmp_path):
    with pytest.raises(ValueError, match="round-trip"):
        save_passages(tmp_path / "c.tsv", [Passage("d1", "two\nlines")], "tsv")


def _topic_file(tmp_path, sessions):
    p = tmp_path / "topics.json"
    p.write_text(json.dumps(sessions), encoding="utf-8")
    return p


def test_session_with_twelve_turns(tmp_path):
    turns = [{"number": i, "raw_utterance": f"question number {i}"} for i in range(1, 13)]
    turns[0]["raw_utterance"] = "What is a physician's assistant?"
    p = _topic_file(tmp_path, [{"number": 1, "turn": turns}])
    (session,) = load_sessions(p)
    assert len(session.utterances) == 12
    assert session.utterances[0].raw_text == "What is a physician's assistant?"
    assert session.utterances[0].qid == "1_1"
    assert session.utterances[11].qid == "1_12"


def test_single_session_single_turn(tmp_path):
    p = _topic_file(tmp_path, [{"number": 1, "turn": [{"number": 1, "raw_utterance": "hi"}]}])
    (session,) = load_sessions(p)
    assert session.utterances[0].qid == "1_1"


def test_non_contiguous_turns_rejected(tmp_path):
    p = _topic_file(
        tmp_path,
        [{"number": 2, "turn": [
            {"number": 1, "raw_utterance": "a"},
            {"number": 3, "raw_utterance": "b"},
        ]}],
    )
    with pytest.raises(ValueError, match="non-contiguous"):
        load_sessions(p)


def test_session_type_validates_turn_order():
    with pytest.raises(ValueError, match="contiguous"):
        Session("s", [Utterance("s", 2, "b")])
