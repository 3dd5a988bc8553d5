import json
import logging
from pathlib import Path

import pytest
from hypothesis import given, settings, strategies as st

from logquality import preprocess
from logquality.preprocess import (
    LABELS, TAGSET, MissingLabels, PosTagger, TaggingError, UnsupportedLevel, apply_group_labels,
    group_by_structure, pos_tag, read_labels, split_words, tokenize, unify_level, write_labels,
)
from support import instruction

GOLD = Path(__file__).parent / "fixtures" / "log_pos_gold.txt"


@pytest.mark.parametrize("raw, level", [
    ("WARN", "warning"), ("warn", "warning"), ("Warning", "warning"), ("error", "error"), ("ERR", "error"),
    ("severe", "error"), ("info", "info"), ("INFORMATION", "info"), ("exception", "error"),
])
def test_unify_level(raw, level):
    assert unify_level(raw) == level
    assert unify_level(unify_level(raw)) == level


@pytest.mark.parametrize("raw", ["debug", "trace", "fatal", "critical"])
def test_unsupported_levels(raw):
    with pytest.raises(UnsupportedLevel):
        unify_level(raw)


def test_tokenize_examples():
    assert tokenize("maxPoolSize exceeded").tokens == ("max", "pool", "size", "exceeded")
    assert tokenize("").tokens == ()
    # "cannot" is in the bundled stopword list; the other words are not
    assert tokenize("Cannot access storage directory {}").tokens == ("access", "storage", "directory", "<var>")


def test_tokenize_splits_snake_case_and_symbols():
    assert tokenize("max_pool-size=3", stopwords=()).tokens == ("max", "pool", "size", "3")
    assert tokenize("HTTPServer ready", stopwords=()).tokens == ("http", "server", "ready")


def test_tokenize_custom_stopwords():
    assert tokenize("the disk is full", stopwords={"the", "is"}).tokens == ("disk", "full")


@settings(max_examples=200, deadline=None)
@given(st.text(alphabet=st.sampled_from(list("abcXYZ_-. {}09")), max_size=30))
def test_tokenize_idempotent(text):
    once = tokenize(text).tokens
    assert tokenize(" ".join(once)).tokens == once
    assert all(t == t.lower() and t for t in once)


def test_pos_tag_examples():
    assert pos_tag("EventThread shut down.").tags == ("NOUN", "VERB", "PART", "PUNCT")
    assert pos_tag("{}").tags == ("PLACEHOLDER",)
    assert pos_tag("serialized regioninfo").tags == ("VERB", "NOUN")


def test_split_words_separates_negation():
    assert split_words("Couldn't open {}") == ["Could", "n't", "open", "{}"]
    assert split_words("cannot read") == ["can", "not", "read"]


def _gold():
    rows = []
    for line in GOLD.read_text(encoding="utf-8").splitlines():
        if line.strip() and not line.startswith("#"):
            pairs = [tok.rsplit("/", 1) for tok in line.split()]
            rows.append(([w for w, _ in pairs], [t for _, t in pairs]))
    return rows


def test_tagger_accuracy_on_gold():
    tagger = preprocess.default_tagger()
    rows = _gold()
    assert len(rows) == 60
    correct = total = 0
    for words, tags in rows:
        assert set(tags) <= set(TAGSET)
        pred = tagger.tag_words(words)
        correct += sum(p == t for p, t in zip(pred, tags))
        total += len(tags)
    assert correct / total >= 0.90


def test_external_tagger(tmp_path):
    inst = instruction("Worker stopped", line=7)
    path = tmp_path / "tags.jsonl"
    path.write_text(json.dumps({"system": "sys", "file_path": "a.py", "line": 7, "tags": ["NOUN", "VERB"]}) + "\n")
    tagger = PosTagger.from_tag_file(path)
    assert pos_tag(inst, tagger).tags == ("NOUN", "VERB")
    with pytest.raises(TaggingError, match="a.py"):
        pos_tag(instruction("x", line=8), tagger)
    with pytest.raises(TaggingError):
        pos_tag("plain text", tagger)


def test_external_tag_file_rejects_unknown_tags(tmp_path):
    path = tmp_path / "tags.jsonl"
    path.write_text(json.dumps({"system": "s", "file_path": "a", "line": 1, "tags": ["NN"]}) + "\n")
    with pytest.raises(ValueError, match="tagset"):
        PosTagger.from_tag_file(path)


SIX = [("Connection refused", 1), ("Worker stopped", 2), ("Retrying {}", 3),
       ("Server started", 4), ("Cache size is {}", 5), ("Stopping {}", 6)]


def test_grouping_fixture_sizes():
    # hand-tagged: three NOUN VERB, two VERB PLACEHOLDER, one NOUN NOUN AUX PLACEHOLDER
    groups = group_by_structure([instruction(t, line=i) for t, i in SIX])
    assert {k: len(v) for k, v in groups.items()} == {
        "NOUN VERB": 3, "VERB PLACEHOLDER": 2, "NOUN NOUN AUX PLACEHOLDER": 1}


def test_identical_text_same_group():
    groups = group_by_structure([instruction("disk full", line=1), instruction("disk full", line=2)])
    assert [len(v) for v in groups.values()] == [2]


@settings(max_examples=30, deadline=None)
@given(st.lists(st.sampled_from([t for t, _ in SIX] + ["{}", "done", "Failed to bind {}"]), max_size=12))
def test_grouping_is_a_partition(texts):
    insts = [instruction(t, line=i + 1) for i, t in enumerate(texts)]
    groups = group_by_structure(insts)
    members = [inst for g in groups.values() for inst in g]
    assert sorted(m.line for m in members) == [i.line for i in insts]


def test_apply_labels_propagates():
    groups = group_by_structure([instruction(t, line=i) for t, i in SIX])
    labels = {"NOUN VERB": "insufficient", "VERB PLACEHOLDER": "insufficient", "NOUN NOUN AUX PLACEHOLDER": "sufficient"}
    ds = apply_group_labels(groups, labels)
    by_line = {s.line: lab for s, lab in zip(ds.samples, ds.labels)}
    assert by_line == {1: "insufficient", 2: "insufficient", 3: "insufficient", 4: "insufficient",
                       5: "sufficient", 6: "insufficient"}


def test_missing_label_with_default_warns(caplog):
    groups = group_by_structure([instruction(t, line=i) for t, i in SIX])
    with caplog.at_level(logging.WARNING):
        ds = apply_group_labels(groups, {"NOUN VERB": "insufficient"}, default="sufficient")
    assert "without a label" in caplog.text
    assert ds.labels.count("sufficient") == 3


def test_missing_label_without_default():
    groups = group_by_structure([instruction(t, line=i) for t, i in SIX])
    with pytest.raises(MissingLabels) as err:
        apply_group_labels(groups, {"NOUN VERB": "insufficient"})
    assert err.value.keys == ["NOUN NOUN AUX PLACEHOLDER", "VERB PLACEHOLDER"]


def test_empty_groups():
    assert len(apply_group_labels({}, {})) == 0


def test_labels_roundtrip(tmp_path):
    labels = {"NOUN VERB": "insufficient", "VERB ADP NOUN": "sufficient"}
    write_labels(labels, tmp_path / "l.jsonl")
    assert read_labels(tmp_path / "l.jsonl") == labels
    (tmp_path / "bad.jsonl").write_text('{"structure_key": "X", "label": "maybe"}\n')
    with pytest.raises(ValueError, match="unknown label"):
        read_labels(tmp_path / "bad.jsonl")


def test_bundled_labels_cover_bundled_groups():
    from logquality.corpus import bundled_corpus
    groups = group_by_structure(bundled_corpus())
    labels = preprocess.bundled_labels()
    assert set(groups) <= set(labels)
    assert set(labels.values()) == set(LABELS)
    assert len(groups) > 1000
