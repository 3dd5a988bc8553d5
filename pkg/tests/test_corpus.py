import json
from pathlib import Path

import pytest
from hypothesis import given, settings, strategies as st

from logquality import corpus
from logquality.corpus import (
    DatasetFormatError, ExtractionGrammar, GrammarError, builtin_grammar, extract_file, extract_tree,
    parse_arguments, read_dataset, write_dataset,
)
from logquality.preprocess import unify_level
from support import instruction

FIXTURES = Path(__file__).parent / "fixtures"
TREE = FIXTURES / "extraction_tree"
JAVA = builtin_grammar("java")
PY = builtin_grammar("python")


def manifest():
    return json.loads((FIXTURES / "extraction_manifest.json").read_text(encoding="utf-8"))


def extract_fixture(**kw):
    return extract_tree(TREE, [PY, JAVA], "fixture", exclude=manifest()["exclude"], **kw)


def test_java_concatenation():
    src = 'LOG.info("Cannot access storage directory " + rootPath);'
    (inst,) = extract_file(src, JAVA, "s", "A.java")
    assert (inst.level, inst.static_text, inst.variable_count) == ("info", "Cannot access storage directory {}", 1)


def test_python_percent_style():
    (inst,) = extract_file('logging.warning("disk %s nearly full", disk)\n', PY, "s", "a.py")
    assert (inst.level, inst.static_text, inst.variable_count) == ("warning", "disk {} nearly full", 1)
    assert inst.line == 1


def test_no_logging_calls():
    assert extract_file("x = 1\nprint('hello')\n", PY, "s", "a.py") == []


def test_line_numbers_count_from_call_start():
    src = "\n\nlogger.error(\n    'a'\n    'b')\n"
    (inst,) = extract_file(src, PY, "s", "a.py")
    assert inst.line == 3 and inst.static_text == "ab"


@pytest.mark.parametrize("args, expected", [
    ('"plain"', ("plain", 0)),
    ('f"{a} and {b!r:>3}"', ("{} and {}", 2)),
    ('"%d%% done" % pct', ("{}% done", 1)),
    ('"{} of {}".format(i, n)', ("{} of {}", 2)),
    ('"{{literal}} {}".format(x)', ("literal {}", 1)),
    ('msg="keyword form"', ("keyword form", 0)),
    ('"a" + str(x) + "b"', ("a{}b", 1)),
    ("variable_only", ("{}", 1)),
])
def test_python_argument_forms(args, expected):
    assert parse_arguments(args, PY) == expected


@pytest.mark.parametrize("args, expected", [
    ('"Giving up on " + name', ("Giving up on {}", 1)),
    ('String.format("%s failed after %d tries", op, n)', ("{} failed after {} tries", 2)),
    ('"tab\\tseparated"', ("tab separated", 0)),
    ('"{} of {}", i, n', ("{} of {}", 2)),
])
def test_java_argument_forms(args, expected):
    assert parse_arguments(args, JAVA) == expected


def test_fixture_tree_matches_manifest():
    m = manifest()
    ds = extract_fixture()
    got = {(s.file_path, s.line, s.level, s.static_text, s.variable_count) for s in ds}
    assert got == {tuple(r) for r in m["instructions"]}
    assert len(ds) == 25
    assert [s.file_path for s in ds.skipped] == m["skipped_files"]
    assert dict(ds.skipped_levels) == m["skipped_levels"]
    assert ds.provenance == {"fixture": 25}


def test_exclude_patterns():
    with_vendored = extract_tree(TREE, [PY, JAVA], "fixture")
    assert len(with_vendored) == 26
    assert any(s.file_path == "python/svc/vendored/lib.py" for s in with_vendored)


def test_parallel_extraction_is_identical():
    assert extract_fixture(workers=4).samples == extract_fixture().samples


def test_language_subset():
    ds = extract_tree(TREE, [JAVA], "fixture")
    assert {s.file_path for s in ds} == {"java/org/example/Replica.java", "java/org/example/Storage.java"}


def test_empty_directory(tmp_path):
    ds = extract_tree(tmp_path, [PY], "empty")
    assert len(ds) == 0 and ds.skipped == []


def test_missing_root(tmp_path):
    with pytest.raises(FileNotFoundError, match="nope"):
        extract_tree(tmp_path / "nope", [PY], "x")


def test_undecodable_file_is_skipped(tmp_path):
    (tmp_path / "ok.py").write_text('logger.info("fine")\n', encoding="utf-8")
    (tmp_path / "bad.py").write_bytes(b'logger.info("\xff\xfe")\n')
    ds = extract_tree(tmp_path, [PY], "x")
    assert [s.static_text for s in ds] == ["fine"]
    assert [s.file_path for s in ds.skipped] == ["bad.py"]


def test_raw_rematches_to_same_instruction():
    for inst in extract_fixture():
        grammar = JAVA if inst.file_path.endswith(".java") else PY
        (again,) = extract_file(inst.raw, grammar, inst.system, inst.file_path)
        assert (unify_level(again.level), again.static_text, again.variable_count) == \
            (inst.level, inst.static_text, inst.variable_count)


def test_dataset_roundtrip_byte_identical(tmp_path):
    ds = extract_fixture()
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    write_dataset(ds, a)
    back = read_dataset(a)
    assert back.samples == ds.samples
    write_dataset(back, b)
    assert a.read_bytes() == b.read_bytes()


def test_hundred_sample_roundtrip(tmp_path):
    ds = corpus.Dataset([instruction(f"event {i} {{}}", ("info", "warning", "error")[i % 3], line=i + 1)
                         for i in range(100)])
    write_dataset(ds, tmp_path / "a.jsonl")
    write_dataset(read_dataset(tmp_path / "a.jsonl"), tmp_path / "b.jsonl")
    assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()


def test_two_level_dataset_keeps_provenance(tmp_path):
    ds = corpus.Dataset([instruction("up", "info", "s1", 1), instruction("down", "error", "s2", 2),
                         instruction("again", "info", "s2", 3)])
    write_dataset(ds, tmp_path / "d.jsonl")
    assert read_dataset(tmp_path / "d.jsonl").provenance == {"s1": 1, "s2": 2}


@pytest.mark.parametrize("mutate, message", [
    (lambda r: r.pop("level"), "record 1: missing field"),
    (lambda r: r.update(level="debug"), "record 1: unknown level"),
    (lambda r: r.update(line=0), "record 1: line must be positive"),
    (lambda r: r.update(variable_count=3), "record 1: variable_count"),
    (lambda r: r.update(extra=1), "record 1: unexpected field"),
])
def test_schema_violations_name_the_record(tmp_path, mutate, message):
    good = instruction("fine").to_record()
    bad = dict(good)
    mutate(bad)
    path = tmp_path / "d.jsonl"
    path.write_text(json.dumps(good) + "\n" + json.dumps(bad) + "\n", encoding="utf-8")
    with pytest.raises(DatasetFormatError, match=message):
        read_dataset(path)


def test_bundled_corpus_shape():
    ds = corpus.bundled_corpus()
    assert len(ds) >= 2000
    assert len(ds.systems) >= 4
    assert {s.level for s in ds} == {"info", "warning", "error"}


def test_malformed_grammar():
    with pytest.raises(GrammarError):
        ExtractionGrammar.from_dict({"language": "x"})
    with pytest.raises(GrammarError, match="groups"):
        ExtractionGrammar.from_dict({"language": "x", "extensions": [".x"], "call_patterns": ["log\\.(\\w+)"],
                                     "string_literal_rules": {"quotes": ['"']}})
    with pytest.raises(GrammarError):
        builtin_grammar("cobol")


words = st.text(alphabet="abcdefghij klmn", min_size=1, max_size=20).filter(lambda s: s.strip())


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.sampled_from(["info", "warning", "error", "debug"]), words), max_size=8))
def test_extraction_is_pure_and_order_free(calls):
    src = "".join(f'logger.{lvl}("{text}")\n' for lvl, text in calls)
    first = extract_file(src, PY, "s", "a.py")
    assert first == extract_file(src, PY, "s", "a.py")
    assert [(i.level, i.static_text) for i in first] == [(lvl, " ".join(t.split())) for lvl, t in calls]
    assert [i.line for i in first] == list(range(1, len(calls) + 1))
