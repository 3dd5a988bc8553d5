"""Log instruction extraction from source trees and the JSONL dataset format."""

from __future__ import annotations

import fnmatch
import json
import os
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable

import regex

from .preprocess import LEVELS, UnsupportedLevel, unify_level

DATASET_FIELDS = ("system", "file_path", "line", "raw", "static_text", "level", "variable_count")
PLACEHOLDER = "{}"

_VAR = "\x00"  # placeholder sentinel while literal text is being normalized
_PCT = "\x01"
_PRINTF = regex.compile(r"%(?:\([^)]*\))?[-+#0]*(?:\d+|\*)?(?:\.(?:\d+|\*))?[hlL]?[diouxXeEfFgGcrsab]")
_BRACE_FIELD = regex.compile(r"\{[^{}]*\}")


class GrammarError(ValueError):
    """A grammar file or grammar object is malformed."""


class SourceDecodeError(ValueError):
    """A source file cannot be decoded as text."""


class DatasetFormatError(ValueError):
    """A dataset record violates the JSONL schema."""

    def __init__(self, index: int, message: str):
        super().__init__(f"record {index}: {message}")
        self.index = index


@dataclass(frozen=True)
class LogInstruction:
    system: str
    file_path: str
    line: int
    raw: str
    static_text: str
    level: str
    variable_count: int

    @property
    def has_literal_text(self) -> bool:
        """False when the instruction logs only variables (poor quality by construction)."""
        return bool(self.static_text.replace(PLACEHOLDER, "").strip())

    def to_record(self) -> dict:
        return {name: getattr(self, name) for name in DATASET_FIELDS}

    @property
    def key(self) -> tuple:
        return (self.system, self.file_path, self.line)


@dataclass(frozen=True)
class SkipEntry:
    file_path: str
    reason: str


@dataclass
class Dataset:
    samples: list[LogInstruction] = field(default_factory=list)
    skipped: list[SkipEntry] = field(default_factory=list)
    skipped_levels: Counter = field(default_factory=Counter)

    @property
    def provenance(self) -> dict[str, int]:
        return dict(Counter(s.system for s in self.samples))

    @property
    def systems(self) -> list[str]:
        return sorted(self.provenance)

    def __len__(self) -> int:
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)

    def subset(self, predicate) -> "Dataset":
        return Dataset([s for s in self.samples if predicate(s)])


@dataclass(frozen=True)
class StringRules:
    quotes: tuple[str, ...]
    prefixes: str = ""
    escape: str = "\\"
    line_comment: str | None = None
    interpolating_prefixes: str = ""


@dataclass(frozen=True)
class ConcatenationRule:
    operator: str = "+"
    implicit_adjacent: bool = False
    format_operator: str | None = None
    format_methods: tuple[str, ...] = ()


@dataclass(frozen=True)
class ExtractionGrammar:
    """Regular-expression grammar for one host language.

    Each call pattern must define the named groups ``level`` and ``args``.
    The macro ``{args}`` expands to ``(?P<args>...)`` matching a balanced,
    string-aware argument list built from ``string_literal_rules``.
    """

    language: str
    extensions: tuple[str, ...]
    call_patterns: tuple[str, ...]
    string_literal_rules: StringRules
    concatenation_rule: ConcatenationRule

    def __post_init__(self):
        if not self.call_patterns:
            raise GrammarError(f"grammar {self.language!r} has no call patterns")
        if not self.string_literal_rules.quotes:
            raise GrammarError(f"grammar {self.language!r} declares no string quotes")
        compiled = []
        for pattern in self.call_patterns:
            source = pattern.replace("{args}", _args_pattern(self.string_literal_rules))
            try:
                rx = regex.compile(source)
            except regex.error as exc:
                raise GrammarError(f"grammar {self.language!r}: bad pattern {pattern!r}: {exc}") from exc
            if set(rx.groupindex) != {"level", "args"}:
                raise GrammarError(
                    f"grammar {self.language!r}: pattern must name exactly the groups "
                    f"'level' and 'args', got {sorted(rx.groupindex)}"
                )
            compiled.append(rx)
        object.__setattr__(self, "_compiled", tuple(compiled))

    @property
    def patterns(self) -> tuple:
        return self._compiled

    @classmethod
    def from_dict(cls, data: dict) -> "ExtractionGrammar":
        try:
            rules = data["string_literal_rules"]
            concat = data.get("concatenation_rule", {})
            return cls(
                language=data["language"],
                extensions=tuple(data["extensions"]),
                call_patterns=tuple(data["call_patterns"]),
                string_literal_rules=StringRules(
                    quotes=tuple(rules["quotes"]),
                    prefixes=rules.get("prefixes", ""),
                    escape=rules.get("escape", "\\"),
                    line_comment=rules.get("line_comment"),
                    interpolating_prefixes=rules.get("interpolating_prefixes", ""),
                ),
                concatenation_rule=ConcatenationRule(
                    operator=concat.get("operator", "+"),
                    implicit_adjacent=bool(concat.get("implicit_adjacent", False)),
                    format_operator=concat.get("format_operator"),
                    format_methods=tuple(concat.get("format_methods", ())),
                ),
            )
        except (KeyError, TypeError) as exc:
            raise GrammarError(f"malformed grammar definition: {exc!r}") from exc

    @classmethod
    def load(cls, path: str | os.PathLike) -> "ExtractionGrammar":
        with open(path, encoding="utf-8") as fh:
            try:
                return cls.from_dict(json.load(fh))
            except json.JSONDecodeError as exc:
                raise GrammarError(f"{path}: {exc}") from exc


def builtin_grammar(language: str) -> ExtractionGrammar:
    """Return one of the shipped grammars (``java`` or ``python``)."""
    ref = resources.files("logquality") / "grammars" / f"{language}.json"
    if not ref.is_file():
        raise GrammarError(f"no builtin grammar for language {language!r}")
    return ExtractionGrammar.from_dict(json.loads(ref.read_text(encoding="utf-8")))


def _args_pattern(rules: StringRules) -> str:
    alts = []
    for q in sorted(rules.quotes, key=len, reverse=True):
        eq = regex.escape(q)
        esc = regex.escape(rules.escape)
        if len(q) > 1:
            body = rf"(?:{esc}.|(?!{eq})[^{esc}])*+"
        else:
            body = rf"(?:{esc}.|[^{eq}{esc}\n])*+"
        alts.append(rf"[{regex.escape(rules.prefixes)}]{{0,2}}{eq}{body}{eq}" if rules.prefixes else rf"{eq}{body}{eq}")
    stop = "()\\[\\]{}" + "".join(regex.escape(q[0]) for q in rules.quotes)
    if rules.line_comment:
        alts.append(regex.escape(rules.line_comment) + r"[^\n]*+")
        stop += regex.escape(rules.line_comment[0])
    alts += [r"\((?&args)\)", r"\[(?&args)\]", r"\{(?&args)\}", rf"[^{stop}]++"]
    if rules.line_comment:
        # lone first character of a comment marker, e.g. '/' for division
        alts.append(regex.escape(rules.line_comment[0]))
    return "(?P<args>(?:" + "|".join(alts) + ")*+)"


# ---------------------------------------------------------------------------
# argument-list lexing


@dataclass(frozen=True)
class _Tok:
    kind: str  # str | name | open | close | comma | op
    text: str
    prefix: str = ""
    body: str = ""


def _lex(expr: str, rules: StringRules) -> list[_Tok]:
    toks: list[_Tok] = []
    quotes = sorted(rules.quotes, key=len, reverse=True)
    i, n = 0, len(expr)
    while i < n:
        c = expr[i]
        if c.isspace():
            i += 1
            continue
        if rules.line_comment and expr.startswith(rules.line_comment, i):
            j = expr.find("\n", i)
            i = n if j < 0 else j + 1
            continue
        # optional string prefix, only when not glued to a preceding identifier
        j = i
        while j < n and j - i < 2 and expr[j] in rules.prefixes:
            j += 1
        quote = next((q for q in quotes if expr.startswith(q, j)), None)
        if quote is None and j != i:
            j, quote = i, next((q for q in quotes if expr.startswith(q, i)), None)
        if quote is not None and (i == 0 or not (expr[i - 1].isalnum() or expr[i - 1] == "_") or j == i):
            start = j + len(quote)
            k = start
            while k < n and not expr.startswith(quote, k):
                if expr[k] == rules.escape:
                    k += 1
                k += 1
            body = expr[start:min(k, n)]
            end = min(k + len(quote), n)
            toks.append(_Tok("str", expr[i:end], prefix=expr[i:j], body=body))
            i = end
            continue
        if c.isalnum() or c in "_$.":
            j = i
            while j < n and (expr[j].isalnum() or expr[j] in "_$."):
                j += 1
            toks.append(_Tok("name", expr[i:j]))
            i = j
            continue
        if c in "([{":
            toks.append(_Tok("open", c))
        elif c in ")]}":
            toks.append(_Tok("close", c))
        elif c == ",":
            toks.append(_Tok("comma", c))
        else:
            toks.append(_Tok("op", c))
        i += 1
    return toks


def _split_top(toks: list[_Tok], is_sep) -> list[list[_Tok]]:
    parts: list[list[_Tok]] = [[]]
    depth = 0
    for t in toks:
        if t.kind == "open":
            depth += 1
        elif t.kind == "close":
            depth -= 1
        if depth == 0 and is_sep(t):
            parts.append([])
        else:
            parts[-1].append(t)
    return parts


def _unescape(body: str, escape: str) -> str:
    out = []
    i = 0
    while i < len(body):
        ch = body[i]
        if ch == escape and i + 1 < len(body):
            nxt = body[i + 1]
            out.append(" " if nxt in "ntr" else nxt)
            i += 2
            continue
        out.append(ch)
        i += 1
    return "".join(out)


def _replace_interpolations(body: str) -> str:
    out = []
    i, n = 0, len(body)
    while i < n:
        if body.startswith("{{", i) or body.startswith("}}", i):
            i += 2
            continue
        if body[i] == "{":
            depth, j = 1, i + 1
            while j < n and depth:
                depth += {"{": 1, "}": -1}.get(body[j], 0)
                j += 1
            out.append(_VAR)
            i = j
            continue
        out.append(body[i])
        i += 1
    return "".join(out)


def _literal_text(tok: _Tok, rules: StringRules) -> str:
    body = tok.body
    if not any(p in "rR" for p in tok.prefix):
        body = _unescape(body, rules.escape)
    if any(p in rules.interpolating_prefixes for p in tok.prefix):
        return _replace_interpolations(body)
    body = body.replace("%%", _PCT)
    body = _PRINTF.sub(_VAR, body)
    body = body.replace("{{", "").replace("}}", "")
    body = _BRACE_FIELD.sub(_VAR, body)
    return body.replace(_PCT, "%")


def _term_text(term: list[_Tok], grammar: ExtractionGrammar) -> str:
    """Literal text of one concatenation term, or the variable sentinel."""
    rules, concat = grammar.string_literal_rules, grammar.concatenation_rule
    if not term:
        return ""
    n_str = 0
    while n_str < len(term) and term[n_str].kind == "str":
        n_str += 1
    if n_str and (n_str == 1 or concat.implicit_adjacent):
        rest = term[n_str:]
        methods = {"." + m for m in concat.format_methods}
        if not rest or (rest[0].kind == "name" and rest[0].text in methods and rest[1:2] and rest[1].text == "("
                        and _closing_index(rest, 1) == len(rest) - 1):
            return "".join(_literal_text(t, rules) for t in term[:n_str])
    # String.format("...", x) style wrappers carry the literal in their first argument
    if (len(term) >= 3 and term[0].kind == "name" and term[0].text.lower().endswith("format")
            and term[1].text == "(" and _closing_index(term, 1) == len(term) - 1):
        inner = _split_top(term[2:-1], lambda t: t.kind == "comma")[0]
        return _expression_text(inner, grammar)
    return _VAR


def _closing_index(toks: list[_Tok], open_at: int) -> int:
    depth = 0
    for k in range(open_at, len(toks)):
        if toks[k].kind == "open":
            depth += 1
        elif toks[k].kind == "close":
            depth -= 1
            if depth == 0:
                return k
    return -1


def _expression_text(expr: list[_Tok], grammar: ExtractionGrammar) -> str:
    concat = grammar.concatenation_rule
    if concat.format_operator:
        expr = _split_top(expr, lambda t: t.kind == "op" and t.text == concat.format_operator)[0]
    terms = _split_top(expr, lambda t: t.kind == "op" and t.text == concat.operator)
    return "".join(_term_text(t, grammar) for t in terms)


def parse_arguments(args: str, grammar: ExtractionGrammar) -> tuple[str, int]:
    """Collapse a call's argument list into (static_text, variable_count)."""
    toks = _lex(args, grammar.string_literal_rules)
    first = _split_top(toks, lambda t: t.kind == "comma")[0]
    if len(first) > 2 and first[0].kind == "name" and first[1].text == "=" and first[2].text != "=":
        first = first[2:]  # keyword argument, e.g. msg="..."
    text = _expression_text(first, grammar)
    text = " ".join(text.split()).replace(_VAR, PLACEHOLDER)
    return text, text.count(PLACEHOLDER)


def extract_file(source: str, grammar: ExtractionGrammar, system: str, file_path: str) -> list[LogInstruction]:
    """Return every instruction matched by ``grammar`` in ``source``, in line order.

    Levels are the raw tags found in the call (e.g. ``"warn"``); use
    :func:`extract_tree` or :func:`logquality.preprocess.unify_level` for the
    canonical three-level form.
    """
    found = []
    for rx in grammar.patterns:
        for m in rx.finditer(source):
            line = source.count("\n", 0, m.start()) + 1
            static_text, n_vars = parse_arguments(m.group("args"), grammar)
            found.append((m.start(), LogInstruction(
                system=system,
                file_path=file_path,
                line=line,
                raw=m.group(0),
                static_text=static_text,
                level=m.group("level"),
                variable_count=n_vars,
            )))
    found.sort(key=lambda item: item[0])
    return [inst for _, inst in found]


def read_source(path: str | os.PathLike) -> str:
    data = Path(path).read_bytes()
    if b"\x00" in data:
        raise SourceDecodeError(f"{path}: binary content")
    try:
        return data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise SourceDecodeError(f"{path}: {exc}") from exc


def _iter_files(root: Path, extensions: set[str], exclude: Iterable[str]) -> list[Path]:
    exclude = list(exclude)
    files = []
    for dirpath, dirnames, filenames in os.walk(root):
        rel_dir = Path(dirpath).relative_to(root).as_posix()
        dirnames[:] = sorted(d for d in dirnames
                             if not any(fnmatch.fnmatch(f"{rel_dir}/{d}".lstrip("./"), pat)
                                        or fnmatch.fnmatch(d, pat) for pat in exclude))
        for name in sorted(filenames):
            if Path(name).suffix in extensions and not any(fnmatch.fnmatch(name, pat) for pat in exclude):
                files.append(Path(dirpath) / name)
    return files


def extract_tree(root: str | os.PathLike, grammars: list[ExtractionGrammar], system: str,
                 exclude: Iterable[str] = (), workers: int = 1) -> Dataset:
    """Extract and level-unify all instructions under ``root``.

    Files that cannot be decoded and calls at levels outside info/warning/error
    are recorded in ``Dataset.skipped`` / ``Dataset.skipped_levels``.
    """
    root = Path(root)
    if not root.is_dir():
        raise FileNotFoundError(f"source root does not exist or is not a directory: {root}")
    by_ext = {}
    for g in grammars:
        for ext in g.extensions:
            by_ext.setdefault(ext, g)
    files = _iter_files(root, set(by_ext), exclude)

    def work(path: Path):
        rel = path.relative_to(root).as_posix()
        try:
            source = read_source(path)
        except (OSError, SourceDecodeError) as exc:
            return rel, None, str(exc)
        return rel, extract_file(source, by_ext[path.suffix], system, rel), None

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(work, files))
    else:
        results = [work(p) for p in files]

    dataset = Dataset()
    for rel, instructions, error in results:
        if error is not None:
            dataset.skipped.append(SkipEntry(rel, error))
            continue
        for inst in instructions:
            try:
                level = unify_level(inst.level)
            except UnsupportedLevel:
                dataset.skipped_levels[inst.level.lower()] += 1
                continue
            dataset.samples.append(_replace_level(inst, level))
    dataset.samples.sort(key=lambda s: (s.file_path, s.line))
    return dataset


def _replace_level(inst: LogInstruction, level: str) -> LogInstruction:
    record = inst.to_record()
    record["level"] = level
    return LogInstruction(**record)


def merge(datasets: Iterable[Dataset]) -> Dataset:
    out = Dataset()
    for ds in datasets:
        out.samples.extend(ds.samples)
        out.skipped.extend(ds.skipped)
        out.skipped_levels.update(ds.skipped_levels)
    out.samples.sort(key=lambda s: s.key)
    return out


# ---------------------------------------------------------------------------
# JSONL dataset files


def _validate(record, index: int) -> LogInstruction:
    if not isinstance(record, dict):
        raise DatasetFormatError(index, "not a JSON object")
    missing = [f for f in DATASET_FIELDS if f not in record]
    if missing:
        raise DatasetFormatError(index, f"missing field(s) {', '.join(missing)}")
    extra = sorted(set(record) - set(DATASET_FIELDS))
    if extra:
        raise DatasetFormatError(index, f"unexpected field(s) {', '.join(extra)}")
    for name in ("system", "file_path", "raw", "static_text", "level"):
        if not isinstance(record[name], str):
            raise DatasetFormatError(index, f"field {name!r} must be a string")
    for name in ("line", "variable_count"):
        if not isinstance(record[name], int) or isinstance(record[name], bool):
            raise DatasetFormatError(index, f"field {name!r} must be an integer")
    if record["line"] < 1:
        raise DatasetFormatError(index, "line must be positive")
    if record["level"] not in LEVELS:
        raise DatasetFormatError(index, f"unknown level {record['level']!r}")
    if not record["raw"]:
        raise DatasetFormatError(index, "raw must be non-empty")
    if record["static_text"].count(PLACEHOLDER) != record["variable_count"]:
        raise DatasetFormatError(index, "variable_count does not match placeholders in static_text")
    return LogInstruction(**{f: record[f] for f in DATASET_FIELDS})


def read_dataset(path: str | os.PathLike) -> Dataset:
    samples = []
    with open(path, encoding="utf-8") as fh:
        for index, line in enumerate(fh):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetFormatError(index, f"invalid JSON: {exc}") from exc
            samples.append(_validate(record, index))
    return Dataset(samples)


def write_dataset(dataset: Dataset, path: str | os.PathLike) -> None:
    samples = sorted(dataset.samples, key=lambda s: s.key)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for s in samples:
            fh.write(json.dumps(s.to_record(), ensure_ascii=False) + "\n")


def bundled_corpus() -> Dataset:
    """The multi-system corpus shipped with the package."""
    with resources.as_file(resources.files("logquality") / "data" / "corpus.jsonl") as path:
        return read_dataset(path)
