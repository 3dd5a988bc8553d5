"""Level unification, tokenization and linguistic structure (POS tag sequences)."""

from __future__ import annotations

import json
import logging
import os
import re
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from typing import TYPE_CHECKING, Iterable, Mapping

from .tagger import AveragedPerceptronTagger

if TYPE_CHECKING:
    from .corpus import Dataset, LogInstruction

logger = logging.getLogger(__name__)

LEVELS = ("info", "warning", "error")
VAR_TOKEN = "<var>"

TAGSET = (
    "NOUN", "VERB", "ADJ", "ADV", "ADP", "PART", "PRON", "DET", "AUX", "NUM",
    "CCONJ", "SCONJ", "PUNCT", "SYM", "X", "PLACEHOLDER",
)

_LEVEL_MAP = {
    "info": "info", "information": "info",
    "warn": "warning", "warning": "warning",
    "error": "error", "err": "error", "severe": "error",
    # Python's Logger.exception emits at ERROR
    "exception": "error",
}

LABELS = ("sufficient", "insufficient")


class UnsupportedLevel(ValueError):
    """Raised for level tags outside info/warning/error (e.g. debug, trace, fatal)."""


def unify_level(raw_level: str) -> str:
    if not raw_level:
        raise ValueError("empty level tag")
    try:
        return _LEVEL_MAP[raw_level.strip().lower()]
    except KeyError:
        raise UnsupportedLevel(f"unsupported level {raw_level!r}") from None


# ---------------------------------------------------------------------------
# tokenization

_CAMEL = re.compile(r"(?<=[a-z0-9])(?=[A-Z])|(?<=[A-Z])(?=[A-Z][a-z])")
_NON_ALNUM = re.compile(r"[^A-Za-z0-9]+")


@lru_cache(maxsize=None)
def load_stopwords(path: str | None = None) -> frozenset[str]:
    """Stopword set, one word per line. Defaults to the bundled English snapshot."""
    if path is None:
        text = (resources.files("logquality") / "data" / "stopwords_en.txt").read_text(encoding="utf-8")
    else:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    return frozenset(w.strip() for w in text.splitlines() if w.strip())


@dataclass(frozen=True)
class TokenSequence:
    tokens: tuple[str, ...]
    origin: object = field(default=None, compare=False)

    def __len__(self):
        return len(self.tokens)

    def __iter__(self):
        return iter(self.tokens)


def tokenize(static_text: str, stopwords: Iterable[str] | None = None, origin=None) -> TokenSequence:
    """Split static text into lowercase word tokens.

    Placeholders become ``<var>``; words are split on whitespace, camelCase and
    snake_case boundaries, non-alphanumeric characters are removed, and
    stopwords dropped.

    >>> tokenize("maxPoolSize exceeded").tokens
    ('max', 'pool', 'size', 'exceeded')
    """
    stop = load_stopwords() if stopwords is None else stopwords
    out = []
    for word in static_text.replace("{}", f" {VAR_TOKEN} ").split():
        if word == VAR_TOKEN:
            out.append(VAR_TOKEN)
            continue
        for part in word.replace("_", " ").split():
            for piece in _CAMEL.sub(" ", part).split():
                for tok in _NON_ALNUM.sub(" ", piece).lower().split():
                    if tok and tok not in stop:
                        out.append(tok)
    return TokenSequence(tuple(out), origin)


# ---------------------------------------------------------------------------
# linguistic structure

_WORD = re.compile(r"\{\}|[A-Za-z0-9_]+(?:['’.\-/][A-Za-z0-9_]+)*|[^\sA-Za-z0-9_{}]+|[{}]")
_NUMBER = re.compile(r"^(?:\d+(?:[.,]\d+)*|0x[0-9a-fA-F]+)$")
_SYMBOLS = set("$#%+<=>^|~@&")


_CONTRACTION = re.compile(r"^(?i:(can)(not)|(\w+)(n['’]t))$")


def split_words(static_text: str) -> list[str]:
    """Word sequence used for tagging (stopwords kept, punctuation and negations split off)."""
    words = []
    for w in _WORD.findall(static_text):
        m = _CONTRACTION.match(w)
        if m:
            words.extend(g for g in m.groups() if g)
        else:
            words.append(w)
    return words


def fixed_tag(word: str) -> str | None:
    """Tags assigned by rule rather than by the statistical model."""
    if word == "{}":
        return "PLACEHOLDER"
    if _NUMBER.match(word):
        return "NUM"
    if not any(ch.isalnum() for ch in word):
        return "SYM" if all(ch in _SYMBOLS for ch in word) else "PUNCT"
    return None


@dataclass(frozen=True)
class LinguisticStructure:
    tags: tuple[str, ...]
    words: tuple[str, ...] = ()
    origin: object = field(default=None, compare=False)

    @property
    def key(self) -> str:
        return " ".join(self.tags)

    def __len__(self):
        return len(self.tags)


class TaggingError(LookupError):
    pass


class PosTagger:
    """POS tagger over the coarse tagset.

    ``builtin`` mode runs the bundled averaged-perceptron model; ``external``
    mode looks up precomputed tags by instruction id
    ``(system, file_path, line)``.
    """

    def __init__(self, mode: str = "builtin", model: AveragedPerceptronTagger | None = None,
                 external: Mapping[tuple, tuple[str, ...]] | None = None):
        if mode not in ("builtin", "external"):
            raise ValueError(f"unknown tagger mode {mode!r}")
        self.mode = mode
        self.tagset = TAGSET
        if mode == "builtin":
            self.model = model if model is not None else AveragedPerceptronTagger.load_bundled()
            self.external = None
        else:
            if external is None:
                raise ValueError("external mode requires a tag mapping")
            self.model = None
            self.external = dict(external)

    @classmethod
    def from_tag_file(cls, path: str | os.PathLike) -> "PosTagger":
        mapping = {}
        with open(path, encoding="utf-8") as fh:
            for i, line in enumerate(fh):
                if not line.strip():
                    continue
                rec = json.loads(line)
                try:
                    key = (rec["system"], rec["file_path"], rec["line"])
                    tags = tuple(rec["tags"])
                except KeyError as exc:
                    raise ValueError(f"{path}: record {i} missing {exc}") from None
                bad = [t for t in tags if t not in TAGSET]
                if bad:
                    raise ValueError(f"{path}: record {i} has tags outside the tagset: {bad}")
                mapping[key] = tags
        return cls("external", external=mapping)

    def tag_words(self, words: list[str]) -> list[str]:
        fixed = [fixed_tag(w) for w in words]
        return self.model.tag(words, fixed)

    def __call__(self, item) -> LinguisticStructure:
        return pos_tag(item, self)


@lru_cache(maxsize=1)
def default_tagger() -> PosTagger:
    return PosTagger("builtin")


def pos_tag(item, tagger: PosTagger | None = None) -> LinguisticStructure:
    """Tag a static text (or a LogInstruction) with the coarse tagset.

    >>> pos_tag("EventThread shut down.").tags
    ('NOUN', 'VERB', 'PART', 'PUNCT')
    """
    tagger = default_tagger() if tagger is None else tagger
    text = item if isinstance(item, str) else item.static_text
    words = split_words(text)
    if tagger.mode == "external":
        if isinstance(item, str):
            raise TaggingError("external tagger needs a LogInstruction, got plain text")
        try:
            tags = tagger.external[item.key]
        except KeyError:
            raise TaggingError(f"no external tags for instruction {item.key}") from None
        return LinguisticStructure(tuple(tags), tuple(words), item)
    return LinguisticStructure(tuple(tagger.tag_words(words)), tuple(words), item)


def group_by_structure(dataset: "Dataset | Iterable[LogInstruction]", tagger: PosTagger | None = None
                       ) -> dict[str, list["LogInstruction"]]:
    groups: dict[str, list] = {}
    cache: dict[str, str] = {}
    for inst in dataset:
        if tagger is not None and tagger.mode == "external":
            key = pos_tag(inst, tagger).key
        else:
            key = cache.get(inst.static_text)
            if key is None:
                key = cache[inst.static_text] = pos_tag(inst.static_text, tagger).key
        groups.setdefault(key, []).append(inst)
    return groups


@dataclass
class LabeledDataset:
    """Instructions paired with a linguistic-quality label and their group key."""

    samples: list
    labels: list[str]
    keys: list[str]

    def __len__(self):
        return len(self.samples)

    @property
    def systems(self) -> list[str]:
        return sorted({s.system for s in self.samples})

    def subset(self, predicate) -> "LabeledDataset":
        idx = [i for i, s in enumerate(self.samples) if predicate(s)]
        return LabeledDataset([self.samples[i] for i in idx], [self.labels[i] for i in idx],
                              [self.keys[i] for i in idx])


class MissingLabels(KeyError):
    def __init__(self, keys):
        super().__init__(f"{len(keys)} group(s) without a label: {sorted(keys)[:20]}")
        self.keys = sorted(keys)


def apply_group_labels(groups: Mapping[str, list], labels: Mapping[str, str],
                       default: str | None = None) -> LabeledDataset:
    """Give every instruction the label of its structure group.

    Groups missing from ``labels`` take ``default`` (with a logged warning) or,
    when no default is set, raise :class:`MissingLabels`.
    """
    for key, value in labels.items():
        if value not in LABELS:
            raise ValueError(f"label for {key!r} must be one of {LABELS}, got {value!r}")
    if default is not None and default not in LABELS:
        raise ValueError(f"default label must be one of {LABELS}")
    missing = [k for k in groups if k not in labels]
    if missing and default is None:
        raise MissingLabels(missing)
    if missing:
        logger.warning("%d group(s) without a label, using default %r", len(missing), default)
    samples, out_labels, keys = [], [], []
    for key in sorted(groups):
        label = labels.get(key, default)
        for inst in groups[key]:
            samples.append(inst)
            out_labels.append(label)
            keys.append(key)
    order = sorted(range(len(samples)), key=lambda i: samples[i].key)
    return LabeledDataset([samples[i] for i in order], [out_labels[i] for i in order], [keys[i] for i in order])


def read_labels(path: str | os.PathLike) -> dict[str, str]:
    labels = {}
    with open(path, encoding="utf-8") as fh:
        for i, line in enumerate(fh):
            if not line.strip():
                continue
            rec = json.loads(line)
            if set(rec) != {"structure_key", "label"}:
                raise ValueError(f"{path}: record {i} must have exactly structure_key and label")
            if rec["label"] not in LABELS:
                raise ValueError(f"{path}: record {i} has unknown label {rec['label']!r}")
            labels[rec["structure_key"]] = rec["label"]
    return labels


def write_labels(labels: Mapping[str, str], path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for key in sorted(labels):
            fh.write(json.dumps({"structure_key": key, "label": labels[key]}) + "\n")


def bundled_labels() -> dict[str, str]:
    with resources.as_file(resources.files("logquality") / "data" / "structure_labels.jsonl") as path:
        return read_labels(path)
