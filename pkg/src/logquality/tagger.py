"""Greedy averaged-perceptron POS tagger with lexicon and suffix features.

The bundled model is trained offline (``scripts/train_tagger.py``) and shipped
as a gzipped JSON weight file; loading it needs nothing beyond the stdlib.
"""

from __future__ import annotations

import gzip
import json
import random
from collections import Counter, defaultdict
from importlib import resources

START = ("-START-", "-START2-")
END = ("-END-", "-END2-")


def _normalize(word: str) -> str:
    if any(ch.isdigit() for ch in word) and not any(ch.isalpha() for ch in word):
        return "!DIGITS"
    return word.lower()


def _shape(word: str) -> str:
    if word.isupper() and len(word) > 1:
        return "UPPER"
    if word[:1].isupper():
        return "CAMEL" if any(c.isupper() for c in word[1:]) else "TITLE"
    if any(c.isupper() for c in word):
        return "camel"
    if any(c.isdigit() for c in word):
        return "digit"
    return "lower"


def _features(i: int, words: list[str], context: list[str], prev: str, prev2: str) -> list[str]:
    """Feature strings for position ``i``; ``context`` is padded by two on each side."""
    w = context[i + 2]
    raw = words[i]
    feats = [
        "bias",
        "w " + w,
        "s3 " + w[-3:],
        "s2 " + w[-2:],
        "p1 " + w[:1],
        "shape " + _shape(raw),
        "first " + str(i == 0),
        "t-1 " + prev,
        "t-2 " + prev2,
        "t-1 t-2 " + prev + " " + prev2,
        "t-1 w " + prev + " " + w,
        "w-1 " + context[i + 1],
        "w-1 s3 " + context[i + 1][-3:],
        "w-2 " + context[i],
        "w+1 " + context[i + 3],
        "w+1 s3 " + context[i + 3][-3:],
        "w+2 " + context[i + 4],
    ]
    if "-" in raw:
        feats.append("hyphen")
    if "." in raw[1:-1]:
        feats.append("dotted")
    return feats


class AveragedPerceptronTagger:
    def __init__(self, weights: dict | None = None, tagdict: dict | None = None, classes=()):
        self.weights: dict[str, dict[str, float]] = weights or {}
        self.tagdict: dict[str, str] = tagdict or {}
        self.classes = tuple(classes)

    # -- inference ---------------------------------------------------------

    def _predict(self, feats: list[str]) -> str:
        scores: dict[str, float] = defaultdict(float)
        for f in feats:
            for tag, w in self.weights.get(f, {}).items():
                scores[tag] += w
        # deterministic tie-break on the class order
        return max(self.classes, key=lambda c: (scores.get(c, 0.0), -self.classes.index(c)))

    def tag(self, words: list[str], fixed: list[str | None] | None = None) -> list[str]:
        """Greedy left-to-right tagging; ``fixed`` entries override the model."""
        fixed = fixed or [None] * len(words)
        context = [*START, *(_normalize(w) for w in words), *END]
        prev, prev2 = START
        tags = []
        for i, word in enumerate(words):
            tag = fixed[i] or self.tagdict.get(_normalize(word))
            if tag is None:
                tag = self._predict(_features(i, words, context, prev, prev2))
            tags.append(tag)
            prev2, prev = prev, tag
        return tags

    # -- persistence -------------------------------------------------------

    def to_dict(self) -> dict:
        return {"classes": list(self.classes), "tagdict": self.tagdict, "weights": self.weights}

    def save(self, path) -> None:
        with gzip.open(path, "wt", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, sort_keys=True, separators=(",", ":"))

    @classmethod
    def load(cls, path) -> "AveragedPerceptronTagger":
        with gzip.open(path, "rt", encoding="utf-8") as fh:
            data = json.load(fh)
        return cls(data["weights"], data["tagdict"], data["classes"])

    @classmethod
    def load_bundled(cls) -> "AveragedPerceptronTagger":
        with resources.as_file(resources.files("logquality") / "data" / "pos_tagger.json.gz") as path:
            return cls.load(path)

    # -- training ----------------------------------------------------------

    @classmethod
    def train(cls, sentences: list[tuple[list[str], list[str]]], iterations: int = 5, seed: int = 0,
              fixed=None, prune: float = 0.0) -> "AveragedPerceptronTagger":
        """Train on ``(words, tags)`` pairs.

        ``fixed`` is an optional callable word -> tag or None, applied both at
        training and tagging time so the model never learns rule-tagged words.
        """
        model = cls()
        model.classes = tuple(sorted({t for _, tags in sentences for t in tags}))
        model.tagdict = _build_tagdict(sentences)
        totals: dict = defaultdict(float)
        stamps: dict = defaultdict(int)
        clock = 0
        rng = random.Random(seed)
        data = list(sentences)
        for _ in range(iterations):
            rng.shuffle(data)
            for words, gold in data:
                context = [*START, *(_normalize(w) for w in words), *END]
                prev, prev2 = START
                for i, word in enumerate(words):
                    tag = (fixed(word) if fixed else None) or model.tagdict.get(_normalize(word))
                    if tag is None:
                        feats = _features(i, words, context, prev, prev2)
                        guess = model._predict(feats)
                        clock += 1
                        if guess != gold[i]:
                            for f in feats:
                                row = model.weights.setdefault(f, {})
                                for t, delta in ((gold[i], 1.0), (guess, -1.0)):
                                    key = (f, t)
                                    totals[key] += (clock - stamps[key]) * row.get(t, 0.0)
                                    stamps[key] = clock
                                    row[t] = row.get(t, 0.0) + delta
                        tag = guess
                    prev2, prev = prev, gold[i] if tag is None else tag
        for f, row in model.weights.items():
            for t, w in list(row.items()):
                key = (f, t)
                total = totals[key] + (clock - stamps[key]) * w
                avg = round(total / max(clock, 1), 3)
                if abs(avg) > prune:
                    row[t] = avg
                else:
                    del row[t]
        model.weights = {f: row for f, row in model.weights.items() if row}
        return model


def _build_tagdict(sentences, min_freq: int = 20, min_ratio: float = 0.97) -> dict[str, str]:
    counts: dict[str, Counter] = defaultdict(Counter)
    for words, tags in sentences:
        for w, t in zip(words, tags):
            counts[_normalize(w)][t] += 1
    tagdict = {}
    for word, c in counts.items():
        tag, n = c.most_common(1)[0]
        total = sum(c.values())
        if total >= min_freq and n / total >= min_ratio:
            tagdict[word] = tag
    return tagdict
