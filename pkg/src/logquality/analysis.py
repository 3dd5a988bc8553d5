"""Corpus analytics: n-gram level entropy, level-pair n-gram overlap, contingency tables."""

from __future__ import annotations

import csv
import math
from collections import Counter
from dataclasses import asdict, dataclass
from itertools import combinations
from typing import Iterable, Sequence

import numpy as np

from .preprocess import LEVELS, tokenize

REPORT_FORMAT_VERSION = 1
NS = (1, 2, 3, 4, 5)
_LOG_LEVELS = math.log(len(LEVELS))


def _token_rows(dataset) -> list[tuple[tuple[str, ...], str]]:
    """(tokens, level) pairs from LogInstructions or already tokenized pairs."""
    rows = []
    for item in dataset:
        if hasattr(item, "static_text"):
            rows.append((tokenize(item.static_text).tokens, item.level))
        else:
            tokens, level = item
            rows.append((tuple(tokens), level))
    return rows


@dataclass
class NGramLevelCounts:
    n: int
    counts: dict[tuple[str, ...], np.ndarray]  # n-gram -> counts per level in LEVELS order

    def __len__(self):
        return len(self.counts)


def _count_matrix(rows, n: int) -> tuple[list[tuple], np.ndarray]:
    """N-grams in first-seen order and their per-level counts as a (G, 3) array."""
    index: dict[tuple, int] = {}
    cells = []
    for tokens, level in rows:
        j = LEVELS.index(level)
        for i in range(len(tokens) - n + 1):
            cells.append(3 * index.setdefault(tokens[i:i + n], len(index)) + j)
    flat = np.bincount(np.array(cells, dtype=np.int64), minlength=3 * len(index))
    return list(index), flat.reshape(-1, len(LEVELS))


def ngram_counts(dataset, n: int) -> NGramLevelCounts:
    """Per-level counts of sliding-window n-grams, never crossing instruction boundaries."""
    if not 1 <= n <= 5:
        raise ValueError("n must lie in 1..5")
    grams, matrix = _count_matrix(_token_rows(dataset), n)
    return NGramLevelCounts(n, dict(zip(grams, matrix)))


def _entropies(counts: np.ndarray) -> np.ndarray:
    """Row-wise normalized entropy of a (G, 3) count matrix."""
    c = np.asarray(counts, dtype=float)
    total = c.sum(1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        p = c / total
        h = -np.sum(np.where(c > 0, p * np.log(p), 0.0), axis=1) / _LOG_LEVELS
    # uniform over k levels; exact at the boundaries (k=1 -> 0, k=3 -> 1)
    k = (c > 0).sum(1)
    uniform = c.max(1) == np.where(c > 0, c, np.inf).min(1)
    h = np.where(uniform, np.log(np.maximum(k, 1)) / _LOG_LEVELS, h)
    return np.clip(h, 0.0, 1.0)


def normalized_entropy(level_counts: Sequence[float]) -> float:
    """Shannon entropy of the level distribution divided by log(3).

    >>> round(normalized_entropy((2, 1, 0)), 4)
    0.5794
    """
    c = np.asarray(level_counts, dtype=float)
    if c.shape != (len(LEVELS),) or np.any(c < 0) or c.sum() <= 0:
        raise ValueError("need three non-negative counts with at least one positive")
    return float(_entropies(c[None])[0])


@dataclass
class Summary:
    min: float
    q1: float
    median: float
    q3: float
    max: float
    count: int

    @classmethod
    def of(cls, values: Sequence[float]) -> "Summary":
        v = np.asarray(values, dtype=float)
        if v.size == 0:
            raise ValueError("no values to summarize")
        q = np.percentile(v, [0, 25, 50, 75, 100], method="linear")
        return cls(*map(float, q), count=int(v.size))


@dataclass
class EntropyDistribution:
    per_n: dict[int, dict[tuple, float]]
    pooled: Summary
    per_n_summary: dict[int, Summary]

    def values(self) -> list[float]:
        return [h for n in sorted(self.per_n) for h in self.per_n[n].values()]


def entropy_distribution(dataset, ns: Iterable[int] = NS) -> EntropyDistribution:
    """Normalized entropies of every n-gram for each requested n, with quartile summaries."""
    ns = sorted(set(ns))
    if not ns or not set(ns) <= set(NS):
        raise ValueError("ns must be a non-empty subset of 1..5")
    rows = _token_rows(dataset)
    per_n = {}
    for n in ns:
        grams, matrix = _count_matrix(rows, n)
        per_n[n] = dict(zip(grams, _entropies(matrix).tolist()))
    pooled = [h for n in ns for h in per_n[n].values()]
    if not pooled:
        raise ValueError("no n-grams in the dataset")
    per_n_summary = {n: Summary.of(list(v.values())) for n, v in per_n.items() if v}
    return EntropyDistribution(per_n, Summary.of(pooled), per_n_summary)


def _grams_at(rows, level: str, ns) -> set:
    out = set()
    for tokens, lvl in rows:
        if lvl == level:
            for n in ns:
                out.update((n, tokens[i:i + n]) for i in range(len(tokens) - n + 1))
    return out


def level_pair_overlap(dataset, level_a: str, level_b: str, ns: Iterable[int] = NS) -> float:
    """Jaccard index of the n-gram sets seen at two levels, pooled over ``ns``."""
    if level_a == level_b:
        raise ValueError("levels must differ")
    rows = _token_rows(dataset)
    a, b = _grams_at(rows, level_a, ns), _grams_at(rows, level_b, ns)
    union = a | b
    if not union:
        raise ValueError(f"no n-grams at levels {level_a} or {level_b}")
    return len(a & b) / len(union)


def overlap_matrix(dataset, ns: Iterable[int] = NS) -> dict[str, float]:
    rows = _token_rows(dataset)
    ns = tuple(ns)
    return {f"{a}-{b}": level_pair_overlap(rows, a, b, ns) for a, b in combinations(LEVELS, 2)}


@dataclass
class ContingencyTable:
    classes: list[str]
    counts: list[list[int]]  # counts[true][predicted]
    percentages: list[list[float | None]]  # off-diagonal row percentages, None on the diagonal


def contingency(assessment=None, labels=None, predictions=None, class_names: Sequence[str] | None = None) -> ContingencyTable:
    """True x predicted counts with off-diagonal percentages of each true-class row."""
    if assessment is not None:
        if not assessment.labeled():
            raise ValueError("assessment has no labels")
        labels, predictions = assessment.labels, assessment.predictions
        class_names = assessment.task.class_names
    if labels is None or predictions is None or class_names is None:
        raise ValueError("need an assessment or labels, predictions and class names")
    k = len(class_names)
    cm = np.zeros((k, k), dtype=np.int64)
    for t, p in zip(labels, predictions):
        cm[int(t), int(p)] += 1
    pct = []
    for t in range(k):
        total = cm[t].sum()
        pct.append([None if p == t else (100.0 * cm[t, p] / total if total else 0.0) for p in range(k)])
    return ContingencyTable(list(class_names), cm.tolist(), pct)


def analytics_report(dataset, ns: Iterable[int] = NS) -> dict:
    rows = _token_rows(dataset)
    dist = entropy_distribution(rows, ns)
    return {
        "format_version": REPORT_FORMAT_VERSION,
        "instructions": len(rows),
        "levels": dict(Counter(level for _, level in rows)),
        "entropy": {
            "pooled": asdict(dist.pooled),
            "per_n": {str(n): asdict(s) for n, s in dist.per_n_summary.items()},
        },
        "overlap": overlap_matrix(rows, ns),
    }


def write_entropy_csv(dist: EntropyDistribution, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["n", "ngram", "entropy"])
        for n in sorted(dist.per_n):
            for gram, h in sorted(dist.per_n[n].items()):
                writer.writerow([n, " ".join(gram), repr(h)])
