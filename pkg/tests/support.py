"""Fixture builders shared by the test modules."""

from __future__ import annotations

import numpy as np

from logquality import models
from logquality.corpus import Dataset, LogInstruction
from logquality.encoder import EncoderModel, ModelConfig, Vocabulary

FILLER = ("worker", "cache", "session", "replica", "queue", "socket", "index", "node", "pool",
          "shard", "buffer", "table", "stream", "channel", "lease", "segment")
KEYWORDS = {"info": "started", "warning": "degraded", "error": "crashed"}


def instruction(text: str, level: str = "info", system: str = "sys", line: int = 1,
                file_path: str = "a.py") -> LogInstruction:
    return LogInstruction(system, file_path, line, f'log.{level}("{text}")', text, level, text.count("{}"))


def separable_corpus(n: int = 200, seed: int = 0, systems=("alpha", "beta")) -> Dataset:
    """Three-level corpus where each level's texts carry one dedicated keyword."""
    rng = np.random.default_rng(seed)
    levels = ("info", "warning", "error")
    samples = []
    for i in range(n):
        level = levels[i % 3]
        words = list(rng.choice(FILLER, size=int(rng.integers(2, 5)), replace=False))
        words.insert(int(rng.integers(0, len(words) + 1)), KEYWORDS[level])
        samples.append(instruction(" ".join(words), level, systems[i % len(systems)], line=i + 1))
    return Dataset(samples)


TOY_CONFIG = ModelConfig(max_len=6, d=4, heads=1, layers=1, seed=0)


def toy_ie_model() -> models.QualityModel:
    """The two-instruction info/error scenario: only the second word differs."""
    data = [instruction("Connection established", "info", line=1),
            instruction("Connection refused", "error", line=2)]
    cfg = models.TrainConfig(batch_size=2, max_epochs=300, patience=300, lr=1e-2, seed=0)
    return models.train(data, "ie", cfg, TOY_CONFIG)


def random_model(vocab_tokens=("a", "b", "c", "d", "e"), seed: int = 0, dtype=np.float64, **cfg) -> EncoderModel:
    config = ModelConfig(**{"max_len": 10, "d": 8, "heads": 2, "layers": 2, "seed": seed, **cfg})
    return EncoderModel.initialize(config, Vocabulary.from_tokens(vocab_tokens), dtype=dtype)
