"""Shapley-value token importance for encoder predictions.

Players are the token positions of one input. The value of a coalition is the
softmax score of the explained class when every token outside the coalition is
replaced by [PD] (and therefore masked out of attention). Small inputs are
enumerated exactly; longer ones use antithetic permutation sampling.

A token's Shapley value is spread over the embedding dimensions in proportion
to the absolute entries of its embedding minus the [PD] embedding, which keeps
the per-token sum. Intensity is the squared norm of that vector and the sign is
the sign of its largest-magnitude entry.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import factorial
from typing import Sequence

import numpy as np

from .encoder import LMT_ID, PD_ID, EncoderModel

MAX_EXACT_TOKENS = 12
DEFAULT_BUDGET = 512


class NothingToExplain(ValueError):
    pass


@dataclass
class ShapleyAttribution:
    values: np.ndarray  # (tokens, d): S_ik
    token_values: np.ndarray  # (tokens,): per-token Shapley value, the row sums of ``values``
    class_index: int
    mode: str
    v_full: float
    v_empty: float
    value_function: str = "softmax score of the class; absent tokens replaced by [PD]"


@dataclass
class TokenImportance:
    token: str
    position: int
    intensity: float
    sign: str
    rank: int


@dataclass
class Explanation:
    class_index: int
    class_name: str
    mode: str
    tokens: list[TokenImportance]

    def to_dict(self) -> dict:
        return {
            "class": self.class_name,
            "mode": self.mode,
            "tokens": [{"token": t.token, "intensity": t.intensity, "sign": t.sign, "rank": t.rank}
                       for t in self.tokens],
        }

    def rank_of(self, token: str) -> int:
        """Rank (1-based) of the first occurrence of ``token`` in the ordered list."""
        for t in self.tokens:
            if t.token == token:
                return t.rank
        raise KeyError(token)


def _coalition_inputs(indices: np.ndarray, n: int, masks: np.ndarray) -> np.ndarray:
    """One row per coalition mask; bit i set means token position i + 1 is kept."""
    bits = (masks[:, None] >> np.arange(n)) & 1
    rows = np.repeat(indices[None], len(masks), axis=0)
    rows[:, 1:n + 1] = np.where(bits == 1, rows[:, 1:n + 1], PD_ID)
    return rows


def _values(model: EncoderModel, indices: np.ndarray, n: int, masks: np.ndarray, class_index: int) -> np.ndarray:
    return model.scores(_coalition_inputs(indices, n, masks))[:, class_index]


def _n_players(indices: np.ndarray) -> int:
    if indices[0] != LMT_ID:
        raise ValueError("input must start with [LMT]")
    real = np.nonzero(indices[1:] != PD_ID)[0]
    n = int(real[-1]) + 1 if len(real) else 0
    if np.any(indices[1:n + 1] == PD_ID):
        raise ValueError("[PD] inside the token span")
    return n


def exact_shapley(model: EncoderModel, indices, class_index: int) -> tuple[np.ndarray, float, float]:
    indices = np.asarray(indices)
    n = _n_players(indices)
    if n > MAX_EXACT_TOKENS:
        raise ValueError(f"{n} tokens is too many for exact mode (max {MAX_EXACT_TOKENS}); use sampled mode")
    masks = np.arange(2 ** n, dtype=np.int64)
    v = _values(model, indices, n, masks, class_index)
    size = np.array([bin(m).count("1") for m in masks])
    weight = np.array([factorial(s) * factorial(n - s - 1) / factorial(n) for s in range(n)] + [0.0])
    phi = np.empty(n)
    for i in range(n):
        without = masks[((masks >> i) & 1) == 0]
        phi[i] = np.sum(weight[size[without]] * (v[without | (1 << i)] - v[without]))
    return phi, float(v[-1]), float(v[0])


def sampled_shapley(model: EncoderModel, indices, class_index: int, budget: int = DEFAULT_BUDGET,
                    seed: int = 0) -> tuple[np.ndarray, float, float]:
    """Average marginal contributions over ``budget`` permutations (antithetic pairs)."""
    if budget < 1:
        raise ValueError("budget must be >= 1")
    indices = np.asarray(indices)
    n = _n_players(indices)
    rng = np.random.default_rng(seed)
    perms = []
    while len(perms) < budget:
        p = rng.permutation(n)
        perms.append(p)
        if len(perms) < budget:
            perms.append(p[::-1])
    perms = np.array(perms, dtype=np.int64).reshape(budget, n)
    prefix = np.zeros((budget, n + 1), dtype=np.int64)
    prefix[:, 1:] = np.cumsum(np.left_shift(1, perms), axis=1)
    unique, inverse = np.unique(prefix, return_inverse=True)
    v = _values(model, indices, n, unique, class_index)[inverse.reshape(prefix.shape)]
    marginal = np.diff(v, axis=1)
    phi = np.zeros(n)
    np.add.at(phi, perms.ravel(), marginal.ravel())
    full = (1 << n) - 1
    v_full = float(_values(model, indices, n, np.array([full]), class_index)[0])
    v_empty = float(_values(model, indices, n, np.array([0]), class_index)[0])
    return phi / budget, v_full, v_empty


def split_by_dimension(model: EncoderModel, indices, phi: np.ndarray) -> np.ndarray:
    """Spread each token's value over embedding dimensions by |emb(token) - emb([PD])|."""
    indices = np.asarray(indices)
    n = len(phi)
    emb = model.params["tok_emb"].astype(np.float64)
    diff = np.abs(emb[indices[1:n + 1]] - emb[PD_ID])
    total = diff.sum(1, keepdims=True)
    share = np.where(total > 0, diff / np.where(total > 0, total, 1), 1.0 / diff.shape[1])
    return phi[:, None] * share


def shapley_values(model: EncoderModel, indices, class_index: int, mode: str = "exact",
                   budget: int = DEFAULT_BUDGET, seed: int = 0) -> ShapleyAttribution:
    """Per-token, per-dimension Shapley values for the score of ``class_index``."""
    m64 = model.astype(np.float64)
    if not 0 <= class_index < model.config.classes:
        raise ValueError(f"class index {class_index} out of range")
    if mode == "exact":
        phi, v_full, v_empty = exact_shapley(m64, indices, class_index)
    elif mode == "sampled":
        phi, v_full, v_empty = sampled_shapley(m64, indices, class_index, budget, seed)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return ShapleyAttribution(split_by_dimension(m64, indices, phi), phi, class_index, mode, v_full, v_empty)


def _sign(vec: np.ndarray) -> str:
    if vec.size == 0:
        return "+"
    k = int(np.argmax(np.abs(vec)))  # first index among ties
    return "-" if vec[k] < 0 else "+"


def importance_scores(attr: ShapleyAttribution | np.ndarray, tokens: Sequence[str],
                      class_index: int = 0, class_name: str | None = None, mode: str = "exact") -> Explanation:
    """Order tokens by intensity r = ||S_i||^2, descending; ties keep input order.

    >>> importance_scores(np.array([[3.0, 4.0]]), ["a"]).tokens[0].intensity
    25.0
    """
    if isinstance(attr, ShapleyAttribution):
        values, class_index, mode = attr.values, attr.class_index, attr.mode
    else:
        values = np.asarray(attr, dtype=float)
    if values.ndim != 2 or len(values) != len(tokens):
        raise ValueError("need one attribution vector per token")
    r = (values ** 2).sum(1)
    order = sorted(range(len(tokens)), key=lambda i: (-r[i], i))
    entries = [TokenImportance(tokens[i], i, float(r[i]), _sign(values[i]), rank + 1)
               for rank, i in enumerate(order)]
    return Explanation(class_index, class_name if class_name is not None else str(class_index), mode, entries)


def explain_prediction(model, instruction, class_index: int | None = None, mode: str | None = None,
                       budget: int = DEFAULT_BUDGET, seed: int = 0, tagger=None) -> Explanation:
    """Explain one prediction of a trained model.

    ``model`` is a :class:`~logquality.models.QualityModel` (or a bare
    :class:`EncoderModel`, whose inputs are then token lists). ``instruction``
    may be static text, a LogInstruction or a token sequence. The default
    class is the predicted one; the default mode is exact up to 12 tokens.
    """
    from .models import prepare, PreparedSample  # deferred: models imports this package's encoder

    if isinstance(model, EncoderModel):
        encoder, names = model, [str(c) for c in range(model.config.classes)]
        tokens = [instruction] if isinstance(instruction, str) else list(instruction)
    else:
        encoder, names = model.encoder, list(model.task.class_names)
        if isinstance(instruction, (list, tuple)):
            tokens = list(instruction)
        else:
            if isinstance(instruction, str):
                from .corpus import LogInstruction
                instruction = LogInstruction("", "", 0, instruction, instruction, "", 0)
            sample: PreparedSample = prepare([instruction], model.task, tagger, filter_levels=False)[0]
            tokens = list(sample.inputs)
    tokens = tokens[:encoder.config.max_len - 1]
    if not tokens:
        raise NothingToExplain("nothing to explain: the instruction has no tokens")
    indices = encoder.encode(tokens)
    if class_index is None:
        class_index = int(np.argmax(encoder.scores(indices)))
    if mode is None:
        mode = "exact" if len(tokens) <= MAX_EXACT_TOKENS else "sampled"
    attr = shapley_values(encoder, indices, class_index, mode, budget, seed)
    return importance_scores(attr, tokens, class_name=names[class_index])
