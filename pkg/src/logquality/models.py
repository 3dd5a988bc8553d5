"""Tasks, training, assessment, baselines and evaluation protocols for the quality models."""

from __future__ import annotations

import csv
import logging
import math
from collections import Counter
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Iterable, Sequence

import numpy as np

from . import encoder as enc
from .encoder import EncoderModel, ModelConfig, NumericalError, Vocabulary
from .metrics import classification_metrics
from .preprocess import VAR_TOKEN, LabeledDataset, PosTagger, pos_tag, tokenize

logger = logging.getLogger(__name__)

REPORT_FORMAT_VERSION = 1


class TaskMismatch(ValueError):
    """Data, task and model do not fit together."""


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class TaskSpec:
    kind: str
    class_names: tuple[str, ...]
    input_channel: str
    positive: int | None = None  # positive class for specificity in two-class tasks

    @property
    def n_classes(self) -> int:
        return len(self.class_names)


TASKS = {
    "level_iwe": TaskSpec("level_iwe", ("info", "warning", "error"), "tokens"),
    "level_ie": TaskSpec("level_ie", ("info", "error"), "tokens", positive=1),
    "level_iw": TaskSpec("level_iw", ("info", "warning"), "tokens", positive=1),
    "level_we": TaskSpec("level_we", ("warning", "error"), "tokens", positive=1),
    # insufficient structure is the negative class, so specificity is its recall
    "linguistic": TaskSpec("linguistic", ("sufficient", "insufficient"), "structure", positive=0),
}
_ALIASES = {"iwe": "level_iwe", "ie": "level_ie", "iw": "level_iw", "we": "level_we", "ew": "level_we"}


def get_task(kind: str | TaskSpec) -> TaskSpec:
    if isinstance(kind, TaskSpec):
        return kind
    key = _ALIASES.get(kind, kind)
    if key not in TASKS:
        raise ValueError(f"unknown task {kind!r}; choose from {sorted(TASKS) + sorted(_ALIASES)}")
    return TASKS[key]


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 2048
    max_epochs: int = 100
    patience: int = 5
    validation_fraction: float = 0.1
    seed: int = 0
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.99
    class_weight: str = "none"  # or "balanced": inverse class frequency

    def __post_init__(self):
        if self.batch_size < 1 or self.max_epochs < 1 or self.patience < 1:
            raise ValueError("batch_size, max_epochs and patience must be positive")
        if not 0 < self.validation_fraction < 1:
            raise ValueError("validation_fraction must lie in (0, 1)")
        if self.class_weight not in ("none", "balanced"):
            raise ValueError("class_weight must be 'none' or 'balanced'")

    @classmethod
    def for_task(cls, task: str | TaskSpec, **overrides) -> "TrainConfig":
        batch = 64 if get_task(task).input_channel == "structure" else 2048
        return cls(**{"batch_size": batch, **overrides})


# ---------------------------------------------------------------------------
# sample preparation


@dataclass(frozen=True)
class PreparedSample:
    id: str
    inputs: tuple[str, ...]
    label: int | None
    system: str
    text: str
    channel: str


def instruction_id(inst) -> str:
    return f"{inst.system}:{inst.file_path}:{inst.line}"


def prepare(data, task: str | TaskSpec, tagger: PosTagger | None = None,
            filter_levels: bool = True) -> list[PreparedSample]:
    """Turn instructions into model inputs for ``task``.

    Level tasks read tokens and use the instruction's level as label. With
    ``filter_levels`` (training and evaluation) instructions whose level is
    outside the task's classes, or whose text has no word besides variables,
    are dropped with order preserved; otherwise they are kept unlabeled.
    The linguistic task reads POS structures and takes labels from a
    :class:`LabeledDataset`; plain datasets yield unlabeled samples.
    """
    task = get_task(task)
    if isinstance(data, list) and data and isinstance(data[0], PreparedSample):
        if any(s.channel != task.input_channel for s in data):
            raise TaskMismatch(f"samples were prepared for another channel than {task.input_channel!r}")
        return data
    out = []
    if task.input_channel == "tokens":
        for inst in data:
            label = task.class_names.index(inst.level) if inst.level in task.class_names else None
            tokens = tokenize(inst.static_text).tokens
            if filter_levels and (label is None or all(t == VAR_TOKEN for t in tokens)):
                continue
            out.append(PreparedSample(instruction_id(inst), tokens, label,
                                      inst.system, inst.static_text, "tokens"))
        return out
    if isinstance(data, LabeledDataset):
        rows = zip(data.samples, data.labels, data.keys)
        for inst, label, key in rows:
            out.append(PreparedSample(instruction_id(inst), tuple(key.split()), task.class_names.index(label),
                                      inst.system, inst.static_text, "structure"))
        return out
    for inst in data:
        out.append(PreparedSample(instruction_id(inst), pos_tag(inst, tagger).tags, None,
                                  inst.system, inst.static_text, "structure"))
    return out


def build_vocabulary(sequences: Iterable[Sequence[str]]) -> Vocabulary:
    """Every observed token, ordered by frequency (descending) then lexicographically."""
    counts = Counter()
    n = 0
    for seq in sequences:
        counts.update(seq)
        n += 1
    if n == 0:
        raise ValueError("cannot build a vocabulary from an empty training set")
    counts = {t: c for t, c in counts.items() if t not in enc.RESERVED}
    return Vocabulary.from_tokens(sorted(counts, key=lambda t: (-counts[t], t)))


# ---------------------------------------------------------------------------
# training


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float


@dataclass
class QualityModel:
    """A trained encoder bound to its task and training configuration."""

    encoder: EncoderModel
    task: TaskSpec
    train_config: TrainConfig
    log: list[EpochRecord] = field(default_factory=list)

    def predict_scores(self, samples: Sequence[PreparedSample]) -> np.ndarray:
        X = enc.encode_batch((s.inputs for s in samples), self.encoder.vocab, self.encoder.config.max_len)
        return self.encoder.scores(X).astype(np.float64)


def stratified_split(labels: Sequence[int], fraction: float, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Seeded per-class split; returns ``(train_idx, val_idx)``, both sorted.

    Each class with at least two members contributes ``round(fraction * n)``
    (at least one) samples to validation.
    """
    labels = np.asarray(labels)
    val = []
    for c in np.unique(labels):
        members = np.nonzero(labels == c)[0]
        if len(members) < 2:
            continue
        k = min(len(members) - 1, max(1, int(round(fraction * len(members)))))
        val.extend(rng.permutation(members)[:k])
    val = np.sort(np.asarray(val, dtype=int))
    train = np.setdiff1d(np.arange(len(labels)), val)
    return train, val


def _class_weights(y: np.ndarray, n_classes: int, mode: str) -> np.ndarray:
    if mode == "none":
        return np.ones(len(y), dtype=np.float32)
    counts = np.bincount(y, minlength=n_classes).astype(float)
    per_class = np.where(counts > 0, len(y) / (n_classes * np.maximum(counts, 1)), 0.0)
    return per_class[y].astype(np.float32)


def _mean_loss(model: EncoderModel, X: np.ndarray, y: np.ndarray) -> float:
    probs = model.scores(X).astype(np.float64)
    return float(-np.mean(np.log(np.maximum(probs[np.arange(len(y)), y], 1e-300))))


def train(data, task: str | TaskSpec, cfg: TrainConfig | None = None, model_cfg: ModelConfig | None = None,
          validation=None, tagger: PosTagger | None = None, progress: Callable | None = None) -> QualityModel:
    """Train an encoder for ``task`` with Adam and early stopping on validation loss.

    Without an explicit ``validation`` set, a stratified seeded fraction of the
    training data is held out. The returned model is the epoch with the lowest
    validation loss; ``model.log`` has one record per epoch.
    """
    task = get_task(task)
    cfg = cfg or TrainConfig.for_task(task)
    model_cfg = replace(model_cfg or ModelConfig(), classes=task.n_classes)
    samples = prepare(data, task, tagger)
    if any(s.label is None for s in samples):
        raise TaskMismatch("training samples must be labeled")
    present = {s.label for s in samples}
    if len(present) < 2:
        raise TaskMismatch(f"task {task.kind} needs at least two classes, found {sorted(task.class_names[c] for c in present)}")

    rng = np.random.default_rng(cfg.seed)
    if validation is None:
        tr_idx, va_idx = stratified_split([s.label for s in samples], cfg.validation_fraction, rng)
        train_s = [samples[i] for i in tr_idx]
        val_s = [samples[i] for i in va_idx]
    else:
        train_s, val_s = samples, prepare(validation, task, tagger)

    vocab = build_vocabulary(s.inputs for s in train_s)
    model = EncoderModel.initialize(model_cfg, vocab)
    X = enc.encode_batch((s.inputs for s in train_s), vocab, model_cfg.max_len)
    y = np.array([s.label for s in train_s], dtype=np.int64)
    w = _class_weights(y, task.n_classes, cfg.class_weight)
    Xv = enc.encode_batch((s.inputs for s in val_s), vocab, model_cfg.max_len)
    yv = np.array([s.label for s in val_s], dtype=np.int64)

    state = enc.AdamState.zeros_like(model.params)
    log: list[EpochRecord] = []
    best, best_loss, stale = model.copy(), math.inf, 0
    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(len(y))
        total = 0.0
        for b, start in enumerate(range(0, len(y), cfg.batch_size)):
            sel = order[start:start + cfg.batch_size]
            try:
                loss, grads = enc.loss_and_gradients(model, X[sel], y[sel], w[sel])
            except NumericalError as exc:
                raise TrainingError(f"non-finite values at epoch {epoch}, batch {b}: {exc}") from exc
            enc.adam_step(model.params, grads, state, cfg.lr, cfg.beta1, cfg.beta2)
            total += loss * len(sel)
        train_loss = total / len(y)
        val_loss = _mean_loss(model, Xv, yv) if len(yv) else _mean_loss(model, X, y)
        if not math.isfinite(val_loss):
            raise TrainingError(f"non-finite validation loss at epoch {epoch}")
        log.append(EpochRecord(epoch, train_loss, val_loss))
        if progress:
            progress(log[-1])
        if val_loss < best_loss:
            best, best_loss, stale = model.copy(), val_loss, 0
        else:
            stale += 1
            if stale >= cfg.patience:
                break
    return QualityModel(best, task, cfg, log)


def write_training_log(log: Sequence[EpochRecord], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_loss", "val_loss"])
        for r in log:
            writer.writerow([r.epoch, repr(r.train_loss), repr(r.val_loss)])


def save_model(model: QualityModel, path) -> None:
    extra = {
        "task": model.task.kind,
        "train_config": asdict(model.train_config),
        "log": [asdict(r) for r in model.log],
    }
    enc.save_checkpoint(model.encoder, path, extra)


def load_model(path) -> QualityModel:
    encoder, extra = enc.load_checkpoint(path)
    try:
        task = get_task(extra["task"])
        cfg = TrainConfig(**extra["train_config"])
        log = [EpochRecord(**r) for r in extra.get("log", [])]
    except (KeyError, TypeError, ValueError) as exc:
        raise enc.CheckpointError(f"invalid checkpoint {path}: bad task metadata ({exc})") from None
    if encoder.config.classes != task.n_classes:
        raise enc.CheckpointError(f"invalid checkpoint {path}: {encoder.config.classes} classes for task {task.kind}")
    return QualityModel(encoder, task, cfg, log)


# ---------------------------------------------------------------------------
# baselines


@dataclass
class NaiveBayesBaseline:
    """Multinomial naive Bayes over word 1- and 2-grams with additive smoothing."""

    task: TaskSpec
    alpha: float = 1.0
    orders: tuple[int, ...] = (1, 2)
    log_prior: np.ndarray | None = None
    log_lik: dict = field(default_factory=dict)
    log_unseen: np.ndarray | None = None

    def _grams(self, tokens):
        return [tuple(tokens[i:i + n]) for n in self.orders for i in range(len(tokens) - n + 1)]

    def fit(self, samples: Sequence[PreparedSample]) -> "NaiveBayesBaseline":
        C = self.task.n_classes
        labels = np.array([s.label for s in samples])
        if len(set(labels.tolist())) < 2:
            raise TaskMismatch("baseline needs at least two classes in the training data")
        self.log_prior = np.log(np.bincount(labels, minlength=C) / len(labels))
        counts: dict[tuple, np.ndarray] = {}
        for s in samples:
            for g in self._grams(s.inputs):
                counts.setdefault(g, np.zeros(C))[s.label] += 1
        totals = sum(counts.values(), np.zeros(C))
        denom = totals + self.alpha * (len(counts) + 1)
        self.log_lik = {g: np.log((c + self.alpha) / denom) for g, c in counts.items()}
        self.log_unseen = np.log(self.alpha / denom)
        return self

    def predict_scores(self, samples: Sequence[PreparedSample]) -> np.ndarray:
        out = np.empty((len(samples), self.task.n_classes))
        for i, s in enumerate(samples):
            z = self.log_prior.copy()
            for g in self._grams(s.inputs):
                z += self.log_lik.get(g, self.log_unseen)
            z -= z.max()
            out[i] = np.exp(z) / np.exp(z).sum()
        return out


@dataclass
class MajorityBaseline:
    """Always predicts the most frequent training class; scores are the class priors."""

    task: TaskSpec
    prior: np.ndarray | None = None

    def fit(self, samples: Sequence[PreparedSample]) -> "MajorityBaseline":
        labels = np.array([s.label for s in samples])
        self.prior = np.bincount(labels, minlength=self.task.n_classes) / len(labels)
        return self

    def predict_scores(self, samples):
        return np.tile(self.prior, (len(samples), 1))


@dataclass
class RuleBaseline:
    """Rule matching for linguistic sufficiency.

    Structures labeled insufficient in training become rules; a new
    structure is insufficient iff it matches one exactly.
    """

    task: TaskSpec
    rules: frozenset = frozenset()

    def fit(self, samples: Sequence[PreparedSample]) -> "RuleBaseline":
        bad = self.task.class_names.index("insufficient")
        self.rules = frozenset(s.inputs for s in samples if s.label == bad)
        return self

    def predict_scores(self, samples):
        bad = self.task.class_names.index("insufficient")
        out = np.zeros((len(samples), 2))
        for i, s in enumerate(samples):
            out[i, bad if s.inputs in self.rules else 1 - bad] = 1.0
        return out


def baseline_ngram_classifier(train_data, task: str | TaskSpec, alpha: float = 1.0) -> NaiveBayesBaseline:
    task = get_task(task)
    return NaiveBayesBaseline(task, alpha).fit(prepare(train_data, task))


# ---------------------------------------------------------------------------
# assessment


@dataclass
class AssessmentRecord:
    id: str
    text: str
    predicted: int
    scores: list[float]
    label: int | None
    agree: bool | None


@dataclass
class Assessment:
    task: TaskSpec
    records: list[AssessmentRecord]

    def labeled(self) -> list[AssessmentRecord]:
        return [r for r in self.records if r.label is not None]

    @property
    def labels(self) -> np.ndarray:
        return np.array([r.label for r in self.labeled()], dtype=int)

    @property
    def predictions(self) -> np.ndarray:
        return np.array([r.predicted for r in self.labeled()], dtype=int)

    @property
    def scores(self) -> np.ndarray:
        return np.array([r.scores for r in self.labeled()], dtype=float).reshape(-1, self.task.n_classes)

    def agreement_rate(self) -> float | None:
        rows = self.labeled()
        return sum(r.agree for r in rows) / len(rows) if rows else None

    def metrics(self):
        return classification_metrics(self.labels, self.predictions, self.scores, self.task.n_classes,
                                      positive=self.task.positive if self.task.positive is not None else 1,
                                      class_names=self.task.class_names)

    def to_report(self) -> dict:
        names = self.task.class_names

        def row(r):
            return {"id": r.id, "text": r.text, "predicted": names[r.predicted], "scores": r.scores,
                    "label": None if r.label is None else names[r.label], "agree": r.agree}

        disagree = sorted((r for r in self.records if r.agree is False), key=lambda r: -r.scores[r.predicted])
        rest = [r for r in self.records if r.agree is not False]
        labeled = self.labeled()
        return {
            "format_version": REPORT_FORMAT_VERSION,
            "task": self.task.kind,
            "classes": list(names),
            "summary": {
                "samples": len(self.records),
                "labeled": len(labeled),
                "agree": sum(1 for r in labeled if r.agree),
                "disagree": len(disagree),
                "agreement_rate": self.agreement_rate(),
            },
            "disagreements": [row(r) for r in disagree],
            "others": [row(r) for r in rest],
        }


def assess(model, data, task: str | TaskSpec | None = None, tagger: PosTagger | None = None) -> Assessment:
    """Predict every sample; the argmax breaks ties toward the lowest class index."""
    if task is not None:
        task = get_task(task)
        if task != model.task:
            raise TaskMismatch(f"model was trained for {model.task.kind} "
                               f"({model.task.n_classes} classes), not {task.kind} ({task.n_classes} classes)")
    samples = prepare(data, model.task, tagger, filter_levels=False)
    scores = model.predict_scores(samples) if samples else np.zeros((0, model.task.n_classes))
    predicted = np.argmax(scores, axis=1)
    records = []
    for s, p, sc in zip(samples, predicted, scores):
        agree = None if s.label is None else bool(p == s.label)
        records.append(AssessmentRecord(s.id, s.text, int(p), [float(v) for v in sc], s.label, agree))
    return Assessment(model.task, records)


# ---------------------------------------------------------------------------
# evaluation protocols

SUMMARY_METRICS = ("accuracy", "precision", "recall", "f1", "auc", "specificity")

Trainer = Callable[..., object]


def encoder_trainer(train_config: TrainConfig | None = None, model_config: ModelConfig | None = None) -> Trainer:
    def fit(samples, task, validation=None):
        return train(samples, task, train_config, model_config, validation=validation)
    return fit


def naive_bayes_trainer(alpha: float = 1.0) -> Trainer:
    def fit(samples, task, validation=None):
        return NaiveBayesBaseline(task, alpha).fit(samples)
    return fit


def majority_trainer() -> Trainer:
    def fit(samples, task, validation=None):
        return MajorityBaseline(task).fit(samples)
    return fit


def rule_trainer() -> Trainer:
    def fit(samples, task, validation=None):
        return RuleBaseline(task).fit(samples)
    return fit


@dataclass
class ProtocolResult:
    protocol: str
    task: str
    rows: list[dict]
    mean: dict
    std: dict

    def to_report(self) -> dict:
        return {"format_version": REPORT_FORMAT_VERSION, **asdict(self)}


def _summarize(protocol: str, task: TaskSpec, rows: list[dict]) -> ProtocolResult:
    mean, std = {}, {}
    for key in SUMMARY_METRICS:
        vals = [r["metrics"][key] for r in rows if r["metrics"].get(key) is not None]
        if vals:
            mean[key] = float(np.mean(vals))
            std[key] = float(np.std(vals))
    return ProtocolResult(protocol, task.kind, rows, mean, std)


def _row(name: str, model, task, train_n: int, test_s: list[PreparedSample]) -> dict:
    a = assess(model, test_s)
    return {"name": name, "n_train": train_n, "n_test": len(test_s), "metrics": a.metrics().to_dict()}


def evaluate_holdout(model, data, tagger: PosTagger | None = None) -> ProtocolResult:
    samples = prepare(data, model.task, tagger)
    return _summarize("holdout", model.task, [_row("holdout", model, model.task, 0, samples)])


def leave_one_system_out(data, task: str | TaskSpec, trainer: Trainer | None = None,
                         tagger: PosTagger | None = None, systems: Sequence[str] | None = None) -> ProtocolResult:
    """Train on all systems but one, test on the held-out one; one row per system."""
    task = get_task(task)
    trainer = trainer or encoder_trainer()
    samples = prepare(data, task, tagger)
    held_out = sorted({s.system for s in samples}) if systems is None else list(systems)
    if len(held_out) < 2 and systems is None:
        raise ValueError("leave-one-system-out needs at least two systems")
    rows = []
    for system in held_out:
        tr = [s for s in samples if s.system != system]
        te = [s for s in samples if s.system == system]
        model = trainer(tr, task)
        rows.append(_row(system, model, task, len(tr), te))
        logger.info("held out %s: %s", system, rows[-1]["metrics"]["f1"])
    return _summarize("leave-one-system-out", task, rows)


def system_split(systems: Sequence[str], fractions=(0.6, 0.2, 0.2), rng=None) -> tuple[list, list, list]:
    """Random partition of systems into train/validation/test groups (each non-empty)."""
    systems = sorted(systems)
    if len(systems) < 3:
        raise ValueError("repeated splits need at least three systems")
    perm = list(rng.permutation(len(systems)))
    n_test = max(1, int(round(fractions[2] * len(systems))))
    n_val = max(1, int(round(fractions[1] * len(systems))))
    n_val = min(n_val, len(systems) - n_test - 1)
    test = sorted(systems[i] for i in perm[:n_test])
    val = sorted(systems[i] for i in perm[n_test:n_test + n_val])
    tr = sorted(systems[i] for i in perm[n_test + n_val:])
    return tr, val, test


def repeated_splits(data, task: str | TaskSpec, trainer: Trainer | None = None, repeats: int = 30,
                    fractions=(0.6, 0.2, 0.2), seed: int = 0, tagger: PosTagger | None = None) -> ProtocolResult:
    """Repeated random system-level train/validation/test splits; mean and std over repeats."""
    task = get_task(task)
    trainer = trainer or encoder_trainer()
    samples = prepare(data, task, tagger)
    systems = sorted({s.system for s in samples})
    rng = np.random.default_rng(seed)
    rows = []
    for rep in range(repeats):
        tr_sys, va_sys, te_sys = system_split(systems, fractions, rng)
        tr = [s for s in samples if s.system in tr_sys]
        va = [s for s in samples if s.system in va_sys]
        te = [s for s in samples if s.system in te_sys]
        model = trainer(tr, task, validation=va)
        row = _row(f"split{rep}", model, task, len(tr), te)
        row["systems"] = {"train": tr_sys, "validation": va_sys, "test": te_sys}
        rows.append(row)
    return _summarize("repeated-splits", task, rows)

