"""
Which words drove the suggestion?
=================================

Shapley values over the tokens of a static text, first on a two-message
toy model and then on a model trained on the bundled corpus.
"""

from logquality import corpus, models
from logquality.encoder import ModelConfig
from logquality.explain import explain_prediction, shapley_values
from logquality.corpus import LogInstruction


def instruction(text, level, line):
    return LogInstruction("toy", "toy.py", line, f'log.{level}("{text}")', text, level, 0)


# Two messages that differ in one word only.
toy = models.train([instruction("Connection established", "info", 1), instruction("Connection refused", "error", 2)],
                   "ie", models.TrainConfig(batch_size=2, max_epochs=300, patience=300, lr=1e-2, seed=0),
                   ModelConfig(max_len=6, d=4, heads=1, layers=1, seed=0))

# Explain the info score of the refused message: the word pulling it away
# from info should come first, with a negative sign.
ex = explain_prediction(toy, "Connection refused", class_index=0)
for t in ex.tokens:
    print(f"{t.rank}. {t.token:10s} r={t.intensity:.4f} sign {t.sign}")

# Per-token values add up to the score change from the all-padding input.
idx = toy.encoder.encode(["connection", "refused"])
attr = shapley_values(toy.encoder, idx, 0)
print(f"sum of token values {attr.token_values.sum():+.6f} = {attr.v_full:.6f} - {attr.v_empty:.6f}")

# A desk-scale info/error model and an antonym pair. The second text is
# still scored as info, yet its first-ranked word is the one pulling away.
bundled = corpus.bundled_corpus()
cfg = models.TrainConfig(batch_size=32, lr=1e-3, class_weight="balanced", max_epochs=40, patience=5, seed=0)
model = models.train(bundled, "ie", cfg, ModelConfig(seed=0))
for text in ("TensorFlow version {} available.", "TensorFlow version {} unavailable."):
    ex = explain_prediction(model, text)
    ranked = ", ".join(f"{t.token}({t.sign})" for t in ex.tokens)
    print(f"\n{text!r} -> {ex.class_name}\n  {ranked}")

# Long messages switch to permutation sampling; the seed fixes the result.
long = ("Failed reading store config {} primary replica shard after retries "
        "shared volume mount timeout exceeded disk quota checkpoint")
ex = explain_prediction(model, long, budget=256, seed=1)
print(f"\n{ex.mode} mode, top three: {[t.token for t in ex.tokens[:3]]}")
