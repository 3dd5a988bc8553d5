"""
Suggesting log levels
=====================

Train the info/error model on every bundled system but one, then check
its suggestions on the held-out project.
"""

from logquality import corpus, models
from logquality.analysis import contingency
from logquality.encoder import ModelConfig

bundled = corpus.bundled_corpus()
held_out = "marimo"
train = bundled.subset(lambda s: s.system != held_out)
# Instructions outside info/error, or with nothing but variables, are left out.
test = models.prepare(bundled.subset(lambda s: s.system == held_out), "ie")

# Small batches and balanced class weights suit a corpus of this size.
cfg = models.TrainConfig(batch_size=32, lr=1e-3, class_weight="balanced", max_epochs=40, patience=5, seed=0)
model = models.train(train, "ie", cfg, ModelConfig(seed=0))
for rec in model.log[-3:]:
    print(f"epoch {rec.epoch}: train loss {rec.train_loss:.4f}, validation loss {rec.val_loss:.4f}")

assessment = models.assess(model, test)
m = assessment.metrics()
print(f"\n{held_out}: accuracy {m.accuracy:.3f}, macro F1 {m.f1:.3f}, AUC {m.auc:.3f}")

# A bag-of-n-grams classifier for comparison.
baseline = models.baseline_ngram_classifier(train, "ie")
b = models.assess(baseline, test).metrics()
print(f"n-gram baseline: accuracy {b.accuracy:.3f}, macro F1 {b.f1:.3f}")

# Where the model disagrees with the developer, most confident first.
report = assessment.to_report()
print(f"\n{report['summary']['disagree']} disagreements, e.g.")
for row in report["disagreements"][:8]:
    print(f"  {row['label']:5s} -> {row['predicted']:5s} {max(row['scores']):.2f}  {row['text'][:70]}")

table = contingency(assessment)
print("\ncounts (rows: developer level, columns: suggested level)")
for name, row in zip(table.classes, table.counts):
    print(f"  {name:5s} {row}")
