"""
Is the message descriptive enough?
==================================

Tag each static text with coarse parts of speech, group instructions by
that sequence, and learn which sequences carry enough structure to
describe an event.
"""

from collections import Counter

from logquality import corpus, models, preprocess
from logquality.encoder import ModelConfig

for text in ("Connection refused", "Failed to load dotenv file {}", "{}", "Saving {}"):
    s = preprocess.pos_tag(text)
    print(f"{text!r:34s} {' '.join(s.tags)}")

bundled = corpus.bundled_corpus()
groups = preprocess.group_by_structure(bundled)
print(f"\n{len(bundled)} instructions fall into {len(groups)} structure groups; the largest:")
for key, members in sorted(groups.items(), key=lambda kv: -len(kv[1]))[:6]:
    print(f"  {len(members):4d}  {key}")

# Labels are attached per group, so every member of a group shares one.
labeled = preprocess.apply_group_labels(groups, preprocess.bundled_labels())
print("\nlabel counts:", dict(Counter(labeled.labels)))

# Hold out one project and compare the encoder with exact rule matching.
held_out = "tensorflow"
train = labeled.subset(lambda s: s.system != held_out)
test = labeled.subset(lambda s: s.system == held_out)
cfg = models.TrainConfig.for_task("linguistic", max_epochs=40, lr=1e-3, batch_size=32)
model = models.train(train, "linguistic", cfg, ModelConfig(seed=0))
rules = models.RuleBaseline(models.get_task("linguistic")).fit(models.prepare(train, "linguistic"))
for name, m in (("encoder", model), ("rules", rules)):
    r = models.assess(m, test, "linguistic").metrics()
    print(f"{name:8s} F1 {r.f1:.3f}  specificity {r.specificity:.3f}")

# Structures the rules have never seen are where the learned model helps.
seen = {s.inputs for s in models.prepare(train, "linguistic")}
unseen = [s for s in models.prepare(test, "linguistic") if s.inputs not in seen]
print(f"\n{len(unseen)} held-out instructions have a structure unseen in training, e.g.")
a = models.assess(model, unseen[:5], "linguistic")
for rec in a.records:
    print(f"  {a.task.class_names[rec.predicted]:12s} {rec.text}")
