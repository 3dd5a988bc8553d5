"""Label every linguistic group of the bundled corpus as sufficient or insufficient.

The labels stand in for a manual annotation pass. A group is insufficient when
its static text carries too few words to describe an event:

* at most two words, or
* at most three words with neither a preposition (ADP) nor a variable slot.

Punctuation, symbols and placeholders are not counted as words. Under this
rubric "NOUN VERB PART" ("EventThread shut down.") is insufficient while
"NOUN VERB PART ADP NOUN PUNCT PLACEHOLDER" is sufficient.

Usage: python scripts/label_groups.py [--out src/logquality/data/structure_labels.jsonl]
"""

import argparse
from collections import Counter

from logquality.corpus import bundled_corpus
from logquality.preprocess import group_by_structure, write_labels

NON_WORDS = {"PUNCT", "SYM", "PLACEHOLDER"}


def rubric(key: str) -> str:
    tags = key.split()
    words = [t for t in tags if t not in NON_WORDS]
    if len(words) <= 2:
        return "insufficient"
    if len(words) <= 3 and "ADP" not in tags and "PLACEHOLDER" not in tags:
        return "insufficient"
    return "sufficient"


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", default="src/logquality/data/structure_labels.jsonl")
    args = parser.parse_args()
    groups = group_by_structure(bundled_corpus())
    labels = {key: rubric(key) for key in groups}
    write_labels(labels, args.out)
    by_group = Counter(labels.values())
    by_inst = Counter(labels[k] for k, members in groups.items() for _ in members)
    print(f"{len(groups)} groups: {dict(by_group)}; instructions: {dict(by_inst)}")


if __name__ == "__main__":
    main()
