"""Rebuild the bundled multi-system corpus from installed, permissively licensed packages.

usage: python scripts/build_corpus.py [--out src/logquality/data/corpus.jsonl]
"""

import argparse
import importlib.util
from collections import Counter
from pathlib import Path

from logquality.corpus import builtin_grammar, extract_tree, merge, write_dataset

# package -> license of the installed distribution
SYSTEMS = {
    "torch": "BSD-3-Clause",
    "transformers": "Apache-2.0",
    "tensorflow": "Apache-2.0",
    "marimo": "Apache-2.0",
    "pip": "MIT",
    "wandb": "MIT",
    "fontTools": "MIT",
    "datasets": "Apache-2.0",
}
EXCLUDE = ["_vendor", "tests", "test", "testing", "*_test.py", "test_*.py", "vendored", "third_party"]


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="src/logquality/data/corpus.jsonl")
    parser.add_argument("--systems", nargs="*", default=list(SYSTEMS))
    args = parser.parse_args()
    grammar = builtin_grammar("python")
    parts = []
    for name in args.systems:
        spec = importlib.util.find_spec(name)
        root = Path(spec.origin).parent
        ds = extract_tree(root, [grammar], system=name.lower(), exclude=EXCLUDE)
        levels = Counter(s.level for s in ds.samples)
        print(f"{name:14s} {len(ds):5d} {dict(levels)} skipped_levels={dict(ds.skipped_levels)} skipped_files={len(ds.skipped)}")
        parts.append(ds)
    write_dataset(merge(parts), args.out)


if __name__ == "__main__":
    main()
