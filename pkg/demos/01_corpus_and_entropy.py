"""
Where log levels are ambiguous
==============================

Extract log instructions from a small source tree, then look at the
bundled corpus: how much does the wording of a message tell us about its
level?
"""

import tempfile
from pathlib import Path

import numpy as np

from logquality import analysis, corpus

# A tiny project with one Python and one Java file.
root = Path(tempfile.mkdtemp()) / "shop"
(root / "py").mkdir(parents=True)
(root / "py" / "orders.py").write_text(
    'log.info("Order %s accepted", order_id)\n'
    'log.warning("Payment retry %d for order %s", n, order_id)\n'
    'log.error(f"Payment for {order_id} declined")\n'
    'log.debug("cart contents: %r", cart)\n'
)
(root / "Stock.java").write_text(
    'class Stock {\n'
    '  void check() {\n'
    '    LOG.error("Item " + sku + " out of stock");\n'
    '  }\n'
    '}\n'
)
shop = corpus.extract_tree(root, [corpus.builtin_grammar("python"), corpus.builtin_grammar("java")], "shop")
for inst in shop:
    print(f"{inst.level:8s} {inst.static_text!r:40s} vars={inst.variable_count}  {inst.file_path}:{inst.line}")
print("skipped levels:", dict(shop.skipped_levels))

# The bundled corpus: a few thousand instructions from open-source Python projects.
bundled = corpus.bundled_corpus()
print("\nbundled corpus:", len(bundled), "instructions")
for system, n in sorted(bundled.provenance.items()):
    print(f"  {system:14s} {n}")

# Normalized entropy of the level distribution for every n-gram of the
# static text. Zero means an n-gram appears under one level only.
dist = analysis.entropy_distribution(bundled)
for n in analysis.NS:
    values = np.array(list(dist.per_n[n].values()))
    print(f"n={n}: {len(values):6d} n-grams, {np.mean(values == 0):.1%} with zero entropy")
s = dist.pooled
print(f"pooled quartiles: {s.min:.3f} {s.q1:.3f} {s.median:.3f} {s.q3:.3f} {s.max:.3f}")

# Words that show up under all three levels alike.
uni = dist.per_n[1]
print("most ambiguous words:", [g[0] for g, h in sorted(uni.items(), key=lambda kv: -kv[1])[:8]])

# Shared vocabulary between pairs of levels (Jaccard overlap of n-gram sets).
for pair, value in analysis.overlap_matrix(bundled).items():
    print(f"overlap {pair:14s} {value:.3f}")
