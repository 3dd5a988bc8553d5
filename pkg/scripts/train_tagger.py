"""Train the bundled POS tagger offline.

Training data: the OANC sample shipped in the BSD-licensed ``pattern3`` sdist
(Penn Treebank tags, mapped to the coarse tagset) plus hand-tagged log
messages in ``scripts/data/log_pos_train.txt`` (``word/TAG`` per token, one
message per line).

usage: pip download pattern3 --no-deps -d /tmp/pattern3
       python scripts/train_tagger.py /tmp/pattern3/pattern3-3.0.0.tar.gz
"""

import argparse
import random
import tarfile
from pathlib import Path

from logquality.preprocess import fixed_tag
from logquality.tagger import AveragedPerceptronTagger

OANC_MEMBER = "pattern3-3.0.0/test/corpora/tagged-en-oanc.txt"
HERE = Path(__file__).parent

BE = {"be", "is", "are", "was", "were", "been", "being", "am", "'s", "'re", "'m", "ai"}
HAVE = {"have", "has", "had", "having", "'ve", "'d"}
DO = {"do", "does", "did"}
SCONJ = {"if", "because", "whether", "although", "though", "unless", "while", "that", "whereas"}
PUNCT_TAGS = {".", ",", ":", "(", ")", "``", "''", '"', "-LRB-", "-RRB-", "HYPH", "NFP"}


def penn_to_coarse(words, tags):
    out = []
    for i, (w, t) in enumerate(zip(words, tags)):
        lw = w.lower()
        nxt = [tt for tt in tags[i + 1:i + 4] if not tt.startswith("RB")][:1]
        if lw in ("not", "n't"):
            c = "PART"
        elif t == "MD":
            c = "AUX"
        elif t.startswith("VB"):
            if lw in BE:
                c = "AUX"
            elif lw in HAVE and nxt and nxt[0] in ("VBN", "VBD"):
                c = "AUX"
            elif lw in DO and nxt and nxt[0] == "VB":
                c = "AUX"
            else:
                c = "VERB"
        elif t.startswith("NN"):
            c = "NOUN"
        elif t.startswith("JJ"):
            c = "ADJ"
        elif t.startswith("RB") or t == "WRB":
            c = "ADV"
        elif t == "IN":
            c = "SCONJ" if lw in SCONJ else "ADP"
        elif t == "TO":
            c = "PART" if tags[i + 1:i + 2] in (["VB"], ["RB"]) else "ADP"
        elif t in ("RP", "POS"):
            c = "PART"
        elif t == "CC":
            c = "CCONJ"
        elif t in ("DT", "PDT", "WDT"):
            c = "DET"
        elif t in ("PRP", "PRP$", "WP", "WP$", "EX"):
            c = "PRON"
        elif t == "CD":
            c = "NUM"
        elif t in ("SYM", "$", "#"):
            c = "SYM"
        elif t in PUNCT_TAGS:
            c = "PUNCT"
        else:
            c = "X"
        out.append(c)
    return out


def read_oanc(tar_path):
    with tarfile.open(tar_path) as tf:
        text = tf.extractfile(OANC_MEMBER).read().decode("utf-8")
    sents = []
    for line in text.splitlines():
        words, tags = [], []
        for item in line.split():
            w, _, t = item.rpartition("/")
            if w:
                words.append(w)
                tags.append(t)
        if words:
            sents.append((words, penn_to_coarse(words, tags)))
    return sents


def read_tagged(path):
    sents = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip() or line.startswith("#"):
            continue
        pairs = [item.rpartition("/") for item in line.split()]
        sents.append(([w for w, _, _ in pairs], [t for _, _, t in pairs]))
    return sents


def augment(sents, rng):
    """Lower-case some sentences and drop final punctuation, as log texts often do."""
    out = []
    for words, tags in sents:
        if rng.random() < 0.3:
            words = [w.lower() for w in words]
        if tags and tags[-1] == "PUNCT" and rng.random() < 0.5:
            words, tags = words[:-1], tags[:-1]
        if words:
            out.append((words, tags))
    return out


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("pattern3_sdist")
    parser.add_argument("--logs", default=str(HERE / "data" / "log_pos_train.txt"))
    parser.add_argument("--log-weight", type=int, default=8)
    parser.add_argument("--iterations", type=int, default=6)
    parser.add_argument("--out", default="src/logquality/data/pos_tagger.json.gz")
    args = parser.parse_args()
    rng = random.Random(0)
    sents = augment(read_oanc(args.pattern3_sdist), rng)
    logs = read_tagged(args.logs) if Path(args.logs).exists() else []
    data = sents + logs * args.log_weight
    print(f"{len(sents)} OANC sentences, {len(logs)} log messages (x{args.log_weight})")
    model = AveragedPerceptronTagger.train(data, iterations=args.iterations, seed=0, fixed=fixed_tag, prune=0.05)
    model.save(args.out)
    print(f"{len(model.weights)} features, {len(model.tagdict)} tagdict entries -> {args.out}")


if __name__ == "__main__":
    main()
