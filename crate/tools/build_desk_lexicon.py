"""Builds the bundled desk-scale valence lexicon and modifier word lists.

Draws from the reference VADER distribution (pip package `vaderSentiment`):
every lexicon entry that occurs in the sentiment fixture utterances, topped up
with an evenly spaced sample of strongly valenced single words until the
lexicon reaches the target size.
"""
import os
import string
import sys

from vaderSentiment import vaderSentiment as vs

TARGET = 500
ROOT = os.path.join(os.path.dirname(__file__), "..", "crates", "core")


def load_reference():
    path = os.path.join(os.path.dirname(vs.__file__), "vader_lexicon.txt")
    lex = {}
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.rstrip("\n")
            if not line:
                continue
            word, measure = line.strip().split("\t")[0:2]
            lex[word] = float(measure)
    return lex


def fixture_words():
    words = set()
    with open(os.path.join(ROOT, "tests", "data", "sentiment_utterances.txt"), encoding="utf-8") as f:
        for line in f:
            for tok in line.split():
                stripped = tok.strip(string.punctuation)
                words.add((tok if len(stripped) <= 2 else stripped).lower())
    return words


def main():
    lex = load_reference()
    chosen = {w for w in fixture_words() if w in lex}
    chosen.add("no")
    pool = sorted(
        w for w, v in lex.items()
        if w.isalpha() and w.islower() and 3 <= len(w) <= 10 and abs(v) >= 2.0 and w not in chosen
    )
    need = TARGET - len(chosen)
    step = len(pool) / need
    chosen.update(pool[int(i * step)] for i in range(need))

    with open(os.path.join(ROOT, "data", "valence_lexicon.tsv"), "w", encoding="utf-8") as f:
        for w in sorted(chosen):
            f.write(f"{w}\t{lex[w]}\n")
    boosters = sorted(w for w, v in vs.BOOSTER_DICT.items() if v > 0)
    dampeners = sorted(w for w, v in vs.BOOSTER_DICT.items() if v < 0)
    with open(os.path.join(ROOT, "data", "boosters.txt"), "w", encoding="utf-8") as f:
        f.write("\n".join(boosters) + "\n")
    with open(os.path.join(ROOT, "data", "dampeners.txt"), "w", encoding="utf-8") as f:
        f.write("\n".join(dampeners) + "\n")
    with open(os.path.join(ROOT, "data", "negations.txt"), "w", encoding="utf-8") as f:
        f.write("\n".join(vs.NEGATE) + "\n")
    print(f"{len(chosen)} lexicon entries", file=sys.stderr)


if __name__ == "__main__":
    main()
