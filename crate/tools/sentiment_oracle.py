"""Labels the sentiment fixture with the reference VADER implementation.

The analyzer is loaded with the bundled desk lexicon (not the full
distribution lexicon) and with emoji translation disabled, so its output is
directly comparable to the Rust classifier. Output columns:
text<TAB>label<TAB>compound (compound rounded to 4 places as VADER reports).
"""
import os

from vaderSentiment.vaderSentiment import SentimentIntensityAnalyzer

ROOT = os.path.join(os.path.dirname(__file__), "..", "crates", "core")


def main():
    analyzer = SentimentIntensityAnalyzer()
    lex = {}
    with open(os.path.join(ROOT, "data", "valence_lexicon.tsv"), encoding="utf-8") as f:
        for line in f:
            word, measure = line.rstrip("\n").split("\t")
            lex[word] = float(measure)
    analyzer.lexicon = lex
    analyzer.emojis = {}

    src = os.path.join(ROOT, "tests", "data", "sentiment_utterances.txt")
    dst = os.path.join(ROOT, "tests", "data", "sentiment_oracle.tsv")
    with open(src, encoding="utf-8") as f, open(dst, "w", encoding="utf-8") as out:
        for line in f:
            text = line.rstrip("\n")
            compound = analyzer.polarity_scores(text)["compound"]
            if compound >= 0.05:
                label = "positive"
            elif compound <= -0.05:
                label = "negative"
            else:
                label = "neutral"
            out.write(f"{text}\t{label}\t{compound}\n")


if __name__ == "__main__":
    main()
