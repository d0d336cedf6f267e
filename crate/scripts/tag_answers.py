"""Freeze head-token POS labels for the noun-filter agreement fixture using
TextBlob's bundled Pattern tagger (offline, independent of WordNet).

    pip install textblob
    python3 scripts/tag_answers.py answers.txt > crates/core/tests/fixtures/pos_answers.tsv
"""
import sys

from textblob.en.taggers import PatternTagger

tagger = PatternTagger()
print("# answer\thead_tag\tlabel")
with open(sys.argv[1]) as f:
    for line in f:
        answer = line.strip()
        if not answer:
            continue
        head = tagger.tag(answer)[-1][1]
        label = "noun" if head.startswith("NN") else "other"
        print(f"{answer}\t{head}\t{label}")
