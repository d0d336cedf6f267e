"""Build crates/core/data/nouns.txt from the WordNet-derived lemma index
shipped in the `spacy-lookups-data` wheel.

    pip download --no-deps spacy-lookups-data -d /tmp/pl
    python3 -m zipfile -e /tmp/pl/spacy_lookups_data-*.whl /tmp/pl/x
    python3 scripts/build_noun_lexicon.py /tmp/pl/x/spacy_lookups_data/data

Lexicon = WordNet noun lemmas + irregular noun plurals, minus
  * general attribute vocabulary (scripts/attribute_words.txt),
  * -ing / -ed forms derivable from a WordNet verb lemma, except the
    concrete nouns listed in scripts/keep_nouns.txt.
"""
import gzip
import json
import os
import sys

src = sys.argv[1]
here = os.path.dirname(os.path.abspath(__file__))


def load(name):
    with gzip.open(os.path.join(src, name), "rt") as f:
        return json.load(f)


index = load("en_lemma_index.json.gz")
exc = load("en_lemma_exc.json.gz")
rules = load("en_lemma_rules.json.gz")

nouns = set(index["noun"])
verbs = set(index["verb"])
with open(os.path.join(here, "attribute_words.txt")) as f:
    attrs = {l.strip() for l in f if l.strip()}
with open(os.path.join(here, "keep_nouns.txt")) as f:
    keep = {l.strip() for l in f if l.strip()}


def verb_form(word):
    if any(lemma != word for lemma in exc["verb"].get(word, [])):
        return True
    for suffix, repl in rules["verb"]:
        if suffix and word.endswith(suffix):
            stem = word[: len(word) - len(suffix)]
            if len(stem) >= 3 and stem + repl in verbs:
                return True
    return False


lexicon = {
    w
    for w in nouns | set(exc["noun"].keys())
    if w not in attrs
    and (w in keep or not ((w.endswith("ing") or w.endswith("ed")) and verb_form(w)))
}

out = os.path.join(here, "..", "crates", "core", "data", "nouns.txt")
with open(out, "w") as f:
    for w in sorted(lexicon):
        f.write(w + "\n")
print(f"wrote {len(lexicon)} nouns to {out}")
