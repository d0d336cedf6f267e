#!/usr/bin/env python3
"""Generate the test fixtures under fixtures/.

    synthetic50.jsonl / synthetic50.kb.toml   evolution corpus and its offline knowledge base
    stats20.jsonl / stats20.expected.json     hand-built stats corpus and its expected metrics
    eval100.jsonl / eval100.responses.jsonl / eval100.kb.toml
                                              100 samples, 37 of which are judged correct

Output is deterministic; rerun after changing the generator and commit the result.
"""

import json
import random
import re
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
OUT = ROOT / "fixtures"
NOUNS = ROOT / "crates" / "core" / "data" / "nouns.txt"

TEMPLATE = "What is the {relation} of the thing in this picture?"
RELATIONS = [
    "made_of", "found_in", "used_for", "part_of", "worn_by", "located_in",
    "produced_by", "associated_with", "served_with", "kept_in", "belongs_to", "grown_in",
]
VISUAL_RELATIONS = ["is on", "holds", "is next to", "is under", "carries", "is behind"]
TEXTUAL_RELATIONS = ["is a type of", "is often near", "is commonly paired with", "typically contains"]
RESERVED = {w for r in RELATIONS + VISUAL_RELATIONS + TEXTUAL_RELATIONS for w in re.split(r"[ _]", r)}
RESERVED |= set("what is the of thing in this picture image depict contain have color".split())


def load_nouns():
    words = []
    for line in NOUNS.read_text().splitlines():
        w = line.strip()
        if re.fullmatch(r"[a-z]{4,9}", w) and w not in RESERVED:
            words.append(w)
    return sorted(set(words))


class Pool:
    """Draws entities without replacement so that knowledge never collides across samples."""

    def __init__(self, rng, words):
        self.words = words[:]
        rng.shuffle(self.words)

    def take(self):
        return self.words.pop().upper()


def toml_str(s):
    return json.dumps(s)


def toml_triplets(ts):
    return "[" + ", ".join("[" + ", ".join(toml_str(x) for x in t) + "]" for t in ts) + "]"


def build_synthetic(rng, pool):
    samples, extraction, knowledge, verdicts = [], {}, {}, []
    number = iter(range(1000, 9999, 7))
    flag_hops = {9: 2, 31: 1}

    def explore(sample_idx, node, key_subjects, level, depth):
        """Attach knowledge to `node` for hop `level` and recurse into accepted candidates."""
        if level > depth:
            # One hop too far: either nothing is known, or every candidate is filtered out.
            if level == depth + 1 and rng.random() < 0.5:
                cands = [[node, rng.choice(RELATIONS), str(next(number))]]
                cands.append([node, rng.choice(RELATIONS), rng.choice(sorted(key_subjects))])
                knowledge[node] = cands
            return
        accepted = []
        n_accept = 1 if sample_idx in flag_hops else rng.choice([1, 1, 2])
        for _ in range(n_accept):
            obj = pool.take()
            rel = rng.choice(RELATIONS)
            if flag_hops.get(sample_idx) == level:
                # The generated question will name its own answer.
                rel = f"kept_in_{obj.lower()}"
            accepted.append([node, rel, obj])
        rejected = []
        if rng.random() < 0.5:
            rejected.append([node, rng.choice(RELATIONS), str(next(number))])
        if rng.random() < 0.5:
            rejected.append([node, rng.choice(RELATIONS), rng.choice(sorted(key_subjects))])
        if rng.random() < 0.4:
            t = [node, rng.choice(RELATIONS), pool.take()]
            rejected.append(t)
            verdicts.append((t, "no"))
        cands = accepted + rejected
        rng.shuffle(cands)
        knowledge[node] = cands
        for t in accepted:
            explore(sample_idx, t[2], key_subjects | {node}, level + 1, depth)

    non_nouns = ["26", "3", "1990", "12", "7", "450", "2", "64"]
    for i in range(50):
        sid = f"s{i:02d}"
        a, b, c, d, e = (pool.take() for _ in range(5))
        v1 = ["IMAGE", "depict", a]
        v2 = [a, rng.choice(VISUAL_RELATIONS), b]
        v3 = ["IMAGE", "contain", d]
        t2 = [a, rng.choice(TEXTUAL_RELATIONS), e]
        question = f"What is the {b.lower()} near the {a.lower()} associated with?"
        if i < 3:
            # Textual-only key: dropped.
            t1 = [b, rng.choice(TEXTUAL_RELATIONS), c]
            visual, textual, key = [v1, v2, v3], [t1, t2], ["T1", "T2"]
            answer = c.lower()
            depth = 0
        elif i < 11:
            # Non-noun answer; the longest noun path IMAGE -> a -> b -> c has three edges.
            answer = non_nouns[i - 3]
            t1 = [b, rng.choice(TEXTUAL_RELATIONS), c]
            t3 = [a, "has count", answer]
            visual, textual, key = [v1, v2, v3], [t1, t2, t3], ["V1", "T3"]
            question = f"How many {b.lower()} are there near the {a.lower()}?"
            depth = rng.choice([1, 2, 3, 3])
        else:
            t1 = [b, rng.choice(TEXTUAL_RELATIONS), c]
            visual, textual, key = [v1, v2, v3], [t1, t2], ["V1", "V2", "T1"]
            answer = c.lower()
            depth = rng.choice([1, 2, 3, 3, 3])
        samples.append({
            "sample_id": sid,
            "image": f"images/{sid}.jpg",
            "question": question,
            "answer": answer,
            "source": "synthetic",
        })
        extraction[sid] = (visual, textual, key)
        if i >= 3:
            explore(i, c, {"IMAGE", a, b}, 1, depth)
    return samples, extraction, knowledge, verdicts


def write_synthetic(rng, pool):
    samples, extraction, knowledge, verdicts = build_synthetic(rng, pool)
    with open(OUT / "synthetic50.jsonl", "w") as f:
        for s in samples:
            f.write(json.dumps(s) + "\n")
    lines = [
        "# Offline knowledge base for synthetic50.jsonl; generated by scripts/make_fixtures.py.",
        "",
        "[defaults]",
        'verdict = "yes"',
        'judge = "no"',
        f"question_template = {toml_str(TEMPLATE)}",
        "",
    ]
    for sid, (visual, textual, key) in extraction.items():
        lines += [
            f"[extraction.{sid}]",
            f"visual = {toml_triplets(visual)}",
            f"textual = {toml_triplets(textual)}",
            f"key = {json.dumps(key)}",
            "",
        ]
    lines.append("[knowledge]")
    for subject, ts in knowledge.items():
        lines.append(f"{toml_str(subject)} = {toml_triplets(ts)}")
    lines.append("")
    for t, v in verdicts:
        lines += ["[[verdict]]", f"triplet = {json.dumps(t)}", f'verdict = "{v}"', ""]
    (OUT / "synthetic50.kb.toml").write_text("\n".join(lines))


STATS_ROWS = [
    ("What is this?", "a cat", [("IMAGE", "depict", "CAT"), ("CAT", "is a", "ANIMAL")]),
    ("What sport is being played here?", "tennis", [("IMAGE", "depict", "RACKET"), ("RACKET", "used for", "TENNIS"), ("IMAGE", "contain", "NET")]),
    ("Which country does this dish come from?", "italy", [("IMAGE", "depict", "PIZZA"), ("PIZZA", "originates from", "ITALY")]),
    ("What is the man holding?", "an umbrella", [("IMAGE", "depict", "MAN"), ("MAN", "holds", "UMBRELLA")]),
    ("How many wheels does this vehicle usually have?", "4", [("IMAGE", "depict", "CAR"), ("CAR", "usually have", "4 WHEELS")]),
    ("What is the traditional clothing of the country where this animal is commonly found?", "kilt",
     [("IMAGE", "depict", "SHEEP"), ("SHEEP", "commonly found in", "SCOTLAND"), ("SCOTLAND", "traditional_clothing", "KILT")]),
    ("What  color is   the bus?", "yellow", [("IMAGE", "depict", "BUS"), ("BUS", "have color", "yellow")]),
    ("Who invented this device?", "thomas edison", [("IMAGE", "depict", "LIGHT BULB"), ("LIGHT BULB", "Invented By", "THOMAS EDISON")]),
    ("What is the animal eating?", "grass", [("IMAGE", "depict", "COW"), ("COW", "eats", "GRASS"), ("COW", "is on", "FIELD"), ("FIELD", "Is On", "FARM")]),
    ("What material is this bench made of?", "wood", [("IMAGE", "depict", "BENCH"), ("BENCH", "made_of", "WOOD")]),
    ("Where would you find this kind of bird?", "near the ocean", [("IMAGE", "depict", "SEAGULL"), ("SEAGULL", "found in", "OCEAN")]),
    ("What is the weather like?", "sunny", [("IMAGE", "depict", "SKY"), ("SKY", "have color", "blue")]),
    ("Which meal of the day is shown?", "breakfast", [("IMAGE", "depict", "EGGS"), ("EGGS", "eaten at", "BREAKFAST"), ("IMAGE", "contain", "TOAST")]),
    ("What game console is the controller for?", "xbox", [("IMAGE", "depict", "CONTROLLER"), ("CONTROLLER", "part_of", "XBOX")]),
    ("What is the name of the famous clock tower in the city shown?", "big ben",
     [("IMAGE", "depict", "CLOCK TOWER"), ("CLOCK TOWER", "located in", "LONDON"), ("LONDON", "famous for", "BIG BEN")]),
    ("What does this sign mean?", "stop", [("IMAGE", "depict", "SIGN"), ("SIGN", "means", "STOP")]),
    ("What fruit is on the table?", "banana", [("IMAGE", "depict", "TABLE"), ("TABLE", "holds", "BANANA")]),
    ("What kind of tree is this?", "palm tree", [("IMAGE", "depict", "TREE"), ("TREE", "is a type of", "PALM TREE"), ("PALM TREE", "grown in", "TROPICS")]),
    ("Which holiday is being celebrated?", "christmas", [("IMAGE", "depict", "TREE"), ("TREE", "decorated for", "CHRISTMAS")]),
    ("What is the dog catching in its mouth?", "a frisbee", [("IMAGE", "depict", "DOG"), ("DOG", "catches", "FRISBEE"), ("FRISBEE", "made of", "PLASTIC")]),
]


def write_stats():
    with open(OUT / "stats20.jsonl", "w") as f:
        for i, (q, a, ts) in enumerate(STATS_ROWS):
            row = {
                "sample_id": f"t{i:02d}",
                "image": f"images/t{i:02d}.jpg",
                "question": q,
                "answer": a,
                "key_triplets": [[s, r, o, "V" if s == "IMAGE" else "T"] for s, r, o in ts],
            }
            f.write(json.dumps(row) + "\n")
    n = len(STATS_ROWS)
    relations = {" ".join(r.split()).lower() for _, _, ts in STATS_ROWS for _, r, _ in ts}
    expected = {
        "samples": n,
        "question_words": sum(len(q.split()) for q, _, _ in STATS_ROWS) / n,
        "answer_words": sum(len(a.split()) for _, a, _ in STATS_ROWS) / n,
        "mean_key_size": sum(len(ts) for _, _, ts in STATS_ROWS) / n,
        "distinct_relations": len(relations),
    }
    (OUT / "stats20.expected.json").write_text(json.dumps(expected, indent=2) + "\n")


def write_eval(rng, pool):
    rows, responses, judge = [], [], []
    kinds = ["exact"] * 20 + ["yes"] * 17 + ["no"] * 40 + ["default"] * 15 + ["weird"] * 5 + ["missing"] * 3
    rng.shuffle(kinds)
    correct = 0
    for i, kind in enumerate(kinds):
        sid = f"e{i:03d}"
        answer = pool.take().lower()
        rows.append({"sample_id": sid, "image": f"images/{sid}.jpg", "question": "What is shown?", "answer": answer, "hop": 0})
        if kind == "missing":
            continue
        if kind == "exact":
            response = rng.choice([answer.upper(), f"  {answer.capitalize()} ", answer])
            correct += 1
        else:
            response = f"it looks like a {pool.take().lower()}"
        if kind == "yes":
            judge.append((response, answer, "yes"))
            correct += 1
        elif kind == "no":
            judge.append((response, answer, "no"))
        responses.append({"sample_id": sid, "response": response})
    assert correct == 37, correct
    rng.shuffle(responses)
    with open(OUT / "eval100.jsonl", "w") as f:
        for r in rows:
            f.write(json.dumps(r) + "\n")
    with open(OUT / "eval100.responses.jsonl", "w") as f:
        for r in responses:
            f.write(json.dumps(r) + "\n")
    lines = ["# Scripted judge for eval100; generated by scripts/make_fixtures.py.", "", "[defaults]", 'judge = "no"', ""]
    for response, answer, verdict in judge:
        lines += ["[[judge]]", f"response = {toml_str(response)}", f"answer = {toml_str(answer)}", f'verdict = "{verdict}"', ""]
    (OUT / "eval100.kb.toml").write_text("\n".join(lines))


def main():
    OUT.mkdir(exist_ok=True)
    words = load_nouns()
    rng = random.Random(20240517)
    pool = Pool(rng, words)
    write_synthetic(rng, pool)
    write_stats()
    write_eval(rng, pool)


if __name__ == "__main__":
    main()
