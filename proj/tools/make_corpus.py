#!/usr/bin/env python3
"""Generate a synthetic parliamentary-proceedings corpus, one sentence per line."""

import argparse
import random

SUBJECTS = [
    "the commission", "the council", "this parliament", "the committee", "the presidency",
    "the member states", "our group", "the rapporteur", "the european union", "the government",
    "my colleagues", "the court of auditors", "the agency", "national parliaments", "the union",
]
VERBS = [
    "supports", "rejects", "welcomes", "has adopted", "must examine", "will present", "cannot accept",
    "should strengthen", "has proposed", "intends to review", "is committed to", "calls for",
    "has discussed", "will consider", "needs to improve",
]
OBJECTS = [
    "the proposal", "this report", "the amendment", "the new directive", "the budget",
    "the agreement", "the regulation", "the annual programme", "the common position",
    "the action plan", "the resolution", "the framework", "the joint declaration", "the strategy",
]
TOPICS = [
    "on fisheries", "on energy policy", "on public health", "on the internal market", "on transport safety",
    "on human rights", "on agriculture", "on climate change", "on employment", "on consumer protection",
    "on enlargement", "on regional development", "on research", "on migration", "on food safety",
]
CLAUSES = [
    "because it protects citizens", "in the interest of all member states", "before the end of the year",
    "as soon as possible", "without further delay", "in close cooperation with the council",
    "after a long debate", "on the basis of the treaty", "for the next financial period",
    "despite the concerns of many members", "with the support of the commission",
]
OPENERS = [
    "mr president ,", "madam president ,", "ladies and gentlemen ,", "first of all ,", "in my opinion ,",
    "on behalf of my group ,", "finally ,", "however ,", "i believe that", "we know that",
]
SHORT = [
    "the debate is closed .", "the vote will take place tomorrow .", "the sitting was opened at nine .",
    "i would like to thank the rapporteur .", "we must act now .", "that is not acceptable .",
    "the minutes were approved .", "thank you very much .",
]


def sentence(rng: random.Random) -> str:
    r = rng.random()
    if r < 0.08:
        return rng.choice(SHORT)
    parts = []
    if rng.random() < 0.5:
        parts.append(rng.choice(OPENERS))
    parts += [rng.choice(SUBJECTS), rng.choice(VERBS), rng.choice(OBJECTS), rng.choice(TOPICS)]
    if rng.random() < 0.6:
        parts.append(rng.choice(CLAUSES))
    if rng.random() < 0.25:
        parts += ["and", rng.choice(VERBS), rng.choice(OBJECTS)]
    return " ".join(parts) + " ."


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--sentences", type=int, default=6000)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--out", default="data/sample_corpus.txt")
    args = ap.parse_args()
    rng = random.Random(args.seed)
    with open(args.out, "w", encoding="utf-8") as f:
        for _ in range(args.sentences):
            f.write(sentence(rng) + "\n")
        # A few lines the preprocessing must drop.
        f.write("yes no\n")
        f.write("the café debate is open today .\n")


if __name__ == "__main__":
    main()
