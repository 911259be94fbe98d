"""Template corpus with planted entities and relations, for smoke and overfit runs."""

import random

from .schema import EntitySpan, Relation, Sentence

PEOPLE = ["John", "Mary", "Alice", "Bob", "Carol", "David", "Erin", "Frank"]
SURNAMES = ["Smith", "Jones", "Brown", "Miller"]
PLACES = ["Paris", "London", "Berlin", "Tokyo", "New York", "Rome", "Los Angeles", "Oslo"]
ORGS = ["Acme", "Globex", "Initech", "Umbrella Corp", "Stark Industries", "Hooli"]

# (template, relations as (head slot, tail slot, type)); slots are P, P2, L, O
TEMPLATES = [
    ("{P} lives in {L} .", [("P", "L", "Live_In")]),
    ("{P} works for {O} .", [("P", "O", "Work_For")]),
    ("{O} is based in {L} .", [("O", "L", "Located_In")]),
    ("In {L} , {P} lives happily .", [("P", "L", "Live_In")]),
    ("{P} met {P2} in {L} .", []),
    ("{P} , who works for {O} , lives in {L} .", [("P", "O", "Work_For"), ("P", "L", "Live_In")]),
    ("{P} visited {L} last year .", []),
    ("The office of {O} in {L} hired {P} .", [("O", "L", "Located_In"), ("P", "O", "Work_For")]),
]

SLOT_TYPES = {"P": "PER", "P2": "PER", "L": "LOC", "O": "ORG"}


def _person(rng):
    name = rng.choice(PEOPLE)
    return f"{name} {rng.choice(SURNAMES)}" if rng.random() < 0.4 else name


def _fill(slot, rng, used):
    while True:
        if slot in ("P", "P2"):
            value = _person(rng)
        elif slot == "L":
            value = rng.choice(PLACES)
        else:
            value = rng.choice(ORGS)
        if value not in used:
            return value


def generate(n, seed=0):
    """``n`` sentences, deterministic for a given seed."""
    rng = random.Random(seed)
    sentences = []
    for k in range(n):
        template, rels = TEMPLATES[rng.randrange(len(TEMPLATES))]
        tokens, spans, used = [], {}, set()
        for piece in template.split(" "):
            if piece.startswith("{") and piece.endswith("}"):
                slot = piece[1:-1]
                value = _fill(slot, rng, used)
                used.add(value)
                words = value.split(" ")
                spans[slot] = EntitySpan(len(tokens), len(tokens) + len(words), SLOT_TYPES[slot])
                tokens.extend(words)
            else:
                tokens.append(piece)
        entities = sorted(spans.values())
        relations = [Relation(spans[h], spans[t], r) for h, t, r in rels]
        sentences.append(Sentence(tokens, entities, relations, f"synth-{k}"))
    return sentences
