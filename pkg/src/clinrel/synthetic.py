"""Synthetic clinical-style documents for desk-scale testing.

``random_document`` produces arbitrary typed entities over several
sentences with gold relations drawn at random among schema-compatible pairs.
``separable_corpus`` produces documents whose gold labels are a pure function
of the attribute mention's surface word, which a small encoder can learn.
"""

import random

from .corpus import Document, Entity, GoldRelation, segment_sentences

FILLER = ("patient", "was", "given", "for", "the", "noted", "on", "with", "and",
          "daily", "pain", "today", "after", "history", "of", "continue")

SURFACE = {
    "Drug": ("aspirin", "heparin", "lasix", "insulin", "coumadin", "tylenol", "metoprolol"),
    "Strength": ("81mg", "5mg", "40mg", "10units", "2mg", "500mg"),
    "Dosage": ("one", "two", "half", "three"),
    "Route": ("po", "iv", "sq", "topical"),
    "Frequency": ("bid", "tid", "qhs", "qid"),
    "Duration": ("weekly", "monthly", "overnight", "briefly"),
    "Form": ("tablet", "capsule", "patch", "solution"),
    "ADE": ("rash", "bleeding", "nausea", "hives"),
    "Reason": ("afib", "edema", "fever", "hypertension"),
    "Dose": ("one", "two", "half", "three"),
    "Indication": ("afib", "edema", "fever", "hypertension"),
    "Severity": ("mild", "severe", "moderate"),
    "SSLIF": ("cough", "dizziness", "fatigue"),
}


def _types(schema):
    return sorted({t for pair in schema.rules for t in pair})


def _surface(etype, rng):
    words = SURFACE.get(etype)
    if words is None:
        words = tuple(f"{etype.lower()}{i}" for i in range(4))
    return rng.choice(words)


class _Builder:
    def __init__(self):
        self.parts = []
        self.length = 0
        self.entities = {}

    def word(self, w):
        if self.parts and not self.parts[-1].endswith("\n"):
            self.parts.append(" ")
            self.length += 1
        self.parts.append(w)
        self.length += len(w)

    def entity(self, etype, surface):
        self.word("")
        start = self.length
        self.parts.append(surface)
        self.length += len(surface)
        eid = f"T{len(self.entities) + 1}"
        self.entities[eid] = Entity(eid, etype, start, self.length, surface)
        return eid

    def end_sentence(self):
        self.parts.append(".")
        self.length += 1

    def text(self):
        return "".join(self.parts)


def _finish(doc_id, builder, relations):
    text = builder.text()
    return Document(doc_id, text, segment_sentences(text), builder.entities, relations)


def random_document(rng, schema, doc_id="doc", max_sentences=10, max_entities=15,
                    gold_rate=0.3):
    """Random document; every sentence ends with '.' and entities are whole words."""
    types = _types(schema)
    n_sent = rng.randint(1, max_sentences)
    budget = rng.randint(0, max_entities)
    b = _Builder()
    for s in range(n_sent):
        for _ in range(rng.randint(2, 6)):
            if budget and rng.random() < 0.45:
                # surface word drawn independently of the type
                b.entity(rng.choice(types), _surface(rng.choice(types), rng))
                budget -= 1
            else:
                b.word(rng.choice(FILLER))
        b.end_sentence()
    ents = b.entities

    relations = []
    ids = list(ents)
    for i, a in enumerate(ids):
        for c in ids[i + 1:]:
            entries = schema.compatible_categories(ents[a].semantic_type, ents[c].semantic_type)
            if entries and rng.random() < gold_rate:
                cat, (t1, _) = rng.choice(entries)
                if ents[a].semantic_type == t1:
                    arg1, arg2 = a, c
                else:
                    arg1, arg2 = c, a
                relations.append(GoldRelation(f"R{len(relations) + 1}", cat, arg1, arg2))
    return _finish(doc_id, b, relations)


def random_corpus(n_docs, schema, seed=0, **kwargs):
    rng = random.Random(seed)
    return [random_document(rng, schema, f"doc{i:04d}", **kwargs) for i in range(n_docs)]


# ---------------------------------------------------------------------------
# separable corpus

LINKED = {
    "Strength": ("81mg", "40mg"), "Dosage": ("one", "two"), "Route": ("po", "iv"),
    "Frequency": ("bid", "tid"), "Duration": ("weekly", "monthly"),
    "Form": ("tablet", "capsule"), "ADE": ("rash", "hives"), "Reason": ("afib", "edema"),
    "Dose": ("one", "two"), "Indication": ("afib", "edema"),
    "Severity": ("severe", "mild"),
}
UNLINKED = {
    "Strength": ("5mg", "2mg"), "Dosage": ("half", "three"), "Route": ("sq", "topical"),
    "Frequency": ("qhs", "qid"), "Duration": ("overnight", "briefly"),
    "Form": ("patch", "solution"), "ADE": ("nausea", "bleeding"), "Reason": ("fever", "pain"),
    "Dose": ("half", "three"), "Indication": ("fever", "pain"),
    "Severity": ("moderate", "slight"),
}


def separable_document(rng, schema, doc_id, n_sentences=3, max_csd=2):
    """Each sentence holds one anchor mention and one or two partner mentions.

    A partner whose surface word is in ``LINKED`` relates to every compatible
    anchor within ``max_csd`` sentences; one from ``UNLINKED`` relates to none.
    """
    anchor_types = sorted({t for pair in schema.rules for t in pair
                           if sum(t in p for p in schema.rules) > 1}) or [_types(schema)[0]]
    b = _Builder()
    sent_of = {}
    for s in range(n_sentences):
        b.word(rng.choice(("patient", "continue", "started", "given")))
        anchor = rng.choice(anchor_types)
        eid = b.entity(anchor, _surface(anchor, rng))
        sent_of[eid] = s
        partners = sorted({t for pair in schema.rules if anchor in pair for t in pair
                           if t != anchor})
        for _ in range(rng.randint(1, 2)):
            b.word(rng.choice(("with", "at", "for", "and")))
            ptype = rng.choice(partners)
            linked = rng.random() < 0.5
            pool = (LINKED if linked else UNLINKED).get(ptype) or (f"{ptype.lower()}x",)
            eid = b.entity(ptype, rng.choice(pool))
            sent_of[eid] = s
        b.end_sentence()

    ents = b.entities
    relations = []
    ids = list(ents)
    for i, a in enumerate(ids):
        for c in ids[i + 1:]:
            entries = schema.compatible_categories(ents[a].semantic_type, ents[c].semantic_type)
            if len(entries) != 1 or abs(sent_of[a] - sent_of[c]) > max_csd:
                continue
            cat, (t1, _) = entries[0]
            arg1, arg2 = (a, c) if ents[a].semantic_type == t1 else (c, a)
            partner = ents[arg1] if ents[arg1].semantic_type in LINKED else ents[arg2]
            if partner.surface_text in LINKED.get(partner.semantic_type, ()):
                relations.append(GoldRelation(f"R{len(relations) + 1}", cat, arg1, arg2))
    return _finish(doc_id, b, relations)


def separable_corpus(schema, n_pairs=300, seed=13, max_csd=2, n_sentences=3):
    """Documents until at least ``n_pairs`` candidates exist at ``max_csd``."""
    from .candidates import generate_candidates

    rng = random.Random(seed)
    docs, total = [], 0
    while total < n_pairs:
        doc = separable_document(rng, schema, f"syn{len(docs):04d}", n_sentences, max_csd)
        docs.append(doc)
        total += len(generate_candidates(doc, schema, max_csd))
    return docs
