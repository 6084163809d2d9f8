import pytest

from clinrel.corpus import Document, Entity, GoldRelation, segment_sentences
from clinrel.schema import builtin_schema


def make_doc(text, mentions, relations=(), doc_id="d1"):
    """``mentions`` is a list of (type, surface); each surface is found left to right."""
    ents = {}
    cursor = 0
    for i, (etype, surface) in enumerate(mentions, 1):
        start = text.index(surface, cursor)
        cursor = start + len(surface)
        ents[f"T{i}"] = Entity(f"T{i}", etype, start, cursor, surface)
    rels = [GoldRelation(f"R{i}", cat, a1, a2) for i, (cat, a1, a2) in enumerate(relations, 1)]
    return Document(doc_id, text, segment_sentences(text), ents, rels)


@pytest.fixture(scope="session")
def n2c2():
    return builtin_schema("n2c2")


@pytest.fixture(scope="session")
def made():
    return builtin_schema("made1.0")
