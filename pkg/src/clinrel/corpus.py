"""Standoff corpus model: documents, entities, gold relations, sentences.

Annotations follow the BRAT standoff layout::

    T1<TAB>Drug 0 7<TAB>aspirin
    R1<TAB>Strength-Drug Arg1:T2 Arg2:T1

Document text lives in a sibling ``<doc_id>.txt`` file next to
``<doc_id>.ann``.
"""

import logging
import re
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from pathlib import Path

from .errors import (
    DanglingReference,
    DataError,
    MalformedLine,
    OffsetOutOfRange,
    UnassignedEntity,
)

logger = logging.getLogger(__name__)

ANN_SUFFIX = ".ann"
TXT_SUFFIX = ".txt"


@dataclass(frozen=True)
class SentenceSpan:
    index: int
    start: int
    end: int


@dataclass(frozen=True)
class Entity:
    entity_id: str
    semantic_type: str
    start: int
    end: int
    surface_text: str


@dataclass(frozen=True)
class GoldRelation:
    relation_id: str
    category: str
    arg1: str
    arg2: str


@dataclass
class Document:
    doc_id: str
    text: str
    sentences: list = field(default_factory=list)
    entities: dict = field(default_factory=dict)
    gold_relations: list = field(default_factory=list)

    def sentence_index_of(self, entity):
        return sentence_index_of(self, entity)


# ---------------------------------------------------------------------------
# sentence segmentation

_TERMINATOR = re.compile(r"[.!?]+(?=\s)")


def segment_sentences(text, newline_boundary=True):
    """Split ``text`` into sentence spans.

    A boundary falls after a run of ``.``, ``!`` or ``?`` that is followed by
    whitespace and, when ``newline_boundary`` is set, at every line break.
    Spans never include leading or trailing whitespace.
    """
    cuts = set()
    for m in _TERMINATOR.finditer(text):
        cuts.add(m.end())
    if newline_boundary:
        for m in re.finditer(r"\n", text):
            cuts.add(m.start())

    spans = []
    prev = 0
    for cut in sorted(cuts) + [len(text)]:
        start, end = prev, cut
        while start < end and text[start].isspace():
            start += 1
        while end > start and text[end - 1].isspace():
            end -= 1
        if start < end:
            spans.append(SentenceSpan(len(spans), start, end))
        prev = cut
    if not spans and text:
        # whitespace-only text still yields one sentence
        spans.append(SentenceSpan(0, 0, len(text)))
    return spans


def _cover_entity_starts(spans, entities, text_len):
    """Stretch spans so that every entity start offset lies inside one.

    An entity starting in an inter-sentence gap is pulled into the sentence
    that follows it (or the last sentence when none follows).
    """
    if not entities:
        return spans
    starts = sorted({e.start for e in entities})
    spans = list(spans) or [SentenceSpan(0, 0, text_len)]
    bounds = [[s.start, s.end] for s in spans]
    for off in starts:
        if any(b[0] <= off < b[1] for b in bounds):
            continue
        following = [b for b in bounds if b[0] > off]
        if following:
            following[0][0] = off
        else:
            bounds[-1][1] = max(bounds[-1][1], off + 1)
    return [SentenceSpan(i, b[0], b[1]) for i, b in enumerate(bounds)]


def sentence_index_of(document, entity):
    """Index of the sentence containing ``entity.start``."""
    for sent in document.sentences:
        if sent.start <= entity.start < sent.end:
            return sent.index
    raise UnassignedEntity(
        f"{document.doc_id}: entity {entity.entity_id} at offset {entity.start} "
        "is outside every sentence"
    )


# ---------------------------------------------------------------------------
# standoff parsing / writing

_ENTITY_LINE = re.compile(r"^(T\d+)\t(\S+) (\d+ \d+(?:;\d+ \d+)*)\t(.*)$")
_RELATION_LINE = re.compile(r"^(R\d+)\t(\S+) Arg1:(T\d+) Arg2:(T\d+)\s*$")


def _norm_ws(s):
    return " ".join(s.split())


def parse_standoff(annotation_text, document_text, doc_id, newline_boundary=True,
                   discontinuous="error"):
    """Parse a standoff annotation string into a :class:`Document`.

    Only ``T`` and ``R`` records are interpreted; other BRAT record kinds
    (``A``, ``E``, ``N``, ``#``, ``*`` ...) are skipped. ``discontinuous``
    controls fragment lists such as ``10 15;20 25``: ``"error"`` rejects them,
    ``"hull"`` keeps the covering span from the first start to the last end.
    """
    entities = {}
    relations = []
    for line_no, raw in enumerate(annotation_text.splitlines(), 1):
        line = raw.rstrip("\r")
        if not line.strip():
            continue
        kind = line[0]
        if kind == "T":
            m = _ENTITY_LINE.match(line)
            if m is None:
                raise MalformedLine("bad entity record", line_no, line)
            eid, etype, offsets, surface = m.groups()
            fragments = [tuple(map(int, f.split())) for f in offsets.split(";")]
            if len(fragments) > 1 and discontinuous != "hull":
                raise MalformedLine("discontinuous entity span", line_no, line)
            start, end = fragments[0][0], fragments[-1][1]
            if not 0 <= start < end:
                raise MalformedLine("empty or inverted span", line_no, line)
            if end > len(document_text):
                raise OffsetOutOfRange(
                    f"{doc_id}: {eid} span {start}..{end} exceeds text length "
                    f"{len(document_text)}"
                )
            actual = document_text[start:end]
            if len(fragments) == 1 and _norm_ws(actual) != _norm_ws(surface):
                raise MalformedLine(
                    f"surface text does not match document text {actual!r}", line_no, line
                )
            if eid in entities:
                raise MalformedLine(f"duplicate entity id {eid}", line_no, line)
            entities[eid] = Entity(eid, etype, start, end, actual)
        elif kind == "R":
            m = _RELATION_LINE.match(line)
            if m is None:
                raise MalformedLine("bad relation record", line_no, line)
            rid, category, a1, a2 = m.groups()
            if a1 == a2:
                raise MalformedLine("relation arguments must differ", line_no, line)
            relations.append(GoldRelation(rid, category, a1, a2))
        else:
            continue

    for rel in relations:
        for arg in (rel.arg1, rel.arg2):
            if arg not in entities:
                raise DanglingReference(
                    f"{doc_id}: relation {rel.relation_id} references unknown entity {arg}"
                )

    sentences = segment_sentences(document_text, newline_boundary=newline_boundary)
    sentences = _cover_entity_starts(sentences, entities.values(), len(document_text))
    return Document(doc_id, document_text, sentences, entities, relations)


def entity_line(entity):
    surface = re.sub(r"\s", " ", entity.surface_text)
    return f"{entity.entity_id}\t{entity.semantic_type} {entity.start} {entity.end}\t{surface}"


def relation_line(relation_id, category, arg1, arg2):
    return f"{relation_id}\t{category} Arg1:{arg1} Arg2:{arg2}"


def to_standoff(document, include_entities=True, include_relations=True):
    """Serialize a document's annotations back to standoff text."""
    lines = []
    if include_entities:
        lines.extend(entity_line(e) for e in document.entities.values())
    if include_relations:
        lines.extend(
            relation_line(r.relation_id, r.category, r.arg1, r.arg2)
            for r in document.gold_relations
        )
    return "".join(line + "\n" for line in lines)


def read_document(ann_path, newline_boundary=True, discontinuous="error"):
    ann_path = Path(ann_path)
    txt_path = ann_path.with_suffix(TXT_SUFFIX)
    text = txt_path.read_text(encoding="utf-8")
    ann = ann_path.read_text(encoding="utf-8")
    return parse_standoff(ann, text, ann_path.stem, newline_boundary=newline_boundary,
                          discontinuous=discontinuous)


def load_corpus(directory, newline_boundary=True, discontinuous="error"):
    """Load every ``*.ann``/``*.txt`` pair in ``directory``, sorted by doc id."""
    directory = Path(directory)
    if not directory.is_dir():
        raise DataError(f"corpus directory not found: {directory}")
    ann_files = sorted(directory.glob("*" + ANN_SUFFIX))
    if not ann_files:
        raise DataError(f"no {ANN_SUFFIX} files in {directory}")
    docs = []
    for ann_path in ann_files:
        if not ann_path.with_suffix(TXT_SUFFIX).exists():
            raise DataError(f"missing text file for {ann_path.name}")
        try:
            docs.append(read_document(ann_path, newline_boundary, discontinuous))
        except DataError as exc:
            raise type(exc)(f"{ann_path.name}: {exc}") from exc
    return docs


def write_document(document, directory):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    (directory / (document.doc_id + TXT_SUFFIX)).write_text(document.text, encoding="utf-8")
    (directory / (document.doc_id + ANN_SUFFIX)).write_text(
        to_standoff(document), encoding="utf-8"
    )


# ---------------------------------------------------------------------------
# BioC XML converter


def bioc_to_standoff(xml_text):
    """Convert a BioC XML collection into ``(doc_id, text, annotation_text)``.

    Thin by design: passages are laid out at their declared offsets, every
    ``annotation`` becomes a T-line (first ``location`` only, plus the covering
    span when several are given) and every ``relation`` with two ``node``
    children becomes an R-line.
    """
    root = ET.fromstring(xml_text)
    out = []
    for doc in root.iter("document"):
        doc_id = (doc.findtext("id") or "").strip()
        chars = []
        entity_ids = {}
        t_lines = []
        r_lines = []
        annotations = []
        relations = []
        for passage in doc.iter("passage"):
            offset = int(passage.findtext("offset") or 0)
            ptext = passage.findtext("text") or ""
            if len(chars) < offset:
                chars.extend(" " * (offset - len(chars)))
            chars[offset:offset + len(ptext)] = list(ptext)
            annotations.extend(passage.findall("annotation"))
            relations.extend(passage.findall("relation"))
        annotations.extend(doc.findall("annotation"))
        relations.extend(doc.findall("relation"))
        text = "".join(chars)

        for ann in annotations:
            locs = ann.findall("location")
            if not locs:
                continue
            spans = [(int(l.get("offset")), int(l.get("offset")) + int(l.get("length")))
                     for l in locs]
            start = min(s for s, _ in spans)
            end = max(e for _, e in spans)
            etype = None
            for infon in ann.findall("infon"):
                if infon.get("key") == "type":
                    etype = (infon.text or "").strip()
            if not etype:
                continue
            tid = f"T{len(t_lines) + 1}"
            entity_ids[ann.get("id")] = tid
            surface = re.sub(r"\s", " ", text[start:end])
            t_lines.append(f"{tid}\t{etype} {start} {end}\t{surface}")

        for rel in relations:
            nodes = rel.findall("node")
            if len(nodes) != 2:
                continue
            category = None
            for infon in rel.findall("infon"):
                if infon.get("key") == "type":
                    category = (infon.text or "").strip()
            refs = [entity_ids.get(n.get("refid")) for n in nodes]
            if not category or None in refs:
                logger.warning("%s: skipping relation %s", doc_id, rel.get("id"))
                continue
            r_lines.append(relation_line(f"R{len(r_lines) + 1}", category, refs[0], refs[1]))

        ann_text = "".join(line + "\n" for line in t_lines + r_lines)
        out.append((doc_id, text, ann_text))
    return out
