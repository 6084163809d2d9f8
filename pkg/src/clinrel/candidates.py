"""Candidate pair generation, gold labelling and CSD stratification.

The cross-sentence distance (CSD) of two entities is the absolute difference
of their sentence indices.
"""

import json
import random
from collections import Counter
from dataclasses import dataclass, field, replace
from itertools import combinations

from .corpus import sentence_index_of
from .errors import AmbiguousRole, ConflictingGold, DataError

NEGATIVE = "NEGATIVE"
DEFAULT_MAX_CSD = 4

DUMP_FIELDS = ("doc_id", "arg1", "arg2", "arg1_type", "arg2_type", "csd", "label")


@dataclass(frozen=True)
class CandidatePair:
    doc_id: str
    arg1: str
    arg2: str
    arg1_type: str
    arg2_type: str
    csd: int
    label: str = NEGATIVE

    @property
    def key(self):
        return (self.doc_id, frozenset((self.arg1, self.arg2)))

    @property
    def ref(self):
        return (self.doc_id, self.arg1, self.arg2)

    @property
    def positive(self):
        return self.label != NEGATIVE


@dataclass(frozen=True)
class SkippedGold:
    doc_id: str
    relation: object
    reason: str  # "csd", "schema" or "duplicate"
    csd: int = -1


@dataclass
class CandidateSet:
    pairs: list
    max_csd: int
    schema_name: str
    skipped: list = field(default_factory=list)

    @property
    def counts(self):
        return dict(Counter(p.label for p in self.pairs))

    def __len__(self):
        return len(self.pairs)

    def __iter__(self):
        return iter(self.pairs)


def merge_sets(sets, max_csd=None, schema_name=None):
    """Concatenate per-document candidate sets in the given order."""
    sets = list(sets)
    if max_csd is None:
        max_csd = max((s.max_csd for s in sets), default=DEFAULT_MAX_CSD)
    if schema_name is None:
        schema_name = sets[0].schema_name if sets else ""
    pairs, skipped = [], []
    for s in sets:
        pairs.extend(s.pairs)
        skipped.extend(s.skipped)
    return CandidateSet(pairs, max_csd, schema_name, skipped)


def compute_csd(document, e1, e2):
    return abs(sentence_index_of(document, e1) - sentence_index_of(document, e2))


def _assign_roles(schema, a, b):
    """Order two entities per the schema's declared role order."""
    entries = schema.compatible_categories(a.semantic_type, b.semantic_type)
    orders = {order for _, order in entries}
    if not orders:
        return None
    if len(orders) > 1:
        raise AmbiguousRole(
            f"types {a.semantic_type}/{b.semantic_type} have rules in both role orders"
        )
    t1, t2 = orders.pop()
    if t1 == t2:
        if not schema.self_tiebreak:
            raise AmbiguousRole(
                f"same-type rule {t1}/{t2} needs a tiebreak to assign roles "
                f"({a.entity_id}, {b.entity_id})"
            )
        return (a, b) if (a.start, a.end, a.entity_id) <= (b.start, b.end, b.entity_id) else (b, a)
    return (a, b) if a.semantic_type == t1 else (b, a)


def generate_candidates(document, schema, max_csd=DEFAULT_MAX_CSD):
    """One unlabelled candidate per schema-compatible entity pair within ``max_csd``."""
    if max_csd < 0:
        raise ValueError("max_csd must be non-negative")
    sent_idx = {eid: sentence_index_of(document, e) for eid, e in document.entities.items()}
    ents = sorted(document.entities.values(), key=lambda e: (e.start, e.end, e.entity_id))
    pairs = []
    for a, b in combinations(ents, 2):
        roles = _assign_roles(schema, a, b)
        if roles is None:
            continue
        csd = abs(sent_idx[a.entity_id] - sent_idx[b.entity_id])
        if csd > max_csd:
            continue
        r1, r2 = roles
        pairs.append(CandidatePair(document.doc_id, r1.entity_id, r2.entity_id,
                                   r1.semantic_type, r2.semantic_type, csd))
    ents_by_id = document.entities
    pairs.sort(key=lambda p: (ents_by_id[p.arg1].start, ents_by_id[p.arg2].start,
                              p.arg1, p.arg2))
    return CandidateSet(pairs, max_csd, schema.name)


def label_candidates(candidate_set, gold, document=None, schema=None):
    """Attach gold categories to candidates; everything else is NEGATIVE.

    Gold relations that no candidate covers end up in ``skipped``. With
    ``document`` given, the skip reason distinguishes CSD filtering from
    schema incompatibility.
    """
    gold_by_pair = {}
    skipped = []
    for rel in gold:
        doc_id = document.doc_id if document is not None else _doc_of(candidate_set)
        pair = (doc_id, frozenset((rel.arg1, rel.arg2)))
        prev = gold_by_pair.get(pair)
        if prev is not None:
            if prev.category != rel.category:
                raise ConflictingGold(
                    f"{doc_id}: {prev.relation_id} ({prev.category}) and "
                    f"{rel.relation_id} ({rel.category}) share arguments {rel.arg1}/{rel.arg2}"
                )
            skipped.append(SkippedGold(doc_id, rel, "duplicate"))
            continue
        gold_by_pair[pair] = rel

    used = set()
    labelled = []
    for p in candidate_set.pairs:
        rel = gold_by_pair.get(p.key)
        if rel is not None and schema is not None:
            allowed = {c for c, _ in schema.compatible_categories(p.arg1_type, p.arg2_type)}
            if rel.category not in allowed:
                rel = None
        if rel is None:
            labelled.append(replace(p, label=NEGATIVE))
        else:
            labelled.append(replace(p, label=rel.category))
            used.add(p.key)

    for pair, rel in gold_by_pair.items():
        if pair in used:
            continue
        reason, csd = "schema", -1
        if document is not None:
            e1, e2 = document.entities[rel.arg1], document.entities[rel.arg2]
            csd = compute_csd(document, e1, e2)
            compatible = schema is None or schema.compatible_categories(
                e1.semantic_type, e2.semantic_type)
            if csd > candidate_set.max_csd and compatible:
                reason = "csd"
        skipped.append(SkippedGold(pair[0], rel, reason, csd))

    return CandidateSet(labelled, candidate_set.max_csd, candidate_set.schema_name,
                        list(candidate_set.skipped) + skipped)


def _doc_of(candidate_set):
    docs = {p.doc_id for p in candidate_set.pairs}
    if len(docs) > 1:
        raise DataError("label_candidates needs a single-document candidate set")
    return docs.pop() if docs else ""


def candidates_for_document(document, schema, max_csd=DEFAULT_MAX_CSD):
    cs = generate_candidates(document, schema, max_csd)
    return label_candidates(cs, document.gold_relations, document=document, schema=schema)


def candidates_for_corpus(documents, schema, max_csd=DEFAULT_MAX_CSD):
    docs = sorted(documents, key=lambda d: d.doc_id)
    return merge_sets((candidates_for_document(d, schema, max_csd) for d in docs),
                      max_csd=max_csd, schema_name=schema.name)


def stratify_by_csd(candidate_set):
    groups = {}
    for p in candidate_set.pairs:
        groups.setdefault(p.csd, []).append(p)
    out = {}
    for csd in sorted(groups):
        skipped = [s for s in candidate_set.skipped if s.csd == csd]
        out[csd] = CandidateSet(groups[csd], candidate_set.max_csd,
                                candidate_set.schema_name, skipped)
    return out


def cap_negatives(candidate_set, cap_per_csd, seed=13):
    """Keep at most ``cap_per_csd`` negatives per CSD value, sampled with ``seed``."""
    rng = random.Random(seed)
    keep = set()
    for csd, part in stratify_by_csd(candidate_set).items():
        neg = [i for i, p in enumerate(part.pairs) if not p.positive]
        chosen = set(rng.sample(neg, cap_per_csd)) if len(neg) > cap_per_csd else set(neg)
        keep.update(p.ref for i, p in enumerate(part.pairs) if p.positive or i in chosen)
    pairs = [p for p in candidate_set.pairs if p.ref in keep]
    return CandidateSet(pairs, candidate_set.max_csd, candidate_set.schema_name,
                        list(candidate_set.skipped))


# ---------------------------------------------------------------------------
# dump format: one JSON object per line, fields in DUMP_FIELDS order


def dump_line(pair):
    return json.dumps({f: getattr(pair, f) for f in DUMP_FIELDS}, ensure_ascii=False)


def write_dump(candidate_set, path):
    with open(path, "w", encoding="utf-8") as fh:
        for p in candidate_set.pairs:
            fh.write(dump_line(p) + "\n")


def read_dump(path, max_csd=DEFAULT_MAX_CSD, schema_name=""):
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                pairs.append(CandidatePair(**{f: rec[f] for f in DUMP_FIELDS}))
            except (ValueError, KeyError, TypeError) as exc:
                raise DataError(f"{path}:{line_no}: bad candidate record ({exc})") from exc
    return CandidateSet(pairs, max_csd, schema_name)
