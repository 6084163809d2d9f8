"""Apply a trained bundle to candidate pairs and emit predicted relations."""

from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path

import torch

from .candidates import NEGATIVE
from .corpus import relation_line
from .encoding import collate, encode_pairs
from .errors import AmbiguousCategory, IOFailure, MissingGroup
from .model.heads import RelationModel
from .model.training import ALL, BINARY, POSITIVE, UNIFIED

PREDICTION_SUFFIX = ".ann"
SCORES_FILE = "scores.tsv"


@dataclass(frozen=True)
class PredictedRelation:
    doc_id: str
    arg1: str
    arg2: str
    category: str
    score: float


def infer_category(arg1_type, arg2_type, schema):
    """Category implied by the entity types (binary strategy, second stage)."""
    cats = [c for c, _ in schema.compatible_categories(arg1_type, arg2_type)]
    if not cats:
        raise AmbiguousCategory(f"no category defined for {arg1_type}/{arg2_type}")
    if len(cats) == 1:
        return cats[0]
    for cat in schema.priority:
        if cat in cats:
            return cat
    raise AmbiguousCategory(
        f"{arg1_type}/{arg2_type} admits {', '.join(cats)} and no priority list is configured"
    )


def route_by_csd_value(csd, bundle):
    if bundle.regime == UNIFIED:
        return ALL
    for key, members in bundle.group_csds.items():
        if csd in members:
            return key
    raise MissingGroup(f"bundle has no model for csd={csd}", csd=csd)


def route_by_csd(pair, bundle):
    return route_by_csd_value(pair.csd, bundle)


def group_probabilities(group, pairs, documents, tokenizer, batch_size=32):
    """Class-probability rows for ``pairs`` under one trained group."""
    model = RelationModel(group.encoder, group.head)
    model.eval()
    instances = encode_pairs(pairs, documents, tokenizer, group.config.max_len)
    rows = []
    with torch.no_grad():
        for start in range(0, len(instances), batch_size):
            batch = collate(instances[start:start + batch_size], tokenizer.pad_id)
            rows.append(torch.softmax(model(batch), dim=-1))
    if not rows:
        return torch.zeros((0, len(group.head.classes)))
    return torch.cat(rows)


def predict(pairs, documents, bundle, schema, threshold=None, batch_size=32):
    """Predicted relations for ``pairs`` in input order.

    Multi-class: argmax class unless NEGATIVE. Binary: argmax POSITIVE pairs
    get their category from :func:`infer_category`; ``threshold``, when set,
    replaces argmax with ``P(POSITIVE) >= threshold`` (binary) or
    ``P(best non-negative) >= threshold`` (multi-class).
    """
    pairs = list(getattr(pairs, "pairs", pairs))
    if not isinstance(documents, dict):
        documents = {d.doc_id: d for d in documents}
    classes = list(bundle.classes)
    neg = classes.index(NEGATIVE)

    routed = defaultdict(list)
    for i, p in enumerate(pairs):
        routed[route_by_csd(p, bundle)].append(i)

    decided = {}
    for key in sorted(routed):
        idx = routed[key]
        if key not in bundle.groups:
            if key in bundle.skipped_groups:
                continue  # group had nothing to learn from; everything negative
            raise MissingGroup(f"bundle group {key} is not trained",
                               csd=pairs[idx[0]].csd)
        probs = group_probabilities(bundle.groups[key], [pairs[i] for i in idx], documents,
                                    bundle.tokenizer, batch_size)
        for row, i in zip(probs, idx):
            decided[i] = row

    out = []
    for i, p in enumerate(pairs):
        row = decided.get(i)
        if row is None:
            continue
        if bundle.strategy == BINARY:
            pos_prob = float(row[classes.index(POSITIVE)])
            is_pos = pos_prob >= threshold if threshold is not None else int(row.argmax()) != neg
            if not is_pos:
                continue
            out.append(PredictedRelation(p.doc_id, p.arg1, p.arg2,
                                         infer_category(p.arg1_type, p.arg2_type, schema),
                                         pos_prob))
        else:
            if threshold is None:
                best = int(row.argmax())
                if best == neg:
                    continue
            else:
                masked = row.clone()
                masked[neg] = -1.0
                best = int(masked.argmax())
                if float(row[best]) < threshold:
                    continue
            out.append(PredictedRelation(p.doc_id, p.arg1, p.arg2, classes[best],
                                         float(row[best])))
    return out


# ---------------------------------------------------------------------------
# output


def _entity_start(documents, doc_id, eid):
    doc = documents.get(doc_id) if documents else None
    if doc is None or eid not in doc.entities:
        return 0
    return doc.entities[eid].start


def prediction_texts(relations, doc_ids=(), documents=None):
    """Standoff R-lines per document, ordered by argument offsets.

    Every doc id in ``doc_ids`` gets an entry, empty when it has no
    predictions.
    """
    by_doc = {d: [] for d in doc_ids}
    for r in relations:
        by_doc.setdefault(r.doc_id, []).append(r)
    out = {}
    for doc_id in sorted(by_doc):
        rels = sorted(by_doc[doc_id], key=lambda r: (
            _entity_start(documents, doc_id, r.arg1), _entity_start(documents, doc_id, r.arg2),
            r.arg1, r.arg2, r.category))
        out[doc_id] = "".join(
            relation_line(f"R{n}", r.category, r.arg1, r.arg2) + "\n"
            for n, r in enumerate(rels, 1)
        )
    return out


def write_predictions(relations, directory, doc_ids=(), documents=None,
                      include_entities=True):
    """Write ``<doc_id>.ann`` per document plus ``scores.tsv``.

    With ``documents`` and ``include_entities`` the gold T-lines are copied
    in first so each file is parseable on its own against the document text.
    """
    from .corpus import entity_line

    root = Path(directory)
    try:
        root.mkdir(parents=True, exist_ok=True)
        texts = prediction_texts(relations, doc_ids, documents)
        for doc_id, rel_text in texts.items():
            ent_text = ""
            if include_entities and documents and doc_id in documents:
                ent_text = "".join(entity_line(e) + "\n"
                                   for e in documents[doc_id].entities.values())
            (root / (doc_id + PREDICTION_SUFFIX)).write_text(ent_text + rel_text,
                                                             encoding="utf-8")
        write_scores(relations, root / SCORES_FILE, documents)
    except OSError as exc:
        raise IOFailure(f"cannot write predictions to {root}: {exc}") from exc
    return texts


def write_scores(relations, path, documents=None):
    rels = sorted(relations, key=lambda r: (
        r.doc_id, _entity_start(documents, r.doc_id, r.arg1),
        _entity_start(documents, r.doc_id, r.arg2), r.arg1, r.arg2))
    with open(path, "w", encoding="utf-8") as fh:
        for r in rels:
            fh.write(f"{r.doc_id}\t{r.arg1}\t{r.arg2}\t{r.category}\t{r.score:.6f}\n")

