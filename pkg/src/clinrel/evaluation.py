"""Strict relation scoring with gold entities.

A prediction is a true positive only when a gold relation in the same
document has the same unordered entity-id pair and the same category.
"""

import json
import logging
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

from .candidates import compute_csd
from .errors import EntitySpaceMismatch, MalformedLine

logger = logging.getLogger(__name__)

OVERALL = "OVERALL"
REPORT_FIELDS = ("category", "tp", "fp", "fn", "precision", "recall", "f1")


def _ratio(num, den):
    return num / den if den else 0.0


@dataclass
class Counts:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    @property
    def precision(self):
        return _ratio(self.tp, self.tp + self.fp)

    @property
    def recall(self):
        return _ratio(self.tp, self.tp + self.fn)

    @property
    def f1(self):
        p, r = self.precision, self.recall
        return _ratio(2 * p * r, p + r)

    def __add__(self, other):
        return Counts(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn)

    def row(self, name):
        return {"category": name, "tp": self.tp, "fp": self.fp, "fn": self.fn,
                "precision": round(self.precision, 6), "recall": round(self.recall, 6),
                "f1": round(self.f1, 6)}


@dataclass
class EvalReport:
    per_category: dict = field(default_factory=dict)
    micro: Counts = field(default_factory=Counts)
    skipped_gold_count: int = 0
    duplicate_predictions: int = 0

    def rows(self):
        rows = [self.per_category[c].row(c) for c in sorted(self.per_category)]
        rows.append(self.micro.row(OVERALL))
        return rows


def _gold_items(gold):
    if isinstance(gold, dict):
        for doc_id, rels in gold.items():
            for r in rels:
                yield doc_id, r
    else:
        for doc_id, r in gold:
            yield doc_id, r


def _check_entities(predicted, entity_ids):
    for p in predicted:
        known = entity_ids.get(p.doc_id)
        if known is None:
            raise EntitySpaceMismatch(f"prediction for unknown document {p.doc_id}")
        for arg in (p.arg1, p.arg2):
            if arg not in known:
                raise EntitySpaceMismatch(
                    f"{p.doc_id}: prediction references entity {arg} absent from gold"
                )


def score(gold, predicted, entity_ids=None, skipped_gold_count=0, categories=()):
    """Strict per-category and micro-averaged P/R/F1.

    ``gold`` maps doc_id to gold relations (or is an iterable of
    ``(doc_id, relation)``); ``predicted`` holds objects with doc_id, arg1,
    arg2 and category. ``entity_ids`` maps doc_id to the gold entity ids and
    enables the entity-space check. Identical predictions are collapsed.
    """
    predicted = list(predicted)
    if entity_ids is not None:
        _check_entities(predicted, entity_ids)

    gold_keys = {(d, frozenset((r.arg1, r.arg2)), r.category) for d, r in _gold_items(gold)}
    pred_keys = []
    seen = set()
    duplicates = 0
    for p in predicted:
        key = (p.doc_id, frozenset((p.arg1, p.arg2)), p.category)
        if key in seen:
            duplicates += 1
            continue
        seen.add(key)
        pred_keys.append(key)
    if duplicates:
        logger.warning("collapsed %d duplicate predictions", duplicates)

    per_cat = {c: Counts() for c in categories}
    for key in pred_keys:
        c = per_cat.setdefault(key[2], Counts())
        if key in gold_keys:
            c.tp += 1
        else:
            c.fp += 1
    for key in gold_keys - seen:
        per_cat.setdefault(key[2], Counts()).fn += 1

    micro = Counts()
    for c in per_cat.values():
        micro = micro + c
    return EvalReport(per_cat, micro, skipped_gold_count, duplicates)


def relation_csd(documents, doc_id, arg1, arg2):
    doc = documents[doc_id]
    return compute_csd(doc, doc.entities[arg1], doc.entities[arg2])


def per_csd_breakdown(gold, predicted, documents, entity_ids=None):
    """Score each CSD bucket separately; buckets partition the global counts."""
    if not isinstance(documents, dict):
        documents = {d.doc_id: d for d in documents}
    predicted = list(predicted)
    if entity_ids is not None:
        _check_entities(predicted, entity_ids)
    gold_buckets = {}
    for doc_id, r in _gold_items(gold):
        csd = relation_csd(documents, doc_id, r.arg1, r.arg2)
        gold_buckets.setdefault(csd, []).append((doc_id, r))
    pred_buckets = {}
    for p in predicted:
        csd = relation_csd(documents, p.doc_id, p.arg1, p.arg2)
        pred_buckets.setdefault(csd, []).append(p)
    return {csd: score(gold_buckets.get(csd, []), pred_buckets.get(csd, []))
            for csd in sorted(set(gold_buckets) | set(pred_buckets))}


# ---------------------------------------------------------------------------
# report output


def format_table(report, title=None):
    rows = report.rows()
    width = max([len(r["category"]) for r in rows] + [len("category")])
    header = f"{'category':<{width}}  {'tp':>6} {'fp':>6} {'fn':>6}  {'P':>7} {'R':>7} {'F1':>7}"
    lines = [title] if title else []
    lines.append(header)
    lines.append("-" * len(header))
    for r in rows:
        if r["category"] == OVERALL:
            lines.append("-" * len(header))
        lines.append(
            f"{r['category']:<{width}}  {r['tp']:>6} {r['fp']:>6} {r['fn']:>6}  "
            f"{r['precision']:>7.4f} {r['recall']:>7.4f} {r['f1']:>7.4f}"
        )
    if report.skipped_gold_count:
        lines.append(f"gold relations outside the candidate space: {report.skipped_gold_count}")
    if report.duplicate_predictions:
        lines.append(f"duplicate predictions collapsed: {report.duplicate_predictions}")
    return "\n".join(lines) + "\n"


def report_jsonl(report):
    return "".join(json.dumps({k: r[k] for k in REPORT_FIELDS}) + "\n" for r in report.rows())


def write_report(report, directory, stem="report"):
    root = Path(directory)
    root.mkdir(parents=True, exist_ok=True)
    (root / f"{stem}.txt").write_text(format_table(report), encoding="utf-8")
    (root / f"{stem}.jsonl").write_text(report_jsonl(report), encoding="utf-8")


_R_LINE = re.compile(r"^(R\d+)\t(\S+) Arg1:(T\d+) Arg2:(T\d+)\s*$")


def read_predicted_relations(annotation_text, doc_id):
    """R-lines of a prediction file; T-lines and other records are ignored."""
    from .inference import PredictedRelation

    out = []
    for line_no, raw in enumerate(annotation_text.splitlines(), 1):
        if not raw.startswith("R"):
            continue
        m = _R_LINE.match(raw.rstrip("\r"))
        if m is None:
            raise MalformedLine("bad relation record", line_no, raw)
        _, category, a1, a2 = m.groups()
        out.append(PredictedRelation(doc_id, a1, a2, category, 1.0))
    return out


def count_gold(documents):
    return Counter(r.category for d in documents for r in d.gold_relations)
