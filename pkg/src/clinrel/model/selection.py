"""Document-level k-fold cross-validation over the epochs x batch-size grid."""

import logging
import random
from dataclasses import dataclass, replace

from ..errors import InsufficientData
from .training import BATCH_GRID, EPOCH_GRID, train

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class GridResult:
    epochs: int
    batch_size: int
    fold_f1: tuple

    @property
    def mean_f1(self):
        return sum(self.fold_f1) / len(self.fold_f1) if self.fold_f1 else 0.0


def assign_folds(doc_ids, folds, seed):
    """doc_id -> fold index; documents are shuffled with ``seed`` then dealt round-robin."""
    ids = sorted(set(doc_ids))
    random.Random(seed).shuffle(ids)
    return {d: i % folds for i, d in enumerate(ids)}


def select_best(results):
    """Highest mean F1; ties go to fewer epochs, then the smaller batch."""
    return min(results, key=lambda r: (-r.mean_f1, r.epochs, r.batch_size))


def cross_validate(candidates, documents, encoder_factory, config, tokenizer, schema,
                   epochs_grid=EPOCH_GRID, batch_grid=BATCH_GRID, folds=None):
    """Return ``(best_config, results)`` where ``results`` lists every grid point.

    Every pair of a document shares that document's fold. Each fold is scored
    strictly against the held-out documents' full gold relations, so gold
    outside the candidate space counts as missed.
    """
    from ..evaluation import score
    from ..inference import predict

    folds = folds or config.folds
    pairs = list(getattr(candidates, "pairs", candidates))
    if not isinstance(documents, dict):
        documents = {d.doc_id: d for d in documents}
    doc_ids = sorted({p.doc_id for p in pairs})
    n_pos = sum(p.positive for p in pairs)
    if n_pos < folds or len(doc_ids) < folds:
        raise InsufficientData(
            f"{folds}-fold cross-validation needs at least {folds} documents and positives "
            f"(got {len(doc_ids)} documents, {n_pos} positives)"
        )
    fold_of = assign_folds(doc_ids, folds, config.seed)

    results = []
    for epochs in epochs_grid:
        for batch_size in batch_grid:
            cfg = replace(config, epochs=epochs, batch_size=batch_size)
            f1s = []
            for k in range(folds):
                train_pairs = [p for p in pairs if fold_of[p.doc_id] != k]
                test_pairs = [p for p in pairs if fold_of[p.doc_id] == k]
                held_out = [d for d in doc_ids if fold_of[d] == k]
                bundle = train(train_pairs, documents, encoder_factory, cfg, tokenizer, schema)
                predicted = predict(test_pairs, documents, bundle, schema)
                gold = {d: documents[d].gold_relations for d in held_out}
                f1s.append(score(gold, predicted).micro.f1)
            result = GridResult(epochs, batch_size, tuple(f1s))
            logger.info("epochs=%d batch=%d mean F1 %.4f", epochs, batch_size, result.mean_f1)
            results.append(result)
    best = select_best(results)
    return replace(config, epochs=best.epochs, batch_size=best.batch_size), results
