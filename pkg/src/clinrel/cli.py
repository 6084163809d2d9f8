"""Command-line entry point: ``clinrel <command> [options]``.

Exit codes: 0 success, 1 usage/config error, 2 data error, 3 training or
inference error.
"""

import argparse
import itertools
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .candidates import (
    NEGATIVE,
    cap_negatives,
    candidates_for_corpus,
    read_dump,
    stratify_by_csd,
    write_dump,
)
from .config import ExperimentConfig, parse_encoder_spec
from .corpus import ANN_SUFFIX, TXT_SUFFIX, bioc_to_standoff, load_corpus
from .errors import ClinRelError, ConfigError, DataError, EntitySpaceMismatch
from .evaluation import (
    format_table,
    per_csd_breakdown,
    read_predicted_relations,
    score,
    write_report,
)
from .schema import resolve_schema

log = logging.getLogger("clinrel")

PROVENANCE = "provenance.txt"
RUN_LOG = "run.log"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _attach_log_file(directory):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    handler = logging.FileHandler(directory / RUN_LOG, encoding="utf-8")
    handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s"))
    logging.getLogger().addHandler(handler)
    return handler


def write_provenance(directory, cfg, command, extra=None):
    lines = [f"command = {command}", f"version = clinrel {__version__}",
             f"seed = {cfg.get('seed', 13)}"]
    for key, value in (extra or {}).items():
        lines.append(f"{key} = {value}")
    lines.append("")
    lines.append("[config]")
    text = "\n".join(lines) + "\n" + cfg.snapshot()
    Path(directory).mkdir(parents=True, exist_ok=True)
    (Path(directory) / PROVENANCE).write_text(text, encoding="utf-8")


def _load(cfg, key):
    path = cfg.path(key, must_exist=True)
    return load_corpus(path, cfg.newline_boundary, cfg.discontinuous)


def _candidates(cfg, docs, schema, max_csd=None):
    cs = candidates_for_corpus(docs, schema, cfg.max_csd if max_csd is None else max_csd)
    if cfg.negative_cap is not None:
        cs = cap_negatives(cs, cfg.negative_cap, seed=int(cfg.get("seed", 13)))
    return cs


# ---------------------------------------------------------------------------
# statistics


def statistics_rows(docs, cs):
    rows = []
    for csd, part in stratify_by_csd(cs).items():
        pos = sum(p.positive for p in part.pairs)
        rows.append({"csd": csd, "positive": pos, "negative": len(part.pairs) - pos,
                     "total": len(part.pairs)})
    return rows


def statistics_table(docs, cs):
    n_rel = sum(len(d.gold_relations) for d in docs)
    rows = statistics_rows(docs, cs)
    by_reason = {}
    for s in cs.skipped:
        by_reason[s.reason] = by_reason.get(s.reason, 0) + 1
    out = [f"notes\t{len(docs)}", f"relations\t{n_rel}",
           "skipped_gold\t" + ",".join(f"{k}={v}" for k, v in sorted(by_reason.items())),
           "csd\tpositive\tnegative\ttotal"]
    for r in rows:
        out.append(f"{r['csd']}\t{r['positive']}\t{r['negative']}\t{r['total']}")
    out.append(f"all\t{sum(r['positive'] for r in rows)}\t"
               f"{sum(r['negative'] for r in rows)}\t{len(cs.pairs)}")
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# model construction


def build_tokenizer(cfg, docs):
    kind, opts = parse_encoder_spec(cfg.get("encoder"))
    if kind == "hf":
        from .encoding import HFTokenizerAdapter

        return HFTokenizerAdapter.from_pretrained(opts["name"])
    from .encoding import WordTokenizer

    return WordTokenizer.fit(d.text for d in docs)


def encoder_factory(cfg, tokenizer, train_config):
    kind, opts = parse_encoder_spec(cfg.get("encoder"))
    if kind == "hf":
        from .model import HFEncoder

        return lambda: HFEncoder.from_pretrained(opts["name"], vocab_size=tokenizer.vocab_size)
    from .model import ReferenceEncoder

    return lambda: ReferenceEncoder(tokenizer.vocab_size, max_len=train_config.max_len,
                                    seed=train_config.seed, **opts)


def fit_bundle(cfg, docs, schema, train_config, cs=None, out_dir=None):
    """Optional CV over the grid, then final training on all ``docs``."""
    from .model import cross_validate, train

    doc_map = {d.doc_id: d for d in docs}
    cs = cs if cs is not None else _candidates(cfg, docs, schema, train_config.max_csd)
    tokenizer = build_tokenizer(cfg, docs)
    factory = encoder_factory(cfg, tokenizer, train_config)
    if cfg.cv:
        epochs, batches = cfg.cv_grid()
        train_config, results = cross_validate(cs, doc_map, factory, train_config, tokenizer,
                                               schema, epochs, batches)
        if out_dir is not None:
            lines = ["epochs\tbatch_size\tmean_f1\tfold_f1"]
            for r in results:
                lines.append(f"{r.epochs}\t{r.batch_size}\t{r.mean_f1:.6f}\t"
                             + ",".join(f"{f:.6f}" for f in r.fold_f1))
            (Path(out_dir) / "cv_results.tsv").write_text("\n".join(lines) + "\n",
                                                          encoding="utf-8")
        log.info("selected epochs=%d batch_size=%d", train_config.epochs,
                 train_config.batch_size)
    return train(cs, doc_map, factory, train_config, tokenizer, schema)


# ---------------------------------------------------------------------------
# commands


def cmd_schema(args, cfg):
    schema = resolve_schema(args.name or cfg.schema_spec)
    sys.stdout.write(schema.to_text())
    sys.stdout.write(f"# categories: {len(schema.categories)}; "
                     f"unambiguous: {str(schema.unambiguous).lower()}\n")
    return 0


def cmd_convert(args, cfg):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    n = 0
    for src in args.inputs:
        try:
            docs = bioc_to_standoff(Path(src).read_text(encoding="utf-8"))
        except Exception as exc:  # xml.etree raises ParseError, a SyntaxError subclass
            raise DataError(f"{src}: cannot parse BioC XML ({exc})") from exc
        for doc_id, text, ann in docs:
            (out / (doc_id + TXT_SUFFIX)).write_text(text, encoding="utf-8")
            (out / (doc_id + ANN_SUFFIX)).write_text(ann, encoding="utf-8")
            n += 1
    print(f"converted {n} documents into {out}")
    return 0


def cmd_synthetic(args, cfg):
    from .corpus import write_document
    from .synthetic import random_corpus, separable_corpus

    schema = resolve_schema(cfg.schema_spec)
    seed = int(cfg.get("seed", 13))
    if args.kind == "separable":
        docs = separable_corpus(schema, args.pairs, seed=seed, max_csd=min(cfg.max_csd, 2))
    else:
        docs = random_corpus(args.docs, schema, seed=seed)
    for d in docs:
        write_document(d, args.out)
    print(f"wrote {len(docs)} synthetic documents into {args.out}")
    return 0


def cmd_candidates(args, cfg):
    schema = resolve_schema(cfg.schema_spec)
    docs = _load(cfg, "corpus")
    out = cfg.path("output", "candidates.jsonl")
    out.parent.mkdir(parents=True, exist_ok=True)
    cs = _candidates(cfg, docs, schema)
    write_dump(cs, out)
    table = statistics_table(docs, cs)
    out.with_suffix(".stats.tsv").write_text(table, encoding="utf-8")
    write_provenance(out.parent, cfg, "candidates")
    sys.stdout.write(table)
    return 0


def cmd_train(args, cfg):
    from .model import save_bundle

    schema = resolve_schema(cfg.schema_spec)
    train_config = cfg.train_config()
    bundle_dir = cfg.path("bundle", "bundle")
    handler = _attach_log_file(bundle_dir)
    try:
        docs = _load(cfg, "corpus")
        cs = None
        if cfg.get("candidates"):
            cs = read_dump(cfg.path("candidates", must_exist=True), train_config.max_csd,
                           schema.name)
        bundle = fit_bundle(cfg, docs, schema, train_config, cs=cs, out_dir=bundle_dir)
        save_bundle(bundle, bundle_dir)
        write_provenance(bundle_dir, cfg, "train", {"schema_name": schema.name})
    finally:
        logging.getLogger().removeHandler(handler)
        handler.close()
    for w in bundle.warnings:
        print(f"warning: {w}", file=sys.stderr)
    print(f"bundle written to {bundle_dir} ({', '.join(bundle.groups) or 'no groups'})")
    return 0


def cmd_predict(args, cfg):
    from .inference import predict, write_predictions
    from .model import load_bundle

    schema = resolve_schema(cfg.schema_spec)
    bundle = load_bundle(cfg.path("bundle", "bundle", must_exist=True))
    docs = _load(cfg, "corpus")
    out = cfg.path("output", "predictions")
    # an explicit max_csd beyond the bundle's groups surfaces as MissingGroup
    max_csd = cfg.max_csd if cfg.get("max_csd") else bundle.config.max_csd
    cs = candidates_for_corpus(docs, schema, max_csd)
    relations = predict(cs, {d.doc_id: d for d in docs}, bundle, schema,
                        threshold=cfg.threshold)
    write_predictions(relations, out, doc_ids=[d.doc_id for d in docs],
                      documents={d.doc_id: d for d in docs})
    write_provenance(out, cfg, "predict")
    print(f"{len(relations)} relations predicted for {len(docs)} documents -> {out}")
    return 0


def read_prediction_dir(pred_dir, docs):
    """Predicted relations per gold document; a missing file means no predictions."""
    pred_dir = Path(pred_dir)
    out = []
    for d in docs:
        path = pred_dir / (d.doc_id + ANN_SUFFIX)
        if not path.exists():
            log.warning("no prediction file for %s; counting its gold as missed", d.doc_id)
            continue
        out.extend(read_predicted_relations(path.read_text(encoding="utf-8"), d.doc_id))
    return out


def evaluate_dirs(gold_docs, predicted):
    gold = {d.doc_id: d.gold_relations for d in gold_docs}
    ids = {d.doc_id: set(d.entities) for d in gold_docs}
    for p in predicted:
        known = ids.get(p.doc_id)
        if known is None or p.arg1 not in known or p.arg2 not in known:
            raise EntitySpaceMismatch(
                f"document {p.doc_id}: prediction {p.arg1}/{p.arg2} references entities "
                "absent from the gold annotation"
            )
    return score(gold, predicted, entity_ids=ids)


def cmd_evaluate(args, cfg):
    gold_docs = _load(cfg, "gold_dir")
    pred_dir = cfg.path("pred_dir", must_exist=True)
    predicted = read_prediction_dir(pred_dir, gold_docs)
    report = evaluate_dirs(gold_docs, predicted)
    out = cfg.path("output", str(pred_dir / "evaluation"))
    write_report(report, out)
    buckets = per_csd_breakdown({d.doc_id: d.gold_relations for d in gold_docs}, predicted,
                                gold_docs)
    for csd, rep in buckets.items():
        write_report(rep, out, stem=f"report_csd{csd}")
    sys.stdout.write(format_table(report))
    return 0


# ---------------------------------------------------------------------------
# experiment grid


def _cell_id(cell):
    return "|".join(f"{k}={v}" for k, v in cell.items())


def experiment_cells(cfg):
    strategies = cfg.grid("grid_strategy", [cfg.get("strategy", "binary")])
    schemes = cfg.grid("grid_scheme", [cfg.get("scheme", "3")])
    regimes = cfg.grid("grid_regime", [cfg.get("regime", "UNIFIED")])
    csds = cfg.grid("grid_max_csd", [str(cfg.max_csd)])
    for s, sc, r, m in itertools.product(strategies, schemes, regimes, csds):
        yield {"strategy": s, "scheme": sc, "regime": r, "max_csd": m}


def read_ledger(path):
    done = {}
    if path.exists():
        for line in path.read_text(encoding="utf-8").splitlines():
            if line.strip():
                rec = json.loads(line)
                done[rec["cell"]] = rec
    return done


def _append_ledger(path, record):
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(json.dumps(record, sort_keys=True) + "\n")
        fh.flush()


def run_cell(cfg, cell, schema, train_docs, test_docs):
    from .inference import predict

    train_config = cfg.train_config(**cell)
    bundle = fit_bundle(cfg, train_docs, schema, train_config)
    test_cs = candidates_for_corpus(test_docs, schema, train_config.max_csd)
    predicted = predict(test_cs, {d.doc_id: d for d in test_docs}, bundle, schema,
                        threshold=cfg.threshold)
    gold = {d.doc_id: d.gold_relations for d in test_docs}
    return score(gold, predicted, skipped_gold_count=len(test_cs.skipped))


def cmd_experiment(args, cfg):
    schema = resolve_schema(cfg.schema_spec)
    out = cfg.path("output", "experiment")
    out.mkdir(parents=True, exist_ok=True)
    handler = _attach_log_file(out)
    try:
        train_docs = _load(cfg, "train_dir")
        test_docs = _load(cfg, "test_dir") if cfg.get("test_dir") else train_docs
        ledger_path = out / "cells.jsonl"
        done = read_ledger(ledger_path)
        cells = list(experiment_cells(cfg))
        for cell in cells:
            cid = _cell_id(cell)
            if done.get(cid, {}).get("status") == "ok":
                log.info("cell %s already complete", cid)
                continue
            try:
                rep = run_cell(cfg, cell, schema, train_docs, test_docs)
                record = {"cell": cid, "status": "ok", **cell,
                          "precision": round(rep.micro.precision, 6),
                          "recall": round(rep.micro.recall, 6), "f1": round(rep.micro.f1, 6),
                          "tp": rep.micro.tp, "fp": rep.micro.fp, "fn": rep.micro.fn}
            except ClinRelError as exc:
                log.error("cell %s failed: %s", cid, exc)
                record = {"cell": cid, "status": "error", **cell,
                          "error": f"{type(exc).__name__}: {exc}"}
            _append_ledger(ledger_path, record)
            done[cid] = record
        lines = ["strategy\tscheme\tregime\tmax_csd\tprecision\trecall\tf1\tstatus"]
        for cell in cells:
            rec = done[_cell_id(cell)]
            if rec["status"] == "ok":
                metrics = f"{rec['precision']:.4f}\t{rec['recall']:.4f}\t{rec['f1']:.4f}"
            else:
                metrics = "-\t-\t-"
            lines.append(f"{cell['strategy']}\t{cell['scheme']}\t{cell['regime']}\t"
                         f"{cell['max_csd']}\t{metrics}\t{rec['status']}")
        table = "\n".join(lines) + "\n"
        (out / "results.tsv").write_text(table, encoding="utf-8")
        write_provenance(out, cfg, "experiment")
    finally:
        logging.getLogger().removeHandler(handler)
        handler.close()
    sys.stdout.write(table)
    return 0


# ---------------------------------------------------------------------------
# argument parsing

_OVERRIDE_FLAGS = ("schema", "strategy", "scheme", "regime", "max_csd", "encoder",
                   "learning_rate", "seed", "epochs", "batch_size", "max_len", "csd_groups")


def _parse_sets(items):
    out = {}
    for item in items or ():
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def build_parser():
    parser = _Parser(prog="clinrel", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"clinrel {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, *paths):
        p.add_argument("-c", "--config", help="key = value config file")
        p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override any config key (repeatable)")
        for flag in _OVERRIDE_FLAGS:
            p.add_argument("--" + flag.replace("_", "-"), dest=flag)
        p.add_argument("--allow-override", dest="allow_override", action="store_const",
                       const="true", help="accept values outside the supported grids")
        p.add_argument("--cv", dest="cv", action="store_const", const="true",
                       help="cross-validate over the grid before final training")
        for key in paths:
            p.add_argument("--" + key.replace("_", "-"), dest=key)

    p = sub.add_parser("schema", help="print a schema in file form")
    common(p)
    p.add_argument("name", nargs="?", help="builtin name or schema file")
    p.set_defaults(func=cmd_schema)

    p = sub.add_parser("convert", help="convert BioC XML into standoff files")
    common(p)
    p.add_argument("inputs", nargs="+")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("synthetic", help="write a synthetic standoff corpus")
    common(p)
    p.add_argument("--out", required=True)
    p.add_argument("--kind", choices=("separable", "random"), default="separable")
    p.add_argument("--pairs", type=int, default=300, help="separable: minimum candidate pairs")
    p.add_argument("--docs", type=int, default=20, help="random: number of documents")
    p.set_defaults(func=cmd_synthetic)

    p = sub.add_parser("candidates", help="generate and label candidate pairs")
    common(p, "corpus", "output")
    p.set_defaults(func=cmd_candidates)

    p = sub.add_parser("train", help="train a model bundle")
    common(p, "corpus", "bundle", "candidates")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="predict relations with a bundle")
    common(p, "corpus", "bundle", "output")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="strict scoring of a prediction directory")
    common(p, "gold_dir", "pred_dir", "output")
    p.add_argument("gold", nargs="?")
    p.add_argument("pred", nargs="?")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("experiment", help="run a strategy x scheme x regime x max_csd grid")
    common(p, "train_dir", "test_dir", "output")
    p.set_defaults(func=cmd_experiment)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        overrides = {k: getattr(args, k, None) for k in
                     _OVERRIDE_FLAGS + ("allow_override", "cv", "corpus", "output", "bundle",
                                        "candidates", "gold_dir", "pred_dir", "train_dir",
                                        "test_dir")}
        if getattr(args, "gold", None):
            overrides["gold_dir"] = args.gold
        if getattr(args, "pred", None):
            overrides["pred_dir"] = args.pred
        overrides.update(_parse_sets(args.set))
        cfg = ExperimentConfig.load(args.config, overrides)
        return args.func(args, cfg)
    except ClinRelError as exc:
        print(f"clinrel {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
