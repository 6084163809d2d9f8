"""Fine-tuning under the binary / multi-class strategies and UNIFIED /
DISTANCE-SPECIFIC regimes, plus bundle persistence."""

import hashlib
import logging
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import torch
from torch import nn

from ..candidates import NEGATIVE
from ..encoding import DEFAULT_MAX_LEN, WordTokenizer, collate, encode_pairs
from ..errors import AmbiguousSchemaForBinary, ConfigError, EmptyStratum
from .encoders import build_encoder
from .heads import RelationHead, RelationModel, RepresentationScheme

logger = logging.getLogger(__name__)

POSITIVE = "POSITIVE"
BINARY, MULTI_CLASS = "binary", "multi-class"
UNIFIED, DISTANCE_SPECIFIC = "UNIFIED", "DISTANCE-SPECIFIC"
ALL = "ALL"

EPOCH_GRID = (3, 4, 5, 6)
BATCH_GRID = (4, 8, 16)


def group_key(csds):
    csds = tuple(sorted(csds))
    if len(csds) > 1 and csds == tuple(range(csds[0], csds[-1] + 1)):
        return f"{csds[0]}-{csds[-1]}"
    return ",".join(str(c) for c in csds)


def parse_groups(text):
    """``"0;1;2-4"`` -> ``((0,), (1,), (2, 3, 4))``."""
    groups = []
    for part in str(text).split(";"):
        part = part.strip()
        if not part:
            continue
        members = []
        for item in part.split(","):
            if "-" in item:
                lo, hi = (int(x) for x in item.split("-"))
                members.extend(range(lo, hi + 1))
            else:
                members.append(int(item))
        groups.append(tuple(sorted(set(members))))
    return tuple(groups)


@dataclass
class TrainConfig:
    strategy: str = BINARY
    scheme: int = 3
    learning_rate: float = 1e-5
    seed: int = 13
    epochs: int = 3
    batch_size: int = 8
    folds: int = 5
    max_csd: int = 4
    regime: str = UNIFIED
    max_len: int = DEFAULT_MAX_LEN
    class_weighting: str = "none"
    csd_groups: str = ""
    empty_stratum: str = "train"
    allow_override: bool = False

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.strategy not in (BINARY, MULTI_CLASS):
            raise ConfigError(f"strategy must be {BINARY} or {MULTI_CLASS}, got {self.strategy!r}")
        if self.regime not in (UNIFIED, DISTANCE_SPECIFIC):
            raise ConfigError(f"regime must be {UNIFIED} or {DISTANCE_SPECIFIC}, got {self.regime!r}")
        self.scheme = int(RepresentationScheme.parse(self.scheme))
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if self.max_csd < 0:
            raise ConfigError("max_csd must be non-negative")
        if self.max_len < 8:
            raise ConfigError("max_len must be at least 8")
        if self.class_weighting not in ("none", "inverse"):
            raise ConfigError("class_weighting must be 'none' or 'inverse'")
        if self.empty_stratum not in ("train", "skip", "error"):
            raise ConfigError("empty_stratum must be train, skip or error")
        if self.epochs < 1 or self.batch_size < 1 or self.folds < 2:
            raise ConfigError("epochs and batch_size must be >= 1, folds >= 2")
        if not self.allow_override:
            if self.epochs not in EPOCH_GRID:
                raise ConfigError(f"epochs={self.epochs} outside {EPOCH_GRID} (set allow_override)")
            if self.batch_size not in BATCH_GRID:
                raise ConfigError(f"batch_size={self.batch_size} outside {BATCH_GRID} "
                                  "(set allow_override)")
            if self.folds != 5:
                raise ConfigError(f"folds={self.folds}, expected 5 (set allow_override)")
        for group in self.groups():
            if any(c < 0 or c > self.max_csd for c in group):
                raise ConfigError(f"csd group {group} outside 0..{self.max_csd}")
        return self

    def groups(self):
        """Training groups as tuples of CSD values."""
        if self.regime == UNIFIED:
            return (tuple(range(self.max_csd + 1)),)
        if self.csd_groups:
            groups = parse_groups(self.csd_groups)
            flat = [c for g in groups for c in g]
            if len(flat) != len(set(flat)):
                raise ConfigError(f"csd_groups overlap: {self.csd_groups}")
            return groups
        return tuple((c,) for c in range(self.max_csd + 1))

    def group_keys(self):
        if self.regime == UNIFIED:
            return {ALL: self.groups()[0]}
        return {group_key(g): g for g in self.groups()}

    def to_text(self):
        return "".join(f"{k} = {v}\n" for k, v in asdict(self).items())

    @classmethod
    def from_text(cls, text):
        return cls.from_mapping(parse_key_values(text))

    @classmethod
    def from_mapping(cls, mapping):
        kwargs = {}
        types = {f.name: f.type for f in fields(cls)}
        for key, value in mapping.items():
            if key not in types:
                continue
            kwargs[key] = _coerce(value, types[key])
        return cls(**kwargs)


def _coerce(value, typ):
    if not isinstance(value, str):
        return value
    if typ in ("bool", bool):
        return value.strip().lower() in ("1", "true", "yes", "on")
    if typ in ("int", int):
        return int(value)
    if typ in ("float", float):
        return float(value)
    return value.strip()


def parse_key_values(text):
    out = {}
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected key = value, got {raw!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def class_list(strategy, schema=None, labels=()):
    if strategy == BINARY:
        return (NEGATIVE, POSITIVE)
    if schema is not None:
        cats = schema.ordered_categories
    else:
        cats = tuple(sorted({l for l in labels if l != NEGATIVE}))
    return tuple(cats) + (NEGATIVE,)


def training_label(label, strategy):
    if strategy == BINARY:
        return NEGATIVE if label == NEGATIVE else POSITIVE
    return label


@dataclass
class GroupModel:
    encoder: nn.Module
    head: RelationHead
    config: TrainConfig
    tokenizer_fingerprint: str
    history: list = field(default_factory=list)

    def parameter_fingerprint(self):
        return parameter_fingerprint(self.encoder, self.head)


@dataclass
class ModelBundle:
    regime: str
    strategy: str
    scheme: int
    classes: tuple
    groups: dict            # key -> GroupModel
    group_csds: dict        # key -> tuple of csd values
    tokenizer: object
    config: TrainConfig
    schema_name: str = ""
    skipped_groups: dict = field(default_factory=dict)  # key -> reason
    warnings: list = field(default_factory=list)

    def route(self, csd):
        from ..inference import route_by_csd_value

        return route_by_csd_value(csd, self)


def parameter_fingerprint(*modules):
    h = hashlib.sha256()
    for module in modules:
        for name, tensor in module.state_dict().items():
            h.update(name.encode())
            h.update(tensor.detach().cpu().contiguous().numpy().tobytes())
    return h.hexdigest()[:16]


def _seed_everything(seed):
    torch.manual_seed(seed)
    torch.use_deterministic_algorithms(True, warn_only=True)


def fit_group(pairs, documents, encoder_factory, config, tokenizer, classes, instances=None):
    """Train one encoder + head on ``pairs``; returns a :class:`GroupModel`."""
    _seed_everything(config.seed)
    encoder = encoder_factory()
    head = RelationHead(config.scheme, classes, encoder.hidden_size)
    model = RelationModel(encoder, head)
    if instances is None:
        instances = encode_pairs(pairs, documents, tokenizer, config.max_len)
    index = {c: i for i, c in enumerate(classes)}
    targets = torch.tensor([index[training_label(p.label, config.strategy)] for p in pairs],
                           dtype=torch.long)

    weight = None
    if config.class_weighting == "inverse":
        counts = torch.bincount(targets, minlength=len(classes)).double()
        weight = torch.where(counts > 0, counts.sum() / (len(classes) * counts.clamp(min=1)),
                             torch.zeros_like(counts)).float()
    loss_fn = nn.CrossEntropyLoss(weight=weight)
    optimizer = torch.optim.Adam(model.parameters(), lr=config.learning_rate)
    gen = torch.Generator().manual_seed(config.seed)

    history = []
    model.train()
    for epoch in range(config.epochs):
        order = torch.randperm(len(instances), generator=gen).tolist()
        total, seen = 0.0, 0
        for start in range(0, len(order), config.batch_size):
            idx = order[start:start + config.batch_size]
            batch = collate([instances[i] for i in idx], tokenizer.pad_id)
            logits = model(batch)
            loss = loss_fn(logits, targets[idx])
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            total += loss.item() * len(idx)
            seen += len(idx)
        history.append(total / max(seen, 1))
        logger.debug("epoch %d loss %.6f", epoch + 1, history[-1])
    model.eval()
    return GroupModel(encoder, head, config, tokenizer.fingerprint, history)


def train(candidates, documents, encoder_factory, config, tokenizer, schema=None):
    """Train a :class:`ModelBundle`.

    ``candidates`` is a labelled CandidateSet (or pair sequence),
    ``documents`` maps doc_id to Document, and ``encoder_factory`` returns a
    fresh encoder each call (one per CSD group in the DISTANCE-SPECIFIC
    regime). The global torch RNG is reseeded with ``config.seed`` before each
    group so results depend only on (seed, config, data order).
    """
    pairs = list(getattr(candidates, "pairs", candidates))
    if not isinstance(documents, dict):
        documents = {d.doc_id: d for d in documents}
    if config.strategy == BINARY and schema is not None:
        if not schema.unambiguous and not schema.priority:
            raise AmbiguousSchemaForBinary(
                f"schema {schema.name!r} has type pairs with several categories; "
                "the binary strategy needs a priority list"
            )
    classes = class_list(config.strategy, schema, [p.label for p in pairs])
    if config.strategy == MULTI_CLASS:
        unknown = {p.label for p in pairs} - set(classes)
        if unknown:
            raise ConfigError(f"labels outside the class list: {sorted(unknown)}")

    bundle = ModelBundle(config.regime, config.strategy, config.scheme, classes, {}, {},
                         tokenizer, config, schema.name if schema is not None else "")
    for key, csds in config.group_keys().items():
        members = [p for p in pairs if p.csd in csds]
        n_pos = sum(p.positive for p in members)
        if not members or n_pos == 0:
            what = "no pairs" if not members else "no positive pairs"
            msg = f"csd group {key}: {what}"
            if config.empty_stratum == "error":
                raise EmptyStratum(msg)
            if not members or config.empty_stratum == "skip":
                bundle.skipped_groups[key] = what
                bundle.warnings.append(msg + " (skipped)")
                logger.warning("%s (skipped)", msg)
                continue
            bundle.warnings.append(msg + " (trained)")
            logger.warning("%s (trained anyway)", msg)
        logger.info("training group %s on %d pairs (%d positive)", key, len(members), n_pos)
        bundle.groups[key] = fit_group(members, documents, encoder_factory, config,
                                       tokenizer, classes)
        bundle.group_csds[key] = tuple(csds)
    for key, csds in config.group_keys().items():
        bundle.group_csds.setdefault(key, tuple(csds))
    return bundle


# ---------------------------------------------------------------------------
# persistence


def _kv(mapping):
    return "".join(f"{k} = {v}\n" for k, v in mapping.items())


def _group_dir(root, key):
    return Path(root) / f"group_{key.replace(',', '_')}"


def save_bundle(bundle, directory):
    """Write one directory per group plus ``manifest.txt`` and the tokenizer."""
    root = Path(directory)
    root.mkdir(parents=True, exist_ok=True)
    if isinstance(bundle.tokenizer, WordTokenizer):
        bundle.tokenizer.save(root / "vocab.txt")
        tok_kind = "word"
    else:
        bundle.tokenizer.save(root / "tokenizer")
        tok_kind = "hf"

    manifest = {
        "regime": bundle.regime,
        "strategy": bundle.strategy,
        "scheme": bundle.scheme,
        "classes": ",".join(bundle.classes),
        "schema": bundle.schema_name,
        "tokenizer": tok_kind,
        "tokenizer_fingerprint": bundle.tokenizer.fingerprint,
        "groups": ";".join(f"{k}:{group_key(v)}" for k, v in bundle.group_csds.items()),
        "trained": ";".join(bundle.groups),
        "skipped": ";".join(f"{k}:{v}" for k, v in bundle.skipped_groups.items()),
    }
    for key, gm in bundle.groups.items():
        manifest[f"fingerprint.{key}"] = gm.parameter_fingerprint()
        gdir = _group_dir(root, key)
        gdir.mkdir(exist_ok=True)
        torch.save(gm.encoder.state_dict(), gdir / "encoder.pt")
        torch.save(gm.head.state_dict(), gdir / "head.pt")
        (gdir / "config.txt").write_text(gm.config.to_text(), encoding="utf-8")
        (gdir / "encoder.txt").write_text(_kv(gm.encoder.spec), encoding="utf-8")
        (gdir / "tokenizer.txt").write_text(gm.tokenizer_fingerprint + "\n", encoding="utf-8")
        (gdir / "history.txt").write_text(
            "".join(f"{i + 1}\t{loss:.8f}\n" for i, loss in enumerate(gm.history)),
            encoding="utf-8",
        )
    (root / "manifest.txt").write_text(_kv(manifest), encoding="utf-8")
    (root / "config.txt").write_text(bundle.config.to_text(), encoding="utf-8")
    return root / "manifest.txt"


def read_manifest(directory):
    return parse_key_values((Path(directory) / "manifest.txt").read_text(encoding="utf-8"))


def load_bundle(directory):
    root = Path(directory)
    manifest = read_manifest(root)
    if manifest["tokenizer"] == "word":
        tokenizer = WordTokenizer.load(root / "vocab.txt")
    else:
        from ..encoding import HFTokenizerAdapter

        tokenizer = HFTokenizerAdapter.from_pretrained(str(root / "tokenizer"))
    config = TrainConfig.from_text((root / "config.txt").read_text(encoding="utf-8"))
    classes = tuple(manifest["classes"].split(","))
    group_csds = {}
    for item in filter(None, manifest.get("groups", "").split(";")):
        key, members = item.split(":", 1)
        group_csds[key] = parse_groups(members)[0]
    skipped = {}
    for item in filter(None, manifest.get("skipped", "").split(";")):
        key, reason = item.split(":", 1)
        skipped[key] = reason
    groups = {}
    for key in filter(None, manifest.get("trained", "").split(";")):
        gdir = _group_dir(root, key)
        spec = parse_key_values((gdir / "encoder.txt").read_text(encoding="utf-8"))
        encoder = build_encoder(spec)
        encoder.load_state_dict(torch.load(gdir / "encoder.pt", weights_only=True))
        gconfig = TrainConfig.from_text((gdir / "config.txt").read_text(encoding="utf-8"))
        head = RelationHead(gconfig.scheme, classes, encoder.hidden_size)
        head.load_state_dict(torch.load(gdir / "head.pt", weights_only=True))
        encoder.eval()
        head.eval()
        fp = (gdir / "tokenizer.txt").read_text(encoding="utf-8").strip()
        history = [float(l.split("\t")[1]) for l in
                   (gdir / "history.txt").read_text(encoding="utf-8").splitlines() if l]
        groups[key] = GroupModel(encoder, head, gconfig, fp, history)
    return ModelBundle(manifest["regime"], manifest["strategy"], int(manifest["scheme"]),
                       classes, groups, group_csds, tokenizer, config,
                       manifest.get("schema", ""), skipped)


def with_grid_point(config, epochs, batch_size):
    return replace(config, epochs=epochs, batch_size=batch_size)
