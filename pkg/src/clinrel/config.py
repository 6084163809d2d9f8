"""Experiment configuration: a flat ``key = value`` file plus overrides.

Recognised keys (anything else is rejected)::

    schema          builtin name (n2c2, made1.0) or path to a schema file
    strategy        binary | multi-class
    scheme          1..4
    regime          UNIFIED | DISTANCE-SPECIFIC
    max_csd         default 4
    csd_groups      e.g. "0;1;2-4" (DISTANCE-SPECIFIC only)
    encoder         reference[:hidden=64,layers=2,heads=2] | hf:<name or path>
    learning_rate, seed, epochs, batch_size, folds, max_len,
    class_weighting, empty_stratum, allow_override   (training)
    cv              true to run grid cross-validation before final training
    grid_epochs, grid_batch_size                       CV grid
    grid_strategy, grid_scheme, grid_regime, grid_max_csd   experiment grid
    corpus, train_dir, test_dir, gold_dir, pred_dir, bundle, output, candidates
    newline_boundary, discontinuous, negative_cap, threshold
"""

import os
from dataclasses import dataclass, field, fields
from pathlib import Path

from .errors import ConfigError
from .model.training import BATCH_GRID, EPOCH_GRID, TrainConfig, parse_key_values

HOME_ENV = "CLINREL_HOME"

_TRAIN_KEYS = {f.name for f in fields(TrainConfig)}
_PATH_KEYS = ("corpus", "train_dir", "test_dir", "gold_dir", "pred_dir", "bundle",
              "output", "candidates")
_OTHER_KEYS = {
    "schema", "encoder", "cv", "grid_epochs", "grid_batch_size", "grid_strategy",
    "grid_scheme", "grid_regime", "grid_max_csd", "newline_boundary", "discontinuous",
    "negative_cap", "threshold",
}
KNOWN_KEYS = _TRAIN_KEYS | set(_PATH_KEYS) | _OTHER_KEYS


def _split(value):
    return [v.strip() for v in str(value).split(",") if v.strip()]


def _bool(value):
    return str(value).strip().lower() in ("1", "true", "yes", "on")


@dataclass
class ExperimentConfig:
    values: dict = field(default_factory=dict)

    @classmethod
    def load(cls, path=None, overrides=None):
        values = {}
        if path:
            p = Path(path)
            if not p.is_file():
                raise ConfigError(f"config file not found: {p}")
            values.update(parse_key_values(p.read_text(encoding="utf-8")))
        for key, value in (overrides or {}).items():
            if value is not None:
                values[key] = str(value)
        unknown = set(values) - KNOWN_KEYS
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        return cls(values)

    def get(self, key, default=None):
        return self.values.get(key, default)

    def require(self, key):
        if key not in self.values or self.values[key] == "":
            raise ConfigError(f"missing required setting {key!r}")
        return self.values[key]

    def path(self, key, default=None, must_exist=False):
        raw = self.values.get(key, default)
        if raw is None:
            raise ConfigError(f"missing required path {key!r}")
        p = Path(raw).expanduser()
        home = os.environ.get(HOME_ENV)
        if not p.is_absolute() and home and key in ("bundle", "output"):
            p = Path(home) / p
        if must_exist and not p.exists():
            raise ConfigError(f"{key} path does not exist: {p}")
        return p

    @property
    def schema_spec(self):
        return self.get("schema", "n2c2")

    @property
    def max_csd(self):
        return int(self.get("max_csd", 4))

    @property
    def newline_boundary(self):
        return _bool(self.get("newline_boundary", "true"))

    @property
    def discontinuous(self):
        value = self.get("discontinuous", "error")
        if value not in ("error", "hull"):
            raise ConfigError("discontinuous must be 'error' or 'hull'")
        return value

    @property
    def cv(self):
        return _bool(self.get("cv", "false"))

    @property
    def threshold(self):
        value = self.get("threshold")
        return float(value) if value not in (None, "") else None

    @property
    def negative_cap(self):
        value = self.get("negative_cap")
        return int(value) if value not in (None, "") else None

    def train_config(self, **changes):
        mapping = {k: v for k, v in self.values.items() if k in _TRAIN_KEYS}
        mapping.update({k: str(v) for k, v in changes.items()})
        return TrainConfig.from_mapping(mapping)

    def grid(self, key, default):
        value = self.get(key)
        return _split(value) if value else list(default)

    def cv_grid(self):
        epochs = [int(v) for v in self.grid("grid_epochs", EPOCH_GRID)]
        batches = [int(v) for v in self.grid("grid_batch_size", BATCH_GRID)]
        allow = _bool(self.get("allow_override", "false"))
        if not allow:
            bad = [e for e in epochs if e not in EPOCH_GRID] + [b for b in batches
                                                                if b not in BATCH_GRID]
            if bad:
                raise ConfigError(f"grid values {bad} outside the supported grid "
                                  "(set allow_override)")
        return epochs, batches

    def snapshot(self):
        return "".join(f"{k} = {self.values[k]}\n" for k in sorted(self.values))


def parse_encoder_spec(text):
    """``"reference:hidden=32,layers=2"`` -> ``("reference", {...})``."""
    text = (text or "reference").strip()
    kind, _, rest = text.partition(":")
    kind = kind.strip().lower()
    if kind == "hf":
        if not rest:
            raise ConfigError("hf encoder needs a model name: hf:<name>")
        return "hf", {"name": rest.strip()}
    if kind != "reference":
        raise ConfigError(f"unknown encoder kind {kind!r}")
    opts = {"hidden": 64, "layers": 2, "heads": 2}
    for item in _split(rest):
        if "=" not in item:
            raise ConfigError(f"bad encoder option {item!r}")
        k, v = item.split("=", 1)
        if k not in ("hidden", "layers", "heads", "ffn", "dropout"):
            raise ConfigError(f"unknown encoder option {k!r}")
        opts[k] = float(v) if k == "dropout" else int(v)
    return "reference", opts
