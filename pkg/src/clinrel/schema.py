"""Relation schemas: which ordered entity-type pairs may carry which categories.

Schema file format, one directive per line (``#`` starts a comment)::

    rule<TAB>Strength<TAB>Drug<TAB>Strength-Drug
    rule<TAB>A<TAB>B<TAB>R1,R2
    name<TAB>my-schema
    priority<TAB>R2,R1
    self_tiebreak<TAB>offset

Only ``rule`` lines are required. ``priority`` resolves ambiguous type pairs
for the binary strategy; ``self_tiebreak`` lets a same-type rule assign
Arg1 to the entity with the earlier start offset.
"""

from dataclasses import dataclass, field
from types import MappingProxyType

from .errors import DuplicateRule, MalformedSchema, UnknownSchema


@dataclass(frozen=True)
class RelationSchema:
    name: str
    rules: MappingProxyType
    categories: frozenset
    priority: tuple = ()
    self_tiebreak: bool = False
    _lookup: dict = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        missing = {c for cats in self.rules.values() for c in cats} - set(self.categories)
        if missing:
            raise MalformedSchema(f"rule categories not declared: {sorted(missing)}")
        lookup = {}
        for (t1, t2), cats in self.rules.items():
            for cat in cats:
                lookup.setdefault(frozenset((t1, t2)), []).append((cat, (t1, t2)))
        object.__setattr__(self, "_lookup", lookup)

    @property
    def unambiguous(self):
        return all(len(cats) == 1 for cats in self.rules.values())

    @property
    def ordered_categories(self):
        """Categories in rule declaration order (stable class indexing)."""
        seen = []
        for cats in self.rules.values():
            for c in cats:
                if c not in seen:
                    seen.append(c)
        seen.extend(sorted(set(self.categories) - set(seen)))
        return tuple(seen)

    def compatible_categories(self, type1, type2):
        return compatible_categories(self, type1, type2)

    def to_text(self):
        lines = [f"name\t{self.name}"]
        for (t1, t2), cats in self.rules.items():
            lines.append(f"rule\t{t1}\t{t2}\t{','.join(cats)}")
        if self.priority:
            lines.append(f"priority\t{','.join(self.priority)}")
        if self.self_tiebreak:
            lines.append("self_tiebreak\toffset")
        return "\n".join(lines) + "\n"


def make_schema(name, rules, priority=(), self_tiebreak=False):
    """Build a schema from ``{(arg1_type, arg2_type): [category, ...]}``."""
    frozen = {tuple(k): tuple(v) for k, v in rules.items()}
    cats = frozenset(c for v in frozen.values() for c in v)
    return RelationSchema(name, MappingProxyType(frozen), cats, tuple(priority), self_tiebreak)


def compatible_categories(schema, type1, type2):
    """All ``(category, (arg1_type, arg2_type))`` entries for the unordered type pair.

    Lookup is symmetric; the second element is the role order the rule
    declares, independent of the query order.
    """
    return list(schema._lookup.get(frozenset((type1, type2)), ()))


# ---------------------------------------------------------------------------
# builtins

N2C2_CATEGORIES = (
    "ADE-Drug", "Reason-Drug", "Strength-Drug", "Duration-Drug",
    "Route-Drug", "Form-Drug", "Dosage-Drug", "Frequency-Drug",
)

# Group names for the seven MADE1.0 relation kinds.
MADE_CATEGORIES = (
    "Dosage", "Route", "Frequency", "Duration", "ADE", "Indication", "Severity",
)

_MADE_RULES = {
    ("Drug", "Dose"): "Dosage",
    ("Drug", "Route"): "Route",
    ("Drug", "Frequency"): "Frequency",
    ("Drug", "Duration"): "Duration",
    ("Drug", "ADE"): "ADE",
    ("Drug", "Indication"): "Indication",
    ("SSLIF", "Severity"): "Severity",
}


def _n2c2():
    rules = {}
    for cat in N2C2_CATEGORIES:
        attr = cat.split("-")[0]
        rules[(attr, "Drug")] = [cat]
    return make_schema("n2c2", rules)


def _made(aliases=None):
    aliases = aliases or {}
    rules = {pair: [aliases.get(cat, cat)] for pair, cat in _MADE_RULES.items()}
    return make_schema("made1.0", rules)


BUILTIN_SCHEMAS = ("made1.0", "n2c2")


def builtin_schema(name, aliases=None):
    """Return a builtin schema; ``aliases`` renames MADE1.0 categories."""
    key = name.lower()
    if key == "n2c2":
        return _n2c2()
    if key in ("made1.0", "made"):
        return _made(aliases)
    raise UnknownSchema(f"unknown schema {name!r}; builtins are {', '.join(BUILTIN_SCHEMAS)}")


def load_schema(definition_text, name="custom"):
    rules = {}
    priority = ()
    self_tiebreak = False
    for line_no, raw in enumerate(definition_text.splitlines(), 1):
        line = raw.rstrip("\r")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        parts = line.split("\t")
        directive = parts[0].strip()
        if directive == "rule":
            if len(parts) != 4 or not all(p.strip() for p in parts[1:]):
                raise MalformedSchema(f"line {line_no}: expected rule<TAB>T1<TAB>T2<TAB>C1[,C2]")
            key = (parts[1].strip(), parts[2].strip())
            if key in rules:
                raise DuplicateRule(f"line {line_no}: duplicate rule for {key[0]}/{key[1]}")
            cats = [c.strip() for c in parts[3].split(",")]
            if not all(cats) or len(set(cats)) != len(cats):
                raise MalformedSchema(f"line {line_no}: empty or repeated category")
            rules[key] = cats
        elif directive == "name" and len(parts) == 2:
            name = parts[1].strip()
        elif directive == "priority" and len(parts) == 2:
            priority = tuple(c.strip() for c in parts[1].split(",") if c.strip())
        elif directive == "self_tiebreak" and len(parts) == 2:
            if parts[1].strip() != "offset":
                raise MalformedSchema(f"line {line_no}: only 'offset' tiebreak is supported")
            self_tiebreak = True
        else:
            raise MalformedSchema(f"line {line_no}: unrecognised directive {raw!r}")
    if not rules:
        raise MalformedSchema("schema defines no rules")
    unknown = set(priority) - {c for v in rules.values() for c in v}
    if unknown:
        raise MalformedSchema(f"priority names unknown categories {sorted(unknown)}")
    return make_schema(name, rules, priority=priority, self_tiebreak=self_tiebreak)


def resolve_schema(spec):
    """Builtin name or path to a schema file."""
    from pathlib import Path

    if spec.lower() in BUILTIN_SCHEMAS or spec.lower() == "made":
        return builtin_schema(spec)
    path = Path(spec)
    if path.is_file():
        return load_schema(path.read_text(encoding="utf-8"), name=path.stem)
    raise UnknownSchema(f"{spec!r} is neither a builtin schema nor a schema file")
