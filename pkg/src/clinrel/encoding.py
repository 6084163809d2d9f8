"""Entity-marker insertion and two-sentence input encoding.

An instance is laid out as::

    [CLS] <sentence of arg1 with [S1] .. [E1]> [SEP] <sentence of arg2 with [S2] .. [E2]> [SEP]

Tokenizers whose model reads the classification token at the end (XLNet
style) set ``cls_at_end`` and get ``... [SEP] [CLS]`` instead. Downstream code
always reads ``positions`` rather than assuming index 0.
"""

import hashlib
import re
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

import torch

from .errors import MarkersDoNotFit

S1, E1, S2, E2 = "[S1]", "[E1]", "[S2]", "[E2]"
MARKERS = (S1, E1, S2, E2)
PAD, UNK, CLS, SEP = "[PAD]", "[UNK]", "[CLS]", "[SEP]"
DEFAULT_MAX_LEN = 384


class WordTokenizer:
    """Regex word/punctuation tokenizer with a fitted closed vocabulary.

    Markers and framing tokens are atomic vocabulary items. Satisfies the
    tokenizer contract used by :func:`build_instance`: ``tokenize``,
    ``convert_tokens_to_ids``, ``convert_ids_to_tokens``, the ``*_id``
    attributes, ``cls_at_end`` and ``fingerprint``.
    """

    specials = (PAD, UNK, CLS, SEP, S1, E1, S2, E2)
    cls_at_end = False
    _pattern = re.compile(r"\[(?:S1|E1|S2|E2)\]|\w+|[^\w\s]")

    def __init__(self, vocab=(), lowercase=True):
        self.lowercase = lowercase
        self.vocab = list(self.specials) + [t for t in vocab if t not in self.specials]
        self.index = {t: i for i, t in enumerate(self.vocab)}
        if len(self.index) != len(self.vocab):
            raise ValueError("duplicate vocabulary entries")
        self.pad_id = self.index[PAD]
        self.unk_id = self.index[UNK]
        self.cls_id = self.index[CLS]
        self.sep_id = self.index[SEP]
        self.marker_ids = {m: self.index[m] for m in MARKERS}

    @classmethod
    def fit(cls, texts, min_freq=1, lowercase=True):
        probe = cls(lowercase=lowercase)
        freq = Counter(t for text in texts for t in probe.tokenize(text))
        vocab = sorted(t for t, n in freq.items() if n >= min_freq and t not in cls.specials)
        return cls(vocab, lowercase=lowercase)

    def __len__(self):
        return len(self.vocab)

    @property
    def vocab_size(self):
        return len(self.vocab)

    def tokenize(self, text):
        out = []
        for m in self._pattern.finditer(text):
            tok = m.group()
            if tok not in MARKERS and self.lowercase:
                tok = tok.lower()
            out.append(tok)
        return out

    def convert_tokens_to_ids(self, tokens):
        return [self.index.get(t, self.unk_id) for t in tokens]

    def convert_ids_to_tokens(self, ids):
        return [self.vocab[i] for i in ids]

    @property
    def fingerprint(self):
        h = hashlib.sha256()
        h.update(("lower" if self.lowercase else "cased").encode())
        for tok in self.vocab:
            h.update(b"\0" + tok.encode("utf-8"))
        return h.hexdigest()[:16]

    def save(self, path):
        header = "#lowercase" if self.lowercase else "#cased"
        body = "\n".join(self.vocab[len(self.specials):])
        Path(path).write_text(header + "\n" + body + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path):
        lines = Path(path).read_text(encoding="utf-8").split("\n")
        lowercase = lines[0] != "#cased"
        return cls([t for t in lines[1:] if t], lowercase=lowercase)


class HFTokenizerAdapter:
    """Expose a Hugging Face tokenizer through the same contract.

    The four markers are registered as additional special tokens so they are
    never split. The paired encoder must resize its embedding table to
    ``vocab_size`` afterwards.
    """

    def __init__(self, hf_tokenizer, cls_at_end=None):
        self.tok = hf_tokenizer
        self.tok.add_special_tokens({"additional_special_tokens": list(MARKERS)})
        if cls_at_end is None:
            cls_at_end = "xlnet" in type(hf_tokenizer).__name__.lower()
        self.cls_at_end = cls_at_end
        self.cls_id = self.tok.cls_token_id
        self.sep_id = self.tok.sep_token_id
        self.pad_id = self.tok.pad_token_id if self.tok.pad_token_id is not None else 0
        self.marker_ids = {m: self.tok.convert_tokens_to_ids(m) for m in MARKERS}

    @classmethod
    def from_pretrained(cls, name_or_path, **kwargs):
        from transformers import AutoTokenizer

        return cls(AutoTokenizer.from_pretrained(name_or_path, **kwargs))

    @property
    def vocab_size(self):
        return len(self.tok)

    def __len__(self):
        return len(self.tok)

    def tokenize(self, text):
        return self.tok.tokenize(text)

    def convert_tokens_to_ids(self, tokens):
        return self.tok.convert_tokens_to_ids(tokens)

    def convert_ids_to_tokens(self, ids):
        return self.tok.convert_ids_to_tokens(list(ids))

    @property
    def fingerprint(self):
        h = hashlib.sha256()
        h.update(str(getattr(self.tok, "name_or_path", "")).encode())
        h.update(str(len(self.tok)).encode())
        h.update(str(sorted(self.marker_ids.items())).encode())
        return h.hexdigest()[:16]

    def save(self, path):
        self.tok.save_pretrained(str(path))


# ---------------------------------------------------------------------------
# marking


def _wrap(text, start, end, open_tok, close_tok):
    pre, mid, post = text[:start], text[start:end], text[end:]
    left = "" if not pre or pre[-1].isspace() else " "
    right = "" if not post or post[0].isspace() else " "
    return f"{pre}{left}{open_tok} {mid} {close_tok}{right}{post}"


def _entity_sentence(document, entity):
    from .corpus import sentence_index_of

    sent = document.sentences[sentence_index_of(document, entity)]
    seg_end = max(sent.end, entity.end)
    return document.text[sent.start:seg_end], entity.start - sent.start, entity.end - sent.start


def sentence_texts(document, pair):
    """The unmarked sentences holding arg1 and arg2."""
    t1, _, _ = _entity_sentence(document, document.entities[pair.arg1])
    t2, _, _ = _entity_sentence(document, document.entities[pair.arg2])
    return t1, t2


def mark_entities(document, pair):
    """Return the arg1 sentence marked with [S1]/[E1] and the arg2 sentence with [S2]/[E2].

    Same-sentence pairs yield the same base sentence twice, each copy carrying
    only its own marker set.
    """
    t1, s, e = _entity_sentence(document, document.entities[pair.arg1])
    marked1 = _wrap(t1, s, e, S1, E1)
    t2, s, e = _entity_sentence(document, document.entities[pair.arg2])
    marked2 = _wrap(t2, s, e, S2, E2)
    return marked1, marked2


# ---------------------------------------------------------------------------
# instances


@dataclass(frozen=True)
class Positions:
    cls: int
    s1: int
    e1: int
    s2: int
    e2: int

    def as_tuple(self):
        return (self.cls, self.s1, self.e1, self.s2, self.e2)


@dataclass(frozen=True)
class EncodedInstance:
    token_ids: tuple
    segment_flags: tuple
    positions: Positions
    pair_ref: tuple
    truncated: bool = False

    def __len__(self):
        return len(self.token_ids)


def _fit_lengths(l1, l2, need1, need2, budget):
    """Shrink the longer side first, never below the marker span it must keep."""
    n1, n2 = l1, l2
    excess = n1 + n2 - budget
    while excess > 0:
        can1, can2 = n1 > need1, n2 > need2
        if can1 and (n1 >= n2 or not can2):
            n1 -= 1
        elif can2:
            n2 -= 1
        else:
            return None
        excess -= 1
    return n1, n2


def _window(length, n, lo, hi):
    """Start of a length-``n`` window centred on [lo, hi] inside ``length``."""
    centre = (lo + hi) / 2.0
    start = int(centre - (n - 1) / 2.0 + 0.5)
    start = min(start, lo)
    start = max(start, hi + 1 - n)
    return max(0, min(start, length - n))


def _locate(tokens, open_tok, close_tok):
    return tokens.index(open_tok), tokens.index(close_tok)


def build_instance(pair, document, tokenizer, max_len=DEFAULT_MAX_LEN):
    marked1, marked2 = mark_entities(document, pair)
    tok1 = tokenizer.tokenize(marked1)
    tok2 = tokenizer.tokenize(marked2)
    s1, e1 = _locate(tok1, S1, E1)
    s2, e2 = _locate(tok2, S2, E2)

    budget = max_len - 3
    fitted = _fit_lengths(len(tok1), len(tok2), e1 - s1 + 1, e2 - s2 + 1, budget)
    if fitted is None:
        raise MarkersDoNotFit(
            f"entity spans need {e1 - s1 + 1 + e2 - s2 + 1} tokens, budget is {budget}",
            pair.ref,
        )
    n1, n2 = fitted
    truncated = (n1, n2) != (len(tok1), len(tok2))
    w1 = _window(len(tok1), n1, s1, e1)
    w2 = _window(len(tok2), n2, s2, e2)
    tok1, tok2 = tok1[w1:w1 + n1], tok2[w2:w2 + n2]
    s1, e1, s2, e2 = s1 - w1, e1 - w1, s2 - w2, e2 - w2

    ids1 = tokenizer.convert_tokens_to_ids(tok1)
    ids2 = tokenizer.convert_tokens_to_ids(tok2)
    if tokenizer.cls_at_end:
        token_ids = ids1 + [tokenizer.sep_id] + ids2 + [tokenizer.sep_id, tokenizer.cls_id]
        off1, off2 = 0, n1 + 1
        cls_pos = len(token_ids) - 1
        segments = [0] * (n1 + 1) + [1] * (n2 + 2)
    else:
        token_ids = [tokenizer.cls_id] + ids1 + [tokenizer.sep_id] + ids2 + [tokenizer.sep_id]
        off1, off2 = 1, n1 + 2
        cls_pos = 0
        segments = [0] * (n1 + 2) + [1] * (n2 + 1)
    positions = Positions(cls_pos, s1 + off1, e1 + off1, s2 + off2, e2 + off2)
    return EncodedInstance(tuple(token_ids), tuple(segments), positions, pair.ref, truncated)


@dataclass
class Batch:
    token_ids: torch.Tensor       # (B, L) long
    segment_ids: torch.Tensor     # (B, L) long
    attention_mask: torch.Tensor  # (B, L) long, 1 for real tokens
    positions: torch.Tensor       # (B, 5) long: cls, s1, e1, s2, e2
    refs: list

    def __len__(self):
        return self.token_ids.shape[0]


def collate(instances, pad_id):
    width = max(len(i) for i in instances)
    n = len(instances)
    ids = torch.full((n, width), pad_id, dtype=torch.long)
    seg = torch.zeros((n, width), dtype=torch.long)
    mask = torch.zeros((n, width), dtype=torch.long)
    for row, inst in enumerate(instances):
        L = len(inst)
        ids[row, :L] = torch.tensor(inst.token_ids, dtype=torch.long)
        seg[row, :L] = torch.tensor(inst.segment_flags, dtype=torch.long)
        mask[row, :L] = 1
    pos = torch.tensor([i.positions.as_tuple() for i in instances], dtype=torch.long)
    return Batch(ids, seg, mask, pos, [i.pair_ref for i in instances])


def encode_pairs(pairs, documents, tokenizer, max_len=DEFAULT_MAX_LEN):
    """Encode every pair; ``documents`` maps doc_id to Document."""
    out = []
    for pair in pairs:
        try:
            out.append(build_instance(pair, documents[pair.doc_id], tokenizer, max_len))
        except MarkersDoNotFit as exc:
            if exc.pair_ref is None:
                raise MarkersDoNotFit(str(exc), pair.ref) from exc
            raise
    return out


def batch_encode(pairs, documents, tokenizer, max_len=DEFAULT_MAX_LEN, batch_size=8):
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    instances = encode_pairs(pairs, documents, tokenizer, max_len)
    return [collate(instances[i:i + batch_size], tokenizer.pad_id)
            for i in range(0, len(instances), batch_size)]


def debug_line(instance, tokenizer):
    doc_id, a1, a2 = instance.pair_ref
    tokens = " ".join(tokenizer.convert_ids_to_tokens(instance.token_ids))
    pos = ",".join(str(p) for p in instance.positions.as_tuple())
    return f"{doc_id}\t{a1}\t{a2}\t{tokens}\t{pos}"


def write_debug_dump(instances, tokenizer, path):
    with open(path, "w", encoding="utf-8") as fh:
        for inst in instances:
            fh.write(debug_line(inst, tokenizer) + "\n")
