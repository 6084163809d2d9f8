"""Contextual encoders.

Every encoder is an ``nn.Module`` with a ``hidden_size`` attribute, a
``spec`` dict sufficient to rebuild it, and
``forward(token_ids, segment_ids, attention_mask) -> (B, L, H)``.
"""

import torch
from torch import nn

from ..errors import InvalidShape

# small embedding init keeps from-scratch training stable on tiny corpora
EMB_STD = 0.01


class EncoderBlock(nn.Module):
    def __init__(self, hidden, heads, ffn, dropout):
        super().__init__()
        self.attn_norm = nn.LayerNorm(hidden)
        self.attn = nn.MultiheadAttention(hidden, heads, dropout=dropout, batch_first=True)
        self.ffn_norm = nn.LayerNorm(hidden)
        self.ffn = nn.Sequential(
            nn.Linear(hidden, ffn),
            nn.GELU(),
            nn.Linear(ffn, hidden),
        )
        self.dropout = nn.Dropout(dropout)

    def forward(self, x, pad_mask=None):
        h = self.attn_norm(x)
        h, _ = self.attn(h, h, h, key_padding_mask=pad_mask, need_weights=False)
        x = x + self.dropout(h)
        x = x + self.dropout(self.ffn(self.ffn_norm(x)))
        return x


class ReferenceEncoder(nn.Module):
    """Small pre-norm self-attention encoder trained from scratch.

    Token, position and segment embeddings feed ``layers`` transformer blocks.
    Parameters are initialised from ``seed`` without touching the global RNG
    state, so two constructions with the same arguments are identical.
    """

    def __init__(self, vocab_size, hidden=64, layers=2, heads=2, max_len=512,
                 ffn=None, dropout=0.0, seed=13):
        if hidden <= 0 or heads <= 0 or layers <= 0 or hidden % heads:
            raise InvalidShape(f"hidden={hidden} must be a positive multiple of heads={heads}")
        if vocab_size <= 0 or max_len <= 0:
            raise InvalidShape("vocab_size and max_len must be positive")
        super().__init__()
        ffn = ffn or 4 * hidden
        self.hidden_size = hidden
        self.spec = dict(kind="reference", vocab_size=vocab_size, hidden=hidden,
                         layers=layers, heads=heads, max_len=max_len, ffn=ffn,
                         dropout=dropout, seed=seed)
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(seed)
            self.tok_emb = nn.Embedding(vocab_size, hidden)
            self.pos_emb = nn.Embedding(max_len, hidden)
            self.seg_emb = nn.Embedding(2, hidden)
            for emb in (self.tok_emb, self.pos_emb, self.seg_emb):
                nn.init.normal_(emb.weight, std=EMB_STD)
            self.blocks = nn.ModuleList(
                EncoderBlock(hidden, heads, ffn, dropout) for _ in range(layers)
            )
            self.norm = nn.LayerNorm(hidden)

    def forward(self, token_ids, segment_ids=None, attention_mask=None):
        B, L = token_ids.shape
        if L > self.pos_emb.num_embeddings:
            raise InvalidShape(f"sequence length {L} exceeds encoder max_len "
                               f"{self.pos_emb.num_embeddings}")
        pos = torch.arange(L, device=token_ids.device).unsqueeze(0).expand(B, L)
        x = self.tok_emb(token_ids) + self.pos_emb(pos)
        if segment_ids is not None:
            x = x + self.seg_emb(segment_ids)
        pad_mask = None if attention_mask is None else attention_mask == 0
        for block in self.blocks:
            x = block(x, pad_mask)
        return self.norm(x)


def reference_encoder(layers, heads, hidden, seed, vocab_size=64, max_len=512, **kwargs):
    return ReferenceEncoder(vocab_size, hidden=hidden, layers=layers, heads=heads,
                            max_len=max_len, seed=seed, **kwargs)


class HFEncoder(nn.Module):
    """Adapter over a Hugging Face ``AutoModel`` (BERT, RoBERTa, XLNet ...).

    Dropout and other internals stay at the pretrained configuration's
    defaults. The embedding table is resized to ``vocab_size`` so the marker
    tokens get fresh, randomly initialised rows.
    """

    def __init__(self, model, vocab_size=None, name=None):
        super().__init__()
        self.model = model
        if vocab_size is not None and vocab_size != model.get_input_embeddings().num_embeddings:
            model.resize_token_embeddings(vocab_size)
        self.hidden_size = model.config.hidden_size
        self._use_segments = getattr(model.config, "type_vocab_size", 2) > 1
        self.spec = dict(kind="hf", name=name or getattr(model, "name_or_path", ""),
                         vocab_size=model.get_input_embeddings().num_embeddings)

    @classmethod
    def from_pretrained(cls, name_or_path, vocab_size=None):
        from transformers import AutoModel

        return cls(AutoModel.from_pretrained(name_or_path), vocab_size, name=name_or_path)

    def forward(self, token_ids, segment_ids=None, attention_mask=None):
        kwargs = dict(input_ids=token_ids, attention_mask=attention_mask)
        if segment_ids is not None and self._use_segments:
            kwargs["token_type_ids"] = segment_ids
        return self.model(**kwargs).last_hidden_state


def build_encoder(spec):
    """Rebuild an encoder from its ``spec`` dict (weights are loaded separately)."""
    kind = spec.get("kind")
    if kind == "reference":
        return ReferenceEncoder(
            int(spec["vocab_size"]), hidden=int(spec["hidden"]), layers=int(spec["layers"]),
            heads=int(spec["heads"]), max_len=int(spec["max_len"]), ffn=int(spec["ffn"]),
            dropout=float(spec["dropout"]), seed=int(spec["seed"]),
        )
    if kind == "hf":
        return HFEncoder.from_pretrained(spec["name"], vocab_size=int(spec["vocab_size"]))
    raise InvalidShape(f"unknown encoder kind {kind!r}")
