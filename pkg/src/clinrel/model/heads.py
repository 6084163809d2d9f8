"""Relation representations and the softmax classification head."""

from enum import IntEnum

import torch
from torch import nn

from ..errors import DimensionMismatch, PositionOutOfRange

# Column order of the positions tensor produced by encoding.collate.
_CLS, _S1, _E1, _S2, _E2 = range(5)


class RepresentationScheme(IntEnum):
    SCHEME_1 = 1  # classification token only
    SCHEME_2 = 2  # classification token + start markers
    SCHEME_3 = 3  # classification token + all four markers
    SCHEME_4 = 4  # start markers only

    @property
    def slots(self):
        return _SLOTS[self]

    @property
    def multiplier(self):
        return len(_SLOTS[self])

    def dim(self, hidden_size):
        return self.multiplier * hidden_size

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        text = str(value).strip().upper()
        if text.startswith("SCHEME_"):
            text = text[len("SCHEME_"):]
        try:
            return cls(int(text))
        except ValueError:
            raise ValueError(f"unknown representation scheme {value!r}") from None


_SLOTS = {
    RepresentationScheme.SCHEME_1: (_CLS,),
    RepresentationScheme.SCHEME_2: (_CLS, _S1, _S2),
    RepresentationScheme.SCHEME_3: (_CLS, _S1, _E1, _S2, _E2),
    RepresentationScheme.SCHEME_4: (_S1, _S2),
}


def _positions_tensor(positions):
    if hasattr(positions, "as_tuple"):
        positions = positions.as_tuple()
    return torch.as_tensor(positions, dtype=torch.long)


def extract_representation(encoder_output, positions, scheme):
    """Concatenate the contextual vectors the scheme selects.

    ``encoder_output`` is ``(L, H)`` with ``positions`` a five-element
    (cls, s1, e1, s2, e2) record, or ``(B, L, H)`` with a ``(B, 5)`` tensor.
    """
    scheme = RepresentationScheme.parse(scheme)
    pos = _positions_tensor(positions)
    single = encoder_output.dim() == 2
    if single:
        encoder_output = encoder_output.unsqueeze(0)
        pos = pos.unsqueeze(0)
    B, L, H = encoder_output.shape
    if pos.shape != (B, 5):
        raise PositionOutOfRange(f"positions shape {tuple(pos.shape)} does not match batch {B}")
    idx = pos[:, list(scheme.slots)]
    if idx.numel() and (idx.min() < 0 or idx.max() >= L):
        raise PositionOutOfRange(f"position outside sequence of length {L}")
    gathered = encoder_output.gather(1, idx.unsqueeze(-1).expand(B, idx.shape[1], H))
    rep = gathered.reshape(B, idx.shape[1] * H)
    return rep[0] if single else rep


class RelationHead(nn.Module):
    """Affine map from the scheme representation to class logits."""

    def __init__(self, scheme, classes, hidden_size):
        super().__init__()
        self.scheme = RepresentationScheme.parse(scheme)
        self.classes = tuple(classes)
        self.hidden_size = hidden_size
        self.linear = nn.Linear(self.scheme.dim(hidden_size), len(self.classes))

    @property
    def in_features(self):
        return self.linear.in_features

    def logits(self, encoder_output, positions):
        return self.linear(extract_representation(encoder_output, positions, self.scheme))

    def forward(self, encoder_output, positions):
        return torch.softmax(self.logits(encoder_output, positions), dim=-1)


class RelationModel(nn.Module):
    """Encoder plus head; ``forward`` returns logits for a batch."""

    def __init__(self, encoder, head):
        super().__init__()
        check_dims(encoder, head)
        self.encoder = encoder
        self.head = head

    def forward(self, batch):
        out = self.encoder(batch.token_ids, batch.segment_ids, batch.attention_mask)
        return self.head.logits(out, batch.positions)


def check_dims(encoder, head):
    if head.in_features != head.scheme.dim(encoder.hidden_size):
        raise DimensionMismatch(
            f"head expects {head.in_features} inputs, {head.scheme.name} over "
            f"H={encoder.hidden_size} gives {head.scheme.dim(encoder.hidden_size)}"
        )


def forward(batch, encoder, head):
    """Class probabilities, shape ``(batch, len(head.classes))``."""
    check_dims(encoder, head)
    out = encoder(batch.token_ids, batch.segment_ids, batch.attention_mask)
    return head(out, batch.positions)
