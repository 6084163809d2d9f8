import random

import pytest

from clinrel.candidates import CandidatePair, candidates_for_corpus, generate_candidates
from clinrel.encoding import (
    E1,
    E2,
    MARKERS,
    S1,
    S2,
    HFTokenizerAdapter,
    WordTokenizer,
    batch_encode,
    build_instance,
    collate,
    encode_pairs,
    mark_entities,
)
from clinrel.errors import MarkersDoNotFit
from clinrel.synthetic import random_corpus

from conftest import make_doc


def pair(arg1, arg2, t1="Drug", t2="Strength", csd=0, doc_id="d1"):
    return CandidatePair(doc_id, arg1, arg2, t1, t2, csd)


def test_markers_are_atomic():
    tok = WordTokenizer.fit(["[S1] aspirin [E1]"])
    assert tok.tokenize("x[S1]y [E2]") == ["x", S1, "y", E2]
    assert all(tok.convert_tokens_to_ids([m])[0] != tok.unk_id for m in MARKERS)


def test_mark_single_entity():
    doc = make_doc("aspirin 81 mg", [("Drug", "aspirin"), ("Strength", "81 mg")])
    m1, m2 = mark_entities(doc, pair("T1", "T2"))
    assert m1 == "[S1] aspirin [E1] 81 mg"
    assert m2 == "aspirin [S2] 81 mg [E2]"


def test_mark_cross_sentence():
    doc = make_doc("Took aspirin. Dose 81 mg.", [("Drug", "aspirin"), ("Strength", "81 mg")])
    m1, m2 = mark_entities(doc, pair("T1", "T2", csd=1))
    assert m1 == "Took [S1] aspirin [E1] ."
    assert m2 == "Dose [S2] 81 mg [E2] ."


def test_framing_tiny_pair():
    doc = make_doc("aspirin 81 mg", [("Drug", "aspirin"), ("Strength", "81 mg")])
    tok = WordTokenizer.fit([doc.text])
    inst = build_instance(pair("T1", "T2"), doc, tok, max_len=64)
    assert inst.token_ids[inst.positions.cls] == tok.cls_id == inst.token_ids[0]
    for m in MARKERS:
        assert inst.token_ids.count(tok.marker_ids[m]) == 1
    assert inst.token_ids.count(tok.sep_id) == 2


def test_cls_at_end_framing():
    doc = make_doc("aspirin 81 mg", [("Drug", "aspirin"), ("Strength", "81 mg")])
    tok = WordTokenizer.fit([doc.text])
    tok.cls_at_end = True
    inst = build_instance(pair("T1", "T2"), doc, tok, max_len=64)
    assert inst.positions.cls == len(inst) - 1
    assert inst.token_ids[-1] == tok.cls_id


def test_long_sentence_window_keeps_markers():
    words = [f"w{i}" for i in range(600)]
    words[300], words[310] = "aspirin", "lasix"
    text = " ".join(words) + "."
    doc = make_doc(text, [("Drug", "aspirin"), ("Drug", "lasix")])
    tok = WordTokenizer.fit([text])
    inst = build_instance(pair("T1", "T2", t2="Drug"), doc, tok, max_len=128)
    assert len(inst) <= 128 and inst.truncated
    decoded = tok.convert_ids_to_tokens(inst.token_ids)
    for m in MARKERS:
        assert decoded.count(m) == 1
    assert decoded[decoded.index(S1) + 1] == "aspirin"
    assert decoded[decoded.index(S2) + 1] == "lasix"
    first = decoded[1:decoded.index("[SEP]")]
    # centred: context on both sides of the marked span
    assert first.index(S1) > 10 and len(first) - first.index(E1) > 10


def test_markers_do_not_fit():
    text = " ".join(["aspirin"] + [f"w{i}" for i in range(40)]) + "."
    doc = make_doc(text, [("Drug", text[:-1])])
    doc.entities["T2"] = doc.entities["T1"].__class__("T2", "Drug", 0, 7, "aspirin")
    tok = WordTokenizer.fit([text])
    with pytest.raises(MarkersDoNotFit) as err:
        encode_pairs([pair("T1", "T2", t2="Drug")], {"d1": doc}, tok, max_len=32)
    assert err.value.pair_ref == ("d1", "T1", "T2")


def test_batch_sizes(n2c2):
    docs = random_corpus(10, n2c2, seed=3)
    cs = candidates_for_corpus(docs, n2c2, 4)
    pairs = cs.pairs[:5]
    tok = WordTokenizer.fit(d.text for d in docs)
    dm = {d.doc_id: d for d in docs}
    batches = batch_encode(pairs, dm, tok, batch_size=2)
    assert [len(b) for b in batches] == [2, 2, 1]
    assert batch_encode([], dm, tok) == []
    for b in batches:
        assert b.token_ids.shape == b.segment_ids.shape == b.attention_mask.shape
        lens = b.attention_mask.sum(1).tolist()
        for row, L in enumerate(lens):
            assert (b.token_ids[row, L:] == tok.pad_id).all()


def test_tokenizer_save_load(tmp_path):
    tok = WordTokenizer.fit(["Aspirin 81 mg daily.", "Lasix 40 mg."])
    tok.save(tmp_path / "v.txt")
    again = WordTokenizer.load(tmp_path / "v.txt")
    assert again.vocab == tok.vocab and again.fingerprint == tok.fingerprint


def test_encoding_is_deterministic(n2c2):
    docs = random_corpus(5, n2c2, seed=9)
    tok = WordTokenizer.fit(d.text for d in docs)
    dm = {d.doc_id: d for d in docs}
    pairs = candidates_for_corpus(docs, n2c2).pairs
    assert encode_pairs(pairs, dm, tok) == encode_pairs(pairs, dm, tok)


def tiny_bert_tokenizer():
    transformers = pytest.importorskip("transformers")
    words = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]", "aspirin", "81", "mg", "took", "."]
    return transformers.BertTokenizerFast(vocab={w: i for i, w in enumerate(words)})


def test_hf_adapter():
    tok = HFTokenizerAdapter(tiny_bert_tokenizer())
    assert tok.tokenize("took [S1] aspirin [E1]") == ["took", S1, "aspirin", E1]
    doc = make_doc("took aspirin 81 mg.", [("Drug", "aspirin"), ("Strength", "81 mg")])
    inst = build_instance(pair("T1", "T2"), doc, tok, max_len=32)
    toks = tok.convert_ids_to_tokens(inst.token_ids)
    assert toks[0] == "[CLS]" and toks.count("[SEP]") == 2
    assert [toks[p] for p in inst.positions.as_tuple()[1:]] == [S1, E1, S2, E2]
