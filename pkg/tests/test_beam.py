import numpy as np
import pytest

from crepair.driver import beam_decode, greedy_decode
from crepair.nn import autodiff as ad
from crepair.nn.inputs import make_encoder_input, pad_batch, target_ext_ids
from crepair.nn.model import HyperParams, RepairModel, decoder_input_ids, teacher_inputs
from crepair.nn.train import Adam
from crepair.nn.vocab import BOS_ID, EOS_ID, Vocabulary, RESERVED


def toy_model(seed: int, fitted: bool = False):
    """Smallest usable model over an 8-entry vocabulary (reserved + a, b, ;).

    With fitted=True the decoder is trained for a few steps on one short
    sequence so its distribution is peaked and termination-aware, the regime
    beam search is meant for.
    """
    hyper = HyperParams(layers=1, heads=1, model_dim=8, ffn_dim=16,
                        offset_radius=4, dropout=0.0, max_seq_len=16,
                        max_target_len=4, context_token_budget=4,
                        message_token_budget=4)
    vocab = Vocabulary(tuple(RESERVED) + ("a", "b", ";"))
    assert vocab.size == 8
    model = RepairModel(hyper, vocab, seed=seed)
    inp = make_encoder_input(["a", "b", ";"], ["a"], ["b"], 1, 1, vocab,
                             hyper.max_seq_len, hyper.offset_radius)

    if fitted:
        target, representable = target_ext_ids(["a", "b", ";"], inp, vocab)
        optimizer = Adam(model.params, lr=5e-2)
        for _ in range(40):
            model.zero_grad()
            ids, mask, offsets = pad_batch([inp])
            enc0 = ad.tslice(model.encode(ids, mask, offsets), (0,))
            dec_in = teacher_inputs(target, vocab.size)
            states, emb = model.decoder_states(enc0, mask[0], dec_in)
            step = model.pointer_step(enc0, mask[0], inp.ext_ids, 0, states, emb)
            loss = model.sequence_loss(step.p_ext, target, representable)
            loss.backward()
            optimizer.step()

    ids, mask, offsets = pad_batch([inp])
    enc = ad.tslice(model.encode(ids, mask, offsets), (0,))
    ext = inp.ext_ids
    return model, enc, mask[0], ext, inp


def enumerate_candidates(model, enc, src_mask, ext, n_oov, max_len):
    """Every EOS-terminated sequence up to max_len plus every EOS-free
    sequence of exactly max_len, ranked by total log-probability."""
    out = []

    def extend(seq, score):
        prefix = decoder_input_ids((BOS_ID,) + seq, model.vocab.size)
        step = model.decode_step(enc, src_mask, ext, n_oov, prefix)
        log_p = np.log(np.maximum(step.p_ext.data[0], 1e-300))
        for tok in range(len(log_p)):
            total = score + log_p[tok]
            if tok == EOS_ID:
                out.append((seq, total))
            elif len(seq) + 1 == max_len:
                out.append((seq + (tok,), total))
            else:
                extend(seq + (tok,), total)

    extend((), 0.0)
    out.sort(key=lambda item: (-item[1], len(item[0]), item[0]))
    return out


def ids_to_texts(model, seq, oov_tokens):
    return [model.vocab.token(i) if i < model.vocab.size
            else oov_tokens[i - model.vocab.size] for i in seq]


def test_beam_width_one_equals_greedy():
    for seed in (0, 1, 2, 3):
        model, enc, src_mask, ext, inp = toy_model(seed)
        greedy = greedy_decode(model, enc, src_mask, ext, 0,
                               model.hyper.max_target_len)
        (top,) = beam_decode(model, enc, src_mask, ext, 0, inp.oov_tokens,
                             beam_width=1,
                             max_target_len=model.hyper.max_target_len)
        assert top.tokens == ids_to_texts(model, greedy, inp.oov_tokens)


@pytest.mark.parametrize("seed", [0, 1, 2])
@pytest.mark.parametrize("width", [3, 5])
def test_beam_matches_exhaustive_enumeration(seed, width):
    model, enc, src_mask, ext, inp = toy_model(seed, fitted=True)
    max_len = 4
    want = enumerate_candidates(model, enc, src_mask, ext, 0, max_len)[:width]
    got = beam_decode(model, enc, src_mask, ext, 0, inp.oov_tokens,
                      beam_width=width, max_target_len=max_len)
    assert len(got) == width
    for cand, (seq, score) in zip(got, want):
        assert cand.tokens == ids_to_texts(model, seq, inp.oov_tokens)
        assert cand.log_prob == pytest.approx(score, rel=1e-12)


def test_candidates_sorted_finite_and_ranked():
    model, enc, src_mask, ext, inp = toy_model(5)
    candidates = beam_decode(model, enc, src_mask, ext, 0, inp.oov_tokens,
                             beam_width=5, max_target_len=4)
    assert [c.rank for c in candidates] == list(range(1, len(candidates) + 1))
    scores = [c.log_prob for c in candidates]
    assert all(np.isfinite(s) for s in scores)
    assert scores == sorted(scores, reverse=True)


def test_placeholder_denormalization_in_candidates():
    model, enc, src_mask, ext, inp = toy_model(6)
    id_map = {"_<var1>_": "alpha"}
    raw = beam_decode(model, enc, src_mask, ext, 0, inp.oov_tokens,
                      beam_width=5, max_target_len=4)
    mapped = beam_decode(model, enc, src_mask, ext, 0, inp.oov_tokens,
                         beam_width=5, max_target_len=4, id_map=id_map)
    for a, b in zip(raw, mapped):
        expect = [id_map.get(t, t) for t in a.tokens]
        assert b.tokens == expect
