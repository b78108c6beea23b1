"""Transformer encoder + line localizer + pointer-generator decoder.

The encoder embeds each per-line input with token embeddings, sinusoidal
within-sequence positions and one learned embedding of the clamped line
offset added to every token of the sequence.  A two-layer MLP over the BOS
states of all lines scores which line is broken.  The decoder is a standard
transformer decoder over the broken line's encoder states, topped with a
single-head copy attention: the final distribution mixes the vocabulary
softmax with attention mass scattered onto the source tokens, gated by a
learned generation probability.

Everything runs in float64 on the reverse-mode substrate in autodiff.py so
analytic gradients can be audited against central finite differences.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from ..errors import SequenceTooLong, TargetTooLong
from . import autodiff as ad
from .autodiff import Tensor
from .vocab import BOS_ID, UNK_ID, Vocabulary

NEG_INF = -1e9


@dataclass(frozen=True)
class HyperParams:
    layers: int = 5
    heads: int = 8
    model_dim: int = 256
    ffn_dim: int = 0          # 0 means 4 * model_dim
    offset_radius: int = 50
    learning_rate: float = 1e-4
    batch_size: int = 25
    dropout: float = 0.1
    grad_clip: float = 10.0
    max_seq_len: int = 256
    max_target_len: int = 32
    context_token_budget: int = 64
    message_token_budget: int = 48

    def __post_init__(self):
        if self.model_dim % self.heads:
            raise ValueError("model_dim must be divisible by heads")

    @property
    def d_ff(self) -> int:
        return self.ffn_dim or 4 * self.model_dim

    def to_json(self) -> dict:
        return asdict(self)

    @staticmethod
    def from_json(obj: dict) -> "HyperParams":
        return HyperParams(**obj)


def sinusoid_table(max_len: int, dim: int) -> np.ndarray:
    pos = np.arange(max_len, dtype=np.float64)[:, None]
    i = np.arange(dim, dtype=np.float64)[None, :]
    angle = pos / np.power(10000.0, (2.0 * (i // 2)) / dim)
    table = np.where(i % 2 == 0, np.sin(angle), np.cos(angle))
    return table


@dataclass
class PointerStep:
    attention: Tensor     # (T, m)
    context: Tensor       # (T, d)
    p_vocab: Tensor       # (T, V)
    p_gen: Tensor         # (T, 1)
    p_ext: Tensor         # (T, V + n_oov)


class RepairModel:
    def __init__(self, hyper: HyperParams, vocab: Vocabulary, seed: int = 0,
                 params: dict | None = None):
        self.hyper = hyper
        self.vocab = vocab
        self.pos_table = sinusoid_table(hyper.max_seq_len, hyper.model_dim)
        self.dropout_rng = np.random.Generator(np.random.PCG64(seed ^ 0x5EED))
        if params is not None:
            self.params = {k: Tensor(v, requires_grad=True) for k, v in params.items()}
        else:
            self.params = self._init_params(np.random.Generator(np.random.PCG64(seed)))

    # --- parameters ---------------------------------------------------------

    def _init_params(self, rng: np.random.Generator) -> dict:
        h = self.hyper
        d, dff, v = h.model_dim, h.d_ff, self.vocab.size
        p: dict[str, Tensor] = {}

        def linear(name, fan_in, fan_out):
            bound = math.sqrt(6.0 / (fan_in + fan_out))
            p[f"{name}.w"] = Tensor(rng.uniform(-bound, bound, (fan_in, fan_out)),
                                    requires_grad=True)
            p[f"{name}.b"] = Tensor(np.zeros(fan_out), requires_grad=True)

        def norm(name):
            p[f"{name}.g"] = Tensor(np.ones(d), requires_grad=True)
            p[f"{name}.b"] = Tensor(np.zeros(d), requires_grad=True)

        p["embed.tok"] = Tensor(rng.normal(0.0, 0.02, (v, d)), requires_grad=True)
        p["embed.offset"] = Tensor(rng.normal(0.0, 0.02, (2 * h.offset_radius + 1, d)),
                                   requires_grad=True)
        for i in range(h.layers):
            for proj in ("wq", "wk", "wv", "wo"):
                linear(f"enc.{i}.attn.{proj}", d, d)
            norm(f"enc.{i}.ln1")
            linear(f"enc.{i}.ffn.fc1", d, dff)
            linear(f"enc.{i}.ffn.fc2", dff, d)
            norm(f"enc.{i}.ln2")
        for i in range(h.layers):
            for proj in ("wq", "wk", "wv", "wo"):
                linear(f"dec.{i}.self.{proj}", d, d)
            norm(f"dec.{i}.ln1")
            for proj in ("wq", "wk", "wv", "wo"):
                linear(f"dec.{i}.cross.{proj}", d, d)
            norm(f"dec.{i}.ln2")
            linear(f"dec.{i}.ffn.fc1", d, dff)
            linear(f"dec.{i}.ffn.fc2", dff, d)
            norm(f"dec.{i}.ln3")
        linear("loc.fc1", d, d)
        linear("loc.fc2", d, 1)
        linear("out.inner", 2 * d, d)    # V, b
        linear("out.proj", d, v)         # V', b'
        p["ptr.w_hstar"] = Tensor(rng.normal(0.0, 1.0 / math.sqrt(d), (d, 1)),
                                  requires_grad=True)
        p["ptr.w_s"] = Tensor(rng.normal(0.0, 1.0 / math.sqrt(d), (d, 1)),
                              requires_grad=True)
        p["ptr.w_x"] = Tensor(rng.normal(0.0, 1.0 / math.sqrt(d), (d, 1)),
                              requires_grad=True)
        p["ptr.b"] = Tensor(np.zeros(1), requires_grad=True)
        return p

    def zero_grad(self):
        for t in self.params.values():
            t.grad = None

    def export_params(self) -> dict:
        return {k: t.data.copy() for k, t in sorted(self.params.items())}

    # --- building blocks ----------------------------------------------------

    def _linear(self, name: str, x: Tensor) -> Tensor:
        return ad.add(ad.matmul(x, self.params[f"{name}.w"]), self.params[f"{name}.b"])

    def _norm(self, name: str, x: Tensor) -> Tensor:
        return ad.layer_norm(x, self.params[f"{name}.g"], self.params[f"{name}.b"])

    def _dropout(self, x: Tensor, training: bool) -> Tensor:
        return ad.dropout(x, self.hyper.dropout, self.dropout_rng, training)

    def _attention(self, prefix: str, q_in: Tensor, kv_in: Tensor,
                   additive_mask: np.ndarray, training: bool) -> Tensor:
        """Multi-head attention; additive_mask broadcasts onto (B,h,Lq,Lk)."""
        h = self.hyper.heads
        d = self.hyper.model_dim
        dk = d // h
        b, lq = q_in.shape[0], q_in.shape[1]
        lk = kv_in.shape[1]

        def split(t, length):
            return ad.swapaxes(ad.reshape(t, (b, length, h, dk)), 1, 2)

        q = split(self._linear(f"{prefix}.wq", q_in), lq)
        k = split(self._linear(f"{prefix}.wk", kv_in), lk)
        v = split(self._linear(f"{prefix}.wv", kv_in), lk)
        scores = ad.mul(ad.matmul(q, ad.swapaxes(k, -1, -2)), 1.0 / math.sqrt(dk))
        scores = ad.add(scores, Tensor(additive_mask))
        attn = ad.softmax(scores, axis=-1)
        attn = self._dropout(attn, training)
        mixed = ad.reshape(ad.swapaxes(ad.matmul(attn, v), 1, 2), (b, lq, d))
        return self._linear(f"{prefix}.wo", mixed)

    def _ffn(self, prefix: str, x: Tensor) -> Tensor:
        return self._linear(f"{prefix}.fc2", ad.gelu(self._linear(f"{prefix}.fc1", x)))

    # --- encoder ------------------------------------------------------------

    def embed(self, ids: np.ndarray, offsets: np.ndarray, training: bool) -> Tensor:
        """Token embedding * sqrt(d) + position + per-sequence offset vector."""
        h = self.hyper
        b, length = ids.shape
        if length > h.max_seq_len:
            raise SequenceTooLong(f"sequence of {length} exceeds {h.max_seq_len}")
        tok = ad.mul(ad.embedding(self.params["embed.tok"], ids),
                     math.sqrt(h.model_dim))
        pos = Tensor(self.pos_table[:length][None, :, :])
        off_rows = np.clip(offsets, -h.offset_radius, h.offset_radius) + h.offset_radius
        off = ad.embedding(self.params["embed.offset"], off_rows[:, None])
        return self._dropout(ad.add(ad.add(tok, pos), off), training)

    def encode(self, ids: np.ndarray, mask: np.ndarray, offsets: np.ndarray,
               training: bool = False) -> Tensor:
        """(B, L) ids -> (B, L, d) states; padded keys are masked out."""
        x = self.embed(ids, offsets, training)
        pad_mask = ((1.0 - mask) * NEG_INF)[:, None, None, :]
        for i in range(self.hyper.layers):
            a = self._attention(f"enc.{i}.attn", x, x, pad_mask, training)
            x = self._norm(f"enc.{i}.ln1", ad.add(x, self._dropout(a, training)))
            f = self._ffn(f"enc.{i}.ffn", x)
            x = self._norm(f"enc.{i}.ln2", ad.add(x, self._dropout(f, training)))
        return x

    # --- localization -------------------------------------------------------

    def line_logits(self, bos_states: Tensor) -> Tensor:
        """(n, d) BOS vectors -> (n,) scores from two fully connected layers."""
        hidden = ad.tanh(self._linear("loc.fc1", bos_states))
        return ad.reshape(self._linear("loc.fc2", hidden), (bos_states.shape[0],))

    def localize(self, bos_states: Tensor, true_line: int | None = None):
        """Probability over lines; optionally the loss -log p[true_line].

        Returns (probs Tensor (n,), loss Tensor or None, predicted 1-based line).
        Prediction breaks ties toward the lowest index.
        """
        logits = self.line_logits(bos_states)
        probs = ad.softmax(logits, axis=-1)
        loss = None
        if true_line is not None:
            lse = ad.logsumexp(logits, axis=-1)
            picked = ad.gather_last(ad.reshape(logits, (1, -1)),
                                    np.array([true_line - 1]))
            loss = ad.reshape(ad.sub(lse, picked), ())
        predicted = int(np.argmax(probs.data)) + 1
        return probs, loss, predicted

    # --- decoder ------------------------------------------------------------

    def decoder_states(self, enc: Tensor, src_mask: np.ndarray,
                       dec_ids: np.ndarray, training: bool = False):
        """Run the transformer decoder over a teacher/prefix id sequence.

        enc: (m, d) encoder states for the broken line's input.
        dec_ids: (T,) vocabulary ids (extended ids must be mapped to UNK
        before calling).  Returns (S (T, d), X (T, d)): hidden states and the
        embedded decoder inputs.
        """
        h = self.hyper
        t_len = len(dec_ids)
        if t_len > h.max_target_len + 1:
            raise TargetTooLong(f"{t_len} decoder steps exceed {h.max_target_len}")
        tok = ad.mul(ad.embedding(self.params["embed.tok"], dec_ids[None, :]),
                     math.sqrt(h.model_dim))
        x_in = ad.add(tok, Tensor(self.pos_table[:t_len][None, :, :]))
        x_in = self._dropout(x_in, training)

        causal = np.triu(np.full((t_len, t_len), NEG_INF), k=1)[None, None, :, :]
        src_pad = ((1.0 - src_mask) * NEG_INF)[None, None, None, :]
        enc_b = ad.reshape(enc, (1, enc.shape[0], enc.shape[1]))
        x = x_in
        for i in range(h.layers):
            a = self._attention(f"dec.{i}.self", x, x, causal, training)
            x = self._norm(f"dec.{i}.ln1", ad.add(x, self._dropout(a, training)))
            c = self._attention(f"dec.{i}.cross", x, enc_b, src_pad, training)
            x = self._norm(f"dec.{i}.ln2", ad.add(x, self._dropout(c, training)))
            f = self._ffn(f"dec.{i}.ffn", x)
            x = self._norm(f"dec.{i}.ln3", ad.add(x, self._dropout(f, training)))
        d = h.model_dim
        return ad.reshape(x, (t_len, d)), ad.reshape(x_in, (t_len, d))

    def pointer_step(self, enc: Tensor, src_mask: np.ndarray, ext_ids: np.ndarray,
                     n_oov: int, states: Tensor, inputs_emb: Tensor,
                     p_gen_override: float | None = None) -> PointerStep:
        """Copy-attention head over all decoder steps at once.

        states/inputs_emb: (T, d).  Returns distributions over the extended
        vocabulary (vocab plus this input's OOV source tokens).
        """
        d = self.hyper.model_dim
        v = self.vocab.size
        scores = ad.mul(ad.matmul(states, ad.swapaxes(enc, -1, -2)), 1.0 / math.sqrt(d))
        scores = ad.add(scores, Tensor(((1.0 - src_mask) * NEG_INF)[None, :]))
        attn = ad.softmax(scores, axis=-1)                       # (T, m)
        context = ad.matmul(attn, enc)                           # (T, d)

        inner = self._linear("out.inner", ad.concat([states, context], axis=-1))
        p_vocab = ad.softmax(self._linear("out.proj", inner), axis=-1)

        gate_in = ad.add(ad.add(ad.matmul(context, self.params["ptr.w_hstar"]),
                                ad.matmul(states, self.params["ptr.w_s"])),
                         ad.add(ad.matmul(inputs_emb, self.params["ptr.w_x"]),
                                self.params["ptr.b"]))
        p_gen = ad.sigmoid(gate_in)                              # (T, 1)
        if p_gen_override is not None:
            p_gen = Tensor(np.full(p_gen.shape, float(p_gen_override)))

        t_len = states.shape[0]
        padded = ad.concat([p_vocab, Tensor(np.zeros((t_len, n_oov)))], axis=-1) \
            if n_oov else p_vocab
        copy = ad.scatter_add_last(attn, ext_ids, v + n_oov)
        p_ext = ad.add(ad.mul(p_gen, padded), ad.mul(ad.sub(1.0, p_gen), copy))
        return PointerStep(attention=attn, context=context, p_vocab=p_vocab,
                           p_gen=p_gen, p_ext=p_ext)

    def decode_step(self, enc: Tensor, src_mask: np.ndarray, ext_ids: np.ndarray,
                    n_oov: int, prefix_ids: np.ndarray,
                    p_gen_override: float | None = None) -> PointerStep:
        """Single-step decode: run the decoder over the prefix and score the
        next token.  prefix_ids starts with BOS; extended ids must already be
        collapsed to UNK."""
        states, emb = self.decoder_states(enc, src_mask, prefix_ids)
        last = slice(len(prefix_ids) - 1, len(prefix_ids))
        step = self.pointer_step(enc, src_mask, ext_ids, n_oov,
                                 ad.tslice(states, last), ad.tslice(emb, last),
                                 p_gen_override)
        return step

    # --- losses -------------------------------------------------------------

    def sequence_loss(self, p_ext: Tensor, target_ids: np.ndarray,
                      representable: np.ndarray) -> Tensor:
        """-(1/T) sum log P(target_t); unrepresentable steps hit a 1e-10 floor."""
        probs = ad.gather_last(p_ext, target_ids)
        keep = representable.astype(np.float64)
        floored = ad.add(ad.mul(probs, Tensor(keep)), Tensor((1.0 - keep) * 1e-10))
        return ad.mul(ad.tsum(ad.log(floored)), -1.0 / len(target_ids))


def decoder_input_ids(prefix_ext_ids, vocab_size: int) -> np.ndarray:
    """Teacher/beam inputs: extended (copy-only) ids fall back to UNK."""
    arr = np.asarray(prefix_ext_ids, dtype=np.int64).copy()
    arr[arr >= vocab_size] = UNK_ID
    return arr


def teacher_inputs(target_ids: np.ndarray, vocab_size: int) -> np.ndarray:
    """BOS followed by the target prefix, as embeddable vocabulary ids."""
    shifted = np.concatenate([[BOS_ID], target_ids[:-1]])
    return decoder_input_ids(shifted, vocab_size)
