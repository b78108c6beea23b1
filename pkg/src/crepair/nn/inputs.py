"""Per-line model input assembly.

Each line i of a broken program becomes the sequence

    <bos>  line-i tokens  <sep>  context tokens  <sep>  message tokens  <eos>

plus the clamped offset between i and the compiler-reported error line.
Source token strings travel with the ids so the copy mechanism can emit
out-of-vocabulary tokens; OOV source tokens keep UNK in `ids` but get
per-input extended ids `vocab.size + j` in order of first appearance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import SequenceTooLong
from .vocab import BOS, BOS_ID, EOS, EOS_ID, PAD_ID, SEP, SEP_ID, UNK_ID, Vocabulary


@dataclass
class EncoderInput:
    ids: np.ndarray            # (L,) vocabulary ids
    ext_ids: np.ndarray        # (L,) extended-vocabulary ids
    source_tokens: list        # list[str], aligned to ids
    oov_tokens: list           # per-input OOV texts; ext id = vocab.size + index
    line_offset: int           # clamped reported-line minus this line
    line_index: int            # 1-based

    def __post_init__(self):
        if self.ids[0] != BOS_ID or self.ids[-1] != EOS_ID:
            raise ValueError("input must be BOS ... EOS")
        if int(np.sum(self.ids == SEP_ID)) != 2:
            raise ValueError("input must contain exactly two separators")


def clamp_offset(reported_line: int, line_index: int, radius: int) -> int:
    delta = reported_line - line_index
    return max(-radius, min(radius, delta))


def make_encoder_input(line_tokens, context_tokens, message_tokens,
                       line_index: int, reported_line: int,
                       vocab: Vocabulary, max_seq_len: int,
                       offset_radius: int,
                       context_budget: int | None = None,
                       message_budget: int | None = None) -> EncoderInput:
    """Build one per-line input; token arguments are lists of strings."""
    line = list(line_tokens)
    ctx = list(context_tokens)
    msg = list(message_tokens)
    if context_budget is not None:
        ctx = ctx[:context_budget]
    if message_budget is not None:
        msg = msg[:message_budget]

    overhead = 4  # BOS, two SEPs, EOS
    if len(line) + overhead > max_seq_len:
        raise SequenceTooLong(
            f"line {line_index} has {len(line)} tokens; limit {max_seq_len - overhead}")
    # Context goes first when trimming to fit: the message usually matters more.
    room = max_seq_len - overhead - len(line)
    if len(ctx) + len(msg) > room:
        ctx = ctx[:max(0, room - len(msg))]
    if len(ctx) + len(msg) > room:
        msg = msg[:max(0, room - len(ctx))]

    texts = [BOS] + line + [SEP] + ctx + [SEP] + msg + [EOS]
    ids = np.array([vocab.id(t) for t in texts], dtype=np.int64)

    oov: list[str] = []
    oov_index: dict[str, int] = {}
    ext = ids.copy()
    for pos, text in enumerate(texts):
        if ids[pos] == UNK_ID and text != vocab.token(UNK_ID):
            j = oov_index.get(text)
            if j is None:
                j = len(oov)
                oov_index[text] = j
                oov.append(text)
            ext[pos] = vocab.size + j

    return EncoderInput(
        ids=ids, ext_ids=ext, source_tokens=texts, oov_tokens=oov,
        line_offset=clamp_offset(reported_line, line_index, offset_radius),
        line_index=line_index)


def pad_batch(inputs, pad_len: int | None = None):
    """Stack inputs into (ids, mask, offsets); mask is 1.0 on real tokens."""
    max_len = pad_len if pad_len is not None else max(len(x.ids) for x in inputs)
    batch = len(inputs)
    ids = np.full((batch, max_len), PAD_ID, dtype=np.int64)
    mask = np.zeros((batch, max_len), dtype=np.float64)
    offsets = np.zeros(batch, dtype=np.int64)
    for i, item in enumerate(inputs):
        n = len(item.ids)
        ids[i, :n] = item.ids
        mask[i, :n] = 1.0
        offsets[i] = item.line_offset
    return ids, mask, offsets


def target_ext_ids(target_tokens, encoder_input: EncoderInput, vocab: Vocabulary):
    """Map ground-truth tokens (plus EOS) onto the input's extended vocabulary.

    Returns (ids, representable) where positions whose token exists neither
    in the vocabulary nor among the source tokens are flagged False; such
    steps train through a probability floor instead of a real target.
    """
    oov_index = {t: vocab.size + j for j, t in enumerate(encoder_input.oov_tokens)}
    ids = np.empty(len(target_tokens) + 1, dtype=np.int64)
    representable = np.ones(len(target_tokens) + 1, dtype=bool)
    for t, token in enumerate(target_tokens):
        vid = vocab.id(token)
        if vid != UNK_ID:
            ids[t] = vid
        elif token in oov_index:
            ids[t] = oov_index[token]
        else:
            ids[t] = UNK_ID
            representable[t] = False
    ids[-1] = EOS_ID
    return ids, representable
