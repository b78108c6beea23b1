"""Training: example assembly from a broken-program corpus, Adam, loss trace.

Each corruption record becomes one training example (a program with three
injected errors yields three examples).  An example pairs its corrupted line
with the diagnostic whose reported line is nearest, falling back to the
first diagnostic, and teacher-forces the decoder on the ground-truth
original line at the true error line.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..context import analyzer, get_context
from ..diagnostics import CompilerConfig, compile_source, normalize_diagnostics
from ..errors import EmptyCorpus, NonFiniteLoss
from ..storage import derive_seed
from ..tokens import detokenize
from . import autodiff as ad
from .autodiff import Tensor
from .inputs import make_encoder_input, pad_batch, target_ext_ids
from .model import HyperParams, RepairModel, teacher_inputs
from .vocab import PAD_ID, Vocabulary, build_vocab


@dataclass
class TrainingExample:
    inputs: list                 # list[EncoderInput], one per program line
    true_line: int               # 1-based
    target_ids: np.ndarray       # extended ids of original-line tokens + EOS
    target_representable: np.ndarray
    variant_id: str
    target_tokens: list = field(default_factory=list)

    @property
    def flagged(self) -> bool:
        return not bool(self.target_representable.all())


@dataclass
class PreparedProgram:
    broken: object               # BrokenProgram
    compile_result: object
    contexts: list
    tables: object


def prepare_programs(broken_programs, hyper: HyperParams,
                     compiler_config: CompilerConfig = CompilerConfig()):
    """Compile each variant once and cache symbol tables and contexts."""
    prepared = []
    skipped = 0
    for bp in broken_programs:
        result = compile_source(detokenize(bp.program), config=compiler_config)
        if result.success or not result.diagnostics:
            skipped += 1
            continue
        tables = analyzer(bp.program)
        normalize_diagnostics(result, tables.as_tuple())
        contexts = get_context(bp.program, tables,
                               token_budget=hyper.context_token_budget)
        prepared.append(PreparedProgram(bp, result, contexts, tables))
    return prepared, skipped


def vocab_token_stream(prepared):
    for prog in prepared:
        for line in prog.broken.program.lines:
            for tok in line:
                yield tok.text
        for diag in prog.compile_result.diagnostics:
            for tok in diag.normalized_message:
                yield tok
        for rec in prog.broken.corruptions:
            for tok in rec.original_line:
                yield tok.text


def _nearest_diagnostic(diagnostics, line: int):
    best = diagnostics[0]
    best_dist = abs(best.reported_line - line)
    for diag in diagnostics[1:]:
        dist = abs(diag.reported_line - line)
        if dist < best_dist:
            best, best_dist = diag, dist
    return best


def build_examples(prepared, vocab: Vocabulary, hyper: HyperParams):
    """One TrainingExample per corruption record; over-long targets are skipped."""
    examples = []
    skipped_long = 0
    for prog in prepared:
        program = prog.broken.program
        line_texts = [[t.text for t in line] for line in program.lines]
        ctx_texts = [[t.text for t in ctx.context_tokens] for ctx in prog.contexts]
        for rec in prog.broken.corruptions:
            diag = _nearest_diagnostic(prog.compile_result.diagnostics, rec.line)
            msg = list(diag.normalized_message)
            inputs = [
                make_encoder_input(
                    line_texts[i - 1], ctx_texts[i - 1], msg, i,
                    diag.reported_line, vocab, hyper.max_seq_len,
                    hyper.offset_radius, hyper.context_token_budget,
                    hyper.message_token_budget)
                for i in range(1, program.line_count + 1)
            ]
            target_tokens = [t.text for t in rec.original_line]
            if len(target_tokens) + 1 > hyper.max_target_len:
                skipped_long += 1
                continue
            tgt, representable = target_ext_ids(
                target_tokens, inputs[rec.line - 1], vocab)
            examples.append(TrainingExample(
                inputs=inputs, true_line=rec.line, target_ids=tgt,
                target_representable=representable,
                variant_id=program.source_id, target_tokens=target_tokens))
    return examples, skipped_long


def example_loss(model: RepairModel, example: TrainingExample, training: bool,
                 enc_all: Tensor | None = None, mask_all: np.ndarray | None = None,
                 row_offset: int = 0):
    """(loc_loss, gen_loss) tensors for one example.

    When enc_all is given it holds the already-encoded lines of a batch and
    row_offset points at this example's first line.
    """
    n = len(example.inputs)
    if enc_all is None:
        ids, mask_all, offsets = pad_batch(example.inputs)
        enc_all = model.encode(ids, mask_all, offsets, training=training)
        row_offset = 0

    rows = slice(row_offset, row_offset + n)
    bos = ad.tslice(enc_all, (rows, slice(0, 1)))
    bos = ad.reshape(bos, (n, model.hyper.model_dim))
    _, loc_loss, _ = model.localize(bos, example.true_line)

    k_row = row_offset + example.true_line - 1
    enc_k = ad.tslice(enc_all, (k_row,))
    src_mask = mask_all[k_row]
    inp = example.inputs[example.true_line - 1]
    ext = np.full(enc_k.shape[0], PAD_ID, dtype=np.int64)
    ext[:len(inp.ext_ids)] = inp.ext_ids

    dec_in = teacher_inputs(example.target_ids, model.vocab.size)
    states, emb = model.decoder_states(enc_k, src_mask, dec_in, training=training)
    step = model.pointer_step(enc_k, src_mask, ext, len(inp.oov_tokens), states, emb)
    gen_loss = model.sequence_loss(step.p_ext, example.target_ids,
                                   example.target_representable)
    return loc_loss, gen_loss


def batch_loss(model: RepairModel, batch, training: bool = True):
    """Mean L_loc and L_gen over a batch, encoding all lines in one pass."""
    flat = [inp for ex in batch for inp in ex.inputs]
    ids, mask, offsets = pad_batch(flat)
    enc = model.encode(ids, mask, offsets, training=training)
    loc_losses, gen_losses = [], []
    row = 0
    for ex in batch:
        loc, gen = example_loss(model, ex, training, enc, mask, row)
        loc_losses.append(loc)
        gen_losses.append(gen)
        row += len(ex.inputs)
    inv = 1.0 / len(batch)
    loc_mean = ad.mul(_sum_scalars(loc_losses), inv)
    gen_mean = ad.mul(_sum_scalars(gen_losses), inv)
    total = ad.add(loc_mean, gen_mean)
    return total, loc_mean, gen_mean


def sharded_batch_step(model: RepairModel, batch, training: bool = True,
                       workers: int | None = None):
    """Data-parallel gradient computation for one batch.

    Each example's loss graph is built independently (its own padding, so the
    arithmetic never depends on which examples share a shard) and gradients
    are accumulated into the parameters in example order.  The result is
    numerically identical to running the same per-example loop serially;
    only forward-graph construction is fanned out to threads.

    Returns (total, loc, gen) means as floats; parameter .grad fields hold
    the accumulated batch gradient.
    """
    inv = 1.0 / len(batch)

    def forward(ex):
        loc, gen = example_loss(model, ex, training)
        return loc, gen, ad.mul(ad.add(loc, gen), inv)

    # dropout draws must happen in a deterministic order, so a live dropout
    # forces sequential forward-graph construction
    parallel_ok = workers and workers > 1 and (
        not training or model.hyper.dropout == 0.0)
    if parallel_ok:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            graphs = list(pool.map(forward, batch))
    else:
        graphs = [forward(ex) for ex in batch]

    loc_sum = gen_sum = 0.0
    for loc, gen, scaled in graphs:
        scaled.backward()
        loc_sum += float(loc.data)
        gen_sum += float(gen.data)
    loc_mean, gen_mean = loc_sum * inv, gen_sum * inv
    return loc_mean + gen_mean, loc_mean, gen_mean


def _sum_scalars(tensors):
    acc = tensors[0]
    for t in tensors[1:]:
        acc = ad.add(acc, t)
    return acc


class Adam:
    def __init__(self, params: dict, lr: float, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = {k: np.zeros_like(t.data) for k, t in params.items()}
        self.v = {k: np.zeros_like(t.data) for k, t in params.items()}
        self.t = 0

    def step(self):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for name in sorted(self.params):
            p = self.params[name]
            if p.grad is None:
                continue
            g = p.grad
            self.m[name] = b1 * self.m[name] + (1 - b1) * g
            self.v[name] = b2 * self.v[name] + (1 - b2) * (g * g)
            m_hat = self.m[name] / (1 - b1 ** self.t)
            v_hat = self.v[name] / (1 - b2 ** self.t)
            p.data = p.data - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def clip_global_norm(params: dict, max_norm: float) -> float:
    total = 0.0
    for p in params.values():
        if p.grad is not None:
            total += float(np.sum(p.grad * p.grad))
    norm = math.sqrt(total)
    if max_norm > 0 and norm > max_norm:
        scale = max_norm / norm
        for p in params.values():
            if p.grad is not None:
                p.grad = p.grad * scale
    return norm


@dataclass
class TraceRow:
    step: int
    loc_loss: float
    gen_loss: float
    total_loss: float

    def as_csv(self) -> str:
        return f"{self.step},{self.loc_loss:.10g},{self.gen_loss:.10g},{self.total_loss:.10g}"


def write_trace_csv(trace, path) -> None:
    from ..storage import atomic_write

    with atomic_write(path) as fh:
        fh.write("step,loc_loss,gen_loss,total_loss\n")
        for row in trace:
            fh.write(row.as_csv() + "\n")


def train_model(broken_programs, hyper: HyperParams, seed: int,
                epochs: int, compiler_config: CompilerConfig = CompilerConfig(),
                vocab: Vocabulary | None = None, on_epoch_end=None,
                min_count: int = 2):
    """Full training entry point; returns (model, trace, examples, vocab).

    on_epoch_end(epoch, model, mean_total) may return True to stop early.
    """
    prepared, _skipped = prepare_programs(broken_programs, hyper, compiler_config)
    if not prepared:
        raise EmptyCorpus("no usable training programs")
    if vocab is None:
        vocab = build_vocab(vocab_token_stream(prepared), min_count=min_count)
    examples, _too_long = build_examples(prepared, vocab, hyper)
    if not examples:
        raise EmptyCorpus("no usable training examples")

    model = RepairModel(hyper, vocab, seed=derive_seed(seed, "init"))
    trace = fit(model, examples, hyper, seed, epochs, on_epoch_end)
    return model, trace, examples, vocab


def fit(model: RepairModel, examples, hyper: HyperParams, seed: int,
        epochs: int, on_epoch_end=None):
    """Optimize in place; returns the loss trace."""
    optimizer = Adam(model.params, hyper.learning_rate)
    shuffle_rng = np.random.Generator(np.random.PCG64(derive_seed(seed, "shuffle")))
    trace: list[TraceRow] = []
    step = 0
    for epoch in range(epochs):
        order = shuffle_rng.permutation(len(examples))
        for start in range(0, len(examples), hyper.batch_size):
            batch = [examples[i] for i in order[start:start + hyper.batch_size]]
            model.zero_grad()
            total, loc, gen = batch_loss(model, batch, training=True)
            if not np.isfinite(total.data):
                raise NonFiniteLoss(step, f"loc={loc.data} gen={gen.data}")
            total.backward()
            clip_global_norm(model.params, hyper.grad_clip)
            optimizer.step()
            step += 1
            trace.append(TraceRow(step, float(loc.data), float(gen.data),
                                  float(total.data)))
        if on_epoch_end is not None:
            epoch_rows = trace[-max(1, math.ceil(len(examples) / hyper.batch_size)):]
            mean_total = sum(r.total_loss for r in epoch_rows) / len(epoch_rows)
            if on_epoch_end(epoch, model, mean_total):
                break
    return trace
