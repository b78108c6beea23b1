"""Inference: localize, beam-decode candidate lines, splice, recompile, iterate.

The repair loop takes the first compiler diagnostic, encodes every line with
its context and the normalized message, asks the localizer for the most
likely broken line, beam-decodes replacement candidates there, and accepts
the first candidate (in rank order) whose spliced program compiles clean or
at least yields strictly fewer errors.  At most five iterations; when every
candidate at the predicted line is rejected, the next most probable lines
are tried (three line attempts per iteration) before giving up.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .context import analyzer, get_context
from .corruption import BrokenProgram
from .diagnostics import (CompilerConfig, compile_source, normalize_diagnostics,
                          substitute_placeholders)
from .errors import CRepairError, MissingGroundTruth
from .nn import autodiff as ad
from .nn.inputs import make_encoder_input, pad_batch
from .nn.model import RepairModel, decoder_input_ids
from .nn.vocab import BOS_ID, EOS_ID, PAD_ID
from .tokens import WS_GLYPH, detokenize, tokenize

MAX_LINE_ATTEMPTS = 3

FULL_REPAIR = "FullRepair"
IMPROVED = "Improved"
FAILED = "Failed"


@dataclass
class RepairCandidate:
    line: int
    tokens: list          # texts after placeholder restoration
    log_prob: float
    rank: int

    def to_json(self) -> dict:
        return {"line": self.line, "tokens": list(self.tokens),
                "log_prob": self.log_prob, "rank": self.rank}


@dataclass
class IterationRecord:
    input_error_count: int
    output_error_count: int
    chosen: RepairCandidate | None

    def to_json(self) -> dict:
        return {
            "input_error_count": self.input_error_count,
            "output_error_count": self.output_error_count,
            "chosen": self.chosen.to_json() if self.chosen else None,
        }


@dataclass
class RepairTrace:
    iterations: list = field(default_factory=list)
    final_status: str = FAILED
    localizer_disagreements: int = 0

    @property
    def iteration_count(self) -> int:
        return len(self.iterations)

    def to_json(self) -> dict:
        return {
            "format_version": 1,
            "final_status": self.final_status,
            "iteration_count": self.iteration_count,
            "localizer_disagreements": self.localizer_disagreements,
            "iterations": [it.to_json() for it in self.iterations],
        }


def line_inputs(program, contexts, diag, model: RepairModel):
    hyper = model.hyper
    msg = list(diag.normalized_message)
    return [
        make_encoder_input(
            [t.text for t in program.line(i)],
            [t.text for t in contexts[i - 1].context_tokens],
            msg, i, diag.reported_line, model.vocab, hyper.max_seq_len,
            hyper.offset_radius, hyper.context_token_budget,
            hyper.message_token_budget)
        for i in range(1, program.line_count + 1)
    ]


def beam_decode(model: RepairModel, enc, src_mask, ext_ids, n_oov: int,
                oov_tokens, beam_width: int, max_target_len: int,
                id_map: dict | None = None, line: int = 0):
    """Length-bounded beam search over the extended vocabulary.

    Hypotheses carry total log-probability; emitting EOS finishes one.  The
    search also stops early once no alive prefix can beat the kept results
    (scores only fall as sequences grow).  Returns candidates sorted by
    descending total log-probability, rank 1-based, placeholders restored
    through the diagnostic's id_map.
    """
    vocab = model.vocab
    alive = [((), 0.0)]
    done: list = []
    for _step in range(max_target_len):
        if not alive:
            break
        expansions = []
        for h_idx, (seq, score) in enumerate(alive):
            prefix = decoder_input_ids((BOS_ID,) + seq, vocab.size)
            step = model.decode_step(enc, src_mask, ext_ids, n_oov, prefix)
            log_p = np.log(np.maximum(step.p_ext.data[0], 1e-300))
            for tok_id, lp in enumerate(log_p):
                expansions.append((score + lp, h_idx, tok_id))
        # strict top-B pruning over all expansions; EOS retires a hypothesis,
        # so width 1 degenerates to greedy decoding exactly
        expansions.sort(key=lambda e: (-e[0], e[1], e[2]))
        new_alive = []
        for score, h_idx, tok_id in expansions[:beam_width]:
            seq, _ = alive[h_idx]
            if tok_id == EOS_ID:
                done.append((seq, score))
            else:
                new_alive.append((seq + (tok_id,), score))
        alive = new_alive
        if len(done) >= beam_width:
            floor = sorted(done, key=lambda d: -d[1])[beam_width - 1][1]
            if all(score <= floor for _, score in alive):
                break
    done.extend(alive)

    done.sort(key=lambda d: (-d[1], len(d[0]), d[0]))
    candidates = []
    for rank, (seq, score) in enumerate(done[:beam_width], start=1):
        texts = [vocab.token(i) if i < vocab.size else oov_tokens[i - vocab.size]
                 for i in seq]
        if id_map:
            texts = substitute_placeholders(texts, id_map)
        candidates.append(RepairCandidate(line=line, tokens=texts,
                                          log_prob=float(score), rank=rank))
    return candidates


def greedy_decode(model: RepairModel, enc, src_mask, ext_ids, n_oov: int,
                  max_target_len: int):
    """Stepwise argmax reference; returns the raw extended-id sequence."""
    seq: tuple = ()
    for _ in range(max_target_len):
        prefix = decoder_input_ids((BOS_ID,) + seq, model.vocab.size)
        step = model.decode_step(enc, src_mask, ext_ids, n_oov, prefix)
        tok_id = int(np.argmax(step.p_ext.data[0]))
        if tok_id == EOS_ID:
            break
        seq = seq + (tok_id,)
    return seq


@dataclass
class _LinePrediction:
    program: object
    inputs: list
    enc: object          # (n_lines, L, d) tensor
    mask: np.ndarray
    probs: np.ndarray    # localizer distribution
    predicted: int
    diag: object


def _predict(model: RepairModel, program, result):
    tables = analyzer(program)
    normalize_diagnostics(result, tables.as_tuple())
    diag = result.diagnostics[0]
    contexts = get_context(program, tables,
                           token_budget=model.hyper.context_token_budget)
    inputs = line_inputs(program, contexts, diag, model)
    ids, mask, offsets = pad_batch(inputs)
    enc = model.encode(ids, mask, offsets, training=False)
    bos = ad.reshape(ad.tslice(enc, (slice(None), slice(0, 1))),
                     (len(inputs), model.hyper.model_dim))
    probs, _, predicted = model.localize(bos)
    return _LinePrediction(program=program, inputs=inputs, enc=enc, mask=mask,
                           probs=probs.data.copy(), predicted=predicted, diag=diag)


def decode_at_line(model: RepairModel, pred: _LinePrediction, line: int,
                   beam_width: int):
    k = line - 1
    enc_k = ad.tslice(pred.enc, (k,))
    src_mask = pred.mask[k]
    inp = pred.inputs[k]
    ext = np.full(enc_k.shape[0], PAD_ID, dtype=np.int64)
    ext[:len(inp.ext_ids)] = inp.ext_ids
    return beam_decode(model, enc_k, src_mask, ext, len(inp.oov_tokens),
                       inp.oov_tokens, beam_width, model.hyper.max_target_len,
                       id_map=pred.diag.id_map, line=line)


def _splice(source: str, line: int, tokens) -> str:
    lines = source.split("\n")
    text = " ".join(t.replace(WS_GLYPH, " ") for t in tokens)
    lines[line - 1] = text
    return "\n".join(lines)


def repair_program(source: str, model: RepairModel,
                   compiler_config: CompilerConfig = CompilerConfig(),
                   beam_width: int = 5, max_iters: int = 5):
    """Iterative compiler-in-the-loop repair; returns (final_source, trace)."""
    trace = RepairTrace()
    result = compile_source(source, config=compiler_config)
    if result.success:
        trace.final_status = FULL_REPAIR
        return source, trace

    initial_errors = result.error_count
    current_source, current_result = source, result
    for _ in range(max_iters):
        try:
            program = tokenize(current_source)
            pred = _predict(model, program, current_result)
        except CRepairError:
            break
        if pred.diag.reported_line != pred.predicted:
            trace.localizer_disagreements += 1

        line_order = np.argsort(-pred.probs, kind="stable")[:MAX_LINE_ATTEMPTS]
        accepted = None
        for k0 in line_order:
            line = int(k0) + 1
            for cand in decode_at_line(model, pred, line, beam_width):
                if not cand.tokens:
                    continue  # never accept deleting a whole line
                candidate_source = _splice(current_source, line, cand.tokens)
                cand_result = compile_source(candidate_source, config=compiler_config)
                if cand_result.error_count < current_result.error_count:
                    accepted = (cand, candidate_source, cand_result)
                    break
            if accepted:
                break

        if accepted is None:
            trace.iterations.append(IterationRecord(
                input_error_count=current_result.error_count,
                output_error_count=current_result.error_count, chosen=None))
            break
        cand, current_source, new_result = accepted
        trace.iterations.append(IterationRecord(
            input_error_count=current_result.error_count,
            output_error_count=new_result.error_count, chosen=cand))
        current_result = new_result
        if current_result.error_count == 0:
            break

    if current_result.error_count == 0:
        trace.final_status = FULL_REPAIR
    elif current_result.error_count < initial_errors:
        trace.final_status = IMPROVED
    else:
        trace.final_status = FAILED
    return current_source, trace


def _normalized_texts(tokens) -> tuple:
    """Whitespace-normalized comparison form for exact line match."""
    joined = " ".join(t.replace(WS_GLYPH, " ") if isinstance(t, str) else t
                      for t in tokens)
    return tuple(joined.split())


def evaluate(samples, model: RepairModel,
             compiler_config: CompilerConfig = CompilerConfig(),
             beam_width: int = 5, ks=(1, 5, 10), max_iters: int = 5,
             require_ground_truth: bool = False) -> dict:
    """Corpus metrics: single_localize, acc@k and full_repair.

    `samples` may mix labeled BrokenProgram records and bare source strings;
    localization and acc@k are measured on labeled single-error samples
    (decoding at the known true line, one ranked list of max(ks) candidates),
    full repair on everything.
    """
    labeled = [s for s in samples if isinstance(s, BrokenProgram)]
    single = [s for s in labeled if len(s.corruptions) == 1]
    if require_ground_truth and not single:
        raise MissingGroundTruth("no labeled single-error samples in the test set")

    loc_hits = 0
    rank_hits = {k: 0 for k in ks}
    single_scored = 0
    full_hits = 0
    for sample in samples:
        source = detokenize(sample.program) if isinstance(sample, BrokenProgram) \
            else sample
        _, trace = repair_program(source, model, compiler_config,
                                  beam_width=beam_width, max_iters=max_iters)
        if trace.final_status == FULL_REPAIR:
            full_hits += 1

    for sample in single:
        result = compile_source(detokenize(sample.program), config=compiler_config)
        if result.success or not result.diagnostics:
            continue
        pred = _predict(model, sample.program, result)
        record = sample.corruptions[0]
        single_scored += 1
        if pred.predicted == record.line:
            loc_hits += 1
        candidates = decode_at_line(model, pred, record.line, max(ks))
        truth = _normalized_texts([t.text for t in record.original_line])
        match_rank = None
        for cand in candidates:
            if _normalized_texts(cand.tokens) == truth:
                match_rank = cand.rank
                break
        for k in ks:
            if match_rank is not None and match_rank <= k:
                rank_hits[k] += 1

    metrics = {
        "samples": len(samples),
        "single_error_samples": single_scored,
        "full_repair": full_hits / len(samples) if samples else 0.0,
    }
    if single_scored:
        metrics["single_localize"] = loc_hits / single_scored
        for k in ks:
            metrics[f"acc@{k}"] = rank_hits[k] / single_scored
    else:
        metrics["note"] = "no ground-truth single-error samples: full_repair only"
    return metrics


def format_metrics(metrics: dict) -> str:
    rows = [(key, metrics[key]) for key in sorted(metrics) if key != "note"]
    width = max(len(k) for k, _ in rows)
    lines = [f"{k:<{width}}  {v:.4f}" if isinstance(v, float) else f"{k:<{width}}  {v}"
             for k, v in rows]
    if "note" in metrics:
        lines.append(metrics["note"])
    return "\n".join(lines)


def trace_to_json(trace: RepairTrace) -> str:
    return json.dumps(trace.to_json(), indent=2)
