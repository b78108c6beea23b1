#!/usr/bin/env python3
"""Desk-scale memorization experiment.

Synthesizes single-error variants from a few small parent programs, trains
the repair model until it memorizes them, then reports exact-match and
end-to-end repair rates.  Finishes in a few minutes on a laptop CPU.
"""

import argparse
import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent))

from demo_programs import tiny_parent

from crepair.corruption import synthesize_corpus
from crepair.driver import (FULL_REPAIR, decode_at_line, repair_program,
                            _normalized_texts, _predict)
from crepair.nn.checkpoint import save_checkpoint
from crepair.nn.model import HyperParams, RepairModel
from crepair.nn.train import (build_examples, fit, prepare_programs,
                              vocab_token_stream)
from crepair.nn.vocab import build_vocab
from crepair.tokens import detokenize, tokenize


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--parents", type=int, default=8)
    parser.add_argument("--variants", type=int, default=10)
    parser.add_argument("--examples", type=int, default=64)
    parser.add_argument("--epochs", type=int, default=500)
    parser.add_argument("--seed", type=int, default=42)
    parser.add_argument("--checkpoint", default=None, help="optional save path")
    args = parser.parse_args()

    parents = [tokenize(tiny_parent(i), f"tiny{i:03d}") for i in range(args.parents)]
    variants, report = synthesize_corpus(parents, variants_per_program=args.variants,
                                         max_errors=1, seed=args.seed)
    variants = variants[:args.examples]
    print(f"synthesized {len(variants)} single-error variants "
          f"(retention {report.retention_rate:.3f})")

    hyper = HyperParams(layers=2, heads=4, model_dim=64, ffn_dim=256,
                        offset_radius=50, learning_rate=1e-3, batch_size=16,
                        dropout=0.0, grad_clip=10.0, max_seq_len=64,
                        max_target_len=16, context_token_budget=16,
                        message_token_budget=12)
    prepared, _ = prepare_programs(variants, hyper)
    vocab = build_vocab(vocab_token_stream(prepared))
    examples, _ = build_examples(prepared, vocab, hyper)
    model = RepairModel(hyper, vocab, seed=1)
    print(f"{len(examples)} examples, vocabulary of {vocab.size}")

    start = time.time()

    def stop(epoch, _model, mean_total):
        if (epoch + 1) % 5 == 0:
            print(f"  epoch {epoch + 1:4d}  loss {mean_total:.4f}  "
                  f"{time.time() - start:5.0f}s")
        return mean_total < 0.02

    trace = fit(model, examples, hyper, seed=1, epochs=args.epochs, on_epoch_end=stop)
    print(f"trained {len(trace)} steps in {time.time() - start:.0f}s")

    hits = 0
    for prog in prepared:
        rec = prog.broken.corruptions[0]
        pred = _predict(model, prog.broken.program, prog.compile_result)
        cands = decode_at_line(model, pred, rec.line, 1)
        truth = _normalized_texts([t.text for t in rec.original_line])
        hits += bool(cands) and _normalized_texts(cands[0].tokens) == truth
    print(f"training-set exact match (greedy at true line): "
          f"{hits}/{len(prepared)} = {hits / len(prepared):.3f}")

    held_in = variants[:20]
    full = 0
    for bp in held_in:
        _, tr = repair_program(detokenize(bp.program), model, beam_width=5)
        full += tr.final_status == FULL_REPAIR
    print(f"end-to-end full repair on {len(held_in)} held-in variants: "
          f"{full}/{len(held_in)}")

    if args.checkpoint:
        save_checkpoint(args.checkpoint, model)
        print(f"checkpoint -> {args.checkpoint}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
