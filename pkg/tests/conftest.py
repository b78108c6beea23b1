import sys
from dataclasses import dataclass
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from fixture_programs import make_tiny_parent

from crepair.nn.model import HyperParams, RepairModel
from crepair.nn.train import (build_examples, fit, prepare_programs,
                              vocab_token_stream)
from crepair.nn.vocab import build_vocab
from crepair.corruption import synthesize_corpus
from crepair.tokens import tokenize

OVERFIT_SEED = 42
OVERFIT_EPOCH_CAP = 500


def desk_hyper() -> HyperParams:
    return HyperParams(
        layers=2, heads=4, model_dim=64, ffn_dim=256, offset_radius=50,
        learning_rate=1e-3, batch_size=16, dropout=0.0, grad_clip=10.0,
        max_seq_len=64, max_target_len=16, context_token_budget=16,
        message_token_budget=12)


@dataclass
class OverfitBundle:
    model: RepairModel
    hyper: HyperParams
    vocab: object
    variants: list
    prepared: list
    examples: list
    trace: list
    epochs_run: int
    train_seconds: float


@pytest.fixture(scope="session")
def overfit_bundle() -> OverfitBundle:
    """The desk-scale memorization experiment, shared across tests.

    Eight small parents, 64 single-error variants, trained until the mean
    epoch loss is tiny (well past 90% exact-match in practice).
    """
    import time

    parents = [tokenize(make_tiny_parent(i), f"tiny{i:03d}") for i in range(8)]
    variants, _report = synthesize_corpus(
        parents, variants_per_program=10, max_errors=1, seed=OVERFIT_SEED)
    variants = variants[:64]
    hyper = desk_hyper()
    prepared, _ = prepare_programs(variants, hyper)
    vocab = build_vocab(vocab_token_stream(prepared))
    examples, _ = build_examples(prepared, vocab, hyper)
    model = RepairModel(hyper, vocab, seed=1)

    epochs_run = 0

    def stop(epoch, _model, mean_total):
        nonlocal epochs_run
        epochs_run = epoch + 1
        return mean_total < 0.02

    start = time.time()
    trace = fit(model, examples, hyper, seed=1, epochs=OVERFIT_EPOCH_CAP,
                on_epoch_end=stop)
    return OverfitBundle(model=model, hyper=hyper, vocab=vocab,
                         variants=variants, prepared=prepared,
                         examples=examples, trace=trace, epochs_run=epochs_run,
                         train_seconds=time.time() - start)
