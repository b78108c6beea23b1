"""Finite-difference audit of every parameter tensor.

Runs a tiny double-precision model on a synthetic example that exercises
every code path (localization over several lines, decoding, vocabulary and
copy targets, the generation gate) and compares analytic gradients of the
total loss against central differences, element by element.
"""

from __future__ import annotations

import numpy as np

from ..errors import GradientMismatch
from . import autodiff as ad
from .inputs import make_encoder_input, target_ext_ids
from .model import HyperParams, RepairModel
from .train import TrainingExample, example_loss
from .vocab import Vocabulary, RESERVED, placeholder_tokens


def tiny_hyper() -> HyperParams:
    return HyperParams(
        layers=1, heads=1, model_dim=16, ffn_dim=32, offset_radius=8,
        learning_rate=1e-3, batch_size=2, dropout=0.0, grad_clip=10.0,
        max_seq_len=40, max_target_len=10, context_token_budget=10,
        message_token_budget=8)


def tiny_vocab() -> Vocabulary:
    corpus_tokens = (
        "int", "float", "a", "x", ";", "=", "+", "(", ")", "{", "}",
        "1", "2", "return", "main", "undeclared", "expected", "before",
    )
    tokens = tuple(RESERVED) + tuple(placeholder_tokens(2)) + corpus_tokens
    assert len(tokens) <= 50
    return Vocabulary(tokens)


def tiny_example(vocab: Vocabulary, hyper: HyperParams) -> TrainingExample:
    # "b" and "zz" are out of vocabulary: "b" is copyable from the line,
    # "zz" in the target is representable only through the copy path.
    lines = [
        ["int", "a", ";"],
        ["a", "=", "b", "+", "zz", ";"],
        ["return", "a", ";"],
    ]
    contexts = [lines[1], lines[0] + lines[2], lines[1]]
    message = ["'_<var1>_'", "undeclared", "before", "expected"]
    reported = 2
    inputs = [
        make_encoder_input(lines[i], contexts[i], message, i + 1, reported,
                           vocab, hyper.max_seq_len, hyper.offset_radius,
                           hyper.context_token_budget, hyper.message_token_budget)
        for i in range(3)
    ]
    target_tokens = ["a", "=", "zz", "+", "1", ";"]
    tgt, representable = target_ext_ids(target_tokens, inputs[1], vocab)
    return TrainingExample(inputs=inputs, true_line=2, target_ids=tgt,
                           target_representable=representable,
                           variant_id="gradcheck", target_tokens=target_tokens)


def _loss_value(model: RepairModel, example: TrainingExample) -> ad.Tensor:
    loc, gen = example_loss(model, example, training=False)
    return ad.add(loc, gen)


def gradient_check(hyper: HyperParams | None = None, tolerance: float = 1e-3,
                   epsilon: float = 1e-4, seed: int = 0,
                   raise_on_fail: bool = True) -> dict:
    """Returns a per-tensor report; raises GradientMismatch beyond tolerance."""
    hyper = hyper or tiny_hyper()
    vocab = tiny_vocab()
    model = RepairModel(hyper, vocab, seed=seed)
    example = tiny_example(vocab, hyper)

    loss = _loss_value(model, example)
    loss.backward()
    analytic = {name: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data))
                for name, p in model.params.items()}

    report: dict = {"tolerance": tolerance, "epsilon": epsilon, "tensors": {}}
    worst_name, worst_err = None, 0.0
    for name in sorted(model.params):
        param = model.params[name]
        flat = param.data.reshape(-1)
        ga = analytic[name].reshape(-1)
        max_rel = 0.0
        for idx in range(flat.size):
            keep = flat[idx]
            flat[idx] = keep + epsilon
            up = float(_loss_value(model, example).data)
            flat[idx] = keep - epsilon
            down = float(_loss_value(model, example).data)
            flat[idx] = keep
            fd = (up - down) / (2.0 * epsilon)
            scale = max(abs(ga[idx]), abs(fd))
            diff = abs(ga[idx] - fd)
            rel = diff / scale if scale > 1e-8 else diff
            if rel > max_rel:
                max_rel = rel
        max_rel = float(max_rel)
        report["tensors"][name] = {"max_rel_err": max_rel, "checked": int(flat.size)}
        if max_rel > worst_err:
            worst_name, worst_err = name, max_rel
    report["max_rel_err"] = float(worst_err)
    report["worst_tensor"] = worst_name
    report["passed"] = bool(worst_err < tolerance)
    if raise_on_fail and not report["passed"]:
        raise GradientMismatch(worst_name, worst_err)
    return report
