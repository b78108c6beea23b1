"""Command-line surface tying the pipeline together.

Subcommands: synthesize, context, split, train, repair, evaluate, gradcheck.
Exit code 0 on success; on failure a machine-readable JSON error record goes
to stderr and the exit code is nonzero.  Partial outputs are written through
atomic renames, so an abort never leaves a half-written artifact.
"""

from __future__ import annotations

import argparse
import glob
import json
import os
import sys

from . import corruption as corr
from .context import analyzer, get_context, contexts_to_jsonl
from .dataset import CorruptionSettings, DatasetManifest, RunConfig, dedup_split
from .diagnostics import CompilerConfig
from .driver import evaluate, format_metrics, repair_program, trace_to_json
from .errors import CRepairError
from .nn.checkpoint import load_checkpoint, save_checkpoint
from .nn.train import batch_loss, train_model, write_trace_csv
from .storage import atomic_write, write_json
from .tokens import read_jsonl as read_programs_jsonl
from .tokens import tokenize


def _load_parent_corpus(path: str):
    """A directory of .c files or a tokenized-programs JSONL."""
    if os.path.isdir(path):
        programs = []
        for name in sorted(glob.glob(os.path.join(path, "*.c"))):
            with open(name, encoding="utf-8") as fh:
                programs.append(tokenize(fh.read(), os.path.basename(name)[:-2]))
        return programs
    return read_programs_jsonl(path)


def _parse_mix(text: str) -> dict:
    mix = {}
    for part in text.split(","):
        name, _, weight = part.partition("=")
        mix[corr.ErrorCategory(name.strip())] = float(weight)
    return mix


def _compiler_config(args) -> CompilerConfig:
    return CompilerConfig(path=args.cc or "", timeout=args.cc_timeout)


def _add_compiler_flags(parser):
    parser.add_argument("--cc", default=None, help="compiler binary (default: $CREPAIR_CC or gcc)")
    parser.add_argument("--cc-timeout", type=float, default=10.0)


def cmd_synthesize(args) -> int:
    corpus = _load_parent_corpus(args.corpus)
    if args.config:
        settings = RunConfig.load(args.config).corruption
        seed = RunConfig.load(args.config).seed
    else:
        settings, seed = CorruptionSettings(), 0
    variants_per_program = args.variants if args.variants is not None \
        else settings.variants_per_program
    max_errors = args.max_errors if args.max_errors is not None \
        else settings.max_errors
    mix = _parse_mix(args.mix) if args.mix else settings.mix_by_category()
    if args.seed is not None:
        seed = args.seed
    variants, report = corr.synthesize_corpus(
        corpus, variants_per_program=variants_per_program, max_errors=max_errors,
        category_mix=mix, seed=seed, compiler_config=_compiler_config(args),
        retry_budget=args.retry_budget or settings.retry_budget,
        workers=args.workers)
    corr.write_jsonl(variants, args.out, report=report)
    print(f"emitted {report.emitted}/{report.requested} variants "
          f"(retention {report.retention_rate:.3f}) -> {args.out}")
    return 0


def cmd_context(args) -> int:
    with open(args.program, encoding="utf-8") as fh:
        program = tokenize(fh.read(), os.path.basename(args.program))
    tables = analyzer(program)
    contexts = get_context(program, tables)
    contexts_to_jsonl(contexts, args.out)
    print(f"wrote contexts for {program.line_count} lines -> {args.out}")
    return 0


def cmd_split(args) -> int:
    programs = _load_parent_corpus(args.corpus)
    ratios = tuple(float(r) for r in args.ratios.split(","))
    manifest = dedup_split(programs, ratios=ratios, seed=args.seed,
                           corpus_paths=[args.corpus])
    manifest.save(args.out)
    sizes = {k: len(v) for k, v in manifest.splits.items()}
    print(f"splits {sizes}, removed {manifest.dedup_report['pairs_removed']} "
          f"duplicates -> {args.out}")
    return 0


def cmd_train(args) -> int:
    config = RunConfig.load(args.config) if args.config else RunConfig()
    if args.seed is not None:
        config.seed = args.seed
    variants = corr.read_jsonl(args.corpus)
    val_variants = []
    if args.manifest:
        manifest = DatasetManifest.load(args.manifest)
        train_ids = set(manifest.splits.get("train", []))
        val_ids = set(manifest.splits.get("validation", []))
        val_variants = [v for v in variants if v.parent_id in val_ids]
        variants = [v for v in variants if v.parent_id in train_ids]

    epoch_log = []

    def on_epoch_end(epoch, model, mean_total):
        row = {"epoch": epoch, "train_loss": mean_total}
        if val_variants:
            from .nn.train import build_examples, prepare_programs

            prepared, _ = prepare_programs(val_variants, config.hyper, _compiler_config(args))
            examples, _ = build_examples(prepared, model.vocab, config.hyper)
            if examples:
                total, _, _ = batch_loss(model, examples, training=False)
                row["validation_loss"] = float(total.data)
        epoch_log.append(row)
        print(json.dumps(row))
        return False

    model, trace, _examples, _vocab = train_model(
        variants, config.hyper, seed=config.seed, epochs=args.epochs,
        compiler_config=_compiler_config(args), on_epoch_end=on_epoch_end)
    save_checkpoint(args.out, model)
    if args.trace:
        write_trace_csv(trace, args.trace)
    print(f"trained {len(trace)} steps -> {args.out}")
    return 0


def cmd_repair(args) -> int:
    checkpoint = load_checkpoint(args.checkpoint)
    model = checkpoint.build_model()
    with open(args.input, encoding="utf-8") as fh:
        source = fh.read()
    fixed, trace = repair_program(source, model, _compiler_config(args),
                                  beam_width=args.beam, max_iters=args.max_iters)
    with atomic_write(args.out) as fh:
        fh.write(fixed)
    if args.trace:
        with atomic_write(args.trace) as fh:
            fh.write(trace_to_json(trace) + "\n")
    print(f"{trace.final_status} after {trace.iteration_count} iteration(s) -> {args.out}")
    return 0


def cmd_evaluate(args) -> int:
    checkpoint = load_checkpoint(args.checkpoint)
    model = checkpoint.build_model()
    if os.path.isdir(args.testset):
        # unlabeled test set: a directory of .c files, full repair only
        samples = []
        for name in sorted(glob.glob(os.path.join(args.testset, "*.c"))):
            with open(name, encoding="utf-8") as fh:
                samples.append(fh.read())
    else:
        samples = corr.read_jsonl(args.testset)
    metrics = evaluate(samples, model, _compiler_config(args),
                       beam_width=args.beam, max_iters=args.max_iters)
    if args.out:
        write_json(args.out, {"metrics": metrics}, kind="metrics")
    print(format_metrics(metrics))
    return 0


def cmd_gradcheck(args) -> int:
    from .nn.gradcheck import gradient_check

    report = gradient_check(raise_on_fail=False)
    if args.out:
        write_json(args.out, report, kind="gradcheck-report")
    worst = report["worst_tensor"]
    print(f"max rel err {report['max_rel_err']:.3e} ({worst}); "
          f"{'PASS' if report['passed'] else 'FAIL'} at tolerance {report['tolerance']}")
    return 0 if report["passed"] else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="crepair",
                                     description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synthesize", help="corrupt a correct corpus into labeled variants")
    p.add_argument("--corpus", required=True, help=".c directory or programs JSONL")
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None, help="run-config JSON with corruption settings")
    p.add_argument("--variants", type=int, default=None, help="default 50")
    p.add_argument("--max-errors", type=int, default=None, help="default 5")
    p.add_argument("--mix", default=None, help="e.g. struct=21.3,stmt=51.5,decl=21.4,tm=2.2,im=3.6")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--retry-budget", type=int, default=None)
    p.add_argument("--workers", type=int, default=None)
    _add_compiler_flags(p)
    p.set_defaults(fn=cmd_synthesize)

    p = sub.add_parser("context", help="emit per-line declare/use contexts")
    p.add_argument("--program", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_context)

    p = sub.add_parser("split", help="dedup and split a parent corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--ratios", default="0.8,0.1,0.1")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_split)

    p = sub.add_parser("train", help="train the localizer + decoder")
    p.add_argument("--corpus", required=True, help="broken-programs JSONL")
    p.add_argument("--manifest", default=None)
    p.add_argument("--config", default=None, help="run-config JSON")
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--trace", default=None, help="loss trace CSV")
    _add_compiler_flags(p)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("repair", help="fix one C file")
    p.add_argument("--input", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--trace", default=None)
    p.add_argument("--beam", type=int, default=5)
    p.add_argument("--max-iters", type=int, default=5)
    _add_compiler_flags(p)
    p.set_defaults(fn=cmd_repair)

    p = sub.add_parser("evaluate", help="metrics over a labeled or unlabeled test set")
    p.add_argument("--testset", required=True,
                   help="broken-programs JSONL, or a directory of .c files "
                        "(unlabeled: full repair only)")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--beam", type=int, default=5)
    p.add_argument("--max-iters", type=int, default=5)
    _add_compiler_flags(p)
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("gradcheck", help="finite-difference audit of all gradients")
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except CRepairError as exc:
        json.dump({"error": type(exc).__name__, "message": str(exc)},
                  sys.stderr, ensure_ascii=False)
        sys.stderr.write("\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
