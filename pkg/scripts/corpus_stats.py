#!/usr/bin/env python3
"""Synthesize a corrupted corpus and report retention and category mix.

Useful for checking that the error-class distribution of an emitted corpus
tracks the configured weights before committing to a long training run.
"""

import argparse
import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent))

from demo_programs import parent

from crepair.corruption import DEFAULT_CATEGORY_MIX, synthesize_corpus, write_jsonl
from crepair.tokens import tokenize


def main() -> int:
    cli = argparse.ArgumentParser(description=__doc__)
    cli.add_argument("--parents", type=int, default=20)
    cli.add_argument("--variants", type=int, default=50)
    cli.add_argument("--max-errors", type=int, default=5)
    cli.add_argument("--seed", type=int, default=0)
    cli.add_argument("--out", default=None, help="optional JSONL path")
    args = cli.parse_args()

    parents = [tokenize(parent(i), f"demo{i:03d}") for i in range(args.parents)]
    start = time.time()
    variants, report = synthesize_corpus(parents, variants_per_program=args.variants,
                                         max_errors=args.max_errors, seed=args.seed)
    elapsed = time.time() - start

    print(f"emitted {report.emitted}/{report.requested} variants in {elapsed:.1f}s "
          f"(retention {report.retention_rate:.3f}, "
          f"{report.still_compiling_retries} still-compiling retries)")
    total = sum(report.category_counts.values())
    mix_total = sum(DEFAULT_CATEGORY_MIX.values())
    print(f"{'category':10s} {'emitted':>9s} {'target':>9s} {'delta':>8s}")
    for category, weight in DEFAULT_CATEGORY_MIX.items():
        got = report.category_counts[category.value] / total
        target = weight / mix_total
        print(f"{category.value:10s} {100 * got:8.2f}% {100 * target:8.2f}% "
              f"{100 * (got - target):+7.2f}%")
    if args.out:
        write_jsonl(variants, args.out, report=report)
        print(f"corpus -> {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
