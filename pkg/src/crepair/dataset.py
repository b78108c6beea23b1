"""Dataset splitting, alpha-rename deduplication, and run configuration."""

from __future__ import annotations

from dataclasses import dataclass, field

from .corruption import DEFAULT_CATEGORY_MIX, ErrorCategory
from .diagnostics import CompilerConfig
from .errors import EmptyAfterDedup
from .nn.model import HyperParams
from .storage import derive_seed, read_json, write_json
from .tokens import Token, TokenKind, TokenizedProgram, detokenize

SPLIT_NAMES = ("train", "validation", "test")


def canonical_text(program: TokenizedProgram) -> str:
    """Detokenized text with names renamed in order of first appearance.

    Two alpha-renamed copies of one program collapse to the same string;
    literals and keywords are left alone.
    """
    mapping: dict[str, str] = {}
    lines = []
    for line in program.lines:
        new_line = []
        for tok in line:
            if tok.kind in (TokenKind.IDENTIFIER, TokenKind.TYPE_NAME):
                if tok.text not in mapping:
                    mapping[tok.text] = f"id{len(mapping)}"
                new_line.append(Token(mapping[tok.text], tok.kind))
            else:
                new_line.append(tok)
        lines.append(tuple(new_line))
    return detokenize(TokenizedProgram(tuple(lines), program.source_id))


@dataclass
class DatasetManifest:
    splits: dict                 # name -> list of source_ids
    dedup_report: dict
    seed: int
    ratios: tuple
    corpus_paths: list = field(default_factory=list)

    def split_of(self, source_id: str) -> str | None:
        for name, ids in self.splits.items():
            if source_id in ids:
                return name
        return None

    def to_json(self) -> dict:
        return {
            "splits": {k: list(v) for k, v in self.splits.items()},
            "dedup_report": dict(self.dedup_report),
            "seed": self.seed,
            "ratios": list(self.ratios),
            "corpus_paths": list(self.corpus_paths),
        }

    def save(self, path) -> None:
        write_json(path, self.to_json(), kind="dataset-manifest")

    @staticmethod
    def load(path) -> "DatasetManifest":
        doc = read_json(path, kind="dataset-manifest")
        return DatasetManifest(
            splits={k: list(v) for k, v in doc["splits"].items()},
            dedup_report=doc["dedup_report"],
            seed=doc["seed"],
            ratios=tuple(doc["ratios"]),
            corpus_paths=list(doc.get("corpus_paths", [])),
        )


def dedup_split(programs, ratios=(0.8, 0.1, 0.1), seed: int = 0,
                corpus_paths=()) -> DatasetManifest:
    """Assign programs to train/validation/test and deduplicate across splits.

    Assignment hashes each program's id, so every corruption variant of one
    parent lands in the same split.  Programs whose canonical (alpha-renamed)
    text collides with a higher-priority split (test > validation > train)
    are dropped from the lower one; the removals are reported.
    """
    if len(ratios) != 3 or any(r < 0 for r in ratios) or sum(ratios) <= 0:
        raise ValueError("ratios must be three non-negative numbers")
    total = float(sum(ratios))
    bounds = (ratios[0] / total, (ratios[0] + ratios[1]) / total)

    assignment: dict[str, list] = {name: [] for name in SPLIT_NAMES}
    canon: dict[str, str] = {}
    for prog in programs:
        u = (derive_seed(seed, "split", prog.source_id) % (2 ** 53)) / float(2 ** 53)
        name = "train" if u < bounds[0] else ("validation" if u < bounds[1] else "test")
        assignment[name].append(prog.source_id)
        canon[prog.source_id] = canonical_text(prog)

    removed = []
    priority = {"test": 2, "validation": 1, "train": 0}
    seen: dict[str, str] = {}
    for name in ("test", "validation", "train"):
        kept = []
        for sid in assignment[name]:
            text = canon[sid]
            holder = seen.get(text)
            if holder is not None and priority[holder] > priority[name]:
                removed.append({"source_id": sid, "split": name,
                                "duplicate_of_split": holder})
                continue
            seen.setdefault(text, name)
            kept.append(sid)
        assignment[name] = kept

    if ratios[0] > 0 and not assignment["train"]:
        raise EmptyAfterDedup("train split is empty after deduplication")

    report = {
        "criterion": "exact-match-after-alpha-rename",
        "pairs_removed": len(removed),
        "removed": removed,
    }
    return DatasetManifest(splits=assignment, dedup_report=report, seed=seed,
                           ratios=tuple(ratios), corpus_paths=list(corpus_paths))


@dataclass
class CorruptionSettings:
    variants_per_program: int = 50
    max_errors: int = 5
    category_mix: dict = None
    retry_budget: int = 20

    def __post_init__(self):
        if self.category_mix is None:
            self.category_mix = {c.value: w for c, w in DEFAULT_CATEGORY_MIX.items()}

    def mix_by_category(self) -> dict:
        return {ErrorCategory(name): float(w) for name, w in self.category_mix.items()}

    def to_json(self) -> dict:
        return {
            "variants_per_program": self.variants_per_program,
            "max_errors": self.max_errors,
            "category_mix": dict(self.category_mix),
            "retry_budget": self.retry_budget,
        }

    @staticmethod
    def from_json(obj: dict) -> "CorruptionSettings":
        return CorruptionSettings(**obj)


@dataclass
class RunConfig:
    hyper: HyperParams = field(default_factory=HyperParams)
    compiler: CompilerConfig = field(default_factory=CompilerConfig)
    corruption: CorruptionSettings = field(default_factory=CorruptionSettings)
    seed: int = 0

    def to_json(self) -> dict:
        return {
            "hyper": self.hyper.to_json(),
            "compiler": {
                "path": self.compiler.path,
                "flags": list(self.compiler.flags),
                "timeout": self.compiler.timeout,
                "max_concurrent": self.compiler.max_concurrent,
            },
            "corruption": self.corruption.to_json(),
            "seed": self.seed,
        }

    def save(self, path) -> None:
        write_json(path, self.to_json(), kind="run-config")

    @staticmethod
    def from_json(doc: dict) -> "RunConfig":
        compiler = doc.get("compiler", {})
        return RunConfig(
            hyper=HyperParams.from_json(doc["hyper"]) if "hyper" in doc else HyperParams(),
            compiler=CompilerConfig(
                path=compiler.get("path", ""),
                flags=tuple(compiler.get("flags", CompilerConfig().flags)),
                timeout=compiler.get("timeout", 10.0),
                max_concurrent=compiler.get("max_concurrent", 0),
            ),
            corruption=CorruptionSettings.from_json(doc["corruption"])
            if "corruption" in doc else CorruptionSettings(),
            seed=doc.get("seed", 0),
        )

    @staticmethod
    def load(path) -> "RunConfig":
        return RunConfig.from_json(read_json(path, kind="run-config"))
