import json
import random

import pytest

from fixture_programs import corpus, make_parent

from crepair.corruption import (ALLOWED_OPS, CorruptionRecord,
                                DEFAULT_CATEGORY_MIX, ErrorCategory, MutationOp,
                                corrupt_once, read_jsonl, synthesize_corpus,
                                write_jsonl)
from crepair.diagnostics import compile_source
from crepair.errors import DisallowedOp, NoEligibleSite, SourceDoesNotCompile
from crepair.tokens import Token, TokenKind, detokenize, tokenize

DISALLOWED = [
    (ErrorCategory.DECL, MutationOp.DEL),
    (ErrorCategory.DECL, MutationOp.REP),
    (ErrorCategory.TYPE_MISMATCH, MutationOp.REP),
    (ErrorCategory.ID_MISUSE, MutationOp.DEL),
]


@pytest.fixture(scope="module")
def parent():
    return tokenize(make_parent(1), "parent1")


def test_matrix_has_eleven_allowed_pairs():
    allowed = sum(len(ops) for ops in ALLOWED_OPS.values())
    assert allowed == 11
    for category, op in DISALLOWED:
        assert op not in ALLOWED_OPS[category]


def test_decl_del_is_disallowed(parent):
    with pytest.raises(DisallowedOp):
        corrupt_once(parent, ErrorCategory.DECL, MutationOp.DEL, random.Random(0))


@pytest.mark.parametrize("category,op", DISALLOWED)
def test_all_disallowed_pairs(parent, category, op):
    with pytest.raises(DisallowedOp):
        corrupt_once(parent, category, op, random.Random(0))


@pytest.mark.parametrize("category,op", [
    (category, op) for category, ops in ALLOWED_OPS.items() for op in sorted(ops, key=lambda o: o.value)
])
def test_all_allowed_pairs_produce_valid_records(parent, category, op):
    mutated, record = corrupt_once(parent, category, op, random.Random(3))
    assert record.category is category and record.op is op
    delta = {MutationOp.ADD: 1, MutationOp.DEL: -1, MutationOp.REP: 0}[op]
    assert len(record.mutated_line) - len(record.original_line) == delta
    assert record.original_line != record.mutated_line
    # exactly one line differs from the input
    diffs = [i for i in range(1, parent.line_count + 1)
             if parent.line(i) != mutated.line(i)]
    assert diffs == [record.line]
    assert parent.line(record.line) == record.original_line
    assert mutated.line(record.line) == record.mutated_line


def test_determinism_same_seed_same_result(parent):
    results = []
    for _ in range(2):
        rng = random.Random(12345)
        mutated, record = corrupt_once(parent, ErrorCategory.STMT, MutationOp.REP, rng)
        results.append((mutated.lines, record))
    assert results[0] == results[1]


def test_statement_delete_literal_breaks_compilation():
    prog = tokenize("int main ( ) {\nint a ;\na = a + 1 ;\nreturn 0 ;\n}\n", "lit")
    rng = random.Random(0)
    for _ in range(200):
        mutated, record = corrupt_once(prog, ErrorCategory.STMT, MutationOp.DEL, rng)
        if record.operand_kind is TokenKind.INT_LITERAL and record.line == 3:
            assert [t.text for t in record.mutated_line] == ["a", "=", "a", "+", ";"]
            assert not compile_source(detokenize(mutated)).success
            return
    pytest.fail("literal deletion site never drawn")


def test_rep_copies_identifier_from_program(parent):
    rng = random.Random(9)
    program_texts = {t.text for line in parent.lines for t in line}
    for _ in range(50):
        _, record = corrupt_once(parent, ErrorCategory.STMT, MutationOp.REP, rng)
        if record.op is MutationOp.REP:
            new_tokens = set(t.text for t in record.mutated_line)
            assert new_tokens <= program_texts


def test_no_eligible_site():
    prog = tokenize("int main ( ) {\nreturn 0 ;\n}\n", "nocall")
    with pytest.raises(NoEligibleSite):
        corrupt_once(prog, ErrorCategory.TYPE_MISMATCH, MutationOp.DEL,
                     random.Random(0))


def test_preprocessor_lines_never_mutated():
    prog = tokenize("#include <stdio.h>\nint main ( ) {\nint a ;\na = 1 ;\nreturn a ;\n}\n")
    rng = random.Random(5)
    for _ in range(80):
        _, record = corrupt_once(prog, ErrorCategory.STMT, MutationOp.ADD, rng)
        assert record.line != 1


def test_record_json_round_trip(parent):
    _, record = corrupt_once(parent, ErrorCategory.STRUCT, MutationOp.ADD,
                             random.Random(4))
    again = CorruptionRecord.from_json(json.loads(json.dumps(record.to_json())))
    assert again == record


def test_record_validates_length_contract():
    a = (Token("a", TokenKind.IDENTIFIER),)
    ab = (Token("a", TokenKind.IDENTIFIER), Token("b", TokenKind.IDENTIFIER))
    with pytest.raises(ValueError):
        CorruptionRecord(1, ErrorCategory.STMT, MutationOp.REP, TokenKind.IDENTIFIER,
                         original_line=a, mutated_line=ab)


@pytest.fixture(scope="module")
def small_synthesis():
    parents = [tokenize(make_parent(i), f"p{i:02d}") for i in range(4)]
    variants, report = synthesize_corpus(parents, variants_per_program=6,
                                         max_errors=3, seed=77)
    return parents, variants, report


def test_every_variant_fails_compilation(small_synthesis):
    _, variants, report = small_synthesis
    assert variants
    for bp in variants:
        assert not compile_source(detokenize(bp.program)).success
    assert 0 < report.retention_rate <= 1.0


def test_variant_error_counts_and_distinct_lines(small_synthesis):
    _, variants, _ = small_synthesis
    for bp in variants:
        assert 1 <= len(bp.corruptions) <= 3
        lines = [r.line for r in bp.corruptions]
        assert len(set(lines)) == len(lines)


def test_restoring_original_lines_recovers_parent(small_synthesis):
    parents, variants, _ = small_synthesis
    by_id = {p.source_id: p for p in parents}
    for bp in variants:
        repaired = bp.program
        for record in bp.corruptions:
            repaired = repaired.replace_line(record.line, record.original_line)
        assert repaired.lines == by_id[bp.parent_id].lines


def test_source_that_does_not_compile_is_rejected():
    bad = tokenize("int main ( ) { return 0\n}\n", "bad")
    with pytest.raises(SourceDoesNotCompile):
        synthesize_corpus([bad], variants_per_program=1, max_errors=1, seed=0)


def test_zero_variants_requested():
    parents = [tokenize(make_parent(0), "p0")]
    variants, report = synthesize_corpus(parents, variants_per_program=0,
                                         max_errors=2, seed=0)
    assert variants == [] and report.requested == 0


def test_corpus_jsonl_byte_identical_across_runs(tmp_path, small_synthesis):
    parents, _, _ = small_synthesis
    paths = []
    for run in range(2):
        variants, report = synthesize_corpus(parents, variants_per_program=3,
                                             max_errors=2, seed=123)
        path = tmp_path / f"run{run}.jsonl"
        write_jsonl(variants, path, report=report)
        paths.append(path.read_bytes())
    assert paths[0] == paths[1]


def test_jsonl_round_trip(tmp_path, small_synthesis):
    _, variants, report = small_synthesis
    path = tmp_path / "corpus.jsonl"
    write_jsonl(variants, path, report=report)
    again = read_jsonl(path)
    assert len(again) == len(variants)
    assert again[0].to_json() == variants[0].to_json()


def test_parallel_and_serial_runs_identical(small_synthesis):
    parents, _, _ = small_synthesis
    serial, _ = synthesize_corpus(parents, variants_per_program=3, max_errors=2,
                                  seed=5, workers=1)
    parallel, _ = synthesize_corpus(parents, variants_per_program=3, max_errors=2,
                                    seed=5, workers=4)
    assert [v.to_json() for v in serial] == [v.to_json() for v in parallel]


def test_default_mix_matches_documented_weights():
    assert DEFAULT_CATEGORY_MIX[ErrorCategory.STMT] == pytest.approx(51.52)
    assert sum(DEFAULT_CATEGORY_MIX.values()) == pytest.approx(100.0)


def test_exhausted_retries_with_zero_budget():
    from crepair.errors import ExhaustedRetries

    parent = tokenize(make_parent(0), "p0")
    with pytest.raises(ExhaustedRetries):
        synthesize_corpus([parent], variants_per_program=1, max_errors=1,
                          seed=0, retry_budget=0)


def test_fifty_variants_from_one_parent():
    """Default production setting: up to 50 broken variants per parent."""
    parent = tokenize(
        "int fn ( int p ) {\nreturn p + 1 ;\n}\n"
        "int main ( ) {\nint a ;\na = fn ( 2 ) ;\nreturn a ;\n}\n", "single")
    variants, report = synthesize_corpus([parent], variants_per_program=50,
                                         max_errors=5, seed=6)
    assert 0 < len(variants) <= 50
    for bp in variants:
        assert not compile_source(detokenize(bp.program)).success


def test_mutated_programs_retokenize_to_same_texts(small_synthesis):
    """The detokenized variant relexes to the same token texts, so the model
    sees one consistent stream whether it reads the corpus or the file."""
    _, variants, _ = small_synthesis
    for bp in variants:
        again = tokenize(detokenize(bp.program))
        got = [[t.text for t in line] for line in again.lines]
        want = [[t.text for t in line] for line in bp.program.lines]
        assert got == want
