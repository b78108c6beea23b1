import json
import sys

import pytest

from fixture_programs import make_parent

from crepair.cli import build_parser, main
from crepair.nn.checkpoint import save_checkpoint


@pytest.fixture()
def parent_dir(tmp_path):
    directory = tmp_path / "corpus"
    directory.mkdir()
    for i in range(3):
        (directory / f"prog{i}.c").write_text(make_parent(i))
    return directory


def run_cli(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def test_synthesize_defaults_match_documented_procedure():
    from crepair.dataset import CorruptionSettings

    settings = CorruptionSettings()
    assert settings.variants_per_program == 50
    assert settings.max_errors == 5
    parser = build_parser()
    args = parser.parse_args(["synthesize", "--corpus", "x", "--out", "y",
                              "--variants", "50", "--max-errors", "5"])
    assert args.variants == 50 and args.max_errors == 5


def test_unknown_flag_rejected():
    parser = build_parser()
    with pytest.raises(SystemExit) as exc:
        parser.parse_args(["synthesize", "--corpus", "x", "--out", "y", "--nope"])
    assert exc.value.code != 0


def test_synthesize_and_split_and_context(tmp_path, parent_dir, capsys):
    out = tmp_path / "broken.jsonl"
    code, stdout, _ = run_cli(capsys, "synthesize", "--corpus", str(parent_dir),
                              "--out", str(out), "--variants", "2",
                              "--max-errors", "2", "--seed", "9")
    assert code == 0 and out.exists()
    assert "retention" in stdout
    header = json.loads(out.read_text().splitlines()[0])
    assert header["format_version"] == 1

    manifest = tmp_path / "manifest.json"
    code, stdout, _ = run_cli(capsys, "split", "--corpus", str(parent_dir),
                              "--out", str(manifest), "--ratios", "1,0,0")
    assert code == 0 and manifest.exists()

    ctx = tmp_path / "ctx.jsonl"
    code, _, _ = run_cli(capsys, "context", "--program",
                         str(parent_dir / "prog0.c"), "--out", str(ctx))
    assert code == 0
    lines = ctx.read_text().splitlines()
    assert json.loads(lines[0])["format_version"] == 1
    assert len(lines) > 1


def test_error_is_machine_readable_json(tmp_path, capsys):
    bad = tmp_path / "bad"
    bad.mkdir()
    (bad / "broken.c").write_text("int main ( ) { return 0\n}\n")
    code, _, stderr = run_cli(capsys, "synthesize", "--corpus", str(bad),
                              "--out", str(tmp_path / "x.jsonl"), "--variants", "1")
    assert code == 1
    record = json.loads(stderr)
    assert record["error"] == "SourceDoesNotCompile"
    assert "broken" in record["message"]


def test_repair_on_compiling_file_outputs_identical(tmp_path, capsys, overfit_bundle):
    ckpt = tmp_path / "model.ckpt"
    save_checkpoint(ckpt, overfit_bundle.model)
    source = "int main ( ) { return 0 ; }\n"
    inp = tmp_path / "fine.c"
    inp.write_text(source)
    out = tmp_path / "fixed.c"
    trace = tmp_path / "trace.json"
    code, stdout, _ = run_cli(capsys, "repair", "--input", str(inp),
                              "--checkpoint", str(ckpt), "--out", str(out),
                              "--trace", str(trace))
    assert code == 0
    assert out.read_text() == source
    assert "FullRepair" in stdout
    doc = json.loads(trace.read_text())
    assert doc["iteration_count"] == 0


def test_repair_fixes_broken_file(tmp_path, capsys, overfit_bundle):
    from crepair.tokens import detokenize

    ckpt = tmp_path / "model.ckpt"
    save_checkpoint(ckpt, overfit_bundle.model)
    bp = overfit_bundle.variants[0]
    inp = tmp_path / "broken.c"
    inp.write_text(detokenize(bp.program))
    out = tmp_path / "fixed.c"
    code, stdout, _ = run_cli(capsys, "repair", "--input", str(inp),
                              "--checkpoint", str(ckpt), "--out", str(out))
    assert code == 0 and out.exists()


def test_evaluate_without_ground_truth_says_so(tmp_path, capsys, overfit_bundle):
    import crepair.corruption as corr
    from crepair.driver import evaluate
    from crepair.tokens import detokenize

    sources = [detokenize(bp.program) for bp in overfit_bundle.variants[:2]]
    metrics = evaluate(sources, overfit_bundle.model)
    assert "note" in metrics and "full_repair" in metrics

    ckpt = tmp_path / "model.ckpt"
    save_checkpoint(ckpt, overfit_bundle.model)
    testset = tmp_path / "testset.jsonl"
    corr.write_jsonl(overfit_bundle.variants[:2], testset)
    outjson = tmp_path / "metrics.json"
    code, stdout, _ = run_cli(capsys, "evaluate", "--testset", str(testset),
                              "--checkpoint", str(ckpt), "--out", str(outjson),
                              "--beam", "3")
    assert code == 0
    doc = json.loads(outjson.read_text())
    assert doc["format_version"] == 1
    assert "full_repair" in doc["metrics"]


def test_train_cli_smoke(tmp_path, capsys, parent_dir):
    corpus_path = tmp_path / "broken.jsonl"
    code, _, _ = run_cli(capsys, "synthesize", "--corpus", str(parent_dir),
                         "--out", str(corpus_path), "--variants", "2",
                         "--max-errors", "1", "--seed", "4")
    assert code == 0

    config = tmp_path / "config.json"
    from crepair.dataset import RunConfig
    from crepair.nn.model import HyperParams

    RunConfig(hyper=HyperParams(layers=1, heads=2, model_dim=16, ffn_dim=32,
                                dropout=0.0, learning_rate=1e-3, batch_size=4,
                                max_seq_len=96, max_target_len=24,
                                context_token_budget=24,
                                message_token_budget=16),
              seed=5).save(config)
    ckpt = tmp_path / "model.ckpt"
    trace = tmp_path / "loss.csv"
    code, stdout, _ = run_cli(capsys, "train", "--corpus", str(corpus_path),
                              "--config", str(config), "--epochs", "1",
                              "--out", str(ckpt), "--trace", str(trace))
    assert code == 0 and ckpt.exists()
    rows = trace.read_text().splitlines()
    assert rows[0] == "step,loc_loss,gen_loss,total_loss"
    assert len(rows) > 1


def test_gradcheck_cli(tmp_path, capsys):
    out = tmp_path / "report.json"
    code, stdout, _ = run_cli(capsys, "gradcheck", "--out", str(out))
    assert code == 0
    assert "PASS" in stdout
    doc = json.loads(out.read_text())
    assert doc["passed"] is True


def test_evaluate_directory_of_c_files_is_unlabeled(tmp_path, capsys, overfit_bundle):
    ckpt = tmp_path / "model.ckpt"
    save_checkpoint(ckpt, overfit_bundle.model)
    testdir = tmp_path / "testset"
    testdir.mkdir()
    (testdir / "ok.c").write_text("int main ( ) { return 0 ; }\n")
    code, stdout, _ = run_cli(capsys, "evaluate", "--testset", str(testdir),
                              "--checkpoint", str(ckpt))
    assert code == 0
    assert "full_repair" in stdout
    assert "full_repair only" in stdout
    assert "acc@1" not in stdout


def test_synthesize_reads_corruption_settings_from_config(tmp_path, parent_dir, capsys):
    from crepair.dataset import CorruptionSettings, RunConfig

    config = tmp_path / "run.json"
    RunConfig(corruption=CorruptionSettings(variants_per_program=2, max_errors=1),
              seed=21).save(config)
    out = tmp_path / "from_config.jsonl"
    code, stdout, _ = run_cli(capsys, "synthesize", "--corpus", str(parent_dir),
                              "--out", str(out), "--config", str(config))
    assert code == 0
    assert "emitted" in stdout and "/6" in stdout  # 3 parents x 2 variants

    # the same invocation with an explicit seed override changes the corpus
    out2 = tmp_path / "override.jsonl"
    code, _, _ = run_cli(capsys, "synthesize", "--corpus", str(parent_dir),
                         "--out", str(out2), "--config", str(config),
                         "--seed", "22")
    assert code == 0
    assert out.read_bytes() != out2.read_bytes()
