import json
import subprocess
import sys
from pathlib import Path

import pytest

from tdpcfg.cli import main, parse_prediction_line, read_predictions

REPO = Path(__file__).resolve().parent.parent


def run_cli(*argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """A tiny end-to-end run: synth -> train -> parse; shared by tests."""
    root = tmp_path_factory.mktemp("cliruns")
    data = root / "data" / "toy"
    assert run_cli("synth", "--out", data, "--style", "demo",
                   "--counts", "60,20,20", "--max-length", "10",
                   "--min-length", "3", "--seed", "0") == 0
    config = root / "toy.ini"
    config.write_text(
        f"""
[model]
p = 8
n = 4
d = 8
k = 16

[train]
max_epochs = 1
seeds = 0,1
precision = float64

[data]
train = {data}-train.trees
dev = {data}-dev.trees
test = {data}-test.trees

[run]
out = {root / 'runs'}
""",
        encoding="utf-8",
    )
    assert run_cli("train", "--config", config) == 0
    run_dirs = list((root / "runs").glob("train-*"))
    assert len(run_dirs) == 1
    run_dir = run_dirs[0]

    sentences = root / "sentences.txt"
    lines = []
    for line in (Path(f"{data}-test.trees")).read_text().splitlines():
        toks = [w for t, w in
                __import__("re").findall(r"\(([^()\s]+) ([^()\s]+)\)", line)]
        lines.append(" ".join(toks))
    sentences.write_text("\n".join(lines) + "\n", encoding="utf-8")
    preds = root / "preds.txt"
    assert run_cli("parse", "--checkpoint", run_dir / "checkpoint-seed0.ckpt",
                   "--input", sentences, "--output", preds) == 0
    return {"root": root, "data": data, "config": config,
            "run_dir": run_dir, "sentences": sentences, "preds": preds}


def test_train_produces_checkpoints_and_history(workspace):
    run_dir = workspace["run_dir"]
    assert (run_dir / "checkpoint-seed0.ckpt").exists()
    assert (run_dir / "checkpoint-seed1.ckpt").exists()
    history = (run_dir / "history.tsv").read_text().splitlines()
    assert history[0] == "seed\tepoch\ttrain_nll\tdev_perplexity\twall_seconds"
    # two seeds, epoch 0 (init) + 1 training epoch each
    assert len(history) == 1 + 2 * 2
    manifest = json.loads((run_dir / "manifest.json").read_text())
    assert manifest["seeds"] == [0, 1]
    assert set(manifest["input_digests"]) == {"config", "train", "dev"}
    assert manifest["digest"]


def test_invalid_config_key_names_the_key(tmp_path, capsys):
    config = tmp_path / "bad.ini"
    config.write_text("[train]\nlerning_rate = 0.1\n", encoding="utf-8")
    assert run_cli("train", "--config", config) != 0
    err = capsys.readouterr().err
    assert "lerning_rate" in err


def test_parse_records_are_valid_bracketings(workspace):
    records = read_predictions(workspace["preds"])
    assert len(records) == 20
    for idx, (ident, length, loglik, tree) in enumerate(records):
        assert ident == idx
        assert length == len(tree.internal_spans) + 1
        tree.validate()
        for _i, _j, sym in tree.internal_spans:
            assert 0 <= sym < 4


def test_parse_is_deterministic(workspace, tmp_path):
    again = tmp_path / "preds2.txt"
    assert run_cli("parse", "--checkpoint", workspace["run_dir"] / "checkpoint-seed0.ckpt",
                   "--input", workspace["sentences"], "--output", again) == 0
    assert again.read_bytes() == Path(workspace["preds"]).read_bytes()


def test_parse_empty_input_gives_empty_output(workspace, tmp_path):
    empty_in = tmp_path / "empty.txt"
    empty_in.write_text("", encoding="utf-8")
    out = tmp_path / "empty-preds.txt"
    assert run_cli("parse", "--checkpoint", workspace["run_dir"] / "checkpoint-seed0.ckpt",
                   "--input", empty_in, "--output", out) == 0
    assert out.read_text() == ""


def test_eval_perfect_predictions_score_100(workspace, tmp_path):
    # build predictions equal to the gold bracketings of the test split
    from tdpcfg.cli import format_prediction
    from tdpcfg.corpus import gold_spans, preprocess, read_treebank
    from tdpcfg.decoder import ParseTree

    trees = preprocess(read_treebank(f"{workspace['data']}-test.trees"))
    preds = tmp_path / "gold-preds.txt"
    with open(preds, "w", encoding="utf-8") as fh:
        for idx, tree in enumerate(trees):
            spans = gold_spans(tree)
            internal = tuple((i, j, 0) for i, j, _ in spans.spans if j > i)
            fh.write(format_prediction(
                idx, spans.length, 0.0,
                ParseTree(length=spans.length, spans=internal)) + "\n")
    out = tmp_path / "eval-out"
    assert run_cli("eval", "--gold", f"{workspace['data']}-test.trees",
                   "--predictions", preds, "--out", out) == 0
    rows = dict()
    for line in (out / "report.tsv").read_text().splitlines()[1:]:
        metric, value, seed = line.split("\t")
        rows[metric] = value
    assert float(rows["mean_f1"]) == pytest.approx(100.0)


def test_eval_detects_count_mismatch(workspace, tmp_path, capsys):
    preds = tmp_path / "short-preds.txt"
    lines = Path(workspace["preds"]).read_text().splitlines()[:3]
    preds.write_text("\n".join(lines) + "\n", encoding="utf-8")
    assert run_cli("eval", "--gold", f"{workspace['data']}-test.trees",
                   "--predictions", preds, "--out", tmp_path / "x") != 0
    assert "mismatched sentence counts" in capsys.readouterr().err


def test_eval_output_is_byte_identical_on_rerun(workspace, tmp_path):
    out1, out2 = tmp_path / "e1", tmp_path / "e2"
    for out in (out1, out2):
        assert run_cli("eval", "--gold", f"{workspace['data']}-test.trees",
                       "--predictions", workspace["preds"], "--out", out) == 0
    assert (out1 / "report.tsv").read_bytes() == (out2 / "report.tsv").read_bytes()


def test_inspect_outputs_normalized_matrix(workspace, tmp_path):
    out = tmp_path / "inspect"
    assert run_cli("inspect", "--checkpoint", workspace["run_dir"] / "checkpoint-seed0.ckpt",
                   "--treebank", f"{workspace['data']}-test.trees",
                   "--out", out, "--top-k", "3") == 0
    lines = (out / "correspondence.tsv").read_text().splitlines()
    header = lines[0].split("\t")
    assert len(header) - 1 <= 4  # top_k columns + OTHER
    assert header[-1] == "OTHER"
    for line in lines[1:]:
        values = [float(v) for v in line.split("\t")[1:]]
        assert sum(values) == pytest.approx(1.0, abs=1e-9)
    clusters = (out / "clusters.txt").read_text()
    assert "NT-" in clusters  # most-predicted nonterminal has phrases


def test_bench_structure(tmp_path):
    out = tmp_path / "bench"
    assert run_cli("bench", "--out", out, "--backend", "python",
                   "--length", "8", "--reps", "1",
                   "--dense-m", "4,8", "--factored-m", "4,8") == 0
    rows = (out / "bench.tsv").read_text().splitlines()
    assert rows[0] == "path\tbackend\tm\td\tlength\tmedian_seconds\trepetitions"
    assert len(rows) == 1 + 4  # two dense sizes + two factored sizes
    fits = (out / "exponents.tsv").read_text().splitlines()
    assert fits[0] == "path\tbackend\texponent"
    assert len(fits) == 3


def test_sweep_rows(workspace, tmp_path):
    out = tmp_path / "sweep"
    assert run_cli("sweep", "--config", workspace["config"],
                   "--p-values", "4,8", "--out", out) == 0
    sweep_dirs = list(out.glob("sweep-*"))
    assert len(sweep_dirs) == 1
    rows = (sweep_dirs[0] / "sweep.tsv").read_text().splitlines()
    assert rows[0] == "p\tn\td\tmean_f1\tmedian_dev_perplexity"
    assert len(rows) == 3
    first = rows[1].split("\t")
    assert first[0] == "4" and first[1] == "2"  # n = p/2
    second = rows[2].split("\t")
    assert second[0] == "8" and second[1] == "4"


def test_prediction_line_round_trip():
    line = "3\t5\t-12.25\t0,4,1;0,1,0;2,4,2;3,4,0"
    ident, length, loglik, tree = parse_prediction_line(line)
    assert (ident, length, loglik) == (3, 5, -12.25)
    assert len(tree.internal_spans) == 4
    from tdpcfg.cli import format_prediction
    assert format_prediction(ident, length, loglik, tree) == line


def test_console_entry_point_runs():
    proc = subprocess.run(
        [sys.executable, "-m", "tdpcfg.cli", "--help"],
        capture_output=True, text=True, cwd=REPO,
    )
    assert proc.returncode == 0
    assert "bench" in proc.stdout
