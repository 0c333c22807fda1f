import pytest

from captioner.serializers import vocab_path_for
from cli.main import EXIT_ERROR, EXIT_OK, EXIT_USAGE, run
from cli.manifest import manifest_path_for
from core.utils.file_utils import load_json
from core.utils.logging_utils import setup_logger
from dataset.serializers import load_dataset
from dataset.vocabulary import Vocabulary
from metrics.ranking import ranking_report
from metrics.serializers import read_score_matrix

DECODE = ["--beam", "3", "--max-len", "8"]


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """A synthetic dataset with five captions per image and a briefly trained model."""
    root = tmp_path_factory.mktemp("cli")
    data = root / "data.jsonl"
    model = root / "model" / "m.ckpt"
    assert run(["synth", "--num-images", "4", "--feature-dim", "4", "--captions-per-image", "5",
                "--seed", "3", "--out", str(data)]) == EXIT_OK
    assert run(["train", "--data", str(data), "--embed", "6", "--hidden", "6", "--lr", "0.1",
                "--epochs", "3", "--min-count", "1", "--seed", "1", "--out", str(model)]) == EXIT_OK
    return root, data, model


def stdout_of(capsys, argv):
    capsys.readouterr()
    assert run(argv) == EXIT_OK
    return capsys.readouterr().out


def key_values(text):
    return dict(line.split("=", 1) for line in text.splitlines())


class TestSynthAndTrain:
    def test_artifacts_and_manifests(self, workspace):
        _, data, model = workspace
        assert len(load_dataset(data)) == 4
        assert vocab_path_for(model).is_file()

        manifest = load_json(manifest_path_for(model))
        assert manifest["command"] == "train"
        assert manifest["seed"] == 1
        assert manifest["config"]["hidden_dim"] == 6
        assert str(model) in manifest["artifact_hashes"]
        assert load_json(manifest_path_for(data))["command"] == "synth"

    def test_train_rerun_is_byte_identical(self, workspace, tmp_path):
        _, data, _ = workspace
        model = tmp_path / "m.ckpt"
        argv = ["train", "--data", str(data), "--embed", "5", "--hidden", "5", "--lr", "0.1",
                "--epochs", "2", "--min-count", "1", "--seed", "4", "--out", str(model)]
        blobs = []
        for _ in range(2):
            assert run(argv) == EXIT_OK
            blobs.append((model.read_bytes(), manifest_path_for(model).read_bytes()))
        assert blobs[0] == blobs[1]


class TestCaption:
    def test_one_row_per_image(self, workspace, capsys):
        _, data, model = workspace
        lines = stdout_of(capsys, ["caption", "--model", str(model), "--features", str(data), *DECODE]).splitlines()
        ids = [record.image_id for record in load_dataset(data).records]
        assert [line.split("\t")[0] for line in lines] == ids
        assert all(len(line.split("\t")) == 2 for line in lines)

    def test_beam_one_equals_greedy(self, workspace, capsys):
        _, data, model = workspace
        base = ["caption", "--model", str(model), "--features", str(data), "--max-len", "8"]
        assert stdout_of(capsys, [*base, "--beam", "1"]) == stdout_of(capsys, [*base, "--mode", "greedy"])

    def test_nbest_rows(self, workspace, capsys):
        _, data, model = workspace
        out = stdout_of(capsys, ["caption", "--model", str(model), "--features", str(data), "--nbest", "3", *DECODE])
        rows = [line.split("\t") for line in out.splitlines()]
        assert len(rows) == 12
        assert [row[1] for row in rows[:3]] == ["1", "2", "3"]
        log_probs = [float(row[2]) for row in rows[:3]]
        assert log_probs == sorted(log_probs, reverse=True)

    def test_repeated_model_matches_single(self, workspace, capsys):
        _, data, model = workspace
        single = stdout_of(capsys, ["caption", "--model", str(model), "--features", str(data), *DECODE])
        doubled = stdout_of(
            capsys, ["caption", "--model", str(model), "--model", str(model), "--features", str(data), *DECODE]
        )
        assert single == doubled

    def test_rerun_is_byte_identical(self, workspace, tmp_path):
        _, data, model = workspace
        out = tmp_path / "captions.tsv"
        argv = ["caption", "--model", str(model), "--features", str(data), "--mode", "sample", "--seed", "9",
                "--out", str(out)]
        blobs = []
        for _ in range(2):
            assert run(argv) == EXIT_OK
            blobs.append((out.read_bytes(), manifest_path_for(out).read_bytes()))
        assert blobs[0] == blobs[1]
        assert load_json(manifest_path_for(out))["seed"] == 9


class TestReports:
    def test_evaluate(self, workspace, capsys):
        _, data, model = workspace
        report = key_values(stdout_of(capsys, ["evaluate", "--model", str(model), "--data", str(data), *DECODE]))
        assert list(report) == ["bleu1", "bleu2", "bleu3", "bleu4", "perplexity", "images", "words"]
        assert 0.0 <= float(report["bleu1"]) <= 1.0
        assert float(report["perplexity"]) >= 1.0
        assert report["images"] == "4"

    def test_rank_scores_reproduce_report(self, workspace, capsys, tmp_path):
        _, data, model = workspace
        scores = tmp_path / "scores.csv"
        report = key_values(
            stdout_of(capsys, ["rank", "--model", str(model), "--data", str(data), "--scores-out", str(scores)])
        )
        for direction in ("annotation", "search"):
            matrix = read_score_matrix(tmp_path / f"scores.{direction}.csv")
            assert matrix.rows == matrix.cols == 4
            for key, value in ranking_report(matrix).items():
                assert float(report[f"{direction}_{key}"]) == pytest.approx(value)

    def test_neighbors(self, workspace, capsys):
        _, _, model = workspace
        word = Vocabulary.load(vocab_path_for(model)).words[0]
        rows = [line.split("\t") for line in stdout_of(
            capsys, ["neighbors", "--model", str(model), "--word", word, "--k", "2"]
        ).splitlines()]
        assert len(rows) == 2
        assert word not in [row[0] for row in rows]
        assert float(rows[0][1]) >= float(rows[1][1])

    def test_human_baseline(self, workspace, capsys):
        _, data, _ = workspace
        report = key_values(stdout_of(capsys, ["human-baseline", "--data", str(data), "--max-n", "2"]))
        assert list(report) == ["bleu1", "bleu2", "images"]
        assert 0.0 < float(report["bleu1"]) <= 1.0

    def test_diversity(self, workspace, capsys):
        _, data, model = workspace
        report = key_values(stdout_of(capsys, [
            "diversity", "--model", str(model), "--features", str(data), "--train-data", str(data),
            "--nbest", "3", "--beam", "3", "--max-len", "5", "--max-n", "2",
        ]))
        assert list(report) == ["agreement_bleu2", "distinct_top", "novelty"]
        assert 0.0 <= float(report["novelty"]) <= 1.0


class TestExitCodes:
    def test_unknown_flag(self):
        assert run(["caption", "--bogus"]) == EXIT_USAGE

    def test_missing_subcommand(self):
        assert run([]) == EXIT_USAGE

    def test_invalid_beam_width(self, workspace):
        _, data, model = workspace
        assert run(["caption", "--model", str(model), "--features", str(data), "--beam", "0"]) == EXIT_USAGE

    def test_nbest_too_small_for_diversity(self, workspace):
        _, data, model = workspace
        assert run(["diversity", "--model", str(model), "--features", str(data), "--nbest", "1"]) == EXIT_USAGE

    def test_missing_file(self, tmp_path):
        assert run(["human-baseline", "--data", str(tmp_path / "absent.jsonl")]) == EXIT_ERROR

    def test_unknown_word(self, workspace):
        _, _, model = workspace
        assert run(["neighbors", "--model", str(model), "--word", "zebra-not-a-word"]) == EXIT_ERROR

    def test_negative_seed(self, tmp_path):
        out = tmp_path / "d.jsonl"
        argv = ["synth", "--num-images", "2", "--feature-dim", "2", "--seed", "-1", "--out", str(out)]
        assert run(argv) == EXIT_USAGE
        assert not out.exists()


class TestLogDir:
    def test_run_log_is_written(self, workspace, tmp_path):
        _, data, _ = workspace
        logs = tmp_path / "logs"
        argv = ["--log-level", "INFO", "--log-dir", str(logs), "human-baseline", "--data", str(data)]
        assert run([*argv, "--max-n", "2"]) == EXIT_OK
        setup_logger()
        assert "Loaded 4 records" in (logs / "run.log").read_text(encoding="utf-8")
