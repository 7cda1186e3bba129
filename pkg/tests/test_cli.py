import numpy as np
import pytest

from viseme_toolkit.cli import main
from viseme_toolkit.corpus import Corpus, synthetic_map, write_corpus
from viseme_toolkit.hmm import flat_start, save_model_set
from viseme_toolkit.scoring import ConfusionMatrix
from viseme_toolkit.viseme_map import PronunciationDict

QUICK_CONFIG = """\
n_states = 2
n_mix = 1
r1 = 2
r2 = 1
r3 = 1
threshold = 0
test_size = 6
n_folds = 5
"""

SMALL_SYNTH = """\
n_classes = 4
dim = 4
separation = 8
states_per_class = 2
min_frames = 3
max_frames = 5
silence_min_frames = 4
silence_max_frames = 6
n_lines = 30
vocabulary_size = 8
min_words = 2
max_words = 3
"""


def write_file(path, text):
    path.write_text(text, encoding="utf-8")
    return str(path)


@pytest.fixture
def raven_files(tmp_path, raven_text):
    return (
        write_file(tmp_path / "words.dict", raven_text),
        write_file(tmp_path / "lines.txt", "U1 QUOTH THE RAVEN\nU2 NEVERMORE\n"),
    )


def one_word_corpus(directory, n_frames, dim=2):
    vmap = synthetic_map(1, 1)
    corpus = Corpus(
        vmap=vmap,
        dictionary=PronunciationDict({"W1": [("x01a",)]}),
        lines=[("L1", ["W1"])],
        frames={"L1": np.random.default_rng(0).normal(size=(n_frames, dim))},
    )
    return str(write_corpus(corpus, directory)), vmap


class TestMap:
    def test_writes_transcripts_and_counts(self, raven_files, tmp_path, capsys):
        dictionary, lines = raven_files
        out = tmp_path / "out"
        assert main(["map", "--dict", dictionary, "--transcripts", lines, "--out", str(out), "--threshold", "1"]) == 0
        labels = (out / "visemes.lab").read_text()
        assert "# U1" in labels and "# U2" in labels
        counts = (out / "viseme_counts.csv").read_text().splitlines()
        assert counts[0] == "viseme,count"
        assert (out / "merged_map.txt").exists()
        assert (out / "resolved_config.txt").exists()
        assert "2 transcripts" in capsys.readouterr().out

    def test_missing_dictionary(self, raven_files, tmp_path, capsys):
        _, lines = raven_files
        missing = str(tmp_path / "absent.dict")
        assert main(["map", "--dict", missing, "--transcripts", lines, "--out", str(tmp_path / "out")]) == 2
        assert missing in capsys.readouterr().err

    def test_out_of_vocabulary_word(self, raven_files, tmp_path, capsys):
        dictionary, _ = raven_files
        lines = write_file(tmp_path / "oov.txt", "U1 QUOTH THE CROW\n")
        assert main(["map", "--dict", dictionary, "--transcripts", lines, "--out", str(tmp_path / "out")]) == 1
        assert "CROW" in capsys.readouterr().err


def test_features_command(tmp_path):
    rows = np.random.default_rng(1).normal(size=(12, 4)) * [3.0, 1.0, 0.2, 0.1]
    observations = write_file(tmp_path / "obs.txt", "\n".join(" ".join(f"{v:.6f}" for v in row) for row in rows) + "\n")
    out = tmp_path / "out"
    assert main(["features", "--observations", observations, "--out", str(out)]) == 0
    frames = (out / "parameters.frames").read_text().splitlines()
    assert frames[0].startswith("#dim")
    assert len(frames) == 13
    assert (out / "linear_model.txt").exists()


def test_features_fraction_from_config(tmp_path, capsys):
    rows = np.random.default_rng(1).normal(size=(12, 4)) * [3.0, 1.0, 0.2, 0.1]
    observations = write_file(tmp_path / "obs.txt", "\n".join(" ".join(f"{v:.6f}" for v in row) for row in rows) + "\n")
    config = write_file(tmp_path / "recipe.txt", "fraction = 0.5\n")
    out = tmp_path / "out"
    assert main(["features", "--observations", observations, "--config", config, "--out", str(out)]) == 0
    model = (out / "linear_model.txt").read_text().splitlines()
    assert "retained_fraction 0.5" in model
    assert "modes 1" in model

    override = tmp_path / "override"
    argv = ["features", "--observations", observations, "--config", config, "--fraction", "1.0"]
    assert main([*argv, "--out", str(override)]) == 0
    assert "retained_fraction 1" in (override / "linear_model.txt").read_text().splitlines()
    assert "Training residual: 0.0000" in capsys.readouterr().out


def test_score_command(tmp_path, capsys):
    reference = write_file(tmp_path / "ref.lab", "# U1\n- - a\n- - b\n- - c\n")
    hypothesis = write_file(tmp_path / "hyp.lab", "# U1\n- - a\n- - x\n- - sp\n- - b\n- - c\n")
    out = tmp_path / "out"
    assert main(["score", "--reference", reference, "--hypothesis", hypothesis, "--out", str(out)]) == 0
    assert "%Corr=100.00, Acc=66.67 [H=3, D=0, S=0, I=1, N=3]" in capsys.readouterr().out
    confusion = ConfusionMatrix.from_csv((out / "confusion.csv").read_text())
    assert confusion.labels == ["a", "b", "c", "x"]
    assert confusion.insertions.tolist() == [0, 0, 0, 1]


@pytest.mark.parametrize("body", ["zero 5 v01\n", "0 5 v01\n3 8 v02\n"])
def test_score_rejects_malformed_labels(tmp_path, capsys, body):
    reference = write_file(tmp_path / "ref.lab", "# U1\n0 5 v01\n5 8 v02\n")
    hypothesis = write_file(tmp_path / "hyp.lab", "# U1\n" + body)
    assert main(["score", "--reference", reference, "--hypothesis", hypothesis, "--out", str(tmp_path / "out")]) == 1
    assert hypothesis in capsys.readouterr().err


def test_analyze_two_feature_types(tmp_path, capsys):
    shape = ConfusionMatrix(list("abcd"), np.array([[5, 1, 0, 0], [0, 4, 2, 0], [1, 0, 3, 1], [0, 0, 0, 2]]))
    appearance = ConfusionMatrix(list("abcd"), np.array([[2, 0, 0, 0], [1, 5, 0, 0], [0, 0, 4, 0], [1, 1, 1, 3]]))
    paths = {}
    for name, matrix in (("shape", shape), ("appearance", appearance)):
        paths[name] = [write_file(tmp_path / f"{name}{k}.csv", matrix.to_csv()) for k in (1, 2)]
    out = tmp_path / "out"
    argv = ["analyze", "--feature", "shape", *paths["shape"], "--feature", "appearance", *paths["appearance"]]
    argv += ["--out", str(out)]
    assert main(argv) == 0
    for name in ("probabilities_shape.csv", "ranking_appearance.csv", "correlations.csv", "table.txt", "summary.txt"):
        assert (out / name).exists()
    table = (out / "table.txt").read_text().splitlines()
    assert [row.split()[0] for row in table] == ["shape", "appearance"]
    assert "[ranking shape]" in capsys.readouterr().out


def test_decode_with_wrong_model_dimension(tmp_path, capsys):
    manifest, vmap = one_word_corpus(tmp_path / "corpus", 20, dim=3)
    models = flat_start(vmap.ids, 1, 1, np.random.default_rng(2).normal(size=(30, 2)))
    model_file = write_file(tmp_path / "models.txt", save_model_set(models))
    assert main(["decode", "--corpus", manifest, "--models", model_file, "--out", str(tmp_path / "out")]) == 3
    assert "Dimension mismatch" in capsys.readouterr().err


def test_decode_of_too_short_line(tmp_path):
    manifest, vmap = one_word_corpus(tmp_path / "corpus", 1)
    models = flat_start(vmap.ids, 1, 1, np.random.default_rng(3).normal(size=(30, 2)))
    model_file = write_file(tmp_path / "models.txt", save_model_set(models))
    assert main(["decode", "--corpus", manifest, "--models", model_file, "--out", str(tmp_path / "out")]) == 4


def synth_and_run(tmp_path, name):
    spec = write_file(tmp_path / "synth.txt", SMALL_SYNTH)
    config = write_file(tmp_path / "recipe.txt", QUICK_CONFIG)
    corpus = tmp_path / f"corpus_{name}"
    out = tmp_path / f"results_{name}"
    assert main(["synth", "--spec", spec, "--seed", "7", "--out", str(corpus)]) == 0
    argv = ["run", "--corpus", str(corpus / "manifest.txt"), "--config", config, "--seed", "7", "--jobs", "1"]
    argv += ["--out", str(out)]
    assert main(argv) == 0
    return out


@pytest.mark.slow
def test_synthesize_then_run(tmp_path):
    out = synth_and_run(tmp_path, "one")
    scores = (out / "scores.csv").read_text().splitlines()
    assert scores[0] == "fold,N,H,D,S,I,correctness,accuracy"
    assert len(scores) == 6
    assert (out / "fold_3" / "confusion.csv").exists()
    assert (out / "analysis" / "summary.txt").exists()


@pytest.mark.slow
def test_runs_are_reproducible(tmp_path):
    first = synth_and_run(tmp_path, "one")
    second = synth_and_run(tmp_path, "two")
    files = sorted(p.relative_to(first) for p in first.rglob("*") if p.is_file())
    assert files == sorted(p.relative_to(second) for p in second.rglob("*") if p.is_file())
    for name in files:
        assert (first / name).read_bytes() == (second / name).read_bytes()


@pytest.mark.slow
def test_train_then_align_and_decode(tmp_path):
    spec = write_file(tmp_path / "synth.txt", SMALL_SYNTH)
    config = write_file(tmp_path / "recipe.txt", QUICK_CONFIG)
    corpus = tmp_path / "corpus"
    assert main(["synth", "--spec", spec, "--seed", "3", "--out", str(corpus)]) == 0
    manifest = str(corpus / "manifest.txt")

    trained = tmp_path / "trained"
    assert main(["train", "--corpus", manifest, "--config", config, "--out", str(trained)]) == 0
    models = str(trained / "models.txt")
    for name in ("models.txt", "viseme_map.txt", "aligned.lab", "trace.log"):
        assert (trained / name).exists()

    aligned = tmp_path / "aligned"
    assert main(["align", "--corpus", manifest, "--models", models, "--config", config, "--out", str(aligned)]) == 0
    headers = [line for line in (aligned / "aligned.lab").read_text().splitlines() if line.startswith("# ")]
    assert len(headers) == 30

    decoded = tmp_path / "decoded"
    assert main(["decode", "--corpus", manifest, "--models", models, "--config", config, "--out", str(decoded)]) == 0
    assert len((decoded / "recognized.txt").read_text().splitlines()) == 30
    assert (decoded / "network.txt").exists()


def test_run_with_an_aborted_fold_exits_nonzero(tmp_path, capsys):
    lines = [("L1", ["W1"]), ("L2", ["PAUSE"]), ("L3", ["PAUSE"])]
    rng = np.random.default_rng(5)
    corpus = Corpus(
        vmap=synthetic_map(1, 1),
        dictionary=PronunciationDict({"W1": [("x01a",)], "PAUSE": [("sil",)]}),
        lines=lines,
        frames={uid: rng.normal(size=(40, 2)) for uid, _ in lines},
    )
    manifest = str(write_corpus(corpus, tmp_path / "corpus"))
    # Fold 1 trains on PAUSE lines only, so nothing survives the merge
    folds = write_file(
        tmp_path / "folds.txt",
        "n_lines 3\ntest_size 1\nseed 0\nfold 1 test 0\nfold 1 train 1 2\nfold 2 test 1\nfold 2 train 0 2\n",
    )
    config = write_file(tmp_path / "recipe.txt", QUICK_CONFIG)
    out = tmp_path / "results"
    argv = ["run", "--corpus", manifest, "--config", config, "--folds", folds, "--threshold", "1"]
    assert main(argv + ["--jobs", "1", "--out", str(out)]) == 1
    assert "1 of 2 folds aborted" in capsys.readouterr().err
    assert "aborted" in (out / "fold_1" / "trace.log").read_text()
    assert (out / "fold_2" / "report.txt").exists()
    assert "WORD: %Corr=" in (out / "fold_2" / "word_report.txt").read_text()
    assert len((out / "scores.csv").read_text().splitlines()) == 2
