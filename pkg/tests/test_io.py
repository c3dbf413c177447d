import json
import shutil
import subprocess

import numpy as np
import pytest

from gzslkit import io
from gzslkit.data import ClassPartition, LabeledFeatureSet, ScoreMatrix, SemanticTable
from gzslkit.errors import ParseError, PartitionOverlap
from gzslkit.metrics import exact_gamma_sweep
from gzslkit.novelty import fit_gaussian_novelty, fit_loop_novelty
from gzslkit.scorers import train_linear_seen


def test_binary_features_round_trip_bit_exactly(tmp_path):
    rng = np.random.default_rng(0)
    X = rng.normal(size=(7, 3)) * 10.0 ** rng.integers(-300, 300, (7, 3))
    path = tmp_path / "x.bin"
    io.write_features(path, X)
    raw = path.read_bytes()
    assert raw[:4] == b"GZSL" and len(raw) == 16 + 8 * 21
    back = io.read_features(path)
    assert back.tobytes() == X.tobytes()


def test_csv_features_round_trip(tmp_path):
    X = np.random.default_rng(1).normal(size=(5, 4))
    path = tmp_path / "x.csv"
    io.write_features(path, X)
    np.testing.assert_allclose(io.read_features(path), X, rtol=0, atol=1e-9)


def test_truncated_inputs_name_the_row(tmp_path):
    path = tmp_path / "x.bin"
    io.write_features_bin(path, np.zeros((4, 3)))
    path.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(ParseError, match="row 3"):
        io.read_features(path)

    csv_path = tmp_path / "x.csv"
    csv_path.write_text("1,2,3\n4,5,6\n7,8\n")
    with pytest.raises(ParseError, match="row 2") as info:
        io.read_features(csv_path)
    assert info.value.line == 3

    bad = tmp_path / "bad.bin"
    bad.write_bytes(b"GZSL" + b"\x02\x00\x00\x00" + bytes(8))
    with pytest.raises(ParseError, match="version"):
        io.read_features(bad)


def test_labels_and_partition(tmp_path):
    io.write_labels(tmp_path / "y.txt", [3, 1, 2])
    np.testing.assert_array_equal(io.read_labels(tmp_path / "y.txt"), [3, 1, 2])
    (tmp_path / "bad.txt").write_text("1\nx\n")
    with pytest.raises(ParseError) as info:
        io.read_labels(tmp_path / "bad.txt")
    assert info.value.line == 2

    p = ClassPartition((4, 1), (7,))
    io.write_partition(tmp_path / "p.json", p)
    assert io.read_partition(tmp_path / "p.json") == p
    (tmp_path / "overlap.json").write_text('{"seen": [1, 2], "unseen": [2]}')
    with pytest.raises(PartitionOverlap):
        io.read_partition(tmp_path / "overlap.json")
    (tmp_path / "strings.json").write_text('{"seen": ["a"], "unseen": [2]}')
    with pytest.raises(ParseError):
        io.read_partition(tmp_path / "strings.json")


def test_semantics_round_trip(tmp_path):
    table = SemanticTable((5, 2), np.array([[0.1, 0.2], [1.0 / 3.0, -4.0]]))
    io.write_semantics(tmp_path / "s.csv", table)
    back = io.read_semantics(tmp_path / "s.csv")
    assert back.class_ids == (5, 2)
    np.testing.assert_array_equal(back.embeddings, table.embeddings)
    (tmp_path / "ragged.csv").write_text("0,1.0,2.0\n1,3.0\n")
    with pytest.raises(ParseError):
        io.read_semantics(tmp_path / "ragged.csv")


def test_score_and_curve_tables_round_trip(tmp_path):
    p = ClassPartition((0, 1), (2,))
    scores = ScoreMatrix(np.random.default_rng(2).normal(size=(6, 3)), p)
    io.write_scores_csv(tmp_path / "scores.csv", scores)
    back = io.read_scores_csv(tmp_path / "scores.csv", p)
    np.testing.assert_array_equal(back.scores, scores.scores)
    with pytest.raises(ParseError):
        io.read_scores_csv(tmp_path / "scores.csv", ClassPartition((1, 0), (2,)))

    curve = exact_gamma_sweep(scores, [0, 1, 2, 0, 2, 1])
    io.write_curve_csv(tmp_path / "curve.csv", curve)
    gammas, s, u = io.read_curve_csv(tmp_path / "curve.csv")
    np.testing.assert_array_equal(gammas, curve.gammas)
    np.testing.assert_array_equal(s, curve.acc_seen)
    np.testing.assert_array_equal(u, curve.acc_unseen)


def test_predictions_and_novelty_round_trip(tmp_path):
    io.write_predictions_csv(tmp_path / "a.csv", [3, 1, 2])
    np.testing.assert_array_equal(io.read_predictions_csv(tmp_path / "a.csv"), [3, 1, 2])
    top = np.array([[3, 1], [2, 3]])
    io.write_predictions_csv(tmp_path / "b.csv", top)
    np.testing.assert_array_equal(io.read_predictions_csv(tmp_path / "b.csv"), top)

    values = np.array([0.25, -1e-300, 7.0])
    io.write_novelty_csv(tmp_path / "n.csv", values)
    np.testing.assert_array_equal(io.read_novelty_csv(tmp_path / "n.csv"), values)
    (tmp_path / "gap.csv").write_text("sample_index,score\n0,1.0\n2,1.0\n")
    with pytest.raises(ParseError, match="out of sequence"):
        io.read_novelty_csv(tmp_path / "gap.csv")


def test_models_round_trip(tmp_path):
    rng = np.random.default_rng(3)
    labels = np.repeat([0, 1, 2], 10)
    X = rng.normal(size=(30, 4)) + labels[:, None]
    linear = train_linear_seen(LabeledFeatureSet(X, labels), 0.1)
    table = SemanticTable((0, 1, 2), np.eye(3, 4))
    models = [linear, fit_gaussian_novelty(X, labels, table), fit_loop_novelty(X, k=5)]
    for i, model in enumerate(models):
        path = tmp_path / f"m{i}.json"
        io.save_model(path, model)
        again = io.load_model(path)
        assert type(again) is type(model)
        assert again.to_dict() == model.to_dict()
    (tmp_path / "odd.json").write_text('{"format": "something-else"}')
    with pytest.raises(ParseError):
        io.load_model(tmp_path / "odd.json")


def test_dumps_stable():
    doc = {"b": [0.1, 1.0 / 3.0, np.float64(2.0)], "a": {"n": np.int64(3), "flag": True, "x": None},
           "edge": [np.inf, -np.inf, np.nan], "empty": []}
    text = io.dumps_stable(doc)
    assert text == io.dumps_stable(json.loads(json.dumps(doc, default=float)))
    parsed = json.loads(text)
    assert parsed["b"][1] == 1.0 / 3.0
    assert parsed["edge"] == ["inf", "-inf", "nan"]
    assert "0.33333333333333331" in text
    assert list(parsed) == ["b", "a", "edge", "empty"]
    with pytest.raises(TypeError):
        io.dumps_stable({"x": object()})


@pytest.mark.skipif(shutil.which("git") is None, reason="git not installed")
def test_content_hash_matches_git(tmp_path):
    path = tmp_path / "blob.txt"
    path.write_bytes(b"hello\n\x00binary")
    expected = subprocess.run(["git", "hash-object", str(path)], capture_output=True,
                              text=True, check=True).stdout.strip()
    assert io.content_hash(path) == expected
