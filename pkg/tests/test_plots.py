"""Plot writer tests: files appear, PNG magic, shape validation."""

import numpy as np
import pytest

from tripatch.errors import ShapeError
from tripatch.plots import (
    save_ablation_bars,
    save_loss_curves,
    save_score_timeline,
    save_sweep_curve,
)

PNG_MAGIC = b"\x89PNG\r\n\x1a\n"


def is_png(path):
    return path.read_bytes()[:8] == PNG_MAGIC


def test_score_timeline_written(tmp_path):
    scores = np.abs(np.random.default_rng(0).normal(size=400))
    labels = np.zeros(400, dtype=bool)
    labels[100:120] = True
    preds = scores > 1.5
    out = save_score_timeline(
        tmp_path / "scores.png", scores, threshold=1.5, labels=labels, predictions=preds
    )
    assert out.exists() and is_png(out)


def test_score_timeline_minimal_arguments(tmp_path):
    out = save_score_timeline(tmp_path / "bare.png", np.ones(10))
    assert is_png(out)


def test_score_timeline_rejects_misaligned_labels(tmp_path):
    with pytest.raises(ShapeError):
        save_score_timeline(tmp_path / "x.png", np.ones(10), labels=np.zeros(5, dtype=bool))


def test_score_timeline_rejects_2d_scores(tmp_path):
    with pytest.raises(ShapeError):
        save_score_timeline(tmp_path / "x.png", np.ones((4, 4)))


def test_loss_curves_written(tmp_path):
    out = save_loss_curves(
        tmp_path / "loss.png", {"encoder": [1.0, 0.5, 0.3], "finetune": [0.4, 0.2]}
    )
    assert is_png(out)


def test_loss_curves_reject_all_empty(tmp_path):
    with pytest.raises(ShapeError):
        save_loss_curves(tmp_path / "loss.png", {"encoder": []})


def test_ablation_bars_written(tmp_path):
    rows = [
        {"variant": "full", "f1": 0.95, "auc": 0.99},
        {"variant": "no_feature", "f1": 0.88, "auc": None},
        {"variant": "no_skip", "f1": 0.90, "auc": 0.97},
    ]
    out = save_ablation_bars(tmp_path / "ablate.png", rows)
    assert is_png(out)


def test_ablation_bars_reject_empty(tmp_path):
    with pytest.raises(ShapeError):
        save_ablation_bars(tmp_path / "ablate.png", [])


def test_sweep_curve_written(tmp_path):
    rows = [{"f1": 0.7, "auc": 0.9}, {"f1": 0.8, "auc": 0.95}, {"f1": 0.75, "auc": 0.93}]
    out = save_sweep_curve(tmp_path / "sweep.png", [1, 3, 5], rows)
    assert is_png(out)


def test_sweep_curve_rejects_length_mismatch(tmp_path):
    with pytest.raises(ShapeError):
        save_sweep_curve(tmp_path / "sweep.png", [1, 2], [{"f1": 0.5}])


def test_nested_output_directory_created(tmp_path):
    out = save_loss_curves(tmp_path / "a" / "b" / "loss.png", {"encoder": [1.0]})
    assert is_png(out)
