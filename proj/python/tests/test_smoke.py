import math

import pytest

import dcs_distill as dd


def tiny_config(tmp_path):
    return {
        "task": {"kind": "gaussian_mixture", "n_train": 60, "n_dev": 80, "n_classes": 2,
                 "n_features": 3, "separation": 2.5, "label_noise_rate": 0.1, "seed": 4},
        "architecture": {"kind": "mlp", "input_dim": 3, "hidden": [8], "n_classes": 2},
        "epochs": 3,
        "teacher_epochs": 2,
        "learning_rate": 0.01,
        "seeds": [1, 2],
        "output_dir": str(tmp_path),
    }


def test_kd_loss_matches_entropy_for_identical_logits():
    loss, per_sample = dd.kd_loss([[2.0, 0.0]], [[2.0, 0.0]])
    p = math.exp(2) / (math.exp(2) + 1)
    assert loss == pytest.approx(-(p * math.log(p) + (1 - p) * math.log(1 - p)), abs=1e-12)
    assert per_sample == [loss]


def test_weights_and_weighted_loss():
    w = dd.dcs_weights([0, 1, 1, 0], [0, 0, 1, 1], "dcs", 3.0)
    assert w == [1.0, 3.0, 1.0, 3.0]
    assert dd.dcs_weights([0, 1], [1, 0], "dcs-reverse", 3.0) == [1.0, 1.0]
    teacher = [[1.0, 0.0], [0.0, 1.0]]
    student = [[0.5, 0.0], [0.3, 0.0]]
    plain, per = dd.kd_loss(teacher, student)
    assert dd.weighted_kd_loss(teacher, student, [1.0, 1.0]) == pytest.approx(plain, abs=1e-14)
    assert dd.weighted_kd_loss(teacher, student, [1.0, 2.0]) == pytest.approx((per[0] + 2 * per[1]) / 2)
    assert dd.total_loss(1.0, 0.6, 0.5) == pytest.approx(0.8)


def test_metrics_and_errors():
    assert dd.matthews_correlation([0, 1, 0, 1], [0, 1, 0, 1], 2) == pytest.approx(1.0)
    assert dd.matthews_correlation([0, 0, 0], [0, 0, 0], 2) == 0.0
    with pytest.raises(dd.ConfigError):
        dd.kd_loss([[0.0, 1.0]], [[0.0, 1.0]], 0.0)
    with pytest.raises(ValueError):
        dd.normalize_config({"colour": "red"})


def test_session_end_to_end(tmp_path):
    session = dd.Session(tiny_config(tmp_path))
    assert session.n_train == 60 and session.n_dev == 80
    assert session.config["alpha"] == 0.5
    with pytest.raises(dd.ConfigError, match="train-teacher"):
        session.run("dcs")
    teacher_hash = session.train_teacher(str(tmp_path / "teacher"))
    assert session.teacher_hash == teacher_hash

    result = session.run("dcs", str(tmp_path / "run"))
    assert len(result["runs"]) == 2
    assert all(r["teacher_hash"] == teacher_hash for r in result["runs"])
    assert result["runs"][0]["epochs"][0]["boosted"] == 0
    assert (tmp_path / "run" / "metrics.csv").exists()

    rows = session.compare(str(tmp_path / "compare"))
    assert [r["strategy"] for r in rows] == ["vanilla", "kd", "dcs", "dcs-reverse", "dcs-random"]
    assert "dcs-reverse" in dd.report(str(tmp_path / "compare"))

    curve = session.sweep("lambda", [2.0, 4.0])
    assert [c["value"] for c in curve] == [2.0, 4.0]

    again = dd.Session(tiny_config(tmp_path))
    assert again.load_teacher(str(tmp_path / "teacher" / "teacher.json")) == teacher_hash
    assert again.run("dcs")["runs"][0]["student_hash"] == result["runs"][0]["student_hash"]

    preds = dd.predict(str(tmp_path / "teacher" / "teacher.json"), [[0.0, 0.0, 0.0], [5.0, 5.0, 5.0]])
    assert all(p in (0, 1) for p in preds)
