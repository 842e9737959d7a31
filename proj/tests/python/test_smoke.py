import math

import pytest

import rankdistill as rd


def small_dataset(seed=3):
    spec = rd.SyntheticSpec()
    spec.num_users, spec.num_items, spec.seq_len, spec.sharpness, spec.seed = 40, 25, 20, 5.0, seed
    return rd.synthetic_dataset(spec)


def test_metrics():
    ranked = [4, 1, 7, 2, 9]
    assert rd.precision_at(ranked, [1, 2], 3) == pytest.approx(1 / 3)
    assert rd.ndcg_at(ranked, [4], 1) == 1.0
    assert rd.average_precision(ranked, [1, 2]) == pytest.approx((1 / 2 + 2 / 4) / 2)


def test_weights():
    w = rd.position_weights(10)
    assert sum(w) == pytest.approx(1.0)
    assert all(a >= b for a, b in zip(w, w[1:]))
    cfg = rd.WeightConfig()
    cfg.mode = rd.WeightMode.UNIFORM
    assert rd.position_weights(4, cfg) == [0.25] * 4
    h, zero = rd.hybrid_weights([0.5, 0.5], [0.0, 0.0])
    assert zero and h == [0.0, 0.0]
    scores = [float(i) for i in range(100)]
    assert rd.estimate_rank(scores, 90, 99) == 10


def test_losses():
    value, grads = rd.pointwise_loss([(1, 0.0)], [(2, 0.0)])
    assert value == pytest.approx(2 * math.log(2))
    assert grads[1] == pytest.approx(-0.5) and grads[2] == pytest.approx(0.5)
    _, g = rd.distillation_loss([3, 4], [0.2, -1.0], [0.7, 0.3])
    assert all(v <= 0 for v in g.values())


def test_train_distill_evaluate():
    ds = small_dataset()
    cfg = rd.TrainConfig()
    cfg.epochs, cfg.seed = 3, 7
    teacher = rd.train_teacher(ds, 8, cfg)
    topk = rd.generate_topk(teacher.model, ds, 5)
    assert len(topk) == len(ds.train)
    cfg.alpha = 0.5
    student = rd.distill_train(ds, topk, 4, cfg)
    report = rd.evaluate(student.model, ds)
    assert 0.0 <= report.metrics["map"] <= 1.0
    assert report.parameter_count == rd.parameter_count(ds.num_users, ds.num_items, 4)
    again = rd.distill_train(ds, topk, 4, cfg)
    assert again.model == student.model


def test_checkpoint(tmp_path):
    m = rd.ScoringModel.random(5, 9, 3, seed=1, scale=0.1)
    m.save(tmp_path / "m")
    assert rd.ScoringModel.load(tmp_path / "m") == m


def test_errors(tmp_path):
    with pytest.raises(rd.ConfigError):
        rd.parse_run_config('{"nope": 1}')
    with pytest.raises(rd.IoError):
        rd.load_interactions(tmp_path / "missing.tsv")
    with pytest.raises(rd.ConfigError):
        rd.cmd_topk(rd.parse_run_config(), tmp_path)


def test_commands(tmp_path):
    cfg = rd.parse_run_config("", [
        "data.synthetic.num_users=60", "data.synthetic.num_items=30", "data.synthetic.seq_len=20",
        "train.epochs=2", "teacher.dim=8", "student.dim=4", "distill.K=5",
    ])
    text = rd.cmd_ingest(cfg, tmp_path)
    assert "interactions          1200" in text
    rd.cmd_train_teacher(cfg, tmp_path)
    rd.cmd_topk(cfg, tmp_path)
    rd.cmd_distill(cfg, tmp_path)
    report = rd.cmd_evaluate(cfg, tmp_path, "student_rd")
    assert (tmp_path / "eval" / "student_rd.json").exists()
    assert report.name == "student_rd"
