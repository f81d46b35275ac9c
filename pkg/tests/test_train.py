import csv
import json
import numpy as np
import pytest
import torch

from adaptmask.checkpoint import CheckpointError, HEADER, load_checkpoint
from adaptmask.config import TrainConfig, from_flat, load_config, to_flat, write_config
from adaptmask.masking import random_mask_budget
from adaptmask.train import (CSV_COLUMNS, Run, Streams, UnlabeledBatch, evaluate, evaluate_records,
                             fit, heatmap_geometry, read_metrics, restore_state, save_state,
                             train_step)
from conftest import tiny_config


def _steps(cfg, data, n=3, run=None):
    run = run or Run(cfg, data)
    out = []
    for idx in run.unlabeled_batches()[:n]:
        unl = UnlabeledBatch(run.unl_images[idx], list(idx), idx)
        bundle, diag = train_step(run.model, run.optimizer, run.labeled_batch(), unl, cfg,
                                  run.streams, 1.0)
        out.append((bundle, diag))
    return run, out


class CountingForward:
    def __init__(self, model):
        self.n = 0
        model.register_forward_hook(lambda *a: self._hit())

    def _hit(self):
        self.n += 1


def test_supervised_step_skips_unlabeled(tiny_data):
    cfg = tiny_config(train__method="supervised")
    run = Run(cfg, tiny_data)
    calls = CountingForward(run.model)
    _, out = _steps(cfg, tiny_data, 1, run)
    bundle, diag = out[0]
    assert bundle.l_u == 0 and bundle.l_m == 0 and bundle.total == bundle.l_s
    assert calls.n == 1 and "mask_counts" not in diag


def test_adaptive_mixup_runs_all_branches(tiny_data):
    cfg = tiny_config(train__method="adaptive+mixup")
    run = Run(cfg, tiny_data)
    calls = CountingForward(run.model)
    _, out = _steps(cfg, tiny_data, 1, run)
    bundle, diag = out[0]
    assert calls.n == 4  # supervised, teacher, masked student, mixed student
    assert bundle.l_u > 0 and bundle.l_m > 0
    assert diag["mix_location"] == "stage-3" and len(diag["budgets"]) == 8


def test_single_uses_random_counts(tiny_data):
    cfg = tiny_config(train__method="single")
    run = Run(cfg, tiny_data)
    mirror = Streams(cfg.seed)
    _, out = _steps(cfg, tiny_data, 2, run)
    # the first step's counts are the mask stream's first draws, whatever the teacher says
    expected = [random_mask_budget(16, cfg.mask, mirror.mask).count for _ in range(8)]
    assert out[0][1]["mask_counts"] == expected
    assert all(0 <= c <= cfg.mask.m for _, d in out for c in d["mask_counts"])
    assert all(b.n_simple == 0 and not b.extreme for b in out[0][1]["budgets"])


def test_steps_are_deterministic(tiny_data):
    cfg = tiny_config()
    _, a = _steps(cfg, tiny_data, 3)
    _, b = _steps(cfg, tiny_data, 3)
    assert [x[0].as_row() for x in a] == [x[0].as_row() for x in b]


def test_total_loss_accounting(tiny_data):
    cfg = tiny_config(loss__lambda_u=0.7, mixup__lambda_m=0.4)
    _, out = _steps(cfg, tiny_data, 3)
    for bundle, _ in out:
        assert bundle.tensor.item() == bundle.total
        assert abs(bundle.total - (bundle.l_s + 0.7 * bundle.l_u + 0.4 * bundle.l_m)) < 1e-9


def test_branch_isolation(tiny_data):
    """Turning extra branches on never changes what the shared branches compute."""
    rows = {}
    for method in ("supervised", "adaptive", "adaptive+mixup"):
        _, out = _steps(tiny_config(train__method=method), tiny_data, 1)
        rows[method] = out[0][0]
    assert rows["supervised"].l_s == rows["adaptive"].l_s == rows["adaptive+mixup"].l_s
    assert rows["adaptive"].l_u == rows["adaptive+mixup"].l_u


def test_pseudo_threshold_gates_consistency(tiny_data):
    # no teacher peak reaches 2.0, so every joint is left out of L_u
    _, out = _steps(tiny_config(train__method="adaptive", loss__pseudo_threshold=2.0), tiny_data, 1)
    assert out[0][0].l_u == 0.0 and out[0][0].l_s > 0


def test_unsupervised_weight_ramp(tiny_data):
    run = Run(tiny_config(loss__warmup_epochs=2.0), tiny_data)
    n = run.steps_per_epoch
    assert run.ramp(0) == pytest.approx(1 / (2 * n))
    assert run.ramp(n - 1) == pytest.approx(0.5)
    assert run.ramp(2 * n - 1) == 1.0 and run.ramp(10 * n) == 1.0
    assert Run(tiny_config(loss__warmup_epochs=0), tiny_data).ramp(0) == 1.0


def test_lr_schedule():
    cfg = TrainConfig()
    assert cfg.lr_at(0) == 1e-3 and cfg.lr_at(19) == 1e-3
    assert cfg.lr_at(20) == 1e-4 and cfg.lr_at(22) == 1e-4
    assert cfg.lr_at(25) == 1e-5 and cfg.lr_at(29) == 1e-5
    with pytest.raises(ValueError):
        TrainConfig(lr_drops=[(5, 1e-4), (5, 1e-5)])
    with pytest.raises(ValueError):
        TrainConfig(method="teacher-only")


def test_config_file_round_trip(tmp_path):
    cfg = tiny_config(train__method="single", mixup__location="random")
    path = write_config(cfg, tmp_path / "c.cfg")
    assert to_flat(load_config(path)) == to_flat(cfg)
    assert load_config(path, {"data.labels": 3}).data.labels == 3
    with pytest.raises(KeyError):
        from_flat({"train.nonsense": 1})


def test_default_config_file_matches_defaults():
    from pathlib import Path
    path = Path(__file__).resolve().parents[1] / "configs" / "default.cfg"
    assert to_flat(load_config(path)) == to_flat(TrainConfig())


def _csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_zero_epochs_gives_initial_evaluation(tmp_path, tiny_data):
    fit(tiny_config(train__epochs=0), tmp_path, tiny_data)
    rows = _csv(tmp_path / "metrics.csv")
    assert rows[0] == list(CSV_COLUMNS)
    assert len(rows) == 2 and rows[1][0] == "0"
    assert (tmp_path / "config.json").exists() and (tmp_path / "ckpt-last").exists()


def test_run_directory_contents(tmp_path, tiny_data):
    fit(tiny_config(train__epochs=2), tmp_path, tiny_data)
    rows = read_metrics(tmp_path)
    assert [r["epoch"] for r in rows] == [0, 1, 2]
    assert all(r["pck_total"] is not None for r in rows)
    assert rows[1]["mean_mask_count"] is not None
    diag = [json.loads(ln) for ln in (tmp_path / "diagnostics.jsonl").read_text().splitlines()]
    assert [d["epoch"] for d in diag] == [1, 2]
    assert sum(diag[0]["mask_count_hist"]) == 30  # every unlabeled sample once per epoch
    assert (tmp_path / "ckpt-best").exists()


def test_resume_matches_uninterrupted(tmp_path, tiny_data):
    cfg = tiny_config(train__epochs=9, train__lr_drops=[[6, 1e-4], [8, 1e-5]])
    fit(cfg, tmp_path / "a", tiny_data)
    fit(cfg, tmp_path / "b", tiny_data, stop_after=7)
    assert [r["epoch"] for r in read_metrics(tmp_path / "b")][-1] == 7
    fit(cfg, tmp_path / "b", tiny_data, resume=True)
    assert (tmp_path / "a" / "metrics.csv").read_bytes() == (tmp_path / "b" / "metrics.csv").read_bytes()
    assert ((tmp_path / "a" / "diagnostics.jsonl").read_bytes()
            == (tmp_path / "b" / "diagnostics.jsonl").read_bytes())


def test_checkpoint_round_trip_step(tmp_path, tiny_data):
    cfg = tiny_config()
    run, _ = _steps(cfg, tiny_data, 2)
    save_state(tmp_path / "ck", run.model, run.optimizer, cfg, 0, run.streams, None, K=16)
    idx = np.arange(8)
    lab = run.labeled_batch()
    state = run.streams.state()
    a, _ = train_step(run.model, run.optimizer, lab, UnlabeledBatch(run.unl_images[idx], [], idx),
                      cfg, run.streams)
    fresh = Run(cfg, tiny_data)
    restore_state(tmp_path / "ck", fresh.model, fresh.optimizer, fresh.streams)
    fresh.streams.restore(state)  # the labeled draw above happened after the save
    b, _ = train_step(fresh.model, fresh.optimizer, lab, UnlabeledBatch(fresh.unl_images[idx], [], idx),
                      cfg, fresh.streams)
    assert a.as_row() == b.as_row()
    for p, q in zip(run.model.parameters(), fresh.model.parameters()):
        assert torch.equal(p, q)


def test_checkpoint_layout(tmp_path, tiny_data):
    fit(tiny_config(train__epochs=1), tmp_path, tiny_data)
    raw = (tmp_path / "ckpt-last").read_bytes()
    assert raw.startswith(HEADER)
    arrays, meta = load_checkpoint(tmp_path / "ckpt-last")
    assert meta["epoch"] == 1 and meta["joints"] == 16
    assert any(k.startswith("model/") for k in arrays) and any(k.startswith("optim/") for k in arrays)
    assert all(a.dtype == np.float32 for a in arrays.values())


def test_incompatible_checkpoint_aborts_resume(tmp_path, tiny_data):
    cfg = tiny_config(train__epochs=2)
    (tmp_path / "ckpt-last").write_bytes(b"SOMETHING-ELSE-1\n" + b"\0" * 32)
    with pytest.raises(CheckpointError):
        fit(cfg, tmp_path, tiny_data, resume=True)


def test_resume_with_other_config_aborts(tmp_path, tiny_data):
    fit(tiny_config(train__epochs=1), tmp_path, tiny_data)
    with pytest.raises(CheckpointError):
        fit(tiny_config(train__epochs=2, loss__lambda_u=2.0), tmp_path, tiny_data, resume=True)


def test_pseudo_pose_freezes_bank(tmp_path, tiny_data):
    cfg = tiny_config(train__method="pseudo-pose", train__epochs=2)
    fit(cfg, tmp_path, tiny_data)
    rows = read_metrics(tmp_path)
    assert rows[1]["l_u"] == 0 and rows[2]["l_u"] > 0
    arrays, _ = load_checkpoint(tmp_path / "ckpt-last")
    assert arrays["extra/pseudo_bank"].shape == (30, 16, 16, 16)


def test_evaluate_is_deterministic_and_checks_joints(tmp_path, tiny_data):
    from adaptmask.data import save_synthetic
    fit(tiny_config(train__epochs=1), tmp_path / "run", tiny_data)
    save_synthetic(tmp_path / "data", {"val": tiny_data["val"]})
    a = evaluate(tmp_path / "run" / "ckpt-last", tmp_path / "data", "pck")
    b = evaluate(tmp_path / "run" / "ckpt-last", tmp_path / "data", "pck")
    assert json.dumps(a, sort_keys=True) == json.dumps(b, sort_keys=True)
    oks_res = evaluate(tmp_path / "run" / "ckpt-last", tmp_path / "data", "oks")
    assert set(oks_res) == {"ap", "ap50", "ap75", "ar"}


def test_joint_count_mismatch(tiny_data):
    from adaptmask.train import model_for
    model = model_for(tiny_config(), 17)
    with pytest.raises(ValueError):
        evaluate_records(model, tiny_data["val"], 4.0)


def test_untrained_model_ap_is_near_zero():
    from adaptmask.data import make_synthetic_dataset
    from adaptmask.train import model_for
    torch.manual_seed(0)
    cfg = TrainConfig()
    val = make_synthetic_dataset(1, 200, seed=0)["val"]
    res = evaluate_records(model_for(cfg, 16), val, heatmap_geometry(cfg)[1], ("oks",))
    assert res["ap"] < 0.05


def test_overfit_signal(tmp_path):
    """A model memorizing a few labels scores higher on them than on held-out data."""
    from adaptmask.data import make_synthetic_dataset
    from adaptmask.train import load_model
    cfg = tiny_config(train__method="supervised", data__train_count=8, data__labels=8,
                      train__epochs=400, train__lr_drops=[], train__eval_every=400,
                      aug__weak__rotation_max=0.0, aug__weak__scale_range=[1.0, 1.0],
                      data__sigma=1.5)
    data = make_synthetic_dataset(8, 40, seed=3, occlusion_frac=0.0, low_contrast_frac=0.0)
    fit(cfg, tmp_path, data)
    model, _, _ = load_model(tmp_path / "ckpt-last")
    stride = heatmap_geometry(cfg)[1]
    train_ap = evaluate_records(model, data["train"], stride, ("oks",))["ap"]
    val_ap = evaluate_records(model, data["val"], stride, ("oks",))["ap"]
    assert train_ap > val_ap


def test_nan_loss_dumps_state(tmp_path, tiny_data, monkeypatch):
    import adaptmask.train as tr
    real = tr.supervised_loss
    monkeypatch.setattr(tr, "supervised_loss", lambda *a, **k: real(*a, **k) * float("nan"))
    with pytest.raises(tr.NonFiniteLossError):
        fit(tiny_config(train__epochs=1), tmp_path, tiny_data)
    assert (tmp_path / "ckpt-failed").exists()
    ids = json.loads((tmp_path / "failed-batch.json").read_text())
    assert len(ids["labeled_ids"]) == 8 and len(ids["unlabeled_ids"]) == 8
