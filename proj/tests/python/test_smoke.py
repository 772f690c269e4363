# SPDX-License-Identifier: Apache-2.0
import math
from pathlib import Path

import pytest

import cordlab

DATA = Path(__file__).resolve().parents[1] / "data"


def test_loss_values():
    assert cordlab.jsd([1.0, 0.0], [0.0, 1.0]) == pytest.approx(math.log(2), abs=1e-12)
    assert cordlab.jsd([0.5, 0.5], [0.25, 0.75]) == pytest.approx(0.033822, abs=1e-6)
    assert cordlab.nll([[0.25] * 4], [2]) == pytest.approx(math.log(4), abs=1e-12)


def test_perturbations():
    ctx = [([i], float(8 - i)) for i in range(8)]
    assert cordlab.interpolate_perturb(ctx, 0.0, 3) == ctx
    out = cordlab.interpolate_perturb(ctx, 0.5, 3)
    assert out[:4] == ctx[:4]
    assert sorted(out[4:], key=lambda c: -c[1]) == ctx[4:]
    assert sorted(cordlab.full_shuffle(ctx, 9), key=lambda c: -c[1]) == ctx
    assert cordlab.tail_size(10, 0.5) == 5
    assert cordlab.score_aware_alpha([0.9, 0.85, 0.5, 0.45, 0.4]) == pytest.approx(0.6)


def test_experiment_pipeline(tmp_path):
    exp = cordlab.Experiment.from_file(DATA / "tiny_cord.json")
    data = exp.generate()
    assert len(data.train) == 24 and len(data.test) == 12
    inst = data.train[0]
    assert inst.answer[0] in [c[0][1] for c in inst.contexts]
    base = exp.base_model(data)
    run = exp.finetune(data, base)
    assert len(run.losses) == 6
    assert 0.0 <= run.pairing_ratio <= 1.0
    assert run.mean_alpha == pytest.approx(0.5)
    report = exp.evaluate(run.model, data, run)
    assert 0.0 <= report["test"]["exact_match"] <= 1.0
    assert report["pairing_ratio"] == pytest.approx(run.pairing_ratio)

    again = exp.finetune(data, base)
    run.model.save(tmp_path / "a.ckpt")
    again.model.save(tmp_path / "b.ckpt")
    assert (tmp_path / "a.ckpt").read_bytes() == (tmp_path / "b.ckpt").read_bytes()
    loaded = cordlab.Model.load(tmp_path / "a.ckpt")
    assert loaded.decode(inst) == run.model.decode(inst)

    teacher = cordlab.select_teacher(base, inst, 0.5, 4)
    assert teacher["which"] in ("interp", "full")


def test_dataset_round_trip(tmp_path):
    data = cordlab.Experiment.from_file(DATA / "tiny_none.json").generate()
    data.idk_test.save(tmp_path / "idk.jsonl")
    back = cordlab.load_dataset(tmp_path / "idk.jsonl", data.idk_test.vocab_size)
    assert len(back) == len(data.idk_test)
    assert back[0].scenario == "multi_needle_idk"
    assert back[0].gold_ranks == []


def test_config_errors_name_the_field():
    with pytest.raises(cordlab.ConfigError, match="train.lamda"):
        cordlab.Experiment.from_file(DATA / "unknown_key.json")
    with pytest.raises(cordlab.ConfigError, match="data.needles"):
        cordlab.Experiment.from_file(DATA / "bad_needles.json")


def test_seed_changes_hash():
    exp = cordlab.Experiment.from_file(DATA / "tiny_cord.json")
    h = exp.config_hash()
    exp.seed = 99
    assert exp.config_hash() != h
