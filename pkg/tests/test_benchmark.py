import json
from dataclasses import replace

import numpy as np
import pytest

from evadkit.benchmark import (AblationConfig, BenchmarkConfig, benchmark_scenes, build_benchmark, noise_seed,
                               run_ablation)
from evadkit.cli import cmd_demo
from evadkit.config import standard_benchmark_config
from evadkit.features import DESCRIPTORS, FeatureEncoder, add_modality_noise

SMALL = BenchmarkConfig(n_train=6, n_test=4, n_frames=256, seed=11)


def test_scenes_are_determined_by_seed():
    a, b = benchmark_scenes(SMALL), benchmark_scenes(SMALL)
    assert a == b
    assert [n for n, _ in a["train"]] == [f"train_{i:03d}" for i in range(6)]
    assert sum(bool(s.anomalies) for _, s in a["test"]) == 2


def test_noise_seeds_do_not_collide():
    cfg = BenchmarkConfig()
    seeds = {noise_seed(cfg, "train", i) for i in range(cfg.n_train)} | \
            {noise_seed(cfg, "test", i) for i in range(cfg.n_test)}
    assert len(seeds) == cfg.n_train + cfg.n_test


def test_encoder_is_orthonormal_and_round_trips(rng):
    desc = [rng.standard_normal((10, len(DESCRIPTORS))) for _ in range(3)]
    enc = FeatureEncoder.fit(desc, 16, seed=2)
    assert enc.mixing @ enc.mixing.T == pytest.approx(np.eye(len(DESCRIPTORS)), abs=1e-12)
    again = FeatureEncoder.from_dict(json.loads(json.dumps(enc.to_dict())))
    assert np.array_equal(again.encode(desc[0]), enc.encode(desc[0]))
    assert add_modality_noise(desc[0], 0.0, 1) == pytest.approx(desc[0])


def test_demo_file_handoff_matches_in_memory_ablation(tmp_path):
    cfg = replace(standard_benchmark_config(SMALL.seed), benchmark=SMALL)
    report = cmd_demo(tmp_path / "demo", cfg=cfg)
    res = run_ablation(build_benchmark(SMALL), AblationConfig(seed=SMALL.seed))
    assert report["ablation_auc"] == res.auc
    assert report["teacher_auc"] == res.teacher_auc
    saved = json.loads((tmp_path / "demo" / "report.json").read_text())
    assert saved["auc"] == res.auc["+EDS+EDA+KD"]
    assert 0.0 <= saved["tiou"] <= 1.0
    assert str(tmp_path) not in (tmp_path / "demo" / "report.json").read_text()
