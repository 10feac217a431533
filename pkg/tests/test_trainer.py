import math
from dataclasses import replace

import numpy as np
import pytest

from evadkit.attention import EDAConfig
from evadkit.distillation import KDConfig
from evadkit.sampling import EDSConfig
from evadkit.trainer import (MissingTeacherError, ToyModel, TrainConfig, VideoSample, forward, infer, mil_loss,
                             teacher_outputs, tie_class_head, topk_indices, train, video_objective)


def _video(rng, T=12, D=4, label=1, name="v", teacher=False, K=3):
    x = rng.standard_normal((T, D))
    ts = np.sort(rng.choice(10**6, T, replace=False)).astype(float)
    d = rng.random(T) + 0.05
    d /= d.sum()
    fl = np.zeros(T, dtype=int)
    if label:
        fl[T // 3: T // 3 + max(1, T // 4)] = 1
        x[fl == 1] += 1.5
    v = VideoSample(name, x, ts, d, label, fl)
    if teacher:
        v = replace(v, teacher_scores=rng.random(T), teacher_logits=rng.standard_normal((T, K)))
    return v


def test_zero_model_scores_one_half():
    m = ToyModel(np.zeros(3), 0.0, np.zeros((3, 2)), np.zeros(2))
    s, z = forward(m, np.ones((5, 3)), np.arange(5.0), np.full(5, 0.2))
    assert s.tolist() == [0.5] * 5
    assert np.all(z == 0)


def test_sharp_kernel_reduces_to_linear_scoring(rng):
    x = rng.standard_normal((6, 3))
    w = rng.standard_normal(3)
    m = ToyModel(w, 0.2, np.zeros((3, 2)), np.zeros(2), EDAConfig(lam=1e4, eps=1e-12))
    s, _ = forward(m, x, np.arange(6.0), np.full(6, 1 / 6))
    assert s == pytest.approx(1 / (1 + np.exp(-(x @ w + 0.2))), rel=1e-9)


def test_forward_is_deterministic(rng):
    m = ToyModel.init(4, 3, seed=1)
    v = _video(rng)
    a = forward(m, v.features, v.timestamps, v.densities)
    b = forward(m, v.features, v.timestamps, v.densities)
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])


def test_mil_examples():
    assert mil_loss(np.ones(8), 1)[0] == pytest.approx(0.0, abs=1e-9)
    assert mil_loss(np.full(8, 0.5), 0)[0] == pytest.approx(math.log(2), rel=1e-12)
    assert mil_loss([0.9, 0.1, 0.1], 1, topk_fraction=1 / 3)[0] == pytest.approx(0.10536051565782628, rel=1e-6)


def test_topk_size():
    assert topk_indices(np.arange(16.0), 1 / 16).tolist() == [15]
    assert topk_indices(np.arange(17.0), 1 / 16).tolist() == [16, 15]
    assert topk_indices(np.zeros(3), 1 / 16).tolist() == [0]


def _numeric(f, x, h=1e-5):
    g = np.zeros_like(x)
    for i in np.ndindex(x.shape):
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        g[i] = (f(xp) - f(xm)) / (2 * h)
    return g


def _rel_err(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-12)


@pytest.mark.parametrize("seed", range(10))
def test_mil_gradient(seed):
    rng = np.random.default_rng(seed)
    s = rng.uniform(0.05, 0.95, 20)
    label = int(seed % 2)
    _, g = mil_loss(s, label, 0.2)
    assert _rel_err(g, _numeric(lambda v: mil_loss(v, label, 0.2)[0], s)) < 1e-4


@pytest.mark.parametrize("seed", range(12))
def test_objective_gradients(seed):
    rng = np.random.default_rng(100 + seed)
    eda = EDAConfig(lam=float(rng.uniform(0.5, 3)), residual=bool(seed % 3 == 0)) if seed % 4 else None
    model = ToyModel.init(4, 3, seed=seed, scale=0.5, eda=eda)
    video = _video(rng, T=int(rng.integers(3, 16)), label=seed % 2, teacher=True)
    cfg = TrainConfig(topk_fraction=0.25, kd=KDConfig(alpha=0.7, beta=1.3, tau=1.5), kd_enabled=bool(seed % 2 == 0))
    _, grads = video_objective(model, video, cfg)
    params = model.params()
    for name, value in params.items():
        def f(v, name=name):
            p = dict(params)
            p[name] = v
            return video_objective(model.with_params(p), video, cfg)[0]["loss"]
        assert _rel_err(grads[name], _numeric(f, value.astype(float))) < 1e-4, name


def test_missing_teacher_is_an_error(rng):
    with pytest.raises(MissingTeacherError):
        train([_video(rng)], TrainConfig(epochs=1))


def test_zero_kd_weights_match_pure_mil(rng):
    data = [_video(rng, name=f"v{i}", label=i % 2, teacher=True) for i in range(6)]
    base = TrainConfig(lr=0.1, epochs=3, batch_size=2, eds=EDSConfig(sample_count=8, seed=1), seed=4)
    _, a = train(data, replace(base, kd=KDConfig(alpha=0.0, beta=0.0)))
    _, b = train(data, replace(base, kd_enabled=False), n_classes=3)
    assert [e.loss_mil for e in a] == [e.loss_mil for e in b]


def test_student_equal_to_teacher_has_zero_kd_terms(rng):
    teacher = tie_class_head(ToyModel.init(4, 2, seed=3, scale=0.5))
    videos = []
    for i in range(4):
        v = _video(rng, name=f"v{i}", label=i % 2)
        s, z = teacher_outputs(teacher, v)
        videos.append(replace(v, teacher_scores=s, teacher_logits=z))
    _, log = train(videos, TrainConfig(lr=1e-9, epochs=1, sampler="all"), model=teacher)
    assert log[0].loss_bin == pytest.approx(0.0, abs=1e-20)
    assert log[0].loss_multi == pytest.approx(0.0, abs=1e-12)


def test_training_is_bitwise_reproducible(rng):
    data = [_video(rng, name=f"v{i}", label=i % 2) for i in range(5)]
    cfg = TrainConfig(lr=0.2, epochs=4, batch_size=2, kd_enabled=False, eds=EDSConfig(sample_count=6), seed=9)
    m1, l1 = train(data, cfg, eval_set=data)
    m2, l2 = train(data, cfg, eval_set=data)
    assert l1 == l2
    assert np.array_equal(m1.w_bin, m2.w_bin)


def test_training_learns_a_separable_toy_task(rng):
    data = [_video(rng, T=24, name=f"v{i}", label=i % 2) for i in range(12)]
    cfg = TrainConfig(lr=0.5, epochs=30, batch_size=4, kd_enabled=False, sampler="all", topk_fraction=0.2)
    _, log = train(data, cfg, eval_set=data, eda=None)
    assert log[-1].auc > 0.9


def test_inference_needs_no_teacher(rng):
    v = _video(rng, teacher=True)
    m = ToyModel.init(4, 3)
    assert np.array_equal(infer(m, v.inference_input()), forward(m, v.features, v.timestamps, v.densities)[0])


def test_tied_head_reproduces_scores(rng):
    m = tie_class_head(ToyModel.init(4, 2, seed=2, scale=1.0))
    v = _video(rng)
    s, z = forward(m, v.features, v.timestamps, v.densities)
    assert 1 / (1 + np.exp(-(z[:, 1] - z[:, 0]))) == pytest.approx(s, rel=1e-12)


def test_model_dict_round_trip():
    m = ToyModel.init(5, 3, seed=4, eda=EDAConfig(lam=2.0))
    assert ToyModel.from_dict(m.to_dict()).to_dict() == m.to_dict()
