import json
import math
import struct

import pytest

import codesign


def test_episode_protocol():
    env = codesign.Environment("push")
    obs = env.reset([18.0, 17.0], seed=3)
    assert obs["phase"] == "design"
    assert obs["design"] == [0.0] * 5
    with pytest.raises(codesign.ProtocolError):
        env.step_control([0.0, 0.0])
    obs, reward, done, info = env.step_design([0.1, 0.0, -0.2, 0.3, 0.0])
    assert obs["phase"] == "control"
    assert not done
    steps = 0
    while not done:
        obs, reward, done, info = env.step_control([0.0, 1.0])
        steps += 1
        assert math.isfinite(reward)
    assert steps <= 150


def test_scoop_goal_is_validated():
    env = codesign.Environment("scoop")
    with pytest.raises(ValueError):
        env.reset([8.0])


def test_tradeoff_reward_formula():
    k, a, d, c, dm, cm = 2.0, 0.3, 4.0, 1.5, 9.0, 8.0
    want = k * (1 - (a * d / dm + (1 - a) * c / cm))
    assert codesign.tradeoff_reward(k, a, d, c, dm, cm) == pytest.approx(want, abs=1e-12)


def test_stl_bytes():
    data = codesign.export_stl([2.0, 1.5, 1.0], [0.4, -0.2])
    (n,) = struct.unpack_from("<I", data, 80)
    assert len(data) == 84 + 50 * n
    assert n == 3 * 12
    assert data == codesign.export_stl([2.0, 1.5, 1.0], [0.4, -0.2])


def test_cma_sphere():
    cma = codesign.Cma([1.0, -1.0, 0.5], population=12, sigma0=0.5)
    for g in range(150):
        cands = cma.ask(seed=g)
        cma.tell(cands, [-sum(x * x for x in c) for c in cands])
    assert cma.best_fitness > -1e-8


def test_train_and_export(tmp_path):
    cfg = {
        "task": "push",
        "seeds": [0],
        "total_steps": 600,
        "batch_size": 300,
        "minibatch_size": 150,
        "hidden": [8, 8],
        "value_hidden": [8, 8],
        "eval_every": 1,
        "out": str(tmp_path / "run"),
    }
    out = codesign.train(cfg)
    assert (out / "aggregate_eval.csv").exists()
    header = (out / "seed_0" / "metrics.csv").read_text().splitlines()[0]
    assert header == "env_steps,mean_return,success_rate,approx_kl,entropy,mean_d_used,mean_c_used"
    ckpt = out / "seed_0" / "checkpoint.json"
    cfg["out"] = str(tmp_path / "tool")
    stl, rec = codesign.export_tool(cfg, ckpt, [18.0, 17.0])
    record = json.loads(rec.read_text())
    assert set(record) == {"task", "goal", "lengths", "angles_rad", "seed"}
    assert stl.stat().st_size > 84
