import math

import numpy as np
import pytest

import geoflow


def test_reward_worked_values():
    epe = geoflow.normalized_epe(np.array([[[6.0, 0.0]]]), np.array([[[4.0, 0.0]]]), 1.0)
    assert epe.shape == (1, 1)
    assert epe[0, 0] == pytest.approx(2 / 11, abs=1e-12)
    depth = geoflow.relative_depth_error(np.array([[2.2]]), np.array([[2.0]]), 1.0)
    assert depth[0, 0] == pytest.approx(0.2 / 3, abs=1e-12)
    q = geoflow.geo_quality(epe, depth)
    assert q[0, 0] == pytest.approx(9 / 11 * 14 / 15, abs=1e-12)
    assert geoflow.composite(0.5, -0.2, -0.4) == pytest.approx(-0.3, abs=1e-15)


def test_rigid_flow_pan():
    depth = np.full((20, 30), 2.0)
    T = np.hstack([np.eye(3), [[0.1], [0.0], [0.0]]])
    flow, valid = geoflow.rigid_flow(depth, [100.0, 100.0, 15.0, 10.0], T)
    assert flow.shape == (20, 30, 2)
    assert valid.all()
    np.testing.assert_allclose(flow[..., 0], 5.0, atol=1e-9)
    np.testing.assert_allclose(flow[..., 1], 0.0, atol=1e-9)


def test_sampler_and_advantages():
    x_next, mean, sigma_step = geoflow.sde_step([1.0], [-2.0], 0.5, 0.1, 1.0, [0.0])
    assert x_next[0] == pytest.approx(1.2, abs=1e-12)
    assert sigma_step > 0
    adv = geoflow.group_advantages([-0.1, -0.2, -0.3, -0.4])
    expected = [3 / math.sqrt(5), 1 / math.sqrt(5), -1 / math.sqrt(5), -3 / math.sqrt(5)]
    assert adv == pytest.approx(expected, abs=1e-12)


def test_epipolar_round_trip():
    rng = np.random.default_rng(3)
    K = np.array([[120.0, 0, 64], [0, 110.0, 48], [0, 0, 1]])
    theta = 0.05
    R = np.array([[math.cos(theta), 0, math.sin(theta)], [0, 1, 0], [-math.sin(theta), 0, math.cos(theta)]])
    t = np.array([0.2, -0.05, 0.03])
    X = np.column_stack([rng.uniform(-1, 1, 40), rng.uniform(-1, 1, 40), rng.uniform(2, 4, 40)])
    Y = X @ R.T + t
    a = (X @ K.T)[:, :2] / X[:, 2:]
    b = (Y @ K.T)[:, :2] / Y[:, 2:]
    F = geoflow.eight_point(a, b)
    assert F.shape == (3, 3)
    assert np.linalg.norm(F) == pytest.approx(1.0)
    per_pair, mean = geoflow.sampson_error(F, a, b)
    assert len(per_pair) == 40
    assert mean < 1e-10
    with pytest.raises(geoflow.GeoflowError):
        geoflow.eight_point(a[:5], b[:5])


def test_synth_and_score(tmp_path):
    clean = tmp_path / "clean"
    geoflow.synth(clean)
    report = geoflow.score_dir(clean)
    assert abs(report["r_video"]) < 1e-6
    wobbly = tmp_path / "wobbly"
    geoflow.synth(wobbly, perturbation={"wobble_px": 1.0}, seed=2)
    assert geoflow.score_dir(wobbly)["r_video"] < report["r_video"]
    with pytest.raises(ValueError):
        geoflow.score_dir(clean, config={"lambda": 2.0})
    with pytest.raises(geoflow.GeoflowError):
        geoflow.score_dir(tmp_path / "missing")


def test_train_toy_is_deterministic():
    cfg = {"iterations": 4, "seed": 1}
    a = geoflow.train_toy(cfg, pretrain_iterations=100)
    b = geoflow.train_toy(cfg, pretrain_iterations=100)
    assert not a["aborted"]
    assert len(a["metrics"]) == 4
    assert a == b
    with pytest.raises(ValueError):
        geoflow.train_toy({"grad_window": 11})
