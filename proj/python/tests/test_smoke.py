import cmath
import math

import numpy as np
import pytest

import ntncollab as n


def test_steering_unit_norm_and_phase():
    v = n.steering(2, 3, 0.5, 1.0, (1.1, 0.7))
    assert v.shape == (6,)
    assert np.linalg.norm(v) == pytest.approx(1.0, abs=1e-12)
    kd = math.pi
    want = cmath.exp(1j * kd * (1 * math.sin(0.7) * math.cos(1.1) + 2 * math.cos(0.7))) / math.sqrt(6)
    assert v[5] == pytest.approx(want, abs=1e-12)


def test_rate_shannon():
    assert n.rate(1.0, 180e3) == pytest.approx(180e3)
    assert n.rate(3.0, 1.0) == pytest.approx(2.0)


def test_greedy_alloc_takes_fewest_groups():
    assert n.greedy_alloc([5.0, 3.0, 1.0], 6.0) == 0b011
    assert n.greedy_alloc([5.0, 3.0, 1.0], 0.0) == 0
    assert n.greedy_alloc([5.0, 3.0, 1.0], 100.0) == 0b111


def test_moving_average_and_utility():
    assert n.moving_average([1, 2, 3, 4], 2) == pytest.approx([1, 1.5, 2.5, 3.5])
    u = n.weighted_utility([(1, 1, 1), (3, 1, 5)], (1 / 3, 1 / 3, 1 / 3))
    assert u == pytest.approx([0.0, 2 / 3])


def test_config_errors_name_the_path():
    with pytest.raises(n.ConfigError, match=r"\$\.env"):
        n.config({"env": {"num_groups": 0}})
    with pytest.raises(n.InvalidArgument):
        n.config({"episodes": -1})
    assert issubclass(n.ConfigError, ValueError)


def test_environment_two_time_scales():
    cfg = n.desk_config()
    env = n.Environment(cfg["env"])
    env.reset(5)
    assert env.at_cycle_boundary
    with pytest.raises(n.InvalidState):
        env.step_low(3, 3, 0b111)
    zero = env.num_offsets // 2
    slots = 0
    while not env.done:
        env.step_high(zero, zero, 0b111)
        for _ in range(cfg["env"]["time"]["slots_per_cycle"]):
            r = env.step_low(zero, zero, 0b011)
            slots += 1
        assert r["cycle_complete"]
    assert slots == cfg["env"]["time"]["total_slots"]
    trace = env.trace()
    assert len(trace) == slots
    assert all(t["groups"] & ~0b011 == 0 for t in trace)
    assert all(t["omega"] <= 0 for t in trace)


def test_run_scheme_is_deterministic():
    cfg = n.desk_config()
    a = n.run_scheme("pbu-greedy", cfg, seed=3, episodes=2)
    b = n.run_scheme("pbu-greedy", cfg, seed=3, episodes=2)
    assert a == b
    assert a["decision_proxy"] == cfg["env"]["num_rbs"]
    assert len(a["episode_error"]) == 2


def test_proposed_scheme_trains():
    m = n.run_scheme("proposed", n.desk_config(), seed=1, episodes=1, train_episodes=2)
    assert len(m["training_low_return"]) == 2
    assert m["satisfactory_error"] >= 0


def test_run_experiment_writes_bundle(tmp_path):
    cfg = n.desk_config(
        schemes=["pbu-greedy", "pbu-mab"],
        episodes=1,
        train_episodes=0,
        demand_units_mb=[10.0],
        output_dir=str(tmp_path),
    )
    files = n.run_experiment(cfg)
    names = {p.rsplit("/", 1)[-1] for p in files}
    assert "comparison.csv" in names
    assert all((tmp_path / name).exists() for name in names if "/" not in name)
