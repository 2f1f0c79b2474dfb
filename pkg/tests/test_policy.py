import json

import numpy as np
import pytest

from safenav.policy import (
    Adam,
    PolicyNetwork,
    act_deterministic,
    act_stochastic,
    forward,
    init_network,
    load_checkpoint,
    log_softmax,
    save_checkpoint,
    softmax,
)
from safenav.spaces import N_ACTIONS, OBS_DIM


def zero_network(obs_dim=OBS_DIM, hidden=4):
    params = {
        "actor.w0": np.zeros((obs_dim, hidden)),
        "actor.b0": np.zeros(hidden),
        "actor.w1": np.zeros((hidden, hidden)),
        "actor.b1": np.zeros(hidden),
        "actor.w2": np.zeros((hidden, N_ACTIONS)),
        "actor.b2": np.zeros(N_ACTIONS),
        "critic.w0": np.zeros((obs_dim, hidden)),
        "critic.b0": np.zeros(hidden),
        "critic.w1": np.zeros((hidden, hidden)),
        "critic.b1": np.zeros(hidden),
        "critic.w2": np.zeros((hidden, 1)),
        "critic.b2": np.zeros(1),
    }
    return PolicyNetwork(params)


def test_zero_network_outputs_zero():
    net = zero_network()
    logits, value = forward(net, np.random.default_rng(0).random(OBS_DIM))
    assert np.all(logits == 0.0)
    assert value == 0.0


def test_forward_hand_computed():
    # 2 inputs -> 1 hidden unit -> 1 hidden unit -> outputs, all weights known
    net = zero_network(obs_dim=2, hidden=1)
    p = net.params
    p["actor.w0"][:] = [[2.0], [-1.0]]
    p["actor.b0"][:] = 0.5
    p["actor.w1"][:] = [[3.0]]
    p["actor.b1"][:] = -1.0
    p["actor.w2"][0, :] = [1.0, -2.0, 0.0, 0.0, 0.0, 0.0]
    p["actor.b2"][:] = [0.0, 0.25, 0.0, 0.0, 0.0, 0.0]
    p["critic.w0"][:] = [[1.0], [1.0]]
    p["critic.w2"][:] = [[4.0]]
    obs = np.array([1.0, 0.5])
    # actor: h0 = relu(2*1 - 1*0.5 + 0.5) = 2; h1 = relu(3*2 - 1) = 5
    logits, value = forward(net, obs)
    assert logits[0] == pytest.approx(5.0)
    assert logits[1] == pytest.approx(-10.0 + 0.25)
    assert np.all(logits[2:] == 0.0)
    # critic: h0 = relu(1.5) = 1.5; h1 = relu(0) = 0 -> value 0
    assert value == 0.0


def test_forward_deterministic():
    net = init_network(3)
    obs = np.random.default_rng(1).random(OBS_DIM)
    l1, v1 = forward(net, obs)
    l2, v2 = forward(net, obs)
    assert np.array_equal(l1, l2) and v1 == v2


def test_forward_shape_mismatch():
    net = init_network(0)
    with pytest.raises(ValueError):
        forward(net, np.zeros(7))


def test_act_deterministic_tie_break():
    net = zero_network()
    assert act_deterministic(net, np.zeros(OBS_DIM)) == 0


def test_act_deterministic_argmax():
    net = zero_network()
    net.params["actor.b2"][:] = [1.0, 3.0, 2.0, 0.0, 0.0, 0.0]
    assert act_deterministic(net, np.zeros(OBS_DIM)) == 1


def test_act_deterministic_matches_bruteforce():
    rng = np.random.default_rng(11)
    for _ in range(200):
        net = init_network(int(rng.integers(1 << 30)), obs_dim=5, hidden=3)
        obs = rng.random(5)
        logits, _ = forward(net, obs)
        best = max(range(N_ACTIONS), key=lambda i: (logits[i], -i))
        assert act_deterministic(net, obs) == best


def test_act_stochastic_uniform_frequencies():
    net = zero_network()
    rng = np.random.default_rng(5)
    n = 60_000
    counts = np.zeros(N_ACTIONS)
    for _ in range(n):
        a, logp = act_stochastic(net, np.zeros(OBS_DIM), rng)
        counts[a] += 1
        assert logp <= 0.0
    p = 1.0 / N_ACTIONS
    sigma = np.sqrt(p * (1 - p) / n)
    assert np.all(np.abs(counts / n - p) < 4 * sigma)


def test_act_stochastic_dominant_logit():
    net = zero_network()
    net.params["actor.b2"][2] = 20.0
    rng = np.random.default_rng(9)
    actions = [act_stochastic(net, np.zeros(OBS_DIM), rng)[0] for _ in range(2000)]
    assert np.mean(np.array(actions) == 2) > 0.999


def test_softmax_sums_to_one():
    rng = np.random.default_rng(2)
    for _ in range(100):
        logits = rng.normal(scale=10.0, size=N_ACTIONS)
        assert abs(softmax(logits).sum() - 1.0) < 1e-9


def test_checkpoint_round_trip(tmp_path):
    net = init_network(42)
    path = tmp_path / "ckpt.json"
    save_checkpoint(net, path)
    loaded = load_checkpoint(path)
    for name in net.params:
        assert np.array_equal(net.params[name], loaded.params[name])
    rng = np.random.default_rng(0)
    for _ in range(100):
        obs = rng.random(OBS_DIM)
        l1, v1 = forward(net, obs)
        l2, v2 = forward(loaded, obs)
        assert np.array_equal(l1, l2) and v1 == v2


def test_checkpoint_truncated_file(tmp_path):
    net = init_network(0)
    path = tmp_path / "ckpt.json"
    save_checkpoint(net, path)
    data = path.read_text()
    path.write_text(data[: len(data) // 2])
    with pytest.raises(ValueError):
        load_checkpoint(path)


def test_checkpoint_bad_output_shape_names_layer(tmp_path):
    net = init_network(0)
    path = tmp_path / "ckpt.json"
    save_checkpoint(net, path)
    doc = json.loads(path.read_text())
    layer = doc["layers"]["actor.w2"]
    layer["shape"] = [64, 7]
    layer["data"] = [0.0] * (64 * 7)
    doc["layers"]["actor.b2"] = {"shape": [7], "data": [0.0] * 7}
    path.write_text(json.dumps(doc))
    with pytest.raises(ValueError, match="actor.w2"):
        load_checkpoint(path)


def test_adam_moves_against_gradient():
    params = {"w": np.array([1.0, -1.0])}
    opt = Adam(lr=0.1)
    opt.step(params, {"w": np.array([1.0, -1.0])})
    assert params["w"][0] < 1.0 and params["w"][1] > -1.0


def test_log_softmax_batch_consistency():
    rng = np.random.default_rng(8)
    logits = rng.normal(size=(10, N_ACTIONS))
    ls = log_softmax(logits)
    for i in range(10):
        assert np.allclose(ls[i], log_softmax(logits[i]), atol=1e-12)
