"""Feed-forward actor-critic over the 23-dim observation.

Two ReLU hidden layers per trunk (actor and critic are separate), identity
outputs: 6 action logits and one value. Everything is float64 numpy; the
backward pass is written out by hand so training, the violation estimator
and the verifier all share one parameter representation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .spaces import N_ACTIONS, OBS_DIM

PARAM_NAMES = (
    "actor.w0", "actor.b0", "actor.w1", "actor.b1", "actor.w2", "actor.b2",
    "critic.w0", "critic.b0", "critic.w1", "critic.b1", "critic.w2", "critic.b2",
)


@dataclass
class PolicyNetwork:
    """Parameter container; weights are (in, out), biases (out,)."""

    params: dict

    def __post_init__(self):
        validate_shapes(self.params)

    @property
    def obs_dim(self) -> int:
        return self.params["actor.w0"].shape[0]

    @property
    def n_actions(self) -> int:
        return self.params["actor.w2"].shape[1]

    def copy(self) -> "PolicyNetwork":
        return PolicyNetwork({k: v.copy() for k, v in self.params.items()})


def validate_shapes(params: dict) -> None:
    missing = [n for n in PARAM_NAMES if n not in params]
    if missing:
        raise ValueError(f"missing parameters: {missing}")
    for trunk in ("actor", "critic"):
        for i in range(3):
            w = params[f"{trunk}.w{i}"]
            b = params[f"{trunk}.b{i}"]
            if w.ndim != 2:
                raise ValueError(f"{trunk}.w{i} must be a matrix, got shape {w.shape}")
            if b.shape != (w.shape[1],):
                raise ValueError(
                    f"{trunk}.b{i} shape {b.shape} does not match {trunk}.w{i} "
                    f"output width {w.shape[1]}"
                )
            if i > 0:
                prev = params[f"{trunk}.w{i-1}"]
                if w.shape[0] != prev.shape[1]:
                    raise ValueError(
                        f"{trunk}.w{i} input width {w.shape[0]} does not match "
                        f"{trunk}.w{i-1} output width {prev.shape[1]}"
                    )
    if params["actor.w2"].shape[1] != N_ACTIONS:
        raise ValueError(
            f"actor output layer actor.w2 must have {N_ACTIONS} outputs, "
            f"got {params['actor.w2'].shape[1]}"
        )
    if params["critic.w2"].shape[1] != 1:
        raise ValueError(
            f"critic output layer critic.w2 must have 1 output, "
            f"got {params['critic.w2'].shape[1]}"
        )
    if params["actor.w0"].shape[0] != params["critic.w0"].shape[0]:
        raise ValueError("actor and critic input widths differ")
    for name in PARAM_NAMES:
        if not np.all(np.isfinite(params[name])):
            raise ValueError(f"non-finite values in {name}")


def _orthogonal(rng, shape, gain):
    a = rng.standard_normal(shape)
    q, r = np.linalg.qr(a if shape[0] >= shape[1] else a.T)
    q = q * np.sign(np.diag(r))
    if shape[0] < shape[1]:
        q = q.T
    # keep C-contiguous so matmul results are bitwise-stable across save/load
    return np.ascontiguousarray(gain * q[: shape[0], : shape[1]])


def init_network(
    seed: int, obs_dim: int = OBS_DIM, hidden: int = 64, n_actions: int = N_ACTIONS
) -> PolicyNetwork:
    """Seeded orthogonal initialization, zero biases."""
    rng = np.random.default_rng(seed)
    g = np.sqrt(2.0)
    params = {
        "actor.w0": _orthogonal(rng, (obs_dim, hidden), g),
        "actor.b0": np.zeros(hidden),
        "actor.w1": _orthogonal(rng, (hidden, hidden), g),
        "actor.b1": np.zeros(hidden),
        "actor.w2": _orthogonal(rng, (hidden, n_actions), 0.01),
        "actor.b2": np.zeros(n_actions),
        "critic.w0": _orthogonal(rng, (obs_dim, hidden), g),
        "critic.b0": np.zeros(hidden),
        "critic.w1": _orthogonal(rng, (hidden, hidden), g),
        "critic.b1": np.zeros(hidden),
        "critic.w2": _orthogonal(rng, (hidden, 1), 1.0),
        "critic.b2": np.zeros(1),
    }
    return PolicyNetwork(params)


# --- forward passes ---------------------------------------------------------

def _trunk_forward(params, trunk, x):
    h0 = np.maximum(x @ params[f"{trunk}.w0"] + params[f"{trunk}.b0"], 0.0)
    h1 = np.maximum(h0 @ params[f"{trunk}.w1"] + params[f"{trunk}.b1"], 0.0)
    return h1 @ params[f"{trunk}.w2"] + params[f"{trunk}.b2"]


def forward_batch(net: PolicyNetwork, obs: np.ndarray):
    """(n, obs_dim) -> logits (n, n_actions), values (n,)."""
    obs = np.asarray(obs, dtype=np.float64)
    logits = _trunk_forward(net.params, "actor", obs)
    values = _trunk_forward(net.params, "critic", obs)[:, 0]
    return logits, values


def forward(net: PolicyNetwork, obs):
    """Single observation -> (logits (n_actions,), value scalar)."""
    obs = np.asarray(obs, dtype=np.float64)
    if obs.shape != (net.obs_dim,):
        raise ValueError(f"expected obs shape ({net.obs_dim},), got {obs.shape}")
    logits, values = forward_batch(net, obs[None, :])
    return logits[0], float(values[0])


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - np.max(logits, axis=-1, keepdims=True)
    return z - np.log(np.sum(np.exp(z), axis=-1, keepdims=True))


def softmax(logits: np.ndarray) -> np.ndarray:
    return np.exp(log_softmax(logits))


def act_deterministic(net: PolicyNetwork, obs) -> int:
    """Argmax over the logits; ties go to the lowest index."""
    logits, _ = forward(net, obs)
    return int(np.argmax(logits))


def act_deterministic_batch(net: PolicyNetwork, obs: np.ndarray) -> np.ndarray:
    logits, _ = forward_batch(net, obs)
    return np.argmax(logits, axis=1)


def act_stochastic(net: PolicyNetwork, obs, rng: np.random.Generator):
    """Sample from softmax(logits); returns (action, log-probability)."""
    logits, _ = forward(net, obs)
    logp = log_softmax(logits)
    action = int(rng.choice(net.n_actions, p=np.exp(logp)))
    return action, float(logp[action])


# --- backward passes --------------------------------------------------------

def trunk_forward_cache(params, trunk, x):
    """Forward pass keeping activations for backprop."""
    z0 = x @ params[f"{trunk}.w0"] + params[f"{trunk}.b0"]
    h0 = np.maximum(z0, 0.0)
    z1 = h0 @ params[f"{trunk}.w1"] + params[f"{trunk}.b1"]
    h1 = np.maximum(z1, 0.0)
    out = h1 @ params[f"{trunk}.w2"] + params[f"{trunk}.b2"]
    return out, (x, z0, h0, z1, h1)


def trunk_backward(params, trunk, cache, dout):
    """Gradient of a scalar loss w.r.t. the trunk parameters, given dL/dout."""
    x, z0, h0, z1, h1 = cache
    grads = {}
    grads[f"{trunk}.w2"] = h1.T @ dout
    grads[f"{trunk}.b2"] = dout.sum(axis=0)
    dh1 = dout @ params[f"{trunk}.w2"].T
    dz1 = dh1 * (z1 > 0.0)
    grads[f"{trunk}.w1"] = h0.T @ dz1
    grads[f"{trunk}.b1"] = dz1.sum(axis=0)
    dh0 = dz1 @ params[f"{trunk}.w1"].T
    dz0 = dh0 * (z0 > 0.0)
    grads[f"{trunk}.w0"] = x.T @ dz0
    grads[f"{trunk}.b0"] = dz0.sum(axis=0)
    return grads


# --- optimizer --------------------------------------------------------------

@dataclass
class Adam:
    lr: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def step(self, params: dict, grads: dict) -> None:
        self.t += 1
        for name, g in grads.items():
            if name not in self.m:
                self.m[name] = np.zeros_like(params[name])
                self.v[name] = np.zeros_like(params[name])
            self.m[name] = self.beta1 * self.m[name] + (1 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1 - self.beta2) * g * g
            mhat = self.m[name] / (1 - self.beta1 ** self.t)
            vhat = self.v[name] / (1 - self.beta2 ** self.t)
            params[name] -= self.lr * mhat / (np.sqrt(vhat) + self.eps)


# --- checkpoint I/O ---------------------------------------------------------

CHECKPOINT_FORMAT = "safenav-checkpoint-v1"


def save_checkpoint(net: PolicyNetwork, path) -> None:
    """Self-describing JSON: explicit shapes, row-major float64 data.

    json round-trips Python floats exactly (repr-based), so save/load is
    bitwise.
    """
    doc = {
        "format": CHECKPOINT_FORMAT,
        "layers": {
            name: {"shape": list(arr.shape), "data": arr.ravel(order="C").tolist()}
            for name, arr in net.params.items()
        },
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_checkpoint(path) -> PolicyNetwork:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ValueError(f"malformed checkpoint file {path}: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"not a {CHECKPOINT_FORMAT} file: {path}")
    params = {}
    for name, layer in doc["layers"].items():
        shape = tuple(layer["shape"])
        data = np.asarray(layer["data"], dtype=np.float64)
        if data.size != int(np.prod(shape)):
            raise ValueError(
                f"layer {name}: {data.size} values do not fill shape {shape}"
            )
        params[name] = data.reshape(shape)
    return PolicyNetwork(params)
