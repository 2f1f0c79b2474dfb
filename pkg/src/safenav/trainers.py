"""Training algorithms sharing one PPO core.

Four variants:
  ppo_cost      - reward shaped with the raw cost signal
  ppo_violation - reward shaped with the violation over a static hand-coded
                  property set
  ppo_crop      - reward shaped with the violation over properties collected
                  and refined online (buffer reset every episode)
  lppo          - Lagrangian constrained baseline; reward left unshaped and
                  the cost handled through a learned multiplier

Penalties only change the optimization target: logged returns always use the
raw reward so curves stay comparable across algorithms.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .envs import NavEnv, make_env
from .intervals import Interval, IntervalBox
from .policy import (
    Adam,
    PolicyNetwork,
    act_stochastic,
    forward,
    init_network,
    log_softmax,
    trunk_backward,
    trunk_forward_cache,
)
from .properties import (
    CropConfig,
    PropertyBuffer,
    SafetyProperty,
    record_unsafe,
    reset_buffer,
)
from .spaces import N_LIDAR
from .violation import DEFAULT_CLOUD_SIZE, PropertyViolation, sample_box

ALGORITHMS = ("ppo_cost", "ppo_violation", "ppo_crop", "lppo")


@dataclass
class TrainConfig:
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip_ratio: float = 0.2
    learning_rate: float = 3e-4
    epochs: int = 4
    batch_size: int = 2048
    minibatch_size: int = 256
    entropy_coef: float = 0.01
    value_coef: float = 0.5
    max_grad_norm: float = 0.5
    penalty_weight: float = 1.0       # w_Z in the shaped objective
    cost_threshold: float = 5.0       # d, lppo only
    multiplier_lr: float = 0.05       # lppo only
    violation_cloud_size: int = DEFAULT_CLOUD_SIZE
    total_steps: int = 300_000
    seed: int = 0

    def __post_init__(self):
        if not (0.0 < self.gamma <= 1.0):
            raise ValueError("gamma must be in (0, 1]")
        if self.clip_ratio <= 0.0:
            raise ValueError("clip_ratio must be > 0")
        if self.cost_threshold < 0.0:
            raise ValueError("cost_threshold must be >= 0")
        if self.total_steps < 1:
            raise ValueError("total_steps must be >= 1")


@dataclass
class Transition:
    obs: np.ndarray
    action: int
    log_prob: float
    reward: float
    cost: int
    penalty: float
    value: float
    done: bool


@dataclass
class EpisodeMetrics:
    step: int
    episode: int
    ret: float
    success: int
    episode_cost: int
    episode_violation: float
    # properties used per violation computation, averaged over the episode's
    # computations (constant for the static set, 0 when nothing was computed)
    n_properties: float
    multiplier: float


# --- PPO machinery ----------------------------------------------------------

def compute_gae(rewards, values, dones, last_value, gamma, lam):
    """Standard GAE recursion; returns (advantages, returns), unnormalized."""
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    dones = np.asarray(dones, dtype=np.float64)
    n = len(rewards)
    if n == 0:
        raise ValueError("empty trajectory")
    adv = np.zeros(n)
    lastgaelam = 0.0
    for t in range(n - 1, -1, -1):
        nonterminal = 1.0 - dones[t]
        next_value = last_value if t == n - 1 else values[t + 1]
        delta = rewards[t] + gamma * next_value * nonterminal - values[t]
        lastgaelam = delta + gamma * lam * nonterminal * lastgaelam
        adv[t] = lastgaelam
    return adv, adv + values


def shaped_reward(reward, cost, algo, w_z, violation_at_t=0.0):
    """Penalty-shaped reward entering advantage estimation.

    lppo is returned unshaped here; its multiplier correction happens in the
    trainer where the current multiplier is known.
    """
    if algo == "ppo_cost":
        return reward - w_z * cost
    if algo in ("ppo_violation", "ppo_crop"):
        return reward - w_z * violation_at_t * (1 if cost > 0 else 0)
    if algo == "lppo":
        return reward
    raise ValueError(f"unknown algorithm: {algo!r}")


def policy_loss_and_grads(net: PolicyNetwork, batch: dict, cfg: TrainConfig):
    """Clipped-surrogate + value + entropy loss and its exact gradients.

    batch: obs (n,d), actions (n,), old_log_probs (n,), advantages (n,)
    (already normalized by the caller), returns (n,).
    """
    obs = batch["obs"]
    actions = batch["actions"]
    old_logp = batch["old_log_probs"]
    adv = batch["advantages"]
    rets = batch["returns"]
    n = len(actions)

    logits, actor_cache = trunk_forward_cache(net.params, "actor", obs)
    vals_out, critic_cache = trunk_forward_cache(net.params, "critic", obs)
    vals = vals_out[:, 0]

    logp_all = log_softmax(logits)
    probs = np.exp(logp_all)
    logp = logp_all[np.arange(n), actions]
    ratio = np.exp(logp - old_logp)
    clipped = np.clip(ratio, 1.0 - cfg.clip_ratio, 1.0 + cfg.clip_ratio)
    surr1 = ratio * adv
    surr2 = clipped * adv
    actor_loss = -np.mean(np.minimum(surr1, surr2))

    entropy = -np.sum(probs * logp_all, axis=1)
    entropy_loss = -cfg.entropy_coef * np.mean(entropy)

    verr = vals - rets
    critic_loss = cfg.value_coef * np.mean(verr ** 2)

    loss = actor_loss + entropy_loss + critic_loss
    if not np.isfinite(loss):
        raise RuntimeError(
            f"non-finite loss: actor={actor_loss} entropy={entropy_loss} "
            f"critic={critic_loss}"
        )

    # d(actor_loss)/dlogits: gradient flows through the unclipped branch when
    # it attains the min; a binding clip contributes zero.
    active = surr1 <= surr2
    coeff = np.where(active, -adv * ratio, 0.0) / n
    onehot = np.zeros_like(probs)
    onehot[np.arange(n), actions] = 1.0
    dlogits = coeff[:, None] * (onehot - probs)
    # d(entropy_loss)/dlogits
    dlogits += (cfg.entropy_coef / n) * probs * (logp_all + entropy[:, None])
    # d(critic_loss)/dvalues
    dvals = (cfg.value_coef * 2.0 / n) * verr

    grads = trunk_backward(net.params, "actor", actor_cache, dlogits)
    grads.update(trunk_backward(net.params, "critic", critic_cache, dvals[:, None]))

    diag = {
        "loss": float(loss),
        "actor_loss": float(actor_loss),
        "critic_loss": float(critic_loss),
        "entropy": float(np.mean(entropy)),
        "clip_fraction": float(np.mean(~active)),
    }
    return diag, grads


def _clip_grads(grads, max_norm):
    total = np.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if total > max_norm > 0.0:
        scale = max_norm / total
        for g in grads.values():
            g *= scale
    return total


def ppo_update(net: PolicyNetwork, batch: dict, cfg: TrainConfig,
               optimizer: Adam, rng: np.random.Generator) -> dict:
    """Multiple epochs of minibatch ascent; advantages normalized per batch."""
    n = len(batch["actions"])
    adv = batch["advantages"]
    batch = dict(batch)
    batch["advantages"] = (adv - adv.mean()) / (adv.std() + 1e-8)
    diag = {}
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.minibatch_size):
            idx = order[start:start + cfg.minibatch_size]
            mb = {k: v[idx] for k, v in batch.items()}
            diag, grads = policy_loss_and_grads(net, mb, cfg)
            diag["grad_norm"] = _clip_grads(grads, cfg.max_grad_norm)
            optimizer.step(net.params, grads)
    return diag


def lagrangian_update(multiplier, mean_episode_cost, d, lr):
    """Projected ascent on the cost constraint multiplier."""
    if multiplier < 0.0:
        raise ValueError("multiplier must be >= 0")
    return max(0.0, multiplier + lr * (mean_episode_cost - d))


# --- hand-coded property set ------------------------------------------------

# beam i points at heading + i * (360/21) degrees, counter-clockwise
_SECTOR_BEAMS = {
    "front": (20, 0, 1),
    "front_left": (2, 3),
    "left": (4, 5, 6),
    "back": (8, 9, 10, 11, 12, 13),
    "right": (15, 16, 17),
    "front_right": (18, 19),
}
# sector -> forbidden movement action(s) driving the robot into it
_SECTOR_FORBIDS = {
    "front": (0,),
    "front_left": (1,),
    "front_right": (2,),
    "left": (3,),
    "right": (4,),
    "back": (3, 4),
}
_NEAR = Interval(0.0, 0.05)


def hardcoded_property_set() -> list:
    """Static directional properties: obstacle close in a sector forbids the
    movement toward it; two extra properties cover the back for the
    rotation-in-place actions."""
    props = []
    for sector, actions in _SECTOR_FORBIDS.items():
        beams = _SECTOR_BEAMS[sector]
        dims = []
        for i in range(N_LIDAR):
            dims.append(_NEAR if i in beams else Interval(0.0, 1.0))
        dims.append(Interval(-1.0, 1.0))
        dims.append(Interval(-1.0, 1.0))
        for a in actions:
            props.append(SafetyProperty(IntervalBox(tuple(dims)), a,
                                        origin="hardcoded"))
    return props


# --- cached per-property violation estimation --------------------------------

class ViolationEstimator:
    """Per-property violation with derived seeds and memoization.

    Each (network version, property domain) pair gets its own deterministic
    seed, so an unchanged property costs nothing to re-estimate after another
    property in the buffer was merged. bump() invalidates the cache after a
    parameter update.
    """

    def __init__(self, base_seed: int, m: int = DEFAULT_CLOUD_SIZE):
        self.base_seed = base_seed
        self.m = m
        self.net_version = 0
        self._cache = {}

    def bump(self):
        self.net_version += 1
        self._cache = {}

    def _prop_seed(self, prop: SafetyProperty) -> int:
        lohi = np.array([d.to_pair() for d in prop.domain], dtype=np.float64)
        h = hashlib.sha256()
        h.update(np.int64(self.base_seed).tobytes())
        h.update(np.int64(self.net_version).tobytes())
        h.update(np.int64(prop.forbidden_action).tobytes())
        h.update(lohi.tobytes())
        return int.from_bytes(h.digest()[:8], "little")

    def property_ratio(self, net: PolicyNetwork, prop: SafetyProperty) -> PropertyViolation:
        key = (prop.forbidden_action, prop.domain)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        rng = np.random.default_rng(self._prop_seed(prop))
        pts = sample_box(prop.domain, self.m, rng)
        logits = np.maximum(pts @ net.params["actor.w0"] + net.params["actor.b0"], 0.0)
        logits = np.maximum(logits @ net.params["actor.w1"] + net.params["actor.b1"], 0.0)
        logits = logits @ net.params["actor.w2"] + net.params["actor.b2"]
        bad = int(np.count_nonzero(np.argmax(logits, axis=1) == prop.forbidden_action))
        pv = PropertyViolation(self.m, bad)
        self._cache[key] = pv
        return pv

    def aggregate_ratio(self, net: PolicyNetwork, properties) -> float:
        if not properties:
            return 0.0
        total = 0
        bad = 0
        for p in properties:
            pv = self.property_ratio(net, p)
            total += pv.samples
            bad += pv.violating
        return bad / total


# --- training loop ----------------------------------------------------------

class Trainer:
    def __init__(self, algo: str, env: NavEnv, cfg: TrainConfig,
                 crop_cfg: CropConfig = None, net: PolicyNetwork = None):
        if algo not in ALGORITHMS:
            raise ValueError(f"unknown algorithm: {algo!r}")
        self.algo = algo
        self.env = env
        self.cfg = cfg
        self.crop_cfg = crop_cfg or CropConfig()
        ss = np.random.SeedSequence(cfg.seed)
        net_seed, act_seed, upd_seed, viol_seed = ss.spawn(4)
        self.net = net or init_network(int(net_seed.generate_state(1)[0]))
        self.act_rng = np.random.default_rng(act_seed)
        self.update_rng = np.random.default_rng(upd_seed)
        self.optimizer = Adam(lr=cfg.learning_rate)
        self.buffer = PropertyBuffer()
        self.static_props = hardcoded_property_set() if algo == "ppo_violation" else []
        self.estimator = ViolationEstimator(
            int(viol_seed.generate_state(1)[0]), m=cfg.violation_cloud_size
        )
        self.multiplier = 0.0

    def _step_penalty(self, prev_obs, action, cost):
        """Penalty and violation estimate for one transition (Z in the shaped
        objective). The violation is only computed on unsafe steps."""
        if cost <= 0:
            return 0.0, None
        if self.algo == "ppo_cost":
            return self.cfg.penalty_weight * cost, None
        if self.algo == "ppo_crop":
            record_unsafe(self.buffer, prev_obs, action, self.crop_cfg)
            v = self.estimator.aggregate_ratio(self.net, self.buffer.properties)
            return self.cfg.penalty_weight * v, v
        if self.algo == "ppo_violation":
            v = self.estimator.aggregate_ratio(self.net, self.static_props)
            return self.cfg.penalty_weight * v, v
        return 0.0, None   # lppo: constraint handled via the multiplier

    def run(self, on_episode=None, on_update=None):
        """Run to cfg.total_steps; yields nothing, calls on_episode(metrics,
        buffer_snapshot) after each finished episode."""
        cfg = self.cfg
        obs = self.env.reset()
        reset_buffer(self.buffer)
        episode = 0
        global_step = 0
        ep_return = 0.0
        ep_cost = 0
        ep_violations = []
        ep_prop_uses = []
        completed_costs = []
        metrics = []

        batch_obs = []
        batch_actions = []
        batch_logp = []
        batch_rewards = []
        batch_values = []
        batch_dones = []

        while global_step < cfg.total_steps:
            logits_value = forward(self.net, obs)
            action, logp = act_stochastic(self.net, obs, self.act_rng)
            value = logits_value[1]
            result = self.env.step(action)
            cost = result.cost
            penalty, violation = self._step_penalty(obs, action, cost)
            if self.algo == "lppo":
                train_r = (result.reward - self.multiplier * cost) / (1.0 + self.multiplier)
            else:
                train_r = result.reward - penalty

            batch_obs.append(obs)
            batch_actions.append(action)
            batch_logp.append(logp)
            batch_rewards.append(train_r)
            batch_values.append(value)
            batch_dones.append(result.done)

            ep_return += result.reward
            ep_cost += cost
            if violation is not None:
                ep_violations.append(violation)
                ep_prop_uses.append(
                    len(self.buffer) if self.algo == "ppo_crop"
                    else len(self.static_props)
                )

            obs = result.observation
            global_step += 1

            if result.done:
                m = EpisodeMetrics(
                    step=global_step,
                    episode=episode,
                    ret=ep_return,
                    success=1 if result.info["goal_reached"] else 0,
                    episode_cost=ep_cost,
                    episode_violation=(
                        float(np.mean(ep_violations)) if ep_violations else 0.0
                    ),
                    n_properties=(
                        float(np.mean(ep_prop_uses)) if ep_prop_uses else 0.0
                    ) if self.algo == "ppo_crop" else len(self.static_props),
                    multiplier=self.multiplier,
                )
                metrics.append(m)
                if on_episode is not None:
                    on_episode(m, list(self.buffer.properties))
                completed_costs.append(ep_cost)
                episode += 1
                ep_return = 0.0
                ep_cost = 0
                ep_violations = []
                ep_prop_uses = []
                obs = self.env.reset()
                reset_buffer(self.buffer)

            if len(batch_obs) >= cfg.batch_size:
                if batch_dones[-1]:
                    last_value = 0.0
                else:
                    _, last_value = forward(self.net, obs)
                adv, rets = compute_gae(
                    batch_rewards, batch_values, batch_dones, last_value,
                    cfg.gamma, cfg.gae_lambda,
                )
                batch = {
                    "obs": np.asarray(batch_obs, dtype=np.float64),
                    "actions": np.asarray(batch_actions, dtype=np.int64),
                    "old_log_probs": np.asarray(batch_logp, dtype=np.float64),
                    "advantages": adv,
                    "returns": rets,
                }
                diag = ppo_update(self.net, batch, cfg, self.optimizer,
                                  self.update_rng)
                self.estimator.bump()
                if self.algo == "lppo" and completed_costs:
                    self.multiplier = lagrangian_update(
                        self.multiplier, float(np.mean(completed_costs)),
                        cfg.cost_threshold, cfg.multiplier_lr,
                    )
                    completed_costs = []
                if on_update is not None:
                    on_update(global_step, diag)
                batch_obs, batch_actions, batch_logp = [], [], []
                batch_rewards, batch_values, batch_dones = [], [], []
        return metrics


def train(algo: str, env_kind: str, cfg: TrainConfig,
          crop_cfg: CropConfig = None, on_episode=None, on_update=None):
    """Convenience wrapper: build env from (kind, seed) and run to completion."""
    env = make_env(env_kind, cfg.seed)
    trainer = Trainer(algo, env, cfg, crop_cfg=crop_cfg)
    metrics = trainer.run(on_episode=on_episode, on_update=on_update)
    return trainer.net, metrics
