"""Online collection and refinement of interval safety properties.

A safety property pairs an interval box over the observation space with one
forbidden action: whenever the observation lies in the box, the policy's
argmax action must not equal the forbidden one. Properties are generated
around unsafe transitions during training, merged with similar ones via the
interval hull, and the buffer is cleared at every episode boundary.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

from .intervals import (
    Interval,
    IntervalBox,
    box_contains,
    hull,
    interval_subset,
    mig_abs_diff,
)
from .spaces import N_ACTIONS, N_LIDAR, default_obs_domain


@dataclass(frozen=True)
class SafetyProperty:
    """Interval domain plus the action that must never win the argmax there."""

    domain: IntervalBox
    forbidden_action: int
    origin: str = "online"          # "online" or "hardcoded"
    merge_count: int = 1

    def __post_init__(self):
        if not (0 <= self.forbidden_action < N_ACTIONS):
            raise ValueError(f"forbidden_action out of range: {self.forbidden_action}")
        if self.origin not in ("online", "hardcoded"):
            raise ValueError(f"unknown origin tag: {self.origin!r}")
        if self.merge_count < 1:
            raise ValueError("merge_count must be >= 1")


@dataclass
class CropConfig:
    """Knobs for property generation and the similarity rule.

    epsilon: one-sided width of the box built below an unsafe state.
    beta: minimum certified gap for two properties to count as not similar.
    psi: per-dimension optional interval marking potentially-unsafe sensor
        ranges; dimensions without one never trigger the not-similar test.
    """

    epsilon: float = 0.05
    beta: float = 0.1
    psi: tuple = None
    obs_domain: IntervalBox = None

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be > 0")
        if self.beta <= 0:
            raise ValueError("beta must be > 0")
        if self.obs_domain is None:
            self.obs_domain = default_obs_domain()
        if self.psi is None:
            # unsafe-range marker on the lidar dimensions only
            self.psi = tuple(
                Interval(0.0, 0.09) if i < N_LIDAR else None
                for i in range(len(self.obs_domain))
            )
        self.psi = tuple(self.psi)
        if len(self.psi) != len(self.obs_domain):
            raise ValueError("psi length must match obs_domain length")
        for p, d in zip(self.psi, self.obs_domain):
            if p is not None and not interval_subset(p, d):
                raise ValueError(f"psi interval {p} outside obs_domain interval {d}")


@dataclass
class PropertyBuffer:
    """Episode-scoped, insertion-ordered store of online properties."""

    properties: list = field(default_factory=list)
    episode_id: int = 0

    def __len__(self) -> int:
        return len(self.properties)


def generate_property(
    prev_state: Sequence[float], prev_action: int, cfg: CropConfig
) -> SafetyProperty:
    """Build the one-sided epsilon box below the state that led to a cost."""
    if not box_contains(cfg.obs_domain, prev_state):
        raise ValueError("state outside the declared observation domain")
    dims = tuple(
        Interval(max(x - cfg.epsilon, dom.lo), x)
        for x, dom in zip(prev_state, cfg.obs_domain)
    )
    return SafetyProperty(IntervalBox(dims), prev_action, origin="online")


def find_matching(
    buffer: PropertyBuffer, prev_state: Sequence[float], prev_action: int
) -> list:
    """Stored properties whose domain contains the state and whose forbidden
    action equals the one just taken, in insertion order."""
    return [
        p
        for p in buffer.properties
        if p.forbidden_action == prev_action and box_contains(p.domain, prev_state)
    ]


def is_not_similar(p: SafetyProperty, q: SafetyProperty, cfg: CropConfig) -> bool:
    """True iff some dimension with a configured unsafe range separates the
    two domains by a certified gap larger than beta."""
    if p.forbidden_action != q.forbidden_action:
        raise ValueError("comparing properties with different forbidden actions")
    for pi, qi, psi_i in zip(p.domain, q.domain, cfg.psi):
        if psi_i is None:
            continue
        if not (interval_subset(pi, psi_i) or interval_subset(qi, psi_i)):
            continue
        if mig_abs_diff(pi, qi) > cfg.beta:
            return True
    return False


def refine(p: SafetyProperty, q: SafetyProperty) -> SafetyProperty:
    """Merge two similar properties into their per-dimension hull."""
    if p.forbidden_action != q.forbidden_action:
        raise ValueError("cannot refine properties with different forbidden actions")
    dims = tuple(hull(pi, qi) for pi, qi in zip(p.domain, q.domain))
    return SafetyProperty(
        IntervalBox(dims),
        p.forbidden_action,
        origin="online",
        merge_count=p.merge_count + q.merge_count,
    )


def record_unsafe(
    buffer: PropertyBuffer,
    prev_state: Sequence[float],
    prev_action: int,
    cfg: CropConfig,
) -> PropertyBuffer:
    """Fold an unsafe transition into the buffer.

    Generates the fresh property, absorbs every stored same-action property
    similar to it (repeating until no stored property is similar to the
    merged result, so the no-similar-pair invariant holds afterwards), and
    appends the outcome. Mutates and returns the buffer.
    """
    merged = generate_property(prev_state, prev_action, cfg)
    while True:
        similar = [
            p
            for p in buffer.properties
            if p.forbidden_action == prev_action
            and not is_not_similar(p, merged, cfg)
        ]
        if not similar:
            break
        keep = [p for p in buffer.properties if p not in similar]
        buffer.properties = keep
        for p in similar:
            merged = refine(merged, p)
    buffer.properties.append(merged)
    return buffer


def reset_buffer(buffer: PropertyBuffer) -> PropertyBuffer:
    """Clear at the episode boundary; mutates and returns the buffer."""
    buffer.properties = []
    buffer.episode_id += 1
    return buffer


# --- JSONL persistence ------------------------------------------------------

def property_to_record(p: SafetyProperty, episode: int = 0) -> dict:
    return {
        "episode": episode,
        "forbidden_action": p.forbidden_action,
        "merge_count": p.merge_count,
        "origin": p.origin,
        "domain": p.domain.to_pairs(),
    }


def property_from_record(rec: dict) -> SafetyProperty:
    return SafetyProperty(
        IntervalBox.from_pairs(rec["domain"]),
        int(rec["forbidden_action"]),
        origin=rec.get("origin", "online"),
        merge_count=int(rec.get("merge_count", 1)),
    )


def dump_properties(path, properties, episode: int = 0) -> None:
    with open(path, "w") as fh:
        for p in properties:
            fh.write(json.dumps(property_to_record(p, episode)) + "\n")


def append_properties(fh, properties, episode: int) -> None:
    for p in properties:
        fh.write(json.dumps(property_to_record(p, episode)) + "\n")


def load_properties(path) -> list:
    props = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                props.append(property_from_record(json.loads(line)))
    return props
