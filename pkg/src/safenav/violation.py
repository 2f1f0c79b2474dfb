"""Sample-based estimate of how often a policy picks forbidden actions.

For each property, m states are drawn uniformly over its domain box and the
deterministic policy is evaluated on all of them; the violation ratio is the
fraction whose argmax equals the property's forbidden action. Ratios are
pooled across properties by sample count.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .policy import PolicyNetwork, forward_batch

DEFAULT_CLOUD_SIZE = 10_000


@dataclass(frozen=True)
class PropertyViolation:
    samples: int
    violating: int

    @property
    def ratio(self) -> float:
        return self.violating / self.samples if self.samples else 0.0


@dataclass(frozen=True)
class ViolationReport:
    per_property: tuple
    total_samples: int
    total_violating: int

    @property
    def aggregate_ratio(self) -> float:
        return self.total_violating / self.total_samples if self.total_samples else 0.0

    def to_csv_rows(self) -> list:
        rows = [
            [i, pv.samples, pv.violating, pv.ratio]
            for i, pv in enumerate(self.per_property)
        ]
        rows.append(["aggregate", self.total_samples, self.total_violating,
                     self.aggregate_ratio])
        return rows


def sample_box(box, m: int, rng: np.random.Generator) -> np.ndarray:
    """m uniform points over the box; degenerate axes yield the point value."""
    lo = np.array([d.lo for d in box], dtype=np.float64)
    hi = np.array([d.hi for d in box], dtype=np.float64)
    u = rng.random((m, len(lo)))
    return lo + u * (hi - lo)


def estimate_violation(
    net: PolicyNetwork,
    properties,
    m: int = DEFAULT_CLOUD_SIZE,
    rng: np.random.Generator = None,
) -> ViolationReport:
    if m < 1:
        raise ValueError("cloud size m must be >= 1")
    if rng is None:
        rng = np.random.default_rng(0)
    per = []
    total = 0
    violating = 0
    for p in properties:
        pts = sample_box(p.domain, m, rng)
        logits, _ = forward_batch(net, pts)
        bad = int(np.count_nonzero(np.argmax(logits, axis=1) == p.forbidden_action))
        per.append(PropertyViolation(m, bad))
        total += m
        violating += bad
    return ViolationReport(tuple(per), total, violating)
