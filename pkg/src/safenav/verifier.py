"""Sound certification of violation rates via interval bound propagation.

For a property's domain box, affine layers are propagated with sign-split
weights and ReLU clamps the lower/upper vectors at zero; the resulting logit
intervals decide whether the forbidden action provably never / provably
always wins the argmax. Undecided boxes are bisected along the widest
normalized dimension until a width floor or a box budget is hit, and the
undecided volume is reported honestly as the gap between the certified
lower and upper bounds.

Rounding is plain float64 (not directed), the one documented deviation from
bitwise soundness.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .intervals import Interval, IntervalBox
from .policy import PolicyNetwork
from .properties import SafetyProperty

DEFAULT_MIN_WIDTH = 1.0 / 64.0
DEFAULT_BUDGET = 1_000_000


@dataclass(frozen=True)
class OutputBounds:
    """Per-logit enclosing intervals as (lower, upper) float arrays."""

    lower: np.ndarray
    upper: np.ndarray


@dataclass(frozen=True)
class CertifiedViolation:
    prop: SafetyProperty
    lower: float
    upper: float
    boxes_explored: int

    @property
    def unknown_fraction(self) -> float:
        return self.upper - self.lower


def _affine_bounds(lo, hi, w, b):
    wp = np.maximum(w, 0.0)
    wn = np.minimum(w, 0.0)
    return lo @ wp + hi @ wn + b, hi @ wp + lo @ wn + b


def ibp_bounds_arrays(net: PolicyNetwork, lo: np.ndarray, hi: np.ndarray) -> OutputBounds:
    p = net.params
    for i in range(3):
        lo, hi = _affine_bounds(lo, hi, p[f"actor.w{i}"], p[f"actor.b{i}"])
        if i < 2:
            lo = np.maximum(lo, 0.0)
            hi = np.maximum(hi, 0.0)
    return OutputBounds(lo, hi)


def ibp_bounds(net: PolicyNetwork, box: IntervalBox) -> OutputBounds:
    lo = np.array([d.lo for d in box], dtype=np.float64)
    hi = np.array([d.hi for d in box], dtype=np.float64)
    return ibp_bounds_arrays(net, lo, hi)


def classify_box(bounds: OutputBounds, k: int) -> str:
    """safe: some other logit provably beats k; unsafe: k provably beats all
    others; otherwise unknown. Exact ties stay unknown (conservative under
    lowest-index argmax tie-breaking)."""
    others = np.delete(np.arange(len(bounds.lower)), k)
    if np.any(bounds.lower[others] > bounds.upper[k]):
        return "safe"
    if np.all(bounds.lower[k] > bounds.upper[others]):
        return "unsafe"
    return "unknown"


def verify_property(
    net: PolicyNetwork,
    prop: SafetyProperty,
    min_width: float = DEFAULT_MIN_WIDTH,
    budget: int = DEFAULT_BUDGET,
) -> CertifiedViolation:
    """Certified [lower, upper] on the violated volume fraction of the domain.

    Volumes are tracked in normalized box coordinates, so child fractions of
    a split always sum exactly to the parent's fraction.
    """
    if min_width <= 0.0:
        raise ValueError("min_width must be > 0")
    if budget < 1:
        raise ValueError("budget must be >= 1")
    root_lo = np.array([d.lo for d in prop.domain], dtype=np.float64)
    root_hi = np.array([d.hi for d in prop.domain], dtype=np.float64)
    root_width = root_hi - root_lo
    norm = np.where(root_width > 0.0, root_width, 1.0)

    unsafe_frac = 0.0
    safe_frac = 0.0
    unknown_frac = 0.0
    explored = 0
    stack = [(root_lo, root_hi, 1.0)]
    while stack:
        lo, hi, frac = stack.pop()
        if explored >= budget:
            unknown_frac += frac
            continue
        explored += 1
        verdict = classify_box(ibp_bounds_arrays(net, lo, hi), prop.forbidden_action)
        if verdict == "safe":
            safe_frac += frac
            continue
        if verdict == "unsafe":
            unsafe_frac += frac
            continue
        nwidth = (hi - lo) / norm
        dim = int(np.argmax(nwidth))
        if nwidth[dim] <= min_width:
            unknown_frac += frac
            continue
        mid = 0.5 * (lo[dim] + hi[dim])
        left_hi = hi.copy()
        left_hi[dim] = mid
        right_lo = lo.copy()
        right_lo[dim] = mid
        stack.append((lo, left_hi, frac / 2.0))
        stack.append((right_lo, hi, frac / 2.0))

    lower = unsafe_frac
    upper = 1.0 - safe_frac
    return CertifiedViolation(prop, lower, upper, explored)


def verify_properties(net, properties, min_width=DEFAULT_MIN_WIDTH,
                      budget=DEFAULT_BUDGET) -> list:
    return [verify_property(net, p, min_width, budget) for p in properties]
