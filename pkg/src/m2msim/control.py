"""Per-period feedback law for re-partitioning access-phase resource blocks.

The controller smooths each slice's obtained rate with a first-order low-pass
filter, converts the gap between desired and obtained rate shares into a
real-valued RB correction via a dead-beat design (the tracking error vanishes
one period after a step on the linearised rate/RB plant), and applies integer
corrections under exact conservation of the total RB count.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class ControllerState:
    """Filter memory and gains of the reallocation loop."""

    omega: float
    mu: float
    filtered_rates: list[float] = field(default_factory=list)
    prev_gaps: list[float] = field(default_factory=list)
    min_rb_per_slice: int = 1
    data_rb_floor: int = 0
    max_rb_per_slice: int | None = None

    def __post_init__(self):
        if not 0.0 < self.omega < 1.0:
            raise ValueError("omega must lie strictly between 0 and 1")
        if self.mu <= 0.0:
            raise ValueError("mu must be positive")
        if self.min_rb_per_slice < 0 or self.data_rb_floor < 0:
            raise ValueError("floors must be nonnegative")


@dataclass(frozen=True)
class AllocationDelta:
    """Outcome of one reallocation: requested vs applied corrections and the pool flow."""

    real: tuple[float, ...]
    rounded: tuple[int, ...]
    applied: tuple[int, ...]
    new_access_counts: tuple[int, ...]
    new_data_rbs: int
    data_rb_change: int
    shortfall: bool


def smooth_rate(q_prev: float, c_now: float, omega: float) -> float:
    """First-order low-pass step: ``omega * q_prev + (1 - omega) * c_now``."""
    if not 0.0 < omega < 1.0:
        raise ValueError("omega must lie strictly between 0 and 1")
    if not (np.isfinite(q_prev) and np.isfinite(c_now)) or q_prev < 0 or c_now < 0:
        raise ValueError("rates must be finite and nonnegative")
    return omega * q_prev + (1.0 - omega) * c_now


def rb_correction(e_now: float, e_prev: float, sum_q: float, mu: float, omega: float) -> float:
    """Dead-beat RB correction from the current and previous share gaps."""
    if mu <= 0.0:
        raise ValueError("mu must be positive")
    if not 0.0 < omega < 1.0:
        raise ValueError("omega must lie strictly between 0 and 1")
    return sum_q / (mu * (1.0 - omega)) * (e_now - omega * e_prev)


def _round_half_away(x: float) -> int:
    return int(np.copysign(np.floor(abs(x) + 0.5), x))


def reallocate(
    access_counts,
    data_rbs: int,
    corrections,
    state: ControllerState,
) -> AllocationDelta:
    """Apply real-valued corrections as integer RB moves under conservation.

    Corrections are rounded to the nearest integer (ties away from zero).
    Positive demands are served from the data-phase pool down to its floor,
    then from slices giving RBs up; every slice keeps at least
    ``min_rb_per_slice`` (and at most ``max_rb_per_slice`` when set).  When
    supply cannot cover demand the demand is scaled down by largest remainder
    and the delta is flagged.
    """
    counts = [int(c) for c in access_counts]
    real = [float(c) for c in corrections]
    if len(counts) != len(real):
        raise ValueError("corrections must match the slice count")
    rounded = [_round_half_away(c) for c in real]

    applied = []
    for l, want in enumerate(rounded):
        lo = state.min_rb_per_slice - counts[l]
        hi = None if state.max_rb_per_slice is None else state.max_rb_per_slice - counts[l]
        a = max(want, lo)
        if hi is not None:
            a = min(a, hi)
        applied.append(a)

    demand = sum(a for a in applied if a > 0)
    released = -sum(a for a in applied if a < 0)
    supply = max(0, data_rbs - state.data_rb_floor) + released
    shortfall = False
    if demand > supply:
        shortfall = True
        takers = [l for l, a in enumerate(applied) if a > 0]
        weights = np.array([max(real[l], float(applied[l])) for l in takers])
        shares = weights / weights.sum() * supply
        floors = np.floor(shares).astype(int)
        floors = np.minimum(floors, [applied[l] for l in takers])
        leftover = supply - int(floors.sum())
        remainders = shares - np.floor(shares)
        # Largest remainder first; ties go to the lower slice index.
        order = sorted(range(len(takers)), key=lambda i: (-remainders[i], takers[i]))
        grant = floors.copy()
        for i in order:
            if leftover <= 0:
                break
            room = applied[takers[i]] - grant[i]
            add = min(room, leftover)
            grant[i] += add
            leftover -= add
        for i, l in enumerate(takers):
            applied[l] = int(grant[i])
    if any(a != w for a, w in zip(applied, rounded)):
        shortfall = True

    net = sum(applied)
    new_data = data_rbs - net
    new_counts = [c + a for c, a in zip(counts, applied)]
    if new_data < state.data_rb_floor:
        raise AssertionError("data pool dropped below its floor")
    if sum(new_counts) + new_data != sum(counts) + data_rbs:
        raise AssertionError("RB conservation violated")
    return AllocationDelta(
        real=tuple(real),
        rounded=tuple(rounded),
        applied=tuple(int(a) for a in applied),
        new_access_counts=tuple(new_counts),
        new_data_rbs=int(new_data),
        data_rb_change=int(new_data - data_rbs),
        shortfall=shortfall,
    )
