"""Partition of the physical cell into virtual networks and per-slice rate metrics."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .radio import MtcDevice, PreambleConfig, ResourceBlockParams

RATIO_ATOL = 1e-12


class AllRatesZero(ValueError):
    """Every slice obtained zero rate; the ratio split is undefined this period."""


class RatioBoundWarning(UserWarning):
    """A slice's rate ratio exceeds the bound implied by the RB and slice counts."""


@dataclass(frozen=True)
class PhysicalCell:
    """The single-cell resource inventory before slicing."""

    device_count: int
    total_rbs: int
    access_rbs: int
    data_rbs: int
    cell_radius_m: float
    preambles: PreambleConfig

    def __post_init__(self):
        if self.access_rbs + self.data_rbs != self.total_rbs:
            raise ValueError("access and data RBs must sum to the total")
        if self.device_count < 1:
            raise ValueError("device_count must be at least 1")
        if self.cell_radius_m <= 0:
            raise ValueError("cell radius must be positive")


@dataclass
class VirtualNetwork:
    """One slice: its weight, devices, and access-phase RB inventory."""

    slice_id: int
    weight: float
    devices: list[MtcDevice]
    access_rb_count: int
    data_rb_count: int
    rb_params: list[ResourceBlockParams]
    rb_ids: list[int] = field(default_factory=list)

    def __post_init__(self):
        if self.access_rb_count < 1:
            raise ValueError("each slice needs at least one access RB")
        if len(self.rb_params) != self.access_rb_count:
            raise ValueError("rb_params must cover every access RB")


@dataclass(frozen=True)
class SliceMetrics:
    """Per-period rate share bookkeeping for one slice."""

    obtained_rate: float
    obtained_ratio: float
    desired_ratio: float
    gap: float


def _even_split(total: int, parts: int) -> list[int]:
    base, extra = divmod(total, parts)
    return [base + (1 if i < extra else 0) for i in range(parts)]


def slice_network(
    cell: PhysicalCell,
    weights,
    device_counts,
    rng: np.random.Generator | None = None,
    bandwidth_hz=1.0,
    tx_power_dbm: float = 20.0,
    noise_power_dbm: float = -104.0,
    occupant_gains=None,
    device_distances=None,
) -> list[VirtualNetwork]:
    """Partition devices and access RBs into slices.

    Devices are assigned in id order by count; access RBs are split as evenly
    as possible with the remainder going to lower slice indices.  Device
    distances and the exogenous occupant gain of each physical access RB are
    drawn from ``rng`` (uniform over the cell disk) unless supplied.
    """
    weights = list(map(float, weights))
    device_counts = list(map(int, device_counts))
    n_slices = len(weights)
    if len(device_counts) != n_slices:
        raise ValueError("weights and device_counts must have the same length")
    if any(weights[i] < weights[i + 1] for i in range(n_slices - 1)):
        raise ValueError("weights must be nonincreasing")
    if sum(device_counts) != cell.device_count:
        raise ValueError("device counts must sum to the cell's device count")
    if n_slices > cell.access_rbs:
        raise ValueError("more slices than access RBs")

    if rng is None:
        rng = np.random.default_rng(0)
    if device_distances is None:
        device_distances = cell.cell_radius_m * np.sqrt(rng.random(cell.device_count))
    if occupant_gains is None:
        from .radio import linear_gain

        occ_dist = cell.cell_radius_m * np.sqrt(rng.random(cell.access_rbs))
        occupant_gains = np.array([linear_gain(d) for d in occ_dist])

    if np.isscalar(bandwidth_hz):
        bandwidth_hz = [float(bandwidth_hz)] * n_slices

    rb_split = _even_split(cell.access_rbs, n_slices)
    data_split = _even_split(cell.data_rbs, n_slices)
    slices = []
    dev_id = 0
    rb_id = 0
    for l in range(n_slices):
        devices = []
        for _ in range(device_counts[l]):
            devices.append(
                MtcDevice(
                    id=dev_id,
                    slice_id=l + 1,
                    distance_m=float(device_distances[dev_id]),
                    beliefs=[],
                )
            )
            dev_id += 1
        rb_ids = list(range(rb_id, rb_id + rb_split[l]))
        rb_id += rb_split[l]
        params = [
            ResourceBlockParams(
                bandwidth_hz=bandwidth_hz[l],
                tx_power_dbm=tx_power_dbm,
                noise_power_dbm=noise_power_dbm,
                channel_gain=float(occupant_gains[i]),
            )
            for i in rb_ids
        ]
        slices.append(
            VirtualNetwork(
                slice_id=l + 1,
                weight=weights[l],
                devices=devices,
                access_rb_count=rb_split[l],
                data_rb_count=data_split[l],
                rb_params=params,
                rb_ids=rb_ids,
            )
        )
    return slices


def period_obtained_rate(slot_records, device_count: int, period_length: int) -> float:
    """Average per-device per-slot achieved rate over one period.

    ``slot_records`` holds every achieved rate of the period (any shape);
    slots have unit duration.
    """
    records = np.asarray(slot_records, dtype=float)
    if records.size == 0:
        raise ValueError("empty record set")
    if device_count < 1 or period_length < 1:
        raise ValueError("device_count and period_length must be positive")
    return float(records.sum() / (device_count * period_length))


def compute_ratios(rates, weights) -> list[SliceMetrics]:
    """Obtained and desired rate shares plus their gap, per slice."""
    c = np.asarray(list(rates), dtype=float)
    x = np.asarray(list(weights), dtype=float)
    if c.shape != x.shape:
        raise ValueError("rates and weights must have the same length")
    if np.any(x <= 0):
        raise ValueError("weights must be positive")
    total = c.sum()
    if total <= 0.0:
        raise AllRatesZero("no slice obtained a positive rate")
    xi = c / total
    xi_target = x / x.sum()
    return [
        SliceMetrics(
            obtained_rate=float(c[l]),
            obtained_ratio=float(xi[l]),
            desired_ratio=float(xi_target[l]),
            gap=float(xi_target[l] - xi[l]),
        )
        for l in range(c.shape[0])
    ]


def ratio_bound_check(
    total_rbs: int,
    slice_count: int,
    mean_ratio: float,
    ratios=(),
    targets=(),
):
    """Advisory cap on any slice's rate share given the RB and slice counts.

    Returns ``(xi_max, flags)`` where ``flags[l]`` marks a slice whose
    obtained or desired ratio exceeds the cap; a warning is emitted when any
    does.  Never enforces anything.
    """
    if total_rbs <= slice_count or slice_count < 1:
        raise ValueError("total_rbs must exceed the slice count")
    log_r = np.log(total_rbs)
    xi_max = mean_ratio * log_r / (log_r - np.log(slice_count))
    ratios = list(ratios)
    targets = list(targets)
    n = max(len(ratios), len(targets))
    flags = []
    for l in range(n):
        obtained = ratios[l] if l < len(ratios) else 0.0
        desired = targets[l] if l < len(targets) else 0.0
        flags.append(obtained > xi_max or desired > xi_max)
    if any(flags):
        warnings.warn(
            f"rate-share cap {xi_max:.6g} exceeded by slices "
            f"{[l + 1 for l, f in enumerate(flags) if f]}",
            RatioBoundWarning,
            stacklevel=2,
        )
    return float(xi_max), flags
