"""Simulation configuration: schema, validation, presets, and JSON loading."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields

import numpy as np

SCHEMES = (
    "pomdp_with_loop",
    "pomdp_no_loop",
    "no_observation_no_loop",
    "perfect_knowledge",
)

LOOP_SCHEMES = ("pomdp_with_loop", "perfect_knowledge")

SCENARIOS = ("homogeneous", "heterogeneous", "custom")


class ConfigError(ValueError):
    """A configuration field violates its constraint."""


@dataclass(frozen=True)
class SimConfig:
    """Fully resolved parameters of one simulation run."""

    scheme: str = "pomdp_with_loop"
    scenario: str = "custom"
    n_devices: int = 50
    n_slices: int = 5
    device_counts: tuple[int, ...] = (10, 10, 10, 10, 10)
    weights: tuple[float, ...] = (12.0, 1.0, 1.0, 1.0, 1.0)
    total_rbs: int = 50
    access_rbs: int = 25
    slots_per_period: int = 100
    periods: int = 5
    seed: int = 0
    beta: float = 0.8
    eps: float = 0.1
    phi: float = 0.1
    pr_s: float | None = None
    pr_s_same_preamble: int | None = None
    preamble_count: int = 64
    rb_transition: tuple[tuple[float, float], tuple[float, float]] = (
        (0.9, 0.1),
        (0.95, 0.05),
    )
    dp_horizon: int = 1
    omega: float = 0.8
    mu: float = 2.0
    min_rb_per_slice: int = 1
    max_rb_per_slice: int | None = 8
    data_rb_floor: int = 0
    attempt_prob: float = 1.0
    cell_radius_m: float = 1000.0
    tx_power_dbm: float = 20.0
    occupant_power_dbm: float = 40.0
    noise_power_dbm: float = -121.0
    bandwidth_hz: float | tuple[float, ...] = 1.0
    prune_tol: float = 1e-9

    def __post_init__(self):
        object.__setattr__(self, "device_counts", tuple(int(c) for c in self.device_counts))
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        object.__setattr__(
            self,
            "rb_transition",
            tuple(tuple(float(p) for p in row) for row in self.rb_transition),
        )
        if not np.isscalar(self.bandwidth_hz):
            object.__setattr__(
                self, "bandwidth_hz", tuple(float(b) for b in self.bandwidth_hz)
            )
        validate_config(self)

    @property
    def data_rbs(self) -> int:
        return self.total_rbs - self.access_rbs

    def bandwidth_per_slice(self) -> tuple[float, ...]:
        if np.isscalar(self.bandwidth_hz):
            return (float(self.bandwidth_hz),) * self.n_slices
        return tuple(self.bandwidth_hz)

    def fixed_collision_prob(self) -> float | None:
        """The static collision probability, or None for the contention-derived mode.

        Fixed mode: ``pr_s`` as given, or the binomial same-preamble chance
        when ``pr_s_same_preamble`` is set.  When both are None the simulator
        derives a per-slice probability from its device/RB contention density
        each period.
        """
        from .radio import preamble_collision_prob

        if self.pr_s is not None:
            return self.pr_s
        if self.pr_s_same_preamble is not None:
            return preamble_collision_prob(
                self.n_devices, self.pr_s_same_preamble, self.preamble_count
            )
        return None

    @property
    def uses_loop(self) -> bool:
        return self.scheme in LOOP_SCHEMES


def _require(cond: bool, message: str):
    if not cond:
        raise ConfigError(message)


def validate_config(cfg: SimConfig):
    _require(cfg.scheme in SCHEMES, f"scheme must be one of {SCHEMES}")
    _require(cfg.scenario in SCENARIOS, f"scenario must be one of {SCENARIOS}")
    _require(cfg.n_devices >= 1, "n_devices must be at least 1")
    _require(cfg.n_slices >= 1, "n_slices must be at least 1")
    _require(
        len(cfg.device_counts) == cfg.n_slices,
        "device_counts must have one entry per slice",
    )
    _require(
        sum(cfg.device_counts) == cfg.n_devices,
        "device_counts must sum to n_devices",
    )
    _require(all(c >= 0 for c in cfg.device_counts), "device_counts must be nonnegative")
    _require(len(cfg.weights) == cfg.n_slices, "weights must have one entry per slice")
    _require(all(w > 0 for w in cfg.weights), "weights must be positive")
    _require(
        all(cfg.weights[i] >= cfg.weights[i + 1] for i in range(cfg.n_slices - 1)),
        "weights must be nonincreasing",
    )
    _require(cfg.access_rbs >= cfg.n_slices, "access_rbs must cover every slice")
    _require(cfg.total_rbs >= cfg.access_rbs, "total_rbs must be at least access_rbs")
    _require(cfg.slots_per_period >= 1, "slots_per_period must be at least 1")
    _require(cfg.periods >= 1, "periods must be at least 1")
    _require(cfg.seed >= 0, "seed must be nonnegative")
    _require(0.0 <= cfg.beta <= 1.0, "beta must lie in [0,1]")
    _require(0.0 <= cfg.eps <= 1.0, "eps must lie in [0,1]")
    _require(0.0 <= cfg.phi <= 1.0, "phi must lie in [0,1]")
    if cfg.pr_s is not None:
        _require(0.0 <= cfg.pr_s <= 1.0, "pr_s must lie in [0,1]")
    if cfg.pr_s_same_preamble is not None:
        _require(
            0 <= cfg.pr_s_same_preamble <= cfg.n_devices,
            "pr_s_same_preamble must lie in [0, n_devices]",
        )
    _require(cfg.preamble_count >= 1, "preamble_count must be at least 1")
    t = np.asarray(cfg.rb_transition, dtype=float)
    _require(t.shape == (2, 2), "rb_transition must be a 2x2 matrix")
    _require(np.all(t >= 0) and np.all(t <= 1), "rb_transition entries must lie in [0,1]")
    _require(
        np.max(np.abs(t.sum(axis=1) - 1.0)) <= 1e-12,
        "rb_transition rows must sum to 1",
    )
    _require(cfg.dp_horizon >= 1, "dp_horizon must be at least 1")
    _require(0.0 < cfg.omega < 1.0, "omega must lie strictly between 0 and 1")
    _require(cfg.mu > 0.0, "mu must be positive")
    _require(cfg.min_rb_per_slice >= 0, "min_rb_per_slice must be nonnegative")
    if cfg.max_rb_per_slice is not None:
        _require(
            cfg.max_rb_per_slice >= max(1, cfg.min_rb_per_slice),
            "max_rb_per_slice must be at least min_rb_per_slice (and 1)",
        )
    _require(cfg.data_rb_floor >= 0, "data_rb_floor must be nonnegative")
    _require(0.0 < cfg.attempt_prob <= 1.0, "attempt_prob must lie in (0,1]")
    _require(cfg.cell_radius_m > 0, "cell_radius_m must be positive")
    _require(np.isfinite(cfg.tx_power_dbm), "tx_power_dbm must be finite")
    _require(np.isfinite(cfg.occupant_power_dbm), "occupant_power_dbm must be finite")
    _require(np.isfinite(cfg.noise_power_dbm), "noise_power_dbm must be finite")
    bw = cfg.bandwidth_per_slice()
    _require(len(bw) == cfg.n_slices, "bandwidth_hz must be scalar or one entry per slice")
    _require(all(b > 0 for b in bw), "bandwidth_hz must be positive")
    _require(cfg.prune_tol > 0, "prune_tol must be positive")


_COMMON_PRESET_FIELDS = {
    # Occupants hold an RB for several slots once they appear, which is what
    # makes sensing worth anything, and machine-type devices are sparsely
    # active, so only a fraction of a slice contends in any one slot.
    "rb_transition": ((0.9, 0.1), (0.25, 0.75)),
    "attempt_prob": 0.25,
}

_PRESETS = {
    "paper_homogeneous": {
        **_COMMON_PRESET_FIELDS,
        "scenario": "homogeneous",
        "device_counts": (10, 10, 10, 10, 10),
    },
    "paper_heterogeneous": {
        **_COMMON_PRESET_FIELDS,
        "scenario": "heterogeneous",
        "device_counts": (30, 5, 5, 5, 5),
    },
}


def preset_names() -> tuple[str, ...]:
    return tuple(sorted(_PRESETS))


def preset_config(name: str, **overrides) -> SimConfig:
    """Expand a named scenario preset, applying field overrides on top."""
    if name not in _PRESETS:
        raise ConfigError(f"unknown preset {name!r}; known: {preset_names()}")
    merged = dict(_PRESETS[name])
    merged.update(overrides)
    return SimConfig(**merged)


def config_to_dict(cfg: SimConfig) -> dict:
    out = {}
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        if isinstance(v, tuple):
            v = [list(row) if isinstance(row, tuple) else row for row in v]
        out[f.name] = v
    return out


def config_from_dict(data: dict) -> SimConfig:
    known = {f.name for f in fields(SimConfig)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    return SimConfig(**data)


def load_config(path) -> SimConfig:
    """Load and validate a JSON config file.

    A file may either be a bare field mapping or ``{"preset": name,
    "overrides": {...}}``.
    """
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(
                f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}"
            ) from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    if "preset" in data:
        extra = set(data) - {"preset", "overrides"}
        if extra:
            raise ConfigError(f"preset configs allow only 'overrides'; got {sorted(extra)}")
        return preset_config(data["preset"], **data.get("overrides", {}))
    return config_from_dict(data)


def config_hash(cfg: SimConfig) -> str:
    canonical = json.dumps(config_to_dict(cfg), sort_keys=True)
    return hashlib.sha256(canonical.encode()).hexdigest()[:16]
