"""Physical-layer rate model and assembly of a device's decision model.

Rates follow the Shannon formula with a collision-probability derating: an
idle resource block (RB) yields ``(1 - p_coll) * B * log2(1 + SNR)`` and a
busy one the same with the occupant's received power added to the noise.
The joint model for a device covers the RBs of its slice: each RB is an
independent two-state (idle/busy) Markov chain, the joint state space is the
product of the per-RB chains, and the observation channel flips each RB's
symbol independently (error ``eps`` on the RB being accessed, ``phi``
elsewhere).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .pomdp import NO_ACCESS, PomdpModel, StateSpaceTooLarge

DEFAULT_JOINT_RB_CAP = 12


@dataclass(frozen=True)
class ResourceBlockParams:
    """Link parameters for one resource block.

    ``channel_gain`` is the linear power gain of whoever is transmitting on
    the RB in the rate being computed; callers substitute a device's own gain
    via :func:`dataclasses.replace` and use the stored (occupant) gain for the
    interference term of the busy branch.
    """

    bandwidth_hz: float
    tx_power_dbm: float
    noise_power_dbm: float
    channel_gain: float

    def __post_init__(self):
        if self.bandwidth_hz <= 0:
            raise ValueError("bandwidth must be positive")
        if self.channel_gain < 0:
            raise ValueError("channel gain must be nonnegative")
        if not math.isfinite(self.noise_power_dbm):
            raise ValueError("noise power must be finite")


@dataclass
class MtcDevice:
    """One machine-type device: identity, placement, and its per-RB belief factors."""

    id: int
    slice_id: int
    distance_m: float
    beliefs: list[np.ndarray]

    def __post_init__(self):
        if self.distance_m <= 0:
            raise ValueError("distance must be positive")


@dataclass(frozen=True)
class PreambleConfig:
    """Preamble pool size and the optional fixed collision probability."""

    preamble_count: int
    collision_prob_override: float | None = None

    def __post_init__(self):
        if self.preamble_count < 1:
            raise ValueError("preamble_count must be at least 1")
        p = self.collision_prob_override
        if p is not None and not 0.0 <= p <= 1.0:
            raise ValueError("collision probability override must lie in [0, 1]")


def dbm_to_mw(dbm: float) -> float:
    return 10.0 ** (dbm / 10.0)


def preamble_collision_prob(total_devices: int, same_choice: int, preambles: int) -> float:
    """Probability that exactly ``same_choice`` of ``total_devices`` pick one preamble."""
    if not 0 <= same_choice <= total_devices:
        raise ValueError("same_choice must lie in [0, total_devices]")
    if preambles < 1:
        raise ValueError("preambles must be at least 1")
    p = 1.0 / preambles
    return math.comb(total_devices, same_choice) * p**same_choice * (1.0 - p) ** (
        total_devices - same_choice
    )


def slice_collision_prob(device_count: int, rb_count: int, preambles: int) -> float:
    """Chance some other device of the slice picks the same (RB, preamble) slot.

    Models random-access contention density: each of the other devices lands
    on any of ``rb_count * preambles`` slots uniformly.
    """
    if device_count < 1 or rb_count < 1 or preambles < 1:
        raise ValueError("device, RB and preamble counts must be positive")
    if device_count == 1:
        return 0.0
    return 1.0 - (1.0 - 1.0 / (rb_count * preambles)) ** (device_count - 1)


def path_loss_db(distance_m: float) -> float:
    """Outdoor path loss in dB at the given distance."""
    if distance_m <= 0:
        raise ValueError("distance must be positive")
    return 8.0 + 37.6 * math.log10(distance_m)


def linear_gain(distance_m: float) -> float:
    """Linear power gain implied by the path-loss model."""
    return 10.0 ** (-path_loss_db(distance_m) / 10.0)


def instantaneous_rate(
    rb: ResourceBlockParams,
    busy: bool,
    collision_prob: float,
    interferer_powers_mw=(),
) -> float:
    """Achievable rate on one RB given its true occupancy state.

    ``interferer_powers_mw`` are the received linear powers added to the noise
    in the busy branch.
    """
    if not 0.0 <= collision_prob <= 1.0:
        raise ValueError("collision probability must lie in [0, 1]")
    signal = dbm_to_mw(rb.tx_power_dbm) * rb.channel_gain
    denom = dbm_to_mw(rb.noise_power_dbm)
    if busy:
        interference = float(np.sum(np.asarray(interferer_powers_mw, dtype=float)))
        if interference < 0:
            raise ValueError("interferer powers must be nonnegative")
        denom += interference
    return (1.0 - collision_prob) * rb.bandwidth_hz * math.log2(1.0 + signal / denom)


def slot_reward(action: int, true_rb_states, rates_per_rb) -> float:
    """Reward realised in one slot: 0 for no-access, else the selected RB's rate.

    ``rates_per_rb`` must already be evaluated under each RB's true state.
    """
    states = list(true_rb_states)
    rates = list(rates_per_rb)
    if len(states) != len(rates):
        raise ValueError("states and rates must have matching lengths")
    if action == 0:
        return 0.0
    if not 1 <= action <= len(rates):
        raise ValueError(f"unknown action {action}")
    return float(rates[action - 1])


def discounted_total_reward(rewards, beta: float) -> float:
    """Total reward with slot ``k`` weighted by ``beta ** (K - k - 1)``."""
    if not 0.0 <= beta <= 1.0:
        raise ValueError("beta must lie in [0, 1]")
    r = np.asarray(list(rewards), dtype=float)
    k = r.shape[0]
    weights = beta ** np.arange(k - 1, -1, -1, dtype=float)
    return float(np.dot(weights, r))


def state_bits(rb_count: int) -> np.ndarray:
    """(2**rb_count, rb_count) matrix; entry [s, r] is RB r+1's bit in joint state s.

    RB 1 occupies the least significant bit.
    """
    states = np.arange(2**rb_count)
    return (states[:, None] >> np.arange(rb_count)[None, :]) & 1


def joint_transition(per_rb_matrix: np.ndarray, rb_count: int) -> np.ndarray:
    """Joint chain over independent per-RB chains (Kronecker product)."""
    m = np.asarray(per_rb_matrix, dtype=float)
    if m.shape != (2, 2):
        raise ValueError("per-RB transition must be 2x2")
    out = np.ones((1, 1))
    for _ in range(rb_count):
        # Later factors become more significant bits, so RB 1 stays the LSB.
        out = np.kron(m, out)
    return out


def joint_observation_kernel(rb_count: int, eps: float, phi: float) -> np.ndarray:
    """(A, S, S) flip-channel kernel over joint states and joint observation words.

    Action 0 is no-access (every RB read with error ``phi``); action r reads
    RB r with error ``eps`` and the rest with ``phi``.
    """
    for name, p in (("eps", eps), ("phi", phi)):
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"{name} must lie in [0, 1]")
    bits = state_bits(rb_count)
    n = 2**rb_count
    # match[s, o, r] == 1 where observation word o agrees with state s on RB r+1
    match = (bits[:, None, :] == bits[None, :, :]).astype(float)
    kernel = np.empty((rb_count + 1, n, n))
    for action in range(rb_count + 1):
        err = np.full(rb_count, phi)
        if action > 0:
            err[action - 1] = eps
        per_rb = match * (1.0 - err)[None, None, :] + (1.0 - match) * err[None, None, :]
        kernel[action] = per_rb.prod(axis=2)
    return kernel


def reward_matrix(rates_idle, rates_busy) -> np.ndarray:
    """(S, A) reward table: zero for no-access, else the chosen RB's state-dependent rate."""
    idle = np.asarray(rates_idle, dtype=float)
    busy = np.asarray(rates_busy, dtype=float)
    if idle.shape != busy.shape or idle.ndim != 1:
        raise ValueError("idle and busy rates must be equal-length vectors")
    rb_count = idle.shape[0]
    bits = state_bits(rb_count)
    rewards = np.zeros((2**rb_count, rb_count + 1))
    rewards[:, 1:] = np.where(bits == 1, busy[None, :], idle[None, :])
    return rewards


def device_rates(
    rb_params,
    device_gain: float,
    collision_prob: float,
    occupant_power_dbm: float | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Idle and busy rate vectors for one device across its slice's RBs.

    The busy branch adds the exogenous occupant's received power, computed
    from ``occupant_power_dbm`` (the device's own transmit power when None)
    and the occupant gain stored in each RB's parameters.
    """
    idle = np.empty(len(rb_params))
    busy = np.empty(len(rb_params))
    for i, rb in enumerate(rb_params):
        own = replace(rb, channel_gain=device_gain)
        occ_dbm = rb.tx_power_dbm if occupant_power_dbm is None else occupant_power_dbm
        occupant_power = dbm_to_mw(occ_dbm) * rb.channel_gain
        idle[i] = instantaneous_rate(own, False, collision_prob)
        busy[i] = instantaneous_rate(own, True, collision_prob, [occupant_power])
    return idle, busy


def build_pomdp(
    slice_view,
    device: MtcDevice,
    per_rb_transition,
    eps: float,
    phi: float,
    collision_prob: float,
    rb_cap: int = DEFAULT_JOINT_RB_CAP,
) -> PomdpModel:
    """Assemble the joint decision model for one device in one slice."""
    rb_params = slice_view.rb_params
    rb_count = len(rb_params)
    if rb_count > rb_cap:
        raise StateSpaceTooLarge(
            f"{rb_count} RBs exceeds the joint-enumeration cap of {rb_cap}"
        )
    transition = joint_transition(per_rb_transition, rb_count)
    kernel = joint_observation_kernel(rb_count, eps, phi)
    idle, busy = device_rates(rb_params, linear_gain(device.distance_m), collision_prob)
    rewards = reward_matrix(idle, busy)
    actions = (NO_ACCESS,) + tuple(f"rb_{r + 1}" for r in range(rb_count))
    return PomdpModel(transition, kernel, rewards, actions)
