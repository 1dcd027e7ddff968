"""Seeded discrete-time simulation loop.

One run evolves every physical RB's idle/busy Markov chain slot by slot,
lets each device pick an RB (or abstain) from its slice's solved policy,
realises rewards under intra-slot contention, feeds noisy observations back
into per-RB belief factors, and at each period boundary invokes the
rate-share controller to move RBs between slices and the data-phase pool.

Randomness is split into four independent child streams of the seed so that
runs differing only in scheme or sensing error share the same topology,
occupancy sample path, and attempt pattern (common random numbers):

1. init stream: device distances (``n_devices`` draws), occupant distances
   for every physical RB (``total_rbs``), per-(device, RB) fading factors
   (``n_devices * total_rbs``), initial RB states (``total_rbs``);
2. state stream: one draw per physical RB per slot for the transitions;
3. attempt stream: per slot, per slice in ascending order, one draw per
   device (only when ``attempt_prob < 1``);
4. observation stream: per slot, per slice in ascending order, the
   observation draws (device-major, RB-minor) for the sensing schemes.

Schemes without observations consume no observation draws; the perfect
knowledge scheme reads the true state and consumes none either.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import pomdp
from .config import SimConfig
from .control import ControllerState, reallocate, rb_correction, smooth_rate
from .radio import (
    PreambleConfig,
    dbm_to_mw,
    joint_observation_kernel,
    joint_transition,
    linear_gain,
    reward_matrix,
    slice_collision_prob,
)
from .slicing import (
    AllRatesZero,
    PhysicalCell,
    compute_ratios,
    period_obtained_rate,
    slice_network,
)

OBSERVING_SCHEMES = ("pomdp_with_loop", "pomdp_no_loop")


@dataclass(frozen=True)
class MetricsRecord:
    """Per-(period, slice) observables of one run."""

    period: int
    slice_id: int
    c_l: float
    q_l: float
    xi_l: float
    xi_target: float
    e_l: float
    r_l: int
    delta_r_real: float
    delta_r_applied: int
    mean_reward: float


@dataclass(frozen=True)
class SimResult:
    """Everything a run emits: config echo, period records, optional slot trace."""

    config: SimConfig
    records: tuple[MetricsRecord, ...]
    trace: tuple[dict, ...] | None = None


def stationary_distribution(per_rb_matrix) -> np.ndarray:
    """Stationary law of a 2-state chain; uniform when the chain never moves."""
    m = np.asarray(per_rb_matrix, dtype=float)
    denom = m[0, 1] + m[1, 0]
    if denom <= 0.0:
        return np.array([0.5, 0.5])
    return np.array([m[1, 0], m[0, 1]]) / denom


def evolve_states(states, per_rb_matrix, rng: np.random.Generator) -> np.ndarray:
    """One Markov step for every RB; one uniform draw per RB, index ascending."""
    s = np.asarray(states)
    m = np.asarray(per_rb_matrix, dtype=float)
    u = rng.random(s.shape[0])
    p_busy = m[s, 1]
    return (u < p_busy).astype(np.int8)


def gen_observation(true_states, action: int, eps: float, phi: float, rng) -> np.ndarray:
    """Noisy read of every RB: the sensed RB flips with ``eps``, the rest with ``phi``."""
    s = np.asarray(true_states)
    flip_p = np.full(s.shape[0], phi)
    if action > 0:
        flip_p[action - 1] = eps
    u = rng.random(s.shape[0])
    return (s ^ (u < flip_p)).astype(np.int8)


@lru_cache(maxsize=64)
def _cached_transition(matrix_key: tuple, rb_count: int) -> np.ndarray:
    return joint_transition(np.asarray(matrix_key, dtype=float), rb_count)


@lru_cache(maxsize=256)
def _cached_kernel(rb_count: int, eps: float, phi: float) -> np.ndarray:
    return joint_observation_kernel(rb_count, eps, phi)


class _SliceRuntime:
    """Mutable per-slice simulation state: devices, RB inventory, beliefs, policy."""

    def __init__(self, vnet, gains, bandwidth_hz, stationary):
        self.slice_id = vnet.slice_id
        self.weight = vnet.weight
        self.device_ids = np.array([d.id for d in vnet.devices], dtype=int)
        self.gains = np.asarray(gains, dtype=float)
        self.bandwidth_hz = bandwidth_hz
        self.rb_ids = list(vnet.rb_ids)
        self.stationary = stationary
        self.n_devices = len(self.device_ids)
        self.beliefs = np.tile(stationary, (self.n_devices, len(self.rb_ids), 1))
        self.rates_idle = None
        self.rates_busy = None
        self.sig = None
        self.occ_power = None
        self.derate = None
        self.stage_coeffs = None
        self.stage_actions = None

    @property
    def rb_count(self) -> int:
        return len(self.rb_ids)


class Simulation:
    """One seeded run of the sliced random-access system."""

    def __init__(self, config: SimConfig):
        self.config = config
        cfg = config
        streams = np.random.SeedSequence(cfg.seed).spawn(4)
        self.rng = np.random.default_rng(streams[0])
        self.state_rng = np.random.default_rng(streams[1])
        self.attempt_rng = np.random.default_rng(streams[2])
        self.obs_rng = np.random.default_rng(streams[3])
        self.fixed_collision = cfg.fixed_collision_prob()
        self.noise_mw = dbm_to_mw(cfg.noise_power_dbm)
        self.tx_mw = dbm_to_mw(cfg.tx_power_dbm)
        self.occupant_mw = dbm_to_mw(cfg.occupant_power_dbm)
        self.per_rb_matrix = np.asarray(cfg.rb_transition, dtype=float)
        self.stationary = stationary_distribution(self.per_rb_matrix)
        # Planning-side sensing errors are capped at the uninformative point;
        # generation always uses the configured values.
        self.eps_model = min(cfg.eps, 0.5)
        self.phi_model = min(cfg.phi, 0.5)
        self.horizon = min(cfg.dp_horizon, cfg.slots_per_period)

        cell = PhysicalCell(
            device_count=cfg.n_devices,
            total_rbs=cfg.total_rbs,
            access_rbs=cfg.access_rbs,
            data_rbs=cfg.data_rbs,
            cell_radius_m=cfg.cell_radius_m,
            preambles=PreambleConfig(cfg.preamble_count, cfg.pr_s),
        )
        device_distances = cfg.cell_radius_m * np.sqrt(self.rng.random(cfg.n_devices))
        occupant_distances = cfg.cell_radius_m * np.sqrt(self.rng.random(cfg.total_rbs))
        self.occupant_gains = np.array([linear_gain(d) for d in occupant_distances])
        # Frequency-selective (Rayleigh power) fading: each device sees its own
        # unit-mean gain factor on every physical RB, fixed for the whole run.
        self.fading = self.rng.standard_exponential((cfg.n_devices, cfg.total_rbs))

        vnets = slice_network(
            cell,
            cfg.weights,
            cfg.device_counts,
            bandwidth_hz=cfg.bandwidth_per_slice(),
            tx_power_dbm=cfg.tx_power_dbm,
            noise_power_dbm=cfg.noise_power_dbm,
            occupant_gains=self.occupant_gains[: cfg.access_rbs],
            device_distances=device_distances,
        )
        bw = cfg.bandwidth_per_slice()
        self.slices = []
        for l, vnet in enumerate(vnets):
            gains = [linear_gain(d.distance_m) for d in vnet.devices]
            self.slices.append(_SliceRuntime(vnet, gains, bw[l], self.stationary))
        self.data_pool = list(range(cfg.access_rbs, cfg.total_rbs))
        self.states = (self.rng.random(cfg.total_rbs) < self.stationary[1]).astype(np.int8)

        self.controller = ControllerState(
            omega=cfg.omega,
            mu=cfg.mu,
            min_rb_per_slice=cfg.min_rb_per_slice,
            data_rb_floor=cfg.data_rb_floor,
            max_rb_per_slice=cfg.max_rb_per_slice,
        )
        self.xi_targets = np.asarray(cfg.weights, dtype=float)
        self.xi_targets = self.xi_targets / self.xi_targets.sum()
        for rt in self.slices:
            self._rebuild_policy(rt)

    # -- policy ------------------------------------------------------------

    def _collision_prob(self, rt: _SliceRuntime) -> float:
        if self.fixed_collision is not None:
            return self.fixed_collision
        return slice_collision_prob(
            rt.n_devices, rt.rb_count, self.config.preamble_count
        )

    def _slice_rates(self, rt: _SliceRuntime) -> tuple[np.ndarray, np.ndarray]:
        """Idle/busy rate tables (device, RB) for the slice's current RBs."""
        fading = self.fading[np.ix_(rt.device_ids, rt.rb_ids)]
        sig = self.tx_mw * rt.gains[:, None] * fading
        occ = self.occupant_mw * self.occupant_gains[rt.rb_ids]
        derate = (1.0 - self._collision_prob(rt)) * rt.bandwidth_hz
        rt.sig = sig
        rt.occ_power = occ
        rt.derate = derate
        idle = derate * np.log2(1.0 + sig / self.noise_mw)
        busy = derate * np.log2(1.0 + sig / (self.noise_mw + occ[None, :]))
        return idle, busy

    def _rebuild_policy(self, rt: _SliceRuntime):
        """Re-solve every device's decision model for the slice's current RB set."""
        cfg = self.config
        r = rt.rb_count
        transition = _cached_transition(cfg.rb_transition, r)
        kernel = _cached_kernel(r, self.eps_model, self.phi_model)
        rt.rates_idle, rt.rates_busy = self._slice_rates(rt)
        actions = (pomdp.NO_ACCESS,) + tuple(f"rb_{i + 1}" for i in range(r))
        per_device_stages = []
        for n in range(rt.n_devices):
            rewards = reward_matrix(rt.rates_idle[n], rt.rates_busy[n])
            model = pomdp.PomdpModel(transition, kernel, rewards, actions)
            per_device_stages.append(
                pomdp.solve(
                    model, self.horizon, discount=cfg.beta, tol=cfg.prune_tol
                )
            )
        s = 2**r
        rt.stage_coeffs = []
        rt.stage_actions = []
        for k in range(self.horizon):
            m_max = max(len(st[k].alphas) for st in per_device_stages)
            coeffs = np.full((rt.n_devices, m_max, s), pomdp.NEG_FILL)
            tags = np.zeros((rt.n_devices, m_max), dtype=int)
            for n, st in enumerate(per_device_stages):
                mat = st[k].matrix()
                acts = st[k].action_tags()
                # Sort by action tag first so a flat argmax resolves exact
                # value ties toward the lowest action index.
                keys = tuple(mat[:, j] for j in range(s - 1, -1, -1)) + (acts,)
                order = np.lexsort(keys)
                mat = mat[order]
                acts = acts[order]
                coeffs[n, : mat.shape[0]] = mat
                tags[n, : mat.shape[0]] = acts
            rt.stage_coeffs.append(coeffs)
            rt.stage_actions.append(tags)

    def _stage_index(self, slot_in_period: int) -> int:
        remaining = self.config.slots_per_period - slot_in_period
        return 0 if remaining >= self.horizon else self.horizon - remaining

    # -- per-slot mechanics ------------------------------------------------

    def _joint_beliefs(self, rt: _SliceRuntime) -> np.ndarray:
        """(device, 2**R) joint beliefs from the per-RB factors; RB 1 is the LSB."""
        joint = rt.beliefs[:, 0, :]
        for r in range(1, rt.rb_count):
            joint = np.einsum("ns,nt->nts", joint, rt.beliefs[:, r, :]).reshape(
                rt.n_devices, -1
            )
        return joint

    def _choose_actions(
        self, rt: _SliceRuntime, stage_idx: int, attempting: np.ndarray | None = None
    ) -> np.ndarray:
        coeffs = rt.stage_coeffs[stage_idx]
        tags = rt.stage_actions[stage_idx]
        if self.config.scheme == "perfect_knowledge":
            # Devices act in id order and see the slot's in-progress marks:
            # an RB taken by an earlier device reads as busy, so informed
            # devices spread over the idle RBs instead of piling onto one.
            # Devices sitting out this slot neither choose nor mark.
            powers = 1 << np.arange(rt.rb_count)
            marked = self.states[rt.rb_ids].astype(int).copy()
            actions = np.zeros(rt.n_devices, dtype=int)
            for n in range(rt.n_devices):
                if attempting is not None and not attempting[n]:
                    continue
                s_idx = int(marked @ powers)
                best = int(coeffs[n, :, s_idx].argmax())
                a = int(tags[n, best])
                actions[n] = a
                if a > 0:
                    marked[a - 1] = 1
            return actions
        else:
            joint = self._joint_beliefs(rt)
            values = np.einsum("nms,ns->nm", coeffs, joint)
        best = values.argmax(axis=1)
        return tags[np.arange(rt.n_devices), best]

    def _realise_rewards(self, rt: _SliceRuntime, actions: np.ndarray) -> np.ndarray:
        """Rewards in device-id order with intra-slot contention.

        Each transmitter sees the accumulated received power already on its
        RB: the exogenous occupant when the RB is truly busy, plus every
        lower-id device of the slice that picked the same RB this slot.  A
        device landing on a clean idle RB therefore earns exactly its modelled
        idle rate, and the first device on a busy RB its modelled busy rate.
        """
        truth = self.states[rt.rb_ids]
        interference = np.where(truth == 1, rt.occ_power, 0.0)
        rewards = np.zeros(rt.n_devices)
        for n in range(rt.n_devices):
            a = int(actions[n])
            if a == 0:
                continue
            rewards[n] = rt.derate * np.log2(
                1.0 + rt.sig[n, a - 1] / (self.noise_mw + interference[a - 1])
            )
            interference[a - 1] += rt.sig[n, a - 1]
        return rewards

    def _observe_and_update(self, rt: _SliceRuntime, actions: np.ndarray) -> np.ndarray:
        """Draw each device's observation of the post-transition states and filter."""
        truth = self.states[rt.rb_ids]
        flip_true = np.full((rt.n_devices, rt.rb_count), self.config.phi)
        flip_model = np.full((rt.n_devices, rt.rb_count), self.phi_model)
        accessing = actions > 0
        rows = np.flatnonzero(accessing)
        flip_true[rows, actions[rows] - 1] = self.config.eps
        flip_model[rows, actions[rows] - 1] = self.eps_model
        u = self.obs_rng.random((rt.n_devices, rt.rb_count))
        obs = truth[None, :] ^ (u < flip_true)

        predicted = rt.beliefs @ self.per_rb_matrix
        lik_busy = np.where(obs == 1, 1.0 - flip_model, flip_model)
        lik_idle = np.where(obs == 0, 1.0 - flip_model, flip_model)
        post_idle = predicted[:, :, 0] * lik_idle
        post_busy = predicted[:, :, 1] * lik_busy
        norm = post_idle + post_busy
        dead = norm <= 0.0
        if np.any(dead):
            # Zero-likelihood observation: reset those factors to stationary.
            post_idle = np.where(dead, self.stationary[0], post_idle)
            post_busy = np.where(dead, self.stationary[1], post_busy)
            norm = post_idle + post_busy
        rt.beliefs = np.stack([post_idle / norm, post_busy / norm], axis=2)
        return obs

    def _predict_only(self, rt: _SliceRuntime):
        rt.beliefs = rt.beliefs @ self.per_rb_matrix

    def run_slot(self, slot_in_period: int):
        """Advance one slot: act, collect rewards, evolve states, observe.

        Returns per-slice (actions, rewards, observations); observations is
        None for the schemes that never sense.
        """
        cfg = self.config
        stage_idx = self._stage_index(slot_in_period)
        per_slice = []
        for rt in self.slices:
            attempting = None
            if cfg.attempt_prob < 1.0:
                attempting = self.attempt_rng.random(rt.n_devices) < cfg.attempt_prob
            actions = self._choose_actions(rt, stage_idx, attempting)
            if attempting is not None:
                actions = np.where(attempting, actions, 0)
            rewards = self._realise_rewards(rt, actions)
            per_slice.append([actions, rewards, None])
        self.states = evolve_states(self.states, self.per_rb_matrix, self.state_rng)
        for rt, entry in zip(self.slices, per_slice):
            if cfg.scheme in OBSERVING_SCHEMES:
                entry[2] = self._observe_and_update(rt, entry[0])
            elif cfg.scheme == "no_observation_no_loop":
                self._predict_only(rt)
            # perfect_knowledge needs no belief tracking
        return per_slice

    # -- period loop -------------------------------------------------------

    def _apply_reallocation(self, delta):
        """Move physical RBs per the applied corrections and refresh policies."""
        changed = []
        for l, rt in enumerate(self.slices):
            a = delta.applied[l]
            if a < 0:
                released = [rt.rb_ids.pop() for _ in range(-a)]
                rt.beliefs = rt.beliefs[:, : rt.rb_count, :]
                self.data_pool.extend(released)
                changed.append(rt)
        self.data_pool.sort()
        for l, rt in enumerate(self.slices):
            a = delta.applied[l]
            if a > 0:
                taken = self.data_pool[:a]
                del self.data_pool[:a]
                rt.rb_ids.extend(taken)
                fresh = np.tile(self.stationary, (rt.n_devices, a, 1))
                rt.beliefs = np.concatenate([rt.beliefs, fresh], axis=1)
                changed.append(rt)
        for rt in changed:
            self._rebuild_policy(rt)

    def _check_conservation(self):
        held = [rb for rt in self.slices for rb in rt.rb_ids] + self.data_pool
        if sorted(held) != list(range(self.config.total_rbs)):
            raise AssertionError("physical RB inventory lost or duplicated")

    def run(self, collect_trace: bool = False) -> SimResult:
        cfg = self.config
        records = []
        trace = [] if collect_trace else None
        self.pool_history: list[int] = []
        q_prev = None
        e_prev = np.zeros(cfg.n_slices)
        for period in range(1, cfg.periods + 1):
            reward_sums = np.zeros(cfg.n_slices)
            discounted = [np.zeros(rt.n_devices) for rt in self.slices]
            for k in range(cfg.slots_per_period):
                weight = cfg.beta ** (cfg.slots_per_period - k - 1)
                global_slot = (period - 1) * cfg.slots_per_period + k
                per_slice = self.run_slot(k)
                for l, (actions, rewards, obs) in enumerate(per_slice):
                    reward_sums[l] += rewards.sum()
                    discounted[l] += weight * rewards
                    if collect_trace:
                        rt = self.slices[l]
                        for n in range(rt.n_devices):
                            trace.append(
                                {
                                    "slot": global_slot,
                                    "period": period,
                                    "device_id": int(rt.device_ids[n]),
                                    "slice_id": rt.slice_id,
                                    "action": int(actions[n]),
                                    "observation": None
                                    if obs is None
                                    else [int(b) for b in obs[n]],
                                    "reward": float(rewards[n]),
                                }
                            )

            c_now = np.array(
                [
                    period_obtained_rate(
                        [reward_sums[l]], rt.n_devices, cfg.slots_per_period
                    )
                    for l, rt in enumerate(self.slices)
                ]
            )
            q_now = (
                c_now.copy()
                if q_prev is None
                else np.array(
                    [
                        smooth_rate(q_prev[l], c_now[l], cfg.omega)
                        for l in range(cfg.n_slices)
                    ]
                )
            )
            # Shares and gaps come from the smoothed rates: that is what the
            # dead-beat law acts on, and it keeps e_l = xi_target - xi_l.
            try:
                metrics = compute_ratios(q_now, cfg.weights)
                xi_now = np.array([m.obtained_ratio for m in metrics])
                e_now = np.array([m.gap for m in metrics])
            except AllRatesZero:
                xi_now = np.full(cfg.n_slices, np.nan)
                e_now = np.full(cfg.n_slices, np.nan)
            sum_q = q_now.sum()

            delta = None
            if cfg.uses_loop and period < cfg.periods and np.all(np.isfinite(e_now)):
                corrections = [
                    rb_correction(e_now[l], e_prev[l], sum_q, cfg.mu, cfg.omega)
                    for l in range(cfg.n_slices)
                ]
                delta = reallocate(
                    [rt.rb_count for rt in self.slices],
                    len(self.data_pool),
                    corrections,
                    self.controller,
                )

            for l, rt in enumerate(self.slices):
                records.append(
                    MetricsRecord(
                        period=period,
                        slice_id=rt.slice_id,
                        c_l=float(c_now[l]),
                        q_l=float(q_now[l]),
                        xi_l=float(xi_now[l]),
                        xi_target=float(self.xi_targets[l]),
                        e_l=float(e_now[l]),
                        r_l=rt.rb_count,
                        delta_r_real=0.0 if delta is None else delta.real[l],
                        delta_r_applied=0 if delta is None else delta.applied[l],
                        mean_reward=float(discounted[l].mean()),
                    )
                )

            # Pool size as of the records just emitted (pre-reallocation).
            self.pool_history.append(len(self.data_pool))
            if delta is not None:
                self._apply_reallocation(delta)
            self._check_conservation()
            q_prev = q_now
            if np.all(np.isfinite(e_now)):
                e_prev = e_now
            self.controller.filtered_rates = [float(q) for q in q_now]
            self.controller.prev_gaps = [float(e) for e in e_prev]

        return SimResult(
            config=cfg,
            records=tuple(records),
            trace=None if trace is None else tuple(trace),
        )


def run_simulation(config: SimConfig, collect_trace: bool = False) -> SimResult:
    """Execute one seeded run and return its period records (and optional trace)."""
    return Simulation(config).run(collect_trace=collect_trace)
