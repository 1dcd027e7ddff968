"""Rate model, joint-chain assembly, and collision probability tests."""

import math

import numpy as np
import pytest

from m2msim.pomdp import NO_ACCESS, StateSpaceTooLarge
from m2msim.radio import (
    MtcDevice,
    PreambleConfig,
    ResourceBlockParams,
    build_pomdp,
    dbm_to_mw,
    device_rates,
    discounted_total_reward,
    instantaneous_rate,
    joint_observation_kernel,
    joint_transition,
    linear_gain,
    path_loss_db,
    preamble_collision_prob,
    reward_matrix,
    slice_collision_prob,
    slot_reward,
    state_bits,
)


def make_rb(gain=1e-10, noise_dbm=-121.0, bw=1.0, tx_dbm=20.0):
    return ResourceBlockParams(
        bandwidth_hz=bw,
        tx_power_dbm=tx_dbm,
        noise_power_dbm=noise_dbm,
        channel_gain=gain,
    )


class TestLinkBudget:
    def test_path_loss_reference_point(self):
        # 8 + 37.6 log10(d); at 1 km the log term is exactly 3.
        assert abs(path_loss_db(1000.0) - (8.0 + 37.6 * 3.0)) < 1e-12

    def test_path_loss_monotone_in_distance(self):
        d = np.linspace(10, 2000, 50)
        pl = [path_loss_db(x) for x in d]
        assert all(pl[i] < pl[i + 1] for i in range(len(pl) - 1))

    def test_linear_gain_inverts_the_loss(self):
        g = linear_gain(500.0)
        assert abs(10 * math.log10(g) + path_loss_db(500.0)) < 1e-12

    def test_dbm_round_trip(self):
        assert abs(dbm_to_mw(0.0) - 1.0) < 1e-15
        assert abs(dbm_to_mw(30.0) - 1000.0) < 1e-9

    def test_distance_must_be_positive(self):
        with pytest.raises(ValueError):
            path_loss_db(0.0)


class TestCollisionProbability:
    def test_single_device_never_collides(self):
        assert slice_collision_prob(1, 5, 64) == 0.0

    def test_matches_complement_formula(self):
        n, r, m = 30, 5, 64
        expected = 1.0 - (1.0 - 1.0 / (r * m)) ** (n - 1)
        assert abs(slice_collision_prob(n, r, m) - expected) < 1e-15

    def test_grows_with_devices_and_shrinks_with_rbs(self):
        assert slice_collision_prob(30, 5, 64) > slice_collision_prob(10, 5, 64)
        assert slice_collision_prob(30, 8, 64) < slice_collision_prob(30, 5, 64)

    def test_binomial_terms_sum_to_one(self):
        n, m = 50, 64
        total = sum(preamble_collision_prob(n, k, m) for k in range(n + 1))
        assert abs(total - 1.0) < 1e-12

    def test_preamble_config_validates_override(self):
        with pytest.raises(ValueError):
            PreambleConfig(64, collision_prob_override=1.5)


class TestInstantaneousRate:
    def test_idle_branch_is_shannon_with_derate(self):
        rb = make_rb()
        signal = dbm_to_mw(rb.tx_power_dbm) * rb.channel_gain
        noise = dbm_to_mw(rb.noise_power_dbm)
        expected = 0.8 * math.log2(1.0 + signal / noise)
        assert abs(instantaneous_rate(rb, False, 0.2) - expected) < 1e-12

    def test_busy_branch_adds_interference(self):
        rb = make_rb()
        idle = instantaneous_rate(rb, False, 0.0)
        busy = instantaneous_rate(rb, True, 0.0, [1e-9])
        assert busy < idle

    def test_full_collision_probability_zeroes_the_rate(self):
        assert instantaneous_rate(make_rb(), False, 1.0) == 0.0

    def test_slot_reward_selects_the_acted_rb(self):
        rates = [1.0, 2.0, 3.0]
        assert slot_reward(0, [0, 0, 0], rates) == 0.0
        assert slot_reward(2, [0, 0, 0], rates) == 2.0
        with pytest.raises(ValueError):
            slot_reward(4, [0, 0, 0], rates)

    def test_discounted_total_final_slot_weight_one(self):
        # weights are beta^(K-k-1): [0.25, 0.5, 1] at beta = 0.5
        total = discounted_total_reward([1.0, 1.0, 1.0], 0.5)
        assert abs(total - 1.75) < 1e-12


class TestJointModel:
    def test_state_bits_rb1_is_lsb(self):
        bits = state_bits(3)
        np.testing.assert_array_equal(bits[1], [1, 0, 0])
        np.testing.assert_array_equal(bits[4], [0, 0, 1])

    def test_joint_transition_matches_direct_enumeration(self):
        m = np.array([[0.9, 0.1], [0.25, 0.75]])
        joint = joint_transition(m, 2)
        bits = state_bits(2)
        for s in range(4):
            for s2 in range(4):
                expected = m[bits[s, 0], bits[s2, 0]] * m[bits[s, 1], bits[s2, 1]]
                assert abs(joint[s, s2] - expected) < 1e-15

    def test_joint_transition_rows_stochastic(self):
        m = np.array([[0.7, 0.3], [0.4, 0.6]])
        joint = joint_transition(m, 3)
        np.testing.assert_allclose(joint.sum(axis=1), 1.0, atol=1e-12)

    def test_kernel_noiseless_is_identity(self):
        kernel = joint_observation_kernel(2, 0.0, 0.0)
        for a in range(3):
            np.testing.assert_array_equal(kernel[a], np.eye(4))

    def test_kernel_sensed_rb_uses_eps(self):
        eps, phi = 0.2, 0.05
        kernel = joint_observation_kernel(2, eps, phi)
        # action 1 senses RB 1; from state 0 the word flipping only bit 0 has
        # probability eps * (1 - phi)
        assert abs(kernel[1, 0, 1] - eps * (1 - phi)) < 1e-15
        # and flipping only bit 1 has probability (1 - eps) * phi
        assert abs(kernel[1, 0, 2] - (1 - eps) * phi) < 1e-15

    def test_kernel_rows_stochastic(self):
        kernel = joint_observation_kernel(3, 0.1, 0.3)
        np.testing.assert_allclose(kernel.sum(axis=2), 1.0, atol=1e-12)

    def test_reward_matrix_picks_branch_by_state_bit(self):
        idle = np.array([3.0, 4.0])
        busy = np.array([1.0, 2.0])
        r = reward_matrix(idle, busy)
        assert r.shape == (4, 3)
        np.testing.assert_array_equal(r[:, 0], 0.0)
        assert r[0, 1] == 3.0  # RB 1 idle
        assert r[1, 1] == 1.0  # RB 1 busy
        assert r[1, 2] == 4.0  # RB 2 still idle in state 0b01

    def test_device_rates_uses_occupant_power(self):
        rb = make_rb(gain=1e-12)
        weak, _ = device_rates([rb], 1e-10, 0.0, occupant_power_dbm=20.0)
        _, strong_busy = device_rates([rb], 1e-10, 0.0, occupant_power_dbm=40.0)
        _, weak_busy = device_rates([rb], 1e-10, 0.0, occupant_power_dbm=20.0)
        assert strong_busy[0] < weak_busy[0] < weak[0]


class TestBuildPomdp:
    class _SliceView:
        def __init__(self, rb_params):
            self.rb_params = rb_params

    def test_small_slice_assembles_consistent_model(self):
        params = [make_rb(gain=1e-10), make_rb(gain=2e-10)]
        dev = MtcDevice(id=0, slice_id=1, distance_m=300.0, beliefs=[])
        m = np.array([[0.9, 0.1], [0.25, 0.75]])
        model = build_pomdp(self._SliceView(params), dev, m, 0.1, 0.1, 0.2)
        assert model.n_states == 4
        assert model.n_actions == 3
        assert model.actions[0] == NO_ACCESS
        assert np.all(model.rewards[:, 0] == 0.0)

    def test_rb_cap_guard(self):
        params = [make_rb() for _ in range(3)]
        dev = MtcDevice(id=0, slice_id=1, distance_m=300.0, beliefs=[])
        m = np.array([[0.9, 0.1], [0.25, 0.75]])
        with pytest.raises(StateSpaceTooLarge):
            build_pomdp(self._SliceView(params), dev, m, 0.1, 0.1, 0.2, rb_cap=2)
