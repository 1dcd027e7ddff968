"""Dead-beat correction law and integer reallocation tests."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from m2msim.control import (
    AllocationDelta,
    ControllerState,
    rb_correction,
    reallocate,
    smooth_rate,
)


def make_state(omega=0.8, mu=2.0, **kw):
    return ControllerState(omega=omega, mu=mu, **kw)


class TestSmoothing:
    def test_low_pass_step(self):
        assert abs(smooth_rate(2.0, 4.0, 0.8) - (0.8 * 2.0 + 0.2 * 4.0)) < 1e-15

    def test_constant_input_is_a_fixed_point(self):
        q = 1.5
        for _ in range(10):
            q = smooth_rate(q, 1.5, 0.7)
        assert abs(q - 1.5) < 1e-12

    def test_rejects_bad_omega(self):
        with pytest.raises(ValueError):
            smooth_rate(1.0, 1.0, 1.0)


class TestCorrectionLaw:
    def test_formula(self):
        e_now, e_prev, sum_q, mu, omega = 0.3, 0.1, 8.0, 2.0, 0.8
        expected = sum_q / (mu * (1 - omega)) * (e_now - omega * e_prev)
        assert abs(rb_correction(e_now, e_prev, sum_q, mu, omega) - expected) < 1e-12

    def test_zero_gap_zero_correction(self):
        assert rb_correction(0.0, 0.0, 5.0, 2.0, 0.8) == 0.0

    def test_dead_beat_on_linearised_plant(self):
        """Closed loop on the linear rate/RB plant: the share gap is exactly
        zero from the second period on, for random gains and targets."""
        rng = np.random.default_rng(42)
        for _ in range(50):
            n = int(rng.integers(2, 6))
            omega = float(rng.uniform(0.05, 0.95))
            mu = float(rng.uniform(0.5, 5.0))
            targets = rng.dirichlet(np.ones(n))
            r = rng.uniform(1.0, 10.0, size=n)  # real-valued RB allocation
            c_prev = mu * r
            q = c_prev.copy()
            e_prev = np.zeros(n)
            for period in range(2, 8):
                c = mu * r
                q = omega * q + (1 - omega) * c
                xi = q / q.sum()
                e = targets - xi
                if period >= 3:
                    assert np.max(np.abs(e)) < 1e-9
                corr = np.array(
                    [rb_correction(e[l], e_prev[l], q.sum(), mu, omega) for l in range(n)]
                )
                r = r + corr
                e_prev = e


class TestReallocate:
    def test_internal_swap_leaves_pool_unchanged(self):
        state = make_state()
        delta = reallocate([5, 5, 5, 5, 5], 25, [1.0, 0.0, 0.0, 0.0, -1.0], state)
        assert delta.applied == (1, 0, 0, 0, -1)
        assert delta.new_data_rbs == 25
        assert delta.data_rb_change == 0
        assert delta.new_access_counts == (6, 5, 5, 5, 4)

    def test_rounding_half_away_from_zero(self):
        state = make_state()
        delta = reallocate([5, 5], 10, [0.5, -0.5], state)
        assert delta.rounded == (1, -1)
        delta = reallocate([5, 5], 10, [0.4, -0.4], state)
        assert delta.rounded == (0, 0)

    def test_min_rb_floor_clamps_releases(self):
        state = make_state(min_rb_per_slice=1)
        delta = reallocate([1, 5], 10, [0.0, -10.0], state)
        assert delta.applied[0] == 0
        assert delta.new_access_counts[1] == 1
        assert delta.shortfall

    def test_max_rb_cap_clamps_takes(self):
        state = make_state(max_rb_per_slice=8)
        delta = reallocate([5, 5], 10, [10.0, 0.0], state)
        assert delta.new_access_counts[0] == 8

    def test_pool_floor_limits_supply(self):
        state = make_state(data_rb_floor=9)
        delta = reallocate([5, 5], 10, [3.0, 0.0], state)
        assert delta.applied[0] == 1
        assert delta.new_data_rbs == 9
        assert delta.shortfall

    def test_shortfall_split_by_largest_remainder(self):
        state = make_state()
        # demand 4 against supply 3: grants split 2/1 toward the larger ask
        delta = reallocate([5, 5], 3, [3.0, 1.0], state)
        assert sum(a for a in delta.applied if a > 0) == 3
        assert delta.applied[0] >= delta.applied[1]
        assert delta.shortfall

    def test_conservation_always_holds(self):
        state = make_state(max_rb_per_slice=8)
        rng = np.random.default_rng(5)
        for _ in range(200):
            counts = list(rng.integers(1, 9, size=5))
            pool = int(rng.integers(0, 30))
            corr = rng.normal(scale=3.0, size=5)
            delta = reallocate(counts, pool, corr, state)
            assert sum(delta.new_access_counts) + delta.new_data_rbs == sum(counts) + pool
            assert all(c >= state.min_rb_per_slice for c in delta.new_access_counts)
            assert all(c <= 8 for c in delta.new_access_counts)

    @settings(max_examples=100, deadline=None)
    @given(
        st.lists(st.integers(1, 10), min_size=2, max_size=6),
        st.integers(0, 40),
        st.integers(0, 2**32 - 1),
    )
    def test_applied_never_exceeds_rounded_demand(self, counts, pool, seed):
        rng = np.random.default_rng(seed)
        corr = rng.normal(scale=2.0, size=len(counts))
        delta = reallocate(counts, pool, corr, make_state())
        for a, w in zip(delta.applied, delta.rounded):
            if w >= 0:
                assert a <= w
            else:
                assert a >= w

    def test_mismatched_lengths_rejected(self):
        with pytest.raises(ValueError):
            reallocate([5, 5], 10, [1.0], make_state())


class TestControllerState:
    def test_validates_gains(self):
        with pytest.raises(ValueError):
            ControllerState(omega=0.0, mu=2.0)
        with pytest.raises(ValueError):
            ControllerState(omega=0.8, mu=0.0)

    def test_delta_is_frozen(self):
        delta = reallocate([5, 5], 10, [0.0, 0.0], make_state())
        assert isinstance(delta, AllocationDelta)
        with pytest.raises(AttributeError):
            delta.new_data_rbs = 0
