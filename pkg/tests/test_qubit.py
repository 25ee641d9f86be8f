import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qseal.errors import ChannelNotTracePreserving, InvalidPovm, NotContractive
from qseal.qubit import (
    MAXIMALLY_MIXED,
    RHO_0,
    RHO_1,
    RHO_MINUS,
    RHO_PLUS,
    SIGMA_X,
    SIGMA_Y,
    SIGMA_Z,
    EffectiveEvolution,
    KrausChannel,
    PauliAxis,
    Povm,
    QubitState,
    apply_channel,
    channel_to_affine,
    expectation,
    measure,
    outcome_probabilities,
    random_channel,
    random_povm,
    random_state,
)

I2 = np.eye(2)
seeds = st.integers(min_value=0, max_value=2 ** 32 - 1)


def full_depolarizing():
    return KrausChannel([0.5 * I2, 0.5 * SIGMA_X, 0.5 * SIGMA_Y, 0.5 * SIGMA_Z])


def phase_flip(lam):
    return KrausChannel([math.sqrt(1 - lam) * I2, math.sqrt(lam) * SIGMA_Z])


class TestQubitState:
    def test_named_states(self):
        assert RHO_0.bloch == (0.0, 0.0, 1.0)
        assert RHO_1.bloch == (0.0, 0.0, -1.0)
        assert RHO_PLUS.bloch == (1.0, 0.0, 0.0)
        assert RHO_MINUS.bloch == (-1.0, 0.0, 0.0)
        assert MAXIMALLY_MIXED.bloch == (0.0, 0.0, 0.0)

    def test_rejects_outside_ball(self):
        with pytest.raises(ValueError):
            QubitState((1.0, 0.1, 0.0))

    def test_tolerates_roundoff(self):
        QubitState((1.0 + 5e-13, 0.0, 0.0))

    def test_matrix_round_trip(self):
        s = QubitState((0.3, -0.2, 0.5))
        rho = s.matrix()
        assert np.trace(rho).real == pytest.approx(1.0, abs=1e-15)
        assert np.allclose(QubitState.from_matrix(rho).bloch, s.bloch)


class TestExpectation:
    @pytest.mark.parametrize("axis, state, expected", [
        (PauliAxis.Z, RHO_0, 1.0),
        (PauliAxis.X, RHO_0, 0.0),
        (PauliAxis.X, RHO_MINUS, -1.0),
    ])
    def test_examples(self, axis, state, expected):
        assert expectation(axis, state) == expected

    @given(seeds)
    def test_bounded(self, seed):
        s = random_state(np.random.default_rng(seed))
        for axis in PauliAxis:
            assert -1.0 <= expectation(axis, s) <= 1.0


class TestKrausChannel:
    def test_identity(self):
        s = QubitState((0.2, 0.4, -0.6))
        assert np.allclose(apply_channel(KrausChannel([I2]), s).bloch, s.bloch, atol=1e-15)

    def test_full_depolarizing_to_mixed(self):
        out = apply_channel(full_depolarizing(), RHO_0)
        assert np.allclose(out.bloch, 0.0, atol=1e-15)

    def test_phase_flip_half_on_plus(self):
        out = apply_channel(phase_flip(0.5), RHO_PLUS)
        assert np.allclose(out.bloch, 0.0, atol=1e-15)

    def test_incomplete_set_rejected(self):
        with pytest.raises(ChannelNotTracePreserving):
            KrausChannel([0.9 * I2])

    def test_empty_rejected(self):
        with pytest.raises(ChannelNotTracePreserving):
            KrausChannel([])

    @settings(max_examples=50)
    @given(seeds)
    def test_stays_in_ball(self, seed):
        rng = np.random.default_rng(seed)
        ch = random_channel(rng, int(rng.integers(1, 5)))
        out = apply_channel(ch, random_state(rng))
        assert np.linalg.norm(out.vector) <= 1 + 1e-9


class TestChannelToAffine:
    def test_identity(self):
        evo = channel_to_affine(KrausChannel([I2]))
        assert np.allclose(evo.linear, np.eye(3)) and np.allclose(evo.offset, 0.0)

    def test_full_depolarizing(self):
        evo = channel_to_affine(full_depolarizing())
        assert np.allclose(evo.linear, 0.0) and np.allclose(evo.offset, 0.0)

    def test_phase_flip_quarter(self):
        evo = channel_to_affine(phase_flip(0.25))
        assert np.allclose(evo.linear, np.diag([0.5, 0.5, 1.0])) and np.allclose(evo.offset, 0.0)

    def test_amplitude_damping_has_offset(self):
        g = 0.3
        ch = KrausChannel([np.array([[1, 0], [0, math.sqrt(1 - g)]]), np.array([[0, math.sqrt(g)], [0, 0]])])
        evo = channel_to_affine(ch)
        assert np.allclose(evo.offset, [0, 0, g])
        assert np.allclose(np.diag(evo.linear), [math.sqrt(1 - g), math.sqrt(1 - g), 1 - g])

    def test_matches_direct_application(self):
        rng = np.random.default_rng(1)
        worst = 0.0
        for _ in range(1000):
            ch = random_channel(rng, int(rng.integers(1, 5)))
            s = random_state(rng)
            worst = max(worst, np.max(np.abs(channel_to_affine(ch).apply(s).vector - apply_channel(ch, s).vector)))
        assert worst <= 1e-10


class TestEffectiveEvolution:
    def test_expanding_map_rejected(self):
        with pytest.raises(NotContractive):
            EffectiveEvolution(1.1 * np.eye(3), np.zeros(3))

    def test_offset_pushing_out_rejected(self):
        with pytest.raises(NotContractive):
            EffectiveEvolution(0.8 * np.eye(3), np.array([0.0, 0.0, 0.3]))

    def test_constant_map(self):
        evo = EffectiveEvolution.constant(RHO_1)
        assert evo.is_constant
        assert evo.apply(RHO_PLUS) == RHO_1

    def test_equality_and_hash(self):
        a = EffectiveEvolution.identity()
        b = EffectiveEvolution.identity()
        assert a == b and hash(a) == hash(b)


class TestMeasure:
    def test_z_on_zero(self):
        povm = Povm.pauli(PauliAxis.Z)
        idx, post, prob = measure(povm, RHO_0, draw=0.999)
        assert (idx, post, prob) == (0, RHO_0, 1.0)

    def test_z_on_plus(self):
        povm = Povm.pauli(PauliAxis.Z)
        assert np.allclose(outcome_probabilities(povm, RHO_PLUS), [0.5, 0.5])
        assert measure(povm, RHO_PLUS, draw=0.2)[1] == RHO_0
        assert measure(povm, RHO_PLUS, draw=0.7)[1] == RHO_1

    def test_x_on_mixed(self):
        povm = Povm.pauli(PauliAxis.X)
        assert np.allclose(outcome_probabilities(povm, MAXIMALLY_MIXED), [0.5, 0.5])
        assert measure(povm, MAXIMALLY_MIXED, draw=0.1)[1] == RHO_PLUS
        assert measure(povm, MAXIMALLY_MIXED, draw=0.9)[1] == RHO_MINUS

    def test_incomplete_povm_rejected(self):
        with pytest.raises(InvalidPovm):
            Povm([np.diag([1.0, 0.0])])

    @settings(max_examples=100)
    @given(seeds, st.integers(min_value=2, max_value=6))
    def test_probabilities_sum_to_one(self, seed, d):
        rng = np.random.default_rng(seed)
        probs = outcome_probabilities(random_povm(rng, d), random_state(rng))
        assert probs.min() >= -1e-15
        assert probs.sum() == pytest.approx(1.0, abs=1e-12)
