import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qseal.adversary import (
    BREIDBART_DIRECTION,
    IDENTITY_EVOLUTION,
    BitFlip,
    Depolarize,
    EveAction,
    EvolutionString,
    InterceptResend,
    Passive,
    PhaseFlip,
    ProbabilisticMix,
    UnitaryRotation,
    enact,
    parse_strategy,
    shot_distribution,
    string_distribution,
)
from qseal.errors import ExplosionError, ParseError
from qseal.qubit import (
    MAXIMALLY_MIXED,
    RHO_0,
    RHO_1,
    RHO_PLUS,
    PauliAxis,
    Povm,
    QubitState,
    measure,
    random_povm,
    random_state,
)

ALL_STRATEGIES = [
    Passive(), InterceptResend("x"), InterceptResend("z"), InterceptResend("random"),
    InterceptResend("breidbart"), Depolarize(0.4), BitFlip(0.2), PhaseFlip(0.3),
    UnitaryRotation("y", math.pi / 8), ProbabilisticMix([(Passive(), 0.7), (InterceptResend("z"), 0.3)]),
]


class TestEnact:
    def test_passive(self):
        s = QubitState((0.1, 0.2, 0.3))
        out, evo = enact(Passive(), 0, s, np.random.default_rng(0))
        assert out == s and evo == IDENTITY_EVOLUTION

    def test_intercept_z_on_plus(self):
        rng = np.random.default_rng(1)
        seen = {RHO_0: 0, RHO_1: 0}
        for _ in range(4000):
            out, evo = enact(InterceptResend("z"), 0, RHO_PLUS, rng)
            assert evo.is_constant and tuple(evo.offset) == out.bloch
            seen[out] += 1
        assert abs(seen[RHO_0] / 4000 - 0.5) < 4 * math.sqrt(0.25 / 4000)

    def test_full_depolarize(self):
        out, evo = enact(Depolarize(1.0), 0, RHO_0, np.random.default_rng(0))
        assert np.allclose(out.bloch, 0.0, atol=1e-15)
        assert np.allclose(evo.linear, 0.0) and np.allclose(evo.offset, 0.0)

    def test_passive_consumes_no_randomness(self):
        rng = np.random.default_rng(3)
        enact(Passive(), 0, RHO_0, rng)
        assert rng.random() == np.random.default_rng(3).random()

    @pytest.mark.parametrize("basis", ["x", "z", "random", "breidbart"])
    def test_resend_reproduces_outcome(self, basis):
        rng = np.random.default_rng(4)
        strategy = InterceptResend(basis)
        for _ in range(200):
            action = strategy.action_for(0, rng)
            idx, _, _ = measure(action.povm, random_state(rng), rng.random())
            again = measure(action.povm, action.resend[idx], rng.random())
            assert again[0] == idx and again[2] == pytest.approx(1.0)

    def test_breidbart_direction(self):
        assert np.allclose(BREIDBART_DIRECTION, [1 / math.sqrt(2), 0, 1 / math.sqrt(2)])


class TestCustomActions:
    def test_povm_outcome_cap(self):
        rng = np.random.default_rng(0)
        povm = random_povm(rng, 9)
        with pytest.raises(ValueError):
            EveAction.measure_resend(povm, [RHO_0] * 9)

    def test_resend_count_must_match(self):
        with pytest.raises(ValueError):
            EveAction.measure_resend(Povm.pauli(PauliAxis.Z), [RHO_0])


class TestStringDistribution:
    def test_passive(self):
        dist = string_distribution(Passive(), 3)
        assert len(dist) == 1
        S, p = dist[0]
        assert p == 1.0 and list(S) == [IDENTITY_EVOLUTION] * 3

    def test_intercept_z_single_shot(self):
        dist = string_distribution(InterceptResend("z"), 1)
        assert len(dist) == 2
        assert sorted(tuple(S[0].offset) for S, _ in dist) == [(0, 0, -1), (0, 0, 1)]
        assert all(p == pytest.approx(0.5) for _, p in dist)

    def test_intercept_random_single_shot(self):
        dist = string_distribution(InterceptResend("random"), 1)
        assert len(dist) == 4 and all(p == pytest.approx(0.25) for _, p in dist)

    @pytest.mark.parametrize("strategy", ALL_STRATEGIES, ids=lambda s: s.describe())
    def test_normalized(self, strategy):
        assert sum(p for _, p in string_distribution(strategy, 3)) == pytest.approx(1.0, abs=1e-12)

    @pytest.mark.parametrize("strategy", ALL_STRATEGIES, ids=lambda s: s.describe())
    def test_marginal_matches_shot_law(self, strategy):
        n = 3
        dist = string_distribution(strategy, n)
        for i in range(n):
            marginal = {}
            for S, p in dist:
                marginal[S[i]] = marginal.get(S[i], 0.0) + p
            expected = {}
            for evo, p in shot_distribution(strategy, i):
                expected[evo] = expected.get(evo, 0.0) + p
            assert marginal.keys() == expected.keys()
            for k in expected:
                assert marginal[k] == pytest.approx(expected[k], abs=1e-12)

    def test_prior_changes_outcome_weights(self):
        dist = shot_distribution(InterceptResend("z"), 0, RHO_0)
        assert len(dist) == 1 and tuple(dist[0][0].offset) == (0, 0, 1)

    def test_explosion(self):
        with pytest.raises(ExplosionError):
            string_distribution(InterceptResend("random"), 12, cap=1000)

    def test_enact_frequencies_match_shot_law(self):
        rng = np.random.default_rng(8)
        strategy = InterceptResend("breidbart")
        law = {evo: p for evo, p in shot_distribution(strategy, 0, RHO_PLUS)}
        counts = {}
        n = 20_000
        for _ in range(n):
            _, evo = enact(strategy, 0, RHO_PLUS, rng)
            counts[evo] = counts.get(evo, 0) + 1
        for evo, p in law.items():
            assert abs(counts.get(evo, 0) / n - p) < 4 * math.sqrt(p * (1 - p) / n)

    @settings(max_examples=30)
    @given(st.integers(0, 2 ** 31))
    def test_realized_maps_contract(self, seed):
        rng = np.random.default_rng(seed)
        for strategy in ALL_STRATEGIES:
            s = random_state(rng)
            out, evo = enact(strategy, 0, s, rng)
            assert np.linalg.norm(out.vector) <= 1 + 1e-9
            assert np.allclose(evo.apply(s).vector, out.vector, atol=1e-9)


class TestEvolutionString:
    def test_identity_and_subsequence(self):
        S = EvolutionString.identity(4)
        assert len(S) == 4 and len(S.subsequence([0, 2])) == 2


class TestParseStrategy:
    @pytest.mark.parametrize("text, cls", [
        ("passive", Passive),
        ("intercept_resend basis=random", InterceptResend),
        ("depolarize lambda=0.3", Depolarize),
        ("bit_flip p=0.1", BitFlip),
        ("phase_flip p=0.1", PhaseFlip),
        ("rotate axis=y angle=pi/8", UnitaryRotation),
        ("mix 0.7*passive + 0.3*intercept_resend basis=z", ProbabilisticMix),
    ])
    def test_parses(self, text, cls):
        assert isinstance(parse_strategy(text), cls)

    def test_round_trip_describe(self):
        for s in ALL_STRATEGIES:
            again = parse_strategy(s.describe())
            assert string_distribution(again, 2) == string_distribution(s, 2)

    @pytest.mark.parametrize("text", ["teleport", "depolarize lambda=x", "intercept_resend basis=y",
                                      "mix 0.5*passive + 0.6*passive"])
    def test_rejects(self, text):
        with pytest.raises((ParseError, ValueError)):
            parse_strategy(text)

    def test_rotation_angle(self):
        s = parse_strategy("rotate axis=z angle=pi/2")
        out, _ = enact(s, 0, RHO_PLUS, np.random.default_rng(0))
        assert np.allclose(out.bloch, [0, 1, 0], atol=1e-12)

    def test_mixed_has_no_passive_info(self):
        out, evo = enact(parse_strategy("mix 1*passive"), 0, MAXIMALLY_MIXED, np.random.default_rng(0))
        assert evo == IDENTITY_EVOLUTION
