import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qseal.adversary import (
    IDENTITY_EVOLUTION,
    Depolarize,
    EvolutionString,
    InterceptResend,
    shot_distribution,
)
from qseal.errors import DomainError, EmptyCandidateSet, LengthMismatch
from qseal.infotheory import announcement_prob
from qseal.protocol import Announcement, PreparedState, SessionParams, ShotRecord, matched
from qseal.qubit import RHO_0, EffectiveEvolution, PauliAxis
from qseal.simnet import run_session
from qseal.verifier import (
    ResultEvidence,
    SearchFamily,
    epsilon_from_delta,
    exact_class_optimum,
    exposure,
    get_family,
    intercept_family,
    matched_error_rate,
    result_likelihood,
    result_log_likelihood,
    sigma_member,
)

X, Z = PauliAxis.X, PauliAxis.Z
DEPOLARIZE_ALL = EffectiveEvolution(np.zeros((3, 3)), np.zeros(3))


def evidence_one(ann, prep=PreparedState.Z0):
    return ResultEvidence.from_records([ShotRecord(0, ann, prep)])


def transcript(strategy=None, p_a=0.3, n=12, seed=0):
    return run_session(SessionParams(p_a=p_a, n=n, seed=seed), strategy)


class TestResultLikelihood:
    def test_matched_consistent(self):
        ev = evidence_one(Announcement.result(Z, 1))
        assert result_likelihood(ev, [IDENTITY_EVOLUTION], 0.5) == pytest.approx(0.25)

    def test_contradiction(self):
        ev = evidence_one(Announcement.result(Z, -1))
        assert result_likelihood(ev, [IDENTITY_EVOLUTION], 0.5) == 0.0
        assert result_log_likelihood(ev, [IDENTITY_EVOLUTION], 0.5) == -math.inf

    @pytest.mark.parametrize("prep", list(PreparedState))
    @pytest.mark.parametrize("ann", [Announcement.result(X, 1), Announcement.result(Z, -1)])
    def test_full_depolarize(self, prep, ann):
        ev = evidence_one(ann, prep)
        assert result_likelihood(ev, [DEPOLARIZE_ALL], 0.3) == pytest.approx(0.7 / 4)

    def test_length_mismatch(self):
        ev = evidence_one(Announcement.result(Z, 1))
        with pytest.raises(LengthMismatch):
            result_likelihood(ev, [], 0.5)

    def test_permutation_invariant(self):
        rng = np.random.default_rng(0)
        tr = transcript(InterceptResend("random"), n=20, seed=3)
        ev = ResultEvidence.from_records(tr.records)
        fam = intercept_family()
        U = [fam.evolutions[j] for j in rng.integers(len(fam), size=len(ev.announcements))]
        perm = rng.permutation(len(U))
        shuffled = ResultEvidence(tuple(ev.announcements[i] for i in perm), tuple(ev.priors[i] for i in perm),
                                  ev.k_hat, ev.n, ev.result_positions)
        a = result_log_likelihood(ev, U, 0.3)
        b = result_log_likelihood(shuffled, [U[i] for i in perm], 0.3)
        assert a == pytest.approx(b, abs=1e-12)


class TestEvidence:
    def test_positions(self):
        tr = transcript(n=30, seed=1)
        ev = ResultEvidence.from_records(tr.records)
        assert ev.k_hat == tr.stats["bit_announcements"]
        assert len(ev.result_positions) + len(ev.bit_positions) == ev.n == 30

    def test_needs_preparations(self):
        with pytest.raises(ValueError):
            ResultEvidence.from_records([ShotRecord(0, Announcement.result(Z, 1))])


class TestSigmaMember:
    def test_identity_on_passive(self):
        tr = transcript(n=20, seed=2)
        ev = ResultEvidence.from_records(tr.records)
        ll = result_log_likelihood(ev, [IDENTITY_EVOLUTION] * len(ev.announcements), 0.3)
        S = EvolutionString.identity(ev.n)
        assert sigma_member(ev, S, 0.3, log_epsilon=ll - 1e-9)
        assert not sigma_member(ev, S, 0.3, log_epsilon=ll)

    def test_zero_probability_entry_excluded(self):
        tr = transcript(n=20, seed=2)
        ev = ResultEvidence.from_records(tr.records)
        pos = next(p for p, a, r in zip(ev.result_positions, ev.announcements, ev.priors) if a.basis is Z)
        a = ev.announcements[ev.result_positions.index(pos)]
        # resend the eigenstate opposite to what Alice reported
        bad = EffectiveEvolution.constant(RHO_0 if a.value == -1 else PreparedState.Z1.state)
        S = EvolutionString(tuple(bad if i == pos else IDENTITY_EVOLUTION for i in range(ev.n)))
        for eps in (1e-300, 1e-12, 0.5):
            assert not sigma_member(ev, S, 0.3, epsilon=eps)

    def test_intercept_likelihood_decay(self):
        # averaged over Eve's outcomes, each matched result shot costs a factor 3/4
        tr = transcript(n=40, seed=4)
        ev = ResultEvidence.from_records(tr.records)
        strategy = InterceptResend("random")
        log_ratio = 0.0
        n_matched = 0
        for a, rho, rec in zip(ev.announcements, ev.priors, [r for r in tr.records if r.announcement.is_result]):
            avg = sum(p * announcement_prob(a, e, rho, 0, 0.3) for e, p in shot_distribution(strategy, 0, rho))
            log_ratio += math.log(avg / announcement_prob(a, IDENTITY_EVOLUTION, rho, 0, 0.3))
            n_matched += matched(rec.prepared, a.basis)
        assert n_matched > 5
        assert log_ratio == pytest.approx(n_matched * math.log(0.75), abs=1e-12)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2 ** 31), st.floats(-80, -1), st.floats(0, 20))
    def test_nesting(self, seed, log_eps, gap):
        rng = np.random.default_rng(seed)
        ev = ResultEvidence.from_records(transcript(Depolarize(0.5), n=15, seed=seed % 1000).records)
        fam = get_family("full")
        S = EvolutionString(tuple(fam.evolutions[j] for j in rng.integers(len(fam), size=ev.n)))
        if sigma_member(ev, S, 0.3, log_epsilon=log_eps):
            assert sigma_member(ev, S, 0.3, log_epsilon=log_eps - gap)

    def test_epsilon_domain(self):
        ev = evidence_one(Announcement.result(Z, 1))
        with pytest.raises(DomainError):
            sigma_member(ev, EvolutionString.identity(1), 0.5, epsilon=1.5)
        with pytest.raises(ValueError):
            sigma_member(ev, EvolutionString.identity(1), 0.5)


def tiny_family():
    fam = intercept_family()
    keep = [fam.index_of(l) for l in ("identity", "const+z", "const-z", "const+x")]
    return SearchFamily("tiny", tuple(fam.labels[i] for i in keep), tuple(fam.evolutions[i] for i in keep))


class TestExposure:
    def test_identity_only_family_is_zero(self):
        ev = ResultEvidence.from_records(transcript(n=10, seed=5).records)
        fam = SearchFamily("id", ("identity",), (IDENTITY_EVOLUTION,))
        rep = exposure(ev, 0.3, epsilon=1e-30, family=fam)
        assert rep.exposure == 0.0 and rep.argmax_labels == ("identity",) * 10

    def test_exhaustive_matches_dp(self):
        for seed in range(4):
            ev = ResultEvidence.from_records(transcript(InterceptResend("random"), n=7, seed=seed).records)
            log_eps = epsilon_from_delta(ev, 0.3, 0.1, tiny_family())[0]
            rep = exposure(ev, 0.3, log_epsilon=log_eps, family=tiny_family(), search="exhaustive")
            assert rep.candidates_examined == 4 ** 7
            assert rep.exposure == pytest.approx(exact_class_optimum(ev, 0.3, log_eps, tiny_family()), abs=1e-12)
            assert rep.best_log_likelihood > log_eps

    def test_anneal_reaches_exact_optimum(self):
        ev = ResultEvidence.from_records(transcript(p_a=0.1, n=60, seed=11).records)
        log_eps = epsilon_from_delta(ev, 0.1, 0.1)[0]
        rep = exposure(ev, 0.1, log_epsilon=log_eps)
        assert rep.search == "anneal"
        assert rep.exposure == pytest.approx(exact_class_optimum(ev, 0.1, log_eps), abs=1e-9)

    def test_argmax_in_sigma(self):
        ev = ResultEvidence.from_records(transcript(InterceptResend("z"), n=30, seed=8).records)
        log_eps = epsilon_from_delta(ev, 0.3, 0.1)[0]
        rep = exposure(ev, 0.3, log_epsilon=log_eps, budget=3000, restarts=2)
        assert sigma_member(ev, rep.argmax_string, 0.3, log_epsilon=log_eps)

    def test_nonincreasing_in_epsilon(self):
        ev = ResultEvidence.from_records(transcript(Depolarize(0.6), n=7, seed=9).records)
        top = epsilon_from_delta(ev, 0.3, 1.0, tiny_family())[0]
        values = []
        for offset in np.linspace(-12, -1e-6, 8):
            values.append(exposure(ev, 0.3, log_epsilon=top + offset, family=tiny_family(),
                                   search="exhaustive").exposure)
        assert all(b <= a + 1e-12 for a, b in zip(values, values[1:]))

    def test_empty_candidate_set(self):
        ev = ResultEvidence.from_records(transcript(InterceptResend("random"), n=20, seed=6).records)
        log_eps, ref = epsilon_from_delta(ev, 0.3, 1.0)
        with pytest.raises(EmptyCandidateSet):
            exposure(ev, 0.3, log_epsilon=log_eps)

    def test_epsilon_near_one(self):
        ev = ResultEvidence.from_records(transcript(n=20, seed=6).records)
        with pytest.raises(EmptyCandidateSet):
            exposure(ev, 0.3, epsilon=1 - 1e-12)

    def test_identity_reference_when_consistent(self):
        ev = ResultEvidence.from_records(transcript(n=20, seed=7).records)
        log_eps, ref = epsilon_from_delta(ev, 0.3, 0.5)
        ll = result_log_likelihood(ev, [IDENTITY_EVOLUTION] * len(ev.announcements), 0.3)
        assert ref == "identity" and log_eps == pytest.approx(ll + math.log(0.5))

    def test_reference_falls_back(self):
        ev = ResultEvidence.from_records(transcript(InterceptResend("random"), n=40, seed=7).records)
        assert epsilon_from_delta(ev, 0.3, 0.5)[1] == "max_likelihood"

    def test_intercept_transcript(self):
        tr = run_session(SessionParams(p_a=0.1, n=60, seed=12), InterceptResend("random"))
        ev = ResultEvidence.from_records(tr.records)
        log_eps = epsilon_from_delta(ev, 0.1, 0.1)[0]
        rep = exposure(ev, 0.1, log_epsilon=log_eps)
        assert rep.exposure > 0.1
        assert not sigma_member(ev, EvolutionString.identity(ev.n), 0.1, log_epsilon=log_eps)

    @pytest.mark.xfail(strict=True, reason="under the stated membership rule, resend-constant strings at least "
                                           "as likely as identity stay in Sigma; see README, known limitations")
    def test_passive_transcript_low_exposure(self):
        tr = run_session(SessionParams(p_a=0.1, n=60, seed=11))
        ev = ResultEvidence.from_records(tr.records)
        ll = result_log_likelihood(ev, [IDENTITY_EVOLUTION] * len(ev.announcements), 0.1)
        rep = exposure(ev, 0.1, log_epsilon=ll - 1e-6, family="intercept")
        assert rep.exposure <= 0.01

    def test_passive_transcript_value_is_closed_form(self):
        # the maximizer resends Alice's reported eigenstate on every result shot
        tr = run_session(SessionParams(p_a=0.1, n=60, seed=11))
        ev = ResultEvidence.from_records(tr.records)
        log_eps = epsilon_from_delta(ev, 0.1, 0.1)[0]
        assert exact_class_optimum(ev, 0.1, log_eps, "intercept") == pytest.approx(1 - 2.0 ** -ev.k_hat, abs=1e-9)

    def test_jobs_match_serial(self):
        ev = ResultEvidence.from_records(transcript(InterceptResend("random"), n=25, seed=13).records)
        log_eps = epsilon_from_delta(ev, 0.3, 0.1)[0]
        a = exposure(ev, 0.3, log_epsilon=log_eps, budget=2000, restarts=2, seed=1)
        b = exposure(ev, 0.3, log_epsilon=log_eps, budget=2000, restarts=2, seed=1, jobs=2)
        assert a.exposure == b.exposure and a.argmax_indices == b.argmax_indices

    def test_report_json(self):
        ev = ResultEvidence.from_records(transcript(n=6, seed=1).records)
        rep = exposure(ev, 0.3, epsilon=1e-9, family=tiny_family())
        d = rep.to_dict()
        assert d["exposure_bits"] == rep.exposure and len(d["argmax_labels"]) == 6

    def test_unknown_family(self):
        with pytest.raises(DomainError):
            get_family("nope")


class TestMatchedErrorRate:
    def test_passive_zero(self):
        rate, n = matched_error_rate(transcript(n=2000, seed=1).records)
        assert rate == 0.0 and n > 100

    def test_intercept_quarter(self):
        rate, n = matched_error_rate(transcript(InterceptResend("random"), n=20_000, seed=2).records)
        assert abs(rate - 0.25) <= 3 * math.sqrt(0.25 * 0.75 / n)

    def test_full_depolarize_half(self):
        rate, n = matched_error_rate(transcript(Depolarize(1.0), n=20_000, seed=3).records)
        assert abs(rate - 0.5) <= 3 * math.sqrt(0.25 / n)

    def test_empty(self):
        assert matched_error_rate([]) == (0.0, 0)
