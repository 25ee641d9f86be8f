"""Acceptance checks, shared by ``qseal selftest`` and the test suite.

Each check returns a :class:`CriterionResult`; none of them raise on a
failed comparison, so a full report is always produced.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable, List

import numpy as np
from scipy.stats import chisquare

from .adversary import (
    IDENTITY_EVOLUTION,
    Depolarize,
    EvolutionString,
    InterceptResend,
    shot_distribution,
)
from .infotheory import (
    announcement_vector,
    mutual_info_direct,
    mutual_info_factored,
    mutual_info_mc,
)
from .protocol import ALL_ANNOUNCEMENTS, PreparedState, SessionParams, required_shots
from .qubit import (
    EffectiveEvolution,
    Provenance,
    ProvenanceKind,
    RHO_0,
    channel_to_affine,
    random_channel,
    random_state,
)
from .simnet import run_loopback, run_session
from .simnet import wire
from .verifier import ResultEvidence, epsilon_from_delta, exposure, matched_error_rate, sigma_member


@dataclass(frozen=True)
class CriterionResult:
    id: str
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] criterion {self.id}: {self.name} ({self.detail}; {self.seconds:.1f}s)"


def random_evolution(rng: np.random.Generator) -> EffectiveEvolution:
    """Identity, a random channel, or a constant map, with equal odds."""
    kind = rng.integers(3)
    if kind == 0:
        return IDENTITY_EVOLUTION
    if kind == 1:
        return channel_to_affine(random_channel(rng, int(rng.integers(1, 5))))
    return EffectiveEvolution.constant(random_state(rng), Provenance(ProvenanceKind.MEASUREMENT_OUTCOME, 0))


def random_string(rng: np.random.Generator, n: int) -> EvolutionString:
    return EvolutionString(tuple(random_evolution(rng) for _ in range(n)))


def passive_zero_information() -> tuple:
    worst = 0.0
    for n in range(1, 7):
        for p_a in (0.1, 0.5, 0.9):
            worst = max(worst, abs(mutual_info_direct(EvolutionString.identity(n), p_a).value))
    return worst <= 1e-12, f"max |I| = {worst:.3g} over N<=6"


def direct_equals_factored() -> tuple:
    rng = np.random.default_rng(2)
    worst = 0.0
    for n in range(1, 6):
        for p_a in (0.2, 0.7):
            for _ in range(50):
                S = random_string(rng, n)
                d = mutual_info_direct(S, p_a).value
                f = mutual_info_factored(S, p_a).value
                worst = max(worst, abs(d - f))
    return worst <= 1e-9, f"max |direct - factored| = {worst:.3g} over 500 strings"


def single_shot_intercept() -> tuple:
    S = EvolutionString((EffectiveEvolution.constant(RHO_0, Provenance(ProvenanceKind.MEASUREMENT_OUTCOME, 0)),))
    values = [mutual_info_direct(S, 1.0).value, mutual_info_factored(S, 1.0).value]
    err = max(abs(v - 0.5) for v in values)
    return err <= 1e-12, f"I = {values[0]:.15f} bits"


def table_two_consistency() -> tuple:
    rng = np.random.default_rng(4)
    worst = 0.0
    minimum = math.inf
    for _ in range(10_000):
        evo = random_evolution(rng)
        prior = random_state(rng)
        b = int(rng.integers(2))
        p_a = float(rng.random())
        v = announcement_vector(evo, prior, b, p_a)
        minimum = min(minimum, v.min())
        worst = max(worst, abs(v[:4].sum() - p_a), abs(v[4:].sum() - (1 - p_a)))
    algebra_ok = minimum >= 0 and worst <= 1e-12

    pvalues = []
    for strategy in (Depolarize(0.3), InterceptResend("random")):
        params = SessionParams(p_a=0.4, n=100_000, seed=44, message_bit=1)
        tr = run_session(params, strategy)
        observed = np.zeros((4, 8))
        col = {a: i for i, a in enumerate(ALL_ANNOUNCEMENTS)}
        for r in tr.records:
            observed[r.prepared.value, col[r.announcement]] += 1
        expected = np.zeros((4, 8))
        for prep in PreparedState:
            law = sum(p * announcement_vector(evo, prep.state, params.message_bit, params.p_a)
                      for evo, p in shot_distribution(strategy, 0, prep.state))
            expected[prep.value] = observed[prep.value].sum() * law
        keep = expected.ravel() > 0
        pvalues.append(chisquare(observed.ravel()[keep], expected.ravel()[keep],
                                 ddof=4 - 1).pvalue)
    passed = algebra_ok and min(pvalues) > 0.001
    return passed, (f"min prob {minimum:.3g}, row-sum error {worst:.3g}, "
                    f"chi-square p = {', '.join(f'{p:.3g}' for p in pvalues)}")


def shot_count_expansions() -> tuple:
    exact = (required_shots(0.95, 0.5), required_shots(0.95, 0.1))
    ok = exact == (11, 59)
    worst_rel = 0.0
    p_a = 0.01
    for c_m in (0.9, 0.95, 0.99):
        n = required_shots(c_m, p_a)
        approx = -math.log(1 - c_m) * (2 / p_a - 2.5 + 11 * p_a / 24)
        worst_rel = max(worst_rel, abs((1 - p_a) * n - approx) / approx)
    ok &= worst_rel <= 0.015
    bound_ok = all(
        p * required_shots(c, p) <= -2 * math.log(1 - c) + 2
        for c in np.linspace(0.5, 0.999, 25) for p in np.linspace(0.01, 0.99, 25))
    return ok and bound_ok, (f"N = {exact}, expansion rel. error {worst_rel:.3%}, "
                             f"grid bound {'holds' if bound_ok else 'violated'}")


def delivery_confidence() -> tuple:
    parts, ok = [], True
    for p_a in (0.5, 0.1):
        sessions, delivered, wrong = 10_000, 0, 0
        for s in range(sessions):
            b = s % 2
            tr = run_session(SessionParams.create(p_a, c_m=0.95, seed=1_000_000 + s, message_bit=b))
            if tr.stats["matched_bit"] > 0:
                delivered += 1
                wrong += tr.outcome.bit != b
        frac = delivered / sessions
        sigma = math.sqrt(0.95 * 0.05 / sessions)
        ok &= frac >= 0.95 - 3 * sigma and wrong == 0
        parts.append(f"p_a={p_a}: {frac:.4f} delivered, {wrong} misdecoded")
    return ok, "; ".join(parts)


def detection_rate() -> tuple:
    tr = run_session(SessionParams(p_a=0.1, n=50_000, seed=77), InterceptResend("random"))
    rate, n = matched_error_rate(tr.records)
    sigma = math.sqrt(0.25 * 0.75 / n)
    passive_rate, passive_n = matched_error_rate(run_session(SessionParams(p_a=0.1, n=20_000, seed=78)).records)
    ok = n >= 10_000 and abs(rate - 0.25) <= 3 * sigma and passive_rate == 0.0
    return ok, f"intercept {rate:.4f} over {n} matched (3sigma = {3 * sigma:.4f}); passive {passive_rate}"


def exposure_behavior() -> list:
    """Two results: the passive half and the intercept-resend half."""
    results = []
    p_a, n, delta = 0.1, 60, 0.1
    passive = run_session(SessionParams(p_a=p_a, n=n, seed=11))
    ev = ResultEvidence.from_records(passive.records)
    log_eps, ref = epsilon_from_delta(ev, p_a, delta)
    rep = exposure(ev, p_a, log_epsilon=log_eps)
    results.append((rep.exposure <= 0.01,
                    f"passive exposure {rep.exposure:.6f} bits (k_hat={ev.k_hat}, eps ref {ref})"))

    attacked = run_session(SessionParams(p_a=p_a, n=n, seed=12), InterceptResend("random"))
    ev = ResultEvidence.from_records(attacked.records)
    log_eps, ref = epsilon_from_delta(ev, p_a, delta)
    rep = exposure(ev, p_a, log_epsilon=log_eps)
    identity_in = sigma_member(ev, EvolutionString.identity(ev.n), p_a, log_epsilon=log_eps)
    n_result = len(ev.result_positions)
    ok = rep.exposure > 0.1 and not identity_in and n_result >= 30
    results.append((ok, f"intercept exposure {rep.exposure:.6f} bits, {n_result} result shots, "
                        f"identity {'in' if identity_in else 'excluded from'} Sigma (eps ref {ref})"))
    return results


def monte_carlo_agreement() -> tuple:
    rng = np.random.default_rng(9)
    misses, ratios = 0, []
    for i in range(20):
        S = random_string(rng, 4)
        p_a = float(rng.uniform(0.1, 0.9))
        exact = mutual_info_direct(S, p_a).value
        big = mutual_info_mc(S, p_a, 100_000, np.random.default_rng(100 + i))
        small = mutual_info_mc(S, p_a, 1_000, np.random.default_rng(200 + i))
        misses += abs(big.value - exact) > 3 * big.stderr
        if big.stderr > 0:
            ratios.append(small.stderr / big.stderr)
    ratio = float(np.median(ratios))
    ok = misses == 0 and 7.0 <= ratio <= 13.0
    return ok, f"{misses}/20 outside 3 stderr; median stderr ratio 1e3:1e5 = {ratio:.2f} (ideal 10)"


def networked_equivalence() -> tuple:
    cases = [
        (SessionParams(p_a=0.3, n=40, seed=5, message_bit=1), None, False),
        (SessionParams(p_a=0.3, n=40, seed=6), InterceptResend("random"), True),
        (SessionParams(p_a=0.5, n=30, seed=7, loss=0.2), Depolarize(0.5), True),
    ]
    same = 0
    for params, strategy, proxy in cases:
        net = run_loopback(params, strategy, proxy=proxy)
        local = run_session(params, strategy)
        same += net.dumps() == local.dumps()
    msgs = [wire.session_init(cases[2][0]), wire.qubit(RHO_0), wire.measure_ack(123456),
            wire.announce(ALL_ANNOUNCEMENTS[3]), wire.announce(ALL_ANNOUNCEMENTS[6]), wire.session_end()]
    round_trips = sum(wire.decode_frame(m.encode()) == (m, b"") for m in msgs)
    ok = same == len(cases) and round_trips == len(msgs)
    return ok, f"{same}/{len(cases)} transcripts byte-identical, {round_trips}/{len(msgs)} frames round-trip"


CHECKS: List[tuple] = [
    ("1", "passive eavesdropper gives zero information", passive_zero_information),
    ("2", "direct and factored mutual information agree", direct_equals_factored),
    ("3", "single-shot intercept-resend gives 0.5 bits", single_shot_intercept),
    ("4", "announcement table consistency", table_two_consistency),
    ("5", "shot count and expansions", shot_count_expansions),
    ("6", "delivery confidence", delivery_confidence),
    ("7", "intercept-resend detection rate", detection_rate),
    ("8", "exposure behavior", exposure_behavior),
    ("9", "Monte Carlo mutual information", monte_carlo_agreement),
    ("10", "networked equivalence", networked_equivalence),
]


def _timed(fn: Callable):
    start = time.perf_counter()
    out = fn()
    return out, time.perf_counter() - start


def run_check(cid: str) -> List[CriterionResult]:
    for id_, name, fn in CHECKS:
        if id_ == cid:
            out, secs = _timed(fn)
            if isinstance(out, list):
                return [CriterionResult(f"{id_}{'ab'[i]}", f"{name} ({half})", bool(ok), detail, secs)
                        for i, ((ok, detail), half) in enumerate(zip(out, ("passive", "intercept-resend")))]
            ok, detail = out
            return [CriterionResult(id_, name, bool(ok), detail, secs)]
    raise KeyError(f"no criterion {cid!r}")


def run_all(report: Callable[[str], None] = None) -> List[CriterionResult]:
    results = []
    for cid, _, _ in CHECKS:
        for res in run_check(cid):
            results.append(res)
            if report is not None:
                report(res.line())
    return results
