"""Bob's a-posteriori analysis of a finished session.

Given the result-announcements and his own preparations, Bob scores
hypothesized evolution strings by the likelihood of what Alice announced,
keeps the ones above a threshold epsilon, and reports the largest expected
information Eve could have obtained from the bit-announcements under any of
them (the exposure).

The maximization runs over strings whose per-shot evolutions come from a
finite dictionary, so the reported exposure is the best value found within
that family: a lower bound on the maximum over all physical strings.
"""

from __future__ import annotations

import itertools
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .adversary import BREIDBART_DIRECTION, IDENTITY_EVOLUTION, EvolutionString
from .errors import DomainError, EmptyCandidateSet, LengthMismatch
from .infotheory import announcement_prob, canonical_class, subset_average_mi
from .protocol import ShotRecord, matched
from .qubit import (
    EffectiveEvolution,
    KrausChannel,
    Provenance,
    ProvenanceKind,
    QubitState,
    channel_to_affine,
)

EXHAUSTIVE_LIMIT = 10 ** 5
DEFAULT_BUDGET = 20_000
DEFAULT_RESTARTS = 4


@dataclass(frozen=True)
class ResultEvidence:
    """Result-announcements of a session with Bob's preparations for those shots.

    ``result_positions`` index the non-null shots (0..n-1) on which Alice made
    a result-announcement; the other ``k_hat`` non-null shots carried bits.
    """

    announcements: tuple
    priors: tuple
    k_hat: int
    n: int
    result_positions: tuple

    def __post_init__(self):
        if not len(self.announcements) == len(self.priors) == len(self.result_positions) == self.n - self.k_hat:
            raise LengthMismatch("result evidence lengths disagree with N - k_hat")
        if any(not a.is_result for a in self.announcements):
            raise ValueError("evidence may only hold result-announcements")

    @classmethod
    def from_records(cls, records: Sequence[ShotRecord]) -> "ResultEvidence":
        shots = [r for r in records if not r.announcement.is_null]
        anns, priors, pos = [], [], []
        for i, r in enumerate(shots):
            if r.announcement.is_result:
                if r.prepared is None:
                    raise ValueError(f"shot {r.index} lacks Bob's preparation")
                anns.append(r.announcement)
                priors.append(r.prepared.state)
                pos.append(i)
        return cls(tuple(anns), tuple(priors), len(shots) - len(anns), len(shots), tuple(pos))

    @property
    def bit_positions(self) -> tuple:
        res = set(self.result_positions)
        return tuple(i for i in range(self.n) if i not in res)


def _log(p: float) -> float:
    return math.log(p) if p > 0 else -math.inf


def result_log_likelihood(evidence: ResultEvidence, U: Sequence[EffectiveEvolution], p_a: float) -> float:
    if len(U) != len(evidence.announcements):
        raise LengthMismatch(f"{len(U)} evolutions for {len(evidence.announcements)} result shots")
    return math.fsum(_log(announcement_prob(a, e, r, 0, p_a))
                     for a, e, r in zip(evidence.announcements, U, evidence.priors))


def result_likelihood(evidence: ResultEvidence, U: Sequence[EffectiveEvolution], p_a: float) -> float:
    """Pr(y | U, rho): product of result-row probabilities under Bob's priors."""
    return math.exp(result_log_likelihood(evidence, U, p_a))


def _resolve_log_epsilon(epsilon, log_epsilon):
    if (epsilon is None) == (log_epsilon is None):
        raise ValueError("pass exactly one of epsilon or log_epsilon")
    if log_epsilon is None:
        if not 0.0 < epsilon < 1.0:
            raise DomainError(f"epsilon must lie in (0, 1), got {epsilon}")
        return math.log(epsilon)
    if not log_epsilon < 0.0:
        raise DomainError(f"log epsilon must be negative, got {log_epsilon}")
    return float(log_epsilon)


def sigma_member(evidence: ResultEvidence, S: EvolutionString, p_a: float,
                 epsilon: Optional[float] = None, log_epsilon: Optional[float] = None) -> bool:
    """Whether S belongs to Sigma(epsilon): Pr(y | U, rho) > epsilon."""
    if len(S) != evidence.n:
        raise LengthMismatch(f"string of length {len(S)} for {evidence.n} shots")
    log_eps = _resolve_log_epsilon(epsilon, log_epsilon)
    U = [S[i] for i in evidence.result_positions]
    return result_log_likelihood(evidence, U, p_a) > log_eps


@dataclass(frozen=True)
class SearchFamily:
    name: str
    labels: tuple
    evolutions: tuple

    def __len__(self):
        return len(self.evolutions)

    def index_of(self, label: str) -> int:
        return self.labels.index(label)


def _axis_states():
    out = []
    for name, j in (("x", 0), ("y", 1), ("z", 2)):
        for sign, tag in ((1.0, "+"), (-1.0, "-")):
            v = [0.0, 0.0, 0.0]
            v[j] = sign
            out.append((f"const{tag}{name}", QubitState(v)))
    return out


def _breidbart_states():
    a = BREIDBART_DIRECTION[0]
    return [("const+bb", QubitState((a, 0.0, a))), ("const-bb", QubitState((-a, 0.0, -a))),
            ("const+bb'", QubitState((-a, 0.0, a))), ("const-bb'", QubitState((a, 0.0, -a)))]


def _constant(label, state, i):
    return label, EffectiveEvolution.constant(state, Provenance(ProvenanceKind.MEASUREMENT_OUTCOME, i))


def intercept_family() -> SearchFamily:
    """Identity plus every measure-and-resend outcome of the shipped attacks."""
    entries = [("identity", IDENTITY_EVOLUTION)]
    entries += [_constant(l, s, i % 2) for i, (l, s) in enumerate(_axis_states() + _breidbart_states())]
    return SearchFamily("intercept", *zip(*entries))


def default_family() -> SearchFamily:
    """Identity, resend constants, depolarizing grid and pi/8 rotations."""
    base = intercept_family()
    entries = list(zip(base.labels, base.evolutions))
    for lam in (0.25, 0.5, 0.75, 1.0):
        entries.append((f"depolarize{lam:g}", channel_to_affine(KrausChannel.depolarizing(lam))))
    for name, axis in (("x", (1, 0, 0)), ("y", (0, 1, 0)), ("z", (0, 0, 1))):
        for step in range(1, 16):
            evo = channel_to_affine(KrausChannel.rotation(axis, step * math.pi / 8))
            entries.append((f"rot{name}{step}pi/8", evo))
    return SearchFamily("full", *zip(*entries))


FAMILIES = {"full": default_family, "intercept": intercept_family}


def get_family(name) -> SearchFamily:
    if isinstance(name, SearchFamily):
        return name
    try:
        return FAMILIES[name]()
    except KeyError:
        raise DomainError(f"unknown search family {name!r}; choose from {sorted(FAMILIES)}") from None


@dataclass
class ExposureReport:
    epsilon: float
    log_epsilon: float
    exposure: float
    argmax_string: EvolutionString
    argmax_labels: tuple
    argmax_indices: tuple
    family: str
    search: str
    candidates_examined: int
    best_log_likelihood: float
    wall_time: float = 0.0
    notes: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "log_epsilon": self.log_epsilon,
            "exposure_bits": self.exposure,
            "argmax_indices": list(self.argmax_indices),
            "argmax_labels": list(self.argmax_labels),
            "family": self.family,
            "search": self.search,
            "candidates_examined": self.candidates_examined,
            "best_log_likelihood": self.best_log_likelihood,
            "wall_time": self.wall_time,
            **({"notes": self.notes} if self.notes else {}),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


class _Problem:
    """Precomputed per-position likelihood table and per-entry classes."""

    def __init__(self, evidence: ResultEvidence, p_a: float, family: SearchFamily):
        self.evidence = evidence
        self.family = family
        self.n = evidence.n
        self.k = evidence.k_hat
        classes = [canonical_class(e) for e in family.evolutions]
        self.class_keys = sorted(set(classes))
        self.entry_class = np.array([self.class_keys.index(c) for c in classes])
        # loglik[i, j]: log-probability of result shot i under entry j; zero for bit shots
        self.loglik = np.zeros((self.n, len(family)))
        for a, rho, pos in zip(evidence.announcements, evidence.priors, evidence.result_positions):
            self.loglik[pos] = [_log(announcement_prob(a, e, rho, 0, p_a)) for e in family.evolutions]
        self._objective = {}

    def objective(self, counts: tuple) -> float:
        if counts not in self._objective:
            classes = [c for c, m in zip(self.class_keys, counts) for _ in range(m)]
            self._objective[counts] = subset_average_mi(classes, self.k)
        return self._objective[counts]

    def counts_of(self, assignment) -> tuple:
        return tuple(np.bincount(self.entry_class[assignment], minlength=len(self.class_keys)))

    def loglik_of(self, assignment) -> float:
        return float(math.fsum(self.loglik[np.arange(self.n), assignment]))

    def max_likelihood_assignment(self) -> np.ndarray:
        a = np.argmax(self.loglik, axis=1)
        # bit shots do not enter the likelihood; start them at identity when available
        evos = self.family.evolutions
        a[list(self.evidence.bit_positions)] = evos.index(IDENTITY_EVOLUTION) if IDENTITY_EVOLUTION in evos else 0
        return a


def _exhaustive(problem: _Problem, log_eps: float):
    best = None
    examined = 0
    for combo in itertools.product(range(len(problem.family)), repeat=problem.n):
        examined += 1
        a = np.array(combo, dtype=int)
        ll = problem.loglik_of(a)
        if not ll > log_eps:
            continue
        val = problem.objective(problem.counts_of(a))
        if best is None or val > best[0] + 1e-15 or (abs(val - best[0]) <= 1e-15 and ll > best[2]):
            best = (val, a, ll)
    return best, examined


def _anneal(problem: _Problem, log_eps: float, steps: int, seed):
    """Metropolis search over per-shot dictionary indices, kept inside Sigma(eps)."""
    rng = np.random.default_rng(seed)
    a = problem.max_likelihood_assignment()
    ll = problem.loglik_of(a)
    counts = list(problem.counts_of(a))
    val = problem.objective(tuple(counts))
    best = (val, a.copy(), ll)
    t0, t1 = 0.2, 1e-4
    n_entries = len(problem.family)
    for step in range(steps):
        temp = t0 * (t1 / t0) ** (step / max(1, steps - 1))
        pos = int(rng.integers(problem.n))
        new = int(rng.integers(n_entries))
        old = int(a[pos])
        if new == old:
            continue
        ll_new = ll - problem.loglik[pos, old] + problem.loglik[pos, new]
        if not ll_new > log_eps:
            continue
        c_old, c_new = problem.entry_class[old], problem.entry_class[new]
        counts[c_old] -= 1
        counts[c_new] += 1
        v_new = problem.objective(tuple(counts))
        if v_new >= val or rng.random() < math.exp((v_new - val) / temp):
            a[pos] = new
            ll, val = ll_new, v_new
            if val > best[0] + 1e-15 or (abs(val - best[0]) <= 1e-15 and ll > best[2]):
                best = (val, a.copy(), ll)
        else:
            counts[c_old] += 1
            counts[c_new] -= 1
    val, a, ll = best
    a = a.copy()
    polished, examined = _polish(problem, log_eps, a, ll)
    return polished, steps + examined


def _polish(problem: _Problem, log_eps: float, a: np.ndarray, ll: float):
    """Coordinate ascent: best single-position change until none improves."""
    counts = list(problem.counts_of(a))
    val = problem.objective(tuple(counts))
    examined = 0
    improved = True
    while improved:
        improved = False
        for pos in range(problem.n):
            old = int(a[pos])
            c_old = problem.entry_class[old]
            for new in range(len(problem.family)):
                if new == old:
                    continue
                examined += 1
                ll_new = ll - problem.loglik[pos, old] + problem.loglik[pos, new]
                if not ll_new > log_eps:
                    continue
                c_new = problem.entry_class[new]
                if c_new == c_old:
                    v_new = val
                else:
                    counts[c_old] -= 1
                    counts[c_new] += 1
                    v_new = problem.objective(tuple(counts))
                    counts[c_old] += 1
                    counts[c_new] -= 1
                if v_new > val + 1e-15 or (v_new >= val - 1e-15 and ll_new > ll + 1e-12):
                    a[pos] = new
                    counts[c_old] -= 1
                    counts[c_new] += 1
                    ll, val, old, c_old = ll_new, v_new, new, c_new
                    improved = True
    return (val, a, ll), examined


def _anneal_job(args):
    evidence, p_a, family, log_eps, steps, seed = args
    return _anneal(_Problem(evidence, p_a, family), log_eps, steps, seed)


def exact_class_optimum(evidence: ResultEvidence, p_a: float, log_epsilon: float,
                        family="full") -> float:
    """Exact maximum of the exposure objective over the family.

    The objective depends on a string only through its per-class counts and
    the likelihood factorizes per shot, so a dynamic program over positions
    keyed by class counts gives, for every count vector, the best achievable
    log-likelihood.  Cost grows like N^(classes - 1); meant for small class
    sets and as an oracle for the annealer.
    """
    problem = _Problem(evidence, p_a, get_family(family))
    n_cls = len(problem.class_keys)
    best_per_class = np.full((problem.n, n_cls), -np.inf)
    for j, c in enumerate(problem.entry_class):
        best_per_class[:, c] = np.maximum(best_per_class[:, c], problem.loglik[:, j])
    states = {(0,) * n_cls: 0.0}
    for pos in range(problem.n):
        nxt = {}
        for counts, ll in states.items():
            for c in range(n_cls):
                v = ll + best_per_class[pos, c]
                if v == -np.inf:
                    continue
                key = counts[:c] + (counts[c] + 1,) + counts[c + 1:]
                if v > nxt.get(key, -np.inf):
                    nxt[key] = v
        states = nxt
    feasible = [problem.objective(c) for c, ll in states.items() if ll > log_epsilon]
    if not feasible:
        raise EmptyCandidateSet("no string of the family clears the likelihood threshold")
    return max(feasible)


def max_log_likelihood(evidence: ResultEvidence, p_a: float, family="full") -> float:
    problem = _Problem(evidence, p_a, get_family(family))
    return problem.loglik_of(problem.max_likelihood_assignment())


def epsilon_from_delta(evidence: ResultEvidence, p_a: float, delta: float, family="full"):
    """Relative threshold log(delta * Pr(y | all-identity, rho)).

    When the identity string has zero likelihood (an outcome contradicted
    Bob's preparation on a matched shot) the reference becomes the
    best-fitting string of the family.  Returns ``(log_epsilon, reference)``.
    """
    if not delta > 0:
        raise DomainError(f"delta must be positive, got {delta}")
    ll_id = result_log_likelihood(evidence, [IDENTITY_EVOLUTION] * len(evidence.announcements), p_a)
    if ll_id > -math.inf:
        return math.log(delta) + ll_id, "identity"
    return math.log(delta) + max_log_likelihood(evidence, p_a, family), "max_likelihood"


def exposure(evidence: ResultEvidence, p_a: float, epsilon: Optional[float] = None,
             family="full", budget: int = DEFAULT_BUDGET, *, log_epsilon: Optional[float] = None,
             restarts: int = DEFAULT_RESTARTS, seed: int = 0, jobs: int = 1,
             search: str = "auto") -> ExposureReport:
    """Largest averaged bit-announcement information over strings in Sigma(epsilon).

    ``search`` is ``exhaustive``, ``anneal`` or ``auto`` (exhaustive when the
    family has at most 1e5 strings of length N).  ``budget`` is the number of
    annealing steps per restart.
    """
    if budget <= 0:
        raise DomainError("search budget must be positive")
    log_eps = _resolve_log_epsilon(epsilon, log_epsilon)
    fam = get_family(family)
    start = time.perf_counter()
    problem = _Problem(evidence, p_a, fam)
    ml = problem.max_likelihood_assignment()
    if not problem.loglik_of(ml) > log_eps:
        raise EmptyCandidateSet(
            f"best likelihood in family {fam.name!r} is exp({problem.loglik_of(ml):.6g}), "
            f"not above epsilon = exp({log_eps:.6g})")
    if search == "auto":
        search = "exhaustive" if len(fam) ** problem.n <= EXHAUSTIVE_LIMIT else "anneal"
    if search == "exhaustive":
        best, examined = _exhaustive(problem, log_eps)
    elif search == "anneal":
        seeds = np.random.SeedSequence(seed).spawn(restarts)
        if jobs > 1:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                results = list(pool.map(_anneal_job, [(evidence, p_a, fam, log_eps, budget, s) for s in seeds]))
        else:
            results = [_anneal(problem, log_eps, budget, s) for s in seeds]
        best = max((r[0] for r in results), key=lambda b: (b[0], b[2]))
        examined = sum(r[1] for r in results)
    else:
        raise DomainError(f"unknown search method {search!r}")
    val, a, ll = best
    S = EvolutionString(tuple(fam.evolutions[j] for j in a))
    return ExposureReport(
        epsilon=math.exp(log_eps), log_epsilon=log_eps, exposure=max(0.0, val),
        argmax_string=S, argmax_labels=tuple(fam.labels[j] for j in a),
        argmax_indices=tuple(int(j) for j in a), family=fam.name, search=search,
        candidates_examined=examined, best_log_likelihood=ll,
        wall_time=time.perf_counter() - start)


def matched_error_rate(records: Sequence[ShotRecord]):
    """Fraction of matched result-announcements contradicting Bob's preparation.

    Returns ``(rate, n)``; rate is 0.0 when n is 0.
    """
    n = errors = 0
    for r in records:
        a = r.announcement
        if a.is_result and r.prepared is not None and matched(r.prepared, a.basis):
            n += 1
            errors += a.value != r.prepared.eigenvalue
    return (errors / n if n else 0.0), n
