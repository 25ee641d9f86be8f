"""Announcement probabilities and Eve's expected information about the message.

All information quantities are in bits, with 0 log 0 = 0.  Eve describes the
particle entering every shot by I/2, so for her only ``Pi(I/2)`` matters; the
receiver's likelihoods (see :mod:`qseal.verifier`) call the same
:func:`announcement_prob` with his known preparations instead.

Three routes to I_S(A:B) are provided:

* :func:`mutual_info_direct` enumerates all 8^N announcement strings.
* :func:`mutual_info_factored` sums binomially weighted bit-announcement
  informations over every placement of the bit-announcement shots.
* :func:`mutual_info_mc` samples announcement strings and averages the exact
  per-string log-likelihood ratio.
"""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np
from scipy.special import xlogy

from .adversary import EvolutionString
from .errors import DomainError, ExplosionError, LengthMismatch
from .protocol import ALL_ANNOUNCEMENTS, Announcement, AnnouncementKind
from .qubit import MAXIMALLY_MIXED, EffectiveEvolution, PauliAxis, QubitState

LN2 = math.log(2.0)
DIRECT_MAX_N = 8
BIT_STRING_CAP = 4 ** 10
FACTORED_MAX_N = 12
# widest kron block materialized at once; longer strings loop over a prefix
_TAIL_ENTRIES = 1 << 18

_ANN_INDEX = {a: i for i, a in enumerate(ALL_ANNOUNCEMENTS)}


class Method(enum.Enum):
    EXACT_DIRECT = "direct"
    EXACT_FACTORED = "factored"
    MONTE_CARLO = "mc"


@dataclass(frozen=True)
class MutualInformationResult:
    value: float
    method: Method
    samples: Optional[int] = None
    stderr: float = 0.0

    def __float__(self):
        return float(self.value)


def _post_expectations(evo: EffectiveEvolution, prior: QubitState):
    r = evo.apply(prior).bloch
    return r[PauliAxis.X.index], r[PauliAxis.Z.index]


def announcement_vector(evo: EffectiveEvolution, prior: QubitState, b: int, p_a: float) -> np.ndarray:
    """The 8 announcement probabilities, ordered as ``ALL_ANNOUNCEMENTS``."""
    ex, ez = _post_expectations(evo, prior)
    s = 1 - 2 * b
    q, r = p_a / 4, (1 - p_a) / 4
    return np.array([
        q * (1 + s * ex), q * (1 - s * ex),
        q * (1 + s * ez), q * (1 - s * ez),
        r * (1 + ex), r * (1 - ex),
        r * (1 + ez), r * (1 - ez),
    ])


def announcement_prob(ann: Announcement, evo: EffectiveEvolution, prior: QubitState,
                      b: int, p_a: float) -> float:
    if ann.kind is AnnouncementKind.NULL:
        raise ValueError("null announcements are outside the eight-announcement model")
    return float(announcement_vector(evo, prior, b, p_a)[_ANN_INDEX[ann]])


def string_prob(announcements: Sequence[Announcement], b: int, S: EvolutionString,
                priors: Optional[Sequence[QubitState]], p_a: float) -> float:
    if priors is None:
        priors = [MAXIMALLY_MIXED] * len(S)
    if not len(announcements) == len(S) == len(priors):
        raise LengthMismatch(
            f"{len(announcements)} announcements, {len(S)} evolutions, {len(priors)} priors")
    return math.prod(announcement_prob(a, e, r, b, p_a) for a, e, r in zip(announcements, S, priors))


def bit_vector(evo: EffectiveEvolution, b: int) -> np.ndarray:
    """Eve's law of one bit-announcement given that one is made: 4 symbols."""
    ex, ez = _post_expectations(evo, MAXIMALLY_MIXED)
    s = 1 - 2 * b
    return 0.25 * np.array([1 + s * ex, 1 - s * ex, 1 + s * ez, 1 - s * ez])


def _kron(vectors) -> np.ndarray:
    out = np.ones(1)
    for v in vectors:
        out = np.kron(out, v)
    return out


def _enumerated_mi(vecs0, vecs1) -> float:
    """I(B; string) for independent per-symbol laws, B uniform.

    Sums over the full product alphabet, a prefix at a time so memory stays
    bounded.
    """
    n = len(vecs0)
    if n == 0:
        return 0.0
    width = len(vecs0[0])
    tail_len = min(n, max(1, int(math.log(_TAIL_ENTRIES, width))))
    head0, head1 = vecs0[:n - tail_len], vecs1[:n - tail_len]
    tail0, tail1 = _kron(vecs0[n - tail_len:]), _kron(vecs1[n - tail_len:])
    cond = 0.0
    joint = 0.0
    for idx in itertools.product(range(width), repeat=len(head0)):
        h0 = math.prod(v[i] for v, i in zip(head0, idx))
        h1 = math.prod(v[i] for v, i in zip(head1, idx))
        if h0 == 0 and h1 == 0:
            continue
        p0 = h0 * tail0
        p1 = h1 * tail1
        cond += 0.5 * (xlogy(p0, p0).sum() + xlogy(p1, p1).sum())
        pm = 0.5 * (p0 + p1)
        joint += xlogy(pm, pm).sum()
    return (cond - joint) / LN2


def mutual_info_direct(S: EvolutionString, p_a: float, max_n: int = DIRECT_MAX_N) -> MutualInformationResult:
    """I_S(A:B) by summing over all 8^N announcement strings."""
    n = len(S)
    if n > max_n:
        raise ExplosionError(f"direct enumeration of 8^{n} strings exceeds the cap N <= {max_n}")
    vecs0 = [announcement_vector(e, MAXIMALLY_MIXED, 0, p_a) for e in S]
    vecs1 = [announcement_vector(e, MAXIMALLY_MIXED, 1, p_a) for e in S]
    return MutualInformationResult(_enumerated_mi(vecs0, vecs1), Method.EXACT_DIRECT)


def bit_string_mi(T: Sequence[EffectiveEvolution], cap: int = BIT_STRING_CAP) -> float:
    """I_T(X^(k):B): information in k bit-announcements made on the shots of T."""
    k = len(T)
    if 4 ** k > cap:
        raise ExplosionError(f"4^{k} bit-announcement strings exceed the cap of {cap}")
    return _enumerated_mi([bit_vector(e, 0) for e in T], [bit_vector(e, 1) for e in T])


def eve_view(evo: EffectiveEvolution) -> tuple:
    """(Tr(sigma_1 rho'), Tr(sigma_3 rho')) for Eve's prior I/2."""
    return _post_expectations(evo, MAXIMALLY_MIXED)


def mutual_info_factored(S: EvolutionString, p_a: float, max_n: int = FACTORED_MAX_N) -> MutualInformationResult:
    """I_S(A:B) = sum_k p_a^k (1-p_a)^(N-k) sum_T I_T(X^(k):B).

    T runs over all C(N, k) choices of bit-announcement shots.  I_T is
    memoized on the multiset of per-shot views, so strings with few distinct
    evolutions are cheap.
    """
    n = len(S)
    if n > max_n:
        raise ExplosionError(f"factored sum over N={n} shots exceeds the cap N <= {max_n}")
    views = [eve_view(e) for e in S]
    memo = {}
    total = 0.0
    for k in range(1, n + 1):
        weight = p_a ** k * (1 - p_a) ** (n - k)
        inner = 0.0
        for T in itertools.combinations(range(n), k):
            key = tuple(sorted(views[i] for i in T))
            if key not in memo:
                memo[key] = bit_string_mi([S[i] for i in T], cap=4 ** max_n)
            inner += memo[key]
        total += weight * inner
    return MutualInformationResult(total, Method.EXACT_FACTORED)


def binomial_pk(n: int, k: int, p_a: float) -> float:
    if not 0 <= k <= n:
        raise DomainError(f"k={k} must lie in [0, N={n}]")
    return math.comb(n, k) * p_a ** k * (1 - p_a) ** (n - k)


def mutual_info_mc(S: EvolutionString, p_a: float, samples: int, rng: np.random.Generator,
                   chunk: int = 20_000) -> MutualInformationResult:
    """Monte Carlo estimate of I_S(A:B) with its standard error.

    Each sample draws b and an announcement string a ~ Pr(a | b, S); the
    integrand log2[Pr(a|b) / Pr(a)] is exact given a, from the per-shot
    product.
    """
    if samples < 1000:
        raise DomainError("Monte Carlo estimation needs at least 1000 samples")
    n = len(S)
    if n == 0:
        return MutualInformationResult(0.0, Method.MONTE_CARLO, samples, 0.0)
    P = np.stack([
        np.array([announcement_vector(e, MAXIMALLY_MIXED, b, p_a) for e in S])
        for b in (0, 1)
    ])  # (2, n, 8)
    cdf = np.cumsum(P, axis=2)
    cdf[:, :, -1] = np.inf
    with np.errstate(divide="ignore"):
        logP = np.log(P)
    shots = np.arange(n)
    values = np.empty(samples)
    done = 0
    while done < samples:
        m = min(chunk, samples - done)
        b = rng.integers(2, size=m)
        u = rng.random((m, n))
        idx = (u[:, :, None] >= cdf[b]).sum(axis=2)
        l0 = logP[0, shots, idx].sum(axis=1)
        l1 = logP[1, shots, idx].sum(axis=1)
        own = np.where(b == 0, l0, l1)
        values[done:done + m] = 1.0 + (own - np.logaddexp(l0, l1)) / LN2
        done += m
    est = float(values.mean())
    err = float(values.std(ddof=1) / math.sqrt(samples))
    return MutualInformationResult(est, Method.MONTE_CARLO, samples, err)


def canonical_class(evo: EffectiveEvolution) -> tuple:
    """Key under which Eve's bit-announcement information is invariant.

    Flipping the sign of either expectation relabels c on that shot, and
    swapping them relabels the basis, so only the sorted magnitudes matter.
    """
    ex, ez = eve_view(evo)
    return tuple(sorted((abs(ex), abs(ez))))


TYPE_CAP = 4_000_000


def _group_types(a: float, c: float, m: int):
    """Laws of the symbol counts of m identical bit-announcements, for b = 0, 1.

    Only the counts matter to the likelihood ratio, so summing over the
    C(m+3, 3) count vectors is equivalent to summing over all 4^m strings.
    """
    comps = np.array(list(_compositions(m, [m] * 4)), dtype=float)
    log_multi = math.lgamma(m + 1) - np.sum([[math.lgamma(x + 1) for x in row] for row in comps], axis=1)
    out = []
    for b in (0, 1):
        s = 1 - 2 * b
        v = 0.25 * np.array([1 + s * a, 1 - s * a, 1 + s * c, 1 - s * c])
        # xlogy keeps 0 * log 0 = 0 for symbols that never occur
        out.append(np.exp(log_multi + xlogy(comps, v).sum(axis=1)))
    return out


def grouped_bit_mi(groups: Sequence[tuple]) -> float:
    """I_T for shots given as ``[((|e_x|, |e_z|), multiplicity)]``."""
    p0 = p1 = np.ones(1)
    size = 1
    for (a, c), m in groups:
        if m == 0 or (a == 0 and c == 0):
            continue
        size *= math.comb(m + 3, 3)
        if size > TYPE_CAP:
            raise ExplosionError(f"{size} count vectors exceed the cap of {TYPE_CAP}")
        g0, g1 = _group_types(a, c, m)
        p0 = np.outer(p0, g0).ravel()
        p1 = np.outer(p1, g1).ravel()
    pm = 0.5 * (p0 + p1)
    value = 0.5 * (xlogy(p0, p0).sum() + xlogy(p1, p1).sum()) - xlogy(pm, pm).sum()
    return max(0.0, value / LN2)


@lru_cache(maxsize=65536)
def _class_multiset_mi(classes: tuple) -> float:
    """I_T for a T whose shots have the given sorted canonical classes."""
    groups = [(c, sum(1 for _ in g)) for c, g in itertools.groupby(classes)]
    return grouped_bit_mi(groups)


def subset_average_mi(classes: Sequence[tuple], k: int) -> float:
    """(1/C(N,k)) sum over size-k subsets T of I_T, from per-shot canonical classes.

    Uses multivariate-hypergeometric weights over class counts instead of
    visiting every subset.
    """
    n = len(classes)
    if not 0 <= k <= n:
        raise DomainError(f"k={k} must lie in [0, N={n}]")
    if k == 0:
        return 0.0
    counts = {}
    for c in classes:
        counts[c] = counts.get(c, 0) + 1
    keys = sorted(counts)
    denom = math.comb(n, k)
    total = 0.0
    for m in _compositions(k, [counts[c] for c in keys]):
        w = math.prod(math.comb(counts[c], mc) for c, mc in zip(keys, m))
        if w == 0:
            continue
        ms = tuple(c for c, mc in zip(keys, m) for _ in range(mc))
        total += w * _class_multiset_mi(ms)
    return total / denom


def _compositions(total: int, limits: Sequence[int]):
    if not limits:
        if total == 0:
            yield ()
        return
    head, rest = limits[0], limits[1:]
    room = sum(rest)
    for x in range(max(0, total - room), min(head, total) + 1):
        for tail in _compositions(total - x, rest):
            yield (x,) + tail


def strategy_mi(distribution, p_a: float, method: str = "direct") -> MutualInformationResult:
    """Expected I_S over an enumerated distribution of strings ``[(S, prob)]``.

    Results are reused across strings with identical canonical class
    multisets, since I_S depends only on those.
    """
    method = Method(method)
    if method is Method.MONTE_CARLO:
        raise ValueError("use strategy_mi_mc for sampled estimates")
    fn = mutual_info_direct if method is Method.EXACT_DIRECT else mutual_info_factored
    cache = {}
    value = 0.0
    for S, prob in distribution:
        if prob == 0:
            continue
        key = tuple(sorted(canonical_class(e) for e in S))
        if key not in cache:
            cache[key] = fn(S, p_a).value
        value += prob * cache[key]
    return MutualInformationResult(value, method)


def strategy_mi_mc(per_shot, p_a: float, samples: int, rng: np.random.Generator,
                   chunk: int = 20_000) -> MutualInformationResult:
    """Monte Carlo estimate of E_S[I_S(A:B)] without enumerating strings.

    ``per_shot[i]`` is the finite ``[(evolution, prob)]`` law of shot i.
    Each sample draws S shot by shot, then b and the announcements; the
    integrand is the same exact log-likelihood ratio as in
    :func:`mutual_info_mc`, conditioned on the drawn S.
    """
    if samples < 1000:
        raise DomainError("Monte Carlo estimation needs at least 1000 samples")
    n = len(per_shot)
    if n == 0:
        return MutualInformationResult(0.0, Method.MONTE_CARLO, samples, 0.0)
    width = max(len(d) for d in per_shot)
    branch_cdf = np.full((n, width), np.inf)
    P = np.zeros((2, n, width, 8))
    for i, dist in enumerate(per_shot):
        w = np.array([p for _, p in dist], dtype=float)
        branch_cdf[i, :len(w) - 1] = np.cumsum(w / w.sum())[:-1]
        for j, (evo, _) in enumerate(dist):
            for b in (0, 1):
                P[b, i, j] = announcement_vector(evo, MAXIMALLY_MIXED, b, p_a)
    cdf = np.cumsum(P, axis=3)
    cdf[..., -1] = np.inf
    with np.errstate(divide="ignore"):
        logP = np.log(P)
    shots = np.arange(n)
    values = np.empty(samples)
    done = 0
    while done < samples:
        m = min(chunk, samples - done)
        br = (rng.random((m, n))[:, :, None] >= branch_cdf[None]).sum(axis=2)
        b = rng.integers(2, size=m)
        u = rng.random((m, n))
        idx = (u[:, :, None] >= cdf[b[:, None], shots[None, :], br]).sum(axis=2)
        l0 = logP[0, shots, br, idx].sum(axis=1)
        l1 = logP[1, shots, br, idx].sum(axis=1)
        own = np.where(b == 0, l0, l1)
        values[done:done + m] = 1.0 + (own - np.logaddexp(l0, l1)) / LN2
        done += m
    return MutualInformationResult(float(values.mean()), Method.MONTE_CARLO, samples,
                                   float(values.std(ddof=1) / math.sqrt(samples)))
