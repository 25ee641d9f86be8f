"""Single-qubit state algebra in Bloch form.

States are stored as Bloch vectors ``r`` with ``rho = (I + r . sigma) / 2``.
Raw 2x2 complex matrices only appear at the boundary, as Kraus operators of a
:class:`KrausChannel` or measurement operators of a :class:`Povm`.  Every map
that the protocol analysis needs is reduced to an affine Bloch map
``r -> M r + t`` (:class:`EffectiveEvolution`).
"""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import (
    ChannelNotTracePreserving,
    InvalidPovm,
    NotContractive,
    ZeroProbabilityOutcome,
)

COMPLETENESS_TOL = 1e-10
STATE_TOL = 1e-12
BALL_TOL = 1e-9

I2 = np.eye(2, dtype=complex)
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULIS = (SIGMA_X, SIGMA_Y, SIGMA_Z)


class PauliAxis(enum.Enum):
    """Alice's two measurement observables: X is sigma_1, Z is sigma_3."""

    X = 0
    Z = 2

    @property
    def index(self) -> int:
        return self.value

    @property
    def matrix(self) -> np.ndarray:
        return PAULIS[self.value]


@dataclass(frozen=True)
class QubitState:
    bloch: tuple

    def __post_init__(self):
        r = tuple(float(v) for v in self.bloch)
        if len(r) != 3 or not all(math.isfinite(v) for v in r):
            raise ValueError(f"Bloch vector must be 3 finite reals, got {self.bloch!r}")
        if math.sqrt(r[0] ** 2 + r[1] ** 2 + r[2] ** 2) > 1 + STATE_TOL:
            raise ValueError(f"Bloch vector {r} lies outside the unit ball")
        object.__setattr__(self, "bloch", r)

    @classmethod
    def from_matrix(cls, rho: np.ndarray) -> "QubitState":
        rho = np.asarray(rho, dtype=complex)
        tr = np.trace(rho).real
        return cls(tuple(np.trace(s @ rho).real / tr for s in PAULIS))

    @property
    def vector(self) -> np.ndarray:
        return np.array(self.bloch)

    def matrix(self) -> np.ndarray:
        x, y, z = self.bloch
        return 0.5 * (I2 + x * SIGMA_X + y * SIGMA_Y + z * SIGMA_Z)

    def __repr__(self):
        return "QubitState(({:.6g}, {:.6g}, {:.6g}))".format(*self.bloch)


RHO_0 = QubitState((0.0, 0.0, 1.0))
RHO_1 = QubitState((0.0, 0.0, -1.0))
RHO_PLUS = QubitState((1.0, 0.0, 0.0))
RHO_MINUS = QubitState((-1.0, 0.0, 0.0))
MAXIMALLY_MIXED = QubitState((0.0, 0.0, 0.0))


def expectation(axis: PauliAxis, state: QubitState) -> float:
    """Tr(sigma rho) for Alice's observable; just a Bloch component."""
    return state.bloch[axis.index]


def _check_completeness(ops, exc):
    if len(ops) == 0:
        raise exc("operator list must be nonempty")
    total = sum(E.conj().T @ E for E in ops)
    err = np.max(np.abs(total - I2))
    if err > COMPLETENESS_TOL:
        raise exc(f"sum of E^dagger E deviates from identity by {err:.3g}")


def _as_operators(ops) -> tuple:
    out = []
    for E in ops:
        E = np.array(E, dtype=complex)
        if E.shape != (2, 2):
            raise ValueError(f"operators must be 2x2, got shape {E.shape}")
        E.setflags(write=False)
        out.append(E)
    return tuple(out)


@dataclass(frozen=True, eq=False)
class KrausChannel:
    operators: tuple

    def __post_init__(self):
        ops = _as_operators(self.operators)
        _check_completeness(ops, ChannelNotTracePreserving)
        object.__setattr__(self, "operators", ops)

    @classmethod
    def identity(cls) -> "KrausChannel":
        return cls([I2])

    @classmethod
    def depolarizing(cls, lam: float) -> "KrausChannel":
        """rho -> (1 - lam) rho + lam I/2, i.e. Bloch shrink by (1 - lam)."""
        if not 0.0 <= lam <= 4.0 / 3.0:
            raise ValueError(f"depolarizing strength must be in [0, 4/3], got {lam}")
        a = math.sqrt(1 - 3 * lam / 4)
        b = math.sqrt(lam / 4)
        return cls([a * I2, b * SIGMA_X, b * SIGMA_Y, b * SIGMA_Z])

    @classmethod
    def bit_flip(cls, p: float) -> "KrausChannel":
        return cls([math.sqrt(1 - p) * I2, math.sqrt(p) * SIGMA_X])

    @classmethod
    def phase_flip(cls, p: float) -> "KrausChannel":
        return cls([math.sqrt(1 - p) * I2, math.sqrt(p) * SIGMA_Z])

    @classmethod
    def rotation(cls, axis: Sequence[float], angle: float) -> "KrausChannel":
        """Unitary exp(-i angle n.sigma / 2): Bloch rotation by ``angle`` about n."""
        n = np.asarray(axis, dtype=float)
        n = n / np.linalg.norm(n)
        gen = sum(c * s for c, s in zip(n, PAULIS))
        U = math.cos(angle / 2) * I2 - 1j * math.sin(angle / 2) * gen
        return cls([U])


@dataclass(frozen=True, eq=False)
class Povm:
    """Measurement operators F_i with sum F_i^dagger F_i = I.

    Outcome ``i`` occurs with probability Tr(F_i rho F_i^dagger) and leaves the
    state F_i rho F_i^dagger / Tr(...).
    """

    effects: tuple

    def __post_init__(self):
        ops = _as_operators(self.effects)
        _check_completeness(ops, InvalidPovm)
        object.__setattr__(self, "effects", ops)

    def __len__(self):
        return len(self.effects)

    @classmethod
    def projective(cls, direction: Sequence[float]) -> "Povm":
        """Two-outcome projective measurement along a Bloch direction.

        Outcome 0 projects onto +n, outcome 1 onto -n.
        """
        n = np.asarray(direction, dtype=float)
        n = n / np.linalg.norm(n)
        gen = sum(c * s for c, s in zip(n, PAULIS))
        return cls([(I2 + gen) / 2, (I2 - gen) / 2])

    @classmethod
    def pauli(cls, axis: PauliAxis) -> "Povm":
        d = [0.0, 0.0, 0.0]
        d[axis.index] = 1.0
        return cls.projective(d)

    def rank_one(self, index: int) -> bool:
        return np.linalg.matrix_rank(self.effects[index], tol=1e-9) == 1


class ProvenanceKind(enum.Enum):
    IDENTITY = "identity"
    CHANNEL = "channel"
    MEASUREMENT_OUTCOME = "measurement_outcome"


@dataclass(frozen=True)
class Provenance:
    kind: ProvenanceKind
    outcome: Optional[int] = None

    def __str__(self):
        if self.kind is ProvenanceKind.MEASUREMENT_OUTCOME:
            return f"outcome[{self.outcome}]"
        return self.kind.value


def _ball_sample() -> np.ndarray:
    # 6 axis, 12 edge-midpoint and 8 corner directions of the cube, normalized
    pts = [p for p in itertools.product((-1, 0, 1), repeat=3) if any(p)]
    pts = np.array(pts, dtype=float)
    return pts / np.linalg.norm(pts, axis=1, keepdims=True)


BALL_SAMPLE = _ball_sample()


@dataclass(frozen=True, eq=False)
class EffectiveEvolution:
    """Affine Bloch map r -> linear @ r + offset.

    ``affine`` is False for general-rank measurement outcomes, whose
    post-measurement map is not affine; those are stored as the constant map
    to the post-state realized for the particular input they were built from.
    """

    linear: np.ndarray
    offset: np.ndarray
    provenance: Provenance = field(default_factory=lambda: Provenance(ProvenanceKind.CHANNEL))
    affine: bool = True

    def __post_init__(self):
        M = np.array(self.linear, dtype=float).reshape(3, 3)
        t = np.array(self.offset, dtype=float).reshape(3)
        M.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "linear", M)
        object.__setattr__(self, "offset", t)
        if not np.any(M):
            worst = float(np.linalg.norm(t))
        else:
            worst = float(np.max(np.linalg.norm(BALL_SAMPLE @ M.T + t, axis=1)))
        if worst > 1 + BALL_TOL:
            raise NotContractive(f"affine map sends a boundary point to radius {worst:.6g}")

    @classmethod
    def identity(cls) -> "EffectiveEvolution":
        return cls(np.eye(3), np.zeros(3), Provenance(ProvenanceKind.IDENTITY))

    @classmethod
    def constant(cls, state: QubitState, provenance: Optional[Provenance] = None,
                 affine: bool = True) -> "EffectiveEvolution":
        if provenance is None:
            provenance = Provenance(ProvenanceKind.MEASUREMENT_OUTCOME, 0)
        return cls(np.zeros((3, 3)), state.vector, provenance, affine)

    @property
    def is_constant(self) -> bool:
        return not np.any(self.linear)

    def apply(self, state: QubitState) -> QubitState:
        r = self.linear @ np.asarray(state.bloch) + self.offset
        n = float(np.linalg.norm(r))
        if n > 1:
            # roundoff only; construction guarantees contraction up to BALL_TOL
            r = r / n
        return QubitState(tuple(r))

    def key(self) -> tuple:
        return tuple(self.linear.ravel()) + tuple(self.offset)

    def __eq__(self, other):
        if not isinstance(other, EffectiveEvolution):
            return NotImplemented
        return self.key() == other.key() and self.provenance == other.provenance

    def __hash__(self):
        return hash((self.key(), self.provenance))

    def __repr__(self):
        if self.is_constant:
            return "EffectiveEvolution(const->({:.4g}, {:.4g}, {:.4g}), {})".format(
                *self.offset, self.provenance)
        return f"EffectiveEvolution(M={self.linear.tolist()}, t={self.offset.tolist()}, {self.provenance})"


def apply_channel(ch: KrausChannel, state: QubitState) -> QubitState:
    rho = state.matrix()
    out = sum(E @ rho @ E.conj().T for E in ch.operators)
    return QubitState.from_matrix(out)


def outcome_probabilities(povm: Povm, state: QubitState) -> np.ndarray:
    rho = state.matrix()
    p = np.array([np.trace(F @ rho @ F.conj().T).real for F in povm.effects])
    return np.clip(p, 0.0, None)


def measure(povm: Povm, state: QubitState, draw: float = None,
            forced: Optional[int] = None):
    """Sample a POVM outcome with the Born rule.

    ``draw`` is a uniform sample in [0, 1) used to pick the outcome; passing
    ``forced`` skips sampling and conditions on that outcome instead.
    Returns ``(index, post_state, probability)``.
    """
    probs = outcome_probabilities(povm, state)
    if forced is not None:
        index = forced
        if probs[index] < 1e-15:
            raise ZeroProbabilityOutcome(f"outcome {index} has probability {probs[index]:.3g}")
    else:
        if draw is None:
            raise ValueError("either a uniform draw or a forced outcome is required")
        cdf = np.cumsum(probs)
        index = int(np.searchsorted(cdf, draw * cdf[-1], side="right"))
        index = min(index, len(probs) - 1)
        while probs[index] == 0.0:
            index -= 1
    F = povm.effects[index]
    post = F @ state.matrix() @ F.conj().T
    return index, QubitState.from_matrix(post), float(probs[index])


def channel_to_affine(ch: KrausChannel) -> EffectiveEvolution:
    t = np.array(apply_channel(ch, MAXIMALLY_MIXED).bloch)
    M = np.empty((3, 3))
    for j in range(3):
        e = [0.0, 0.0, 0.0]
        e[j] = 1.0
        M[:, j] = np.array(apply_channel(ch, QubitState(e)).bloch) - t
    M[np.abs(M) < 1e-15] = 0.0
    t[np.abs(t) < 1e-15] = 0.0
    return EffectiveEvolution(M, t, Provenance(ProvenanceKind.CHANNEL))


def outcome_evolution(povm: Povm, index: int, state: QubitState) -> EffectiveEvolution:
    """Effective evolution for measurement outcome ``index`` on ``state``.

    Rank-one outcomes give a genuine constant map; other ranks give the
    constant map to this input's post-state, flagged non-affine.
    """
    _, post, _ = measure(povm, state, forced=index)
    prov = Provenance(ProvenanceKind.MEASUREMENT_OUTCOME, index)
    return EffectiveEvolution.constant(post, prov, affine=povm.rank_one(index))


def _random_isometry(rng: np.random.Generator, rows: int) -> np.ndarray:
    z = rng.normal(size=(rows, 2)) + 1j * rng.normal(size=(rows, 2))
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def random_channel(rng: np.random.Generator, n_kraus: int = 4) -> KrausChannel:
    """Random CPTP map from a Stinespring isometry C^2 -> C^(2 n_kraus)."""
    V = _random_isometry(rng, 2 * n_kraus)
    return KrausChannel([V[2 * i:2 * i + 2] for i in range(n_kraus)])


def random_povm(rng: np.random.Generator, n_outcomes: int = 3) -> Povm:
    V = _random_isometry(rng, 2 * n_outcomes)
    return Povm([V[2 * i:2 * i + 2] for i in range(n_outcomes)])


def random_state(rng: np.random.Generator) -> QubitState:
    v = rng.normal(size=3)
    v *= rng.random() ** (1 / 3) / np.linalg.norm(v)
    return QubitState(tuple(v))
