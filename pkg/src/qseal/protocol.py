"""Alice and Bob's per-shot routine and session-level bookkeeping."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Optional

import numpy as np

from .errors import DomainError
from .qubit import (
    RHO_0,
    RHO_1,
    RHO_MINUS,
    RHO_PLUS,
    PauliAxis,
    QubitState,
    expectation,
)

ROLES = ("bob", "alice_basis", "alice_announce", "eve", "channel")


class PreparedState(enum.Enum):
    Z0 = 0
    Z1 = 1
    XPLUS = 2
    XMINUS = 3

    @property
    def state(self) -> QubitState:
        return _PREP_STATES[self]

    @property
    def basis(self) -> PauliAxis:
        return PauliAxis.Z if self in (PreparedState.Z0, PreparedState.Z1) else PauliAxis.X

    @property
    def eigenvalue(self) -> int:
        return +1 if self in (PreparedState.Z0, PreparedState.XPLUS) else -1


_PREP_STATES = {
    PreparedState.Z0: RHO_0,
    PreparedState.Z1: RHO_1,
    PreparedState.XPLUS: RHO_PLUS,
    PreparedState.XMINUS: RHO_MINUS,
}


class AnnouncementKind(enum.Enum):
    BIT = "bit"
    RESULT = "result"
    NULL = "null"


@dataclass(frozen=True)
class Announcement:
    """One public announcement by Alice.

    ``value`` is the encoded bit c for BIT, the outcome m (+1/-1) for RESULT,
    and unused for NULL.
    """

    kind: AnnouncementKind
    basis: Optional[PauliAxis] = None
    value: Optional[int] = None

    def __post_init__(self):
        if self.kind is AnnouncementKind.NULL:
            if self.basis is not None or self.value is not None:
                raise ValueError("null announcement carries no basis or value")
        elif self.basis is None:
            raise ValueError(f"{self.kind.value} announcement needs a basis")
        elif self.kind is AnnouncementKind.BIT and self.value not in (0, 1):
            raise ValueError(f"bit announcement value must be 0/1, got {self.value}")
        elif self.kind is AnnouncementKind.RESULT and self.value not in (1, -1):
            raise ValueError(f"result announcement value must be +1/-1, got {self.value}")

    @classmethod
    def bit(cls, basis: PauliAxis, c: int) -> "Announcement":
        return cls(AnnouncementKind.BIT, basis, c)

    @classmethod
    def result(cls, basis: PauliAxis, m: int) -> "Announcement":
        return cls(AnnouncementKind.RESULT, basis, m)

    @property
    def is_bit(self) -> bool:
        return self.kind is AnnouncementKind.BIT

    @property
    def is_result(self) -> bool:
        return self.kind is AnnouncementKind.RESULT

    @property
    def is_null(self) -> bool:
        return self.kind is AnnouncementKind.NULL

    def __str__(self):
        if self.is_null:
            return "null"
        sigma = "s1" if self.basis is PauliAxis.X else "s3"
        if self.is_bit:
            return f"{sigma} c={self.value}"
        return f"{sigma} m={self.value:+d}"


NULL = Announcement(AnnouncementKind.NULL)

BIT_ANNOUNCEMENTS = tuple(Announcement.bit(a, c) for a in (PauliAxis.X, PauliAxis.Z) for c in (0, 1))
RESULT_ANNOUNCEMENTS = tuple(Announcement.result(a, m) for a in (PauliAxis.X, PauliAxis.Z) for m in (1, -1))
ALL_ANNOUNCEMENTS = BIT_ANNOUNCEMENTS + RESULT_ANNOUNCEMENTS


def _check_probability(name, value):
    if not 0.0 < value < 1.0:
        raise DomainError(f"{name} must lie strictly between 0 and 1, got {value}")


def required_shots(c_m: float, p_a: float) -> int:
    """Smallest N with 1 - (1 - p_a/2)^N >= c_m.

    This is the next integer strictly above log(1 - c_m) / log(1 - p_a/2).
    """
    _check_probability("C_m", c_m)
    _check_probability("p_a", p_a)
    x = math.log1p(-c_m) / math.log1p(-p_a / 2)
    return math.floor(x) + 1


@dataclass(frozen=True)
class SessionParams:
    p_a: float
    n: int
    seed: int = 0
    c_m: Optional[float] = None
    message_bit: int = 0
    loss: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.p_a <= 1.0:
            raise DomainError(f"p_a must lie in [0, 1], got {self.p_a}")
        if self.c_m is not None:
            _check_probability("C_m", self.c_m)
        if not isinstance(self.n, (int, np.integer)) or self.n < 1:
            raise DomainError(f"N must be a positive integer, got {self.n!r}")
        if self.message_bit not in (0, 1):
            raise DomainError(f"message bit must be 0 or 1, got {self.message_bit!r}")
        if not 0.0 <= self.loss < 1.0:
            raise DomainError(f"loss probability must be in [0, 1), got {self.loss}")
        if not 0 <= self.seed < 2 ** 64:
            raise DomainError("seed must be a 64-bit unsigned integer")

    @classmethod
    def create(cls, p_a: float, c_m: Optional[float] = None, n: Optional[int] = None,
               **kwargs) -> "SessionParams":
        """Build params, deriving N from the confidence target when not given."""
        if n is None:
            if c_m is None:
                raise DomainError("either N or C_m is required")
            n = required_shots(c_m, p_a)
        elif c_m is not None and n < required_shots(c_m, p_a):
            raise DomainError(f"N={n} is below required_shots(C_m={c_m}, p_a={p_a})")
        return cls(p_a=p_a, n=int(n), c_m=c_m, **kwargs)

    def to_dict(self) -> dict:
        return {"p_a": self.p_a, "C_m": self.c_m, "N": self.n, "seed": self.seed,
                "message_bit": self.message_bit, "loss": self.loss}

    @classmethod
    def from_dict(cls, d: dict) -> "SessionParams":
        return cls(p_a=float(d["p_a"]), n=int(d["N"]), seed=int(d["seed"]),
                   c_m=None if d.get("C_m") is None else float(d["C_m"]),
                   message_bit=int(d.get("message_bit", 0)), loss=float(d.get("loss", 0.0)))


def role_streams(seed: int) -> dict:
    """Independent generators per role, split deterministically from ``seed``."""
    children = np.random.SeedSequence(seed).spawn(len(ROLES))
    return {role: np.random.Generator(np.random.PCG64(ss)) for role, ss in zip(ROLES, children)}


def role_seed_entropy(seed: int) -> dict:
    """Spawn keys of the role streams, recorded in transcript headers."""
    children = np.random.SeedSequence(seed).spawn(len(ROLES))
    return {role: list(ss.spawn_key) for role, ss in zip(ROLES, children)}


def encode_bit(b: int, m: int) -> int:
    return (b + (1 - m) // 2) % 2


def decode_bit(c: int, m: int) -> int:
    return (c + (1 - m) // 2) % 2


def bob_prepare(rng: np.random.Generator):
    label = PreparedState(int(rng.integers(4)))
    return label, label.state


def alice_measure(received: QubitState, rng: np.random.Generator):
    basis = PauliAxis.X if rng.random() < 0.5 else PauliAxis.Z
    p_plus = (1 + expectation(basis, received)) / 2
    m = 1 if rng.random() < p_plus else -1
    return basis, m


def alice_announce(b: int, basis: PauliAxis, m: int, p_a: float,
                   rng: np.random.Generator) -> Announcement:
    if rng.random() < p_a:
        return Announcement.bit(basis, encode_bit(b, m))
    return Announcement.result(basis, m)


def matched(prep: PreparedState, basis: PauliAxis) -> bool:
    return prep.basis is basis


@dataclass(frozen=True)
class ShotRecord:
    index: int
    announcement: Announcement
    prepared: Optional[PreparedState] = None
    basis: Optional[PauliAxis] = None
    m: Optional[int] = None

    def __post_init__(self):
        a = self.announcement
        if not a.is_null and self.basis is not None and a.basis is not self.basis:
            raise ValueError("announcement basis disagrees with the recorded basis")

    @property
    def is_matched(self) -> bool:
        basis = self.basis if self.basis is not None else self.announcement.basis
        return self.prepared is not None and basis is not None and matched(self.prepared, basis)


class Reconstruction(NamedTuple):
    bit: Optional[int]
    votes: tuple

    @property
    def determined(self) -> bool:
        return self.bit is not None

    @property
    def conflicts(self) -> int:
        return min(self.votes)


def bob_reconstruct(records: Iterable[ShotRecord]) -> Reconstruction:
    """Majority vote over matched bit-announcements.

    On a matched shot Bob's conjectured outcome is the eigenvalue of the state
    he prepared.  ``bit`` is None when there are no votes or the vote ties.
    """
    votes = [0, 0]
    for rec in records:
        a = rec.announcement
        if a.is_bit and rec.prepared is not None and matched(rec.prepared, a.basis):
            votes[decode_bit(a.value, rec.prepared.eigenvalue)] += 1
    if votes[0] == votes[1]:
        return Reconstruction(None, tuple(votes))
    return Reconstruction(0 if votes[0] > votes[1] else 1, tuple(votes))
