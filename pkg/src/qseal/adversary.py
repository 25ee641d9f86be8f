"""Eavesdropper strategies and the effective evolutions they induce.

Every strategy is per-shot and non-adaptive: on each shot Eve either lets the
particle pass, applies a quantum channel, or measures and resends.  A strategy
is a finite distribution over such actions (``branches``), which makes the
distribution over effective-evolution strings enumerable.
"""

from __future__ import annotations

import enum
import itertools
import math
import re
from dataclasses import dataclass
from functools import cached_property
from typing import Optional, Sequence

import numpy as np

from .errors import ExplosionError, ParseError
from .qubit import (
    MAXIMALLY_MIXED,
    EffectiveEvolution,
    KrausChannel,
    Povm,
    Provenance,
    ProvenanceKind,
    QubitState,
    apply_channel,
    channel_to_affine,
    measure,
    outcome_probabilities,
)

MAX_POVM_OUTCOMES = 8
DEFAULT_STRING_CAP = 10 ** 6

IDENTITY_EVOLUTION = EffectiveEvolution.identity()
BREIDBART_DIRECTION = (1 / math.sqrt(2), 0.0, 1 / math.sqrt(2))


class ActionKind(enum.Enum):
    PASS = "pass"
    CHANNEL = "channel"
    MEASURE_RESEND = "measure_resend"


@dataclass(frozen=True, eq=False)
class EveAction:
    kind: ActionKind
    channel: Optional[KrausChannel] = None
    povm: Optional[Povm] = None
    resend: tuple = ()

    def __post_init__(self):
        if self.kind is ActionKind.CHANNEL and self.channel is None:
            raise ValueError("channel action needs a KrausChannel")
        if self.kind is ActionKind.MEASURE_RESEND:
            if self.povm is None:
                raise ValueError("measure-resend action needs a POVM")
            if len(self.povm) > MAX_POVM_OUTCOMES:
                raise ValueError(f"POVMs are capped at {MAX_POVM_OUTCOMES} outcomes")
            if len(self.resend) != len(self.povm):
                raise ValueError("resend rule needs one state per POVM outcome")

    @classmethod
    def passive(cls) -> "EveAction":
        return cls(ActionKind.PASS)

    @classmethod
    def apply(cls, channel: KrausChannel) -> "EveAction":
        return cls(ActionKind.CHANNEL, channel=channel)

    @classmethod
    def measure_resend(cls, povm: Povm, resend: Sequence[QubitState]) -> "EveAction":
        return cls(ActionKind.MEASURE_RESEND, povm=povm, resend=tuple(resend))

    @classmethod
    def intercept(cls, direction: Sequence[float]) -> "EveAction":
        """Projective measurement along ``direction``, resending the observed eigenstate."""
        n = np.asarray(direction, dtype=float)
        n = n / np.linalg.norm(n)
        return cls.measure_resend(Povm.projective(n), (QubitState(tuple(n)), QubitState(tuple(-n))))

    @cached_property
    def channel_evolution(self) -> EffectiveEvolution:
        return channel_to_affine(self.channel)

    def outcome_evolution(self, index: int) -> EffectiveEvolution:
        prov = Provenance(ProvenanceKind.MEASUREMENT_OUTCOME, index)
        return EffectiveEvolution.constant(self.resend[index], prov)


class Strategy:
    """Finite per-shot mixture of Eve actions.

    Subclasses provide ``branches(shot)``: a list of ``(EveAction, weight)``.
    """

    name = "strategy"

    def branches(self, shot: int):
        raise NotImplementedError

    def describe(self) -> str:
        return self.name

    def action_for(self, shot: int, rng: np.random.Generator) -> EveAction:
        branches = self.branches(shot)
        if len(branches) == 1:
            return branches[0][0]
        u = rng.random()
        acc = 0.0
        for action, w in branches:
            acc += w
            if u < acc:
                return action
        return branches[-1][0]

    def __repr__(self):
        return f"<{type(self).__name__} {self.describe()!r}>"


class Passive(Strategy):
    name = "passive"

    def branches(self, shot):
        return [(EveAction.passive(), 1.0)]


class InterceptResend(Strategy):
    """Measure in a basis chosen by ``basis`` and resend the observed eigenstate.

    ``basis`` is one of ``x``, ``z``, ``random`` (x or z with probability 1/2)
    or ``breidbart`` (the intermediate basis halfway between z and x on the
    Bloch sphere).
    """

    name = "intercept_resend"
    POLICIES = ("x", "z", "random", "breidbart")

    def __init__(self, basis: str = "random"):
        basis = basis.lower()
        if basis not in self.POLICIES:
            raise ValueError(f"unknown basis policy {basis!r}; choose from {self.POLICIES}")
        self.basis = basis
        x = EveAction.intercept((1.0, 0.0, 0.0))
        z = EveAction.intercept((0.0, 0.0, 1.0))
        self._branches = {
            "x": [(x, 1.0)],
            "z": [(z, 1.0)],
            "random": [(x, 0.5), (z, 0.5)],
            "breidbart": [(EveAction.intercept(BREIDBART_DIRECTION), 1.0)],
        }[basis]

    def branches(self, shot):
        return self._branches

    def describe(self):
        return f"intercept_resend basis={self.basis}"


class _ChannelStrategy(Strategy):
    def __init__(self, channel: KrausChannel):
        self._action = EveAction.apply(channel)

    def branches(self, shot):
        return [(self._action, 1.0)]


class Depolarize(_ChannelStrategy):
    name = "depolarize"

    def __init__(self, lam: float):
        self.lam = float(lam)
        super().__init__(KrausChannel.depolarizing(self.lam))

    def describe(self):
        return f"depolarize lambda={self.lam!r}"


class BitFlip(_ChannelStrategy):
    name = "bit_flip"

    def __init__(self, p: float):
        self.p = float(p)
        super().__init__(KrausChannel.bit_flip(self.p))

    def describe(self):
        return f"bit_flip p={self.p!r}"


class PhaseFlip(_ChannelStrategy):
    name = "phase_flip"

    def __init__(self, p: float):
        self.p = float(p)
        super().__init__(KrausChannel.phase_flip(self.p))

    def describe(self):
        return f"phase_flip p={self.p!r}"


_AXES = {"x": (1.0, 0.0, 0.0), "y": (0.0, 1.0, 0.0), "z": (0.0, 0.0, 1.0)}


class UnitaryRotation(_ChannelStrategy):
    name = "rotate"

    def __init__(self, axis: str = "y", angle: float = math.pi / 8):
        self.axis = axis.lower()
        if self.axis not in _AXES:
            raise ValueError(f"rotation axis must be x, y or z, got {axis!r}")
        self.angle = float(angle)
        super().__init__(KrausChannel.rotation(_AXES[self.axis], self.angle))

    def describe(self):
        return f"rotate axis={self.axis} angle={self.angle!r}"


class ProbabilisticMix(Strategy):
    name = "mix"

    def __init__(self, components: Sequence[tuple]):
        total = sum(w for _, w in components)
        if any(w < 0 for _, w in components) or abs(total - 1) > 1e-9:
            raise ValueError(f"mixture weights must be nonnegative and sum to 1, got {total}")
        self.components = [(s, w / total) for s, w in components]

    def branches(self, shot):
        out = []
        for strategy, w in self.components:
            out.extend((a, w * v) for a, v in strategy.branches(shot))
        return out

    def describe(self):
        return "mix " + " + ".join(f"{w!r}*{s.describe()}" for s, w in self.components)


@dataclass(frozen=True)
class EvolutionString:
    evolutions: tuple
    weight: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "evolutions", tuple(self.evolutions))
        if not -1e-12 <= self.weight <= 1 + 1e-12:
            raise ValueError(f"string weight must be a probability, got {self.weight}")

    def __len__(self):
        return len(self.evolutions)

    def __iter__(self):
        return iter(self.evolutions)

    def __getitem__(self, i):
        return self.evolutions[i]

    @classmethod
    def identity(cls, n: int) -> "EvolutionString":
        return cls((IDENTITY_EVOLUTION,) * n)

    def subsequence(self, positions) -> "EvolutionString":
        return EvolutionString(tuple(self.evolutions[i] for i in positions), self.weight)


def enact(strategy: Strategy, shot: int, state: QubitState, rng: np.random.Generator):
    """Let Eve act on one particle; returns ``(post_state, evolution)``."""
    action = strategy.action_for(shot, rng)
    if action.kind is ActionKind.PASS:
        return state, IDENTITY_EVOLUTION
    if action.kind is ActionKind.CHANNEL:
        return apply_channel(action.channel, state), action.channel_evolution
    index, _, _ = measure(action.povm, state, rng.random())
    return action.resend[index], action.outcome_evolution(index)


def shot_distribution(strategy: Strategy, shot: int, prior: QubitState = MAXIMALLY_MIXED):
    """Exact ``[(evolution, probability)]`` for one shot given the incoming state."""
    out = []
    for action, w in strategy.branches(shot):
        if w == 0:
            continue
        if action.kind is ActionKind.PASS:
            out.append((IDENTITY_EVOLUTION, w))
        elif action.kind is ActionKind.CHANNEL:
            out.append((action.channel_evolution, w))
        else:
            for i, p in enumerate(outcome_probabilities(action.povm, prior)):
                if p > 0:
                    out.append((action.outcome_evolution(i), w * p))
    return out


def string_distribution(strategy: Strategy, n: int, priors: Optional[Sequence[QubitState]] = None,
                        cap: int = DEFAULT_STRING_CAP):
    """All effective-evolution strings of length ``n`` with their probabilities.

    ``priors`` are the incoming states per shot; by default Eve's description
    I/2 on every shot.
    """
    if priors is None:
        priors = [MAXIMALLY_MIXED] * n
    elif len(priors) != n:
        raise ValueError("need one prior per shot")
    per_shot = [shot_distribution(strategy, i, priors[i]) for i in range(n)]
    count = math.prod(len(d) for d in per_shot)
    if count > cap:
        raise ExplosionError(f"{count} evolution strings exceed the cap of {cap}")
    out = []
    for combo in itertools.product(*per_shot):
        prob = math.prod(p for _, p in combo)
        out.append((EvolutionString(tuple(e for e, _ in combo), prob), prob))
    return out


_NUMBER = re.compile(r"^\s*([-+]?\d*\.?\d*(?:[eE][-+]?\d+)?)\s*\*?\s*(pi)?\s*(?:/\s*(\d+(?:\.\d*)?))?\s*$")


def _parse_float(text: str) -> float:
    """Float literal, optionally with a pi factor: ``0.3``, ``pi/8``, ``3pi/8``."""
    m = _NUMBER.match(text)
    if not m or (not m.group(1) and not m.group(2)):
        raise ParseError(f"not a number: {text!r}")
    coef = float(m.group(1)) if m.group(1) not in ("", "+", "-") else float(m.group(1) + "1")
    value = coef * (math.pi if m.group(2) else 1.0)
    if m.group(3):
        value /= float(m.group(3))
    return value


def _parse_single(text: str) -> Strategy:
    parts = text.split()
    if not parts:
        raise ParseError("empty strategy spec")
    name, kv = parts[0].lower(), {}
    for item in parts[1:]:
        if "=" not in item:
            raise ParseError(f"expected key=value, got {item!r}")
        k, v = item.split("=", 1)
        kv[k.lower()] = v

    def take(key, default=None):
        if key in kv:
            return kv.pop(key)
        if default is None:
            raise ParseError(f"strategy {name!r} needs parameter {key!r}")
        return default

    try:
        if name == "passive":
            s = Passive()
        elif name in ("intercept_resend", "intercept"):
            s = InterceptResend(take("basis", "random"))
        elif name in ("depolarize", "depolarizing"):
            s = Depolarize(_parse_float(take("lambda")))
        elif name == "bit_flip":
            s = BitFlip(_parse_float(take("p")))
        elif name == "phase_flip":
            s = PhaseFlip(_parse_float(take("p")))
        elif name in ("rotate", "rotation"):
            s = UnitaryRotation(take("axis", "y"), _parse_float(take("angle", "pi/8")))
        else:
            raise ParseError(f"unknown strategy {name!r}")
    except ValueError as exc:
        if isinstance(exc, ParseError):
            raise
        raise ParseError(str(exc)) from exc
    if kv:
        raise ParseError(f"unused parameters for {name!r}: {sorted(kv)}")
    return s


def parse_strategy(text: str) -> Strategy:
    """Parse ``name key=value ...`` or ``mix w1*spec1 + w2*spec2``."""
    text = text.strip()
    if text.lower().startswith("mix"):
        body = text[3:].strip()
        if not body:
            raise ParseError("mix needs at least one weighted component")
        components = []
        for term in body.split("+"):
            if "*" not in term:
                raise ParseError(f"mix component must be weight*spec, got {term.strip()!r}")
            w, spec = term.split("*", 1)
            components.append((_parse_single(spec), _parse_float(w)))
        try:
            return ProbabilisticMix(components)
        except ValueError as exc:
            raise ParseError(str(exc)) from exc
    return _parse_single(text)
