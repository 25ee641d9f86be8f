"""In-process sessions and line-delimited transcript persistence."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

from ..adversary import Passive, Strategy, enact
from ..errors import ParseError
from ..protocol import (
    NULL,
    Announcement,
    AnnouncementKind,
    PreparedState,
    Reconstruction,
    SessionParams,
    ShotRecord,
    alice_announce,
    alice_measure,
    bob_prepare,
    bob_reconstruct,
    role_seed_entropy,
    role_streams,
)
from ..qubit import PauliAxis
from ..verifier import matched_error_rate

TRANSCRIPT_VERSION = 1


@dataclass
class SessionTranscript:
    params: SessionParams
    records: list
    outcome: Reconstruction = None
    stats: dict = field(default_factory=dict)
    complete: bool = True
    realized: Optional[list] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.outcome is None:
            self.outcome = bob_reconstruct(self.records)
        if not self.stats:
            self.stats = session_stats(self.params, self.records, self.outcome)

    @property
    def shots(self) -> list:
        """Non-null records."""
        return [r for r in self.records if not r.announcement.is_null]

    def to_lines(self) -> list:
        header = {"record": "header", "version": TRANSCRIPT_VERSION, "params": self.params.to_dict(),
                  "seeds": {"session": self.params.seed, "spawn_keys": role_seed_entropy(self.params.seed)}}
        if not self.complete:
            header["complete"] = False
        return [json.dumps(header, sort_keys=True)] + [json.dumps(record_to_row(r), sort_keys=True)
                                                       for r in self.records]

    def dumps(self) -> str:
        return "\n".join(self.to_lines()) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.dumps())

    @classmethod
    def loads(cls, text: str) -> "SessionTranscript":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines:
            raise ParseError("empty transcript")
        try:
            header = json.loads(lines[0])
            if header.get("record") != "header":
                raise ParseError("first line must be the header record")
            params = SessionParams.from_dict(header["params"])
            records = [row_to_record(json.loads(ln)) for ln in lines[1:]]
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ParseError):
                raise
            raise ParseError(f"malformed transcript: {exc}") from exc
        return cls(params, records, complete=header.get("complete", True))

    @classmethod
    def load(cls, path) -> "SessionTranscript":
        return cls.loads(Path(path).read_text())


def session_stats(params: SessionParams, records, outcome: Reconstruction) -> dict:
    shots = [r for r in records if not r.announcement.is_null]
    bits = [r for r in shots if r.announcement.is_bit]
    rate, n_matched_result = matched_error_rate(records)
    return {
        "shots": len(shots),
        "null": len(records) - len(shots),
        "bit_announcements": len(bits),
        "result_announcements": len(shots) - len(bits),
        "matched_bit": sum(r.is_matched for r in bits),
        "matched_result": n_matched_result,
        "matched_error_rate": rate,
        "expected_bit": params.p_a * params.n,
        "expected_result": (1 - params.p_a) * params.n,
        "decoded_bit": outcome.bit,
        "votes": list(outcome.votes),
        "conflicts": outcome.conflicts,
    }


def record_to_row(r: ShotRecord) -> dict:
    a = r.announcement
    return {
        "index": r.index,
        "prepared": None if r.prepared is None else r.prepared.name,
        "basis": None if r.basis is None else r.basis.name,
        "m": r.m,
        "kind": a.kind.value,
        "c": a.value if a.is_bit else None,
    }


def row_to_record(row: dict) -> ShotRecord:
    kind = AnnouncementKind(row["kind"])
    basis = None if row.get("basis") is None else PauliAxis[row["basis"]]
    if kind is AnnouncementKind.NULL:
        ann = NULL
    elif kind is AnnouncementKind.BIT:
        ann = Announcement.bit(basis, int(row["c"]))
    else:
        ann = Announcement.result(basis, int(row["m"]))
    prepared = None if row.get("prepared") is None else PreparedState[row["prepared"]]
    m = None if row.get("m") is None else int(row["m"])
    return ShotRecord(int(row["index"]), ann, prepared, basis, m)


def run_session(params: SessionParams, strategy: Strategy = None,
                loss: Optional[float] = None) -> SessionTranscript:
    """Run shots until N of them reach Alice.

    Each shot: Bob prepares, Eve acts, the channel may lose the particle
    (a null announcement), otherwise Alice measures and announces.
    """
    strategy = strategy or Passive()
    if loss is not None:
        params = replace(params, loss=loss)
    loss = params.loss
    streams = role_streams(params.seed)
    records, realized = [], []
    shot = delivered = 0
    while delivered < params.n:
        prep, state = bob_prepare(streams["bob"])
        state, evo = enact(strategy, shot, state, streams["eve"])
        if loss > 0 and streams["channel"].random() < loss:
            records.append(ShotRecord(shot, NULL, prep))
        else:
            basis, m = alice_measure(state, streams["alice_basis"])
            ann = alice_announce(params.message_bit, basis, m, params.p_a, streams["alice_announce"])
            records.append(ShotRecord(shot, ann, prep, basis, m))
            realized.append(evo)
            delivered += 1
        shot += 1
    return SessionTranscript(params, records, realized=realized)
