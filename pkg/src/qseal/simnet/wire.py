"""Length-prefixed binary framing for the two-party session.

Frame layout: one type byte, a 32-bit little-endian payload length, payload.

=============  ==========================================================
SESSION_INIT   version u8, p_a f64, C_m f64 (NaN if unset), N u64,
               seed u64, loss f64
QUBIT          Bloch vector, three little-endian f64 (24 bytes)
MEASURE_ACK    shot index u32
ANNOUNCE       kind u8 (0 bit, 1 result, 2 null), basis u8 (0 X, 1 Z,
               255 none), value u8 (c, or (1 - m) / 2)
SESSION_END    empty
=============  ==========================================================

The simulated qubit crosses the wire as its Bloch vector.  This is a
simulator, not a secure channel: anything on the path can read the state.
"""

from __future__ import annotations

import enum
import math
import socket
import struct
from dataclasses import dataclass

from ..errors import TransportError, VersionMismatch
from ..protocol import NULL, Announcement, AnnouncementKind, SessionParams
from ..qubit import PauliAxis, QubitState

PROTOCOL_VERSION = 1
HEADER = struct.Struct("<BI")
INIT = struct.Struct("<BddQQd")
QUBIT = struct.Struct("<3d")
ACK = struct.Struct("<I")
ANNOUNCE = struct.Struct("<BBB")
MAX_PAYLOAD = 1 << 16


class MessageType(enum.IntEnum):
    SESSION_INIT = 1
    QUBIT = 2
    MEASURE_ACK = 3
    ANNOUNCE = 4
    SESSION_END = 5


_FIXED_SIZES = {
    MessageType.SESSION_INIT: INIT.size,
    MessageType.QUBIT: QUBIT.size,
    MessageType.MEASURE_ACK: ACK.size,
    MessageType.ANNOUNCE: ANNOUNCE.size,
    MessageType.SESSION_END: 0,
}


@dataclass(frozen=True)
class WireMessage:
    type: MessageType
    payload: bytes = b""

    def __post_init__(self):
        want = _FIXED_SIZES[self.type]
        if len(self.payload) != want:
            raise TransportError(f"{self.type.name} payload must be {want} bytes, got {len(self.payload)}")

    def encode(self) -> bytes:
        return HEADER.pack(self.type, len(self.payload)) + self.payload


def decode_frame(data: bytes):
    """Decode one frame from the front of ``data``; returns ``(message, rest)``."""
    if len(data) < HEADER.size:
        raise TransportError("truncated frame header")
    tag, length = HEADER.unpack_from(data)
    try:
        mtype = MessageType(tag)
    except ValueError:
        raise TransportError(f"unknown message type {tag}") from None
    if length > MAX_PAYLOAD:
        raise TransportError(f"payload length {length} exceeds {MAX_PAYLOAD}")
    end = HEADER.size + length
    if len(data) < end:
        raise TransportError(f"truncated {mtype.name} frame: {len(data) - HEADER.size} of {length} payload bytes")
    return WireMessage(mtype, bytes(data[HEADER.size:end])), data[end:]


def session_init(params: SessionParams) -> WireMessage:
    c_m = math.nan if params.c_m is None else params.c_m
    return WireMessage(MessageType.SESSION_INIT,
                       INIT.pack(PROTOCOL_VERSION, params.p_a, c_m, params.n, params.seed, params.loss))


def parse_session_init(msg: WireMessage, message_bit: int = 0) -> SessionParams:
    """Session parameters from SESSION_INIT; ``message_bit`` stays with Alice."""
    version, p_a, c_m, n, seed, loss = INIT.unpack(msg.payload)
    if version != PROTOCOL_VERSION:
        raise VersionMismatch(f"peer speaks protocol version {version}, expected {PROTOCOL_VERSION}")
    return SessionParams(p_a=p_a, n=n, seed=seed, c_m=None if math.isnan(c_m) else c_m,
                         message_bit=message_bit, loss=loss)


def qubit(state: QubitState) -> WireMessage:
    return WireMessage(MessageType.QUBIT, QUBIT.pack(*state.bloch))


def parse_qubit(msg: WireMessage) -> QubitState:
    try:
        return QubitState(QUBIT.unpack(msg.payload))
    except ValueError as exc:
        raise TransportError(f"QUBIT payload is not a valid state: {exc}") from None


def measure_ack(shot: int) -> WireMessage:
    return WireMessage(MessageType.MEASURE_ACK, ACK.pack(shot))


def parse_measure_ack(msg: WireMessage) -> int:
    return ACK.unpack(msg.payload)[0]


_KIND_CODE = {AnnouncementKind.BIT: 0, AnnouncementKind.RESULT: 1, AnnouncementKind.NULL: 2}
_CODE_KIND = {v: k for k, v in _KIND_CODE.items()}
_BASIS_CODE = {PauliAxis.X: 0, PauliAxis.Z: 1, None: 255}
_CODE_BASIS = {v: k for k, v in _BASIS_CODE.items()}


def announce(ann: Announcement) -> WireMessage:
    if ann.is_bit:
        value = ann.value
    elif ann.is_result:
        value = (1 - ann.value) // 2
    else:
        value = 0
    return WireMessage(MessageType.ANNOUNCE, ANNOUNCE.pack(_KIND_CODE[ann.kind], _BASIS_CODE[ann.basis], value))


def parse_announce(msg: WireMessage) -> Announcement:
    k, b, v = ANNOUNCE.unpack(msg.payload)
    try:
        kind, basis = _CODE_KIND[k], _CODE_BASIS[b]
        if kind is AnnouncementKind.NULL:
            return NULL
        if v not in (0, 1):
            raise ValueError(f"announcement value byte {v}")
        return Announcement(kind, basis, v if kind is AnnouncementKind.BIT else 1 - 2 * v)
    except (KeyError, ValueError) as exc:
        raise TransportError(f"malformed ANNOUNCE payload {msg.payload!r}: {exc}") from None


def session_end() -> WireMessage:
    return WireMessage(MessageType.SESSION_END)


def _recv_exact(sock: socket.socket, n: int) -> bytes:
    buf = bytearray()
    while len(buf) < n:
        try:
            chunk = sock.recv(n - len(buf))
        except OSError as exc:
            raise TransportError(f"receive failed: {exc}") from None
        if not chunk:
            raise TransportError(f"connection closed after {len(buf)} of {n} bytes")
        buf.extend(chunk)
    return bytes(buf)


def recv_message(sock: socket.socket) -> WireMessage:
    header = _recv_exact(sock, HEADER.size)
    _, length = HEADER.unpack(header)
    if length > MAX_PAYLOAD:
        raise TransportError(f"payload length {length} exceeds {MAX_PAYLOAD}")
    msg, _ = decode_frame(header + _recv_exact(sock, length))
    return msg


def send_message(sock: socket.socket, msg: WireMessage) -> None:
    try:
        sock.sendall(msg.encode())
    except OSError as exc:
        raise TransportError(f"send failed: {exc}") from None


def expect(sock: socket.socket, *types: MessageType) -> WireMessage:
    msg = recv_message(sock)
    if msg.type not in types:
        raise TransportError(f"expected {'/'.join(t.name for t in types)}, got {msg.type.name}")
    return msg
