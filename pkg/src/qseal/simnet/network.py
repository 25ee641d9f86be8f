"""Two-process sessions over TCP, with an optional eavesdropping proxy.

Bob connects (directly or through the proxy) to Alice and drives the session
one shot at a time::

    Bob  -> SESSION_INIT
    Bob  -> QUBIT          (per shot)
    Alice-> MEASURE_ACK, ANNOUNCE     or    ANNOUNCE(null) if the particle is lost
    Bob  -> SESSION_END
    Alice-> SESSION_END

Each peer derives its own random streams from the session seed carried in
SESSION_INIT, exactly as :func:`run_session` does, so a loopback run
reproduces the in-process transcript.  Each role only sees its own side:
Bob's transcript lacks Alice's private outcomes on bit-announcement shots
and Alice's log lacks Bob's preparations; :func:`merge_views` joins them.
"""

from __future__ import annotations

import multiprocessing
import socket
import threading
from dataclasses import dataclass, replace
from typing import Optional

from ..adversary import Passive, Strategy, enact
from ..errors import TransportError
from ..protocol import (
    NULL,
    SessionParams,
    ShotRecord,
    alice_announce,
    alice_measure,
    bob_prepare,
    role_streams,
)
from . import wire
from .session import SessionTranscript
from .wire import MessageType

DEFAULT_TIMEOUT = 30.0


def parse_endpoint(endpoint: str):
    host, _, port = endpoint.rpartition(":")
    if not host or not port.isdigit():
        raise ValueError(f"endpoint must look like host:port, got {endpoint!r}")
    return host, int(port)


def _listen(endpoint) -> socket.socket:
    srv = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    srv.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    srv.bind(parse_endpoint(endpoint) if isinstance(endpoint, str) else endpoint)
    srv.listen(1)
    return srv


def _connect(endpoint, timeout) -> socket.socket:
    addr = parse_endpoint(endpoint) if isinstance(endpoint, str) else endpoint
    try:
        sock = socket.create_connection(addr, timeout=timeout)
    except OSError as exc:
        raise TransportError(f"cannot reach {addr}: {exc}") from None
    sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
    return sock


def _accept(srv: socket.socket, timeout) -> socket.socket:
    srv.settimeout(timeout)
    conn, _ = srv.accept()
    conn.settimeout(timeout)
    conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
    return conn


@dataclass(frozen=True)
class AliceRow:
    index: int
    basis: Optional[str]
    m: Optional[int]


def serve_alice(srv: socket.socket, message_bit: int, timeout: float = DEFAULT_TIMEOUT) -> list:
    """Run Alice's side of one session on an already-listening socket.

    Returns her private log: one :class:`AliceRow` per shot.  The channel loss
    draw happens here, at Alice's end of the transport, before her role
    logic sees the particle.
    """
    conn = _accept(srv, timeout)
    log = []
    with conn:
        params = wire.parse_session_init(wire.expect(conn, MessageType.SESSION_INIT), message_bit)
        streams = role_streams(params.seed)
        shot = 0
        while True:
            msg = wire.expect(conn, MessageType.QUBIT, MessageType.SESSION_END)
            if msg.type is MessageType.SESSION_END:
                wire.send_message(conn, wire.session_end())
                return log
            state = wire.parse_qubit(msg)
            if params.loss > 0 and streams["channel"].random() < params.loss:
                wire.send_message(conn, wire.announce(NULL))
                log.append(AliceRow(shot, None, None))
            else:
                basis, m = alice_measure(state, streams["alice_basis"])
                ann = alice_announce(params.message_bit, basis, m, params.p_a, streams["alice_announce"])
                wire.send_message(conn, wire.measure_ack(shot))
                wire.send_message(conn, wire.announce(ann))
                log.append(AliceRow(shot, basis.name, m))
            shot += 1


def run_bob(endpoint, params: SessionParams, timeout: float = DEFAULT_TIMEOUT) -> SessionTranscript:
    """Bob's side: prepare, send, record announcements until N shots arrive."""
    streams = role_streams(params.seed)
    records = []

    def partial():
        return SessionTranscript(params, list(records), complete=False)

    try:
        sock = _connect(endpoint, timeout)
        with sock:
            wire.send_message(sock, wire.session_init(params))
            shot = delivered = 0
            while delivered < params.n:
                prep, state = bob_prepare(streams["bob"])
                wire.send_message(sock, wire.qubit(state))
                msg = wire.expect(sock, MessageType.MEASURE_ACK, MessageType.ANNOUNCE)
                if msg.type is MessageType.MEASURE_ACK:
                    if wire.parse_measure_ack(msg) != shot:
                        raise TransportError(f"acknowledgement for the wrong shot (expected {shot})")
                    msg = wire.expect(sock, MessageType.ANNOUNCE)
                    ann = wire.parse_announce(msg)
                    if ann.is_null:
                        raise TransportError("null announcement after a measurement acknowledgement")
                    delivered += 1
                else:
                    ann = wire.parse_announce(msg)
                    if not ann.is_null:
                        raise TransportError("announcement without a measurement acknowledgement")
                records.append(ShotRecord(shot, ann, prep, ann.basis,
                                          ann.value if ann.is_result else None))
                shot += 1
            wire.send_message(sock, wire.session_end())
            wire.expect(sock, MessageType.SESSION_END)
    except TransportError as exc:
        raise TransportError(str(exc), partial=partial()) from None
    except socket.timeout:
        raise TransportError("peer timed out", partial=partial()) from None
    return SessionTranscript(params, records)


def serve_eve_proxy(srv: socket.socket, upstream, strategy: Strategy,
                    timeout: float = DEFAULT_TIMEOUT) -> int:
    """Relay one session between Bob and Alice, acting on every QUBIT frame.

    Returns the number of particles Eve handled.
    """
    down = _accept(srv, timeout)
    with down, _connect(upstream, timeout) as up:
        up.settimeout(timeout)
        init = wire.expect(down, MessageType.SESSION_INIT)
        params = wire.parse_session_init(init)
        eve_rng = role_streams(params.seed)["eve"]
        wire.send_message(up, init)
        shot = 0
        while True:
            msg = wire.expect(down, MessageType.QUBIT, MessageType.SESSION_END)
            if msg.type is MessageType.SESSION_END:
                wire.send_message(up, msg)
                wire.send_message(down, wire.expect(up, MessageType.SESSION_END))
                return shot
            state, _ = enact(strategy, shot, wire.parse_qubit(msg), eve_rng)
            wire.send_message(up, wire.qubit(state))
            reply = wire.expect(up, MessageType.MEASURE_ACK, MessageType.ANNOUNCE)
            wire.send_message(down, reply)
            if reply.type is MessageType.MEASURE_ACK:
                wire.send_message(down, wire.expect(up, MessageType.ANNOUNCE))
            shot += 1


def run_networked(role: str, endpoint, params: Optional[SessionParams] = None, *,
                  upstream=None, strategy: Optional[Strategy] = None, message_bit: int = 0,
                  timeout: float = DEFAULT_TIMEOUT):
    """Run one role of a networked session.

    ``alice`` and ``eve-proxy`` listen on ``endpoint``; ``bob`` connects to it.
    Bob returns his :class:`SessionTranscript`, Alice her private log, the
    proxy the number of particles handled.
    """
    if role == "bob":
        if params is None:
            raise ValueError("bob needs session parameters")
        return run_bob(endpoint, params, timeout)
    if role == "alice":
        with _listen(endpoint) as srv:
            return serve_alice(srv, message_bit, timeout)
    if role in ("eve-proxy", "eve"):
        if upstream is None:
            raise ValueError("eve-proxy needs an upstream endpoint")
        with _listen(endpoint) as srv:
            return serve_eve_proxy(srv, upstream, strategy or Passive(), timeout)
    raise ValueError(f"unknown role {role!r}; choose alice, bob or eve-proxy")


def merge_views(bob: SessionTranscript, alice_log: list, message_bit: int) -> SessionTranscript:
    """Full transcript from Bob's records and Alice's private log."""
    by_index = {row.index: row for row in alice_log}
    records = []
    for r in bob.records:
        row = by_index.get(r.index)
        if row is None or r.announcement.is_null:
            records.append(r)
            continue
        basis = r.announcement.basis
        if row.basis != basis.name:
            raise TransportError(f"shot {r.index}: Alice measured {row.basis}, announced {basis.name}")
        records.append(ShotRecord(r.index, r.announcement, r.prepared, basis, row.m))
    return SessionTranscript(replace(bob.params, message_bit=message_bit), records, complete=bob.complete)


def _alice_process(srv, message_bit, timeout, conn):
    try:
        conn.send(("ok", serve_alice(srv, message_bit, timeout)))
    except Exception as exc:  # forwarded to the parent
        conn.send(("error", repr(exc)))
    finally:
        conn.close()


def run_loopback(params: SessionParams, strategy: Optional[Strategy] = None, proxy: bool = False,
                 timeout: float = DEFAULT_TIMEOUT) -> SessionTranscript:
    """Alice in a child process, Bob here, optionally Eve's proxy in between.

    Without ``proxy`` there is no eavesdropper on the path, so ``strategy``
    must be None or passive.
    """
    if not proxy and strategy is not None and not isinstance(strategy, Passive):
        raise ValueError("a non-passive strategy needs the eve proxy on the path")
    ctx = multiprocessing.get_context("fork")
    alice_srv = _listen(("127.0.0.1", 0))
    parent_conn, child_conn = ctx.Pipe()
    alice = ctx.Process(target=_alice_process,
                        args=(alice_srv, params.message_bit, timeout, child_conn), daemon=True)
    alice.start()
    target = alice_addr = alice_srv.getsockname()
    alice_srv.close()
    eve_thread = None
    if proxy:
        eve_srv = _listen(("127.0.0.1", 0))
        target = eve_srv.getsockname()
        eve_errors = []

        def eve_main():
            try:
                serve_eve_proxy(eve_srv, alice_addr, strategy or Passive(), timeout)
            except Exception as exc:
                eve_errors.append(exc)
            finally:
                eve_srv.close()

        eve_thread = threading.Thread(target=eve_main, daemon=True)
        eve_thread.start()
    try:
        bob = run_bob(target, params, timeout)
    finally:
        if eve_thread is not None:
            eve_thread.join(timeout)
    status, payload = parent_conn.recv() if parent_conn.poll(timeout) else ("error", "alice timed out")
    alice.join(timeout)
    if status != "ok":
        raise TransportError(f"alice failed: {payload}", partial=bob)
    return merge_views(bob, payload, params.message_bit)

