"""TCP shell around the broker core, plus a consumer-side client.

One thread per connection; providers and consumers speak the same
line-oriented protocol on the same port. The core's single lock already
serializes state changes, so the threaded shell inherits the linearizable
per-key replace behaviour. A background sweeper evicts expired cache
entries and deregisters providers that stop answering availability pings.
"""

from __future__ import annotations

import argparse
import collections
import logging
import socket
import sys
import threading
import time

from .broker import Broker
from .model import DomainError, EntityRef
from .netio import LineSocket
from .protocol import (
    BrokerReply,
    MESSAGE_HEADER,
    FLAG_ADVERTISEMENT,
    ProtocolError,
    decode_message,
    decode_reply,
    encode_reply,
    miss,
    parse_key_verb,
    ping as ping_line,
    pong as pong_line,
    query_line,
    subscribe_line,
)
from .timebase import RealClock

logger = logging.getLogger(__name__)

DEFAULT_HOST = "127.0.0.1"
DEFAULT_PORT = 7471
DEFAULT_SWEEP_INTERVAL_S = 1.0


class BrokerStartError(OSError):
    """The listening socket could not be opened (address in use, etc.)."""


class _Connection:
    """Server-side view of one client connection."""

    def __init__(self, sock: socket.socket, peer: str, consumer_id: str):
        self.lsock = LineSocket(sock)
        self.peer = peer
        self.consumer_id = consumer_id
        self.provider_id: str | None = None
        self._send_lock = threading.Lock()
        self.alive = True

    def send_line(self, line: str) -> None:
        with self._send_lock:
            self.lsock.send_line(line)

    def close(self) -> None:
        self.alive = False
        self.lsock.close()


class BrokerServer:
    """Accepts provider and consumer connections and drives the core."""

    def __init__(
        self,
        host: str = DEFAULT_HOST,
        port: int = DEFAULT_PORT,
        *,
        clock=None,
        sweep_interval_s: float = DEFAULT_SWEEP_INTERVAL_S,
        availability_timeout_s: float = 2.0,
        consumer_failure_limit: int = 3,
        log_sink=None,
    ):
        self._host = host
        self._port = port
        self._clock = clock or RealClock()
        self._sweep_interval_s = sweep_interval_s
        self.core = Broker(
            availability_timeout_s=availability_timeout_s,
            consumer_failure_limit=consumer_failure_limit,
            ping_provider=self._ping_provider,
            log_sink=log_sink,
        )
        self._listener: socket.socket | None = None
        self._threads: list[threading.Thread] = []
        self._connections: dict[str, _Connection] = {}
        self._provider_conns: dict[str, _Connection] = {}
        self._conn_lock = threading.Lock()
        self._stop = threading.Event()
        self._conn_counter = 0

    # -- lifecycle -----------------------------------------------------------

    @property
    def address(self) -> tuple[str, int]:
        if self._listener is None:
            raise RuntimeError("server not started")
        return self._listener.getsockname()[:2]

    def start(self) -> "BrokerServer":
        listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        try:
            listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
            listener.bind((self._host, self._port))
            listener.listen(64)
        except OSError as exc:
            listener.close()
            raise BrokerStartError(
                f"cannot listen on {self._host}:{self._port}: {exc}"
            ) from exc
        listener.settimeout(0.2)
        self._listener = listener
        for target, name in ((self._accept_loop, "broker-accept"),
                             (self._sweep_loop, "broker-sweeper")):
            t = threading.Thread(target=target, name=name, daemon=True)
            t.start()
            self._threads.append(t)
        logger.info("broker listening on %s:%d", *self.address)
        return self

    def stop(self) -> None:
        self._stop.set()
        if self._listener is not None:
            self._listener.close()
        with self._conn_lock:
            conns = list(self._connections.values())
        for conn in conns:
            conn.close()
        for t in self._threads:
            t.join(timeout=2.0)

    def __enter__(self) -> "BrokerServer":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()

    # -- loops ----------------------------------------------------------------

    def _accept_loop(self) -> None:
        assert self._listener is not None
        while not self._stop.is_set():
            try:
                sock, addr = self._listener.accept()
            except socket.timeout:
                continue
            except OSError:
                break
            with self._conn_lock:
                self._conn_counter += 1
                consumer_id = f"conn{self._conn_counter}"
                conn = _Connection(sock, f"{addr[0]}:{addr[1]}", consumer_id)
                self._connections[consumer_id] = conn
            t = threading.Thread(
                target=self._serve, args=(conn,), name=f"broker-{consumer_id}",
                daemon=True,
            )
            t.start()
            self._threads.append(t)

    def _sweep_loop(self) -> None:
        while not self._stop.wait(self._sweep_interval_s):
            try:
                self.core.sweep_stale(self._clock.now())
                self.core.expire_availability(time.monotonic())
            except Exception:
                logger.exception("sweep failed")

    def _serve(self, conn: _Connection) -> None:
        try:
            while not self._stop.is_set():
                try:
                    line = conn.lsock.read_line(timeout=0.2)
                except ConnectionError:
                    break
                if line is None:
                    continue
                try:
                    self._dispatch(conn, line)
                except ConnectionError:
                    break
                except Exception as exc:
                    logger.exception("dispatch failed for %s", conn.peer)
                    try:
                        conn.send_line(encode_reply(BrokerReply.nack(f"internal: {exc}")))
                    except (ConnectionError, OSError):
                        break
        finally:
            conn.close()
            self.core.drop_consumer(conn.consumer_id)
            with self._conn_lock:
                self._connections.pop(conn.consumer_id, None)
                if conn.provider_id is not None:
                    if self._provider_conns.get(conn.provider_id) is conn:
                        del self._provider_conns[conn.provider_id]

    # -- dispatch ---------------------------------------------------------------

    def _dispatch(self, conn: _Connection, line: str) -> None:
        if line == "PING":
            conn.send_line(pong_line())
            return
        if line == "PONG":
            if conn.provider_id is not None:
                self.core.note_pong(conn.provider_id, self._clock.now())
            return
        if line.startswith("SUB|") or line.startswith("QRY|"):
            self._handle_key_verb(conn, line)
            return
        try:
            msg = decode_message(line)
        except ProtocolError as exc:
            conn.send_line(encode_reply(BrokerReply.nack(str(exc))))
            return
        if msg.header != MESSAGE_HEADER:
            conn.send_line(encode_reply(BrokerReply.nack(
                f"unsupported header {msg.header!r}")))
            return
        self._clock.observe(msg.ts_begin)
        now = self._clock.now()
        if msg.flag == FLAG_ADVERTISEMENT:
            reply = self.core.handle_advertisement(msg, now)
            if reply.ok:
                with self._conn_lock:
                    conn.provider_id = msg.provider_id
                    self._provider_conns[msg.provider_id] = conn
        else:
            reply = self.core.handle_update(msg, now)
        conn.send_line(encode_reply(reply))

    def _handle_key_verb(self, conn: _Connection, line: str) -> None:
        try:
            verb, entity_type, entity_id, scope = parse_key_verb(line)
            entity = EntityRef(entity_type, entity_id)
        except (ProtocolError, DomainError) as exc:
            conn.send_line(encode_reply(BrokerReply.nack(str(exc))))
            return
        if verb == "SUB":
            self.core.subscribe(conn.consumer_id, entity, scope, conn.send_line)
            conn.send_line(encode_reply(BrokerReply.ack()))
        else:
            result = self.core.query(entity, scope, self._clock.now())
            conn.send_line(result.line if result.hit else miss())

    # -- provider availability ----------------------------------------------------

    def _ping_provider(self, provider_id: str) -> bool:
        with self._conn_lock:
            conn = self._provider_conns.get(provider_id)
        if conn is None or not conn.alive:
            return False
        try:
            conn.send_line(ping_line())
            return True
        except (ConnectionError, OSError):
            return False


class ConsumerClient:
    """Blocking consumer: subscribe to pushes and query the cache."""

    def __init__(self, host: str, port: int, timeout: float = 2.0):
        self._sock = LineSocket.connect(host, port, timeout)
        self._timeout = timeout
        self._notifications: collections.deque[str] = collections.deque()

    def close(self) -> None:
        self._sock.close()

    def __enter__(self) -> "ConsumerClient":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def ping(self) -> bool:
        self._sock.send_line(ping_line())
        return self._await(lambda l: l == "PONG") is not None

    def subscribe(self, entity_type: str, entity_id: str, scope: str) -> BrokerReply:
        self._sock.send_line(subscribe_line(entity_type, entity_id, scope))
        line = self._await(lambda l: l in ("ACK",) or l.startswith("NACK"))
        if line is None:
            raise ConnectionError("subscribe reply timed out")
        return decode_reply(line + "\n")

    def query(self, entity_type: str, entity_id: str, scope: str) -> str | None:
        """Cached update line for the key, or None on a miss.

        A push for the same key may arrive first and serves equally well as
        the answer; pushes for other keys are kept for next_notification().
        """
        self._sock.send_line(query_line(entity_type, entity_id, scope))

        def is_reply(line: str) -> bool:
            if line == "MISS":
                return True
            if line.startswith(MESSAGE_HEADER + "|"):
                try:
                    msg = decode_message(line)
                except ProtocolError:
                    return False
                return (msg.entity_type, msg.entity_id, msg.scope) == (
                    entity_type, entity_id, scope)
            return False

        line = self._await(is_reply)
        if line is None:
            raise ConnectionError("query reply timed out")
        return None if line == "MISS" else line

    def next_notification(self, timeout: float | None = None) -> str | None:
        """Next pushed update line, or None if none arrives in time."""
        if self._notifications:
            return self._notifications.popleft()
        deadline = None if timeout is None else time.monotonic() + timeout
        while True:
            remaining = None
            if deadline is not None:
                remaining = max(0.0, deadline - time.monotonic())
            line = self._sock.read_line(remaining)
            if line is None:
                return None
            if line == "PING":
                self._sock.send_line(pong_line())
                continue
            if line.startswith(MESSAGE_HEADER + "|"):
                return line
            # late ACK/NACK stragglers are irrelevant here

    def _await(self, predicate) -> str | None:
        deadline = time.monotonic() + self._timeout
        while True:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                return None
            line = self._sock.read_line(remaining)
            if line is None:
                return None
            if predicate(line):
                return line
            if line == "PING":
                self._sock.send_line(pong_line())
            elif line.startswith(MESSAGE_HEADER + "|"):
                self._notifications.append(line)


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description="Run a standalone context broker.")
    parser.add_argument("--host", default=DEFAULT_HOST)
    parser.add_argument("--port", type=int, default=DEFAULT_PORT)
    parser.add_argument("--log", default=None, help="write the event log to this file")
    parser.add_argument("--verbose", action="store_true")
    args = parser.parse_args(argv)

    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    sink = None
    log_file = None
    if args.log:
        log_file = open(args.log, "a", encoding="utf-8")
        lock = threading.Lock()

        def sink(line: str) -> None:
            with lock:
                log_file.write(line + "\n")
                log_file.flush()
    else:
        def sink(line: str) -> None:
            print(line, flush=True)

    try:
        with BrokerServer(args.host, args.port, log_sink=sink):
            try:
                while True:
                    time.sleep(3600)
            except KeyboardInterrupt:
                pass
    except BrokerStartError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    finally:
        if log_file is not None:
            log_file.close()
    return 0


if __name__ == "__main__":
    sys.exit(main())
