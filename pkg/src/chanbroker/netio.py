"""Small blocking line-socket wrapper shared by provider and consumer clients."""

from __future__ import annotations

import select
import socket
import time


class LineSocket:
    """Newline-framed text over a blocking TCP socket."""

    def __init__(self, sock: socket.socket):
        self._sock = sock
        self._buf = bytearray()
        self._sock.setblocking(False)

    @classmethod
    def connect(cls, host: str, port: int, timeout: float = 2.0) -> "LineSocket":
        sock = socket.create_connection((host, port), timeout=timeout)
        return cls(sock)

    def fileno(self) -> int:
        return self._sock.fileno()

    def send_line(self, line: str) -> None:
        data = line.encode("utf-8")
        # short lines on loopback; retry until the kernel takes everything
        deadline = time.monotonic() + 5.0
        while data:
            try:
                sent = self._sock.send(data)
                data = data[sent:]
            except (BlockingIOError, InterruptedError):
                if time.monotonic() > deadline:
                    raise ConnectionError("send stalled") from None
                select.select([], [self._sock], [], 0.05)

    def read_line(self, timeout: float | None = None) -> str | None:
        """Next line without its newline, or ``None`` on timeout.

        Raises ``ConnectionError`` when the peer closes the stream.
        """
        deadline = None if timeout is None else time.monotonic() + timeout
        while True:
            idx = self._buf.find(b"\n")
            if idx >= 0:
                line = self._buf[: idx + 1]
                del self._buf[: idx + 1]
                return line.decode("utf-8").rstrip("\r\n")
            remaining = None
            if deadline is not None:
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    return None
            try:
                ready, _, _ = select.select([self._sock], [], [], remaining)
            except (OSError, ValueError) as exc:  # fd went away under us
                raise ConnectionError(f"socket unusable: {exc}") from exc
            if not ready:
                return None
            try:
                chunk = self._sock.recv(4096)
            except (BlockingIOError, InterruptedError):
                continue
            except OSError as exc:
                raise ConnectionError(f"socket read failed: {exc}") from exc
            if not chunk:
                raise ConnectionError("connection closed by peer")
            self._buf.extend(chunk)

    def close(self) -> None:
        try:
            self._sock.close()
        except OSError:
            pass
