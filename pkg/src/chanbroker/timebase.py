"""Clock sources for agents and the broker.

The broker core itself is clock-free (every operation takes an explicit
``now``); these objects feed the network shells and the provider loop. A
scenario run swaps the real clock for virtual ones so that repeated runs
stamp identical timestamps.
"""

from __future__ import annotations

import threading
import time


class RealClock:
    """Wall time in integer unix seconds."""

    def now(self) -> int:
        return int(time.time())

    def observe(self, ts: int) -> None:
        pass

    def wall_seconds(self, seconds: float) -> float:
        return seconds

    def advance(self, seconds: float) -> None:
        pass


class VirtualClock:
    """Deterministic per-agent clock: starts at ``epoch``, advances only
    when the owner advances it.

    ``wall_scale`` maps virtual seconds to the wall-clock pause the owner
    should actually take (0 disables pausing entirely).
    """

    def __init__(self, epoch: int, wall_scale: float = 0.0):
        self._now = float(epoch)
        self.wall_scale = wall_scale

    def now(self) -> int:
        return int(self._now)

    def observe(self, ts: int) -> None:
        pass

    def wall_seconds(self, seconds: float) -> float:
        return seconds * self.wall_scale

    def advance(self, seconds: float) -> None:
        self._now += seconds


class MessageClock:
    """Broker-side clock that follows the newest timestamp seen on the wire.

    Monotone: never runs backwards. Used in scenario runs where providers
    stamp virtual time, so the broker's idea of "now" must come from them.
    """

    def __init__(self, epoch: int):
        self._now = int(epoch)
        self._lock = threading.Lock()

    def now(self) -> int:
        with self._lock:
            return self._now

    def observe(self, ts: int) -> None:
        with self._lock:
            if ts > self._now:
                self._now = ts

    def wall_seconds(self, seconds: float) -> float:
        return 0.0

    def advance(self, seconds: float) -> None:
        pass
