"""Context broker core: provider registry, entity-scope cache, subscriptions.

The cache holds at most one valid entry per (entity, scope) key; an accepted
update atomically replaces the previous entry and fans out to every
subscribed consumer. All state lives behind one lock, so every mutation is
linearizable. Network transports sit on top (see ``server``); the core is
deliberately clock-free and takes an explicit ``now`` everywhere, which is
what makes its timing behaviour unit-testable.
"""

from __future__ import annotations

import logging
import threading
import time
from dataclasses import dataclass
from typing import Callable, Iterable

from .model import DomainError, EntityRef, ScopeRecord
from .protocol import (
    BrokerReply,
    ContextMessage,
    FLAG_ADVERTISEMENT,
    FLAG_UPDATE,
    ProtocolError,
    decode_scope_declarations,
    encode_message,
)

logger = logging.getLogger(__name__)

Key = tuple[EntityRef, str]

DEFAULT_AVAILABILITY_TIMEOUT_S = 2.0
DEFAULT_CONSUMER_FAILURE_LIMIT = 3
DEFAULT_FUTURE_SKEW_TOLERANCE_S = 5


@dataclass
class RegistryEntry:
    """One registered provider with its entity and advertised scopes."""

    provider_id: str
    entity: EntityRef
    scopes: dict[str, tuple[str, ...]]
    registered_at: int
    last_seen: int


@dataclass
class CacheEntry:
    """The single valid record for one (entity, scope) key."""

    entity: EntityRef
    scope: str
    record: ScopeRecord
    payload: str
    source_provider: str
    line: str  # original update line, redistributed verbatim


@dataclass
class Subscription:
    consumer_id: str
    key: Key
    sink: Callable[[str], None]
    consecutive_failures: int = 0


@dataclass
class QueryResult:
    """Outcome of a cache lookup: a hit, or a miss that may have triggered
    a refresh request toward the registered source provider."""

    line: str | None = None
    entry: CacheEntry | None = None
    refresh_requested: bool = False

    @property
    def hit(self) -> bool:
        return self.entry is not None


class Broker:
    """In-memory broker state machine.

    ``ping_provider`` is the transport hook used to check provider
    availability (and to request a fresh update after a cache miss); it
    must not block for long and must not call back into the broker.
    ``log_sink`` receives one structured text line per registry, cache or
    subscription event.
    """

    def __init__(
        self,
        *,
        availability_timeout_s: float = DEFAULT_AVAILABILITY_TIMEOUT_S,
        consumer_failure_limit: int = DEFAULT_CONSUMER_FAILURE_LIMIT,
        future_skew_tolerance_s: int = DEFAULT_FUTURE_SKEW_TOLERANCE_S,
        ping_provider: Callable[[str], bool] | None = None,
        log_sink: Callable[[str], None] | None = None,
    ):
        self._lock = threading.RLock()
        self._registry: dict[str, RegistryEntry] = {}
        self._cache: dict[Key, CacheEntry] = {}
        self._subs: dict[Key, dict[str, Subscription]] = {}
        self._pending_pong: dict[str, float] = {}
        self.availability_timeout_s = availability_timeout_s
        self.consumer_failure_limit = consumer_failure_limit
        self.future_skew_tolerance_s = future_skew_tolerance_s
        self._ping_provider = ping_provider or (lambda provider_id: False)
        self._log_sink = log_sink

    # -- event log ---------------------------------------------------------

    def _log(self, event: str, **fields) -> None:
        parts = [f"event={event}"] + [f"{k}={v}" for k, v in fields.items()]
        line = " ".join(parts)
        logger.debug("%s", line)
        if self._log_sink is not None:
            self._log_sink(line)

    # -- provider side -----------------------------------------------------

    def handle_advertisement(self, m: ContextMessage, now: int) -> BrokerReply:
        """Register a provider (or replace its previous registration)."""
        if m.flag != FLAG_ADVERTISEMENT:
            return BrokerReply.nack("not an advertisement")
        if not m.provider_id:
            return BrokerReply.nack("bad advertisement: empty provider id")
        try:
            entity = m.entity
            scopes = decode_scope_declarations(m.scope, m.payload)
        except (ProtocolError, DomainError) as exc:
            self._log("ADVERT_NACK", now=now, provider=m.provider_id, reason=str(exc))
            return BrokerReply.nack(f"bad advertisement: {exc}")
        with self._lock:
            previous = self._registry.get(m.provider_id)
            self._registry[m.provider_id] = RegistryEntry(
                provider_id=m.provider_id,
                entity=entity,
                scopes=scopes,
                registered_at=previous.registered_at if previous else now,
                last_seen=now,
            )
            self._pending_pong.pop(m.provider_id, None)
            self._log(
                "ADVERT_ACK",
                now=now,
                provider=m.provider_id,
                entity=f"{entity.entity_type}:{entity.entity_id}",
                scopes=",".join(sorted(scopes)),
                replaced=int(previous is not None),
            )
        return BrokerReply.ack()

    def handle_update(self, m: ContextMessage, now: int) -> BrokerReply:
        """Cache an update (replacing the key's old entry) and notify."""
        if m.flag != FLAG_UPDATE:
            return BrokerReply.nack("not a context update")
        with self._lock:
            if m.provider_id not in self._registry:
                self._log("UPDATE_NACK", now=now, provider=m.provider_id,
                          reason="unknown provider")
                return BrokerReply.nack("unknown provider")
            if m.ts_end < now:
                self._log("UPDATE_NACK", now=now, provider=m.provider_id, reason="expired")
                return BrokerReply.nack("expired")
            if m.ts_begin > now + self.future_skew_tolerance_s:
                self._log("UPDATE_NACK", now=now, provider=m.provider_id,
                          reason="future timestamp")
                return BrokerReply.nack("future timestamp")
            if not m.scope:
                self._log("UPDATE_NACK", now=now, provider=m.provider_id,
                          reason="empty scope")
                return BrokerReply.nack("empty scope")
            try:
                entity = m.entity
                record = ScopeRecord(m.scope, (), m.ts_begin, m.ts_end)
            except DomainError as exc:
                self._log("UPDATE_NACK", now=now, provider=m.provider_id, reason=str(exc))
                return BrokerReply.nack(str(exc))
            key = (entity, m.scope)
            line = encode_message(m)
            replaced = key in self._cache
            self._cache[key] = CacheEntry(
                entity=entity,
                scope=m.scope,
                record=record,
                payload=m.payload,
                source_provider=m.provider_id,
                line=line,
            )
            self._registry[m.provider_id].last_seen = now
            self._pending_pong.pop(m.provider_id, None)
            self._log(
                "UPDATE_ACK",
                now=now,
                provider=m.provider_id,
                entity=f"{m.entity_type}:{m.entity_id}",
                scope=m.scope,
                replaced=int(replaced),
                ts_end=m.ts_end,
            )
            delivered = self._notify_locked(key, line)
        if delivered:
            self._log("NOTIFY", now=now, scope=m.scope, delivered=delivered)
        return BrokerReply.ack()

    # -- consumer side -----------------------------------------------------

    def subscribe(self, consumer_id: str, entity: EntityRef, scope: str,
                  sink: Callable[[str], None]) -> None:
        """Register a push sink for one key. Idempotent per (consumer, key)."""
        key = (entity, scope)
        with self._lock:
            subs = self._subs.setdefault(key, {})
            fresh = consumer_id not in subs
            subs[consumer_id] = Subscription(consumer_id, key, sink)
        if fresh:
            self._log("SUB_ADD", consumer=consumer_id,
                      entity=f"{entity.entity_type}:{entity.entity_id}", scope=scope)

    def drop_consumer(self, consumer_id: str) -> None:
        """Remove every subscription held by a consumer (connection gone)."""
        with self._lock:
            dropped = 0
            for key in list(self._subs):
                if self._subs[key].pop(consumer_id, None) is not None:
                    dropped += 1
                if not self._subs[key]:
                    del self._subs[key]
        if dropped:
            self._log("SUB_DROP", consumer=consumer_id, reason="disconnect", count=dropped)

    def query(self, entity: EntityRef, scope: str, now: int) -> QueryResult:
        """Cache lookup; a miss with a registered source triggers a refresh
        request (availability ping) toward that provider."""
        key = (entity, scope)
        to_ping: list[str] = []
        with self._lock:
            self._sweep_locked(now, to_ping)
            entry = self._cache.get(key)
            if entry is not None:
                self._log("QUERY_HIT", now=now,
                          entity=f"{entity.entity_type}:{entity.entity_id}", scope=scope)
                result = QueryResult(line=entry.line, entry=entry)
            else:
                source = self._find_provider_locked(entity, scope)
                if source is not None:
                    to_ping.append(source)
                self._log("QUERY_MISS", now=now,
                          entity=f"{entity.entity_type}:{entity.entity_id}", scope=scope,
                          refresh=int(source is not None))
                result = QueryResult(refresh_requested=source is not None)
        self._dispatch_pings(to_ping, now)
        return result

    def notify_subscribers(self, key: Key, line: str) -> int:
        """Deliver one line to every live subscriber of a key; returns the
        delivery count. Normally driven internally by handle_update."""
        with self._lock:
            return self._notify_locked(key, line)

    # -- staleness ---------------------------------------------------------

    def sweep_stale(self, now: int) -> list[Key]:
        """Drop every cache entry whose validity ended before ``now`` and
        ping each evicted entry's source provider."""
        to_ping: list[str] = []
        with self._lock:
            evicted = self._sweep_locked(now, to_ping)
        self._dispatch_pings(to_ping, now)
        return evicted

    def expire_availability(self, now_wall: float) -> list[str]:
        """Deregister providers whose availability ping went unanswered."""
        dropped = []
        with self._lock:
            for provider_id, deadline in list(self._pending_pong.items()):
                if now_wall > deadline:
                    self._drop_provider_locked(provider_id, reason="availability timeout")
                    dropped.append(provider_id)
        return dropped

    def note_pong(self, provider_id: str, now: int) -> None:
        with self._lock:
            self._pending_pong.pop(provider_id, None)
            entry = self._registry.get(provider_id)
            if entry is not None:
                entry.last_seen = now

    def drop_provider(self, provider_id: str, reason: str = "dropped") -> None:
        with self._lock:
            self._drop_provider_locked(provider_id, reason)

    # -- inspection (tests, summaries) --------------------------------------

    def registry_snapshot(self) -> dict[str, RegistryEntry]:
        with self._lock:
            return dict(self._registry)

    def cache_snapshot(self) -> dict[Key, CacheEntry]:
        with self._lock:
            return dict(self._cache)

    def subscriber_count(self, key: Key) -> int:
        with self._lock:
            return len(self._subs.get(key, {}))

    # -- internals -----------------------------------------------------------

    def _notify_locked(self, key: Key, line: str) -> int:
        subs = self._subs.get(key)
        if not subs:
            return 0
        delivered = 0
        for sub in list(subs.values()):
            try:
                sub.sink(line)
            except Exception as exc:  # one consumer must not block the rest
                sub.consecutive_failures += 1
                if sub.consecutive_failures >= self.consumer_failure_limit:
                    subs.pop(sub.consumer_id, None)
                    self._log("SUB_DROP", consumer=sub.consumer_id,
                              reason=f"deliveries failed: {exc}", count=1)
            else:
                sub.consecutive_failures = 0
                delivered += 1
        if not subs:
            self._subs.pop(key, None)
        return delivered

    def _sweep_locked(self, now: int, to_ping: list[str]) -> list[Key]:
        evicted = []
        for key, entry in list(self._cache.items()):
            if entry.record.t_end < now:
                del self._cache[key]
                evicted.append(key)
                if entry.source_provider in self._registry:
                    to_ping.append(entry.source_provider)
                self._log("CACHE_EVICT", now=now,
                          entity=f"{key[0].entity_type}:{key[0].entity_id}",
                          scope=key[1], reason="expired", ts_end=entry.record.t_end)
        return evicted

    def _find_provider_locked(self, entity: EntityRef, scope: str) -> str | None:
        for entry in self._registry.values():
            if entry.entity == entity and scope in entry.scopes:
                return entry.provider_id
        return None

    def _dispatch_pings(self, provider_ids: Iterable[str], now: int) -> None:
        for provider_id in dict.fromkeys(provider_ids):
            sent = False
            try:
                sent = self._ping_provider(provider_id)
            except Exception:
                logger.exception("availability ping to %s failed", provider_id)
            with self._lock:
                if provider_id in self._registry and provider_id not in self._pending_pong:
                    self._pending_pong[provider_id] = (
                        time.monotonic() + self.availability_timeout_s
                    )
            self._log("PING_SENT", now=now, provider=provider_id, delivered=int(sent))

    def _drop_provider_locked(self, provider_id: str, reason: str) -> None:
        if self._registry.pop(provider_id, None) is None:
            self._pending_pong.pop(provider_id, None)
            return
        self._pending_pong.pop(provider_id, None)
        # Registry and cache stay consistent: orphaned entries go with the provider.
        for key, entry in list(self._cache.items()):
            if entry.source_provider == provider_id:
                del self._cache[key]
                self._log("CACHE_EVICT",
                          entity=f"{key[0].entity_type}:{key[0].entity_id}",
                          scope=key[1], reason="provider dropped")
        self._log("PROVIDER_DROP", provider=provider_id, reason=reason)
