"""Line-oriented wire protocol between providers, broker and consumers.

One message per newline-terminated UTF-8 line over any ordered reliable
byte stream. Context messages are nine pipe-separated fields:

    CTX1|<A or U>|provider|entity_type|entity_id|scope|ts_begin|ts_end|payload

Flag 'A' advertises a provider (payload carries its scope declarations),
flag 'U' carries a context update (payload carries the interference data,
six slash-separated fields). Control vocabulary: ``ACK``, ``NACK|reason``,
``PING``, ``PONG``, ``MISS``, plus the consumer verbs ``SUB|...`` and
``QRY|...``.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from .model import DomainError, EntityRef, InterferencePayload, format_decimal

__all__ = [
    "MESSAGE_HEADER",
    "FLAG_ADVERTISEMENT",
    "FLAG_UPDATE",
    "ContextMessage",
    "BrokerReply",
    "ReplyKind",
    "ProtocolError",
    "EncodeError",
    "ParseError",
    "encode_message",
    "decode_message",
    "encode_payload",
    "decode_payload",
    "encode_reply",
    "decode_reply",
    "ping",
    "pong",
    "miss",
    "subscribe_line",
    "query_line",
    "parse_key_verb",
    "encode_scope_declarations",
    "decode_scope_declarations",
]

MESSAGE_HEADER = "CTX1"
FLAG_ADVERTISEMENT = "A"
FLAG_UPDATE = "U"

MESSAGE_FIELD_COUNT = 9
PAYLOAD_FIELD_COUNT = 6

# Field positions, used in parse errors so the sender can locate the defect.
FIELD_NAMES = (
    "header",
    "flag",
    "provider_id",
    "entity_type",
    "entity_id",
    "scope",
    "ts_begin",
    "ts_end",
    "payload",
)


class ProtocolError(ValueError):
    """Base class for wire-format violations."""


class EncodeError(ProtocolError):
    def __init__(self, field: str, message: str):
        super().__init__(f"cannot encode field {field!r}: {message}")
        self.field = field


class ParseError(ProtocolError):
    def __init__(self, field_index: int, message: str):
        name = FIELD_NAMES[field_index] if 0 <= field_index < len(FIELD_NAMES) else "?"
        super().__init__(f"field {field_index} ({name}): {message}")
        self.field_index = field_index


@dataclass(frozen=True)
class ContextMessage:
    """One advertisement ('A') or context update ('U')."""

    header: str
    flag: str
    provider_id: str
    entity_type: str
    entity_id: str
    scope: str
    ts_begin: int
    ts_end: int
    payload: str

    def __post_init__(self) -> None:
        if self.flag not in (FLAG_ADVERTISEMENT, FLAG_UPDATE):
            raise EncodeError("flag", f"must be 'A' or 'U', got {self.flag!r}")
        for name in ("header", "flag", "provider_id", "entity_type", "entity_id",
                     "scope", "payload"):
            value = getattr(self, name)
            if not isinstance(value, str):
                raise EncodeError(name, f"must be a string, got {type(value).__name__}")
            if "|" in value:
                raise EncodeError(name, "contains the field delimiter '|'")
            if "\n" in value or "\r" in value:
                raise EncodeError(name, "contains a line break")
        for name in ("ts_begin", "ts_end"):
            value = getattr(self, name)
            if not isinstance(value, int) or isinstance(value, bool):
                raise EncodeError(name, f"must be an integer unix timestamp, got {value!r}")
        if self.ts_begin > self.ts_end:
            raise EncodeError("ts_begin", f"{self.ts_begin} is after ts_end {self.ts_end}")

    @property
    def entity(self) -> EntityRef:
        return EntityRef(self.entity_type, self.entity_id)

    @property
    def key(self) -> tuple[EntityRef, str]:
        return (self.entity, self.scope)


class ReplyKind(Enum):
    ACK = "ACK"
    NACK = "NACK"
    PONG = "PONG"


@dataclass(frozen=True)
class BrokerReply:
    kind: ReplyKind
    reason: str | None = None

    def __post_init__(self) -> None:
        if (self.reason is not None) and self.kind is not ReplyKind.NACK:
            raise EncodeError("reason", "only NACK replies carry a reason")

    @property
    def ok(self) -> bool:
        return self.kind is not ReplyKind.NACK

    @classmethod
    def ack(cls) -> "BrokerReply":
        return cls(ReplyKind.ACK)

    @classmethod
    def nack(cls, reason: str) -> "BrokerReply":
        return cls(ReplyKind.NACK, reason)


def encode_message(m: ContextMessage) -> str:
    """Render a message as its single wire line (newline included).

    Deterministic: the same message always produces the same bytes. The
    constructor already enforces the field invariants.
    """
    return "|".join(
        (
            m.header,
            m.flag,
            m.provider_id,
            m.entity_type,
            m.entity_id,
            m.scope,
            str(m.ts_begin),
            str(m.ts_end),
            m.payload,
        )
    ) + "\n"


def decode_message(line: str) -> ContextMessage:
    """Parse one wire line back into a ContextMessage.

    Inverse of :func:`encode_message` on its image; tolerates the trailing
    newline. Raises :class:`ParseError` carrying the offending field index.
    """
    fields = line.rstrip("\r\n").split("|")
    if len(fields) != MESSAGE_FIELD_COUNT:
        raise ParseError(
            min(len(fields), MESSAGE_FIELD_COUNT) - 1,
            f"expected {MESSAGE_FIELD_COUNT} '|'-separated fields, got {len(fields)}",
        )
    header, flag, provider_id, entity_type, entity_id, scope, ts_b, ts_e, payload = fields
    if flag not in (FLAG_ADVERTISEMENT, FLAG_UPDATE):
        raise ParseError(1, f"unknown flag {flag!r}")
    try:
        ts_begin = int(ts_b, 10)
    except ValueError:
        raise ParseError(6, f"timestamp {ts_b!r} is not a base-10 integer") from None
    try:
        ts_end = int(ts_e, 10)
    except ValueError:
        raise ParseError(7, f"timestamp {ts_e!r} is not a base-10 integer") from None
    if ts_begin > ts_end:
        raise ParseError(6, f"ts_begin {ts_begin} is after ts_end {ts_end}")
    return ContextMessage(
        header=header,
        flag=flag,
        provider_id=provider_id,
        entity_type=entity_type,
        entity_id=entity_id,
        scope=scope,
        ts_begin=ts_begin,
        ts_end=ts_end,
        payload=payload,
    )


def encode_payload(p: InterferencePayload) -> str:
    """Six slash-separated fields: flags as 0/1, frequency as integer MHz,
    power and positions as shortest round-trip decimals."""
    return "/".join(
        (
            str(p.security_flag),
            str(p.channel_recommendation_mhz),
            str(p.channel_switch),
            format_decimal(p.interference_power_dbm),
            format_decimal(p.pos_x),
            format_decimal(p.pos_y),
        )
    )


def _parse_flag(token: str, what: str) -> int:
    if token not in ("0", "1"):
        raise ProtocolError(f"{what} must be '0' or '1', got {token!r}")
    return int(token)


def _parse_decimal(token: str, what: str) -> float:
    try:
        value = float(token)
    except ValueError:
        raise ProtocolError(f"{what} {token!r} is not a decimal") from None
    if value != value or value in (float("inf"), float("-inf")):
        raise ProtocolError(f"{what} {token!r} is not finite")
    return value


def decode_payload(s: str) -> InterferencePayload:
    parts = s.split("/")
    if len(parts) != PAYLOAD_FIELD_COUNT:
        raise ProtocolError(
            f"expected {PAYLOAD_FIELD_COUNT} '/'-separated payload fields, got {len(parts)}"
        )
    sec, rec_mhz, switch, power, pos_x, pos_y = parts
    try:
        mhz = int(rec_mhz, 10)
    except ValueError:
        raise ProtocolError(f"channel recommendation {rec_mhz!r} is not an integer MHz") from None
    try:
        return InterferencePayload(
            security_flag=_parse_flag(sec, "security flag"),
            channel_recommendation_mhz=mhz,
            channel_switch=_parse_flag(switch, "channel switch"),
            interference_power_dbm=_parse_decimal(power, "interference power"),
            pos_x=_parse_decimal(pos_x, "position x"),
            pos_y=_parse_decimal(pos_y, "position y"),
        )
    except DomainError as exc:
        raise ProtocolError(str(exc)) from None


def encode_reply(r: BrokerReply) -> str:
    if r.kind is ReplyKind.NACK:
        reason = r.reason or ""
        if "\n" in reason or "\r" in reason:
            raise EncodeError("reason", "contains a line break")
        return f"NACK|{reason}\n" if reason else "NACK\n"
    return f"{r.kind.value}\n"


def decode_reply(line: str) -> BrokerReply:
    body = line.rstrip("\r\n")
    if body == "ACK":
        return BrokerReply.ack()
    if body == "PONG":
        return BrokerReply(ReplyKind.PONG)
    if body == "NACK":
        return BrokerReply(ReplyKind.NACK)  # bare NACK is accepted
    if body.startswith("NACK|"):
        return BrokerReply.nack(body[len("NACK|"):])
    raise ProtocolError(f"not a broker reply: {body!r}")


def ping() -> str:
    return "PING\n"


def pong() -> str:
    return "PONG\n"


def miss() -> str:
    return "MISS\n"


def _key_verb(verb: str, entity_type: str, entity_id: str, scope: str) -> str:
    for what, value in (("entity_type", entity_type), ("entity_id", entity_id),
                        ("scope", scope)):
        if not value or "|" in value or "\n" in value or "\r" in value:
            raise EncodeError(what, f"invalid {what} {value!r}")
    return f"{verb}|{entity_type}|{entity_id}|{scope}\n"


def subscribe_line(entity_type: str, entity_id: str, scope: str) -> str:
    """Consumer verb: subscribe to pushes for one entity-scope pair."""
    return _key_verb("SUB", entity_type, entity_id, scope)


def query_line(entity_type: str, entity_id: str, scope: str) -> str:
    """Consumer verb: one-shot cache lookup for an entity-scope pair."""
    return _key_verb("QRY", entity_type, entity_id, scope)


def parse_key_verb(line: str) -> tuple[str, str, str, str]:
    """Split a SUB/QRY line into (verb, entity_type, entity_id, scope)."""
    parts = line.rstrip("\r\n").split("|")
    if len(parts) != 4:
        raise ProtocolError(f"expected VERB|type|id|scope, got {len(parts)} fields")
    verb, entity_type, entity_id, scope = parts
    if verb not in ("SUB", "QRY"):
        raise ProtocolError(f"unknown verb {verb!r}")
    if not entity_type or not entity_id or not scope:
        raise ProtocolError("entity type, id and scope must be non-empty")
    return verb, entity_type, entity_id, scope


# Advertisement payloads declare the provider's scopes and parameter names:
#   scope_a:param1,param2;scope_b:param3
# An empty payload declares just the message's scope field with no parameters.

def encode_scope_declarations(scopes: dict[str, tuple[str, ...]]) -> str:
    if not scopes:
        raise EncodeError("payload", "advertisement needs at least one scope")
    decls = []
    for scope, params in scopes.items():
        _reject_decl_token(scope, "scope name")
        for p in params:
            _reject_decl_token(p, "parameter name")
        decls.append(f"{scope}:{','.join(params)}" if params else scope)
    return ";".join(decls)


def decode_scope_declarations(scope_field: str, payload: str) -> dict[str, tuple[str, ...]]:
    """Scope map advertised by a message; falls back to the scope field alone."""
    if not payload:
        if not scope_field:
            raise ProtocolError("advertisement declares no scope")
        return {scope_field: ()}
    scopes: dict[str, tuple[str, ...]] = {}
    for decl in payload.split(";"):
        name, _, params = decl.partition(":")
        _reject_decl_token(name, "scope name")
        names = tuple(p for p in params.split(",") if p) if params else ()
        for p in names:
            _reject_decl_token(p, "parameter name")
        if name in scopes:
            raise ProtocolError(f"scope {name!r} declared twice")
        scopes[name] = names
    return scopes


def _reject_decl_token(token: str, what: str) -> None:
    if not token:
        raise ProtocolError(f"empty {what} in scope declaration")
    if any(c in token for c in ":;,|/\n\r"):
        raise ProtocolError(f"{what} {token!r} contains a declaration delimiter")
