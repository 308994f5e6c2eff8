"""Domain types shared by the broker, the provider agents and the RF simulator.

The 2.4 GHz band is modelled as 13 channels on a 5 MHz grid starting at
2407 MHz, of which the four non-overlapping ones {1, 5, 9, 13} form the
default channel plan. Interference powers travel as dBm values but are
averaged in linear milliwatts, so the conversion helpers live here too.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

__all__ = [
    "DomainError",
    "EntityRef",
    "ScopeRecord",
    "ChannelPlan",
    "InterferencePayload",
    "PowerValue",
    "ScanObservation",
    "FIRST_CHANNEL",
    "LAST_CHANNEL",
    "BASE_FREQUENCY_MHZ",
    "CHANNEL_STEP_MHZ",
    "CHANNEL_BANDWIDTH_MHZ",
    "DEFAULT_ALLOWED_CHANNELS",
    "DEFAULT_SECURITY_CHANNEL",
    "carrier_frequency",
    "channel_for_frequency",
    "dbm_to_mw",
    "mw_to_dbm",
    "format_decimal",
]

FIRST_CHANNEL = 1
LAST_CHANNEL = 13
BASE_FREQUENCY_MHZ = 2407
CHANNEL_STEP_MHZ = 5
CHANNEL_BANDWIDTH_MHZ = 20

DEFAULT_ALLOWED_CHANNELS = (1, 5, 9, 13)
DEFAULT_SECURITY_CHANNEL = 13

# '|' frames messages, '/' frames payload fields, newlines frame lines.
RESERVED_CHARS = ("|", "/", "\n", "\r")


class DomainError(ValueError):
    """A value falls outside its documented domain."""


def carrier_frequency(n: int) -> int:
    """Carrier frequency in MHz for channel ``n`` (2407 + 5*n, n in 1..13)."""
    if not isinstance(n, int) or isinstance(n, bool):
        raise DomainError(f"channel number must be an integer, got {n!r}")
    if not FIRST_CHANNEL <= n <= LAST_CHANNEL:
        raise DomainError(f"channel number {n} outside {FIRST_CHANNEL}..{LAST_CHANNEL}")
    return BASE_FREQUENCY_MHZ + CHANNEL_STEP_MHZ * n


def channel_for_frequency(f_mhz: float, plan: "ChannelPlan") -> int | None:
    """Map a scanned frequency onto the nearest allowed channel.

    Returns the allowed channel whose carrier is nearest to ``f_mhz``,
    provided the distance is within half the channel bandwidth (10 MHz for
    20 MHz channels). Frequencies outside every allowed channel's window
    return ``None`` and the caller drops the observation. An exact midpoint
    resolves to the lower channel number.
    """
    half_bw = plan.bandwidth_mhz / 2.0
    best: int | None = None
    best_dist = math.inf
    for n in plan.allowed:
        dist = abs(f_mhz - carrier_frequency(n))
        if dist < best_dist or (dist == best_dist and best is not None and n < best):
            best = n
            best_dist = dist
    if best is None or best_dist > half_bw:
        return None
    return best


def dbm_to_mw(p_dbm: float) -> float:
    """Convert a power level from dBm to milliwatts."""
    return 10.0 ** (p_dbm / 10.0)


def mw_to_dbm(p_mw: float) -> float:
    """Convert a power level from milliwatts to dBm. Requires ``p_mw > 0``."""
    if p_mw <= 0.0:
        raise DomainError(f"power must be positive to express in dBm, got {p_mw!r} mW")
    return 10.0 * math.log10(p_mw)


def format_decimal(x: float) -> str:
    """Render a finite decimal as its shortest round-trip form.

    Always keeps a fractional part ('-63.0', not '-63') so the wire format
    is unambiguous about the field being a decimal.
    """
    x = float(x)
    if not math.isfinite(x):
        raise DomainError(f"cannot encode non-finite decimal {x!r}")
    return str(x)


def _check_label(value: str, what: str) -> str:
    if not isinstance(value, str) or not value:
        raise DomainError(f"{what} must be a non-empty string, got {value!r}")
    for ch in RESERVED_CHARS:
        if ch in value:
            raise DomainError(f"{what} {value!r} contains reserved character {ch!r}")
    return value


@dataclass(frozen=True)
class EntityRef:
    """Typed, identified object the broker stores context for.

    Both fields are non-empty and may not contain the wire delimiters.
    """

    entity_type: str
    entity_id: str

    def __post_init__(self) -> None:
        _check_label(self.entity_type, "entity_type")
        _check_label(self.entity_id, "entity_id")


@dataclass(frozen=True)
class ScopeRecord:
    """A named group of context parameters bounded by a validity window.

    Valid at time ``t`` iff ``t_begin <= t <= t_end`` (integer unix seconds).
    """

    scope_name: str
    parameters: tuple[tuple[str, str], ...] = ()
    t_begin: int = 0
    t_end: int = 0

    def __post_init__(self) -> None:
        _check_label(self.scope_name, "scope_name")
        names = []
        for name, value in self.parameters:
            _check_label(name, "parameter name")
            if not isinstance(value, str):
                raise DomainError(f"parameter value for {name!r} must be a string")
            for ch in RESERVED_CHARS:
                if ch in value:
                    raise DomainError(f"parameter {name!r} value contains reserved {ch!r}")
            names.append(name)
        if len(set(names)) != len(names):
            raise DomainError(f"duplicate parameter names in scope {self.scope_name!r}")
        if self.t_begin > self.t_end:
            raise DomainError(f"t_begin {self.t_begin} > t_end {self.t_end}")

    def valid_at(self, t: int) -> bool:
        return self.t_begin <= t <= self.t_end


@dataclass(frozen=True)
class ChannelPlan:
    """The channels a deployment may use plus the reserved security channel.

    ``allowed`` is an ordered set; the security channel must be a member and
    is only a candidate for safety-critical providers.
    """

    allowed: tuple[int, ...] = DEFAULT_ALLOWED_CHANNELS
    security_channel: int = DEFAULT_SECURITY_CHANNEL
    bandwidth_mhz: int = CHANNEL_BANDWIDTH_MHZ

    def __post_init__(self) -> None:
        seen = []
        for n in self.allowed:
            carrier_frequency(n)  # validates the range
            if n in seen:
                raise DomainError(f"duplicate channel {n} in plan")
            seen.append(n)
        if len(seen) < 2:
            raise DomainError("channel plan needs at least two allowed channels")
        if self.security_channel not in self.allowed:
            raise DomainError(
                f"security channel {self.security_channel} not in allowed set {self.allowed}"
            )

    def candidates(self, safety_critical: bool) -> tuple[int, ...]:
        """Channels a provider may recommend.

        Safety-critical providers additionally have the security channel
        available; everyone else picks from the remaining allowed channels.
        """
        if safety_critical:
            return self.allowed
        return tuple(n for n in self.allowed if n != self.security_channel)


@dataclass(frozen=True)
class InterferencePayload:
    """Decoded form of the slash-delimited interference payload.

    ``channel_recommendation_mhz`` is a carrier frequency in MHz; the two
    flags are exactly 0 or 1.
    """

    security_flag: int
    channel_recommendation_mhz: int
    channel_switch: int
    interference_power_dbm: float
    pos_x: float
    pos_y: float

    def __post_init__(self) -> None:
        if self.security_flag not in (0, 1):
            raise DomainError(f"security_flag must be 0 or 1, got {self.security_flag!r}")
        if self.channel_switch not in (0, 1):
            raise DomainError(f"channel_switch must be 0 or 1, got {self.channel_switch!r}")
        if not isinstance(self.channel_recommendation_mhz, int):
            raise DomainError("channel_recommendation_mhz must be an integer MHz value")
        for name in ("interference_power_dbm", "pos_x", "pos_y"):
            if not math.isfinite(getattr(self, name)):
                raise DomainError(f"{name} must be finite")


@dataclass(frozen=True)
class PowerValue:
    """A power level carried in dBm with its linear milliwatt view."""

    value_dbm: float

    @property
    def value_mw(self) -> float:
        return dbm_to_mw(self.value_dbm)

    @classmethod
    def from_mw(cls, p_mw: float) -> "PowerValue":
        return cls(mw_to_dbm(p_mw))


@dataclass(frozen=True)
class ScanObservation:
    """One detected SSID: broadcast name, frequency and received power."""

    ssid: str
    frequency_mhz: int
    rssi_dbm: float

    def __post_init__(self) -> None:
        if not 2400 <= self.frequency_mhz <= 2500:
            raise DomainError(
                f"frequency {self.frequency_mhz} MHz outside the 2.4 GHz band"
            )
