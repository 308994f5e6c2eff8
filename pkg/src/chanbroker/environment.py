"""Deterministic simulated 2.4 GHz radio environment.

Transmitters are fixed SSID sources with a channel, a transmit power and a
position; received power follows a log-distance path-loss model

    rx_dbm = tx_dbm - L0 - 10 * gamma * log10(d)   (d clamped to >= 1 m)

plus an optional uniform jitter that is keyed by (seed, ssid, query time),
so a scan is a pure function of (environment, position, time). That purity
is what lets whole closed-loop runs be replayed byte for byte.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, replace

from .model import (
    DomainError,
    ScanObservation,
    carrier_frequency,
)

__all__ = [
    "TransmitterSpec",
    "EnvironmentSpec",
    "EnvironmentFileError",
    "received_power",
    "scan",
    "hidden_node_scenario",
    "load_environment",
    "export_replay",
]

MAX_TX_POWER_DBM = 20.0  # 100 mW regulatory cap in the 2.4 GHz band

Position = tuple[float, float]


class EnvironmentFileError(ValueError):
    """An environment file failed to parse; carries file and line."""

    def __init__(self, path: str, lineno: int, message: str):
        super().__init__(f"{path}:{lineno}: {message}")
        self.path = path
        self.lineno = lineno


@dataclass(frozen=True)
class TransmitterSpec:
    """One simulated SSID source; optionally active only in a time window."""

    ssid: str
    channel: int
    tx_power_dbm: float = MAX_TX_POWER_DBM
    position: Position = (0.0, 0.0)
    active_from: int | None = None
    active_until: int | None = None

    def __post_init__(self) -> None:
        if not self.ssid:
            raise DomainError("transmitter needs a non-empty ssid")
        carrier_frequency(self.channel)
        if self.tx_power_dbm > MAX_TX_POWER_DBM:
            raise DomainError(
                f"tx power {self.tx_power_dbm} dBm exceeds the {MAX_TX_POWER_DBM} dBm cap"
            )

    def active_at(self, now: int) -> bool:
        if self.active_from is not None and now < self.active_from:
            return False
        if self.active_until is not None and now > self.active_until:
            return False
        return True


@dataclass(frozen=True)
class EnvironmentSpec:
    """Immutable world description: transmitters plus propagation constants."""

    transmitters: tuple[TransmitterSpec, ...] = ()
    path_loss_exponent: float = 2.0
    reference_loss_db_at_1m: float = 40.0
    noise_jitter_db: float = 0.0
    rng_seed: int = 0
    detection_floor_dbm: float = -95.0

    def __post_init__(self) -> None:
        if not 1.6 <= self.path_loss_exponent <= 6.0:
            raise DomainError(
                f"path loss exponent {self.path_loss_exponent} outside [1.6, 6.0]"
            )
        if self.noise_jitter_db < 0:
            raise DomainError("noise jitter must be >= 0 dB")
        ssids = [t.ssid for t in self.transmitters]
        if len(set(ssids)) != len(ssids):
            raise DomainError("transmitter ssids must be unique")

    def with_seed(self, seed: int) -> "EnvironmentSpec":
        return replace(self, rng_seed=seed)


def _jitter_db(env: EnvironmentSpec, ssid: str, now: int) -> float:
    """Uniform(-j, +j) noise, reproducible across processes.

    Keyed through sha256 because the builtin hash() is salted per process.
    """
    if env.noise_jitter_db <= 0.0:
        return 0.0
    digest = hashlib.sha256(f"{env.rng_seed}|{ssid}|{now}".encode()).digest()
    unit = int.from_bytes(digest[:8], "big") / float(1 << 64)
    return (2.0 * unit - 1.0) * env.noise_jitter_db


def received_power(env: EnvironmentSpec, tx: TransmitterSpec, at: Position,
                   now: int = 0) -> float:
    """Received power in dBm at position ``at`` from one transmitter."""
    dx = tx.position[0] - at[0]
    dy = tx.position[1] - at[1]
    d = max(math.hypot(dx, dy), 1.0)
    loss = env.reference_loss_db_at_1m + 10.0 * env.path_loss_exponent * math.log10(d)
    return tx.tx_power_dbm - loss + _jitter_db(env, tx.ssid, now)


def scan(env: EnvironmentSpec, at: Position, now: int) -> list[ScanObservation]:
    """All SSIDs detectable at ``at`` and time ``now``, ordered by ssid.

    One observation per active transmitter whose received power clears the
    detection floor; the observation carries the transmitter's carrier
    frequency.
    """
    observations = []
    for tx in sorted(env.transmitters, key=lambda t: t.ssid):
        if not tx.active_at(now):
            continue
        rx = received_power(env, tx, at, now)
        if rx >= env.detection_floor_dbm:
            observations.append(
                ScanObservation(tx.ssid, carrier_frequency(tx.channel), rx)
            )
    return observations


def hidden_node_scenario() -> tuple[EnvironmentSpec, Position, Position]:
    """Canned two-receiver setup where one node cannot hear a transmitter.

    Returns (environment, position_a, position_b): the transmitter
    ``hidden_ap`` on channel 9 is detectable from position_b but falls
    below the detection floor at position_a, so the two positions report
    different interference for the same channel. A shared transmitter on
    channel 13 stays visible from both.
    """
    env = EnvironmentSpec(
        transmitters=(
            TransmitterSpec("hidden_ap", channel=9, tx_power_dbm=20.0, position=(0.0, 0.0)),
            TransmitterSpec("shared_ap", channel=13, tx_power_dbm=20.0, position=(75.0, 0.0)),
        ),
        path_loss_exponent=3.5,
        reference_loss_db_at_1m=40.0,
    )
    position_a = (150.0, 0.0)  # hidden_ap arrives below -95 dBm here
    position_b = (2.0, 0.0)
    return env, position_a, position_b


# -- environment files ------------------------------------------------------
#
# Plain text, one transmitter per line:
#     ssid,channel,tx_power_dbm,x,y[,active_from,active_until]
# '#' starts a comment; "key = value" lines set the propagation constants
# (path_loss_exponent, reference_loss_db_at_1m, noise_jitter_db, rng_seed,
# detection_floor_dbm).

_ENV_FLOAT_KEYS = {
    "path_loss_exponent",
    "reference_loss_db_at_1m",
    "noise_jitter_db",
    "detection_floor_dbm",
}


def load_environment(path: str) -> EnvironmentSpec:
    settings: dict[str, float | int] = {}
    transmitters: list[TransmitterSpec] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" in line:
                key, _, value = line.partition("=")
                key = key.strip()
                value = value.strip()
                try:
                    if key in _ENV_FLOAT_KEYS:
                        settings[key] = float(value)
                    elif key == "rng_seed":
                        settings[key] = int(value)
                    else:
                        raise EnvironmentFileError(path, lineno, f"unknown setting {key!r}")
                except ValueError:
                    raise EnvironmentFileError(
                        path, lineno, f"bad value {value!r} for {key!r}"
                    ) from None
                continue
            parts = [p.strip() for p in line.split(",")]
            if len(parts) not in (5, 7):
                raise EnvironmentFileError(
                    path, lineno,
                    "expected ssid,channel,tx_power_dbm,x,y[,active_from,active_until]",
                )
            try:
                tx = TransmitterSpec(
                    ssid=parts[0],
                    channel=int(parts[1]),
                    tx_power_dbm=float(parts[2]),
                    position=(float(parts[3]), float(parts[4])),
                    active_from=int(parts[5]) if len(parts) == 7 else None,
                    active_until=int(parts[6]) if len(parts) == 7 else None,
                )
            except (ValueError, DomainError) as exc:
                raise EnvironmentFileError(path, lineno, str(exc)) from None
            transmitters.append(tx)
    try:
        return EnvironmentSpec(transmitters=tuple(transmitters), **settings)
    except DomainError as exc:
        raise EnvironmentFileError(path, 0, str(exc)) from None


def export_replay(env: EnvironmentSpec, at: Position, times: list[int], path: str) -> None:
    """Write scan frames in the provider's replay format.

    Frames (one per query time) are separated by '---' lines; each
    observation is one ``ssid,frequency_mhz,rssi_dbm`` line.
    """
    with open(path, "w", encoding="utf-8") as fh:
        for i, now in enumerate(times):
            if i:
                fh.write("---\n")
            for obs in scan(env, at, now):
                if "," in obs.ssid or "\n" in obs.ssid:
                    raise DomainError(f"ssid {obs.ssid!r} cannot be written to a replay file")
                fh.write(f"{obs.ssid},{obs.frequency_mhz},{obs.rssi_dbm}\n")
