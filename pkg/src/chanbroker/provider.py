"""Provider agent: measures per-channel interference and reports upstream.

The determining loop: load configuration, ping the broker (terminate if it
is unreachable), advertise, run an initial radio check to adopt an
operating channel, then scan / analyze / report on a fixed interval. The
validity window attached to each report adapts to how often a channel
switch turns out to be necessary: stable environments stretch it, restless
ones shrink it.

Interference means are taken over linear milliwatts, not dBm, so a single
loud emitter dominates a channel's average the way it dominates the medium.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
import threading
import time
from dataclasses import dataclass, field
from typing import Callable, IO

import numpy as np

from .environment import EnvironmentSpec, load_environment, scan as environment_scan
from .model import (
    ChannelPlan,
    DomainError,
    InterferencePayload,
    ScanObservation,
    carrier_frequency,
    channel_for_frequency,
    format_decimal,
)
from .netio import LineSocket
from .protocol import (
    MESSAGE_HEADER,
    ContextMessage,
    FLAG_ADVERTISEMENT,
    FLAG_UPDATE,
    ReplyKind,
    decode_reply,
    encode_message,
    encode_payload,
    encode_scope_declarations,
    ping as ping_line,
    pong as pong_line,
)
from .timebase import RealClock

logger = logging.getLogger(__name__)

__all__ = [
    "ProviderConfig",
    "ConfigError",
    "ChannelReport",
    "LinkBudget",
    "SnrValue",
    "snr_ideal",
    "snr_effective",
    "analyze_interference",
    "initial_radio_check",
    "adapt_validity",
    "run_provider",
    "load_provider_config",
    "environment_scan_source",
    "replay_scan_source",
    "CSV_HEADER",
    "EXIT_OK",
    "EXIT_CONFIG",
    "EXIT_PING_FAILURE",
    "EXIT_ADVERT_REJECTED",
    "EXIT_CONNECTION_LOST",
    "main",
]

BOLTZMANN_J_PER_K = 1.380649e-23

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_PING_FAILURE = 2
EXIT_ADVERT_REJECTED = 3
EXIT_CONNECTION_LOST = 4

CSV_HEADER = (
    "iteration,timestamp,current_channel,recommended_channel,switch_flag,"
    "mean_current_dbm,mean_recommended_dbm,snr_gain_db,validity_s\n"
)

PAYLOAD_PARAMETERS = (
    "security_channel",
    "channel_recommendation",
    "channel_switch",
    "interference_power",
    "position_x",
    "position_y",
)

ScanSource = Callable[[int], list[ScanObservation]]


class ConfigError(ValueError):
    """Provider configuration is unusable."""


@dataclass
class ProviderConfig:
    provider_id: str
    entity_id: str
    entity_type: str = "sensor"
    scope: str = "interference"
    broker_host: str = "127.0.0.1"
    broker_port: int = 7471
    safety_critical: bool = False
    channel_plan: ChannelPlan = field(default_factory=ChannelPlan)
    validity_initial_s: float = 60.0
    validity_min_s: float = 10.0
    validity_max_s: float = 600.0
    validity_grow: float = 1.5
    validity_shrink: float = 0.5
    scan_interval_s: float = 5.0
    hysteresis_db: float = 0.0
    position: tuple[float, float] = (0.0, 0.0)
    empty_channel_floor_dbm: float = -100.0
    own_ssid: str | None = None
    initial_channel: int | None = None
    adopt_recommendation: bool = True
    max_retries: int = 3
    connect_timeout_s: float = 2.0
    reply_timeout_s: float = 2.0
    environment_file: str | None = None
    replay_file: str | None = None
    rng_seed: int | None = None

    def __post_init__(self) -> None:
        if not self.provider_id or not self.entity_id:
            raise ConfigError("provider_id and entity_id must be non-empty")
        if not (self.validity_min_s <= self.validity_initial_s <= self.validity_max_s):
            raise ConfigError(
                "validity bounds must satisfy min <= initial <= max, got "
                f"{self.validity_min_s}/{self.validity_initial_s}/{self.validity_max_s}"
            )
        if self.validity_grow <= 1.0:
            raise ConfigError(f"validity_grow must exceed 1, got {self.validity_grow}")
        if not 0.0 < self.validity_shrink < 1.0:
            raise ConfigError(f"validity_shrink must be in (0, 1), got {self.validity_shrink}")
        if self.scan_interval_s <= 0:
            raise ConfigError("scan_interval_s must be positive")
        if self.hysteresis_db < 0:
            raise ConfigError("hysteresis_db must be >= 0")
        candidates = self.channel_plan.candidates(self.safety_critical)
        if self.initial_channel is not None and self.initial_channel not in candidates:
            raise ConfigError(
                f"initial channel {self.initial_channel} not among candidates {candidates}"
            )

    @property
    def candidates(self) -> tuple[int, ...]:
        return self.channel_plan.candidates(self.safety_critical)


@dataclass
class ChannelReport:
    """Per-channel interference means plus the resulting recommendation."""

    per_channel_mean_dbm: dict[int, float]
    recommended: int
    recommended_mhz: int
    switch_flag: int
    current_channel: int
    current_rssi_dbm: float

    @property
    def gain_db(self) -> float:
        """dB improvement of the recommended channel over the current one."""
        return (self.per_channel_mean_dbm[self.current_channel]
                - self.per_channel_mean_dbm[self.recommended])


@dataclass(frozen=True)
class LinkBudget:
    """Inputs to the idealized link signal-to-noise ratio.

    Linear factors throughout: antenna gains, transmit power in watts,
    thermal noise floor k*T*B, free-field absorption F, and the multipath
    and neighbor disruption factors applied on top of the ideal ratio.
    """

    g_t: float = 1.0
    g_r: float = 1.0
    p_t_w: float = 0.100
    k: float = BOLTZMANN_J_PER_K
    temperature_k: float = 290.0
    bandwidth_hz: float = 20e6
    absorption: float = 1.0
    i_m: float = 1.0
    i_n: float = 1.0

    def __post_init__(self) -> None:
        for name in ("g_t", "g_r", "p_t_w", "k", "temperature_k", "bandwidth_hz",
                     "absorption", "i_m", "i_n"):
            if getattr(self, name) <= 0:
                raise DomainError(f"link budget factor {name} must be positive")


@dataclass(frozen=True)
class SnrValue:
    ratio: float
    db: float


def snr_ideal(lb: LinkBudget) -> SnrValue:
    """Ideal SNR: G_t * G_r * P_t / (k * T * B * F), as ratio and dB."""
    denominator = lb.k * lb.temperature_k * lb.bandwidth_hz * lb.absorption
    if denominator <= 0:
        raise DomainError("noise denominator must be positive")
    ratio = (lb.g_t * lb.g_r * lb.p_t_w) / denominator
    return SnrValue(ratio, 10.0 * math.log10(ratio))


def snr_effective(lb: LinkBudget) -> SnrValue:
    """Ideal SNR degraded by the multipath and neighbor factors."""
    ideal = snr_ideal(lb)
    ratio = ideal.ratio / (lb.i_m * lb.i_n)
    return SnrValue(ratio, 10.0 * math.log10(ratio))


def analyze_interference(
    scans: list[ScanObservation],
    own_ssid: str | None,
    current_channel: int,
    cfg: ProviderConfig,
) -> ChannelReport:
    """Turn one scan into per-channel means and a channel recommendation.

    Observations from the provider's own SSID are excluded, the rest are
    attributed to the nearest allowed channel (others dropped), and each
    channel's mean is taken over linear milliwatts. Channels without any
    observation sit at the configured floor, so a silent channel always
    beats an occupied one. The recommendation is the candidate with the
    lowest mean; ties keep the current channel if it participates,
    otherwise the lowest channel number wins.
    """
    plan = cfg.channel_plan
    candidates = cfg.candidates
    if not candidates:
        raise ConfigError("no candidate channels to recommend from")
    if current_channel not in candidates:
        raise DomainError(
            f"current channel {current_channel} not among candidates {candidates}"
        )

    buckets: dict[int, list[float]] = {n: [] for n in plan.allowed}
    current_rssi: float | None = None
    for obs in scans:
        if own_ssid is not None and obs.ssid == own_ssid:
            if current_rssi is None or obs.rssi_dbm > current_rssi:
                current_rssi = obs.rssi_dbm
            continue
        channel = channel_for_frequency(obs.frequency_mhz, plan)
        if channel is None:
            continue
        buckets[channel].append(obs.rssi_dbm)

    means: dict[int, float] = {}
    for n in plan.allowed:
        rssis = buckets[n]
        if not rssis:
            means[n] = cfg.empty_channel_floor_dbm
        else:
            mean_mw = float(np.mean(10.0 ** (np.asarray(rssis) / 10.0)))
            means[n] = 10.0 * math.log10(mean_mw)

    best = min(means[n] for n in candidates)
    tied = [n for n in candidates if means[n] == best]
    recommended = current_channel if current_channel in tied else min(tied)
    switch_flag = int(
        recommended != current_channel
        and means[recommended] < means[current_channel] - cfg.hysteresis_db
    )
    return ChannelReport(
        per_channel_mean_dbm=means,
        recommended=recommended,
        recommended_mhz=carrier_frequency(recommended),
        switch_flag=switch_flag,
        current_channel=current_channel,
        current_rssi_dbm=current_rssi if current_rssi is not None
        else cfg.empty_channel_floor_dbm,
    )


def initial_radio_check(scans: list[ScanObservation], cfg: ProviderConfig) -> int:
    """Pick the operating channel before the listening loop starts."""
    report = analyze_interference(scans, cfg.own_ssid, cfg.candidates[0], cfg)
    return report.recommended


def adapt_validity(current_s: float, switched: bool, cfg: ProviderConfig) -> float:
    """Stretch the validity window when stable, shrink it after a switch."""
    factor = cfg.validity_shrink if switched else cfg.validity_grow
    return min(max(current_s * factor, cfg.validity_min_s), cfg.validity_max_s)


# -- scan sources ------------------------------------------------------------

def environment_scan_source(env: EnvironmentSpec,
                            position: tuple[float, float]) -> ScanSource:
    """Scan source backed by the RF simulator at a fixed receiver position."""
    return lambda now: environment_scan(env, position, now)


def replay_scan_source(path: str) -> ScanSource:
    """Scan source replaying recorded frames.

    Frames are '---'-separated blocks of ``ssid,frequency_mhz,rssi_dbm``
    lines; successive scans cycle through the frames (a single frame means
    a static environment).
    """
    frames: list[list[ScanObservation]] = [[]]
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if line == "---":
                frames.append([])
                continue
            parts = [p.strip() for p in line.split(",")]
            if len(parts) != 3:
                raise ConfigError(f"{path}:{lineno}: expected ssid,frequency_mhz,rssi_dbm")
            try:
                frames[-1].append(
                    ScanObservation(parts[0], int(parts[1]), float(parts[2]))
                )
            except (ValueError, DomainError) as exc:
                raise ConfigError(f"{path}:{lineno}: {exc}") from None
    if frames == [[]]:
        raise ConfigError(f"{path}: replay file holds no observations")
    counter = {"i": 0}

    def source(now: int) -> list[ScanObservation]:
        frame = frames[counter["i"] % len(frames)]
        counter["i"] += 1
        return list(frame)

    return source


def build_scan_source(cfg: ProviderConfig) -> ScanSource:
    if cfg.replay_file:
        return replay_scan_source(cfg.replay_file)
    if cfg.environment_file:
        env = load_environment(cfg.environment_file)
        if cfg.rng_seed is not None:
            env = env.with_seed(cfg.rng_seed)
        return environment_scan_source(env, cfg.position)
    raise ConfigError("config names neither environment_file nor replay_file")


# -- broker link -------------------------------------------------------------

class _BrokerLink:
    """Request/reply channel that also services inbound availability pings."""

    def __init__(self, cfg: ProviderConfig):
        self._cfg = cfg
        self._sock: LineSocket | None = None

    def connect(self) -> None:
        self.close()
        self._sock = LineSocket.connect(
            self._cfg.broker_host, self._cfg.broker_port, self._cfg.connect_timeout_s
        )

    def close(self) -> None:
        if self._sock is not None:
            self._sock.close()
            self._sock = None

    def ping(self) -> bool:
        if self._sock is None:
            raise ConnectionError("not connected")
        self._sock.send_line(ping_line())
        line = self._sock.read_line(self._cfg.reply_timeout_s)
        return line == "PONG"

    def request(self, line: str):
        """Send one line and return the broker's reply.

        Interleaved PINGs get their PONG here; the line in flight already
        carries the freshest data, so no extra re-send is needed.
        """
        if self._sock is None:
            raise ConnectionError("not connected")
        self._sock.send_line(line)
        while True:
            reply = self._sock.read_line(self._cfg.reply_timeout_s)
            if reply is None:
                raise ConnectionError("broker reply timed out")
            if reply == "PING":
                self._sock.send_line(pong_line())
                continue
            return decode_reply(reply + "\n")

    def wait(self, wall_seconds: float, on_ping: Callable[[], None],
             stop_event: threading.Event | None) -> None:
        """Idle between iterations while staying responsive to pings.

        A dead link just sleeps the time out; the send path owns recovery.
        """
        deadline = time.monotonic() + wall_seconds
        while True:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                return
            if stop_event is not None and stop_event.is_set():
                return
            if self._sock is None:
                time.sleep(min(remaining, 0.1))
                continue
            try:
                line = self._sock.read_line(min(remaining, 0.1))
            except (ConnectionError, OSError):
                time.sleep(min(remaining, 0.1))
                continue
            if line is None:
                continue
            if line == "PING":
                try:
                    self._sock.send_line(pong_line())
                except (ConnectionError, OSError):
                    continue
                on_ping()
            # anything else here is a stray reply; the next request resyncs


# -- the determining loop -----------------------------------------------------

def run_provider(
    cfg: ProviderConfig,
    scan_source: ScanSource | None = None,
    *,
    clock=None,
    csv_out: str | IO[str] | None = None,
    iterations: int | None = None,
    stop_event: threading.Event | None = None,
) -> int:
    """Run the provider process; returns one of the EXIT_* statuses.

    ``iterations`` bounds the listening loop (None runs until the broker
    connection is lost or ``stop_event`` fires). ``csv_out`` receives one
    event line per iteration.
    """
    clock = clock or RealClock()
    try:
        source = scan_source if scan_source is not None else build_scan_source(cfg)
    except (ConfigError, OSError) as exc:
        logger.error("provider %s: bad configuration: %s", cfg.provider_id, exc)
        return EXIT_CONFIG

    own_csv = None
    if isinstance(csv_out, str):
        own_csv = open(csv_out, "w", encoding="utf-8")
        csv_file: IO[str] | None = own_csv
    else:
        csv_file = csv_out

    link = _BrokerLink(cfg)
    state = {
        "validity": float(cfg.validity_initial_s),
        "last_report": None,  # type: ChannelReport | None
        "current": 0,
    }

    def build_update(report: ChannelReport, now: int) -> str:
        payload = InterferencePayload(
            security_flag=int(cfg.safety_critical),
            channel_recommendation_mhz=report.recommended_mhz,
            channel_switch=report.switch_flag,
            interference_power_dbm=report.per_channel_mean_dbm[report.recommended],
            pos_x=cfg.position[0],
            pos_y=cfg.position[1],
        )
        msg = ContextMessage(
            header=MESSAGE_HEADER,
            flag=FLAG_UPDATE,
            provider_id=cfg.provider_id,
            entity_type=cfg.entity_type,
            entity_id=cfg.entity_id,
            scope=cfg.scope,
            ts_begin=now,
            ts_end=now + max(1, round(state["validity"])),
            payload=encode_payload(payload),
        )
        return encode_message(msg)

    def build_advertisement(now: int) -> str:
        msg = ContextMessage(
            header=MESSAGE_HEADER,
            flag=FLAG_ADVERTISEMENT,
            provider_id=cfg.provider_id,
            entity_type=cfg.entity_type,
            entity_id=cfg.entity_id,
            scope=cfg.scope,
            ts_begin=now,
            ts_end=now + max(1, round(state["validity"])),
            payload=encode_scope_declarations({cfg.scope: PAYLOAD_PARAMETERS}),
        )
        return encode_message(msg)

    def refresh_after_ping() -> None:
        # broker asked for fresh data; re-stamp the last report if one exists
        report = state["last_report"]
        if report is None:
            return
        try:
            link.request(build_update(report, clock.now()))
        except (ConnectionError, OSError):
            pass  # the loop's own send path deals with a broken link

    def advertise(now: int):
        return link.request(build_advertisement(now))

    try:
        # startup: one ping, then register; both gate the whole run
        try:
            link.connect()
            alive = link.ping()
        except (ConnectionError, OSError) as exc:
            logger.error("provider %s: broker ping failed: %s", cfg.provider_id, exc)
            return EXIT_PING_FAILURE
        if not alive:
            logger.error("provider %s: broker did not answer the ping", cfg.provider_id)
            return EXIT_PING_FAILURE

        now = clock.now()
        try:
            reply = advertise(now)
        except (ConnectionError, OSError) as exc:
            logger.error("provider %s: advertisement failed: %s", cfg.provider_id, exc)
            return EXIT_CONNECTION_LOST
        if reply.kind is ReplyKind.NACK:
            logger.error("provider %s: advertisement rejected: %s",
                         cfg.provider_id, reply.reason)
            return EXIT_ADVERT_REJECTED

        if cfg.initial_channel is not None:
            state["current"] = cfg.initial_channel
        else:
            state["current"] = initial_radio_check(source(now), cfg)
        logger.info("provider %s: operating on channel %d",
                    cfg.provider_id, state["current"])

        if csv_file is not None:
            csv_file.write(CSV_HEADER)

        failures = 0
        iteration = 0
        while iterations is None or iteration < iterations:
            if stop_event is not None and stop_event.is_set():
                break
            iteration += 1
            link.wait(clock.wall_seconds(cfg.scan_interval_s),
                      refresh_after_ping, stop_event)
            clock.advance(cfg.scan_interval_s)
            now = clock.now()

            report = analyze_interference(source(now), cfg.own_ssid,
                                          state["current"], cfg)
            state["last_report"] = report
            line = build_update(report, now)

            try:
                reply = link.request(line)
            except (ConnectionError, OSError) as exc:
                failures += 1
                logger.warning("provider %s: broker link lost (%s), attempt %d/%d",
                               cfg.provider_id, exc, failures, cfg.max_retries)
                if failures > cfg.max_retries:
                    return EXIT_CONNECTION_LOST
                try:
                    link.connect()
                    if not link.ping():
                        continue
                    if advertise(now).kind is ReplyKind.NACK:
                        return EXIT_ADVERT_REJECTED
                    reply = link.request(line)
                except (ConnectionError, OSError):
                    continue
            failures = 0
            if reply.kind is ReplyKind.NACK:
                logger.warning("provider %s: update rejected: %s",
                               cfg.provider_id, reply.reason)

            if csv_file is not None:
                means = report.per_channel_mean_dbm
                csv_file.write(
                    f"{iteration},{now},{report.current_channel},"
                    f"{report.recommended},{report.switch_flag},"
                    f"{format_decimal(means[report.current_channel])},"
                    f"{format_decimal(means[report.recommended])},"
                    f"{format_decimal(report.gain_db)},"
                    f"{format_decimal(state['validity'])}\n"
                )
                csv_file.flush()

            state["validity"] = adapt_validity(
                state["validity"], report.switch_flag == 1, cfg
            )
            if report.switch_flag == 1 and cfg.adopt_recommendation:
                logger.info("provider %s: switching channel %d -> %d",
                            cfg.provider_id, state["current"], report.recommended)
                state["current"] = report.recommended
        return EXIT_OK
    finally:
        link.close()
        if own_csv is not None:
            own_csv.close()


# -- configuration files ------------------------------------------------------

_BOOL_VALUES = {"1": True, "true": True, "yes": True, "on": True,
                "0": False, "false": False, "no": False, "off": False}


def _parse_bool(value: str, key: str, where: str) -> bool:
    try:
        return _BOOL_VALUES[value.strip().lower()]
    except KeyError:
        raise ConfigError(f"{where}: {key} must be a boolean, got {value!r}") from None


def load_provider_config(path: str) -> ProviderConfig:
    """Read a flat ``key = value`` provider configuration file.

    '#' starts a comment. Unknown keys are rejected so typos surface with
    their file and line.
    """
    raw: dict[str, tuple[str, int]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, rawline in enumerate(fh, start=1):
            line = rawline.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, _, value = line.partition("=")
            raw[key.strip()] = (value.strip(), lineno)

    def take(key: str) -> tuple[str, int] | None:
        return raw.pop(key, None)

    def take_str(key: str, default: str | None = None) -> str | None:
        item = take(key)
        return item[0] if item else default

    def take_float(key: str, default: float) -> float:
        item = take(key)
        if item is None:
            return default
        try:
            return float(item[0])
        except ValueError:
            raise ConfigError(f"{path}:{item[1]}: {key} must be a number") from None

    def take_int(key: str, default: int | None) -> int | None:
        item = take(key)
        if item is None:
            return default
        try:
            return int(item[0])
        except ValueError:
            raise ConfigError(f"{path}:{item[1]}: {key} must be an integer") from None

    def take_bool(key: str, default: bool) -> bool:
        item = take(key)
        if item is None:
            return default
        return _parse_bool(item[0], key, f"{path}:{item[1]}")

    provider_id = take_str("provider_id")
    entity_id = take_str("entity_id")
    if not provider_id or not entity_id:
        raise ConfigError(f"{path}: provider_id and entity_id are required")

    broker_host, broker_port = "127.0.0.1", 7471
    address = take_str("broker_address")
    if address:
        host, _, port_s = address.rpartition(":")
        try:
            broker_host, broker_port = host or "127.0.0.1", int(port_s)
        except ValueError:
            raise ConfigError(f"{path}: broker_address must be host:port") from None

    allowed_item = take("allowed_channels")
    if allowed_item:
        try:
            allowed = tuple(int(tok) for tok in allowed_item[0].split(",") if tok.strip())
        except ValueError:
            raise ConfigError(
                f"{path}:{allowed_item[1]}: allowed_channels must be a comma list"
            ) from None
    else:
        allowed = ChannelPlan().allowed
    security = take_int("security_channel", ChannelPlan().security_channel)

    try:
        plan = ChannelPlan(allowed=allowed, security_channel=security)
    except DomainError as exc:
        raise ConfigError(f"{path}: {exc}") from None

    try:
        cfg = ProviderConfig(
            provider_id=provider_id,
            entity_id=entity_id,
            entity_type=take_str("entity_type", "sensor"),
            scope=take_str("scope", "interference"),
            broker_host=broker_host,
            broker_port=broker_port,
            safety_critical=take_bool("safety_critical", False),
            channel_plan=plan,
            validity_initial_s=take_float("validity_initial_s", 60.0),
            validity_min_s=take_float("validity_min_s", 10.0),
            validity_max_s=take_float("validity_max_s", 600.0),
            validity_grow=take_float("validity_grow", 1.5),
            validity_shrink=take_float("validity_shrink", 0.5),
            scan_interval_s=take_float("scan_interval_s", 5.0),
            hysteresis_db=take_float("hysteresis_db", 0.0),
            position=(take_float("position_x", 0.0), take_float("position_y", 0.0)),
            empty_channel_floor_dbm=take_float("empty_channel_floor_dbm", -100.0),
            own_ssid=take_str("own_ssid"),
            initial_channel=take_int("initial_channel", None),
            adopt_recommendation=take_bool("adopt_recommendation", True),
            max_retries=take_int("max_retries", 3),
            connect_timeout_s=take_float("connect_timeout_s", 2.0),
            reply_timeout_s=take_float("reply_timeout_s", 2.0),
            environment_file=take_str("environment_file"),
            replay_file=take_str("replay_file"),
            rng_seed=take_int("rng_seed", None),
        )
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if raw:
        key, (_, lineno) = next(iter(raw.items()))
        raise ConfigError(f"{path}:{lineno}: unknown setting {key!r}")
    return cfg


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        description="Run one interference provider against a broker."
    )
    parser.add_argument("config", help="provider configuration file")
    parser.add_argument("--iterations", type=int, default=None,
                        help="stop after N update cycles (default: run forever)")
    parser.add_argument("--csv", default=None, help="write per-iteration events here")
    parser.add_argument("--broker", default=None, help="override broker host:port")
    parser.add_argument("--verbose", action="store_true")
    args = parser.parse_args(argv)

    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = load_provider_config(args.config)
        if args.broker:
            host, _, port_s = args.broker.rpartition(":")
            cfg.broker_host = host or "127.0.0.1"
            cfg.broker_port = int(port_s)
    except (ConfigError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return run_provider(cfg, csv_out=args.csv, iterations=args.iterations)


if __name__ == "__main__":
    sys.exit(main())
