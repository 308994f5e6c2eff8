"""Closed-loop experiment runner: one broker, N providers, M iterations.

A scenario file names an environment, the provider configurations and the
run parameters. Providers run as threads against a real TCP broker on
loopback, so the full wire protocol stays on the code path, while
timestamps come from virtual clocks. The same seed therefore reproduces
the exact same per-provider CSV bytes.
"""

from __future__ import annotations

import json
import os
import threading
import time

from .environment import EnvironmentFileError, load_environment
from .model import format_decimal
from .provider import (
    ConfigError,
    EXIT_OK,
    environment_scan_source,
    load_provider_config,
    run_provider,
)
from .server import BrokerServer, BrokerStartError
from .timebase import MessageClock, VirtualClock

__all__ = [
    "ScenarioSpec",
    "ScenarioError",
    "ScenarioResult",
    "load_scenario",
    "run_scenario",
    "summarize_csv",
    "plot_series",
    "EXIT_SUCCESS",
    "EXIT_CONFIG_ERROR",
    "EXIT_COMPONENT_FAILURE",
    "EXIT_DEADLINE_EXCEEDED",
]

EXIT_SUCCESS = 0
EXIT_CONFIG_ERROR = 1
EXIT_COMPONENT_FAILURE = 2
EXIT_DEADLINE_EXCEEDED = 3

DEFAULT_EPOCH = 1_000_000
DEFAULT_TIME_SCALE = 0.002  # wall seconds per virtual second
DEADLINE_GRACE_S = 30.0


class ScenarioError(ValueError):
    """Scenario configuration failed to load or validate."""


class ScenarioSpec:
    def __init__(
        self,
        environment_file: str,
        provider_files: list[str],
        *,
        iterations: int = 100,
        seed: int = 0,
        broker_host: str = "127.0.0.1",
        broker_port: int = 0,
        output_dir: str = "out",
        epoch: int = DEFAULT_EPOCH,
        time_scale: float = DEFAULT_TIME_SCALE,
        deadline_grace_s: float = DEADLINE_GRACE_S,
    ):
        if iterations < 1:
            raise ScenarioError(f"iterations must be >= 1, got {iterations}")
        if not provider_files:
            raise ScenarioError("a scenario needs at least one provider")
        self.environment_file = environment_file
        self.provider_files = list(provider_files)
        self.iterations = iterations
        self.seed = seed
        self.broker_host = broker_host
        self.broker_port = broker_port
        self.output_dir = output_dir
        self.epoch = epoch
        self.time_scale = time_scale
        self.deadline_grace_s = deadline_grace_s


class ScenarioResult:
    def __init__(self, exit_code: int, summaries: list[dict], output_dir: str,
                 updates_acked: int, provider_exits: dict[str, int]):
        self.exit_code = exit_code
        self.summaries = summaries
        self.output_dir = output_dir
        self.updates_acked = updates_acked
        self.provider_exits = provider_exits

    @property
    def ok(self) -> bool:
        return self.exit_code == EXIT_SUCCESS


def load_scenario(path: str, *, iterations: int | None = None, seed: int | None = None,
                  output_dir: str | None = None) -> ScenarioSpec:
    """Parse a ``key = value`` scenario file; relative paths resolve against
    the file's own directory. CLI overrides win over file values."""
    base = os.path.dirname(os.path.abspath(path))
    values: dict[str, str] = {}
    providers: list[str] = []
    try:
        fh = open(path, "r", encoding="utf-8")
    except OSError as exc:
        raise ScenarioError(f"{path}: {exc}") from None
    with fh:
        for lineno, rawline in enumerate(fh, start=1):
            line = rawline.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ScenarioError(f"{path}:{lineno}: expected 'key = value'")
            key, _, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if key == "provider":
                providers.append(os.path.join(base, value))
            elif key in ("environment", "iterations", "seed", "broker",
                         "output_dir", "epoch", "time_scale"):
                values[key] = value
            else:
                raise ScenarioError(f"{path}:{lineno}: unknown setting {key!r}")
    if "environment" not in values:
        raise ScenarioError(f"{path}: missing 'environment' setting")

    broker_host, broker_port = "127.0.0.1", 0
    if "broker" in values:
        host, _, port_s = values["broker"].rpartition(":")
        try:
            broker_host, broker_port = host or "127.0.0.1", int(port_s)
        except ValueError:
            raise ScenarioError(f"{path}: broker must be host:port") from None
    try:
        spec = ScenarioSpec(
            environment_file=os.path.join(base, values["environment"]),
            provider_files=providers,
            iterations=iterations if iterations is not None
            else int(values.get("iterations", "100")),
            seed=seed if seed is not None else int(values.get("seed", "0")),
            broker_host=broker_host,
            broker_port=broker_port,
            output_dir=output_dir if output_dir is not None
            else values.get("output_dir", "out"),
            epoch=int(values.get("epoch", str(DEFAULT_EPOCH))),
            time_scale=float(values.get("time_scale", str(DEFAULT_TIME_SCALE))),
        )
    except ValueError as exc:
        raise ScenarioError(f"{path}: {exc}") from None
    return spec


def run_scenario(spec: ScenarioSpec) -> ScenarioResult:
    """Execute a scenario end to end and write CSVs plus summaries.

    Raises :class:`ScenarioError` (or its file-format cousins) on
    configuration problems; component failures and deadline overruns are
    reported through the result's exit code.
    """
    env = load_environment(spec.environment_file).with_seed(spec.seed)
    cfgs = []
    for provider_file in spec.provider_files:
        try:
            cfgs.append(load_provider_config(provider_file))
        except OSError as exc:
            raise ScenarioError(str(exc)) from None
    ids = [c.provider_id for c in cfgs]
    if len(set(ids)) != len(ids):
        raise ScenarioError(f"duplicate provider ids in scenario: {ids}")

    os.makedirs(spec.output_dir, exist_ok=True)
    broker_log_path = os.path.join(spec.output_dir, "broker.log")
    log_lock = threading.Lock()
    log_file = open(broker_log_path, "w", encoding="utf-8")

    def log_sink(line: str) -> None:
        with log_lock:
            log_file.write(line + "\n")

    clock = MessageClock(spec.epoch)
    try:
        server = BrokerServer(
            spec.broker_host, spec.broker_port,
            clock=clock, sweep_interval_s=0.25, log_sink=log_sink,
        ).start()
    except BrokerStartError:
        log_file.close()
        raise

    host, port = server.address
    stop = threading.Event()
    exits: dict[str, int] = {}
    threads: list[threading.Thread] = []
    csv_paths: dict[str, str] = {}

    for cfg in cfgs:
        cfg.broker_host, cfg.broker_port = host, port
        source = environment_scan_source(env, cfg.position)
        provider_clock = VirtualClock(spec.epoch, spec.time_scale)
        csv_path = os.path.join(spec.output_dir, f"{cfg.provider_id}.csv")
        csv_paths[cfg.provider_id] = csv_path

        def worker(cfg=cfg, source=source, provider_clock=provider_clock,
                   csv_path=csv_path) -> None:
            exits[cfg.provider_id] = run_provider(
                cfg, source, clock=provider_clock, csv_out=csv_path,
                iterations=spec.iterations, stop_event=stop,
            )

        t = threading.Thread(target=worker, name=f"provider-{cfg.provider_id}",
                             daemon=True)
        t.start()
        threads.append(t)

    wall_per_iteration = max(c.scan_interval_s for c in cfgs) * spec.time_scale
    deadline = time.monotonic() + spec.iterations * wall_per_iteration + DEADLINE_GRACE_S
    deadline_hit = False
    for t in threads:
        t.join(timeout=max(0.0, deadline - time.monotonic()))
    if any(t.is_alive() for t in threads):
        deadline_hit = True
        stop.set()
        for t in threads:
            t.join(timeout=5.0)

    server.stop()
    with log_lock:
        log_file.close()

    updates_acked = _count_log_events(broker_log_path, "UPDATE_ACK")
    summaries = []
    for cfg in cfgs:
        path = csv_paths[cfg.provider_id]
        if os.path.exists(path):
            summary = summarize_csv(path)
        else:
            summary = {"provider_id": cfg.provider_id, "rows": 0}
        summary["provider_id"] = cfg.provider_id
        summary["exit_code"] = exits.get(cfg.provider_id)
        summaries.append(summary)

    if deadline_hit:
        exit_code = EXIT_DEADLINE_EXCEEDED
    elif any(code != EXIT_OK for code in exits.values()) or len(exits) != len(cfgs):
        exit_code = EXIT_COMPONENT_FAILURE
    else:
        exit_code = EXIT_SUCCESS

    result = ScenarioResult(exit_code, summaries, spec.output_dir,
                            updates_acked, exits)
    _write_summaries(spec, result)
    return result


def _count_log_events(path: str, event: str) -> int:
    count = 0
    needle = f"event={event} "
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if line.startswith(needle):
                count += 1
    return count


def summarize_csv(path: str) -> dict:
    """Aggregate one provider CSV: switches, gain statistics, final channel."""
    rows = _read_rows(path)
    gains = [r["snr_gain_db"] for r in rows]
    channel_changes = sum(
        1 for a, b in zip(rows, rows[1:])
        if a["current_channel"] != b["current_channel"]
    )
    return {
        "rows": len(rows),
        "switch_signals": sum(r["switch_flag"] for r in rows),
        "channel_changes": channel_changes,
        "mean_gain_db": sum(gains) / len(gains),
        "max_gain_db": max(gains),
        "final_channel": rows[-1]["current_channel"],
        "final_recommended": rows[-1]["recommended_channel"],
    }


def _read_rows(path: str) -> list[dict]:
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n")
        names = header.split(",")
        for lineno, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != len(names):
                raise ScenarioError(f"{path}:{lineno}: expected {len(names)} columns")
            try:
                row = {
                    "iteration": int(parts[0]),
                    "timestamp": int(parts[1]),
                    "current_channel": int(parts[2]),
                    "recommended_channel": int(parts[3]),
                    "switch_flag": int(parts[4]),
                    "mean_current_dbm": float(parts[5]),
                    "mean_recommended_dbm": float(parts[6]),
                    "snr_gain_db": float(parts[7]),
                    "validity_s": float(parts[8]),
                }
            except ValueError as exc:
                raise ScenarioError(f"{path}:{lineno}: {exc}") from None
            rows.append(row)
    if not rows:
        raise ScenarioError(f"{path}: no event rows")
    return rows


def _write_summaries(spec: ScenarioSpec, result: ScenarioResult) -> None:
    payload = {
        "iterations": spec.iterations,
        "seed": spec.seed,
        "exit_code": result.exit_code,
        "updates_acked": result.updates_acked,
        "providers": result.summaries,
    }
    with open(os.path.join(spec.output_dir, "summary.json"), "w",
              encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")

    lines = [
        f"{'provider':<16}{'rows':>6}{'switches':>10}{'changes':>9}"
        f"{'mean gain':>11}{'max gain':>10}{'final ch':>9}",
    ]
    for s in result.summaries:
        if s.get("rows"):
            lines.append(
                f"{s['provider_id']:<16}{s['rows']:>6}{s['switch_signals']:>10}"
                f"{s['channel_changes']:>9}{s['mean_gain_db']:>11.2f}"
                f"{s['max_gain_db']:>10.2f}{s['final_channel']:>9}"
            )
        else:
            lines.append(f"{s['provider_id']:<16}{0:>6}  (no output, exit "
                         f"{s.get('exit_code')})")
    lines.append(f"updates acked by broker: {result.updates_acked}")
    with open(os.path.join(spec.output_dir, "summary.txt"), "w",
              encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def plot_series(csv_path: str, out_path: str) -> None:
    """Render the gain-per-iteration series from a provider CSV.

    ``.svg``/``.png`` suffixes draw a chart (SVG output is byte-stable for
    identical inputs); anything else gets gnuplot-ready two-column text.
    """
    rows = _read_rows(csv_path)
    series = [(r["iteration"], r["snr_gain_db"]) for r in rows]
    if out_path.endswith((".svg", ".png")):
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        matplotlib.rcParams["svg.hashsalt"] = "chanbroker"
        fig, ax = plt.subplots(figsize=(8, 4))
        ax.plot([i for i, _ in series], [g for _, g in series],
                drawstyle="steps-post")
        ax.set_xlabel("measurement")
        ax.set_ylabel("SNR gain [dB]")
        ax.set_title("gain of recommended channel over current channel")
        ax.grid(True, alpha=0.3)
        fig.tight_layout()
        metadata = {"Date": None} if out_path.endswith(".svg") else None
        fig.savefig(out_path, metadata=metadata)
        plt.close(fig)
    else:
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write("# iteration snr_gain_db\n")
            for i, g in series:
                fh.write(f"{i} {format_decimal(g)}\n")
