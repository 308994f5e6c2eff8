"""Command line front end: run scenarios and plot their gain series."""

from __future__ import annotations

import argparse
import logging
import sys

from .environment import EnvironmentFileError
from .provider import ConfigError
from .scenario import (
    EXIT_COMPONENT_FAILURE,
    EXIT_CONFIG_ERROR,
    EXIT_SUCCESS,
    ScenarioError,
    load_scenario,
    plot_series,
    run_scenario,
)
from .server import BrokerStartError


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="chanbroker",
        description="Interference-aware channel selection experiments.",
    )
    parser.add_argument("--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run a scenario end to end")
    run_p.add_argument("--scenario", required=True, help="scenario file")
    run_p.add_argument("--iterations", type=int, default=None,
                       help="override the scenario's iteration count")
    run_p.add_argument("--seed", type=int, default=None,
                       help="override the scenario's seed")
    run_p.add_argument("--out", default=None, help="output directory")

    plot_p = sub.add_parser("plot", help="plot a provider CSV's gain series")
    plot_p.add_argument("--csv", required=True, help="provider event CSV")
    plot_p.add_argument("--out", required=True,
                        help="output file (.svg/.png draw, else gnuplot data)")

    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )

    if args.command == "run":
        try:
            spec = load_scenario(args.scenario, iterations=args.iterations,
                                 seed=args.seed, output_dir=args.out)
            result = run_scenario(spec)
        except (ScenarioError, ConfigError, EnvironmentFileError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_CONFIG_ERROR
        except BrokerStartError as exc:
            print(f"error: broker failed to start: {exc}", file=sys.stderr)
            return EXIT_COMPONENT_FAILURE
        for summary in result.summaries:
            if summary.get("rows"):
                print(
                    f"{summary['provider_id']}: {summary['rows']} iterations, "
                    f"{summary['switch_signals']} switch signals, "
                    f"mean gain {summary['mean_gain_db']:.2f} dB, "
                    f"final channel {summary['final_channel']}"
                )
            else:
                print(f"{summary['provider_id']}: no output "
                      f"(exit {summary.get('exit_code')})")
        print(f"results in {result.output_dir} (exit {result.exit_code})")
        return result.exit_code

    try:
        plot_series(args.csv, args.out)
    except (ScenarioError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    return EXIT_SUCCESS


if __name__ == "__main__":
    sys.exit(main())
