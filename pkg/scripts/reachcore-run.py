#!/bin/env python

"""
Command-line interface for ``reachcore``.

Three commands are available:

``run``
    Compute the reach tube of a built-in benchmark (``--system``) or of a
    custom system document (``--custom-system``) and write the tube, a run
    summary and, optionally, a gnuplot script to ``--out-dir``.
``verify``
    Compute the tube and check the benchmark's target-avoid specification.
    The exit code is 0 when verified, 2 when a violation is possible and 3
    when the check is inconclusive.
``table1``
    Print the comparison of inclusion functions on the two-variable example.

Settings are taken from the flags first, then from ``--config`` and finally
from the benchmark itself. Errors are reported as a JSON record on stderr
with exit code 1.
"""
import argparse
import logging
import sys

from reachcore import cli_utils

parser = argparse.ArgumentParser(
    description="Interval reachability of neural network controlled systems."
)
parser.add_argument(
    "-v",
    "--verbose",
    default=False,
    action="store_true",
    help="Print progress updates.",
)
commands = parser.add_subparsers(dest="command", required=True)


def _add_run_arguments(sub):
    system = sub.add_mutually_exclusive_group()
    system.add_argument("--system", type=str, default=None, help="Benchmark name.")
    system.add_argument(
        "--custom-system",
        type=str,
        default=None,
        help="Path to a system document (JSON expression grammar).",
    )
    sub.add_argument("--nn", type=str, default=None, help="Controller weights JSON.")
    sub.add_argument("--config", type=str, default=None, help="Run configuration.")
    sub.add_argument(
        "--defaults", type=str, default=None, help="Preset name or defaults YAML."
    )
    sub.add_argument("--method", choices=cli_utils.RUN_METHODS, default=None)
    sub.add_argument(
        "--open-loop", choices=("natural", "cornered", "mixed"), default=None
    )
    sub.add_argument("--corners", type=int, choices=(1, 2, 4), default=None)
    sub.add_argument(
        "--mixed",
        type=str,
        default=None,
        help="Variable groups using the mixed expansion, e.g. 'xuw'.",
    )
    sub.add_argument("--scheme", choices=cli_utils.SCHEMES, default=None)
    sub.add_argument("--dt", type=float, default=None)
    sub.add_argument("--t-final", type=float, default=None)
    sub.add_argument("--zoh", type=float, default=None, help="Hold period (s).")
    sub.add_argument(
        "--partition",
        type=str,
        default=None,
        help="'uniform:k' or 'adaptive:eps,depth_p,depth_n'.",
    )
    sub.add_argument(
        "--x0", type=cli_utils.parse_box, default=None, help="[[lo, hi], ...]"
    )
    sub.add_argument(
        "--w", type=cli_utils.parse_box, default=None, help="[[lo, hi], ...]"
    )
    sub.add_argument("--n-vehicles", type=int, default=None, help="Platoon size.")
    sub.add_argument(
        "--initial-set", type=int, default=None, help="Docking initial set."
    )
    sub.add_argument("--seed", type=int, default=None)
    sub.add_argument("--repeat", type=int, default=None)
    sub.add_argument(
        "--jobs",
        type=int,
        default=None,
        help="Worker cap for partitions (default: REACHCORE_JOBS).",
    )
    sub.add_argument(
        "--samples",
        type=int,
        default=None,
        help="Simulate this many trajectories and count those leaving the tube.",
    )
    sub.add_argument(
        "--plot",
        default=None,
        action="store_true",
        help="Write a gnuplot script with its data files.",
    )
    sub.add_argument("-o", "--out-dir", type=str, default=None)


run = commands.add_parser("run", help="Compute and write reach tubes.")
_add_run_arguments(run)
verify = commands.add_parser("verify", help="Check a target-avoid specification.")
_add_run_arguments(verify)
verify.add_argument(
    "--target", type=cli_utils.parse_box, default=None, help="[[lo, hi], ...]"
)
verify.add_argument("--target-time", type=float, default=None)
verify.add_argument(
    "--avoid-circle",
    type=float,
    nargs=3,
    action="append",
    default=None,
    metavar=("CX", "CY", "R"),
    help="Circular obstacle in the benchmark's plot plane; may be repeated.",
)
table1 = commands.add_parser("table1", help="Compare inclusion functions.")
table1.add_argument("--runs", type=int, default=None, help="Runs per method.")
args = parser.parse_args()

_FLAGS = (
    "system",
    "custom_system",
    "nn",
    "defaults",
    "method",
    "open_loop",
    "corners",
    "mixed",
    "scheme",
    "dt",
    "t_final",
    "zoh",
    "partition",
    "x0",
    "w",
    "seed",
    "repeat",
    "jobs",
    "samples",
    "plot",
    "out_dir",
    "target",
    "target_time",
    "avoid_circle",
)

if __name__ == "__main__":
    if args.verbose:
        logging.basicConfig(level=logging.INFO)

    try:
        if args.command == "table1":
            sys.exit(cli_utils.cmd_table1(args.runs))

        file_config = cli_utils.load_config(args.config) if args.config else {}
        flags = {key: getattr(args, key, None) for key in _FLAGS}
        system_kwargs = {
            key: value
            for key, value in (
                ("n_vehicles", args.n_vehicles),
                ("initial_set", args.initial_set),
            )
            if value is not None
        }
        if system_kwargs:
            flags["system_kwargs"] = {
                **file_config.get("system_kwargs", {}),
                **system_kwargs,
            }
        cfg = cli_utils.make_run_config(flags, file_config)
        if args.command == "run":
            code = cli_utils.cmd_run(cfg)
        else:
            code = cli_utils.cmd_verify(cfg)
    except (ValueError, OSError) as err:
        code = cli_utils.report_error(err)
    sys.exit(code)
