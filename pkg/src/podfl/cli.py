"""Command-line front end.

Subcommands::

    podfl run <config.json>             execute one experiment
    podfl verify-pod <pod> <history>    re-check a proof against a saved store
    podfl sweep <config-dir>            run every config in a directory
    podfl calibrate --epsilon E --delta D --rounds T
                                        print the calibrated noise multiplier

Exit codes: 0 success (and, for verify-pod, a valid proof), 1 runtime
failure or a proof that does not verify, 2 configuration or schema
violation (the message names the offending field).
"""

from __future__ import annotations

import argparse
import json
import sys

from .errors import CalibrationError, ConfigError, FormatError, PodflError
from .history import HistoryStore
from .privacy import calibrate_sigma, epsilon_for_sigma
from .runner import OUTPUT_ROOT_ENV, run_experiment, run_sweep
from .unlearning import load_pod, read_detached_digest, verify_pod

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="podfl",
        description="Deniable federated averaging with streaming unlearning.",
        epilog=f"Set {OUTPUT_ROOT_ENV} to relocate all relative output directories.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute one experiment config")
    p_run.add_argument("config", help="path to a JSON experiment config")

    p_verify = sub.add_parser("verify-pod", help="verify a proof of deniability")
    p_verify.add_argument("pod", help="path to a proof document")
    p_verify.add_argument("history", help="path to a saved history directory")

    p_sweep = sub.add_parser("sweep", help="run every *.json config in a directory")
    p_sweep.add_argument("config_dir", help="directory of JSON experiment configs")

    p_cal = sub.add_parser("calibrate", help="calibrate the noise multiplier")
    p_cal.add_argument("--epsilon", type=float, required=True)
    p_cal.add_argument("--delta", type=float, required=True)
    p_cal.add_argument("--rounds", type=int, required=True)
    return parser


def _cmd_run(args) -> int:
    manifest = run_experiment(args.config)
    print(f"wrote {manifest['summary']}")
    print(
        f"requests served: {manifest['requests_served']}, "
        f"retrains: {manifest['retrain_count']}, "
        f"final accuracy: {manifest['final_accuracy']}"
    )
    return EXIT_OK


def _cmd_verify_pod(args) -> int:
    pod = load_pod(args.pod)
    store = HistoryStore.load(args.history)
    digest = read_detached_digest(args.pod)
    if digest is None:
        print(
            "note: no detached .sha256 digest next to the proof; "
            "running semantic checks only",
            file=sys.stderr,
        )
    if verify_pod(pod, store, expected_digest=digest):
        print(f"VALID: client {pod.target_id} proof verifies against {args.history}")
        return EXIT_OK
    print(f"INVALID: proof for client {pod.target_id} failed verification")
    return EXIT_RUNTIME


def _cmd_sweep(args) -> int:
    manifest = run_sweep(args.config_dir)
    print(f"wrote {manifest['sweep_dir']} ({len(manifest['runs'])} runs)")
    return EXIT_OK


def _cmd_calibrate(args) -> int:
    sigma = calibrate_sigma(args.epsilon, args.delta, args.rounds)
    achieved, alpha = epsilon_for_sigma(sigma, args.delta, args.rounds)
    print(
        json.dumps(
            {
                "epsilon": args.epsilon,
                "delta": args.delta,
                "rounds": args.rounds,
                "sigma": sigma,
                "sigma_squared": sigma * sigma,
                "achieved_epsilon": achieved,
                "alpha": alpha,
            },
            indent=2,
            sort_keys=True,
        )
    )
    return EXIT_OK


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "run": _cmd_run,
        "verify-pod": _cmd_verify_pod,
        "sweep": _cmd_sweep,
        "calibrate": _cmd_calibrate,
    }
    try:
        return handlers[args.command](args)
    except (ConfigError, CalibrationError, FormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (PodflError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
