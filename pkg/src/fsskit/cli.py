import argparse
import json
import sys
from pathlib import Path

from . import __version__
from .config import get_config_path, get_logger, init_config, load_config, parse_override_pairs, setup_logging
from .errors import FsskitError, SpecError
from .health import check_health, format_system_info, get_system_info
from .runner import run_scenario
from .scenario import PIPELINES, QUANTITIES, bundled_scenarios, load_scenario

logger = get_logger("CLI")

SCENARIO_COMMANDS = {
    "run": "Run a scenario with the pipeline it names",
    "sectors": "Print the sector decomposition (JSON lines) and write it to CSV",
    "fss": "Build fundamental systems of solutions over the sampling plan",
    "largesector": "Build solutions analytic on a large sector",
    "sturm": "Solve the second-order pencil over a list of z",
    "sweep-theta": "Tabulate θ_α(λ), γ_α(λ) and Ψ over the sampling plan",
    "sweep": "Tabulate one quantity over the sampling plan",
    "verify": "Run all certificates and write a verification report",
}


def _scenario_parent() -> argparse.ArgumentParser:
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument("scenario", help="Scenario JSON file or bundled scenario name")
    parent.add_argument("--config", type=Path, default=None, help="Configuration file (default: user config)")
    parent.add_argument("--jobs", type=int, default=1, help="Worker threads (default: 1)")
    parent.add_argument("--out", type=Path, default=None, help="Output directory")
    parent.add_argument(
        "--tol-override",
        action="append",
        default=[],
        metavar="KEY=VAL",
        help="Override a tolerance, e.g. picard.eps_fix=1e-9 (repeatable)",
    )
    return parent


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fsskit",
        description="fsskit - fundamental systems of solutions for y' = (λρB + A + C)y on the half-line",
    )
    parser.add_argument("--version", action="store_true", help="Print version and exit")
    parser.add_argument("--debug", action="store_true", help="Enable debug logging")

    subparsers = parser.add_subparsers(dest="command", help="Available commands")
    parent = _scenario_parent()
    for name, help_text in SCENARIO_COMMANDS.items():
        sub = subparsers.add_parser(name, parents=[parent], help=help_text)
        if name == "largesector":
            sub.add_argument("--m", type=int, default=None, help="Large-sector index m (overrides plan.m)")
        if name == "sweep":
            sub.add_argument("--quantity", choices=QUANTITIES, default=None, help="Quantity to tabulate")

    subparsers.add_parser("scenarios", help="List bundled scenarios")

    health_parser = subparsers.add_parser("health", help="Check dependencies")
    health_parser.add_argument("--json", action="store_true", help="Output health check as JSON")

    subparsers.add_parser("info", help="Show system information")

    config_parser = subparsers.add_parser("config", help="Manage configuration")
    config_subparsers = config_parser.add_subparsers(dest="config_action", help="Config actions")
    config_subparsers.add_parser("show", help="Show current configuration")
    config_subparsers.add_parser("init", help="Initialize default configuration file")
    config_subparsers.add_parser("path", help="Show configuration file path")
    return parser


def _run(args: argparse.Namespace) -> int:
    base = load_config(args.config)
    setup_logging(args.debug, base)
    scenario = load_scenario(args.scenario)
    overrides = parse_override_pairs(args.tol_override)

    pipeline = scenario.pipeline if args.command == "run" else args.command
    if pipeline not in PIPELINES:
        raise SpecError(f"Unknown pipeline {pipeline}")
    if pipeline == "sturm" and scenario.pencil is None:
        raise SpecError("sturm needs a pencil scenario")
    if getattr(args, "m", None) is not None:
        scenario.plan.m = args.m
    if pipeline == "largesector" and scenario.plan.m is None:
        raise SpecError("largesector needs plan.m or --m")
    if getattr(args, "quantity", None):
        scenario.plan.quantity = args.quantity

    result = run_scenario(scenario, args.out, args.jobs, overrides, base_config=base, pipeline=pipeline)
    if pipeline == "sectors":
        for record in result.report["sections"]["sectors"]["sectors"]:
            record = dict(record, permutation=[int(p) for p in record["permutation"].split()])
            print(json.dumps({k: record[k] for k in ("kappa", "beta_lo", "beta_hi", "permutation")}))
    else:
        for path in result.files:
            print(path)
    if result.exit_code:
        logger.error(f"Scenario {scenario.name} failed with exit code {result.exit_code}")
    return result.exit_code


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)

    if args.version:
        print(__version__)
        return 0

    if args.command in SCENARIO_COMMANDS:
        try:
            return _run(args)
        except FsskitError as e:
            print(f"Error: {e}", file=sys.stderr)
            hint = getattr(e, "hint", None)
            if hint is not None:
                print(f"Hint: contraction holds for |λ| ≥ {hint:.6g}", file=sys.stderr)
            return e.exit_code

    if args.command == "scenarios":
        for name in bundled_scenarios():
            print(name)
        return 0

    if args.command == "health":
        health = check_health()
        if args.json:
            print(json.dumps(health, indent=2))
        else:
            print(f"Health Status: {health['status']}")
            print()
            print("Dependency Checks:")
            for dep, available in health["checks"]["dependencies"].items():
                status = "✓" if available else "✗"
                print(f"  {status} {dep}")
            if health.get("missing_dependencies"):
                print()
                print("Missing dependencies:")
                for dep in health["missing_dependencies"]:
                    print(f"  - {dep}")
                print()
                print("Run 'pip install -e .' to install")
                return 1
        return 0 if health["status"] == "healthy" else 1

    if args.command == "info":
        print(f"fsskit version {__version__}")
        print()
        print(format_system_info(get_system_info()))
        return 0

    if args.command == "config":
        if args.config_action == "show":
            print(json.dumps(load_config(), indent=2))
            return 0
        elif args.config_action == "init":
            try:
                path = init_config()
                print(f"Configuration file created at: {path}")
                return 0
            except FileExistsError as e:
                print(f"Error: {e}", file=sys.stderr)
                print("Use 'fsskit-cli config show' to view current config", file=sys.stderr)
                return 1
        elif args.config_action == "path":
            path = get_config_path()
            exists = "exists" if path.exists() else "does not exist"
            print(f"{path} ({exists})")
            return 0
        parser.print_help()
        return 0

    parser.print_help()
    return 0


if __name__ == "__main__":
    sys.exit(main())
