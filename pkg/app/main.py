"""
Aniso Toolkit - Command Line Entry Point

Every subcommand prints a JSON document on stdout and exits with
0 PASS, 1 FAIL, 2 INCONCLUSIVE, 3 config/domain error, 4 internal error.
"""
import argparse
import json
import logging
import sys
from typing import Any, Dict, List, Optional

from pydantic import ValidationError

from app import __version__
from app.config import settings
from app.schemas.experiment import ExperimentConfig, load_experiment_config
from app.services.boxes import box_service
from app.services.db import run_registry
from app.services.kernels import kernel_service
from app.services.runner import experiment_runner
from app.services.scaling import scaling_service
from app.utils.errors import AnisoError, ConfigError
from app.utils.logger import init_logging

logger = logging.getLogger("main")

# argparse dest -> ExperimentConfig field, for options shared by several subcommands
CONFIG_OPTIONS = (
    "phi", "alpha_lower", "alpha_upper", "c_lower", "c_upper",
    "dim", "process", "multiplier", "lambda_bound", "truncation",
    "eps", "t", "horizon", "small_jump_mode", "n_paths", "seed", "start",
    "t_list", "r_list", "radii", "min_count", "max_spread", "control_factor",
    "control_alpha", "control_margin", "small_jump_tolerance",
    "scales", "nodes", "point", "center", "kappa",
    "out", "csv_out", "paths_out", "events", "n_workers",
)


def _emit(document: Any):
    sys.stdout.write(json.dumps(document, sort_keys=True, indent=2) + "\n")


def _cli_values(args: argparse.Namespace) -> Dict[str, Any]:
    values: Dict[str, Any] = {}
    for key in CONFIG_OPTIONS:
        value = getattr(args, key, None)
        if value is not None and value is not False:
            values[key] = value
    return values


def _config_from_args(kind: str, args: argparse.Namespace) -> ExperimentConfig:
    """Flags alone, or a config file with the flags given on top of it"""
    values = _cli_values(args)
    config_path = getattr(args, "config", None)
    if config_path:
        return load_experiment_config(config_path, {**values, "experiment": kind})
    try:
        return ExperimentConfig(experiment=kind, **values)
    except ValidationError as e:
        first = e.errors()[0]
        message = first.get("msg", "invalid value")
        loc = ".".join(str(part) for part in first.get("loc", ()))
        if not loc:
            # model-level messages start with the key they concern
            key, _, reason = message.removeprefix("Value error, ").partition(": ")
            loc, message = (key, reason) if key in ExperimentConfig.model_fields else ("config", message)
        raise ConfigError(f"--{loc.replace('_', '-')}: {message}") from None


def _run(config: ExperimentConfig) -> int:
    report = experiment_runner.run(config)
    sys.stdout.write(report.to_json())
    return report.verdict.exit_status


# ============ Handlers ============

def cmd_phi_check(args: argparse.Namespace) -> int:
    return _run(_config_from_args("phi-check", args))


def cmd_envelope(args: argparse.Namespace) -> int:
    phi = _config_from_args("phi-check", args).certified_phi()
    x, y = _floats(args.x), _floats(args.y)
    _emit({
        "t": args.t,
        "kappa": scaling_service.inverse(phi, args.t),
        "envelope_x": kernel_service.envelope_x(args.t, x, y, phi).model_dump(mode="json"),
        "envelope_z": kernel_service.envelope_z(args.t, x, y, phi).model_dump(mode="json"),
    })
    return 0


def cmd_simulate(args: argparse.Namespace) -> int:
    return _run(_config_from_args("simulate", args))


def cmd_verify(args: argparse.Namespace) -> int:
    return _run(_config_from_args(args.check, args))


def cmd_ladder(args: argparse.Namespace) -> int:
    return _run(_config_from_args("ladder", args))


def cmd_nash(args: argparse.Namespace) -> int:
    return _run(_config_from_args("nash", args))


def cmd_boxes(args: argparse.Namespace) -> int:
    if args.action == "count":
        _emit({"k": args.k, "d": args.d, "count": box_service.box_count(args.k, args.d)})
        return 0
    return _run(_config_from_args("boxes", args))


def cmd_run(args: argparse.Namespace) -> int:
    overrides = {}
    if args.out:
        overrides["out"] = args.out
    return _run(load_experiment_config(args.config, overrides))


def cmd_runs(args: argparse.Namespace) -> int:
    if not run_registry.enabled:
        raise ConfigError("run registry disabled: set ANISO_REGISTRY_PATH")
    _emit(run_registry.list_runs(limit=args.limit))
    return 0


def _floats(text: str) -> List[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"not a comma-separated list of numbers: {text!r}") from None


# ============ Parser ============

def _add_phi(parser: argparse.ArgumentParser, required: bool = True):
    parser.add_argument("--phi", required=required, help="family: power:alpha=1,scale=1 | sum:(c=1,a=0.5)+(c=1,a=1.5) | table:file.csv")
    parser.add_argument("--alpha-lower", dest="alpha_lower", type=float)
    parser.add_argument("--alpha-upper", dest="alpha_upper", type=float)
    parser.add_argument("--c-lower", dest="c_lower", type=float)
    parser.add_argument("--c-upper", dest="c_upper", type=float)


def _add_kernel(parser: argparse.ArgumentParser):
    parser.add_argument("--dim", type=int)
    parser.add_argument("--process", choices=["z", "x"])
    parser.add_argument("--multiplier", help="constant:c=1 | checkerboard:period=1,low=0.5,high=2 | wave:frequency=1,amplitude=0.5")
    parser.add_argument("--lambda-bound", dest="lambda_bound", type=float)
    parser.add_argument("--truncation", type=float)


def _add_simulation(parser: argparse.ArgumentParser, required: bool = True):
    parser.add_argument("--eps", type=float, required=required, help="small-jump cutoff")
    parser.add_argument("--t", type=float)
    parser.add_argument("--horizon", type=float)
    parser.add_argument("--small-jump-mode", dest="small_jump_mode", choices=["drop", "gaussian"])
    parser.add_argument("--n-paths", dest="n_paths", type=int)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--start", help="comma-separated start point")
    parser.add_argument("--workers", dest="n_workers", type=int)


def _add_config(parser: argparse.ArgumentParser):
    parser.add_argument("--config", help="config file; flags given alongside override its keys")


def _add_outputs(parser: argparse.ArgumentParser):
    parser.add_argument("--out", help="write the JSON report here")
    parser.add_argument("--csv", dest="csv_out", help="write the table rows as CSV")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="aniso",
        description="Simulation and verification of anisotropic jump processes",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    phi = sub.add_parser("phi", help="scaling-function checks")
    phi_sub = phi.add_subparsers(dest="action", required=True)
    check = phi_sub.add_parser("check", help="weak-scaling certificate and Lévy integrability")
    _add_phi(check)
    _add_outputs(check)
    check.set_defaults(handler=cmd_phi_check)

    envelope = sub.add_parser("envelope", help="heat-kernel envelope at one pair of points")
    _add_phi(envelope)
    envelope.add_argument("--t", type=float, required=True)
    envelope.add_argument("--x", required=True, help="comma-separated point")
    envelope.add_argument("--y", required=True, help="comma-separated point")
    envelope.set_defaults(handler=cmd_envelope)

    simulate = sub.add_parser("simulate", help="simulate paths, optionally dumping NDJSON")
    _add_config(simulate)
    _add_phi(simulate, required=False)
    _add_kernel(simulate)
    _add_simulation(simulate, required=False)
    simulate.add_argument("--out", dest="paths_out", help="NDJSON path summaries, one line per path")
    simulate.add_argument("--report", dest="out", help="write the JSON report here")
    simulate.add_argument("--csv", dest="csv_out", help="write the table rows as CSV")
    simulate.add_argument("--events", action="store_true", help="include the event lists")
    simulate.set_defaults(handler=cmd_simulate)

    verify = sub.add_parser("verify", help="Monte-Carlo verification")
    verify_sub = verify.add_subparsers(dest="check", required=True)
    for name, help_text in (
        ("envelope", "empirical density against the envelope, with wrong-time and wrong-φ controls"),
        ("exit", "exit-time tail P(τ ≤ t) over r·φ⁻¹(t) balls"),
        ("moments", "E[τ] and E[τ²] against φ(r)"),
        ("diag", "on-diagonal density scaling in t"),
    ):
        check = verify_sub.add_parser(name, help=help_text)
        _add_config(check)
        _add_phi(check, required=False)
        _add_kernel(check)
        _add_simulation(check, required=False)
        _add_outputs(check)
        check.add_argument("--min-count", dest="min_count", type=int)
        check.add_argument("--max-spread", dest="max_spread", type=float)
        if name == "envelope":
            check.add_argument("--control-factor", dest="control_factor", type=float)
            check.add_argument("--control-alpha", dest="control_alpha", type=float)
            check.add_argument("--control-margin", dest="control_margin", type=float)
        if name in ("envelope", "diag"):
            check.add_argument("--small-jump-tolerance", dest="small_jump_tolerance", type=float)
        if name == "exit":
            check.add_argument("--r-list", dest="r_list")
        if name == "moments":
            check.add_argument("--radii")
        if name == "diag":
            check.add_argument("--t-list", dest="t_list")
        check.set_defaults(handler=cmd_verify)

    ladder = sub.add_parser("ladder", help="θ table and upgrade schedule")
    ladder.add_argument("--d", dest="dim", type=int, required=True)
    ladder.add_argument("--alpha-lower", dest="alpha_lower", type=float, required=True)
    ladder.add_argument("--alpha-upper", dest="alpha_upper", type=float, required=True)
    ladder.add_argument("--phi", help="also check the dyadic decay bounds of this family")
    _add_outputs(ladder)
    ladder.set_defaults(handler=cmd_ladder)

    boxes = sub.add_parser("boxes", help="dyadic boxes")
    boxes_sub = boxes.add_subparsers(dest="action", required=True)
    classify = boxes_sub.add_parser("classify", help="box of a point")
    classify.add_argument("--point", required=True)
    classify.add_argument("--center")
    classify.add_argument("--kappa", type=float)
    _add_outputs(classify)
    classify.set_defaults(handler=cmd_boxes)
    count = boxes_sub.add_parser("count", help="number of boxes at level k")
    count.add_argument("--k", type=int, required=True)
    count.add_argument("--d", type=int, required=True)
    count.set_defaults(handler=cmd_boxes)

    nash = sub.add_parser("nash", help="Nash-ratio spot check of the Dirichlet energy")
    _add_phi(nash)
    _add_kernel(nash)
    nash.add_argument("--scales")
    nash.add_argument("--nodes", type=int)
    nash.add_argument("--max-spread", dest="max_spread", type=float)
    _add_outputs(nash)
    nash.set_defaults(handler=cmd_nash)

    run = sub.add_parser("run", help="run the experiment described by a config file")
    run.add_argument("config")
    run.add_argument("--out", help="override the report path")
    run.set_defaults(handler=cmd_run)

    runs = sub.add_parser("runs", help="list recorded runs")
    runs.add_argument("--limit", type=int, default=20)
    runs.set_defaults(handler=cmd_runs)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.verbose:
        settings.debug = True
    init_logging()

    try:
        return args.handler(args)
    except AnisoError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return e.exit_status
    except ValidationError as e:
        logger.error(f"ValidationError: {e}")
        return 3
    except Exception as e:
        logger.exception(f"internal error: {e}")
        return 4


if __name__ == "__main__":
    sys.exit(main())
