"""Command-line interface for agent-network reachability"""

import sys
import argparse
import dataclasses
import logging
from pathlib import Path
from typing import Dict, List, Optional

from .agent_network import AgentNetwork, transition_rates
from .config import SCALES, FixedPointConfig, GridSpec, RunConfig
from .envelope import build_envelope
from .exceptions import ModelFormatError, ModelValidationError, NotDivisible, OutputError, ReachError
from .model_io import load_model, model_to_dict
from .models import example_model
from .ode import nominal_trajectory
from .output import OutputGenerator, extremal_summary
from .pontryagin import Direction, TargetSpec, solve_extremal, switching_tolerance
from .progress import ProgressReporter
from .reachability import fixed_point_bound, refine_grid
from .validator import ModelValidator, has_errors

LOGGER = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_MODEL = 2
EXIT_COMPUTATION = 3
EXIT_NOT_CERTIFIED = 4


class ArgumentParser(argparse.ArgumentParser):
    """Usage errors exit with EXIT_USAGE instead of argparse's 2"""

    def error(self, message: str) -> None:
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_USAGE)


def _common_options() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        'model',
        nargs='?',
        default=None,
        help='Path to the model JSON file'
    )
    common.add_argument(
        '--example',
        type=str,
        default=None,
        help='Built-in model instead of a file: sirs:D or gps:D'
    )
    common.add_argument(
        '--example-bound',
        type=float,
        default=0.05,
        help='Parameter bound of the built-in model (default: 0.05)'
    )
    common.add_argument(
        '--step',
        type=float,
        default=None,
        help='Integration step (default: horizon/3000)'
    )
    common.add_argument(
        '--threads',
        type=int,
        default=None,
        help='Worker threads (default: $ANREACH_THREADS or CPU count)'
    )
    common.add_argument(
        '--adaptive',
        action='store_true',
        help='Use adaptive RK45 for the nominal solve'
    )
    common.add_argument(
        '--no-confirm',
        action='store_true',
        help='Skip confirmation when overwriting existing files'
    )
    common.add_argument(
        '-v', '--verbose',
        action='count',
        default=0,
        help='Increase log verbosity (-v info, -vv debug)'
    )
    return common


def parse_arguments(argv: Optional[List[str]] = None) -> argparse.Namespace:
    """Parse command-line arguments

    Returns:
        Parsed arguments namespace
    """
    parser = ArgumentParser(
        prog='anreach',
        description='Certified reach tubes for agent networks with uncertain parameters',
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  %(prog)s validate model.json --dump-envelope
  %(prog)s simulate --example sirs:1 -o sirs.csv
  %(prog)s extremal --example sirs:1 --target I1 --time 3 --direction min --eps 0.1
  %(prog)s bound --example gps:2 --dt 0.04 --eta 1e-5
        """
    )
    common = _common_options()
    sub = parser.add_subparsers(dest='command', parser_class=ArgumentParser)
    sub.required = True

    p_validate = sub.add_parser('validate', parents=[common], help='Check a model and report diagnostics')
    p_validate.add_argument('--dump-envelope', action='store_true', help='Print the envelope listing')
    p_validate.add_argument('--write-model', type=str, default=None, help='Write the model JSON to this path')

    p_simulate = sub.add_parser('simulate', parents=[common], help='Integrate the nominal model')
    p_simulate.add_argument('--tend', type=float, default=None, help='End time (default: horizon)')
    p_simulate.add_argument('-o', '--out', type=str, default=None, help='Trajectory CSV path')

    p_extremal = sub.add_parser('extremal', parents=[common], help='Solve one extremal problem')
    p_extremal.add_argument('--target', type=str, required=True, help='State name or weights "{S:1,I:1}"')
    p_extremal.add_argument('--time', type=float, required=True, help='Target time')
    p_extremal.add_argument('--direction', choices=['min', 'max'], default='max', help='Optimization direction')
    p_extremal.add_argument('--eps', type=float, default=0.0, help='State-deviation bound (default: 0)')
    p_extremal.add_argument('--xi', type=float, default=1e-4, help='Value tolerance for the switching band')
    p_extremal.add_argument('-o', '--out', type=str, default=None, help='Trace CSV path')

    p_bound = sub.add_parser('bound', parents=[common], help='Compute a certified reach tube')
    p_bound.add_argument('--dt', type=float, nargs='+', default=[0.04], help='Target grid spacing(s)')
    p_bound.add_argument('--eta', type=float, default=1e-3, help='Additive slack per iterate (default: 1e-3)')
    p_bound.add_argument('--max-iter', type=int, default=50, help='Maximum Psi evaluations (default: 50)')
    p_bound.add_argument('--scale', choices=list(SCALES), default='unit', help='Deviation scaling')
    p_bound.add_argument('-o', '--out', type=str, default=None, help='Tube CSV path')
    p_bound.add_argument('--summary', type=str, default=None, help='Run summary JSON path')

    return parser.parse_args(argv)


def configure_logging(verbosity: int) -> None:
    level = logging.WARNING if verbosity <= 0 else logging.INFO if verbosity == 1 else logging.DEBUG
    logging.basicConfig(level=level, format='%(levelname)s %(name)s: %(message)s')


def parse_target(text: str) -> Dict[str, float]:
    """'I' or '{S:1,I:1,R:1}' (JSON quoting optional)

    Raises:
        ValueError: If the weights cannot be parsed
    """
    text = text.strip()
    if not text.startswith('{'):
        return {text: 1.0}
    if not text.endswith('}'):
        raise ValueError(f"Unbalanced braces in target '{text}'")
    weights: Dict[str, float] = {}
    for item in filter(None, (part.strip() for part in text[1:-1].split(','))):
        name, sep, value = item.partition(':')
        if not sep:
            raise ValueError(f"Expected name:weight, got '{item}'")
        weights[name.strip().strip('"\'')] = float(value)
    return weights


def load_network(config: RunConfig) -> AgentNetwork:
    """Load the model file or build the built-in example

    Raises:
        ValueError: For a bad example spec or unusable file path
        ModelFormatError: For malformed model files
    """
    if config.example is not None:
        return example_model(config.example, config.example_bound)
    is_valid, error_msg = ModelValidator.validate_file(config.model_path)
    if not is_valid:
        raise ValueError(error_msg)
    return load_model(config.model_path)


def _path(value: Optional[str]) -> Optional[Path]:
    return Path(value) if value else None


def cmd_validate(args: argparse.Namespace, config: RunConfig, an: AgentNetwork) -> int:
    diagnostics = ModelValidator.validate(an, config.integrator())
    for diagnostic in diagnostics:
        print(diagnostic)

    if args.write_model:
        saved = OutputGenerator(config.confirm_overwrite).save_json(
            model_to_dict(an), Path(args.write_model), "model"
        )
        if saved:
            print(f"Model written to {args.write_model}")

    if has_errors(diagnostics):
        print("\n✗ Model is invalid")
        return EXIT_MODEL

    if args.dump_envelope:
        try:
            V0, _ = nominal_trajectory(an, config.integrator())
            print(build_envelope(an, V0).describe())
        except ReachError as e:
            print(f"\n✗ Envelope construction failed: {e}")
            return EXIT_COMPUTATION

    print("\n✓ Model is valid")
    return EXIT_OK


def cmd_simulate(args: argparse.Namespace, config: RunConfig, an: AgentNetwork) -> int:
    tend = an.horizon if args.tend is None else args.tend
    if not 0 < tend <= an.horizon * (1.0 + 1e-12):
        print(f"Invalid argument: --tend must lie in (0, {an.horizon}], got {tend}")
        return EXIT_USAGE

    trajectory, eps_prime = nominal_trajectory(dataclasses.replace(an, horizon=tend), config.integrator())
    output_path = config.get_output_path('simulate')
    if OutputGenerator(config.confirm_overwrite).save_trajectory(trajectory, output_path):
        print(f"✓ Trajectory saved to {output_path}")
    else:
        print("Save cancelled by user.")
    print(f"Minimum concentration eps' = {eps_prime:.6g}")
    return EXIT_OK


def cmd_extremal(args: argparse.Namespace, config: RunConfig, an: AgentNetwork) -> int:
    try:
        target = TargetSpec(parse_target(args.target), args.time, Direction(args.direction))
        target.vector(an.states)
    except ValueError as e:
        print(f"Invalid argument: {e}")
        return EXIT_USAGE
    if args.eps < 0 or args.time > an.horizon * (1.0 + 1e-12):
        print("Invalid argument: --eps must be non-negative and --time within the horizon")
        return EXIT_USAGE

    integrator = config.integrator()
    V0, _ = nominal_trajectory(an, integrator)
    env = build_envelope(an, V0)
    solution = solve_extremal(env, target, args.eps, integrator)

    output_path = config.get_output_path('extremal')
    if OutputGenerator(config.confirm_overwrite).save_extremal(solution, output_path):
        print(f"✓ Traces saved to {output_path}")
    for line in extremal_summary(solution):
        print(line)

    zeta = switching_tolerance(env, args.xi, target.time, args.eps)
    print(f"switching band zeta for xi={args.xi:g}: {zeta:.6g}")
    for name, margin in solution.switching_margin.items():
        if margin < zeta:
            LOGGER.warning("Switching margin of %s (%.3g) lies inside the band %.3g", name, margin, zeta)
    return EXIT_OK


def cmd_bound(args: argparse.Namespace, config: RunConfig, an: AgentNetwork) -> int:
    fp_config = FixedPointConfig(
        eta=args.eta,
        max_iter=args.max_iter,
        scale=args.scale,
        threads=config.threads,
        integrator=config.integrator(),
    )
    is_valid, error_msg = fp_config.validate()
    for dt in args.dt:
        if is_valid:
            is_valid, error_msg = GridSpec(dt).validate()
    if not is_valid:
        print(f"Configuration error: {error_msg}")
        return EXIT_USAGE

    progress = ProgressReporter(fp_config.max_iter, config.example or str(config.model_path))
    progress.start()
    summary: Dict[str, object] = {}
    if len(args.dt) > 1:
        try:
            records = refine_grid(an, fp_config, args.dt, progress.update)
        except ValueError as e:
            progress.error(str(e))
            return EXIT_USAGE
        print("\n     dt  status            eps*  half width  rel. change")
        for record in records:
            eps_text = f"{record.eps_star:.6g}" if record.eps_star is not None else "-"
            width_text = f"{record.tube.half_width:.6g}" if record.eps_star is not None else "-"
            change = f"{record.relative_change:.2%}" if record.relative_change is not None else "-"
            print(f"{record.dt:7.4g}  {record.status.value:14s}  {eps_text:>10s}  {width_text:>10s}  {change:>11s}")
        tube = records[-1].tube
        summary["refinement"] = [
            {"dt": r.dt, "status": r.status.value, "eps_star": r.eps_star, "relative_change": r.relative_change}
            for r in records
        ]
    else:
        tube = fixed_point_bound(an, GridSpec(args.dt[0]), fp_config, progress.update)

    summary = {**tube.summary(), **summary}
    output = OutputGenerator(config.confirm_overwrite)
    output_path = config.get_output_path('bound')
    saved = output.save_tube(tube, output_path)
    summary_path = config.summary_path or output_path.with_suffix('.json')
    output.save_json(summary, summary_path)

    if not tube.certified:
        progress.error(f"{tube.status.value}: {tube.message}")
        return EXIT_NOT_CERTIFIED
    progress.complete(tube.eps_star, tube.half_width, output_path if saved else None)
    return EXIT_OK


COMMANDS = {
    'validate': cmd_validate,
    'simulate': cmd_simulate,
    'extremal': cmd_extremal,
    'bound': cmd_bound,
}


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point for the CLI

    Returns:
        Exit code (0 success, 1 usage, 2 model, 3 computation, 4 not certified)
    """
    try:
        args = parse_arguments(argv)
        configure_logging(args.verbose)

        config = RunConfig(
            model_path=_path(args.model),
            example=args.example,
            example_bound=args.example_bound,
            output_path=_path(getattr(args, 'out', None)),
            summary_path=_path(getattr(args, 'summary', None)),
            step=args.step,
            threads=args.threads,
            confirm_overwrite=not args.no_confirm,
            adaptive=args.adaptive,
        )

        # Validate configuration
        is_valid, error_msg = config.validate()
        if not is_valid:
            print(f"Configuration error: {error_msg}")
            return EXIT_USAGE

        try:
            an = load_network(config)
        except ValueError as e:
            print(f"Invalid argument: {e}")
            return EXIT_USAGE
        except ModelFormatError as e:
            print(f"Model error: {e}")
            return EXIT_MODEL

        if args.command != 'validate':
            structural = ModelValidator.check_structure(an)
            if has_errors(structural):
                for diagnostic in structural:
                    print(diagnostic)
                return EXIT_MODEL
            try:
                transition_rates(an)
            except (NotDivisible, ModelValidationError) as e:
                print(f"Model error: {e}")
                return EXIT_MODEL

        try:
            return COMMANDS[args.command](args, config, an)
        except OutputError as e:
            print(f"Output error: {e}")
            return EXIT_COMPUTATION
        except ReachError as e:
            print(f"Computation failed: {e}")
            return EXIT_COMPUTATION

    except KeyboardInterrupt:
        print("\n\nCancelled by user.")
        return 130

    except Exception as e:
        print(f"Unexpected error: {e}")
        return 255


if __name__ == '__main__':
    sys.exit(main())
