#!/usr/bin/env python3
"""Batch reach-tube runs over the built-in SIRS and GPS families"""

import argparse
import sys
import time
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from src.config import SCALES, FixedPointConfig, GridSpec, IntegratorConfig
from src.envelope import UncertaintyKind, build_envelope
from src.exceptions import ReachError
from src.models import example_model
from src.ode import nominal_trajectory
from src.output import OutputGenerator
from src.reachability import fixed_point_bound


def parse_range(text: str) -> List[int]:
    """'1-4' or '1,2,5' to a list of class counts

    Raises:
        ValueError: If the range is empty or malformed
    """
    values: List[int] = []
    for part in text.split(','):
        part = part.strip()
        if '-' in part:
            low, high = (int(v) for v in part.split('-', 1))
            values.extend(range(low, high + 1))
        elif part:
            values.append(int(part))
    if not values or min(values) < 1:
        raise ValueError(f"Invalid class range '{text}'")
    return values


def run_single(
    spec: str,
    bound: float,
    dt: float,
    config: FixedPointConfig,
    verbose: bool = True
) -> Tuple[bool, Dict[str, object]]:
    """Build one example model and compute its tube

    Args:
        spec: Example spec such as "sirs:2"
        bound: Parameter bound of the example
        dt: Target grid spacing
        config: Fixed-point configuration
        verbose: Print per-iteration progress

    Returns:
        Tuple of (certified, summary row)
    """
    row: Dict[str, object] = {"model": spec, "bound": bound, "dt": dt}
    try:
        an = example_model(spec, bound)
        nominal = nominal_trajectory(an, config.integrator)
        env = build_envelope(an, nominal[0])
        counts = env.counts_by_kind()
        row["n_parameter"] = counts.get(UncertaintyKind.PARAMETER, 0)
        row["n_state"] = counts.get(UncertaintyKind.STATE, 0)
        row["n_product"] = counts.get(UncertaintyKind.PRODUCT, 0)
        row["n_reciprocal"] = counts.get(UncertaintyKind.RECIPROCAL, 0)

        def report(k: int, eps: float, psi: float) -> None:
            if verbose:
                print(f"  iteration {k + 1}: eps = {eps:.6g}, Psi = {psi:.6g}")

        tube = fixed_point_bound(an, GridSpec(dt), config, report, nominal=nominal, envelope=env)
        row.update(tube.summary())
        row["message"] = tube.message
        return tube.certified, row

    except (ReachError, ValueError) as e:
        row["status"] = "Error"
        row["message"] = str(e)
        return False, row


def batch_tables(
    families: List[str],
    classes: List[int],
    bounds: List[float],
    dts: List[float],
    config: FixedPointConfig,
    output_dir: Optional[Path] = None,
    verbose: bool = True
) -> Tuple[int, int, int]:
    """Run every (family, D, bound, dt) combination

    Args:
        families: Subset of "sirs" and "gps"
        classes: Class counts D
        bounds: Parameter bounds
        dts: Grid spacings
        config: Fixed-point configuration shared by all runs
        output_dir: Where per-run summary JSON files go, if given
        verbose: Print progress messages

    Returns:
        Tuple of (total, certified, failed)
    """
    runs = [(f, d, b, dt) for f in families for d in classes for b in bounds for dt in dts]
    print(f"Running {len(runs)} configuration(s)")
    if output_dir is not None:
        print(f"Output directory: {output_dir}")
    print()

    output = OutputGenerator(confirm_overwrite=False)
    rows: List[Dict[str, object]] = []
    certified = 0
    failed = 0
    start_time = time.time()

    for idx, (family, d, bound, dt) in enumerate(runs, 1):
        spec = f"{family}:{d}"
        if verbose:
            print(f"[{idx}/{len(runs)}] {spec} bound={bound:g} dt={dt:g}")

        success, row = run_single(spec, bound, dt, config, verbose=verbose)
        rows.append(row)

        if success:
            certified += 1
            if verbose:
                print(f"  ✓ eps* = {row['eps_star']:.6g}, half width = {row['half_width']:.6g} in {row['wall_time_s']:.2f}s")
        else:
            failed += 1
            if verbose:
                print(f"  ✗ {row['status']}: {row['message']}")

        if output_dir is not None:
            name = f"{family}{d}_b{bound:g}_dt{dt:g}.json"
            output.save_json(row, output_dir / name)

        if verbose:
            print()

    elapsed_time = time.time() - start_time

    print("=" * 60)
    print("Reach Tube Summary")
    print("=" * 60)
    print(f"{'model':8s} {'bound':>6s} {'dt':>6s} {'|u|':>5s} {'status':>14s} {'eps*':>10s} {'width':>10s} {'time':>8s}")
    for row in rows:
        n_unc = sum(int(row.get(k, 0)) for k in ("n_parameter", "n_state", "n_product", "n_reciprocal"))
        eps_star = row.get("eps_star")
        eps_text = f"{eps_star:.4g}" if eps_star is not None else "-"
        width = row.get("half_width")
        width_text = f"{width:.4g}" if width is not None else "-"
        wall = row.get("wall_time_s")
        wall_text = f"{wall:.2f}s" if wall is not None else "-"
        print(
            f"{row['model']:8s} {row['bound']:6g} {row['dt']:6g} {n_unc:5d} "
            f"{row['status']:>14s} {eps_text:>10s} {width_text:>10s} {wall_text:>8s}"
        )
    print("-" * 60)
    print(f"Total runs:       {len(runs)}")
    print(f"Certified:        {certified}")
    print(f"Not certified:    {failed}")
    print(f"Processing time:  {elapsed_time:.2f} seconds")
    print("=" * 60)

    return len(runs), certified, failed


def main() -> int:
    """Main entry point"""
    parser = argparse.ArgumentParser(
        description='Batch reach-tube runs over the SIRS and GPS example families',
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  %(prog)s                                  # SIRS and GPS, D = 1..2
  %(prog)s --family sirs -D 1-5             # SIRS only, D = 1..5
  %(prog)s --family gps -D 2,4 --bound 0.1  # GPS with a wider bound
  %(prog)s --dt 0.04 0.02 -o summaries      # Two grids, JSON per run
        """
    )

    parser.add_argument(
        '--family',
        choices=['sirs', 'gps', 'all'],
        default='all',
        help='Model family (default: all)'
    )

    parser.add_argument(
        '-D', '--classes',
        type=str,
        default='1-2',
        help='Class counts, e.g. 1-5 or 1,3 (default: 1-2)'
    )

    parser.add_argument(
        '--bound',
        type=float,
        nargs='+',
        default=[0.05],
        help='Parameter bound(s) (default: 0.05)'
    )

    parser.add_argument(
        '--dt',
        type=float,
        nargs='+',
        default=[0.04],
        help='Target grid spacing(s) (default: 0.04)'
    )

    parser.add_argument(
        '--eta',
        type=float,
        default=1e-3,
        help='Additive slack per iterate (default: 1e-3)'
    )

    parser.add_argument(
        '--max-iter',
        type=int,
        default=50,
        help='Maximum Psi evaluations per run (default: 50)'
    )

    parser.add_argument(
        '--scale',
        choices=list(SCALES),
        default='unit',
        help='Deviation scaling (default: unit)'
    )

    parser.add_argument(
        '--step',
        type=float,
        default=None,
        help='Integration step (default: horizon/3000)'
    )

    parser.add_argument(
        '--threads',
        type=int,
        default=None,
        help='Worker threads (default: $ANREACH_THREADS or CPU count)'
    )

    parser.add_argument(
        '-o', '--output-dir',
        type=str,
        default=None,
        help='Directory for per-run summary JSON files'
    )

    parser.add_argument(
        '--quiet',
        action='store_true',
        help='Suppress progress messages'
    )

    args = parser.parse_args()

    try:
        classes = parse_range(args.classes)
    except ValueError as e:
        print(f"Error: {e}")
        return 1

    if any(b < 0 for b in args.bound):
        print(f"Error: Bounds must be non-negative, got {args.bound}")
        return 1

    config = FixedPointConfig(
        eta=args.eta,
        max_iter=args.max_iter,
        scale=args.scale,
        threads=args.threads,
        integrator=IntegratorConfig(step=args.step),
    )
    is_valid, error_msg = config.validate()
    for dt in args.dt:
        if is_valid:
            is_valid, error_msg = GridSpec(dt).validate()
    if not is_valid:
        print(f"Error: {error_msg}")
        return 1

    families = ['sirs', 'gps'] if args.family == 'all' else [args.family]
    output_dir = Path(args.output_dir) if args.output_dir else None

    try:
        total, certified, failed = batch_tables(
            families=families,
            classes=classes,
            bounds=args.bound,
            dts=args.dt,
            config=config,
            output_dir=output_dir,
            verbose=not args.quiet
        )

        if failed > 0:
            return 2
        elif certified == 0:
            return 1
        else:
            return 0

    except KeyboardInterrupt:
        print("\n\nBatch run cancelled by user.")
        return 130
    except Exception as e:
        print(f"\nUnexpected error: {e}")
        return 255


if __name__ == '__main__':
    sys.exit(main())
