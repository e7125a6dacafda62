"""Output generation module"""

import csv
import json
from pathlib import Path
from typing import Any, Callable, Dict, Iterable, List, Sequence

import numpy as np

from .exceptions import OutputError
from .ode import Trajectory
from .pontryagin import ExtremalSolution
from .reachability import ReachTube


def fmt(value: float) -> str:
    """Full double precision"""
    return format(float(value), ".17g")


class OutputGenerator:
    """Generator for CSV and JSON result files"""

    def __init__(self, confirm_overwrite: bool = True):
        """Initialize the output generator

        Args:
            confirm_overwrite: Whether to confirm before overwriting existing files
        """
        self.confirm_overwrite = confirm_overwrite

    def _write(self, output_path: Path, writer: Callable[[Any], None], what: str) -> bool:
        """Shared overwrite check, directory creation and error wrapping

        Returns:
            True if written, False if the user declined to overwrite

        Raises:
            OutputError: If writing fails
        """
        try:
            if output_path.exists() and self.confirm_overwrite:
                if not self._confirm_overwrite(output_path):
                    return False

            output_path.parent.mkdir(parents=True, exist_ok=True)

            with open(output_path, "w", newline="", encoding="utf-8") as handle:
                writer(handle)
            return True

        except Exception as e:
            raise OutputError(f"Failed to write {what}: {str(e)}")

    def _write_rows(self, output_path: Path, header: Sequence[str], rows: Iterable[Sequence[str]], what: str) -> bool:
        def writer(handle):
            out = csv.writer(handle, lineterminator="\n")
            out.writerow(header)
            out.writerows(rows)
        return self._write(output_path, writer, what)

    def save_trajectory(self, trajectory: Trajectory, output_path: Path) -> bool:
        """t,<state...> per grid point"""
        rows = ([fmt(t)] + [fmt(v) for v in values] for t, values in zip(trajectory.times, trajectory.values))
        return self._write_rows(output_path, ["t"] + list(trajectory.names), rows, "trajectory")

    def save_tube(self, tube: ReachTube, output_path: Path) -> bool:
        """t,<lower per state...>,<upper per state...>"""
        header = ["t"] + [f"lower_{s}" for s in tube.names] + [f"upper_{s}" for s in tube.names]
        rows = (
            [fmt(t)] + [fmt(v) for v in lo] + [fmt(v) for v in hi]
            for t, lo, hi in zip(tube.times, tube.lower, tube.upper)
        )
        return self._write_rows(output_path, header, rows, "tube")

    def save_extremal(self, solution: ExtremalSolution, output_path: Path) -> bool:
        """t,<costate...>,<pi...>,<control...>

        A control value on row k holds on [t_k, t_{k+1}]; the last row repeats it.
        """
        names = solution.state.names
        controls = list(solution.control.items())
        header = ["t"] + [f"p_{s}" for s in names] + [f"pi_{s}" for s in names] + [c for c, _ in controls]
        rows: List[List[str]] = []
        for k, t in enumerate(solution.times):
            step = min(k, len(solution.times) - 2)
            row = [fmt(t)]
            row += [fmt(v) for v in solution.costate.values[k]]
            row += [fmt(v) for v in solution.state.values[k]]
            row += [fmt(trace[step]) for _, trace in controls]
            rows.append(row)
        return self._write_rows(output_path, header, rows, "extremal traces")

    def save_json(self, data: Dict[str, Any], output_path: Path, what: str = "summary") -> bool:
        def writer(handle):
            json.dump(data, handle, indent=2, default=_jsonable)
            handle.write("\n")
        return self._write(output_path, writer, what)

    def _confirm_overwrite(self, path: Path) -> bool:
        """Confirm whether to overwrite existing file

        Args:
            path: Path to the existing file

        Returns:
            True if user confirms overwrite, False otherwise
        """
        response = input(f"File '{path}' already exists. Overwrite? (y/n): ").strip().lower()
        return response in ['y', 'yes']


def _jsonable(value: Any) -> Any:
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError(f"Object of type {type(value).__name__} is not JSON serializable")


def extremal_summary(solution: ExtremalSolution) -> List[str]:
    """Summary lines printed after the extremal CSV"""
    target = solution.target
    lines = [
        f"value {target.direction.value} at t={fmt(target.time)}: {fmt(solution.value)}",
    ]
    for name, margin in solution.switching_margin.items():
        lines.append(f"switching_margin {name}: {fmt(margin)}")
    return lines
