"""Progress reporting module"""

import time
from pathlib import Path
from typing import Optional


class ProgressReporter:
    """Reporter for displaying fixed-point iteration progress"""

    def __init__(self, max_iter: int, label: str = ""):
        """Initialize the progress reporter

        Args:
            max_iter: Maximum number of Psi evaluations
            label: Optional run label (model name, grid spacing)
        """
        self.max_iter = max_iter
        self.label = label
        self.start_time = None

    def start(self) -> None:
        """Start the progress timer"""
        self.start_time = time.time()
        suffix = f" for {self.label}" if self.label else ""
        print(f"Starting fixed-point iteration{suffix} (at most {self.max_iter} evaluations)...")

    def update(self, iteration: int, eps: float, psi: float) -> None:
        """Report one evaluation of Psi

        Args:
            iteration: Index k of the iterate
            eps: Iterate eps_k
            psi: Psi(eps_k)
        """
        print(f"Iteration {iteration + 1}/{self.max_iter}: eps = {eps:.6g}, Psi(eps) = {psi:.6g}")

    def elapsed(self) -> float:
        return 0.0 if self.start_time is None else time.time() - self.start_time

    def complete(self, eps_star: float, half_width: float, output_path: Optional[Path] = None) -> None:
        """Display the certificate

        Args:
            eps_star: Certified fixed point
            half_width: Tube half width in concentration units
            output_path: Path to the tube file, if one was written
        """
        print(f"\n✓ Bound certified: eps* = {eps_star:.6g}, half width = {half_width:.6g}")
        if output_path is not None:
            print(f"Tube saved to: {output_path}")
        print(f"Total processing time: {self.elapsed():.2f} seconds")

    def error(self, message: str) -> None:
        """Display error message

        Args:
            message: Error message to display
        """
        print(f"\n✗ Error: {message}")

        if self.start_time is not None:
            print(f"Failed after {self.elapsed():.2f} seconds")
