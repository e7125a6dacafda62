"""Configuration management for anreach"""

import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

SCALES = ("mass", "unit")


@dataclass
class IntegratorConfig:
    """Configuration for the fixed-step integrator"""
    step: Optional[float] = None
    positivity_floor: float = 1e-9
    adaptive: bool = False
    rtol: float = 1e-9
    atol: float = 1e-12

    def validate(self) -> tuple[bool, str]:
        """Validate integrator parameters

        Returns:
            tuple[bool, str]: (is_valid, error_message)
        """
        if self.step is not None and self.step <= 0:
            return False, f"Integration step must be positive, got {self.step}"
        if self.positivity_floor < 0:
            return False, f"Positivity floor must be non-negative, got {self.positivity_floor}"
        if self.rtol <= 0 or self.atol <= 0:
            return False, "Adaptive tolerances must be positive"
        return True, ""

    def resolve_step(self, span: float) -> float:
        """Explicit step, or span/3000, never longer than the span"""
        span = abs(span)
        step = self.step if self.step else span / 3000.0
        return min(step, span) if span > 0 else step


@dataclass
class GridSpec:
    """Target-time grid T(dt) = {0, dt, 2dt, ...} plus the horizon"""
    dt: float

    def validate(self) -> tuple[bool, str]:
        if not self.dt > 0:
            return False, f"Grid spacing must be positive, got {self.dt}"
        return True, ""

    def times(self, horizon: float) -> np.ndarray:
        count = int(np.floor(horizon / self.dt + 1e-9))
        grid = self.dt * np.arange(count + 1)
        if horizon - grid[-1] > 1e-9 * max(horizon, 1.0):
            grid = np.append(grid, horizon)
        else:
            grid[-1] = horizon
        return grid


@dataclass
class FixedPointConfig:
    """Configuration of the fixed-point iteration and of each Psi evaluation"""
    eta: float = 1e-3
    max_iter: int = 50
    scale: str = "unit"
    threads: Optional[int] = None
    chunk_size: int = 128
    integrator: IntegratorConfig = field(default_factory=IntegratorConfig)

    def validate(self) -> tuple[bool, str]:
        """Validate iteration parameters

        Returns:
            tuple[bool, str]: (is_valid, error_message)
        """
        if not self.eta > 0:
            return False, f"eta must be positive, got {self.eta}"
        if self.max_iter < 1:
            return False, f"max_iter must be at least 1, got {self.max_iter}"
        if self.scale not in SCALES:
            return False, f"Scale must be 'mass' or 'unit', got '{self.scale}'"
        if self.threads is not None and self.threads < 1:
            return False, f"Thread count must be at least 1, got {self.threads}"
        if self.chunk_size < 1:
            return False, f"Chunk size must be at least 1, got {self.chunk_size}"
        return self.integrator.validate()

    def resolve_threads(self) -> int:
        """Explicit value, else ANREACH_THREADS, else the CPU count"""
        if self.threads:
            return self.threads
        env = os.environ.get("ANREACH_THREADS", "").strip()
        if env:
            try:
                value = int(env)
                if value >= 1:
                    return value
            except ValueError:
                pass
        return os.cpu_count() or 1


@dataclass
class RunConfig:
    """Configuration shared by the CLI subcommands"""
    model_path: Optional[Path] = None
    example: Optional[str] = None
    example_bound: float = 0.05
    output_path: Optional[Path] = None
    summary_path: Optional[Path] = None
    step: Optional[float] = None
    threads: Optional[int] = None
    confirm_overwrite: bool = True
    adaptive: bool = False

    def validate(self) -> tuple[bool, str]:
        """Validate run parameters

        Returns:
            tuple[bool, str]: (is_valid, error_message)
        """
        if (self.model_path is None) == (self.example is None):
            return False, "Give exactly one of a model file or --example"
        if self.example is not None and not 0 <= self.example_bound:
            return False, f"Example bound must be non-negative, got {self.example_bound}"
        if self.step is not None and self.step <= 0:
            return False, f"Step must be positive, got {self.step}"
        if self.threads is not None and self.threads < 1:
            return False, f"Thread count must be at least 1, got {self.threads}"
        return True, ""

    def get_output_path(self, subcommand: str, suffix: str = ".csv") -> Path:
        """Get the final output path

        If output_path is not specified, generates '<stem>_<subcommand><suffix>'
        next to the model file, or in the working directory for built-in examples.

        Returns:
            Path: The output file path
        """
        if self.output_path:
            return self.output_path
        if self.model_path is not None:
            return self.model_path.parent / f"{self.model_path.stem}_{subcommand}{suffix}"
        stem = (self.example or "model").replace(":", "")
        return Path(f"{stem}_{subcommand}{suffix}")

    def integrator(self) -> IntegratorConfig:
        return IntegratorConfig(step=self.step, adaptive=self.adaptive)
