"""Fixed-step RK4 integration with dense output

Trajectories are stored in increasing time whichever direction they were
integrated in, and are queried by linear interpolation between grid points.
"""

import logging
import math
from dataclasses import dataclass
from typing import Callable, Dict, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import solve_ivp

from .agent_network import AgentNetwork, DriftFunction
from .config import IntegratorConfig
from .exceptions import NonFiniteDerivative, PositivityFloorBreached

LOGGER = logging.getLogger(__name__)

Rhs = Callable[[float, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class Trajectory:
    """Solution values on a strictly increasing time grid"""
    times: np.ndarray
    values: np.ndarray
    names: Tuple[str, ...] = ()
    direction: str = "forward"

    @property
    def t_start(self) -> float:
        return float(self.times[0])

    @property
    def t_end(self) -> float:
        return float(self.times[-1])

    def at(self, t: float) -> np.ndarray:
        """Linear interpolation; exact at grid points"""
        if t < self.times[0] - 1e-12 or t > self.times[-1] + 1e-12:
            raise ValueError(f"t={t} outside [{self.t_start}, {self.t_end}]")
        i = int(np.searchsorted(self.times, t, side="right")) - 1
        i = min(max(i, 0), len(self.times) - 2) if len(self.times) > 1 else 0
        if len(self.times) == 1 or t == self.times[i]:
            return self.values[i].copy()
        t0, t1 = self.times[i], self.times[i + 1]
        w = (t - t0) / (t1 - t0)
        return (1.0 - w) * self.values[i] + w * self.values[i + 1]

    def sample(self, ts: np.ndarray) -> np.ndarray:
        """Vectorized interpolation at many times; shape (len(ts), n_dims)"""
        return np.column_stack([np.interp(ts, self.times, self.values[:, k]) for k in range(self.values.shape[1])])

    def component(self, name: str) -> np.ndarray:
        return self.values[:, self.names.index(name)]

    def as_dict(self, t: float) -> Dict[str, float]:
        return dict(zip(self.names, (float(v) for v in self.at(t))))


def time_grid(t_start: float, t_end: float, step: float) -> np.ndarray:
    """Grid from t_start to t_end with uniform step except possibly the last"""
    span = t_end - t_start
    if span == 0:
        raise ValueError("Integration span is empty")
    n = max(1, math.ceil(abs(span) / step - 1e-9))
    h = math.copysign(step, span)
    grid = t_start + h * np.arange(n + 1)
    grid[-1] = t_end
    return grid


def rk4_step(rhs: Rhs, t: float, x: np.ndarray, h: float) -> np.ndarray:
    k1 = rhs(t, x)
    k2 = rhs(t + 0.5 * h, x + 0.5 * h * k1)
    k3 = rhs(t + 0.5 * h, x + 0.5 * h * k2)
    k4 = rhs(t + h, x + h * k3)
    increment = (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0
    if not np.all(np.isfinite(increment)):
        raise NonFiniteDerivative(f"Non-finite derivative near t={t:.6g}")
    return x + h * increment


def _check_floor(x: np.ndarray, t: float, floor: float, names: Sequence[str]) -> None:
    low = int(np.argmin(x))
    if x[low] < floor:
        label = names[low] if names else str(low)
        raise PositivityFloorBreached(f"State {label} fell to {x[low]:.6g} at t={t:.6g} (floor {floor:g})")


def integrate(
    rhs: Rhs,
    x0: Sequence[float],
    t_start: float,
    t_end: float,
    cfg: Optional[IntegratorConfig] = None,
    names: Sequence[str] = (),
    monitor_positivity: bool = False,
) -> Trajectory:
    """Classical RK4 at fixed step, forward or backward in time

    Args:
        rhs: Right-hand side f(t, x)
        x0: Value at t_start
        t_start: Initial time
        t_end: Final time; backward integration when t_end < t_start
        cfg: Integrator configuration (step defaults to span/3000)
        names: Component names carried into the trajectory
        monitor_positivity: Abort when a component drops below the floor

    Returns:
        Trajectory stored in increasing time

    Raises:
        NonFiniteDerivative: If the right-hand side produces inf/nan
        PositivityFloorBreached: If monitoring is on and the floor is crossed
    """
    cfg = cfg or IntegratorConfig()
    grid = time_grid(t_start, t_end, cfg.resolve_step(t_end - t_start))
    x = np.asarray(x0, dtype=float).copy()
    values = np.empty((len(grid), len(x)))
    values[0] = x
    for k in range(len(grid) - 1):
        x = rk4_step(rhs, grid[k], x, grid[k + 1] - grid[k])
        if monitor_positivity:
            _check_floor(x, grid[k + 1], cfg.positivity_floor, names)
        values[k + 1] = x
    backward = t_end < t_start
    if backward:
        grid, values = grid[::-1].copy(), values[::-1].copy()
    return Trajectory(grid, values, tuple(names), "backward" if backward else "forward")


def _integrate_adaptive(an: AgentNetwork, rhs: Rhs, cfg: IntegratorConfig) -> Trajectory:
    grid = time_grid(0.0, an.horizon, cfg.resolve_step(an.horizon))
    solution = solve_ivp(
        rhs, (0.0, an.horizon), an.initial_vector(), method="RK45",
        t_eval=grid, rtol=cfg.rtol, atol=cfg.atol,
    )
    if not solution.success:
        raise NonFiniteDerivative(f"Adaptive solve failed: {solution.message}")
    values = solution.y.T.copy()
    for k, t in enumerate(grid):
        _check_floor(values[k], t, cfg.positivity_floor, an.states)
    return Trajectory(grid, values, an.states)


def nominal_trajectory(an: AgentNetwork, cfg: Optional[IntegratorConfig] = None) -> Tuple[Trajectory, float]:
    """Integrate the unperturbed global drift over [0; T]

    Returns:
        (V0 trajectory, eps_prime) where eps_prime is the minimum of V0 over grid and states
    """
    cfg = cfg or IntegratorConfig()
    rhs = DriftFunction(an)
    if cfg.adaptive:
        trajectory = _integrate_adaptive(an, rhs, cfg)
    else:
        trajectory = integrate(rhs, an.initial_vector(), 0.0, an.horizon, cfg, an.states, monitor_positivity=True)
    eps_prime = float(trajectory.values.min())
    LOGGER.info("Nominal trajectory: %d points, eps' = %.6g", len(trajectory.times), eps_prime)
    return trajectory, eps_prime
