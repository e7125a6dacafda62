"""Fixed-point bound on the maximal deviation and reach-tube assembly

Psi(eps) is the largest deviation of an extremal transient probability
from the nominal one over all states, both directions and all target
times of the grid. Iterating eps_{k+1} = Psi(eps_k) + eta from 0, the
first eps_k with Psi(eps_k) < eps_k is the certificate.

Under unit scaling Psi stays in probability units while eps also bounds
the state uncertainties, and the tube is V0 +- M eps_k. Mass scaling
multiplies Psi by M so that eps and Psi share concentration units; the
tube is then V0 +- eps_k, and the iteration can exhaust the cap where
unit scaling certifies.
"""

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .agent_network import AgentNetwork
from .config import FixedPointConfig, GridSpec
from .envelope import Envelope, build_envelope
from .exceptions import BoundExceedsDenominator, EnvelopeNonnegativityViolated
from .ode import Trajectory, nominal_trajectory
from .pontryagin import Direction, TargetSpec, solve_extremal_batch, solver_grid

LOGGER = logging.getLogger(__name__)

ProgressCallback = Callable[[int, float, float], None]


class Status(Enum):
    CERTIFIED = "Certified"
    FAILED_EPS_PRIME = "FailedEpsPrime"
    MAX_ITERATIONS = "MaxIterations"


@dataclass(frozen=True)
class PsiEvaluation:
    """Psi at one iterate with the extremal records behind it

    lower/upper: (n_times, n_states) extremal transient probabilities at the
    target times; nominal: pi0 at the same times.
    """
    eps: float
    value: float
    times: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    nominal: np.ndarray
    scale_factor: float
    solves: int

    @property
    def deviation(self) -> np.ndarray:
        return np.maximum(self.upper - self.nominal, self.nominal - self.lower)

    def argmax(self) -> Tuple[float, int]:
        """(time, state index) of the largest deviation"""
        i, a = np.unravel_index(int(np.argmax(self.deviation)), self.deviation.shape)
        return float(self.times[i]), int(a)


@dataclass
class ReachTube:
    """Per-state bounds V0 +- half_width on the grid; half width 0 unless certified"""
    names: Tuple[str, ...]
    times: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    status: Status
    eps_star: Optional[float]
    iterates: List[float] = field(default_factory=list)
    psi_values: List[float] = field(default_factory=list)
    solves: int = 0
    wall_time_s: float = 0.0
    scale: str = "unit"
    mass: float = 1.0
    eps_prime: float = 0.0
    message: str = ""

    @property
    def certified(self) -> bool:
        return self.status is Status.CERTIFIED

    @property
    def half_width(self) -> float:
        """Bound on the concentration deviation; M * eps_star under unit scaling"""
        if self.eps_star is None:
            return 0.0
        return self.eps_star if self.scale == "mass" else self.mass * self.eps_star

    def summary(self) -> dict:
        return {
            "status": self.status.value,
            "eps_star": self.eps_star,
            "half_width": self.half_width if self.certified else None,
            "scale": self.scale,
            "iterates": list(self.iterates),
            "solves": self.solves,
            "wall_time_s": self.wall_time_s,
        }


def _targets(names: Sequence[str], times: Sequence[float]) -> List[TargetSpec]:
    return [
        TargetSpec.state(name, float(t), direction)
        for t in times
        for name in names
        for direction in (Direction.MIN, Direction.MAX)
    ]


def evaluate_psi(
    env: Envelope,
    grid: GridSpec,
    eps: float,
    cfg: Optional[FixedPointConfig] = None,
) -> PsiEvaluation:
    """Run the min and max solve for every state and grid time t > 0

    Targets are split into chunks solved concurrently on one shared solver
    grid; the reduction is a max fold over the ordered results.

    Raises:
        EnvelopeNonnegativityViolated: If the envelope is not nonnegative at eps
        BoundExceedsDenominator: If eps reaches a reciprocal cap
    """
    cfg = cfg or FixedPointConfig()
    an = env.an
    times = grid.times(an.horizon)[1:]
    targets = _targets(an.states, times)
    shared = solver_grid(env, times, eps, cfg.integrator)
    chunks = [targets[i:i + cfg.chunk_size] for i in range(0, len(targets), cfg.chunk_size)]

    def solve(chunk: List[TargetSpec]) -> np.ndarray:
        return solve_extremal_batch(env, chunk, eps, cfg.integrator, grid=shared)

    threads = min(cfg.resolve_threads(), len(chunks)) or 1
    if threads == 1:
        results = [solve(chunk) for chunk in chunks]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(solve, chunks))
    values = np.concatenate(results).reshape(len(times), len(an.states), 2)

    mass = an.mass
    nominal = env.nominal.sample(times) / mass
    lower, upper = values[:, :, 0], values[:, :, 1]
    deviation = np.maximum(upper - nominal, nominal - lower)
    scale_factor = mass if cfg.scale == "mass" else 1.0
    value = scale_factor * float(deviation.max()) if deviation.size else 0.0
    LOGGER.info("Psi(%.6g) = %.6g from %d solves", eps, value, len(targets))
    return PsiEvaluation(eps, value, times, lower, upper, nominal, scale_factor, len(targets))


def lambda_bound(env: Envelope, eps: float) -> float:
    """2 * max over grid and states of the total outflow rate at the upper envelope

    Bounds the Kolmogorov drift norm for any distribution of norm <= 1.
    """
    if not env.transitions:
        return 0.0
    sched = env.schedule(env.nominal.times, eps, check=False)
    src = np.array([env.an.state_index[b] for b, _ in env.pairs])
    outflow = np.zeros((len(sched.times), len(env.an.states)))
    np.add.at(outflow.T, src, (sched.base + sched.width).T)
    return 2.0 * float(outflow.max())


def fixed_point_bound(
    an: AgentNetwork,
    grid: GridSpec,
    cfg: Optional[FixedPointConfig] = None,
    progress_callback: Optional[ProgressCallback] = None,
    nominal: Optional[Tuple[Trajectory, float]] = None,
    envelope: Optional[Envelope] = None,
) -> ReachTube:
    """Iterate eps_{k+1} = Psi(eps_k) + eta from eps_0 = 0

    Certified at the first k >= 1 with Psi(eps_k) < eps_k. FailedEpsPrime
    when the next iterate reaches the decoupling cap eps' (eps'/M under unit
    scaling) or the envelope breaks down at an iterate. MaxIterations after
    cfg.max_iter evaluations of Psi.

    Args:
        an: Validated model
        grid: Target-time grid T(dt)
        cfg: Iteration configuration
        progress_callback: Called as callback(k, eps_k, psi_k) after every evaluation
        nominal: Precomputed (V0, eps') to reuse
        envelope: Precomputed envelope to reuse

    Returns:
        ReachTube; failures are statuses, not exceptions
    """
    cfg = cfg or FixedPointConfig()
    start = time.time()
    V0, eps_prime = nominal if nominal is not None else nominal_trajectory(an, cfg.integrator)
    env = envelope if envelope is not None else build_envelope(an, V0)
    mass = an.mass
    cap = eps_prime if cfg.scale == "mass" else eps_prime / mass

    iterates = [0.0]
    psi_values: List[float] = []
    solves = 0
    status = Status.MAX_ITERATIONS
    eps_star: Optional[float] = None
    message = f"No certificate after {cfg.max_iter} evaluations"

    for k in range(cfg.max_iter):
        eps = iterates[-1]
        try:
            psi = evaluate_psi(env, grid, eps, cfg)
        except (EnvelopeNonnegativityViolated, BoundExceedsDenominator) as e:
            status, message = Status.FAILED_EPS_PRIME, str(e)
            break
        solves += psi.solves
        psi_values.append(psi.value)
        if progress_callback:
            progress_callback(k, eps, psi.value)
        if k >= 1 and psi.value < eps:
            status, eps_star = Status.CERTIFIED, eps
            message = f"Psi({eps:.6g}) = {psi.value:.6g} < eps"
            break
        following = psi.value + cfg.eta
        if following >= cap:
            iterates.append(following)
            status = Status.FAILED_EPS_PRIME
            message = f"Iterate {following:.6g} reached the decoupling cap {cap:.6g}"
            break
        iterates.append(following)

    times = grid.times(an.horizon)
    centre = V0.sample(times)
    tube = ReachTube(
        names=an.states,
        times=times,
        lower=centre.copy(),
        upper=centre.copy(),
        status=status,
        eps_star=eps_star,
        iterates=iterates,
        psi_values=psi_values,
        solves=solves,
        wall_time_s=time.time() - start,
        scale=cfg.scale,
        mass=mass,
        eps_prime=eps_prime,
        message=message,
    )
    tube.lower -= tube.half_width
    tube.upper += tube.half_width
    LOGGER.info("Fixed point finished: %s (%s)", status.value, message)
    return tube


@dataclass(frozen=True)
class RefinementRecord:
    dt: float
    status: Status
    eps_star: Optional[float]
    relative_change: Optional[float]
    tube: ReachTube


def refine_grid(
    an: AgentNetwork,
    cfg: Optional[FixedPointConfig],
    dts: Sequence[float],
    progress_callback: Optional[ProgressCallback] = None,
) -> List[RefinementRecord]:
    """Run fixed_point_bound for each dt of a strictly decreasing sequence

    The nominal solution and the envelope are shared between runs.
    """
    cfg = cfg or FixedPointConfig()
    if any(b >= a for a, b in zip(dts, dts[1:])):
        raise ValueError("Grid spacings must be strictly decreasing")
    nominal = nominal_trajectory(an, cfg.integrator)
    env = build_envelope(an, nominal[0])
    records: List[RefinementRecord] = []
    previous: Optional[float] = None
    for dt in dts:
        tube = fixed_point_bound(an, GridSpec(dt), cfg, progress_callback, nominal=nominal, envelope=env)
        change = None
        if previous is not None and tube.eps_star is not None:
            change = abs(tube.eps_star - previous) / previous
        records.append(RefinementRecord(dt, tube.status, tube.eps_star, change, tube))
        previous = tube.eps_star
    return records
