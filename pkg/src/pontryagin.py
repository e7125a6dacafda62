"""Extremal transient probabilities of the envelope's controlled CTMC

The costate p is integrated backward from p(t_hat) = +sigma (max) or
-sigma (min) with every uncertainty at the bang-bang value
+bound if psi >= 0 else -bound, psi_i = (p_C - p_B) * coeff_i. The control
read off the costate then drives the forward Kolmogorov solve, whose value
sigma . pi(t_hat) is the extremum.

All uncertainties of one transition have nonnegative coefficients, so they
switch together on the sign of p_C - p_B and the controlled rate of a
transition is base + width or base - width.

Many targets are solved at once: costates and states are (n_states, m)
matrices, one column per target, sharing one time grid that has every
target time as a node. Column arithmetic is element-wise, so a column's
result does not depend on which other columns share the batch.
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .agent_network import normalize_initial
from .config import IntegratorConfig
from .envelope import Envelope, RateSchedule
from .exceptions import NonFiniteDerivative, PositivityFloorBreached
from .ode import Trajectory

LOGGER = logging.getLogger(__name__)


class Direction(Enum):
    MIN = "min"
    MAX = "max"

    @property
    def sign(self) -> float:
        return 1.0 if self is Direction.MAX else -1.0


@dataclass(frozen=True)
class TargetSpec:
    """Objective sum_A weights[A] * pi_A(time), minimized or maximized"""
    weights: Mapping[str, float]
    time: float
    direction: Direction = Direction.MAX

    def __post_init__(self):
        if not any(w != 0.0 for w in self.weights.values()):
            raise ValueError("Target weights must not be identically zero")
        if not self.time > 0.0:
            raise ValueError(f"Target time must be positive, got {self.time}")

    @staticmethod
    def state(name: str, time: float, direction: Direction = Direction.MAX) -> "TargetSpec":
        return TargetSpec({name: 1.0}, time, direction)

    def vector(self, states: Sequence[str]) -> np.ndarray:
        unknown = set(self.weights) - set(states)
        if unknown:
            raise ValueError(f"Target refers to unknown state(s) {', '.join(sorted(unknown))}")
        return np.array([float(self.weights.get(s, 0.0)) for s in states])


@dataclass(frozen=True)
class ExtremalSolution:
    """Extremal value with its costate, state, control traces and switching margins

    ``control`` maps each uncertainty with a positive bound to its value per
    grid step (step k covers [times[k], times[k+1]]).
    """
    target: TargetSpec
    eps: float
    value: float
    costate: Trajectory
    state: Trajectory
    control: Dict[str, np.ndarray] = field(default_factory=dict)
    switching_margin: Dict[str, float] = field(default_factory=dict)

    @property
    def times(self) -> np.ndarray:
        return self.state.times


@dataclass(frozen=True)
class SolverGrid:
    """Shared integration grid with the envelope sampled at nodes and step midpoints"""
    nodes: np.ndarray
    at_nodes: RateSchedule
    at_mids: RateSchedule
    src: np.ndarray
    dst: np.ndarray
    eps: float

    def node_index(self, t: float) -> int:
        k = int(np.argmin(np.abs(self.nodes - t)))
        if not math.isclose(self.nodes[k], t, rel_tol=1e-12, abs_tol=1e-12):
            raise ValueError(f"Target time {t} is not a node of the solver grid")
        return k


def bang_bang_rule(psi: float, bound: float) -> float:
    """+bound if psi >= 0, else -bound"""
    return bound if psi >= 0.0 else -bound


def _controlled_rates(base: np.ndarray, width: np.ndarray, upper: np.ndarray) -> np.ndarray:
    return base[:, None] + np.where(upper, width[:, None], -width[:, None])


def _costate_derivative(P: np.ndarray, base: np.ndarray, width: np.ndarray, src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    diff = P[dst] - P[src]
    rate = _controlled_rates(base, width, diff >= 0.0)
    dP = np.zeros_like(P)
    np.add.at(dP, src, -diff * rate)
    return dP


def _kolmogorov_derivative(Pi: np.ndarray, rate: np.ndarray, src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    flow = rate * Pi[src]
    dPi = np.zeros_like(Pi)
    np.add.at(dPi, src, -flow)
    np.add.at(dPi, dst, flow)
    return dPi


def _edges(env: Envelope) -> Tuple[np.ndarray, np.ndarray]:
    index = env.an.state_index
    src = np.array([index[b] for b, _ in env.pairs], dtype=int)
    dst = np.array([index[c] for _, c in env.pairs], dtype=int)
    return src, dst


def costate_rhs(env: Envelope, t: float, p: Mapping[str, float], eps: float) -> Dict[str, float]:
    """p_dot_B = sum_C (p_B - p_C) * (base + u* . coeff) with u* from the bang-bang rule"""
    states = env.an.states
    sched = env.schedule([t], eps, check=False)
    src, dst = _edges(env)
    P = np.array([[p[s]] for s in states], dtype=float)
    dP = _costate_derivative(P, sched.base[0], sched.width[0], src, dst)
    return {s: float(dP[k, 0]) for k, s in enumerate(states)}


def solver_grid(
    env: Envelope,
    target_times: Sequence[float],
    eps: float,
    cfg: Optional[IntegratorConfig] = None,
) -> SolverGrid:
    """Nodes 0 < ... < max(target_times) with every target time a node

    Each gap between consecutive target times is cut into equal steps no
    longer than the configured step.

    Raises:
        EnvelopeNonnegativityViolated: If the envelope is not nonnegative at eps
        BoundExceedsDenominator: If eps reaches a reciprocal cap
    """
    cfg = cfg or IntegratorConfig()
    horizon = env.horizon
    step = cfg.resolve_step(horizon)
    points = sorted(set(float(t) for t in target_times))
    if not points or points[0] <= 0.0 or points[-1] > horizon * (1.0 + 1e-12):
        raise ValueError(f"Target times must lie in (0, {horizon}]")
    nodes = [0.0]
    for a, b in zip([0.0] + points, points):
        n = max(1, math.ceil((b - a) / step - 1e-9))
        nodes.extend(a + (b - a) * k / n for k in range(1, n))
        nodes.append(b)
    nodes = np.array(nodes)
    mids = 0.5 * (nodes[:-1] + nodes[1:])
    src, dst = _edges(env)
    return SolverGrid(nodes, env.schedule(nodes, eps), env.schedule(mids, eps), src, dst, eps)


def _initial_vector(env: Envelope, initial: Optional[Mapping[str, float]]) -> np.ndarray:
    if initial is None:
        initial, _ = normalize_initial(env.an)
    return np.array([float(initial.get(s, 0.0)) for s in env.an.states])


def _sweep(
    grid: SolverGrid,
    weights: np.ndarray,
    signs_out: np.ndarray,
    columns_at: Dict[int, np.ndarray],
    initial: np.ndarray,
    floor: float,
    keep_history: bool = False,
) -> Tuple[np.ndarray, Optional[np.ndarray], Optional[np.ndarray], np.ndarray]:
    """Backward costate pass then forward state pass for all columns

    Returns:
        (values, costate history, state history, upper-rate flags per step)
    """
    nodes, src, dst = grid.nodes, grid.src, grid.dst
    bn, wn = grid.at_nodes.base, grid.at_nodes.width
    bm, wm = grid.at_mids.base, grid.at_mids.width
    K = len(nodes) - 1
    n, m = weights.shape
    upper = np.ones((K, len(src), m), dtype=bool)
    P_hist = np.zeros((K + 1, n, m)) if keep_history else None
    Pi_hist = np.zeros((K + 1, n, m)) if keep_history else None

    # columns stay zero until their target node is reached
    P = np.zeros((n, m))

    def activate(k: int) -> None:
        cols = columns_at.get(k)
        if cols is not None:
            P[:, cols] = weights[:, cols] * signs_out[cols]

    activate(K)
    if keep_history:
        P_hist[K] = P
    for k in range(K - 1, -1, -1):
        h = nodes[k] - nodes[k + 1]
        k1 = _costate_derivative(P, bn[k + 1], wn[k + 1], src, dst)
        k2 = _costate_derivative(P + 0.5 * h * k1, bm[k], wm[k], src, dst)
        k3 = _costate_derivative(P + 0.5 * h * k2, bm[k], wm[k], src, dst)
        k4 = _costate_derivative(P + h * k3, bn[k], wn[k], src, dst)
        P_new = P + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(P_new)):
            raise NonFiniteDerivative(f"Costate became non-finite near t={nodes[k]:.6g}")
        # one control per step, from the costate at the step midpoint
        mid = 0.5 * (P + P_new)
        upper[k] = mid[dst] - mid[src] >= 0.0
        P = P_new
        activate(k)
        if keep_history:
            P_hist[k] = P

    # forward
    Pi = np.repeat(initial[:, None], m, axis=1)
    values = np.full(m, np.nan)
    if keep_history:
        Pi_hist[0] = Pi
    for k in range(K):
        h = nodes[k + 1] - nodes[k]
        r1 = _controlled_rates(bn[k], wn[k], upper[k])
        r2 = _controlled_rates(bm[k], wm[k], upper[k])
        r4 = _controlled_rates(bn[k + 1], wn[k + 1], upper[k])
        k1 = _kolmogorov_derivative(Pi, r1, src, dst)
        k2 = _kolmogorov_derivative(Pi + 0.5 * h * k1, r2, src, dst)
        k3 = _kolmogorov_derivative(Pi + 0.5 * h * k2, r2, src, dst)
        k4 = _kolmogorov_derivative(Pi + h * k3, r4, src, dst)
        Pi = Pi + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if Pi.min() < -floor:
            raise PositivityFloorBreached(f"Transient probability {Pi.min():.6g} near t={nodes[k + 1]:.6g}")
        cols = columns_at.get(k + 1)
        if cols is not None:
            values[cols] = np.sum(weights[:, cols] * Pi[:, cols], axis=0)
        if keep_history:
            Pi_hist[k + 1] = Pi
    return values, P_hist, Pi_hist, upper


def _columns(grid: SolverGrid, targets: Sequence[TargetSpec], states: Sequence[str]):
    weights = np.column_stack([t.vector(states) for t in targets])
    signs = np.array([t.direction.sign for t in targets])
    columns_at: Dict[int, List[int]] = {}
    for j, target in enumerate(targets):
        columns_at.setdefault(grid.node_index(target.time), []).append(j)
    return weights, signs, {k: np.array(v, dtype=int) for k, v in columns_at.items()}


def solve_extremal_batch(
    env: Envelope,
    targets: Sequence[TargetSpec],
    eps: float,
    cfg: Optional[IntegratorConfig] = None,
    grid: Optional[SolverGrid] = None,
    initial: Optional[Mapping[str, float]] = None,
) -> np.ndarray:
    """Extremal values of many targets in one backward and one forward pass

    Args:
        env: Envelope of the model
        targets: Targets, one column each
        eps: Current iterate (state-deviation bound)
        cfg: Integrator configuration
        grid: Prebuilt grid containing every target time (built from targets otherwise)
        initial: Initial distribution, normalize_initial by default

    Returns:
        Array of values, in target order
    """
    cfg = cfg or IntegratorConfig()
    if not targets:
        return np.zeros(0)
    if grid is None:
        grid = solver_grid(env, [t.time for t in targets], eps, cfg)
    weights, signs, columns_at = _columns(grid, targets, env.an.states)
    values, _, _, _ = _sweep(grid, weights, signs, columns_at, _initial_vector(env, initial), cfg.positivity_floor)
    return values


def _switching_margin(psi: np.ndarray) -> float:
    """min |psi| away from the terminal node and from nodes next to a sign switch"""
    psi = psi[:-1]
    if psi.size == 0:
        return 0.0
    positive = psi >= 0.0
    switch = positive[1:] != positive[:-1]
    keep = np.ones(psi.size, dtype=bool)
    keep[:-1] &= ~switch
    keep[1:] &= ~switch
    return float(np.abs(psi[keep]).min()) if keep.any() else 0.0


def solve_extremal(
    env: Envelope,
    target: TargetSpec,
    eps: float,
    cfg: Optional[IntegratorConfig] = None,
    initial: Optional[Mapping[str, float]] = None,
) -> ExtremalSolution:
    """Solve one target and keep costate, state and control traces

    Raises:
        EnvelopeNonnegativityViolated: If the envelope is not nonnegative at eps
        PositivityFloorBreached: If the forward pass leaves the simplex
    """
    cfg = cfg or IntegratorConfig()
    grid = solver_grid(env, [target.time], eps, cfg)
    weights, signs, columns_at = _columns(grid, [target], env.an.states)
    values, P_hist, Pi_hist, upper = _sweep(
        grid, weights, signs, columns_at, _initial_vector(env, initial), cfg.positivity_floor, keep_history=True
    )
    states = env.an.states
    costate = Trajectory(grid.nodes, P_hist[:, :, 0], states, "backward")
    state = Trajectory(grid.nodes, Pi_hist[:, :, 0], states)

    control: Dict[str, np.ndarray] = {}
    margin: Dict[str, float] = {}
    sched = grid.at_nodes
    for k, (e, term) in enumerate(env.terms):
        bound = float(sched.term_bounds[k])
        if bound <= 0.0:
            continue
        control[term.uncertainty] = np.where(upper[:, e, 0], bound, -bound)
        diff = P_hist[:, grid.dst[e], 0] - P_hist[:, grid.src[e], 0]
        margin[term.uncertainty] = _switching_margin(diff * sched.coeffs[:, k])

    LOGGER.debug("Extremal %s of %s at t=%.6g: %.10g", target.direction.value, dict(target.weights), target.time, values[0])
    return ExtremalSolution(target, eps, float(values[0]), costate, state, control, margin)


def tolerance_from_constants(xi: float, t_hat: float, n: int, c1: float, c2: float) -> float:
    """zeta = xi / (t_hat * n * c1 * c2); inf when the denominator vanishes"""
    if not xi > 0:
        raise ValueError(f"xi must be positive, got {xi}")
    denominator = t_hat * n * c1 * c2
    return math.inf if denominator == 0.0 else xi / denominator


def switching_tolerance(env: Envelope, xi: float, t_hat: float, eps: float) -> float:
    """Width zeta of the band |psi_i| < zeta where the control choice costs at most xi

    n counts envelope uncertainties after duplication; c1 is the largest
    coefficient on the nominal grid and c2 twice the largest bound at eps.
    """
    sched = env.schedule(env.nominal.times, eps, check=False)
    n = sched.coeffs.shape[1]
    c1 = float(np.abs(sched.coeffs).max()) if n else 0.0
    c2 = 2.0 * float(sched.term_bounds.max()) if n else 0.0
    return tolerance_from_constants(xi, t_hat, n, c1, c2)


def required_solves(lam: float, horizon: float, xi: float, n_states: int) -> float:
    """A-priori solve count 4 |S| Lambda T / xi of the grid recipe"""
    if not xi > 0:
        raise ValueError(f"xi must be positive, got {xi}")
    return 4.0 * n_states * lam * horizon / xi
