"""Agent networks and the dynamical systems derived from them

An agent network is a reaction network whose reactions are multisets of
atomic transitions B -> C. Three systems are derived from it:

* the global drift F (the fluid ODE over concentrations V),
* the transition rates r_{B,C} = sum_j mult_j(B->C) * Theta_j / V_B of the
  single-agent CTMC,
* the Kolmogorov drift f of that CTMC.

With pi(0) = V(0)/M the Kolmogorov solution scaled by M reproduces V.
"""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Mapping, Optional, Tuple

import numpy as np

from .exceptions import ModelValidationError, NotDivisible
from .expr import (
    Bound,
    Number,
    RateExpr,
    SymbolKind,
    SymbolTable,
    divide_by_state,
)

LOGGER = logging.getLogger(__name__)

Pair = Tuple[str, str]


@dataclass(frozen=True)
class ParamFunction:
    """Nominal parameter function: a constant or a piecewise-linear table"""
    constant: Optional[float] = None
    table: Tuple[Tuple[float, float], ...] = ()

    def __post_init__(self):
        if (self.constant is None) == (not self.table):
            raise ValueError("ParamFunction needs exactly one of constant or table")

    def __call__(self, t: Number) -> Number:
        if self.constant is not None:
            if isinstance(t, np.ndarray):
                return np.full(t.shape, self.constant)
            return self.constant
        times, values = zip(*self.table)
        result = np.interp(t, times, values)
        return result if isinstance(t, np.ndarray) else float(result)

    def minimum(self, horizon: float) -> float:
        """Minimum over [0; horizon] (piecewise-linear, so breakpoints suffice)"""
        if self.constant is not None:
            return self.constant
        candidates = [self(0.0), self(horizon)]
        candidates += [v for t, v in self.table if 0.0 <= t <= horizon]
        return float(min(candidates))

    def covers(self, horizon: float) -> bool:
        if self.constant is not None:
            return True
        times = [t for t, _ in self.table]
        increasing = all(b > a for a, b in zip(times, times[1:]))
        return increasing and times[0] <= 0.0 and times[-1] >= horizon


@dataclass(frozen=True)
class UncertaintySpec:
    """Parameter bounds; state deviations are always bounded by eps itself"""
    bounds: Mapping[str, Bound] = field(default_factory=dict)

    def bound(self, name: str) -> Bound:
        return self.bounds.get(name, Bound(0.0))

    @staticmethod
    def state_bound() -> Bound:
        return Bound(1.0, 1)

    def uncertain_parameters(self) -> List[str]:
        return sorted(name for name, b in self.bounds.items() if b.const_factor > 0.0)


@dataclass(frozen=True)
class Reaction:
    """Multiset of atomic transitions fired at rate Theta"""
    transitions: Tuple[Pair, ...]
    rate: RateExpr
    label: str = ""


@dataclass(frozen=True)
class Stoichiometry:
    consumed: Mapping[str, int]
    produced: Mapping[str, int]

    def net(self, state: str) -> int:
        return self.produced.get(state, 0) - self.consumed.get(state, 0)


@dataclass(frozen=True)
class AgentNetwork:
    """States, parameters, reactions, uncertainty, initial condition and horizon"""
    states: Tuple[str, ...]
    parameters: Mapping[str, ParamFunction]
    reactions: Tuple[Reaction, ...]
    uncertainty: UncertaintySpec
    initial: Mapping[str, float]
    horizon: float
    symbols: SymbolTable = field(compare=False, repr=False, default_factory=SymbolTable)

    @property
    def state_index(self) -> Dict[str, int]:
        return {name: i for i, name in enumerate(self.states)}

    def state_symbol(self, name: str) -> int:
        sid = self.symbols.lookup(name)
        if sid is None or self.symbols.kind(sid) != SymbolKind.STATE:
            raise KeyError(f"Unknown state '{name}'")
        return sid

    def param_symbol(self, name: str) -> int:
        sid = self.symbols.lookup(name)
        if sid is None or self.symbols.kind(sid) != SymbolKind.PARAMETER:
            raise KeyError(f"Unknown parameter '{name}'")
        return sid

    def initial_vector(self) -> np.ndarray:
        return np.array([float(self.initial.get(s, 0.0)) for s in self.states])

    @property
    def mass(self) -> float:
        return float(sum(self.initial.get(s, 0.0) for s in self.states))

    def parameter_values(self, t: Number, u_K: Optional[Mapping[str, float]] = None) -> Dict[str, Number]:
        """kappa_hat(t) + u_K"""
        u_K = u_K or {}
        return {name: fn(t) + u_K.get(name, 0.0) for name, fn in self.parameters.items()}

    def assignment(self, V: Mapping[str, Number], kappa: Mapping[str, Number]) -> Dict[int, Number]:
        values: Dict[int, Number] = {}
        for name, value in V.items():
            values[self.state_symbol(name)] = value
        for name, value in kappa.items():
            values[self.param_symbol(name)] = value
        return values


def stoichiometry(reaction: Reaction) -> Stoichiometry:
    """Consumed counts transition sources, produced counts targets, with multiplicity"""
    consumed = Counter(source for source, _ in reaction.transitions)
    produced = Counter(target for _, target in reaction.transitions)
    return Stoichiometry(dict(consumed), dict(produced))


def global_drift(
    an: AgentNetwork,
    t: float,
    V: Mapping[str, float],
    u_K: Optional[Mapping[str, float]] = None,
) -> Dict[str, float]:
    """F_B(V, kappa_hat(t) + u_K) for every state B"""
    values = an.assignment(V, an.parameter_values(t, u_K))
    drift = {state: 0.0 for state in an.states}
    for reaction in an.reactions:
        theta = reaction.rate.evaluate(values, an.symbols)
        stoich = stoichiometry(reaction)
        for state in set(stoich.consumed) | set(stoich.produced):
            drift[state] += stoich.net(state) * theta
    return drift


class DriftFunction:
    """Array form of the global drift, rhs(t, x) -> dx, for the integrator

    ``u_K`` maps time to a parameter-deviation dict (None for the nominal system).
    """

    def __init__(self, an: AgentNetwork, u_K: Optional[Callable[[float], Mapping[str, float]]] = None):
        self.an = an
        self.u_K = u_K
        index = an.state_index
        self._state_ids = [an.state_symbol(s) for s in an.states]
        self._param_ids = {name: an.param_symbol(name) for name in an.parameters}
        self._changes: List[np.ndarray] = []
        for reaction in an.reactions:
            change = np.zeros(len(an.states))
            stoich = stoichiometry(reaction)
            for state in set(stoich.consumed) | set(stoich.produced):
                change[index[state]] = stoich.net(state)
            self._changes.append(change)

    def __call__(self, t: float, x: np.ndarray) -> np.ndarray:
        deviations = self.u_K(t) if self.u_K is not None else {}
        values: Dict[int, float] = dict(zip(self._state_ids, x))
        for name, fn in self.an.parameters.items():
            values[self._param_ids[name]] = fn(t) + deviations.get(name, 0.0)
        dx = np.zeros(len(x))
        for reaction, change in zip(self.an.reactions, self._changes):
            dx += change * reaction.rate.evaluate(values, self.an.symbols)
        return dx


def _divide_rate(rate: RateExpr, state_sid: int) -> RateExpr:
    return RateExpr(divide_by_state(rate.numerator, state_sid), rate.denominator)


def transition_rates(an: AgentNetwork) -> Dict[Pair, RateExpr]:
    """Symbolic r_{B,C}; self-loops and identically-zero rates are dropped"""
    rates: Dict[Pair, RateExpr] = {}
    for reaction in an.reactions:
        for (source, target), multiplicity in Counter(reaction.transitions).items():
            if source == target:
                continue
            try:
                quotient = _divide_rate(reaction.rate, an.state_symbol(source))
            except NotDivisible:
                raise NotDivisible(
                    f"Rate of reaction '{reaction.label}' has no factor V_{source}; "
                    f"r_{{{source},{target}}} would not vanish on an empty state"
                )
            quotient = RateExpr(quotient.numerator * float(multiplicity), quotient.denominator)
            key = (source, target)
            if key not in rates:
                rates[key] = quotient
                continue
            existing = rates[key]
            if existing.denominator != quotient.denominator:
                raise ModelValidationError(
                    f"Transition {source}->{target} mixes rates with different denominators"
                )
            rates[key] = RateExpr(existing.numerator + quotient.numerator, existing.denominator)
    return {pair: rate for pair, rate in rates.items() if not rate.is_zero()}


def kolmogorov_drift(rates: Mapping[Pair, float], pi: Mapping[str, float]) -> Dict[str, float]:
    """f_B = -sum_C r_{B,C} pi_B + sum_C r_{C,B} pi_C"""
    drift = {state: 0.0 for state in pi}
    for (source, target), rate in rates.items():
        if source == target:
            continue
        flow = rate * pi[source]
        drift[source] -= flow
        drift[target] += flow
    return drift


def evaluate_transition_rates(
    an: AgentNetwork,
    rates: Mapping[Pair, RateExpr],
    t: Number,
    V: Mapping[str, Number],
    u_K: Optional[Mapping[str, float]] = None,
) -> Dict[Pair, Number]:
    values = an.assignment(V, an.parameter_values(t, u_K))
    return {pair: rate.evaluate(values, an.symbols) for pair, rate in rates.items()}


def normalize_initial(an: AgentNetwork) -> Tuple[Dict[str, float], float]:
    """pi0 = V(0)/M with M = sum_C V_C(0)"""
    mass = an.mass
    return {state: an.initial[state] / mass for state in an.states}, mass
