"""Envelope construction: transition rates affine in independent uncertainties

Every transition rate r_{B,C} is rewritten around the nominal solution as

    base(t) + sum_i coeff_i(t) * u_i,    |u_i| <= bound_i(eps)

where each u_i belongs to exactly one transition and coeff_i >= 0 on the
time grid. Steps: reciprocals of affine denominators become a fresh symbol,
all states and uncertain parameters are shift-expanded, nonlinear deviation
monomials become product uncertainties, shared uncertainties are duplicated
per transition and negative coefficients are flipped onto a negated copy.
"""

import copy
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .agent_network import AgentNetwork, Pair, transition_rates
from .exceptions import (
    EnvelopeNonnegativityViolated,
    ModelValidationError,
    NonAffineDenominatorUncertainty,
    NonPositiveDenominator,
    SignChangingCoefficient,
    UncertaintyOutOfBounds,
)
from .expr import AffineForm, Bound, Polynomial, SymbolKind, SymbolTable, reciprocal_bound, shift_expand
from .ode import Trajectory

LOGGER = logging.getLogger(__name__)

__all__ = [
    "Bound",
    "CoeffFn",
    "Envelope",
    "EnvelopeTerm",
    "EnvelopeTransition",
    "NominalContext",
    "RateSchedule",
    "UncertaintyInfo",
    "UncertaintyKind",
    "build_envelope",
    "reciprocal_bound",
]


class UncertaintyKind(Enum):
    PARAMETER = "parameter"
    STATE = "state"
    PRODUCT = "product"
    RECIPROCAL = "reciprocal"


@dataclass
class _Reciprocal:
    name: str
    symbol: int
    denominator: AffineForm
    sigma_min: float


class NominalContext:
    """Values of nominal symbols along V0 and the nominal parameter functions"""

    def __init__(self, an: AgentNetwork, nominal: Trajectory, table: SymbolTable):
        self.an = an
        self.nominal = nominal
        self.table = table
        self.reciprocals: Dict[AffineForm, _Reciprocal] = {}

    def _state_values(self, V: np.ndarray) -> Dict[int, np.ndarray]:
        return {self.an.state_symbol(name): V[:, k] for k, name in enumerate(self.an.states)}

    def sigma(self, denominator: AffineForm, V: np.ndarray) -> np.ndarray:
        values = denominator.evaluate(self._state_values(V), self.table)
        return np.broadcast_to(np.asarray(values, dtype=float), (V.shape[0],))

    def reciprocal(self, denominator: AffineForm) -> _Reciprocal:
        """Reciprocal symbol for a denominator; identical denominators share one"""
        if denominator in self.reciprocals:
            return self.reciprocals[denominator]
        sigma = self.sigma(denominator, self.nominal.values)
        sigma_min = float(sigma.min())
        if sigma_min <= 0.0:
            raise NonPositiveDenominator(
                f"Denominator {denominator.render(self.table)} reaches {sigma_min:.6g} along the nominal solution"
            )
        name = f"1/sigma{len(self.reciprocals) + 1}"
        sid = self.table.intern(name, SymbolKind.RECIPROCAL)
        self.reciprocals[denominator] = _Reciprocal(name, sid, denominator, sigma_min)
        return self.reciprocals[denominator]

    def values(self, ts: np.ndarray) -> Dict[int, np.ndarray]:
        """Assignment of every nominal-side symbol at times ``ts``"""
        ts = np.asarray(ts, dtype=float)
        V = self.nominal.sample(ts)
        states = self._state_values(V)
        recips = {r.symbol: 1.0 / self.sigma(r.denominator, V) for r in self.reciprocals.values()}
        out: Dict[int, np.ndarray] = {}
        for symbol in self.table:
            source = symbol.id if symbol.kind != SymbolKind.NOMINAL else self.table.origin(symbol.id)
            if symbol.kind not in (SymbolKind.NOMINAL, SymbolKind.PARAMETER, SymbolKind.RECIPROCAL):
                continue
            kind = self.table.kind(source)
            if kind == SymbolKind.STATE:
                out[symbol.id] = states[source]
            elif kind == SymbolKind.PARAMETER:
                out[symbol.id] = self.an.parameters[self.table.name(source)](ts)
            elif kind == SymbolKind.RECIPROCAL:
                out[symbol.id] = recips[source]
        return out


@dataclass(frozen=True)
class CoeffFn:
    """Polynomial over nominal symbols, evaluated along the nominal solution"""
    poly: Polynomial

    def __call__(self, values: Mapping[int, np.ndarray], n_times: int) -> np.ndarray:
        result = self.poly.evaluate(values)
        return np.broadcast_to(np.asarray(result, dtype=float), (n_times,)).copy()


@dataclass(frozen=True)
class UncertaintyInfo:
    """Registry entry; ``factors`` names the original uncertainties behind the term"""
    name: str
    kind: UncertaintyKind
    bound: Bound
    factors: Tuple[Tuple[str, int], ...]
    pair: Pair
    duplicated: bool = False
    negated: bool = False


@dataclass(frozen=True)
class EnvelopeTerm:
    uncertainty: str
    coeff: CoeffFn
    bound: Bound


@dataclass(frozen=True)
class EnvelopeTransition:
    source: str
    target: str
    base: CoeffFn
    terms: Tuple[EnvelopeTerm, ...] = ()

    @property
    def pair(self) -> Pair:
        return (self.source, self.target)


@dataclass(frozen=True)
class RateSchedule:
    """Envelope sampled on a time grid at iterate eps

    base, width: (n_times, n_pairs) with width = sum_i coeff_i * bound_i(eps)
    coeffs: (n_times, n_terms); term_pair: pair index of each term
    """
    times: np.ndarray
    base: np.ndarray
    width: np.ndarray
    coeffs: np.ndarray
    term_pair: np.ndarray
    term_bounds: np.ndarray


@dataclass
class Envelope:
    """Affine-in-uncertainty over-approximation of all transition rates"""
    an: AgentNetwork
    nominal: Trajectory
    context: NominalContext
    transitions: List[EnvelopeTransition]
    uncertainties: Dict[str, UncertaintyInfo] = field(default_factory=dict)

    @property
    def table(self) -> SymbolTable:
        return self.context.table

    @property
    def pairs(self) -> List[Pair]:
        return [tr.pair for tr in self.transitions]

    @property
    def terms(self) -> List[Tuple[int, EnvelopeTerm]]:
        return [(e, term) for e, tr in enumerate(self.transitions) for term in tr.terms]

    @property
    def horizon(self) -> float:
        return self.nominal.t_end

    def counts_by_kind(self) -> Dict[UncertaintyKind, int]:
        counts = {kind: 0 for kind in UncertaintyKind}
        for info in self.uncertainties.values():
            counts[info.kind] += 1
        return counts

    def schedule(self, times: Sequence[float], eps: float, check: bool = True) -> RateSchedule:
        """Sample base and width at ``times``

        Raises:
            BoundExceedsDenominator: If eps reaches a reciprocal cap
            EnvelopeNonnegativityViolated: If base - width < 0 somewhere (when check is on)
        """
        ts = np.asarray(times, dtype=float)
        values = self.context.values(ts)
        n, n_pairs = len(ts), len(self.transitions)
        terms = self.terms
        base = np.zeros((n, n_pairs))
        width = np.zeros((n, n_pairs))
        coeffs = np.zeros((n, len(terms)))
        term_pair = np.array([e for e, _ in terms], dtype=int)
        term_bounds = np.array([term.bound.value(eps) for _, term in terms])
        for e, tr in enumerate(self.transitions):
            base[:, e] = tr.base(values, n)
        for k, (e, term) in enumerate(terms):
            coeffs[:, k] = np.maximum(term.coeff(values, n), 0.0)
            width[:, e] += coeffs[:, k] * term_bounds[k]
        if check and n_pairs:
            lower = base - width
            tol = 1e-12 * max(1.0, float(np.abs(base).max()))
            worst = np.unravel_index(int(np.argmin(lower)), lower.shape)
            if lower[worst] < -tol:
                source, target = self.transitions[worst[1]].pair
                raise EnvelopeNonnegativityViolated(
                    f"Rate {source}->{target} can become {lower[worst]:.6g} at t={ts[worst[0]]:.6g} "
                    f"for eps={eps:.6g}; use a smaller eps cap"
                )
        return RateSchedule(ts, base, width, coeffs, term_pair, term_bounds)

    def check_nonnegativity(self, eps: float) -> None:
        self.schedule(self.nominal.times, eps, check=True)

    def evaluate_rates(self, t: float, u: Mapping[str, float], eps: float) -> Dict[Pair, float]:
        """base(t) + sum_i coeff_i(t) * u_i for every transition

        Raises:
            UncertaintyOutOfBounds: If some |u_i| exceeds bound_i(eps) or names no uncertainty
        """
        for name, value in u.items():
            if name not in self.uncertainties:
                raise UncertaintyOutOfBounds(f"Unknown uncertainty '{name}'")
            limit = self.uncertainties[name].bound.value(eps)
            if abs(value) > limit * (1.0 + 1e-9) + 1e-15:
                raise UncertaintyOutOfBounds(f"|{name}| = {abs(value):.6g} exceeds its bound {limit:.6g}")
        values = self.context.values(np.array([t]))
        rates: Dict[Pair, float] = {}
        for tr in self.transitions:
            rate = float(tr.base(values, 1)[0])
            for term in tr.terms:
                rate += float(term.coeff(values, 1)[0]) * u.get(term.uncertainty, 0.0)
            rates[tr.pair] = rate
        return rates

    def realize(self, t: float, u_states: Mapping[str, float], u_params: Mapping[str, float]) -> Dict[str, float]:
        """Envelope uncertainties reproducing the original rates under (u_states, u_params)"""
        V0 = self.nominal.at(t)[None, :]
        V = V0 + np.array([[u_states.get(s, 0.0) for s in self.an.states]])
        originals: Dict[str, float] = dict(u_states)
        originals.update(u_params)
        for rec in self.context.reciprocals.values():
            sigma0 = float(self.context.sigma(rec.denominator, V0)[0])
            sigma = float(self.context.sigma(rec.denominator, V)[0])
            originals[rec.name] = 1.0 / sigma - 1.0 / sigma0
        realized: Dict[str, float] = {}
        for name, info in self.uncertainties.items():
            value = 1.0
            for factor, exp in info.factors:
                value *= originals.get(factor, 0.0) ** exp
            realized[name] = -value if info.negated else value
        return realized

    def describe(self, eps: Optional[float] = None) -> str:
        """One line per transition base and one per term"""
        lines = []
        for tr in self.transitions:
            lines.append(f"{tr.source} -> {tr.target}: base = {tr.base.poly.render(self.table)}")
            for term in tr.terms:
                info = self.uncertainties[term.uncertainty]
                flags = [info.kind.value]
                if info.duplicated:
                    flags.append("duplicated")
                if info.negated:
                    flags.append("negated")
                bound = term.bound.describe()
                if eps is not None:
                    bound += f" = {term.bound.value(eps):.6g}"
                lines.append(
                    f"    + {term.coeff.poly.render(self.table)} * {term.uncertainty}"
                    f"  |bound| <= {bound}  ({', '.join(flags)})"
                )
        return "\n".join(lines)


def _origin_bound(an: AgentNetwork, context: NominalContext, origin: int) -> Tuple[Bound, UncertaintyKind]:
    table = context.table
    kind = table.kind(origin)
    if kind == SymbolKind.STATE:
        return an.uncertainty.state_bound(), UncertaintyKind.STATE
    if kind == SymbolKind.PARAMETER:
        return an.uncertainty.bound(table.name(origin)), UncertaintyKind.PARAMETER
    for rec in context.reciprocals.values():
        if rec.symbol == origin:
            # |1/(s + d) - 1/s| <= z / (s_min (s_min - z)); reciprocal_bound alone drops the 1/s_min
            scale = rec.denominator.coefficient_mass()
            factor = max(1.0, 1.0 / rec.sigma_min)
            return Bound(factor, 0, ((scale, rec.sigma_min, 1),)), UncertaintyKind.RECIPROCAL
    raise ValueError(f"Symbol {table.name(origin)} cannot carry an uncertainty")


def _split(
    an: AgentNetwork,
    context: NominalContext,
    pair: Pair,
    numerator: Polynomial,
    shifted: set,
) -> Tuple[Polynomial, Dict[str, Tuple[Polynomial, Bound, UncertaintyKind, Tuple[Tuple[str, int], ...]]]]:
    table = context.table
    expanded = shift_expand(numerator, shifted, table)
    deviations = {table.deviation(sid) for sid in shifted}
    base = Polynomial()
    terms = {}
    for key, cofactor in expanded.group_by(deviations).items():
        if not key:
            base = base + cofactor
            continue
        factors: Tuple[Tuple[str, int], ...] = tuple(
            (table.name(table.origin(dev)), exp) for dev, exp in key
        )
        bound = Bound(1.0)
        kind = None
        for dev, exp in key:
            origin_bound, kind = _origin_bound(an, context, table.origin(dev))
            bound = bound * (origin_bound ** exp)
        if len(key) == 1 and key[0][1] == 1:
            name = table.name(key[0][0])
        else:
            kind = UncertaintyKind.PRODUCT
            name = "u_" + "|".join(f if e == 1 else f"{f}^{e}" for f, e in factors)
        terms[name] = (cofactor, bound, kind, factors)
    return base, terms


def _sign_normalize(
    coeff: Polynomial, values: Mapping[int, np.ndarray], n_times: int, label: str
) -> Optional[bool]:
    """None to drop an all-zero term, True to negate, False to keep"""
    sampled = CoeffFn(coeff)(values, n_times)
    scale = float(np.abs(sampled).max()) if n_times else 0.0
    if scale == 0.0:
        return None
    tol = 1e-12 * scale
    if sampled.min() >= -tol:
        return False
    if sampled.max() <= tol:
        return True
    raise SignChangingCoefficient(
        f"Coefficient of {label} changes sign on [0; T] (range {sampled.min():.6g} .. {sampled.max():.6g})"
    )


def build_envelope(an: AgentNetwork, nominal: Trajectory) -> Envelope:
    """Build the envelope of ``an`` around the nominal solution

    Args:
        an: Validated agent network
        nominal: V0 on [0; T]

    Returns:
        Envelope satisfying one-transition-per-uncertainty and nonnegative coefficients

    Raises:
        NonAffineDenominatorUncertainty: If a denominator involves non-state symbols
        SignChangingCoefficient: If some coefficient crosses zero on the grid
    """
    table = copy.deepcopy(an.symbols)
    context = NominalContext(an, nominal, table)
    uncertain = set(an.uncertainty.uncertain_parameters())

    split: List[Tuple[Pair, Polynomial, Dict]] = []
    for pair, rate in transition_rates(an).items():
        numerator = rate.numerator
        shifted = set()
        if rate.denominator is not None:
            denominator = rate.denominator
            bad = [table.name(s) for s in denominator.symbols() if table.kind(s) != SymbolKind.STATE]
            if bad:
                raise NonAffineDenominatorUncertainty(
                    f"Denominator of r_{{{pair[0]},{pair[1]}}} involves non-state symbols {', '.join(bad)}"
                )
            rec = context.reciprocal(denominator)
            numerator = numerator.multiply_by(rec.symbol)
            if denominator.coefficient_mass() > 0.0:
                shifted.add(rec.symbol)
        for sid in numerator.symbols():
            kind = table.kind(sid)
            if kind == SymbolKind.STATE:
                shifted.add(sid)
            elif kind == SymbolKind.PARAMETER and table.name(sid) in uncertain:
                shifted.add(sid)
            elif kind == SymbolKind.UNDECLARED:
                raise ModelValidationError(f"Undeclared symbol {table.name(sid)} in r_{{{pair[0]},{pair[1]}}}")
        base, terms = _split(an, context, pair, numerator, shifted)
        split.append((pair, base, terms))

    usage: Dict[str, int] = {}
    for _, _, terms in split:
        for name in terms:
            usage[name] = usage.get(name, 0) + 1

    values = context.values(nominal.times)
    n_times = len(nominal.times)
    transitions: List[EnvelopeTransition] = []
    registry: Dict[str, UncertaintyInfo] = {}
    for pair, base, terms in split:
        final_terms = []
        for name, (cofactor, bound, kind, factors) in terms.items():
            duplicated = usage[name] > 1
            label = f"{name}[{pair[0]}->{pair[1]}]" if duplicated else name
            negate = _sign_normalize(cofactor, values, n_times, label)
            if negate is None:
                LOGGER.debug("Dropping identically zero term %s", label)
                continue
            if negate:
                cofactor = -cofactor
                label = f"neg({label})"
            registry[label] = UncertaintyInfo(label, kind, bound, factors, pair, duplicated, negate)
            final_terms.append(EnvelopeTerm(label, CoeffFn(cofactor), bound))
        transitions.append(EnvelopeTransition(pair[0], pair[1], CoeffFn(base), tuple(final_terms)))

    envelope = Envelope(an, nominal, context, transitions, registry)
    LOGGER.info(
        "Envelope built: %d transitions, %d uncertainties (%s)",
        len(transitions), len(registry),
        ", ".join(f"{k.value}={v}" for k, v in envelope.counts_by_kind().items()),
    )
    return envelope
