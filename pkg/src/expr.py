"""Polynomial and rational rate expressions over interned symbols

Rates of agent networks are sparse multivariate polynomials, optionally
divided by a positive affine form in state symbols. Symbols are interned
integer ids; a side table maps them to names and kinds, and the kinds drive
the grouping done by the envelope construction.

Polynomials keep their monomials in a dict keyed by a canonical exponent
tuple ``((symbol_id, exponent), ...)`` sorted by symbol id with no zero
exponents, so equal polynomials compare equal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, Iterable, List, Mapping, Optional, Tuple, Union

import numpy as np

from .exceptions import (
    BoundExceedsDenominator,
    ModelValidationError,
    NonPositiveDenominator,
    NotDivisible,
    UnassignedSymbol,
)

Number = Union[float, np.ndarray]
Exponents = Tuple[Tuple[int, int], ...]

# Merged coefficients this small relative to their largest contribution are cancellation noise
CANCELLATION_RTOL = 1e-12


class SymbolKind(Enum):
    """Role of a symbol inside the expression engine"""
    STATE = "state"
    PARAMETER = "parameter"
    NOMINAL = "nominal"
    DEVIATION = "deviation"
    PRODUCT = "product"
    RECIPROCAL = "reciprocal"
    UNDECLARED = "undeclared"


@dataclass(frozen=True)
class Symbol:
    """An interned symbol; ``source`` links nominal/deviation symbols to their origin"""
    id: int
    name: str
    kind: SymbolKind
    source: Optional[int] = None


class SymbolTable:
    """Side table mapping symbol ids to names and kinds"""

    def __init__(self):
        self._symbols: List[Symbol] = []
        self._by_name: Dict[str, int] = {}
        self._nominal: Dict[int, int] = {}
        self._deviation: Dict[int, int] = {}

    def intern(self, name: str, kind: SymbolKind, source: Optional[int] = None) -> int:
        """Return the id of ``name``, creating the symbol on first use

        Raises:
            ModelValidationError: If ``name`` already belongs to a symbol of another kind or origin
        """
        if name in self._by_name:
            sid = self._by_name[name]
            existing = self._symbols[sid]
            if existing.kind != kind or existing.source != source:
                raise ModelValidationError(
                    f"Symbol name '{name}' is already taken by a {existing.kind.value} symbol"
                )
            return sid
        sid = len(self._symbols)
        self._symbols.append(Symbol(sid, name, kind, source))
        self._by_name[name] = sid
        return sid

    def __getitem__(self, sid: int) -> Symbol:
        return self._symbols[sid]

    def __len__(self) -> int:
        return len(self._symbols)

    def __iter__(self):
        return iter(self._symbols)

    def lookup(self, name: str) -> Optional[int]:
        return self._by_name.get(name)

    def name(self, sid: int) -> str:
        return self._symbols[sid].name

    def kind(self, sid: int) -> SymbolKind:
        return self._symbols[sid].kind

    def ids_of_kind(self, kind: SymbolKind) -> List[int]:
        return [s.id for s in self._symbols if s.kind == kind]

    def nominal(self, sid: int) -> int:
        """Nominal counterpart x0 of a shifted symbol x"""
        if sid not in self._nominal:
            self._nominal[sid] = self.intern(
                f"{self.name(sid)}^0", SymbolKind.NOMINAL, source=sid
            )
        return self._nominal[sid]

    def deviation(self, sid: int) -> int:
        """Deviation counterpart u_x of a shifted symbol x"""
        if sid not in self._deviation:
            self._deviation[sid] = self.intern(
                f"u_{self.name(sid)}", SymbolKind.DEVIATION, source=sid
            )
        return self._deviation[sid]

    def origin(self, sid: int) -> int:
        """Follow ``source`` links back to the symbol that was shifted"""
        symbol = self._symbols[sid]
        return symbol.source if symbol.source is not None else sid


def _canonical(pairs: Iterable[Tuple[int, int]]) -> Exponents:
    merged: Dict[int, int] = {}
    for sid, exp in pairs:
        if exp < 0:
            raise ValueError(f"Exponent must be non-negative, got {exp}")
        merged[sid] = merged.get(sid, 0) + exp
    return tuple(sorted((sid, exp) for sid, exp in merged.items() if exp))


def _multiply_exponents(a: Exponents, b: Exponents) -> Exponents:
    return _canonical(a + b)


@dataclass(frozen=True)
class Monomial:
    """coefficient * prod(x_i ** e_i) in canonical form"""
    coefficient: float
    exponents: Exponents = ()

    def __post_init__(self):
        if not math.isfinite(self.coefficient) or self.coefficient == 0.0:
            raise ValueError(f"Monomial coefficient must be finite and nonzero, got {self.coefficient}")
        if self.exponents != _canonical(self.exponents):
            raise ValueError(f"Exponents are not canonical: {self.exponents}")

    def exponent(self, sid: int) -> int:
        return dict(self.exponents).get(sid, 0)

    @property
    def degree(self) -> int:
        return sum(exp for _, exp in self.exponents)


@dataclass(frozen=True)
class Polynomial:
    """Sparse multivariate polynomial with double-precision coefficients"""
    terms: Mapping[Exponents, float] = field(default_factory=dict)

    @staticmethod
    def from_terms(terms: Iterable[Tuple[Iterable[Tuple[int, int]], float]]) -> "Polynomial":
        """Build a merged polynomial

        A merged coefficient is dropped when it is zero or at most
        CANCELLATION_RTOL times the largest coefficient merged into it.
        """
        merged: Dict[Exponents, float] = {}
        scale: Dict[Exponents, float] = {}
        for exps, coeff in terms:
            key = _canonical(exps)
            coeff = float(coeff)
            merged[key] = merged.get(key, 0.0) + coeff
            scale[key] = max(scale.get(key, 0.0), abs(coeff))
        return Polynomial({
            k: v for k, v in merged.items()
            if v != 0.0 and abs(v) > CANCELLATION_RTOL * scale[k]
        })

    @staticmethod
    def constant(value: float) -> "Polynomial":
        return Polynomial.from_terms([((), value)])

    @staticmethod
    def variable(sid: int, exponent: int = 1) -> "Polynomial":
        return Polynomial.from_terms([(((sid, exponent),), 1.0)])

    @property
    def monomials(self) -> List[Monomial]:
        return [Monomial(c, e) for e, c in sorted(self.terms.items())]

    def is_zero(self) -> bool:
        return not self.terms

    def degree(self) -> int:
        return max((sum(e for _, e in exps) for exps in self.terms), default=0)

    def symbols(self) -> frozenset:
        return frozenset(sid for exps in self.terms for sid, _ in exps)

    def constant_term(self) -> float:
        return self.terms.get((), 0.0)

    def __add__(self, other: Union["Polynomial", float]) -> "Polynomial":
        if not isinstance(other, Polynomial):
            other = Polynomial.constant(other)
        return Polynomial.from_terms(list(self.terms.items()) + list(other.terms.items()))

    __radd__ = __add__

    def __neg__(self) -> "Polynomial":
        return Polynomial({e: -c for e, c in self.terms.items()})

    def __sub__(self, other: Union["Polynomial", float]) -> "Polynomial":
        if not isinstance(other, Polynomial):
            other = Polynomial.constant(other)
        return self + (-other)

    def __mul__(self, other: Union["Polynomial", float]) -> "Polynomial":
        if not isinstance(other, Polynomial):
            return Polynomial.from_terms((e, c * other) for e, c in self.terms.items())
        products = []
        for a_exps, a_coeff in self.terms.items():
            for b_exps, b_coeff in other.terms.items():
                products.append((_multiply_exponents(a_exps, b_exps), a_coeff * b_coeff))
        return Polynomial.from_terms(products)

    __rmul__ = __mul__

    def __pow__(self, power: int) -> "Polynomial":
        if power < 0:
            raise ValueError("Negative powers are not polynomials")
        result = Polynomial.constant(1.0)
        for _ in range(power):
            result = result * self
        return result

    def evaluate(self, assignment: Mapping[int, Number], table: Optional[SymbolTable] = None) -> Number:
        """Evaluate at ``assignment``; values may be numpy arrays (vectorized over a grid)"""
        total: Number = 0.0
        for exps, coeff in self.terms.items():
            value: Number = coeff
            for sid, exp in exps:
                try:
                    x = assignment[sid]
                except KeyError:
                    label = table.name(sid) if table is not None else str(sid)
                    raise UnassignedSymbol(f"No value assigned to symbol '{label}'")
                value = value * (x if exp == 1 else x ** exp)
            total = total + value
        return total

    def divide_by(self, sid: int) -> "Polynomial":
        """Decrement the exponent of ``sid`` in every monomial"""
        quotient = []
        for exps, coeff in self.terms.items():
            powers = dict(exps)
            if powers.get(sid, 0) < 1:
                raise NotDivisible(f"Monomial {exps} has no factor of symbol {sid}")
            powers[sid] -= 1
            quotient.append((powers.items(), coeff))
        return Polynomial.from_terms(quotient)

    def multiply_by(self, sid: int) -> "Polynomial":
        return self * Polynomial.variable(sid)

    def group_by(self, selected: Iterable[int]) -> Dict[Exponents, "Polynomial"]:
        """Split into {exponents over ``selected``: cofactor polynomial over the rest}"""
        chosen = set(selected)
        groups: Dict[Exponents, List[Tuple[Exponents, float]]] = {}
        for exps, coeff in self.terms.items():
            key = tuple((s, e) for s, e in exps if s in chosen)
            rest = tuple((s, e) for s, e in exps if s not in chosen)
            groups.setdefault(key, []).append((rest, coeff))
        return {key: Polynomial.from_terms(items) for key, items in groups.items()}

    def to_json(self, table: SymbolTable) -> List[dict]:
        return [
            {"coeff": coeff, "vars": {table.name(sid): exp for sid, exp in exps}}
            for exps, coeff in sorted(self.terms.items())
        ]

    @staticmethod
    def from_json(items: List[dict], resolve: Callable[[str], int]) -> "Polynomial":
        return Polynomial.from_terms(
            ([(resolve(name), int(exp)) for name, exp in item.get("vars", {}).items()], item["coeff"])
            for item in items
        )

    def render(self, table: SymbolTable) -> str:
        if not self.terms:
            return "0"
        parts = []
        for exps, coeff in sorted(self.terms.items()):
            factors = [
                table.name(sid) if exp == 1 else f"{table.name(sid)}^{exp}" for sid, exp in exps
            ]
            if not factors:
                parts.append(f"{coeff:.6g}")
            elif coeff == 1.0:
                parts.append("*".join(factors))
            else:
                parts.append(f"{coeff:.6g}*" + "*".join(factors))
        return " + ".join(parts)


@dataclass(frozen=True)
class AffineForm:
    """constant + sum(coefficient * state)"""
    constant: float = 0.0
    terms: Tuple[Tuple[int, float], ...] = ()

    @staticmethod
    def from_mapping(constant: float, terms: Mapping[int, float]) -> "AffineForm":
        return AffineForm(float(constant), tuple(sorted((sid, float(c)) for sid, c in terms.items() if c != 0.0)))

    def evaluate(self, assignment: Mapping[int, Number], table: Optional[SymbolTable] = None) -> Number:
        return self.to_polynomial().evaluate(assignment, table) if self.terms else self.constant

    def to_polynomial(self) -> Polynomial:
        return Polynomial.from_terms([((), self.constant)] + [(((sid, 1),), c) for sid, c in self.terms])

    def symbols(self) -> frozenset:
        return frozenset(sid for sid, _ in self.terms)

    def coefficient_mass(self) -> float:
        return sum(abs(c) for _, c in self.terms)

    def to_json(self, table: SymbolTable) -> dict:
        return {"const": self.constant, "terms": {table.name(sid): c for sid, c in self.terms}}

    def render(self, table: SymbolTable) -> str:
        return self.to_polynomial().render(table)


@dataclass(frozen=True)
class RateExpr:
    """numerator / denominator with an optional affine denominator"""
    numerator: Polynomial
    denominator: Optional[AffineForm] = None

    def evaluate(self, assignment: Mapping[int, Number], table: Optional[SymbolTable] = None) -> Number:
        value = self.numerator.evaluate(assignment, table)
        if self.denominator is None:
            return value
        denom = self.denominator.evaluate(assignment, table)
        if np.any(np.asarray(denom) <= 0.0):
            raise NonPositiveDenominator(f"Denominator evaluated to {denom}")
        return value / denom

    def symbols(self) -> frozenset:
        extra = self.denominator.symbols() if self.denominator is not None else frozenset()
        return self.numerator.symbols() | extra

    def is_zero(self) -> bool:
        return self.numerator.is_zero()

    def to_json(self, table: SymbolTable) -> dict:
        data = {"poly": self.numerator.to_json(table)}
        if self.denominator is not None:
            data["denom"] = self.denominator.to_json(table)
        return data

    def render(self, table: SymbolTable) -> str:
        if self.denominator is None:
            return self.numerator.render(table)
        return f"({self.numerator.render(table)}) / ({self.denominator.render(table)})"


def evaluate(expr: RateExpr, assignment: Mapping[int, Number], table: Optional[SymbolTable] = None) -> Number:
    """Numerator value divided by denominator value (1 if absent)"""
    return expr.evaluate(assignment, table)


def divide_by_state(p: Polynomial, state: int) -> Polynomial:
    """Divide every monomial of ``p`` by the state symbol; raises NotDivisible"""
    return p.divide_by(state)


def shift_expand(p: Polynomial, shifted: Iterable[int], table: SymbolTable) -> Polynomial:
    """Substitute x <- x0 + u_x for every shifted symbol and expand"""
    shifted = set(shifted)
    result = Polynomial()
    for exps, coeff in p.terms.items():
        term = Polynomial.constant(coeff)
        for sid, exp in exps:
            if sid in shifted:
                nominal, dev = table.nominal(sid), table.deviation(sid)
                factor = Polynomial.from_terms(
                    ([(nominal, exp - k), (dev, k)], math.comb(exp, k)) for k in range(exp + 1)
                )
            else:
                factor = Polynomial.variable(sid, exp)
            term = term * factor
        result = result + term
    return result


def reciprocal_bound(sigma_min: float, zeta: float) -> float:
    """Bound on |1/(sigma + u) - 1/sigma| for |u| <= zeta < sigma_min"""
    if zeta < 0:
        raise ValueError(f"zeta must be non-negative, got {zeta}")
    if zeta >= sigma_min:
        raise BoundExceedsDenominator(
            f"Denominator deviation {zeta:.6g} reaches its minimum {sigma_min:.6g}"
        )
    return zeta / (sigma_min - zeta)


@dataclass(frozen=True)
class Bound:
    """Uncertainty bound as a function of the iterate eps

    value(eps) = const_factor * eps**eps_power * prod(reciprocal_bound(sigma_min, scale*eps)**k)
    """
    const_factor: float
    eps_power: int = 0
    reciprocal: Tuple[Tuple[float, float, int], ...] = ()

    def value(self, eps: float) -> float:
        result = self.const_factor * (eps ** self.eps_power if self.eps_power else 1.0)
        for scale, sigma_min, power in self.reciprocal:
            result *= reciprocal_bound(sigma_min, scale * eps) ** power
        return result

    def depends_on_eps(self) -> bool:
        return self.eps_power > 0 or bool(self.reciprocal)

    def __mul__(self, other: "Bound") -> "Bound":
        powers: Dict[Tuple[float, float], int] = {}
        for scale, sigma_min, power in self.reciprocal + other.reciprocal:
            powers[(scale, sigma_min)] = powers.get((scale, sigma_min), 0) + power
        return Bound(
            self.const_factor * other.const_factor,
            self.eps_power + other.eps_power,
            tuple(sorted((s, m, k) for (s, m), k in powers.items())),
        )

    def __pow__(self, power: int) -> "Bound":
        result = Bound(1.0)
        for _ in range(power):
            result = result * self
        return result

    def describe(self) -> str:
        parts = [f"{self.const_factor:.6g}"]
        if self.eps_power == 1:
            parts.append("eps")
        elif self.eps_power > 1:
            parts.append(f"eps^{self.eps_power}")
        for scale, sigma_min, power in self.reciprocal:
            rec = f"rec({scale:.6g}*eps; {sigma_min:.6g})"
            parts.append(rec if power == 1 else f"{rec}^{power}")
        return "*".join(parts)
