"""Model file and agent network validation"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np

from .agent_network import AgentNetwork, evaluate_transition_rates, transition_rates
from .config import IntegratorConfig
from .exceptions import ModelValidationError, NotDivisible, ReachError
from .expr import SymbolKind
from .ode import nominal_trajectory

LOGGER = logging.getLogger(__name__)

ERROR = "error"
WARNING = "warning"


@dataclass(frozen=True)
class Diagnostic:
    severity: str
    code: str
    message: str

    def __str__(self) -> str:
        return f"{self.severity.upper()} [{self.code}] {self.message}"


def has_errors(diagnostics: List[Diagnostic]) -> bool:
    return any(d.severity == ERROR for d in diagnostics)


class ModelValidator:
    """Validator for model files and agent networks"""

    @staticmethod
    def validate_file(file_path: Path) -> Tuple[bool, str]:
        """Validate file existence and format

        Args:
            file_path: Path to the model file

        Returns:
            tuple[bool, str]: (is_valid, error_message)
        """
        if not file_path.exists():
            return False, f"File does not exist: {file_path}"

        if not file_path.is_file():
            return False, f"Path is not a file: {file_path}"

        if file_path.suffix.lower() != '.json':
            return False, f"Invalid file format: expected .json, got {file_path.suffix}"

        return True, ""

    @staticmethod
    def check_structure(an: AgentNetwork) -> List[Diagnostic]:
        """Schema-level checks that need no numerics"""
        found: List[Diagnostic] = []
        declared = set(an.states)

        if not an.states:
            found.append(Diagnostic(ERROR, "EmptyModel", "Model declares no states"))
        if not an.horizon > 0:
            found.append(Diagnostic(ERROR, "InvalidHorizon", f"Horizon must be positive, got {an.horizon}"))

        for symbol in an.symbols:
            if symbol.kind == SymbolKind.UNDECLARED:
                found.append(Diagnostic(ERROR, "UnknownSymbol", f"Rate uses undeclared symbol '{symbol.name}'"))

        user_ids = an.symbols.ids_of_kind(SymbolKind.STATE) + an.symbols.ids_of_kind(SymbolKind.PARAMETER)
        user_names = {an.symbols.name(sid) for sid in user_ids}
        for sid in user_ids:
            name = an.symbols.name(sid)
            for derived in (f"u_{name}", f"{name}^0"):
                if derived in user_names:
                    found.append(Diagnostic(
                        ERROR, "ReservedName",
                        f"Name '{derived}' is reserved for the envelope counterpart of '{name}'"
                    ))

        for j, reaction in enumerate(an.reactions):
            label = reaction.label or f"#{j + 1}"
            if not reaction.transitions:
                found.append(Diagnostic(ERROR, "EmptyReaction", f"Reaction {label} has no transitions"))
            for source, target in reaction.transitions:
                for name in (source, target):
                    if name not in declared:
                        found.append(Diagnostic(
                            ERROR, "UnknownSymbol", f"Reaction {label} refers to undeclared state '{name}'"
                        ))
            denominator = reaction.rate.denominator
            if denominator is None:
                continue
            bad = [an.symbols.name(s) for s in denominator.symbols() if an.symbols.kind(s) != SymbolKind.STATE]
            if bad or denominator.constant < 0 or any(c <= 0 for _, c in denominator.terms):
                found.append(Diagnostic(
                    ERROR, "NonAffineDenominator",
                    f"Reaction {label}: denominator must be a nonnegative constant plus "
                    f"positive multiples of states"
                ))
            for exps in reaction.rate.numerator.terms:
                if any(an.symbols.kind(s) == SymbolKind.PARAMETER and e > 1 for s, e in exps):
                    found.append(Diagnostic(
                        ERROR, "NonAffineDenominator",
                        f"Reaction {label}: parameter powers above 1 are not supported next to a denominator"
                    ))
                    break

        for name in an.initial:
            if name not in declared:
                found.append(Diagnostic(ERROR, "UnknownSymbol", f"Initial value given for undeclared state '{name}'"))
        for name in an.states:
            value = an.initial.get(name)
            if value is None or not value > 0:
                found.append(Diagnostic(
                    ERROR, "NonPositiveInitial", f"Initial value of {name} must be positive, got {value}"
                ))

        for name, fn in an.parameters.items():
            if not fn.covers(an.horizon):
                found.append(Diagnostic(
                    ERROR, "InvalidParameterTable",
                    f"Table of {name} must have strictly increasing times covering [0; {an.horizon}]"
                ))
                continue
            nominal_min = fn.minimum(an.horizon)
            if not nominal_min > 0:
                found.append(Diagnostic(
                    ERROR, "NonPositiveNominal", f"Nominal value of {name} must stay positive, minimum {nominal_min}"
                ))
            bound = an.uncertainty.bound(name)
            if bound.const_factor < 0:
                found.append(Diagnostic(ERROR, "InvalidBound", f"Bound of {name} must be non-negative"))
            elif bound.const_factor >= nominal_min:
                found.append(Diagnostic(
                    ERROR, "BoundExceedsNominal",
                    f"Bound {bound.const_factor:g} of {name} must be below its nominal minimum "
                    f"{nominal_min:g} (admissible uncertainties keep parameters positive)"
                ))
        return found

    @staticmethod
    def check_nominal(an: AgentNetwork, cfg: Optional[IntegratorConfig] = None) -> List[Diagnostic]:
        """Integrate the nominal model and check rates along it"""
        found: List[Diagnostic] = []
        try:
            rates = transition_rates(an)
        except NotDivisible as e:
            return [Diagnostic(ERROR, "NotDivisible", str(e))]
        except ModelValidationError as e:
            return [Diagnostic(ERROR, "MixedDenominators", str(e))]

        try:
            trajectory, eps_prime = nominal_trajectory(an, cfg)
        except ReachError as e:
            return [Diagnostic(ERROR, "NominalPositivity", str(e))]

        values = {name: trajectory.values[:, k] for k, name in enumerate(an.states)}
        try:
            sampled = evaluate_transition_rates(an, rates, trajectory.times, values)
        except ReachError as e:
            return [Diagnostic(ERROR, "NominalPositivity", str(e))]
        for (source, target), rate in sampled.items():
            low = float(np.min(rate))
            if low < 0:
                found.append(Diagnostic(
                    WARNING, "NegativeNominalRate",
                    f"Rate {source}->{target} reaches {low:.6g} along the nominal solution"
                ))
        LOGGER.info("Nominal check passed with eps' = %.6g", eps_prime)
        return found

    @classmethod
    def validate(cls, an: AgentNetwork, cfg: Optional[IntegratorConfig] = None) -> List[Diagnostic]:
        """Diagnostics for an agent network; never raises

        Structural errors stop the check before any numerics run.
        """
        found = cls.check_structure(an)
        if has_errors(found):
            return found
        return found + cls.check_nominal(an, cfg)


def validate(an: AgentNetwork, cfg: Optional[IntegratorConfig] = None) -> List[Diagnostic]:
    return ModelValidator.validate(an, cfg)
