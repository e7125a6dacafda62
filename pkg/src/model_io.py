"""Model JSON reading and writing"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Union

from .agent_network import AgentNetwork, ParamFunction, Reaction, UncertaintySpec
from .exceptions import ModelFormatError
from .expr import AffineForm, Bound, Polynomial, RateExpr, SymbolKind, SymbolTable

LOGGER = logging.getLogger(__name__)

TOP_LEVEL_KEYS = {"states", "params", "reactions", "init", "horizon"}
PARAM_KEYS = {"nominal", "bound"}
REACTION_KEYS = {"transitions", "rate", "label"}
RATE_KEYS = {"poly", "denom"}
MONOMIAL_KEYS = {"coeff", "vars"}
DENOM_KEYS = {"const", "terms"}


def _reject_unknown(data: Dict[str, Any], allowed: set, where: str) -> None:
    if not isinstance(data, dict):
        raise ModelFormatError(f"{where}: expected an object, got {type(data).__name__}")
    unknown = sorted(set(data) - allowed)
    if unknown:
        raise ModelFormatError(f"{where}: unknown key(s) {', '.join(unknown)}")


def _require(data: Dict[str, Any], key: str, where: str) -> Any:
    if key not in data:
        raise ModelFormatError(f"{where}: missing key '{key}'")
    return data[key]


def _parse_nominal(value: Any, where: str) -> ParamFunction:
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return ParamFunction(constant=float(value))
    if isinstance(value, list) and value:
        try:
            table = tuple((float(t), float(v)) for t, v in value)
        except (TypeError, ValueError):
            raise ModelFormatError(f"{where}: nominal table must be a list of [t, v] pairs")
        return ParamFunction(table=table)
    raise ModelFormatError(f"{where}: nominal must be a number or a non-empty [[t, v], ...] table")


def _parse_rate(data: Any, symbols: SymbolTable, where: str) -> RateExpr:
    _reject_unknown(data, RATE_KEYS, where)
    poly_items = _require(data, "poly", where)
    if not isinstance(poly_items, list):
        raise ModelFormatError(f"{where}.poly: expected a list of monomials")
    for i, item in enumerate(poly_items):
        _reject_unknown(item, MONOMIAL_KEYS, f"{where}.poly[{i}]")
        _require(item, "coeff", f"{where}.poly[{i}]")

    def resolve(name: str) -> int:
        sid = symbols.lookup(name)
        if sid is None:
            sid = symbols.intern(name, SymbolKind.UNDECLARED)
        return sid

    try:
        numerator = Polynomial.from_json(poly_items, resolve)
    except (TypeError, ValueError, AttributeError) as e:
        raise ModelFormatError(f"{where}.poly: {e}")

    denominator = None
    if "denom" in data:
        denom = data["denom"]
        _reject_unknown(denom, DENOM_KEYS, f"{where}.denom")
        try:
            terms = {resolve(name): float(c) for name, c in denom.get("terms", {}).items()}
            denominator = AffineForm.from_mapping(float(denom.get("const", 0.0)), terms)
        except (TypeError, ValueError, AttributeError) as e:
            raise ModelFormatError(f"{where}.denom: {e}")
    return RateExpr(numerator, denominator)


def parse_model(data: Dict[str, Any]) -> AgentNetwork:
    """Build an AgentNetwork from the decoded model JSON

    Args:
        data: Decoded JSON object

    Returns:
        AgentNetwork (not yet validated)

    Raises:
        ModelFormatError: If the document does not follow the schema
    """
    _reject_unknown(data, TOP_LEVEL_KEYS, "model")
    symbols = SymbolTable()

    states = _require(data, "states", "model")
    if not isinstance(states, list) or not all(isinstance(s, str) for s in states):
        raise ModelFormatError("model.states: expected a list of names")
    if len(set(states)) != len(states):
        raise ModelFormatError("model.states: duplicate state names")
    for name in states:
        symbols.intern(name, SymbolKind.STATE)

    parameters: Dict[str, ParamFunction] = {}
    bounds: Dict[str, Bound] = {}
    params = data.get("params", {})
    if not isinstance(params, dict):
        raise ModelFormatError("model.params: expected an object")
    for name, spec in params.items():
        where = f"model.params.{name}"
        _reject_unknown(spec, PARAM_KEYS, where)
        if symbols.lookup(name) is not None:
            raise ModelFormatError(f"{where}: name clashes with a state")
        symbols.intern(name, SymbolKind.PARAMETER)
        try:
            parameters[name] = _parse_nominal(_require(spec, "nominal", where), where)
        except ValueError as e:
            raise ModelFormatError(f"{where}: {e}")
        bound = spec.get("bound", 0.0)
        if not isinstance(bound, (int, float)) or isinstance(bound, bool):
            raise ModelFormatError(f"{where}.bound: expected a number")
        bounds[name] = Bound(float(bound))

    reactions: List[Reaction] = []
    raw_reactions = _require(data, "reactions", "model")
    if not isinstance(raw_reactions, list):
        raise ModelFormatError("model.reactions: expected a list")
    for j, raw in enumerate(raw_reactions):
        where = f"model.reactions[{j}]"
        _reject_unknown(raw, REACTION_KEYS, where)
        try:
            transitions = tuple((str(src), str(dst)) for src, dst in _require(raw, "transitions", where))
        except (TypeError, ValueError):
            raise ModelFormatError(f"{where}.transitions: expected a list of [from, to] pairs")
        rate = _parse_rate(_require(raw, "rate", where), symbols, f"{where}.rate")
        reactions.append(Reaction(transitions, rate, str(raw.get("label", f"R{j + 1}"))))

    init = _require(data, "init", "model")
    if not isinstance(init, dict):
        raise ModelFormatError("model.init: expected an object")
    try:
        initial = {str(name): float(value) for name, value in init.items()}
        horizon = float(_require(data, "horizon", "model"))
    except (TypeError, ValueError) as e:
        raise ModelFormatError(f"model: {e}")

    return AgentNetwork(
        states=tuple(states),
        parameters=parameters,
        reactions=tuple(reactions),
        uncertainty=UncertaintySpec(bounds),
        initial=initial,
        horizon=horizon,
        symbols=symbols,
    )


def load_model(path: Union[str, Path]) -> AgentNetwork:
    """Read and parse a model file

    Raises:
        ModelFormatError: On unreadable files, malformed JSON or schema violations
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ModelFormatError(f"Cannot read model file {path}: {e}")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ModelFormatError(f"{path}: invalid JSON at line {e.lineno}, column {e.colno}: {e.msg}")
    LOGGER.debug("Parsing model %s", path)
    return parse_model(data)


def model_to_dict(an: AgentNetwork) -> Dict[str, Any]:
    """Inverse of parse_model"""
    params = {}
    for name, fn in an.parameters.items():
        nominal: Any = fn.constant if fn.constant is not None else [list(p) for p in fn.table]
        params[name] = {"nominal": nominal, "bound": an.uncertainty.bound(name).const_factor}
    reactions = []
    for reaction in an.reactions:
        entry = {
            "transitions": [list(pair) for pair in reaction.transitions],
            "rate": reaction.rate.to_json(an.symbols),
        }
        if reaction.label:
            entry["label"] = reaction.label
        reactions.append(entry)
    return {
        "states": list(an.states),
        "params": params,
        "reactions": reactions,
        "init": {s: an.initial[s] for s in an.states if s in an.initial},
        "horizon": an.horizon,
    }
