"""Built-in case-study models: multi-class SIRS and GPS queueing"""

from typing import Any, Dict, List

from .agent_network import AgentNetwork
from .model_io import parse_model

HORIZON = 3.0


def sirs_dict(D: int, bound: float) -> Dict[str, Any]:
    """Multi-class SIRS with alpha = 1, beta = 2, gamma = 3, all parameters uncertain

    Classes nu, mu run over 1..D; reaction S_nu + I_mu -> I_nu + I_mu at rate
    alpha_{nu,mu} V_{S_nu} V_{I_mu}.
    """
    if D < 1:
        raise ValueError(f"Number of classes must be at least 1, got {D}")
    classes = range(1, D + 1)
    states: List[str] = [f"{kind}{nu}" for kind in "SIR" for nu in classes]
    params: Dict[str, Any] = {}
    reactions: List[Dict[str, Any]] = []
    for nu in classes:
        for mu in classes:
            name = f"alpha_{nu}_{mu}"
            params[name] = {"nominal": 1.0, "bound": bound}
            reactions.append({
                "transitions": [[f"S{nu}", f"I{nu}"], [f"I{mu}", f"I{mu}"]],
                "rate": {"poly": [{"coeff": 1.0, "vars": {name: 1, f"S{nu}": 1, f"I{mu}": 1}}]},
                "label": f"infect_{nu}_{mu}",
            })
    for nu in classes:
        params[f"beta_{nu}"] = {"nominal": 2.0, "bound": bound}
        params[f"gamma_{nu}"] = {"nominal": 3.0, "bound": bound}
        reactions.append({
            "transitions": [[f"I{nu}", f"R{nu}"]],
            "rate": {"poly": [{"coeff": 1.0, "vars": {f"beta_{nu}": 1, f"I{nu}": 1}}]},
            "label": f"recover_{nu}",
        })
        reactions.append({
            "transitions": [[f"R{nu}", f"S{nu}"]],
            "rate": {"poly": [{"coeff": 1.0, "vars": {f"gamma_{nu}": 1, f"R{nu}": 1}}]},
            "label": f"immunity_loss_{nu}",
        })
    init = {f"S{nu}": 4.0 + 0.1 * (nu - 1) for nu in classes}
    init.update({f"I{nu}": 1.0 for nu in classes})
    init.update({f"R{nu}": 1.0 for nu in classes})
    return {"states": states, "params": params, "reactions": reactions, "init": init, "horizon": HORIZON}


def gps_dict(D: int, bound: float) -> Dict[str, Any]:
    """GPS queueing with D job classes; only the service rates alpha_nu are uncertain

    phi_nu = 2 nu / (D (D + 1)) is folded into the rate coefficients.
    """
    if D < 1:
        raise ValueError(f"Number of classes must be at least 1, got {D}")
    classes = range(1, D + 1)
    phi = {nu: 2.0 * nu / (D * (D + 1)) for nu in classes}
    states = [f"{kind}{nu}" for kind in "QD" for nu in classes]
    denom = {"const": 0.0, "terms": {f"Q{mu}": phi[mu] for mu in classes}}
    params: Dict[str, Any] = {}
    reactions: List[Dict[str, Any]] = []
    for nu in classes:
        params[f"alpha_{nu}"] = {"nominal": 3.0, "bound": bound}
        params[f"beta_{nu}"] = {"nominal": 4.0, "bound": 0.0}
        reactions.append({
            "transitions": [[f"Q{nu}", f"D{nu}"]],
            "rate": {
                "poly": [{"coeff": phi[nu], "vars": {f"alpha_{nu}": 1, f"Q{nu}": 1}}],
                "denom": denom,
            },
            "label": f"serve_{nu}",
        })
        reactions.append({
            "transitions": [[f"D{nu}", f"Q{nu}"]],
            "rate": {"poly": [{"coeff": 1.0, "vars": {f"beta_{nu}": 1, f"D{nu}": 1}}]},
            "label": f"return_{nu}",
        })
    init = {f"Q{nu}": 0.8 for nu in classes}
    init.update({f"D{nu}": 0.2 for nu in classes})
    return {"states": states, "params": params, "reactions": reactions, "init": init, "horizon": HORIZON}


def sirs_model(D: int, bound: float) -> AgentNetwork:
    return parse_model(sirs_dict(D, bound))


def gps_model(D: int, bound: float) -> AgentNetwork:
    return parse_model(gps_dict(D, bound))


def example_model(spec: str, bound: float = 0.05) -> AgentNetwork:
    """Dispatch ``sirs:D`` / ``gps:D`` to the matching generator

    Raises:
        ValueError: If the spec is not of the form family:D
    """
    family, _, classes = spec.partition(":")
    builders = {"sirs": sirs_model, "gps": gps_model}
    if family not in builders:
        raise ValueError(f"Unknown example family '{family}', expected one of {', '.join(builders)}")
    try:
        D = int(classes) if classes else 1
    except ValueError:
        raise ValueError(f"Number of classes must be an integer, got '{classes}'")
    return builders[family](D, bound)
