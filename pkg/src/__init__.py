"""anreach: certified reach tubes for agent networks

Nonlinear fluid models with time-varying uncertain parameters are bounded
by extremal transient probabilities of controlled Markov chains.
"""

__version__ = "1.0.0"
__author__ = "anreach developers"
