"""simtol: simulation-with-tolerance verification for probabilistic timed
broadcast networks, with a gossip-protocol case catalog."""

from .poly import Poly, parse_poly, parse_rational
from .calculus import (
    Bcast, Choice, Fix, Network, Nil, Node, PVar, Recv, Sleep, Tau, Value,
    ValueVar, canonical_form, cell, check_well_formed, nodes, subst_value,
    unfold_fix,
)
from .gossip import build_case, CASE_NAMES, paired_done

__all__ = [
    "Poly", "parse_poly", "parse_rational",
    "Bcast", "Choice", "Fix", "Network", "Nil", "Node", "PVar", "Recv",
    "Sleep", "Tau", "Value", "ValueVar",
    "canonical_form", "cell", "check_well_formed", "nodes", "subst_value",
    "unfold_fix",
    "build_case", "CASE_NAMES", "paired_done",
]
