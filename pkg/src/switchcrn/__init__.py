"""Stability of reaction networks in randomly switching environments.

A switched model is a finite set of mass-action networks on shared species
plus a rate matrix Q for the environment chain, which jumps at rate kappa Q.
The package classifies the fast- and slow-switching regimes from the
linearized matrices, builds and checks Lyapunov functions, and simulates the
joint chain exactly.
"""

from .classify import Conclusion, ConclusionKind, RegimeVerdict, UnknownReason, classify
from .model import ModelError, SwitchedModel, build_model, linearize, load_model, parse_model
from .sim import SimConfig, escape_fraction, simulate, sweep_kappa

__version__ = "0.1.0"

__all__ = [
    "Conclusion", "ConclusionKind", "RegimeVerdict", "UnknownReason", "classify", "ModelError",
    "SwitchedModel", "build_model", "linearize", "load_model", "parse_model", "SimConfig",
    "escape_fraction", "simulate", "sweep_kappa",
]
