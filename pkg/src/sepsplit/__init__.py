"""Separatrix splitting near a multiple resonance: model, geometry, Melnikov theory,
homological solvers and a direct symplectic-integration experiment."""

__version__ = "0.1.0"

from .model import ModelParams, PerturbationSpec, PhaseState, characteristic_exponents  # noqa: E402,F401
