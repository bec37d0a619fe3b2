"""Simulation of hybrid quantum-classical Markov dynamics driven by jump-diffusions."""

__version__ = "0.1.0"

from .engine import Ensemble, Mode, NumericalError, simulate_ensemble, simulate_trajectory, step_p, step_q
from .models import HybridModel, ModelError, build_builtin, list_models, register_model
from .states import StateError

__all__ = [
    "Ensemble", "HybridModel", "Mode", "ModelError", "NumericalError", "StateError", "build_builtin",
    "list_models", "register_model", "simulate_ensemble", "simulate_trajectory", "step_p", "step_q",
]
