"""Simulation lab for SWAP-gate tampering of hybrid quantum-classical classifiers."""
from .attack import (
    AttackConfig,
    AttackMode,
    AttackReport,
    Perturbation,
    attack_success,
    inject_targeted,
    inject_untargeted,
    optimize_perturbation,
    run_attack,
)
from .circuit import Circuit, GateKind, GateOp, Role, Tag, lower_swaps, parse, serialize, stats, validate
from .detector import Verdict, compare, fingerprint
from .hqnn import Dataset, HybridModel, LossReport, Readout, forward, init_model, train

__version__ = "0.1.0"

__all__ = [
    "AttackConfig",
    "AttackMode",
    "AttackReport",
    "Circuit",
    "Dataset",
    "GateKind",
    "GateOp",
    "HybridModel",
    "LossReport",
    "Perturbation",
    "Readout",
    "Role",
    "Tag",
    "Verdict",
    "attack_success",
    "compare",
    "fingerprint",
    "forward",
    "init_model",
    "inject_targeted",
    "inject_untargeted",
    "lower_swaps",
    "optimize_perturbation",
    "parse",
    "run_attack",
    "serialize",
    "stats",
    "train",
    "validate",
]
