"""Query-budgeted hard-label attack toolkit.

Patch-wise adversarial removal with a Boundary Attack baseline, a
noise-sensitivity measurement lab, synthetic oracles with analytic ground
truth, and a deterministic experiment harness.
"""

from .attacks import (AttackConfig, AttackState, QueryLog, boundary_attack,
                      boundary_followup, boundary_step, compose,
                      init_adversarial, par_attack)
from .core import (clip_to_valid, gaussian_noise, l2_distance, make_rng,
                   round_for_query)
from .errors import (BudgetExhausted, ContractViolation, InitFailed,
                     InsufficientSamples, OracleUnavailable, ProtocolError,
                     ShapeRejected, UnroundedInput)
from .harness import (ExperimentConfig, RunResult, aggregate, distance_curve,
                      export_heatmap, run_experiment)
from .oracle import (LinearOracle, OracleContract, PatchEnergyOracle,
                     QueryCounter, classify_counted, energy_oracle_sens,
                     external_oracle_connect)
from .patchgrid import (MaskPair, PatchGrid, build_grid, halve, init_masks,
                        query_value, select_patch, zero_patch)
from .sensitivity import (PatchRect, Prop1Report, SensitivityMap,
                          compress_patch, measure_sens, proposition1_check,
                          sensitivity_map)
from .synth import SynthCase, make_case, make_suite, write_suite

__version__ = "0.1.0"

__all__ = [
    "AttackConfig", "AttackState", "QueryLog", "boundary_attack",
    "boundary_followup", "boundary_step", "compose", "init_adversarial",
    "par_attack", "clip_to_valid", "gaussian_noise", "l2_distance",
    "make_rng", "round_for_query", "BudgetExhausted", "ContractViolation",
    "InitFailed", "InsufficientSamples", "OracleUnavailable",
    "ProtocolError", "ShapeRejected", "UnroundedInput", "ExperimentConfig",
    "RunResult", "aggregate", "distance_curve", "export_heatmap",
    "run_experiment", "LinearOracle", "OracleContract", "PatchEnergyOracle",
    "QueryCounter", "classify_counted", "energy_oracle_sens",
    "external_oracle_connect", "MaskPair", "PatchGrid", "build_grid",
    "halve", "init_masks", "query_value", "select_patch", "zero_patch",
    "PatchRect", "Prop1Report", "SensitivityMap", "compress_patch",
    "measure_sens", "proposition1_check", "sensitivity_map", "SynthCase",
    "make_case", "make_suite", "write_suite",
]
