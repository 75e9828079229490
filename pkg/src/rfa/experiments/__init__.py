"""Experiment harness: each function returns an :class:`ExperimentReport`."""

from .connection_checks import closed_form_agreement, connection_rows, coupling_sweep, grid_step_report
from .consistency import consistency_sweep, subsample_size, uniform_level
from .convergence import clt_experiment, grid_points, sup_convergence_experiment
from .diagnostics import (
    diameter_sweep,
    noise_bound_report,
    side_length_sweep,
    stone_diagnostics,
    uniform_side_length_check,
)
from .report import ExperimentReport, Verdict, joint_se
from .risk import RiskEstimate, estimate_risk, risk_bound, risk_gap_experiment, trees_needed

__all__ = [
    "ExperimentReport",
    "Verdict",
    "joint_se",
    "RiskEstimate",
    "estimate_risk",
    "risk_bound",
    "risk_gap_experiment",
    "trees_needed",
    "clt_experiment",
    "sup_convergence_experiment",
    "grid_points",
    "consistency_sweep",
    "uniform_level",
    "subsample_size",
    "stone_diagnostics",
    "diameter_sweep",
    "uniform_side_length_check",
    "side_length_sweep",
    "noise_bound_report",
    "closed_form_agreement",
    "coupling_sweep",
    "grid_step_report",
    "connection_rows",
]
