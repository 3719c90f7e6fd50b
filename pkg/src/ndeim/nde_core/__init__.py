"""Neutral equations with discrete delays: problems, integration, cut-off."""

from .cutoff import chi, chi_derivs, cutoff_modify, max_chi_slope, scaling
from .io import trajectory_from_csv, trajectory_to_csv
from .problem import HistoryError, HistorySegment, NdeProblem, NeutralPart, RhsField, Trajectory
from .solver import (
    DivergenceError,
    StepSizeError,
    default_step,
    residual,
    step_solve,
    step_solve_nonautonomous,
)
