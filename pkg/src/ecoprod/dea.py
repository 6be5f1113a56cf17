"""Input-oriented efficiency scoring over an empirical production frontier.

Each decision-making unit o is scored by the linear program

    min theta
    s.t.  sum_j lambda_j * x_ij <= theta * x_io   for every input i
          sum_j lambda_j * y_rj >= y_ro           for every output r
          sum_j lambda_j = 1                      (variable returns to scale only)
          lambda_j >= 0

Scores land in (0, 1]; units on the frontier score exactly 1.  The high/low
treatment split uses the median score with a strict-greater-than rule, which
is deterministic for any unit count.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import lp
from .errors import DeaError, DegenerateUnitError, NoSplitError

# Scores within this distance of 1 are snapped to exactly 1 (floating-point
# slack from the LP can land a frontier unit at 1 +/- a few ulps).
FRONTIER_SNAP_TOL = 1e-9


class ReturnsToScale(Enum):
    CRS = "crs"
    VRS = "vrs"


class EcoGroup(Enum):
    HIGH = "High"
    LOW = "Low"


@dataclass(frozen=True)
class DeaPanel:
    """Inputs X (m x n), outputs Y (s x n), one column per unit."""

    inputs: np.ndarray
    outputs: np.ndarray
    unit_ids: tuple[int, ...]

    def __post_init__(self):
        x = np.atleast_2d(np.asarray(self.inputs, dtype=np.float64))
        y = np.atleast_2d(np.asarray(self.outputs, dtype=np.float64))
        if x.shape[1] != y.shape[1]:
            raise DeaError(f"{x.shape[1]} input columns vs {y.shape[1]} output columns")
        if x.shape[1] < 1:
            raise DeaError("panel needs at least one unit")
        if len(self.unit_ids) != x.shape[1]:
            raise DeaError("unit_ids length does not match column count")
        if np.any(x < 0) or not np.all(np.isfinite(x)):
            raise DeaError("inputs must be finite and non-negative")
        if np.any(y <= 0) or not np.all(np.isfinite(y)):
            raise DeaError("outputs must be finite and strictly positive")
        if np.any(x.sum(axis=0) <= 0):
            raise DeaError("every unit needs at least one positive input")
        object.__setattr__(self, "inputs", x)
        object.__setattr__(self, "outputs", y)
        object.__setattr__(self, "unit_ids", tuple(self.unit_ids))

    @property
    def n_units(self) -> int:
        return self.inputs.shape[1]


@dataclass(frozen=True)
class DeaOptions:
    rts: ReturnsToScale = ReturnsToScale.VRS


@dataclass(frozen=True)
class DeaScores:
    """Efficiency scores theta (per unit) and peer weights (one row per unit)."""

    theta: np.ndarray
    weights: np.ndarray
    unit_ids: tuple[int, ...]


def _unit_program(panel: DeaPanel, o: int, rts: ReturnsToScale) -> lp.LinearProgram:
    """Build the scoring LP for unit o over variables (theta, lambda_1..n)."""
    x, y = panel.inputs, panel.outputs
    m, n = x.shape
    s = y.shape[0]

    rows = []
    relations = []
    rhs = []
    for i in range(m):
        rows.append(np.concatenate(([-x[i, o]], x[i, :])))
        relations.append(lp.LESS_EQUAL)
        rhs.append(0.0)
    for r in range(s):
        rows.append(np.concatenate(([0.0], y[r, :])))
        relations.append(lp.GREATER_EQUAL)
        rhs.append(y[r, o])
    if rts is ReturnsToScale.VRS:
        rows.append(np.concatenate(([0.0], np.ones(n))))
        relations.append(lp.EQUAL)
        rhs.append(1.0)

    objective = np.zeros(n + 1)
    objective[0] = 1.0
    return lp.LinearProgram(
        objective=objective,
        constraints=np.array(rows),
        relations=tuple(relations),
        rhs=np.array(rhs),
    )


def dea_scores(panel: DeaPanel, opts: DeaOptions = DeaOptions()) -> DeaScores:
    """Score every unit of the panel under the configured returns to scale.

    Raises `DegenerateUnitError` if an evaluated unit has a zero entry in
    any input dimension (input contraction is undefined there), and
    `DeaError` naming the unit if its LP cannot be solved.
    """
    n = panel.n_units
    theta = np.empty(n)
    weights = np.empty((n, n))
    for o in range(n):
        zero_inputs = np.nonzero(panel.inputs[:, o] == 0.0)[0]
        if zero_inputs.size:
            raise DegenerateUnitError(
                f"unit {panel.unit_ids[o]} has zero input in dimension "
                f"{int(zero_inputs[0])}; input-oriented score is undefined"
            )
        program = _unit_program(panel, o, opts.rts)
        try:
            solution = lp.solve(program)
        except lp.SolverFailureError as exc:
            raise DeaError(f"LP solver failed for unit {panel.unit_ids[o]}: {exc}") from exc
        if solution.status is not lp.LpStatus.OPTIMAL:
            raise DeaError(
                f"unit {panel.unit_ids[o]}: scoring LP is {solution.status.value}"
            )
        value = solution.x[0]
        if abs(value - 1.0) <= FRONTIER_SNAP_TOL:
            value = 1.0
        if not 0.0 < value <= 1.0:
            raise DeaError(
                f"unit {panel.unit_ids[o]}: score {value!r} outside (0, 1]"
            )
        theta[o] = value
        weights[o] = solution.x[1:]
    return DeaScores(theta=theta, weights=weights, unit_ids=panel.unit_ids)


def split_by_median(scores: DeaScores | np.ndarray) -> list[EcoGroup]:
    """High/low split at the median score.

    The median is the lower of the two middle order statistics for even
    counts; units strictly above it are HIGH, everything else LOW.  A
    panel whose scores are all identical cannot be split and raises
    `NoSplitError`.
    """
    theta = scores.theta if isinstance(scores, DeaScores) else np.asarray(scores, dtype=np.float64)
    if theta.shape[0] < 2:
        raise NoSplitError("need at least 2 scores to split")
    if np.all(theta == theta[0]):
        raise NoSplitError("all scores identical; no median split exists")
    median = float(np.sort(theta)[(theta.shape[0] - 1) // 2])
    return [EcoGroup.HIGH if t > median else EcoGroup.LOW for t in theta]
