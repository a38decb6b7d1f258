"""Planning objectives over predicted probability maps.

The primary cost is the expected Euclidean distance between the
designated pixel and its goal under the predicted location distribution,
summed over the horizon.  The log-probability cost of the goal pixel at
the final step is kept as a comparison baseline; it degrades on long
tasks because nearly all predicted mass sits away from the goal.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ProbMap, ShapeMismatch, Task, ValidationError

LOGPROB_EPS = 1e-12


@dataclass(frozen=True)
class DistanceField:
    """H x W map of Euclidean pixel distances to one goal location."""

    goal: tuple
    data: np.ndarray

    @classmethod
    def for_goal(cls, goal, h, w):
        gx, gy = float(goal[0]), float(goal[1])
        ys, xs = np.mgrid[0:h, 0:w]
        d = np.hypot(xs - gx, ys - gy)
        d.setflags(write=False)
        return cls((gx, gy), d)


def expected_distance(p: ProbMap, field: DistanceField) -> float:
    """Sum over pixels of p * distance-to-goal (Hadamard product)."""
    if p.data.shape != field.data.shape:
        raise ShapeMismatch(
            f"probmap {p.data.shape} vs distance field {field.data.shape}")
    return float(np.sum(p.data * field.data))


def fields_for_task(task: Task):
    """One cached DistanceField per designated pixel; reused across all
    CEM rollouts of the task."""
    return tuple(DistanceField.for_goal(g, task.height, task.width) for g in task.goals)


def horizon_cost(probmaps, task: Task, kind: str = "expected", fields=None) -> float:
    """Total planning cost of a predicted rollout.

    probmaps: T-long sequence of per-designated-pixel ProbMap tuples.
    'expected' sums weighted expected distances over all steps and pixels;
    'logprob' scores only the final step's probability at each goal.
    """
    if kind not in ("expected", "logprob"):
        raise ValidationError(f"unknown cost kind {kind!r}")
    if len(probmaps) == 0:
        raise ValidationError("empty rollout")
    for row in probmaps:
        if len(row) != task.p:
            raise ShapeMismatch(f"expected {task.p} probmaps per step, got {len(row)}")
    if kind == "logprob":
        total = 0.0
        for w, p, (gx, gy) in zip(task.weights, probmaps[-1], task.goals):
            total += w * -np.log(p.data[int(round(gy)), int(round(gx))] + LOGPROB_EPS)
        return float(total)
    if fields is None:
        fields = fields_for_task(task)
    total = 0.0
    for row in probmaps:
        for w, p, f in zip(task.weights, row, fields):
            total += w * expected_distance(p, f)
    return float(total)
