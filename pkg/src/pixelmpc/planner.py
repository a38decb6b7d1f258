"""Sampling-based planning: CEM over hybrid action sequences and the
outer MPC loop with per-step replanning.

Action sequences are flat 3T-dimensional vectors (dx, dy, lift per step).
The lift coordinate is treated as continuous inside CEM and rounded to
the nearest valid integer when actions are materialized.  Elite refits
use a diagonal covariance with a floor; a full covariance over 3T
dimensions is rank-deficient with 10 elites.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import A_MAX, Action, LIFT_LEVELS, Task, ValidationError, make_rng, one_hot_probmap
from .cost import fields_for_task, horizon_cost
from .predictor import History, advect_prob, rollout
from .sim2d import WorldState, attach_pixel, render, step, true_pixel_position


@dataclass(frozen=True)
class CemConfig:
    m: int = 200            # samples per iteration
    k_elite: int = 10       # elites kept for the refit
    n_iter: int = 3
    horizon: int = 10
    init_std_xy: float = A_MAX / 2
    init_std_lift: float = 1.0
    min_std: float = 1e-2
    warm_start: bool = False

    def __post_init__(self):
        if not (1 <= self.k_elite < self.m):
            raise ValidationError("need 1 <= k_elite < m")
        if self.n_iter < 1 or self.horizon < 1:
            raise ValidationError("n_iter and horizon must be >= 1")


@dataclass
class ActionDistribution:
    """Diagonal Gaussian over the flattened 3T action vector."""

    mean: np.ndarray
    diag_cov: np.ndarray

    @classmethod
    def initial(cls, cfg: CemConfig):
        t = cfg.horizon
        mean = np.zeros(3 * t)
        std = np.tile([cfg.init_std_xy, cfg.init_std_xy, cfg.init_std_lift], t)
        return cls(mean, std ** 2)


def _materialize(row, t):
    acts = []
    for i in range(t):
        dx, dy, lift = row[3 * i:3 * i + 3]
        acts.append(Action.clamped(dx, dy, lift))
    return tuple(acts)


def sample_and_round(dist: ActionDistribution, m: int, rng) -> list:
    """Draw m action sequences; clamp the continuous part, clamp then
    round the lift coordinate to the nearest integer."""
    t = len(dist.mean) // 3
    std = np.sqrt(dist.diag_cov)
    raw = dist.mean[None, :] + rng.standard_normal((m, len(dist.mean))) * std[None, :]
    return [_materialize(row, t) for row in raw]


def _flatten(actions):
    return np.array([v for a in actions for v in (a.dx, a.dy, float(a.lift))])


@dataclass
class PlanResult:
    actions: tuple
    cost: float
    iteration_costs: list = field(default_factory=list)


def cem_plan(pred, hist: History, task: Task, cfg: CemConfig,
             cost_kind: str = "expected", seed=0, fields=None) -> PlanResult:
    """Iterative sample / select-elite / refit over action sequences.

    Returns the lowest-cost sequence seen across all iterations;
    deterministic in the seed, ties broken by sample index.
    """
    rng = make_rng(seed)
    if fields is None and cost_kind == "expected":
        fields = fields_for_task(task)
    dist = ActionDistribution.initial(cfg)
    best_actions, best_cost = None, math.inf
    iteration_costs = []
    for _ in range(cfg.n_iter):
        candidates = sample_and_round(dist, cfg.m, rng)
        costs = np.empty(cfg.m)
        for i, acts in enumerate(candidates):
            _, pmaps = rollout(pred, hist, acts)
            costs[i] = horizon_cost(pmaps, task, kind=cost_kind, fields=fields)
        order = np.argsort(costs, kind="stable")
        if costs[order[0]] < best_cost:
            best_cost = float(costs[order[0]])
            best_actions = candidates[order[0]]
        iteration_costs.append(float(costs[order[0]]))
        elite = np.stack([_flatten(candidates[i]) for i in order[:cfg.k_elite]])
        dist = ActionDistribution(
            elite.mean(axis=0),
            np.maximum(elite.var(axis=0), cfg.min_std ** 2))
    return PlanResult(best_actions, best_cost, iteration_costs)


@dataclass
class EpisodeResult:
    actions: list
    true_positions: list        # per step, per designated pixel (x, y)
    planned_costs: list
    initial_distances: np.ndarray
    final_distances: np.ndarray
    improvements: np.ndarray    # initial - final, per designated pixel
    frames: list = None


def _distances(positions, task):
    return np.array([math.hypot(px - gx, py - gy)
                     for (px, py), (gx, gy) in zip(positions, task.goals)])


def mpc_run(world0: WorldState, task: Task, make_predictor, cfg: CemConfig,
            cost_kind: str = "expected", tau_max: int = 15, seed=0,
            record_frames: bool = False) -> EpisodeResult:
    """Plan-execute-replan loop against the simulator.

    At every real step the belief maps are advanced one advection step
    with the executed action's predicted kernels/masks, so the next
    replanning starts from the 1-step-ahead prediction.
    """
    pred = make_predictor(world0)
    atts = [attach_pixel(world0, x, y) for x, y in task.designated]
    first_frame = render(world0)
    first_maps = tuple(one_hot_probmap(x, y, task.height, task.width)
                       for x, y in task.designated)
    pmaps = first_maps
    world = world0
    frame = first_frame

    init_pos = [true_pixel_position(world0, a) for a in atts]
    init_d = _distances(init_pos, task)

    actions, positions, planned_costs = [], [], []
    frames = [first_frame] if record_frames else None
    fields = fields_for_task(task)

    for tau in range(tau_max):
        hist = History(frames=(frame,), first_frame=first_frame,
                       probmaps=pmaps, first_probmaps=first_maps,
                       arm_xy=world.arm_xy, world=world)
        plan = cem_plan(pred, hist, task, cfg, cost_kind=cost_kind,
                        seed=make_rng(seed, tau).integers(2**63), fields=fields)
        act = plan.actions[0]

        # belief carry-over with the executed action's predicted output
        pstate = pred.init_state(hist)
        _, out = pred.forward(pstate, frame, act)
        pmaps = tuple(
            advect_prob(p, out, pred.mode,
                        p_first=pf if pred.mode == "sna" else None)
            for p, pf in zip(pmaps, first_maps))

        world = step(world, act)
        frame = render(world)
        actions.append(act)
        planned_costs.append(plan.cost)
        positions.append([true_pixel_position(world, a) for a in atts])
        if record_frames:
            frames.append(frame)

    final_pos = positions[-1] if positions else init_pos
    final_d = _distances(final_pos, task)
    return EpisodeResult(
        actions=actions, true_positions=positions, planned_costs=planned_costs,
        initial_distances=init_d, final_distances=final_d,
        improvements=init_d - final_d, frames=frames)


def random_run(world0: WorldState, task: Task, tau_max: int = 15, seed=0,
               record_frames: bool = False) -> EpisodeResult:
    """Uniform random actions, no planning; the benchmark baseline."""
    from .sim2d import random_action

    rng = make_rng(seed)
    atts = [attach_pixel(world0, x, y) for x, y in task.designated]
    init_pos = [true_pixel_position(world0, a) for a in atts]
    init_d = _distances(init_pos, task)
    world = world0
    actions, positions = [], []
    frames = [render(world0)] if record_frames else None
    for _ in range(tau_max):
        act = random_action(rng)
        world = step(world, act)
        actions.append(act)
        positions.append([true_pixel_position(world, a) for a in atts])
        if record_frames:
            frames.append(render(world))
    final_pos = positions[-1] if positions else init_pos
    final_d = _distances(final_pos, task)
    return EpisodeResult(
        actions=actions, true_positions=positions, planned_costs=[],
        initial_distances=init_d, final_distances=final_d,
        improvements=init_d - final_d, frames=frames)
