"""Deterministic top-down 2D pushing world.

Quasi-static physics: no velocities or friction, just overlap projection.
When the arm's disc penetrates an object, the object is translated along
the arm's motion direction by the penetration depth scaled by
1/mass_class, capped by the arm's own displacement.  This keeps the
dynamics simple enough that an exact kernel/mask predictor can be derived
from ground truth.

The world is also the source of evaluation ground truth: designated
pixels are bound to object-local offsets at task start and tracked
analytically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .core import (
    A_MAX,
    LIFT_LEVELS,
    Action,
    Frame,
    ValidationError,
    make_rng,
)

ARM_RADIUS = 4.0
BG_COLOR = (0.92, 0.92, 0.88)
ARM_COLOR = (0.13, 0.14, 0.20)
RING_COLOR = (0.95, 0.78, 0.10)


@dataclass(frozen=True)
class ObjectSpec:
    """Rigid object: a disc or an axis-angled rectangle."""

    kind: str  # "disc" | "rect"
    size: tuple  # disc: (radius,)  rect: (half_w, half_h)
    color: tuple
    mass_class: float = 1.0

    def __post_init__(self):
        if self.kind not in ("disc", "rect"):
            raise ValidationError(f"unknown object kind {self.kind!r}")
        size = tuple(float(s) for s in self.size)
        if self.kind == "disc" and (len(size) != 1 or size[0] < 2):
            raise ValidationError("disc needs (radius,) with radius >= 2")
        if self.kind == "rect" and (len(size) != 2 or min(size) < 2):
            raise ValidationError("rect needs (half_w, half_h), each >= 2")
        if self.mass_class <= 0:
            raise ValidationError("mass_class must be positive")
        object.__setattr__(self, "size", size)
        object.__setattr__(self, "color", tuple(float(c) for c in self.color))
        object.__setattr__(self, "mass_class", float(self.mass_class))

    @property
    def bound_radius(self):
        if self.kind == "disc":
            return self.size[0]
        return math.hypot(self.size[0], self.size[1])


@dataclass(frozen=True)
class ObjectState:
    spec: ObjectSpec
    x: float
    y: float
    angle: float = 0.0


@dataclass(frozen=True)
class WorldState:
    height: int
    width: int
    arm_x: float
    arm_y: float
    lift_remaining: int = 0
    objects: tuple = ()
    time: int = 0

    @property
    def arm_xy(self):
        return (self.arm_x, self.arm_y)


def _clamp(v, lo, hi):
    return min(max(v, lo), hi)


def _rect_closest_depth(px, py, obj: ObjectState):
    """Penetration depth of the arm disc into an oriented rectangle."""
    hw, hh = obj.spec.size
    ca, sa = math.cos(obj.angle), math.sin(obj.angle)
    # point in rect-local coords
    rx = ca * (px - obj.x) + sa * (py - obj.y)
    ry = -sa * (px - obj.x) + ca * (py - obj.y)
    qx = _clamp(rx, -hw, hw)
    qy = _clamp(ry, -hh, hh)
    d = math.hypot(rx - qx, ry - qy)
    if d > 0:
        return ARM_RADIUS - d
    # arm center inside the rect: depth relative to nearest face
    inner = min(hw - abs(rx), hh - abs(ry))
    return ARM_RADIUS + inner


def _arm_object_depth(ax, ay, obj: ObjectState):
    if obj.spec.kind == "disc":
        return ARM_RADIUS + obj.spec.size[0] - math.hypot(obj.x - ax, obj.y - ay)
    return _rect_closest_depth(ax, ay, obj)


def _object_pair_depth(a: ObjectState, b: ObjectState):
    # bounding-circle approximation is good enough for the planner's needs
    return a.spec.bound_radius + b.spec.bound_radius - math.hypot(b.x - a.x, b.y - a.y)


def _clamp_object(obj: ObjectState, h, w):
    r = obj.spec.bound_radius
    return replace(obj, x=_clamp(obj.x, r, w - 1 - r), y=_clamp(obj.y, r, h - 1 - r))


def step(s: WorldState, a: Action) -> WorldState:
    """Advance the world one step.  All inputs are clamped, never rejected.

    The lift counter observed *before* this step decides contact: a newly
    commanded lift takes effect (arm airborne) from the following step.
    """
    airborne = s.lift_remaining > 0
    if a.lift > 0:
        lift_next = a.lift
    else:
        lift_next = max(s.lift_remaining - 1, 0)

    ax = _clamp(s.arm_x + a.dx, 0.0, s.width - 1.0)
    ay = _clamp(s.arm_y + a.dy, 0.0, s.height - 1.0)
    mx, my = ax - s.arm_x, ay - s.arm_y
    mlen = math.hypot(mx, my)

    objects = list(s.objects)
    if not airborne and mlen > 1e-9:
        ux, uy = mx / mlen, my / mlen
        for i, obj in enumerate(objects):
            depth = _arm_object_depth(ax, ay, obj)
            if depth > 0:
                d = min(depth / obj.spec.mass_class, mlen)
                objects[i] = _clamp_object(
                    replace(obj, x=obj.x + d * ux, y=obj.y + d * uy), s.height, s.width)
        # single pass of object-object separation, index order
        for i in range(len(objects)):
            for j in range(len(objects)):
                if i == j:
                    continue
                depth = _object_pair_depth(objects[i], objects[j])
                if depth > 0:
                    oi, oj = objects[i], objects[j]
                    dx, dy = oj.x - oi.x, oj.y - oi.y
                    dist = math.hypot(dx, dy)
                    if dist < 1e-9:
                        dx, dy, dist = ux, uy, 1.0
                    d = min(depth / oj.spec.mass_class, mlen)
                    objects[j] = _clamp_object(
                        replace(oj, x=oj.x + d * dx / dist, y=oj.y + d * dy / dist),
                        s.height, s.width)

    return WorldState(
        height=s.height, width=s.width, arm_x=ax, arm_y=ay,
        lift_remaining=lift_next, objects=tuple(objects), time=s.time + 1)


# ---------------------------------------------------------------------------
# rendering

def _grids(h, w):
    ys, xs = np.mgrid[0:h, 0:w]
    return xs.astype(np.float64), ys.astype(np.float64)


def object_silhouette(obj: ObjectState, h, w):
    """Boolean H x W silhouette of one object."""
    xs, ys = _grids(h, w)
    if obj.spec.kind == "disc":
        r = obj.spec.size[0]
        return (xs - obj.x) ** 2 + (ys - obj.y) ** 2 <= r * r
    hw, hh = obj.spec.size
    ca, sa = math.cos(obj.angle), math.sin(obj.angle)
    rx = ca * (xs - obj.x) + sa * (ys - obj.y)
    ry = -sa * (xs - obj.x) + ca * (ys - obj.y)
    return (np.abs(rx) <= hw) & (np.abs(ry) <= hh)


def arm_silhouette(s: WorldState):
    xs, ys = _grids(s.height, s.width)
    return (xs - s.arm_x) ** 2 + (ys - s.arm_y) ** 2 <= ARM_RADIUS * ARM_RADIUS


def _paint_object(img, obj: ObjectState, sil, xs, ys):
    # mild radial shading tied to object-local coordinates, so the texture
    # moves rigidly with the object and frame-difference tests stay sharp
    r = obj.spec.bound_radius
    d2 = ((xs - obj.x) ** 2 + (ys - obj.y) ** 2) / (r * r)
    shade = 1.0 - 0.25 * np.clip(d2, 0.0, 1.0)
    col = np.asarray(obj.spec.color)
    img[sil] = shade[sil, None] * col[None, :]


def render(s: WorldState) -> Frame:
    """Painter's order: background, objects in list order, arm topmost."""
    img = np.empty((s.height, s.width, 3))
    img[:, :] = BG_COLOR
    xs, ys = _grids(s.height, s.width)
    for obj in s.objects:
        _paint_object(img, obj, object_silhouette(obj, s.height, s.width), xs, ys)
    arm = arm_silhouette(s)
    img[arm] = ARM_COLOR
    if s.lift_remaining > 0:
        d2 = (xs - s.arm_x) ** 2 + (ys - s.arm_y) ** 2
        ring = arm & (d2 >= (ARM_RADIUS - 1.0) ** 2)
        img[ring] = RING_COLOR
    return Frame(np.clip(img, 0.0, 1.0))


# ---------------------------------------------------------------------------
# ground-truth pixel tracking

@dataclass(frozen=True)
class Attachment:
    """Binds a designated pixel to an object-local offset at task start."""

    obj_index: int
    off_x: float
    off_y: float
    base_angle: float


def attach_pixel(s: WorldState, x, y) -> Attachment:
    """Bind pixel (x, y) to the object whose silhouette covers it (or the
    nearest object center)."""
    best, best_d = None, float("inf")
    for i, obj in enumerate(s.objects):
        d = math.hypot(obj.x - x, obj.y - y)
        if d < best_d:
            best, best_d = i, d
    if best is None:
        raise ValidationError("no objects to attach to")
    obj = s.objects[best]
    return Attachment(best, x - obj.x, y - obj.y, obj.angle)


def true_pixel_position(s: WorldState, att: Attachment):
    """Current frame coordinate of an attached object-local point."""
    obj = s.objects[att.obj_index]
    da = obj.angle - att.base_angle
    ca, sa = math.cos(da), math.sin(da)
    return (obj.x + ca * att.off_x - sa * att.off_y,
            obj.y + sa * att.off_x + ca * att.off_y)


# ---------------------------------------------------------------------------
# random data collection

@dataclass(frozen=True)
class TrajectoryRecord:
    frames: tuple
    actions: tuple
    states: tuple

    def __post_init__(self):
        if len(self.frames) != len(self.actions) + 1 or len(self.frames) != len(self.states):
            raise ValidationError("need len(frames) == len(states) == len(actions)+1")


LIFT_ZERO_PROB = 0.85


def random_action(rng) -> Action:
    dx, dy = rng.uniform(-A_MAX, A_MAX, size=2)
    if rng.uniform() < LIFT_ZERO_PROB:
        lift = 0
    else:
        lift = int(rng.integers(1, LIFT_LEVELS))
    return Action(float(dx), float(dy), lift)


def default_scene_sampler(rng, h=64, w=64, n_objects=(1, 2)):
    """Random arm pose plus 1-2 shaded discs with random colors."""
    n = int(rng.integers(n_objects[0], n_objects[1] + 1))
    objects = []
    for _ in range(n):
        radius = float(rng.uniform(4.0, 6.0))
        color = rng.uniform(0.2, 1.0, size=3)
        color[int(rng.integers(3))] = rng.uniform(0.6, 1.0)
        spec = ObjectSpec("disc", (radius,), tuple(color))
        for _attempt in range(50):
            x = float(rng.uniform(radius + 2, w - 2 - radius))
            y = float(rng.uniform(radius + 2, h - 2 - radius))
            if all(math.hypot(o.x - x, o.y - y) > radius + o.spec.bound_radius + 2
                   for o in objects):
                break
        objects.append(ObjectState(spec, x, y))
    ax = float(rng.uniform(ARM_RADIUS, w - 1 - ARM_RADIUS))
    ay = float(rng.uniform(ARM_RADIUS, h - 1 - ARM_RADIUS))
    return WorldState(height=h, width=w, arm_x=ax, arm_y=ay, objects=tuple(objects))


def rollout_actions(s0: WorldState, actions) -> TrajectoryRecord:
    states = [s0]
    frames = [render(s0)]
    for a in actions:
        states.append(step(states[-1], a))
        frames.append(render(states[-1]))
    return TrajectoryRecord(tuple(frames), tuple(actions), tuple(states))


def collect_random_trajectories(n, length, scene_sampler=None, seed=0, h=64, w=64):
    """n random-pushing trajectories of the given length, deterministic in seed."""
    if n < 1 or length < 1:
        raise ValidationError("n and length must be >= 1")
    if scene_sampler is None:
        scene_sampler = lambda rng: default_scene_sampler(rng, h=h, w=w)
    records = []
    for i in range(n):
        rng = make_rng(seed, i)
        s0 = scene_sampler(rng)
        actions = tuple(random_action(rng) for _ in range(length))
        records.append(rollout_actions(s0, actions))
    return records
