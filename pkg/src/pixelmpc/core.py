"""Shared numeric types used across the simulator, predictor and planner.

All types are thin immutable wrappers around float64 numpy arrays.  The
backing arrays are marked read-only after construction so values can be
shared freely between parallel rollouts.

Coordinate convention: (x, y) with x = column, y = row, origin at the
top-left of the frame.  Arrays are indexed [y, x].
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

NORM_TOL = 1e-6
A_MAX = 4.0
LIFT_LEVELS = 4


class ValidationError(ValueError):
    """Bad input that violates a type invariant."""


class NegativeMass(ValidationError):
    pass


class NotNormalized(ValidationError):
    pass


class OutOfBounds(ValidationError):
    pass


class KernelNotNormalized(ValidationError):
    pass


class MaskCountMismatch(ValidationError):
    pass


class ShapeMismatch(ValidationError):
    pass


class ZeroMass(ValidationError):
    """All probability mass was annihilated before renormalization."""


class DisplacementTooLarge(ValidationError):
    """An entity moved farther than the kernel radius can express."""


class NonFiniteLoss(ArithmeticError):
    pass


class EmptySuite(ValidationError):
    pass


def _freeze(a, dtype=np.float64):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


def make_rng(seed, *stream):
    """Deterministic generator for (seed, substream) pairs.

    Extra integers select independent substreams so e.g. each benchmark
    scenario gets its own reproducible stream.
    """
    return np.random.default_rng(np.random.SeedSequence([int(seed) & (2**64 - 1), *map(int, stream)]))


@dataclass(frozen=True)
class Frame:
    """H x W x C raster observation with values in [0, 1]."""

    data: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.data, dtype=np.float64)
        if d.ndim == 2:
            d = d[:, :, None]
        if d.ndim != 3:
            raise ShapeMismatch(f"frame must be HxWxC, got shape {d.shape}")
        h, w, c = d.shape
        if h < 8 or w < 8:
            raise ValidationError(f"frame too small: {h}x{w}")
        if c not in (1, 3):
            raise ValidationError(f"channels must be 1 or 3, got {c}")
        if not np.isfinite(d).all():
            raise ValidationError("frame contains non-finite values")
        if d.min() < -NORM_TOL or d.max() > 1 + NORM_TOL:
            raise ValidationError(
                f"frame values outside [0,1]: min={d.min():.4g} max={d.max():.4g}")
        object.__setattr__(self, "data", _freeze(np.clip(d, 0.0, 1.0)))

    @property
    def height(self):
        return self.data.shape[0]

    @property
    def width(self):
        return self.data.shape[1]

    @property
    def channels(self):
        return self.data.shape[2]


@dataclass(frozen=True)
class ProbMap:
    """H x W distribution over pixel locations of a designated pixel."""

    data: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.data, dtype=np.float64)
        if d.ndim != 2:
            raise ShapeMismatch(f"probmap must be HxW, got shape {d.shape}")
        object.__setattr__(self, "data", _freeze(d))

    @property
    def height(self):
        return self.data.shape[0]

    @property
    def width(self):
        return self.data.shape[1]

    def argmax_xy(self):
        idx = int(np.argmax(self.data))
        y, x = divmod(idx, self.width)
        return x, y


def validate_probmap(p: ProbMap):
    """Raise if `p` is not a proper distribution (negative mass or bad sum)."""
    d = p.data
    if (d < 0).any():
        idx = int(np.argmin(d))
        y, x = divmod(idx, p.width)
        raise NegativeMass(f"negative mass {d[y, x]:.4g} at (x={x}, y={y})")
    s = float(d.sum())
    if abs(s - 1.0) > NORM_TOL:
        raise NotNormalized(f"mass sums to {s!r}, expected 1 within {NORM_TOL}")


def one_hot_probmap(x, y, h, w) -> ProbMap:
    """Distribution with all mass on pixel (x, y)."""
    x, y = int(round(x)), int(round(y))
    if not (0 <= x < w and 0 <= y < h):
        raise OutOfBounds(f"pixel (x={x}, y={y}) outside {w}x{h} frame")
    d = np.zeros((h, w))
    d[y, x] = 1.0
    return ProbMap(d)


@dataclass(frozen=True)
class KernelSet:
    """N normalized K x K transition kernels.

    Normalization makes each kernel interpretable as per-pixel transition
    probabilities, which is what justifies reusing them to advect
    probability maps.
    """

    kernels: np.ndarray  # (N, K, K)

    def __post_init__(self):
        k = np.asarray(self.kernels, dtype=np.float64)
        if k.ndim != 3 or k.shape[1] != k.shape[2]:
            raise ShapeMismatch(f"kernels must be (N, K, K), got {k.shape}")
        if k.shape[1] % 2 != 1:
            raise ValidationError(f"kernel side must be odd, got {k.shape[1]}")
        if (k < -NORM_TOL).any():
            raise KernelNotNormalized("kernel has negative entries")
        sums = k.sum(axis=(1, 2))
        if np.abs(sums - 1.0).max() > NORM_TOL:
            i = int(np.argmax(np.abs(sums - 1.0)))
            raise KernelNotNormalized(f"kernel {i} sums to {sums[i]!r}")
        object.__setattr__(self, "kernels", _freeze(np.clip(k, 0.0, None)))

    @property
    def n(self):
        return self.kernels.shape[0]

    @property
    def k(self):
        return self.kernels.shape[1]


@dataclass(frozen=True)
class MaskSet:
    """m compositing masks; at each pixel the m weights sum to 1."""

    data: np.ndarray  # (m, H, W)

    def __post_init__(self):
        d = np.asarray(self.data, dtype=np.float64)
        if d.ndim != 3:
            raise ShapeMismatch(f"masks must be (m, H, W), got {d.shape}")
        if (d < -NORM_TOL).any():
            raise ValidationError("mask has negative entries")
        sums = d.sum(axis=0)
        err = np.abs(sums - 1.0).max()
        if err > NORM_TOL:
            raise NotNormalized(f"mask weights deviate from 1 by {err:.3g}")
        object.__setattr__(self, "data", _freeze(np.clip(d, 0.0, None)))

    @property
    def m(self):
        return self.data.shape[0]

    @property
    def height(self):
        return self.data.shape[1]

    @property
    def width(self):
        return self.data.shape[2]


@dataclass(frozen=True)
class Action:
    """Planar end-effector displacement plus a discrete lift duration.

    `lift` commands the arm to stay off the table for that many steps.
    """

    dx: float
    dy: float
    lift: int = 0

    def __post_init__(self):
        if not (np.isfinite(self.dx) and np.isfinite(self.dy)):
            raise ValidationError("non-finite displacement")
        if abs(self.dx) > A_MAX + 1e-9 or abs(self.dy) > A_MAX + 1e-9:
            raise ValidationError(
                f"displacement ({self.dx}, {self.dy}) exceeds a_max={A_MAX}")
        if not (isinstance(self.lift, (int, np.integer)) and 0 <= self.lift < LIFT_LEVELS):
            raise ValidationError(f"lift must be an integer in [0, {LIFT_LEVELS - 1}]")
        object.__setattr__(self, "dx", float(self.dx))
        object.__setattr__(self, "dy", float(self.dy))
        object.__setattr__(self, "lift", int(self.lift))

    @classmethod
    def clamped(cls, dx, dy, lift=0.0):
        dx = float(np.clip(dx, -A_MAX, A_MAX))
        dy = float(np.clip(dy, -A_MAX, A_MAX))
        lift = int(round(np.clip(lift, 0, LIFT_LEVELS - 1)))
        return cls(dx, dy, lift)


@dataclass(frozen=True)
class Task:
    """P designated source pixels and their goal locations."""

    designated: tuple  # ((x, y), ...)
    goals: tuple
    weights: tuple = None
    height: int = 64
    width: int = 64

    def __post_init__(self):
        des = tuple((float(x), float(y)) for x, y in self.designated)
        goals = tuple((float(x), float(y)) for x, y in self.goals)
        if len(des) != len(goals) or len(des) < 1:
            raise ValidationError(
                f"need equal, nonzero pixel counts: {len(des)} designated, {len(goals)} goals")
        for x, y in des + goals:
            if not (0 <= x < self.width and 0 <= y < self.height):
                raise OutOfBounds(f"pixel ({x}, {y}) outside {self.width}x{self.height} frame")
        w = self.weights
        if w is None:
            w = (1.0,) * len(des)
        w = tuple(float(v) for v in w)
        if len(w) != len(des) or any(v < 0 for v in w):
            raise ValidationError("weights must be P nonnegative reals")
        object.__setattr__(self, "designated", des)
        object.__setattr__(self, "goals", goals)
        object.__setattr__(self, "weights", w)

    @property
    def p(self):
        return len(self.designated)
