"""Transformation-based frame prediction and probability-map advection.

Two compositing schemes are supported:

* DNA: the previous frame is transformed by N normalized kernels and the
  results are blended with per-pixel convex masks.  Occluded content is
  overwritten and cannot come back.
* SNA: same, plus one extra mask that copies pixels straight from the
  first frame of the episode, so content hidden behind the arm can
  reappear after un-occlusion.

The same kernels and masks advect designated-pixel probability maps; the
result is renormalized to unit mass after every step.

The oracle predictor derives exact kernels and masks from the simulator:
one pure-shift kernel per moving entity, an identity kernel for the
static background, and masks from the entities' silhouettes in painter's
order.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import ndimage

from .core import (
    DisplacementTooLarge,
    Frame,
    KernelNotNormalized,
    KernelSet,
    MaskCountMismatch,
    MaskSet,
    NORM_TOL,
    ProbMap,
    ShapeMismatch,
    ValidationError,
    ZeroMass,
)
from . import sim2d
from .sim2d import WorldState, arm_silhouette, object_silhouette, step


@dataclass(frozen=True)
class PredictorOutput:
    """Kernels plus masks; m == n for DNA, m == n+1 for SNA."""

    kernels: KernelSet
    masks: MaskSet


@dataclass(frozen=True)
class History:
    """Rolling context handed to the predictor at planning time.

    `first_frame` and `first_probmaps` are frozen at the start of the
    episode and feed the skip channel of every SNA step.
    """

    frames: tuple
    first_frame: Frame
    probmaps: tuple
    first_probmaps: tuple
    arm_xy: tuple
    world: WorldState = None


def shift_kernel(dx, dy, k) -> np.ndarray:
    """K x K kernel that translates content by (dx, dy) pixels."""
    dx, dy = int(dx), int(dy)
    c = k // 2
    if abs(dx) > c or abs(dy) > c:
        raise DisplacementTooLarge(
            f"displacement ({dx}, {dy}) exceeds kernel radius {c}")
    kern = np.zeros((k, k))
    kern[c - dy, c - dx] = 1.0
    return kern


def _shift_array(a, dx, dy, fill_edge):
    """out[y, x] = a[y-dy, x-dx].  Pixels pulling from outside the frame
    keep their own value (fill_edge=True, frames) or become 0 (probmaps)."""
    out = a.copy() if fill_edge else np.zeros_like(a)
    h, w = a.shape[:2]
    if abs(dx) >= w or abs(dy) >= h:
        return out
    ys_dst = slice(max(dy, 0), h + min(dy, 0))
    xs_dst = slice(max(dx, 0), w + min(dx, 0))
    ys_src = slice(max(-dy, 0), h + min(-dy, 0))
    xs_src = slice(max(-dx, 0), w + min(-dx, 0))
    out[ys_dst, xs_dst] = a[ys_src, xs_src]
    return out


def _single_shift(kernel):
    """(dx, dy) if the kernel is a pure one-pixel shift, else None."""
    nz = np.flatnonzero(kernel)
    if len(nz) != 1:
        return None
    k = kernel.shape[0]
    c = k // 2
    u, v = divmod(int(nz[0]), k)
    return c - v, c - u  # (dx, dy)


@lru_cache(maxsize=8)
def _edge_mass_cache(shape_key, kernel_key):
    kernel = np.frombuffer(kernel_key[0], dtype=np.float64).reshape(kernel_key[1])
    ones = np.ones(shape_key)
    return ndimage.correlate(ones, kernel, mode="constant", cval=0.0)


def _correlate2d(a, kernel, fill_edge):
    shift = _single_shift(kernel)
    if shift is not None:
        return _shift_array(a, shift[0], shift[1], fill_edge)
    raw = ndimage.correlate(a, kernel, mode="constant", cval=0.0)
    if not fill_edge:
        return raw
    # renormalize by the in-frame kernel mass so frame values remain a
    # convex combination of input values even at the border
    mass = _edge_mass_cache(a.shape, (kernel.tobytes(), kernel.shape))
    return np.where(mass > 1e-12, raw / np.where(mass > 1e-12, mass, 1.0), a)


def apply_kernel(img, kernel):
    """Transform a Frame or ProbMap by one normalized kernel.

    Frames use edge-renormalized correlation (convex everywhere); probmap
    mass that would leave the frame is clipped and restored by the
    caller's renormalization.
    """
    kernel = np.asarray(kernel, dtype=np.float64)
    if kernel.ndim != 2 or kernel.shape[0] != kernel.shape[1] or kernel.shape[0] % 2 != 1:
        raise ShapeMismatch(f"kernel must be odd square, got {kernel.shape}")
    if (kernel < -NORM_TOL).any() or abs(kernel.sum() - 1.0) > NORM_TOL:
        raise KernelNotNormalized(f"kernel sums to {kernel.sum()!r}")
    if isinstance(img, ProbMap):
        return ProbMap(_correlate2d(img.data, kernel, fill_edge=False))
    if isinstance(img, Frame):
        out = np.stack(
            [_correlate2d(img.data[:, :, c], kernel, fill_edge=True)
             for c in range(img.channels)], axis=-1)
        return Frame(out)
    raise ShapeMismatch(f"expected Frame or ProbMap, got {type(img).__name__}")


def _transformed_stack(prev_data, kernels):
    """(N, H, W, C) stack of the previous frame under each kernel."""
    outs = []
    for kern in kernels:
        outs.append(np.stack(
            [_correlate2d(prev_data[:, :, c], kern, fill_edge=True)
             for c in range(prev_data.shape[2])], axis=-1))
    return outs


def composite_dna(prev: Frame, out: PredictorOutput) -> Frame:
    """Mask-weighted blend of the N transformed previous frames."""
    if out.masks.m != out.kernels.n:
        raise MaskCountMismatch(
            f"DNA needs {out.kernels.n} masks, got {out.masks.m}")
    if (out.masks.height, out.masks.width) != (prev.height, prev.width):
        raise ShapeMismatch("mask size does not match frame")
    acc = np.zeros_like(prev.data)
    for kern, mask in zip(out.kernels.kernels, out.masks.data):
        for c in range(prev.channels):
            acc[:, :, c] += _correlate2d(prev.data[:, :, c], kern, fill_edge=True) * mask
    return Frame(np.clip(acc, 0.0, 1.0))


def composite_sna(prev: Frame, first: Frame, out: PredictorOutput,
                  transformed_bg: bool = False) -> Frame:
    """DNA plus a skip channel that copies from the first frame.

    With transformed_bg, the first frame is routed through the extra
    kernel (index N) before compositing.
    """
    n_motion = out.kernels.n - 1 if transformed_bg else out.kernels.n
    if out.masks.m != n_motion + 1:
        raise MaskCountMismatch(
            f"SNA needs {n_motion + 1} masks, got {out.masks.m}")
    if (out.masks.height, out.masks.width) != (prev.height, prev.width):
        raise ShapeMismatch("mask size does not match frame")
    skip = first
    if transformed_bg:
        skip = apply_kernel(first, out.kernels.kernels[n_motion])
    acc = skip.data * out.masks.data[n_motion][:, :, None]
    for kern, mask in zip(out.kernels.kernels[:n_motion], out.masks.data[:n_motion]):
        for c in range(prev.channels):
            acc[:, :, c] += _correlate2d(prev.data[:, :, c], kern, fill_edge=True) * mask
    return Frame(np.clip(acc, 0.0, 1.0))


def advect_prob(p: ProbMap, out: PredictorOutput, mode: str = "dna",
                p_first: ProbMap = None) -> ProbMap:
    """Push the pixel-location distribution through the kernels and masks,
    then renormalize to unit mass."""
    if mode not in ("dna", "sna"):
        raise ValidationError(f"mode must be 'dna' or 'sna', got {mode!r}")
    n = out.kernels.n
    if mode == "dna":
        if out.masks.m != n:
            raise MaskCountMismatch(f"DNA needs {n} masks, got {out.masks.m}")
    else:
        if out.masks.m != n + 1:
            raise MaskCountMismatch(f"SNA needs {n + 1} masks, got {out.masks.m}")
        if p_first is None:
            raise ValidationError("sna advection needs the step-0 map")
    if (out.masks.height, out.masks.width) != (p.height, p.width):
        raise ShapeMismatch("mask size does not match probmap")
    acc = np.zeros_like(p.data)
    for kern, mask in zip(out.kernels.kernels, out.masks.data[:n]):
        acc += _correlate2d(p.data, kern, fill_edge=False) * mask
    if mode == "sna":
        acc += p_first.data * out.masks.data[n]
    total = float(acc.sum())
    if total < 1e-12:
        raise ZeroMass("all probability mass annihilated by the masks")
    return ProbMap(acc / total)


# ---------------------------------------------------------------------------
# oracle predictor

def _rounded_positions(s: WorldState):
    pos = [(round(o.x), round(o.y)) for o in s.objects]
    pos.append((round(s.arm_x), round(s.arm_y)))
    return pos


def _entity_id_map(s: WorldState):
    """Visible entity per pixel: 0..n_obj-1 objects, n_obj arm, -1 background."""
    idmap = np.full((s.height, s.width), -1, dtype=np.int64)
    for i, obj in enumerate(s.objects):
        idmap[object_silhouette(obj, s.height, s.width)] = i
    idmap[arm_silhouette(s)] = len(s.objects)
    return idmap


class OraclePredictor:
    """Exact kernel/mask predictor backed by the simulator.

    Each moving entity (objects, arm) gets a pure-shift kernel paired with
    its rendered silhouette; static pixels fall to an identity background
    kernel.  In SNA mode the extra mask covers pixels whose content still
    equals the first frame, computed from entity poses rather than pixel
    comparison.
    """

    def __init__(self, start_world: WorldState, kernel_size: int = 9, mode: str = "sna"):
        if mode not in ("dna", "sna"):
            raise ValidationError(f"mode must be 'dna' or 'sna', got {mode!r}")
        self.mode = mode
        self.kernel_size = int(kernel_size)
        self.needs_frames = False
        self.start_world = start_world
        self._id0 = _entity_id_map(start_world)
        self._exact0 = ([(o.x, o.y, o.angle) for o in start_world.objects]
                        + [(start_world.arm_x, start_world.arm_y, 0.0)])

    def init_state(self, hist: History) -> WorldState:
        if hist.world is None:
            raise ValidationError("oracle predictor needs the world state in History")
        return hist.world

    def forward(self, world: WorldState, prev_frame, action):
        nxt = step(world, action)
        return nxt, self.predict(world, nxt)

    def predict(self, world: WorldState, nxt: WorldState) -> PredictorOutput:
        k = self.kernel_size
        n_obj = len(world.objects)
        pos_prev = _rounded_positions(world)
        pos_next = _rounded_positions(nxt)
        disp = [(int(b[0] - a[0]), int(b[1] - a[1]))
                for a, b in zip(pos_prev, pos_next)]

        idmap = _entity_id_map(nxt)
        kernels = [shift_kernel(dx, dy, k) for dx, dy in disp]
        kernels.append(shift_kernel(0, 0, k))  # static background
        masks = [(idmap == i).astype(np.float64) for i in range(n_obj + 1)]
        masks.append((idmap == -1).astype(np.float64))

        if self.mode == "sna":
            exact_next = [(o.x, o.y, o.angle) for o in nxt.objects] + [(nxt.arm_x, nxt.arm_y, 0.0)]
            unmoved = np.array(
                [max(abs(a - b) for a, b in zip(pn, p0)) < 1e-9
                 for pn, p0 in zip(exact_next, self._exact0)]
                + [True])  # background entity is always static
            # arm appearance also depends on the raised ring
            if (nxt.lift_remaining > 0) != (self.start_world.lift_remaining > 0):
                unmoved[n_obj] = False
            ent = np.where(idmap < 0, n_obj + 1, idmap)
            skip = (ent == np.where(self._id0 < 0, n_obj + 1, self._id0)) & unmoved[ent]
            skipf = skip.astype(np.float64)
            masks = [m * (1.0 - skipf) for m in masks]
            masks.append(skipf)

        return PredictorOutput(KernelSet(np.stack(kernels)), MaskSet(np.stack(masks)))


def oracle_predict(s: WorldState, a, kernel_size: int = 9, mode: str = "sna",
                   start_world: WorldState = None) -> PredictorOutput:
    """One-shot oracle output for (state, action); see OraclePredictor."""
    pred = OraclePredictor(start_world if start_world is not None else s,
                           kernel_size=kernel_size, mode=mode)
    return pred.predict(s, step(s, a))


# ---------------------------------------------------------------------------
# recursive rollout

def rollout(pred, hist: History, actions, need_frames: bool = None):
    """Apply the predictor recursively over an action sequence.

    Returns (frames, probmaps): T frames (empty when frames are skipped)
    and a T-long list of per-designated-pixel ProbMap tuples.
    """
    if need_frames is None:
        need_frames = getattr(pred, "needs_frames", True)
    pstate = pred.init_state(hist)
    prev = hist.frames[-1]
    pmaps = tuple(hist.probmaps)
    frames, out_maps = [], []
    for a in actions:
        pstate, out = pred.forward(pstate, prev, a)
        if need_frames:
            if pred.mode == "sna":
                prev = composite_sna(prev, hist.first_frame, out)
            else:
                prev = composite_dna(prev, out)
            frames.append(prev)
        pmaps = tuple(
            advect_prob(p, out, pred.mode,
                        p_first=pf if pred.mode == "sna" else None)
            for p, pf in zip(pmaps, hist.first_probmaps))
        out_maps.append(pmaps)
    return frames, out_maps
