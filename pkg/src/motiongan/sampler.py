"""Few-step generation from a trained checkpoint.

The sampling loop starts from pure noise x_T, and at each step draws a
fresh latent z, predicts clean motion with the (optionally
guidance-blended) generator, and takes one posterior step toward
x_{t-1}; noise is off at the final step.  The result is denormalized and
decoded into motion clips, with per-step wall time recorded so runtime
per generated frame can be reported.

Guidance blends the conditional and unconditional branches as
``uncond + s * (cond - uncond)``; at s=0 and s=1 the blend short-circuits
to a single forward pass, which keeps those paths bitwise identical to
the plain conditional/unconditional model.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass

import numpy as np

from .motion import MotionClip, decode_repr, fk_positions
from .networks import GeneratorParams, generator_forward
from .schedule import make_schedule
from .tensor import NonFiniteError, Tensor, no_grad
from .training import Checkpoint, ema_generator


@dataclass(frozen=True)
class SampleRequest:
    label: int = None          # None -> unconditional sampling
    scale: float = 2.5         # guidance strength s
    count: int = 1             # clips to generate
    seed: int = 0
    use_ema: bool = True
    length: int = None         # frames per clip; None -> the model's length
    steps: int = None          # sampling step count; None -> as trained

    def __post_init__(self):
        if self.scale < 0:
            raise ValueError("guidance scale must be nonnegative")
        if self.count < 1:
            raise ValueError("count must be at least 1")
        if self.steps is not None and self.steps < 1:
            raise ValueError("steps must be at least 1")


@dataclass
class SampleChain:
    """Full trajectory: states[i] is x_t after i steps (states[0] = x_T)."""
    states: list               # T+1 arrays of shape (B, N, D)
    predictions: list          # T arrays of predicted clean motion
    step_seconds: list         # T wall-time measurements


def guided_generator(params: GeneratorParams, x_t, z, labels, t,
                     scale: float) -> Tensor:
    """Guidance-blended prediction: uncond + scale * (cond - uncond).

    ``labels=None`` or scale 0 uses the unconditional branch only; scale 1
    uses the conditional branch only; both shortcuts are single forward
    passes, so they match the plain paths bitwise.
    """
    x_t, z = _as_tensor(x_t), _as_tensor(z)
    batch = x_t.shape[0]
    if labels is None or scale == 0.0:
        null_labels = np.zeros(batch, dtype=np.int64)
        return generator_forward(params, x_t, z, null_labels, t,
                                 uncond=np.ones(batch, dtype=bool))
    if scale == 1.0:
        return generator_forward(params, x_t, z, labels, t)
    uncond = generator_forward(params, x_t, z, labels, t,
                               uncond=np.ones(batch, dtype=bool))
    cond = generator_forward(params, x_t, z, labels, t)
    return uncond + scale * (cond - uncond)


def _run(ckpt: Checkpoint, request: SampleRequest, record: bool):
    if ckpt.stats is None:
        raise ValueError("checkpoint carries no normalization stats")
    cfg = ckpt.model_config
    n = request.length if request.length is not None else cfg.N
    if n != cfg.N:
        raise ValueError(f"model generates {cfg.N}-frame clips, not {n}")
    params = ema_generator(ckpt) if request.use_ema else ckpt.gen
    schedule = ckpt.schedule
    if request.steps is not None and request.steps != schedule.T:
        # re-time the denoising loop without retraining; the step
        # embedding is continuous in t, so the generator still applies
        schedule = make_schedule(request.steps, schedule.kind)
    batch = request.count
    labels = (None if request.label is None
              else np.full(batch, request.label, dtype=np.int64))
    if labels is not None and not 0 <= request.label < cfg.num_classes:
        raise ValueError(f"label outside 0..{cfg.num_classes - 1}")

    rng = np.random.default_rng(request.seed)
    x = rng.standard_normal((batch, n, cfg.frame_dim))
    states = [x.copy()] if record else None
    predictions = [] if record else None
    step_seconds = []

    for i in range(schedule.T - 1, -1, -1):
        start = time.perf_counter()
        z = rng.standard_normal((batch, cfg.z_dim))
        with no_grad():
            x0_hat = guided_generator(params, x, z, labels, i + 1,
                                      request.scale)
        x = schedule.sample_posterior(x0_hat.data, x, i, rng)
        if not np.all(np.isfinite(x)):
            raise NonFiniteError(
                f"sampling state went non-finite at step index {i}")
        step_seconds.append(time.perf_counter() - start)
        if record:
            states.append(x.copy())
            predictions.append(x0_hat.data.copy())

    raw = ckpt.stats.denormalize(x)
    clips = [decode_repr(raw[b], ckpt.skeleton,
                         label=-1 if request.label is None else request.label,
                         fps=ckpt.fps)
             for b in range(batch)]
    chain = (SampleChain(states, predictions, step_seconds) if record
             else None)
    return clips, raw, step_seconds, chain


def sample(ckpt: Checkpoint, request: SampleRequest):
    """Generate clips; returns (clips, raw frame array, timing dict)."""
    clips, raw, step_seconds, _ = _run(ckpt, request, record=False)
    total = float(sum(step_seconds))
    timing = {
        "per_step_s": step_seconds,
        "total_s": total,
        "ms_per_frame": 1000.0 * total / (len(clips) * clips[0].N),
    }
    return clips, raw, timing


def sample_chain(ckpt: Checkpoint, request: SampleRequest) -> SampleChain:
    """Generate while recording every intermediate state and prediction."""
    _, _, _, chain = _run(ckpt, request, record=True)
    return chain


def write_positions_csv(clip: MotionClip, skeleton, path):
    """Joint positions of one clip as CSV rows (frame, joint, x, y, z)."""
    positions, _ = fk_positions(skeleton, clip.root, clip.rotations)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["frame", "joint", "x", "y", "z"])
        for i in range(positions.shape[0]):
            for j in range(positions.shape[1]):
                writer.writerow([i, j] + [repr(float(v))
                                          for v in positions[i, j]])


def _as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))
