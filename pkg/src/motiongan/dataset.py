"""Procedural conditioned motion dataset and its file format.

Six action classes (walk, run, jump, sit, turn-left, wave) are generated
analytically on the default skeleton with per-clip random phase, speed, and
amplitude, so every class is a nontrivial distribution with known ground
truth: walkers plant their stance foot exactly (no skating), sitters drop
the pelvis by at least 30%, jumpers leave the floor, and so on.

Walk/run use an inverted-pendulum stance: while a foot is planted at y_p,
the hip pitch is asin((y_p - y_root)/l) and the root rides at l*cos(pitch),
which keeps the planted foot exactly still on the floor.  The swing leg
sweeps -amp..+amp with a cosine profile, grazing the floor at mid-swing.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .motion import (LEG_LENGTH, MotionClip, NormStats, Skeleton,
                     default_skeleton, encode_repr, quat_about_axis,
                     quat_identity, quat_multiply)
from .persist import IntegrityError, read_container, write_container

CLASS_NAMES = ("walk", "run", "jump", "sit", "turn-left", "wave")

DATASET_MAGIC = b"EMDMDS1"

ROOT, SPINE, HEAD, HIP_L, FOOT_L, HIP_R, FOOT_R, ARM = range(8)


@dataclass(frozen=True)
class DataConfig:
    num_classes: int = 6
    clips_per_class: int = 200
    N: int = 60
    fps: float = 20.0
    seed: int = 0

    def __post_init__(self):
        if not 2 <= self.num_classes <= len(CLASS_NAMES):
            raise ValueError(f"num_classes must be in 2..{len(CLASS_NAMES)}")
        if self.N < 2:
            raise ValueError("N must be at least 2")


@dataclass(frozen=True)
class Dataset:
    skeleton: Skeleton
    class_names: tuple
    fps: float
    labels: np.ndarray        # (C,) int64
    frames: np.ndarray        # (C, N, D_f) raw (unnormalized) frame vectors
    stats: NormStats

    @property
    def num_clips(self) -> int:
        return len(self.labels)

    @property
    def num_classes(self) -> int:
        return len(self.class_names)

    @property
    def N(self) -> int:
        return self.frames.shape[1]

    @property
    def frame_dim(self) -> int:
        return self.frames.shape[2]

    def normalized_frames(self) -> np.ndarray:
        return self.stats.normalize(self.frames)

    def subset(self, indices) -> "Dataset":
        """A view with the same normalization stats (comparable features)."""
        indices = np.asarray(indices)
        return replace(self, labels=self.labels[indices],
                       frames=self.frames[indices])

    def split_even_odd(self):
        """Two disjoint same-distribution halves (clips are i.i.d. per class)."""
        idx = np.arange(self.num_clips)
        return self.subset(idx[idx % 2 == 0]), self.subset(idx[idx % 2 == 1])


# ---------------------------------------------------------------------------
# per-class generators: each returns (root (N,3), rotations (N,J,4))
# ---------------------------------------------------------------------------

def _base_pose(N):
    root = np.zeros((N, 3))
    root[:, 2] = LEG_LENGTH
    return root, quat_identity((N, 8))


def _stance_swing_legs(tt, period, phase, speed, sigma, arm_amp=0.35):
    """Shared walk/run gait with exact plants and a double-support pause.

    Cycle layout (fractions of one period): left single support for
    s = 1 - sigma, double support until 0.5, right single support for s,
    double support until 1.  During single support the root advances half a
    stride with a smoothstep profile; during double support it rests at the
    midpoint between the two plants, the only root position where both
    rigid legs can be planted at once.  Each foot is planted for a fraction
    sigma of the cycle (the ground-truth duty factor).
    """
    ell = LEG_LENGTH
    stride = speed * period
    s = 1.0 - sigma                            # single-support fraction of a half
    amp = np.arcsin(min(0.95, stride / (4.0 * ell)))

    tau = (tt / period + phase) % 1.0
    k = np.floor(tt / period + phase)
    y0 = stride * k
    left_half = tau < 0.5

    y = np.where(
        left_half,
        y0 + 0.5 * stride * _smoothstep(tau / s),
        y0 + 0.5 * stride + 0.5 * stride * _smoothstep((tau - 0.5) / s))

    plant_l = y0 + 0.25 * stride               # left plant of this cycle
    plant_r = y0 + 0.75 * stride
    asin_to = lambda p: np.arcsin(np.clip((p - y) / ell, -1.0, 1.0))
    theta_l = np.where(
        left_half, asin_to(plant_l),
        np.where(tau < 0.5 + s,
                 -amp * np.cos(np.pi * np.clip((tau - 0.5) / s, 0, 1)),
                 asin_to(plant_l + stride)))
    theta_r = np.where(
        tau < s, -amp * np.cos(np.pi * np.clip(tau / s, 0, 1)),
        asin_to(plant_r))
    root_z = ell * np.cos(np.where(left_half, theta_l, theta_r))

    arm = arm_amp * np.sin(2 * np.pi * (tt / period + phase))
    return y, root_z, np.stack([theta_l, theta_r], axis=1), arm


def _make_walk(N, fps, rng, speed_range=(0.9, 1.5), period_range=(0.9, 1.2),
               duty_range=(0.58, 0.68), arm_amp=0.35, lean=0.0):
    tt = np.arange(N) / fps
    speed = rng.uniform(*speed_range)
    period = rng.uniform(*period_range)
    sigma = rng.uniform(*duty_range)
    phase = rng.uniform(0.0, 1.0)
    y_root, root_z, theta, arm = _stance_swing_legs(tt, period, phase, speed,
                                                    sigma, arm_amp)

    root = np.zeros((N, 3))
    root[:, 1] = y_root
    root[:, 2] = root_z
    rot = quat_identity((N, 8))
    rot[:, HIP_L] = quat_about_axis(0, theta[:, 0])
    rot[:, HIP_R] = quat_about_axis(0, theta[:, 1])
    rot[:, ARM] = quat_about_axis(0, arm)
    if lean:
        rot[:, SPINE] = quat_about_axis(0, np.full(N, lean))
    return root, rot


def _make_run(N, fps, rng):
    return _make_walk(N, fps, rng, speed_range=(2.0, 2.8),
                      period_range=(0.55, 0.70), duty_range=(0.54, 0.60),
                      arm_amp=0.8, lean=0.2)


def _smoothstep(x):
    x = np.clip(x, 0.0, 1.0)
    return x * x * (3 - 2 * x)


def _legs_folded_to(root_z):
    """Hip pitch that keeps foot height at the floor for a lowered root."""
    return np.arccos(np.clip(root_z / LEG_LENGTH, -1.0, 1.0))


def _make_jump(N, fps, rng):
    tt = np.arange(N) / float(N - 1)          # normalized clip time
    crouch_z = rng.uniform(0.55, 0.65)
    height = rng.uniform(0.25, 0.40)
    t_crouch, t_push, t_launch, t_land = 0.18, 0.34, 0.42, 0.64

    # root height: stand, crouch down, push back up, ballistic arc, stand
    z = np.full(N, LEG_LENGTH)
    down = (tt >= t_crouch) & (tt < t_push)
    z[down] = LEG_LENGTH - (LEG_LENGTH - crouch_z) * _smoothstep(
        (tt[down] - t_crouch) / (t_push - t_crouch))
    push = (tt >= t_push) & (tt < t_launch)
    z[push] = crouch_z + (LEG_LENGTH - crouch_z) * _smoothstep(
        (tt[push] - t_push) / (t_launch - t_push))
    flight = (tt >= t_launch) & (tt < t_land)
    tau = (tt[flight] - t_launch) / (t_land - t_launch)
    z[flight] = LEG_LENGTH + 4.0 * height * tau * (1 - tau)

    root, rot = _base_pose(N)
    root[:, 2] = z
    fold = _legs_folded_to(np.minimum(z, LEG_LENGTH))
    rot[:, HIP_L] = quat_about_axis(0, fold)
    rot[:, HIP_R] = quat_about_axis(0, fold)
    raise_arm = -1.1 * (_smoothstep((tt - t_crouch) / (t_launch - t_crouch))
                        - _smoothstep((tt - t_land) / 0.2))
    rot[:, ARM] = quat_about_axis(0, raise_arm)
    return root, rot


def _make_sit(N, fps, rng):
    tt = np.arange(N) / float(N - 1)
    z_end = LEG_LENGTH * rng.uniform(0.45, 0.65)
    t0, t1 = rng.uniform(0.10, 0.20), rng.uniform(0.60, 0.75)

    root, rot = _base_pose(N)
    z = LEG_LENGTH - (LEG_LENGTH - z_end) * _smoothstep((tt - t0) / (t1 - t0))
    root[:, 2] = z
    fold = _legs_folded_to(z)
    rot[:, HIP_L] = quat_about_axis(0, fold)
    rot[:, HIP_R] = quat_about_axis(0, fold)
    rot[:, SPINE] = quat_about_axis(0, 0.3 * _smoothstep((tt - t0) / (t1 - t0)))
    return root, rot


def _make_turn_left(N, fps, rng):
    tt = np.arange(N) / float(N - 1)
    total = rng.uniform(np.pi / 2, np.pi)
    root, rot = _base_pose(N)
    yaw = total * _smoothstep(tt * rng.uniform(0.9, 1.1))
    rot[:, ROOT] = quat_about_axis(2, yaw)
    rot[:, ARM] = quat_about_axis(0, np.full(N, -0.2))
    return root, rot


def _make_wave(N, fps, rng):
    tt = np.arange(N) / fps
    freq = rng.uniform(1.2, 2.2)
    amp = rng.uniform(0.3, 0.6)
    phase = rng.uniform(0, 2 * np.pi)
    root, rot = _base_pose(N)
    raise_pitch = quat_about_axis(0, np.full(N, -1.2))
    wobble = quat_about_axis(1, amp * np.sin(2 * np.pi * freq * tt + phase))
    rot[:, ARM] = quat_multiply(raise_pitch, wobble)
    rot[:, HEAD] = quat_about_axis(2, 0.1 * np.sin(2 * np.pi * freq * tt + phase))
    return root, rot


_GENERATORS = {
    "walk": _make_walk,
    "run": _make_run,
    "jump": _make_jump,
    "sit": _make_sit,
    "turn-left": _make_turn_left,
    "wave": _make_wave,
}


# ---------------------------------------------------------------------------
# dataset synthesis and I/O
# ---------------------------------------------------------------------------

def synth_dataset(config: DataConfig) -> Dataset:
    """Deterministic procedural dataset; per-clip RNG from (seed, clip index)."""
    skeleton = default_skeleton()
    names = CLASS_NAMES[:config.num_classes]
    labels, all_frames = [], []
    for class_idx, name in enumerate(names):
        make = _GENERATORS[name]
        for k in range(config.clips_per_class):
            clip_index = class_idx * config.clips_per_class + k
            rng = np.random.default_rng(
                np.random.SeedSequence([config.seed, clip_index]))
            root, rot = make(config.N, config.fps, rng)
            clip = MotionClip(root=root, rotations=rot, label=class_idx,
                              fps=config.fps)
            all_frames.append(encode_repr(clip, skeleton))
            labels.append(class_idx)
    frames = np.stack(all_frames)
    return Dataset(skeleton=skeleton, class_names=names, fps=config.fps,
                   labels=np.asarray(labels, dtype=np.int64), frames=frames,
                   stats=NormStats.fit(frames))


def dataset_write(path, ds: Dataset) -> None:
    header = {
        "skeleton": ds.skeleton.to_config(),
        "class_names": list(ds.class_names),
        "fps": ds.fps,
        "N": ds.N,
        "frame_dim": ds.frame_dim,
        "num_clips": ds.num_clips,
        "stats": ds.stats.to_config(),
    }
    chunks = []
    for label, clip in zip(ds.labels, ds.frames):
        chunks.append(bytes([int(label)]))
        chunks.append(np.ascontiguousarray(clip, dtype="<f8").tobytes())
    write_container(path, DATASET_MAGIC, header, b"".join(chunks))


def dataset_read(path) -> Dataset:
    header, payload = read_container(path, DATASET_MAGIC)
    skeleton = Skeleton.from_config(header["skeleton"])
    N, D = header["N"], header["frame_dim"]
    if D != skeleton.frame_dim:
        raise IntegrityError(f"{path}: frame_dim {D} does not match skeleton")
    clip_bytes = 1 + N * D * 8
    if len(payload) != header["num_clips"] * clip_bytes:
        raise IntegrityError(f"{path}: payload size mismatch")
    labels, frames = [], []
    for c in range(header["num_clips"]):
        block = payload[c * clip_bytes:(c + 1) * clip_bytes]
        labels.append(block[0])
        frames.append(np.frombuffer(block[1:], dtype="<f8").reshape(N, D))
    frames = np.stack(frames) if frames else np.zeros((0, N, D))
    return Dataset(skeleton=skeleton,
                   class_names=tuple(header["class_names"]),
                   fps=float(header["fps"]),
                   labels=np.asarray(labels, dtype=np.int64),
                   frames=frames,
                   stats=NormStats.from_config(header["stats"]))
