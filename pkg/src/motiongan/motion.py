"""Skeleton, poses, forward kinematics, contacts, and the frame representation.

Coordinate conventions: z is up, y is forward, x is left; the floor is the
z = 0 plane; lengths are meters.  Quaternions are (w, x, y, z), unit norm.

The per-frame feature vector ("frame vector") concatenates
``[root translation (3) | joint rotations (4J) | joint positions (3J) |
joint velocities (3J) | foot contact flags]``.  Rotations and the root
translation are the authoritative channels; positions, velocities, and
contacts are derived and recomputed on decode.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .tensor import Tensor, stack

QUAT_TOL = 1e-6


# ---------------------------------------------------------------------------
# skeleton / pose / clip types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Skeleton:
    parents: np.ndarray          # (J,) int64, -1 for the root
    offsets: np.ndarray          # (J, 3) bone offsets in the parent frame
    foot_joints: tuple           # indices of foot joints
    joint_names: tuple

    def __post_init__(self):
        object.__setattr__(self, "parents", np.asarray(self.parents, dtype=np.int64))
        object.__setattr__(self, "offsets", np.asarray(self.offsets, dtype=np.float64))
        if self.parents[0] != -1 or (self.parents[1:] >= np.arange(1, self.J)).any():
            raise ValueError("joints must be topologically sorted with a single root")
        lengths = np.linalg.norm(self.offsets[1:], axis=1)
        if (lengths <= 0).any():
            raise ValueError("non-root joints need a nonzero bone offset")

    @property
    def J(self) -> int:
        return len(self.parents)

    @property
    def frame_dim(self) -> int:
        return 3 + 4 * self.J + 3 * self.J + 3 * self.J + len(self.foot_joints)

    def to_config(self) -> dict:
        return {"parents": [int(p) for p in self.parents],
                "offsets": [[float(v) for v in row] for row in self.offsets],
                "foot_joints": list(self.foot_joints),
                "joint_names": list(self.joint_names)}

    @staticmethod
    def from_config(cfg: dict) -> "Skeleton":
        return Skeleton(np.asarray(cfg["parents"]), np.asarray(cfg["offsets"]),
                        tuple(cfg["foot_joints"]), tuple(cfg["joint_names"]))


def default_skeleton() -> Skeleton:
    """8-joint figure: pelvis root, spine, head, two hip+foot legs, one arm."""
    names = ("root", "spine", "head", "hip_l", "foot_l", "hip_r", "foot_r", "arm")
    parents = [-1, 0, 1, 0, 3, 0, 5, 1]
    offsets = [
        [0.0, 0.0, 0.0],     # root
        [0.0, 0.0, 0.30],    # spine
        [0.0, 0.0, 0.25],    # head
        [0.10, 0.0, 0.0],    # hip_l
        [0.0, 0.0, -0.85],   # foot_l
        [-0.10, 0.0, 0.0],   # hip_r
        [0.0, 0.0, -0.85],   # foot_r
        [0.25, 0.0, 0.20],   # arm
    ]
    return Skeleton(np.asarray(parents), np.asarray(offsets), (4, 6), names)


LEG_LENGTH = 0.85  # |foot offset| of the default skeleton, used by the dataset


@dataclass(frozen=True)
class Pose:
    root_translation: np.ndarray   # (3,)
    joint_rotations: np.ndarray    # (J, 4) unit quaternions


@dataclass(frozen=True)
class MotionClip:
    """Fixed-length clip; rotations/translation are the authoritative state."""
    root: np.ndarray        # (N, 3)
    rotations: np.ndarray   # (N, J, 4)
    label: int
    fps: float

    def __post_init__(self):
        if self.N < 2:
            raise ValueError("clips need at least two frames")
        norms = np.linalg.norm(self.rotations, axis=-1)
        if np.abs(norms - 1.0).max() > QUAT_TOL:
            raise ValueError("clip contains unnormalized quaternions")

    @property
    def N(self) -> int:
        return len(self.root)

    def pose(self, i: int) -> Pose:
        return Pose(self.root[i], self.rotations[i])


# ---------------------------------------------------------------------------
# quaternion helpers
# ---------------------------------------------------------------------------

def quat_identity(shape=()) -> np.ndarray:
    q = np.zeros(shape + (4,))
    q[..., 0] = 1.0
    return q


def quat_about_axis(axis: int, angle) -> np.ndarray:
    """Unit quaternion for a rotation of ``angle`` about the x/y/z axis (0/1/2)."""
    angle = np.asarray(angle, dtype=np.float64)
    q = np.zeros(angle.shape + (4,))
    q[..., 0] = np.cos(angle / 2.0)
    q[..., 1 + axis] = np.sin(angle / 2.0)
    return q


def quat_multiply(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aw, ax, ay, az = (a[..., i] for i in range(4))
    bw, bx, by, bz = (b[..., i] for i in range(4))
    return np.stack([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ], axis=-1)


# ---------------------------------------------------------------------------
# forward kinematics
# ---------------------------------------------------------------------------

def fk(skeleton: Skeleton, pose: Pose) -> np.ndarray:
    """Global joint positions (J, 3) of a single pose."""
    pos, _ = fk_positions(skeleton, pose.root_translation[None],
                          pose.joint_rotations[None])
    return pos[0]


def fk_positions(skeleton: Skeleton, root: np.ndarray, rotations: np.ndarray):
    """Batched FK: root (M, 3), rotations (M, J, 4) -> positions (M, J, 3).

    Also returns the global rotations (M, J, 4).
    """
    rotations = np.asarray(rotations, dtype=np.float64)
    norms = np.linalg.norm(rotations, axis=-1)
    if np.abs(norms - 1.0).max() > QUAT_TOL:
        raise ValueError("fk requires unit quaternions")
    return kernels.fk_chain(skeleton.parents, skeleton.offsets, rotations,
                            np.asarray(root, dtype=np.float64))


def fk_tensor(skeleton: Skeleton, root: Tensor, rotations: Tensor) -> Tensor:
    """Differentiable FK: root (..., 3), rotations (..., J, 4) -> (..., J, 3).

    Quaternions are normalized internally, so network output can be fed in
    directly.  Mirrors the fast kernel; kept in graph ops for gradients.
    """
    sq_norm = rotations.square().sum(axis=-1, keepdims=True)
    rotations = rotations / sq_norm.sqrt()

    glob = [None] * skeleton.J     # per joint: (w, x, y, z) component tensors
    pos = [None] * skeleton.J      # per joint: (px, py, pz)
    glob[0] = tuple(rotations[..., 0, i] for i in range(4))
    pos[0] = tuple(root[..., i] for i in range(3))

    for j in range(1, skeleton.J):
        p = int(skeleton.parents[j])
        gw, gx, gy, gz = glob[p]
        lw, lx, ly, lz = (rotations[..., j, i] for i in range(4))
        glob[j] = (gw * lw - gx * lx - gy * ly - gz * lz,
                   gw * lx + gx * lw + gy * lz - gz * ly,
                   gw * ly - gx * lz + gy * lw + gz * lx,
                   gw * lz + gx * ly - gy * lx + gz * lw)
        ox, oy, oz = (float(v) for v in skeleton.offsets[j])
        cx = gy * oz - gz * oy
        cy = gz * ox - gx * oz
        cz = gx * oy - gy * ox
        dx = gy * cz - gz * cy
        dy = gz * cx - gx * cz
        dz = gx * cy - gy * cx
        pos[j] = (pos[p][0] + ox + (gw * cx + dx) * 2.0,
                  pos[p][1] + oy + (gw * cy + dy) * 2.0,
                  pos[p][2] + oz + (gw * cz + dz) * 2.0)

    return stack([stack(pos[j], axis=-1) for j in range(skeleton.J)], axis=-2)


# ---------------------------------------------------------------------------
# foot contacts
# ---------------------------------------------------------------------------

def detect_foot_contact(positions: np.ndarray, skeleton: Skeleton,
                        vel_threshold: float = 0.1,
                        height_threshold: float = 0.05,
                        fps: float = 20.0) -> np.ndarray:
    """Binary contact mask (N, |foot|): slow AND low foot joints.

    The last frame has no forward difference and copies frame N-2's speeds.
    """
    feet = positions[:, list(skeleton.foot_joints), :]   # (N, F, 3)
    if len(feet) < 2:
        raise ValueError("need at least two frames to detect contacts")
    speed = np.linalg.norm(np.diff(feet, axis=0), axis=-1) * fps
    speed = np.concatenate([speed, speed[-1:]], axis=0)
    mask = (speed < vel_threshold) & (feet[..., 2] < height_threshold)
    return mask.astype(np.float64)


# ---------------------------------------------------------------------------
# frame-vector representation
# ---------------------------------------------------------------------------

def channel_slices(skeleton: Skeleton) -> dict:
    """Index ranges of each channel group within a frame vector."""
    J = skeleton.J
    edges = np.cumsum([3, 4 * J, 3 * J, 3 * J, len(skeleton.foot_joints)])
    keys = ("root", "rotations", "positions", "velocities", "contacts")
    starts = np.concatenate([[0], edges[:-1]])
    return {k: slice(int(a), int(b)) for k, a, b in zip(keys, starts, edges)}


def encode_repr(clip: MotionClip, skeleton: Skeleton) -> np.ndarray:
    """MotionClip -> (N, D_f) frame vectors with derived channels filled in."""
    N, J = clip.N, skeleton.J
    positions, _ = fk_positions(skeleton, clip.root, clip.rotations)
    velocities = np.diff(positions, axis=0) * clip.fps
    velocities = np.concatenate([velocities, velocities[-1:]], axis=0)
    contacts = detect_foot_contact(positions, skeleton, fps=clip.fps)
    return np.concatenate([
        clip.root,
        clip.rotations.reshape(N, 4 * J),
        positions.reshape(N, 3 * J),
        velocities.reshape(N, 3 * J),
        contacts,
    ], axis=1)


def decode_repr(frames: np.ndarray, skeleton: Skeleton,
                label: int = 0, fps: float = 20.0) -> MotionClip:
    """(N, D_f) -> MotionClip, renormalizing quaternions.

    Only the root/rotation channels are read; derived channels are
    recomputed from them when re-encoding.
    """
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim != 2 or frames.shape[1] != skeleton.frame_dim:
        raise ValueError(f"expected (N, {skeleton.frame_dim}) frame array, "
                         f"got {frames.shape}")
    ch = channel_slices(skeleton)
    root = frames[:, ch["root"]]
    rot = frames[:, ch["rotations"]].reshape(len(frames), skeleton.J, 4)
    norms = np.linalg.norm(rot, axis=-1, keepdims=True)
    if (norms < 1e-8).any():
        raise ValueError("cannot renormalize a zero quaternion")
    return MotionClip(root=root.copy(), rotations=rot / norms,
                      label=int(label), fps=fps)


# ---------------------------------------------------------------------------
# normalization
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NormStats:
    """Per-channel standardization; near-constant channels get unit scale.

    The scale is floored at 0.02: dividing by a tiny per-channel spread
    would blow small absolute deviations (for example the cross-channel
    jitter quaternion renormalization introduces on a decode/encode round
    trip) up into huge standardized values.
    """
    mean: np.ndarray
    std: np.ndarray

    SCALE_FLOOR = 0.02

    @staticmethod
    def fit(frames: np.ndarray) -> "NormStats":
        flat = frames.reshape(-1, frames.shape[-1])
        std = flat.std(axis=0)
        return NormStats(mean=flat.mean(axis=0),
                         std=np.where(std < 1e-8, 1.0,
                                      np.maximum(std, NormStats.SCALE_FLOOR)))

    def normalize(self, x):
        if isinstance(x, Tensor):
            return (x - Tensor(self.mean)) / Tensor(self.std)
        return (x - self.mean) / self.std

    def denormalize(self, x):
        if isinstance(x, Tensor):
            return x * Tensor(self.std) + Tensor(self.mean)
        return x * self.std + self.mean

    def to_config(self) -> dict:
        return {"mean": [float(v) for v in self.mean],
                "std": [float(v) for v in self.std]}

    @staticmethod
    def from_config(cfg: dict) -> "NormStats":
        return NormStats(np.asarray(cfg["mean"]), np.asarray(cfg["std"]))
