"""Hot numeric kernels with numba-jitted and pure-numpy implementations.

The active implementation is chosen at import time: numba is used when it is
importable and the environment variable ``MOTIONGAN_NUMBA`` is not set to
``0``/``false``/``no``.  Both implementations are always exported (as
``numpy_impl`` and ``numba_impl``) so they can be benchmarked against each
other; see ``benchmarks/bench_kernels.py``.

All kernels are float64 and avoid fastmath so results are deterministic and
accurate enough for finite-difference gradient checks.
"""

from __future__ import annotations

import os

import numpy as np

SELU_LAMBDA = 1.0507009873554805
SELU_ALPHA = 1.6732632423543772


def _env_wants_numba() -> bool:
    return os.environ.get("MOTIONGAN_NUMBA", "1").strip().lower() not in ("0", "false", "no")


# ---------------------------------------------------------------------------
# pure-numpy implementations
# ---------------------------------------------------------------------------

def _selu_np(x):
    neg = SELU_LAMBDA * SELU_ALPHA * np.expm1(np.minimum(x, 0.0))
    return np.where(x > 0.0, SELU_LAMBDA * x, neg)


def _selu_grad_np(x):
    neg = SELU_LAMBDA * SELU_ALPHA * np.exp(np.minimum(x, 0.0))
    return np.where(x > 0.0, SELU_LAMBDA, neg)


def _softplus_np(x):
    # log(1 + e^x), stable on both tails
    return np.logaddexp(0.0, x)


def _sigmoid_np(x):
    out = np.empty_like(x)
    pos = x >= 0.0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _fk_np(parents, offsets, rotations, root_pos):
    """Quaternion-chain forward kinematics.

    parents    : (J,) int64, parent index per joint, -1 for root
    offsets    : (J, 3) bone offsets in the parent frame
    rotations  : (M, J, 4) unit quaternions (w, x, y, z), local per joint
    root_pos   : (M, 3) root translations
    returns    : positions (M, J, 3), global rotations (M, J, 4)
    """
    M, J, _ = rotations.shape
    pos = np.empty((M, J, 3))
    glob = np.empty((M, J, 4))
    pos[:, 0] = root_pos
    glob[:, 0] = rotations[:, 0]
    for j in range(1, J):
        p = parents[j]
        gw, gx, gy, gz = glob[:, p, 0], glob[:, p, 1], glob[:, p, 2], glob[:, p, 3]
        lw, lx, ly, lz = (rotations[:, j, 0], rotations[:, j, 1],
                          rotations[:, j, 2], rotations[:, j, 3])
        glob[:, j, 0] = gw * lw - gx * lx - gy * ly - gz * lz
        glob[:, j, 1] = gw * lx + gx * lw + gy * lz - gz * ly
        glob[:, j, 2] = gw * ly - gx * lz + gy * lw + gz * lx
        glob[:, j, 3] = gw * lz + gx * ly - gy * lx + gz * lw
        ox, oy, oz = offsets[j]
        # v' = v + 2 w (q x v) + 2 q x (q x v), q = vector part of parent global
        cx = gy * oz - gz * oy
        cy = gz * ox - gx * oz
        cz = gx * oy - gy * ox
        dx = gy * cz - gz * cy
        dy = gz * cx - gx * cz
        dz = gx * cy - gy * cx
        pos[:, j, 0] = pos[:, p, 0] + ox + 2.0 * (gw * cx + dx)
        pos[:, j, 1] = pos[:, p, 1] + oy + 2.0 * (gw * cy + dy)
        pos[:, j, 2] = pos[:, p, 2] + oz + 2.0 * (gw * cz + dz)
    return pos, glob


numpy_impl = {
    "selu": _selu_np,
    "selu_grad": _selu_grad_np,
    "softplus": _softplus_np,
    "sigmoid": _sigmoid_np,
    "fk": _fk_np,
}


# ---------------------------------------------------------------------------
# numba implementations
# ---------------------------------------------------------------------------

numba_impl = None

try:
    from numba import njit

    @njit(cache=True)
    def _selu_nb_flat(x, out):
        for i in range(x.size):
            v = x.flat[i]
            if v > 0.0:
                out.flat[i] = SELU_LAMBDA * v
            else:
                out.flat[i] = SELU_LAMBDA * SELU_ALPHA * (np.exp(v) - 1.0)

    @njit(cache=True)
    def _selu_grad_nb_flat(x, out):
        for i in range(x.size):
            v = x.flat[i]
            if v > 0.0:
                out.flat[i] = SELU_LAMBDA
            else:
                out.flat[i] = SELU_LAMBDA * SELU_ALPHA * np.exp(v)

    @njit(cache=True)
    def _softplus_nb_flat(x, out):
        for i in range(x.size):
            v = x.flat[i]
            if v > 0.0:
                out.flat[i] = v + np.log1p(np.exp(-v))
            else:
                out.flat[i] = np.log1p(np.exp(v))

    @njit(cache=True)
    def _sigmoid_nb_flat(x, out):
        for i in range(x.size):
            v = x.flat[i]
            if v >= 0.0:
                out.flat[i] = 1.0 / (1.0 + np.exp(-v))
            else:
                e = np.exp(v)
                out.flat[i] = e / (1.0 + e)

    @njit(cache=True)
    def _fk_nb(parents, offsets, rotations, root_pos):
        M, J, _ = rotations.shape
        pos = np.empty((M, J, 3))
        glob = np.empty((M, J, 4))
        for m in range(M):
            for k in range(3):
                pos[m, 0, k] = root_pos[m, k]
            for k in range(4):
                glob[m, 0, k] = rotations[m, 0, k]
            for j in range(1, J):
                p = parents[j]
                gw = glob[m, p, 0]
                gx = glob[m, p, 1]
                gy = glob[m, p, 2]
                gz = glob[m, p, 3]
                lw = rotations[m, j, 0]
                lx = rotations[m, j, 1]
                ly = rotations[m, j, 2]
                lz = rotations[m, j, 3]
                glob[m, j, 0] = gw * lw - gx * lx - gy * ly - gz * lz
                glob[m, j, 1] = gw * lx + gx * lw + gy * lz - gz * ly
                glob[m, j, 2] = gw * ly - gx * lz + gy * lw + gz * lx
                glob[m, j, 3] = gw * lz + gx * ly - gy * lx + gz * lw
                ox = offsets[j, 0]
                oy = offsets[j, 1]
                oz = offsets[j, 2]
                cx = gy * oz - gz * oy
                cy = gz * ox - gx * oz
                cz = gx * oy - gy * ox
                dx = gy * cz - gz * cy
                dy = gz * cx - gx * cz
                dz = gx * cy - gy * cx
                pos[m, j, 0] = pos[m, p, 0] + ox + 2.0 * (gw * cx + dx)
                pos[m, j, 1] = pos[m, p, 1] + oy + 2.0 * (gw * cy + dy)
                pos[m, j, 2] = pos[m, p, 2] + oz + 2.0 * (gw * cz + dz)
        return pos, glob

    def _wrap_elementwise(flat_kernel):
        def apply(x):
            x = np.ascontiguousarray(x)
            out = np.empty_like(x)
            flat_kernel(x, out)
            return out
        return apply

    numba_impl = {
        "selu": _wrap_elementwise(_selu_nb_flat),
        "selu_grad": _wrap_elementwise(_selu_grad_nb_flat),
        "softplus": _wrap_elementwise(_softplus_nb_flat),
        "sigmoid": _wrap_elementwise(_sigmoid_nb_flat),
        "fk": lambda parents, offsets, rotations, root_pos: _fk_nb(
            np.ascontiguousarray(parents), np.ascontiguousarray(offsets),
            np.ascontiguousarray(rotations), np.ascontiguousarray(root_pos)),
    }
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba_impl = None

USING_NUMBA = numba_impl is not None and _env_wants_numba()

_active = numba_impl if USING_NUMBA else numpy_impl

selu = _active["selu"]
selu_grad = _active["selu_grad"]
softplus = _active["softplus"]
sigmoid = _active["sigmoid"]
fk_chain = _active["fk"]
