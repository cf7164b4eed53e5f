"""Compare the numba-jitted kernels against the pure-numpy fallback.

Run with ``python benchmarks/bench_kernels.py``.  Both implementations
are always importable regardless of which one backs the package
(``MOTIONGAN_NUMBA`` selects the active one at import time), so this
script times them side by side and checks they agree numerically.

Also times one desk-scale generator forward/backward so kernel-level
wins can be read against whole-model cost.
"""

import time

import numpy as np

from motiongan import kernels
from motiongan.motion import default_skeleton, quat_about_axis
from motiongan.networks import (ModelConfig, generator_forward,
                                init_generator, named_parameters)
from motiongan.tensor import Tensor, grad

REPEATS = 5


def best_of(fn, *args):
    times = []
    for _ in range(REPEATS):
        t0 = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - t0)
    return min(times)


def bench_elementwise(rng):
    x = rng.standard_normal((256, 63, 128))  # transformer activation shape
    print(f"\nelementwise kernels on {x.shape} ({x.size:,} values)")
    print(f"{'kernel':<10} {'numpy':>10} {'numba':>10} {'speedup':>8}")
    for name in ("selu", "selu_grad", "softplus", "sigmoid"):
        np_fn = kernels.numpy_impl[name]
        nb_fn = kernels.numba_impl[name]
        assert np.allclose(np_fn(x), nb_fn(x), atol=1e-12), name
        t_np = best_of(np_fn, x)
        t_nb = best_of(nb_fn, x)
        print(f"{name:<10} {t_np * 1e3:>8.2f}ms {t_nb * 1e3:>8.2f}ms "
              f"{t_np / t_nb:>7.2f}x")


def bench_fk(rng):
    skel = default_skeleton()
    m = 1920  # one desk batch of frames: 32 clips x 60 frames
    angles = rng.uniform(-0.5, 0.5, (m, skel.J))
    rotations = quat_about_axis(0, angles)
    root = rng.standard_normal((m, 3))
    parents = np.asarray(skel.parents, dtype=np.int64)
    offsets = np.asarray(skel.offsets)

    np_fn = kernels.numpy_impl["fk"]
    nb_fn = kernels.numba_impl["fk"]
    pos_np, _ = np_fn(parents, offsets, rotations, root)
    pos_nb, _ = nb_fn(parents, offsets, rotations, root)
    assert np.allclose(pos_np, pos_nb, atol=1e-12)

    t_np = best_of(np_fn, parents, offsets, rotations, root)
    t_nb = best_of(nb_fn, parents, offsets, rotations, root)
    print(f"\nforward kinematics on {m:,} frames x {skel.J} joints")
    print(f"{'fk':<10} {t_np * 1e3:>8.2f}ms {t_nb * 1e3:>8.2f}ms "
          f"{t_np / t_nb:>7.2f}x")


def bench_generator(rng):
    cfg = ModelConfig()
    params = init_generator(cfg, rng)
    batch = 32
    x_t = Tensor(rng.standard_normal((batch, cfg.N, cfg.frame_dim)))
    z = Tensor(rng.standard_normal((batch, cfg.z_dim)))
    labels = rng.integers(0, cfg.num_classes, batch)
    tensors = [p for _, p in named_parameters(params)]

    def fwd_bwd():
        out = generator_forward(params, x_t, z, labels, 5)
        grad(out.mean(), tensors)

    t = best_of(fwd_bwd)
    print(f"\ngenerator forward+backward, batch {batch}, "
          f"active kernels = {'numba' if kernels.USING_NUMBA else 'numpy'}")
    print(f"{'fwd+bwd':<10} {t:>8.2f}s")


def main():
    if kernels.numba_impl is None:
        raise SystemExit("numba is not importable; nothing to compare")
    rng = np.random.default_rng(0)
    bench_elementwise(rng)
    bench_fk(rng)
    bench_generator(rng)


if __name__ == "__main__":
    main()
