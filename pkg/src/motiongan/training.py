"""Adversarial training of the few-step denoiser.

Each iteration draws per-item step indices t in 1..T, builds a real pair
(x_{t-1}, x_t) from a data clip, and lets the generator fake the denoised
x_{t-1} by predicting clean motion and pushing it through the posterior.
The discriminator is updated first (softplus losses plus an R1 gradient
penalty on the real input); the generator second (non-saturating
adversarial term plus reconstruction/position/foot-contact/velocity
losses, scaled by R and the 0/1 sub-weight lam).

All randomness flows through one generator seeded from the config, in a
fixed draw order per iteration, so runs are reproducible and training can
resume from a checkpoint bitwise.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, fields

import numpy as np

from . import networks
from .motion import NormStats, Skeleton, channel_slices, fk_tensor
from .networks import (DiscriminatorParams, GeneratorParams, ModelConfig,
                       discriminator_forward, generator_forward,
                       init_discriminator, init_generator, make_dropout_masks,
                       named_parameters)
from .persist import read_container, write_container
from .schedule import Schedule, make_schedule
from .tensor import Tensor, grad

CHECKPOINT_MAGIC = b"EMDMCK1"
CHECKPOINT_VERSION = 1

LOG_COLUMNS = ("epoch", "disc_loss", "r1", "gen_adv", "recon", "pos", "foot",
               "vel", "lr_G", "lr_D")


@dataclass(frozen=True)
class TrainConfig:
    T: int = 10
    schedule_kind: str = "cosine"
    R: float = 100.0           # weight of the geometric block in the G loss
    lam: float = 1.0           # 0/1 switch for the pos+vel+foot sub-block
    gamma: float = 0.02        # R1 penalty weight
    lr_g: float = 3e-4
    lr_d: float = 1e-3
    batch: int = 32
    epochs: int = 10
    ema_decay: float = 0.995
    cfg_drop_rate: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.R < 0:
            raise ValueError("R must be nonnegative")
        if self.lam not in (0.0, 1.0):
            raise ValueError("lam must be 0 or 1")
        if self.gamma < 0:
            raise ValueError("gamma must be nonnegative")
        if not 0.0 <= self.cfg_drop_rate < 1.0:
            raise ValueError("cfg_drop_rate must lie in [0, 1)")
        if self.batch < 1 or self.epochs < 0:
            raise ValueError("batch must be >= 1 and epochs >= 0")

    def to_config(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @staticmethod
    def from_config(cfg: dict) -> "TrainConfig":
        return TrainConfig(**cfg)


# ---------------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------------

def disc_loss(disc: DiscriminatorParams, real_pair, fake_prev, labels, t,
              uncond=None) -> Tensor:
    """softplus(-D(real)) + softplus(D(fake)), each batch-meaned."""
    x_prev, x_t = (_as_tensor(a) for a in real_pair)
    score_real = discriminator_forward(disc, x_prev, x_t, labels, t, uncond)
    score_fake = discriminator_forward(disc, _as_tensor(fake_prev), x_t,
                                       labels, t, uncond)
    return (-score_real).softplus().mean() + score_fake.softplus().mean()


def r1_penalty(disc: DiscriminatorParams, x_prev, x_t, labels, t,
               gamma: float, uncond=None) -> Tensor:
    """gamma/2 * mean squared gradient norm of D w.r.t. the real x_{t-1}."""
    if gamma == 0.0:
        return Tensor(0.0)
    data = x_prev.data if isinstance(x_prev, Tensor) else x_prev
    x_prev = Tensor(np.asarray(data, dtype=np.float64), requires_grad=True)
    score = discriminator_forward(disc, x_prev, _as_tensor(x_t), labels, t,
                                  uncond)
    (g,) = grad(score.sum(), [x_prev], create_graph=True)
    batch = x_prev.shape[0]
    return g.square().sum() * (gamma / 2.0 / batch)


def gen_adv_loss(disc: DiscriminatorParams, fake_prev, x_t, labels, t,
                 uncond=None) -> Tensor:
    """Non-saturating generator objective softplus(-D(fake)), batch-meaned."""
    score = discriminator_forward(disc, _as_tensor(fake_prev), _as_tensor(x_t),
                                  labels, t, uncond)
    return (-score).softplus().mean()


def fk_frames(skeleton: Skeleton, frames) -> Tensor:
    """Joint positions (B, N, J, 3) from raw frame vectors, differentiably."""
    frames = _as_tensor(frames)
    b, n, _ = frames.shape
    sl = channel_slices(skeleton)
    root = frames[:, :, sl["root"]].reshape(b * n, 3)
    rot = frames[:, :, sl["rotations"]].reshape(b * n, skeleton.J, 4)
    return fk_tensor(skeleton, root, rot).reshape(b, n, skeleton.J, 3)


def geo_losses(x0, x0_hat, skeleton: Skeleton, contact) -> dict:
    """Geometric losses between real and predicted raw frame vectors.

    ``contact`` is the (B, N, feet) 0/1 mask of the real clip.  Each loss is
    the mean over batch, frame (or frame-difference), and coordinate axes.
    """
    x0, x0_hat = _as_tensor(x0), _as_tensor(x0_hat)
    recon = (x0 - x0_hat).square().mean()
    vel = ((x0[:, 1:] - x0[:, :-1])
           - (x0_hat[:, 1:] - x0_hat[:, :-1])).square().mean()

    pos_real = fk_frames(skeleton, x0)
    pos_hat = fk_frames(skeleton, x0_hat)
    pos = (pos_real - pos_hat).square().mean()

    feet = list(skeleton.foot_joints)
    foot_vel = (pos_hat[:, 1:, feet, :] - pos_hat[:, :-1, feet, :])
    mask = np.asarray(contact, dtype=np.float64)[:, :-1, :, None]
    foot = (foot_vel * mask).square().mean()
    return {"recon": recon, "pos": pos, "foot": foot, "vel": vel}


def total_gen_loss(adv: Tensor, geo: dict, R: float, lam: float) -> Tensor:
    return adv + R * (geo["recon"] + lam * (geo["pos"] + geo["vel"]
                                            + geo["foot"]))


# ---------------------------------------------------------------------------
# optimizer / EMA
# ---------------------------------------------------------------------------

class Adam:
    """Adam with bias correction; lr supplied per step."""

    def __init__(self, params, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)              # [(name, Tensor)]
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.step_count = 0
        self.m = {n: np.zeros_like(p.data) for n, p in self.params}
        self.v = {n: np.zeros_like(p.data) for n, p in self.params}

    def step(self, grads, lr: float):
        self.step_count += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.step_count
        c2 = 1.0 - b2 ** self.step_count
        for (name, p), g in zip(self.params, grads):
            g = g.data if isinstance(g, Tensor) else g
            m = self.m[name]
            v = self.v[name]
            m += (1.0 - b1) * (g - m)
            v += (1.0 - b2) * (g * g - v)
            p.data -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def cosine_lr(lr0: float, epoch: int, total_epochs: int) -> float:
    """lr0 * (1 + cos(pi * epoch/total)) / 2; reaches 0 at epoch == total."""
    if total_epochs <= 0:
        return lr0
    return lr0 * (1.0 + np.cos(np.pi * epoch / total_epochs)) / 2.0


def ema_update(shadow: dict, params, decay: float) -> dict:
    for name, p in params:
        shadow[name] += (1.0 - decay) * (p.data - shadow[name])
    return shadow


def draw_uncond_mask(rng, batch: int, rate: float) -> np.ndarray:
    """Per-item flags marking clips whose condition is dropped this step."""
    return rng.uniform(size=batch) < rate


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

@dataclass
class Checkpoint:
    version: int
    train_config: TrainConfig
    model_config: ModelConfig
    schedule: Schedule
    gen: GeneratorParams
    disc: DiscriminatorParams
    ema: dict                   # name -> ndarray
    opt_g: Adam
    opt_d: Adam
    epoch: int
    rng_state: dict
    skeleton: Skeleton
    class_names: tuple
    fps: float
    stats: NormStats


def _checkpoint_arrays(ckpt: Checkpoint):
    for name, p in named_parameters(ckpt.gen):
        yield f"gen.{name}", p.data
    for name, p in named_parameters(ckpt.disc):
        yield f"disc.{name}", p.data
    for name in sorted(ckpt.ema):
        yield f"ema.{name}", ckpt.ema[name]
    for tag, opt in (("opt_g", ckpt.opt_g), ("opt_d", ckpt.opt_d)):
        for name, _ in opt.params:
            yield f"{tag}.m.{name}", opt.m[name]
        for name, _ in opt.params:
            yield f"{tag}.v.{name}", opt.v[name]


def save_checkpoint(ckpt: Checkpoint, path):
    entries, chunks = [], []
    for name, arr in _checkpoint_arrays(ckpt):
        entries.append({"name": name, "shape": list(arr.shape)})
        chunks.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    header = {
        "version": ckpt.version,
        "train_config": ckpt.train_config.to_config(),
        "model_config": ckpt.model_config.to_config(),
        "schedule": ckpt.schedule.to_config(),
        "epoch": ckpt.epoch,
        "rng_state": ckpt.rng_state,
        "opt_steps": {"g": ckpt.opt_g.step_count, "d": ckpt.opt_d.step_count},
        "skeleton": ckpt.skeleton.to_config(),
        "class_names": list(ckpt.class_names),
        "fps": ckpt.fps,
        "stats": ckpt.stats.to_config(),
        "arrays": entries,
    }
    write_container(path, CHECKPOINT_MAGIC, header, b"".join(chunks))


def load_checkpoint(path) -> Checkpoint:
    header, payload = read_container(path, CHECKPOINT_MAGIC)
    if header["version"] != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {header['version']}")
    train_config = TrainConfig.from_config(header["train_config"])
    model_config = ModelConfig.from_config(header["model_config"])
    schedule = Schedule.from_config(header["schedule"])

    blobs = {}
    offset = 0
    for entry in header["arrays"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        blob = np.frombuffer(payload, dtype="<f8", count=count, offset=offset)
        blobs[entry["name"]] = blob.reshape(shape).astype(np.float64)
        offset += count * 8
    if offset != len(payload):
        raise ValueError("checkpoint payload size does not match header")

    placeholder = np.random.default_rng(0)
    gen = init_generator(model_config, placeholder)
    disc = init_discriminator(model_config, placeholder)
    for prefix, params in (("gen", gen), ("disc", disc)):
        for name, p in named_parameters(params):
            p.data = blobs.pop(f"{prefix}.{name}")
    ema = {}
    for name, _ in named_parameters(gen):
        ema[name] = blobs.pop(f"ema.{name}")
    opt_g = Adam(named_parameters(gen))
    opt_d = Adam(named_parameters(disc))
    opt_g.step_count = header["opt_steps"]["g"]
    opt_d.step_count = header["opt_steps"]["d"]
    for tag, opt in (("opt_g", opt_g), ("opt_d", opt_d)):
        for name, _ in opt.params:
            opt.m[name] = blobs.pop(f"{tag}.m.{name}")
            opt.v[name] = blobs.pop(f"{tag}.v.{name}")
    if blobs:
        raise ValueError(f"unexpected arrays in checkpoint: {sorted(blobs)}")

    return Checkpoint(
        version=header["version"], train_config=train_config,
        model_config=model_config, schedule=schedule, gen=gen, disc=disc,
        ema=ema, opt_g=opt_g, opt_d=opt_d, epoch=header["epoch"],
        rng_state=header["rng_state"],
        skeleton=Skeleton.from_config(header["skeleton"]),
        class_names=tuple(header["class_names"]), fps=header["fps"],
        stats=NormStats.from_config(header["stats"]))


def ema_generator(ckpt: Checkpoint) -> GeneratorParams:
    """Generator parameters with the EMA shadow swapped in."""
    gen = init_generator(ckpt.model_config, np.random.default_rng(0))
    for name, p in named_parameters(gen):
        p.data = ckpt.ema[name].copy()
    return gen


# ---------------------------------------------------------------------------
# training loop
# ---------------------------------------------------------------------------

def train(dataset, config: TrainConfig, model_config: ModelConfig = None,
          resume: Checkpoint = None, checkpoint_every: int = 0,
          checkpoint_dir=None, progress=None):
    """Train generator and discriminator; returns (Checkpoint, log rows).

    ``resume`` continues a partial run: parameters, optimizer moments, EMA,
    epoch counter, and RNG state are restored, so the remaining epochs
    produce the same losses an uninterrupted run would have.  Log rows are
    per-epoch means keyed by ``LOG_COLUMNS``; ``checkpoint_every`` > 0
    additionally writes ``epoch_NNN.ckpt`` files under ``checkpoint_dir``.
    """
    if dataset.stats is None:
        raise ValueError("dataset must carry normalization stats")

    if resume is not None:
        config = resume.train_config
        model_config = resume.model_config
        schedule = resume.schedule
        gen, disc, ema = resume.gen, resume.disc, resume.ema
        opt_g, opt_d = resume.opt_g, resume.opt_d
        rng = np.random.default_rng()
        rng.bit_generator.state = resume.rng_state
        start_epoch = resume.epoch
    else:
        if model_config is None:
            model_config = ModelConfig(
                N=dataset.frames.shape[1], frame_dim=dataset.frames.shape[2],
                num_classes=len(dataset.class_names))
        schedule = make_schedule(config.T, config.schedule_kind)
        rng = np.random.default_rng(config.seed)
        gen = init_generator(model_config, rng)
        disc = init_discriminator(model_config, rng)
        ema = {n: p.data.copy() for n, p in named_parameters(gen)}
        opt_g = Adam(named_parameters(gen))
        opt_d = Adam(named_parameters(disc))
        start_epoch = 0

    g_params = named_parameters(gen)
    d_params = named_parameters(disc)
    g_tensors = [p for _, p in g_params]
    d_tensors = [p for _, p in d_params]
    skeleton = dataset.skeleton
    n_feet = len(skeleton.foot_joints)

    raw = dataset.frames                       # (C, N, D) raw clips
    x0_all = dataset.stats.normalize(raw)      # model space
    labels_all = dataset.labels
    count = raw.shape[0]

    log_rows = []
    for epoch in range(start_epoch, config.epochs):
        lr_g = cosine_lr(config.lr_g, epoch, config.epochs)
        lr_d = cosine_lr(config.lr_d, epoch, config.epochs)
        sums = dict.fromkeys(LOG_COLUMNS[1:8], 0.0)
        iters = 0

        perm = rng.permutation(count)
        for lo in range(0, count, config.batch):
            idx = perm[lo:lo + config.batch]
            batch = idx.size
            x0 = x0_all[idx]
            x0_raw = raw[idx]
            labels = labels_all[idx]

            t = rng.integers(1, schedule.T + 1, size=batch)
            uncond = draw_uncond_mask(rng, batch, config.cfg_drop_rate)
            x_prev, x_t = schedule.sample_real_pair(x0, t, rng)

            # one generator fake serves both phases; grad() prunes the
            # discriminator step's backward pass at the fake, so the
            # generator subgraph is only traversed by the generator step
            z = rng.standard_normal((batch, model_config.z_dim))
            masks = make_dropout_masks(model_config, batch, rng)
            x0_hat = generator_forward(gen, Tensor(x_t), Tensor(z), labels, t,
                                       uncond, masks)
            eps = rng.standard_normal(x0.shape)
            fake_prev = schedule.posterior_given_noise(x0_hat, Tensor(x_t), t,
                                                       eps)

            # discriminator step (generator frozen)
            loss_d = disc_loss(disc, (x_prev, x_t), fake_prev, labels, t,
                               uncond)
            r1 = r1_penalty(disc, x_prev, x_t, labels, t, config.gamma, uncond)
            d_grads = grad(loss_d + r1, d_tensors)
            opt_d.step(d_grads, lr_d)

            # generator step, scored by the freshly updated discriminator
            adv = gen_adv_loss(disc, fake_prev, x_t, labels, t, uncond)
            geo = geo_losses(Tensor(x0_raw), dataset.stats.denormalize(x0_hat),
                             skeleton, x0_raw[:, :, -n_feet:])
            # recon/vel act in the generator's own normalized output space,
            # where every channel carries equal weight; in world units the
            # wide root-trajectory channels would drown the narrow rotation
            # channels that determine the pose.  The FK terms (pos, foot)
            # stay in world space, which is where joint positions live.
            x0_t = Tensor(x0)
            geo["recon"] = (x0_t - x0_hat).square().mean()
            geo["vel"] = ((x0_t[:, 1:] - x0_t[:, :-1])
                          - (x0_hat[:, 1:] - x0_hat[:, :-1])).square().mean()
            loss_g = total_gen_loss(adv, geo, config.R, config.lam)
            g_grads = grad(loss_g, g_tensors)
            opt_g.step(g_grads, lr_g)
            # warm-up: early on the shadow tracks a running average of the
            # trajectory instead of clinging to the random initialization,
            # so short runs still get a usable averaged generator
            steps = opt_g.step_count
            ema_update(ema, g_params,
                       min(config.ema_decay, (1.0 + steps) / (10.0 + steps)))

            sums["disc_loss"] += loss_d.item()
            sums["r1"] += r1.item()
            sums["gen_adv"] += adv.item()
            for key in ("recon", "pos", "foot", "vel"):
                sums[key] += geo[key].item()
            iters += 1

        row = {"epoch": epoch, "lr_G": lr_g, "lr_D": lr_d}
        row.update({k: sums[k] / max(iters, 1) for k in sums})
        log_rows.append(row)
        if progress is not None:
            progress(row)

        done = epoch + 1
        if checkpoint_every and checkpoint_dir and (done % checkpoint_every == 0
                                                    and done < config.epochs):
            ckpt = _snapshot(config, model_config, schedule, gen, disc, ema,
                             opt_g, opt_d, done, rng, dataset)
            save_checkpoint(ckpt, f"{checkpoint_dir}/epoch_{done:03d}.ckpt")

    ckpt = _snapshot(config, model_config, schedule, gen, disc, ema, opt_g,
                     opt_d, config.epochs, rng, dataset)
    return ckpt, log_rows


def _snapshot(config, model_config, schedule, gen, disc, ema, opt_g, opt_d,
              epoch, rng, dataset) -> Checkpoint:
    return Checkpoint(
        version=CHECKPOINT_VERSION, train_config=config,
        model_config=model_config, schedule=schedule, gen=gen, disc=disc,
        ema=ema, opt_g=opt_g, opt_d=opt_d, epoch=epoch,
        rng_state=rng.bit_generator.state, skeleton=dataset.skeleton,
        class_names=dataset.class_names, fps=dataset.fps, stats=dataset.stats)


def write_loss_log(rows, path):
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=LOG_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row[k] for k in LOG_COLUMNS})


def _as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))
