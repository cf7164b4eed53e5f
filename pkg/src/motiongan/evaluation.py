"""Metrics, the feature extractor, and the brute-force posterior oracle.

Three groups of tools live here:

* Distribution metrics over motion: a small trainable classifier whose
  penultimate layer provides 32-d features, Frechet distance between
  feature sets, pairwise-distance diversity/multimodality, label
  accuracy, and physical plausibility (floor penetration, foot skate).

* A 1-D quadrature oracle for the true denoising posterior
  q(x_to | x_from) under a known toy prior, plus a gaussianity score
  (KL to the moment-matched Gaussian) measuring how non-Gaussian that
  posterior becomes as the step size grows.

* A tiny 1-D two-step denoising GAN ("toy denoiser") trained on a
  two-atom prior, used to demonstrate that an adversarial denoiser
  actually captures the bimodal posterior a Gaussian model cannot.

Feature dimension (32) and extractor size are fixed small-scale choices,
so Frechet values are comparable only within this codebase, never to
numbers computed with other feature extractors.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .motion import NormStats, Skeleton, detect_foot_contact, encode_repr, fk_positions
from .networks import named_parameters
from .sampler import SampleRequest, sample
from .schedule import Schedule, make_schedule
from .tensor import Tensor, concat, grad, no_grad

FEATURE_DIM = 32
PAIR_COUNT = 300


# ---------------------------------------------------------------------------
# feature extractor
# ---------------------------------------------------------------------------

@dataclass
class FeatureExtractor:
    """Pooled frame classifier; features are the penultimate activations."""

    stats: NormStats
    class_names: tuple
    w1: Tensor; b1: Tensor      # per-frame lift
    w2: Tensor; b2: Tensor      # pooled -> feature layer
    w3: Tensor; b3: Tensor      # feature -> logits
    holdout_accuracy: float = 0.0

    def _forward(self, frames) -> tuple:
        x = self.stats.normalize(_as_tensor(frames))
        h = (x @ self.w1 + self.b1).selu()            # (B, N, width)
        mean = h.mean(axis=1)
        var = (h * h).mean(axis=1) - mean * mean
        std = (var + 1e-8).sqrt()
        pooled = concat([mean, std], axis=1)
        feat = (pooled @ self.w2 + self.b2).selu()
        logits = feat @ self.w3 + self.b3
        return feat, logits

    def features(self, frames) -> np.ndarray:
        with no_grad():
            feat, _ = self._forward(frames)
        return feat.data

    def logits(self, frames) -> np.ndarray:
        with no_grad():
            _, logits = self._forward(frames)
        return logits.data

    def predict(self, frames) -> np.ndarray:
        return np.argmax(self.logits(frames), axis=1)


def _cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    shift = Tensor(logits.data.max(axis=1, keepdims=True))
    lse = (logits - shift).exp().sum(axis=1, keepdims=True).log() + shift
    mask = np.zeros(logits.shape)
    mask[np.arange(len(labels)), labels] = 1.0
    picked = (logits * mask).sum(axis=1, keepdims=True)
    return (lse - picked).mean()


def holdout_split(labels: np.ndarray, fraction: float = 0.2):
    """Per-class split: the trailing fraction of each class is held out."""
    train_idx, hold_idx = [], []
    for cls in np.unique(labels):
        members = np.flatnonzero(labels == cls)
        cut = len(members) - max(1, int(round(fraction * len(members))))
        train_idx.append(members[:cut])
        hold_idx.append(members[cut:])
    return np.concatenate(train_idx), np.concatenate(hold_idx)


def train_feature_extractor(dataset, seed: int = 0, epochs: int = 30,
                            batch: int = 64, width: int = 64,
                            lr: float = 3e-3,
                            holdout_fraction: float = 0.2) -> FeatureExtractor:
    """Fit the classifier on a per-class split; reports held-out accuracy."""
    rng = np.random.default_rng(seed)
    num_classes = len(dataset.class_names)
    d = dataset.frame_dim

    def xavier(fan_in, fan_out):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        return Tensor(rng.uniform(-limit, limit, (fan_in, fan_out)),
                      requires_grad=True)

    ext = FeatureExtractor(
        stats=dataset.stats, class_names=dataset.class_names,
        w1=xavier(d, width), b1=Tensor(np.zeros(width), requires_grad=True),
        w2=xavier(2 * width, FEATURE_DIM),
        b2=Tensor(np.zeros(FEATURE_DIM), requires_grad=True),
        w3=xavier(FEATURE_DIM, num_classes),
        b3=Tensor(np.zeros(num_classes), requires_grad=True))
    params = [ext.w1, ext.b1, ext.w2, ext.b2, ext.w3, ext.b3]

    train_idx, hold_idx = holdout_split(dataset.labels, holdout_fraction)
    frames, labels = dataset.frames[train_idx], dataset.labels[train_idx]

    moments = [(np.zeros_like(p.data), np.zeros_like(p.data)) for p in params]
    step = 0
    for _ in range(epochs):
        perm = rng.permutation(len(labels))
        for lo in range(0, len(labels), batch):
            idx = perm[lo:lo + batch]
            _, logits = ext._forward(Tensor(frames[idx]))
            loss = _cross_entropy(logits, labels[idx])
            grads = grad(loss, params)
            step += 1
            c1, c2 = 1 - 0.9 ** step, 1 - 0.999 ** step
            for p, g, (m, v) in zip(params, grads, moments):
                m += 0.1 * (g.data - m)
                v += 0.001 * (g.data * g.data - v)
                p.data -= lr * (m / c1) / (np.sqrt(v / c2) + 1e-8)

    preds = ext.predict(dataset.frames[hold_idx])
    ext.holdout_accuracy = float(np.mean(preds == dataset.labels[hold_idx]))
    return ext


# ---------------------------------------------------------------------------
# distribution metrics
# ---------------------------------------------------------------------------

def _sqrt_psd(mat: np.ndarray, tol: float = 1e-8) -> np.ndarray:
    vals, vecs = np.linalg.eigh(mat)
    if vals.min() < -tol:
        raise ValueError(f"matrix is not PSD: min eigenvalue {vals.min():.3e}")
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.T


def fid(features_a: np.ndarray, features_b: np.ndarray) -> float:
    """Frechet distance between Gaussian fits of two feature sets."""
    a = np.atleast_2d(np.asarray(features_a, dtype=np.float64))
    b = np.atleast_2d(np.asarray(features_b, dtype=np.float64))
    mu_a, mu_b = a.mean(axis=0), b.mean(axis=0)
    ca = np.cov(a, rowvar=False).reshape(a.shape[1], a.shape[1])
    cb = np.cov(b, rowvar=False).reshape(b.shape[1], b.shape[1])
    ra = _sqrt_psd(ca)
    cross = _sqrt_psd(ra @ cb @ ra)
    value = float(np.sum((mu_a - mu_b) ** 2)
                  + np.trace(ca) + np.trace(cb) - 2.0 * np.trace(cross))
    return max(value, 0.0)


def _disjoint_pair_distance(features: np.ndarray, pairs: int, rng) -> float:
    m = len(features)
    pairs = min(pairs, m // 2)
    if pairs == 0:
        return 0.0
    perm = rng.permutation(m)
    left = features[perm[:pairs]]
    right = features[perm[pairs:2 * pairs]]
    return float(np.mean(np.linalg.norm(left - right, axis=1)))


def diversity(features: np.ndarray, pairs: int = PAIR_COUNT, rng=None) -> float:
    """Mean distance over disjoint random feature pairs."""
    rng = np.random.default_rng(0) if rng is None else rng
    return _disjoint_pair_distance(np.asarray(features), pairs, rng)


def multimodality(features: np.ndarray, labels: np.ndarray,
                  pairs: int = PAIR_COUNT, rng=None) -> float:
    """Within-condition pair distance, averaged over conditions."""
    rng = np.random.default_rng(0) if rng is None else rng
    features = np.asarray(features)
    labels = np.asarray(labels)
    values = [_disjoint_pair_distance(features[labels == cls], pairs, rng)
              for cls in np.unique(labels)]
    return float(np.mean(values)) if values else 0.0


def accuracy(extractor: FeatureExtractor, frames, labels) -> float:
    preds = extractor.predict(frames)
    return float(np.mean(preds == np.asarray(labels)))


def physical_metrics(clips, skeleton: Skeleton, floor: float = 0.0) -> dict:
    """Floor penetration (m) and foot skate during contact (m/frame)."""
    pen_frames, skate_sum, skate_count = [], 0.0, 0
    feet = list(skeleton.foot_joints)
    for clip in clips:
        positions, _ = fk_positions(skeleton, clip.root, clip.rotations)
        lowest = positions[..., 2].min(axis=1)
        pen_frames.append(np.maximum(0.0, floor - lowest))
        contacts = detect_foot_contact(positions, skeleton, fps=clip.fps)
        disp = np.linalg.norm(np.diff(positions[:, feet, :2], axis=0), axis=-1)
        flags = contacts[:-1]
        skate_sum += float((disp * flags).sum())
        skate_count += int(flags.sum())
    return {
        "penetration": float(np.concatenate(pen_frames).mean()),
        "skate": skate_sum / skate_count if skate_count else 0.0,
    }


def encode_clips(clips, skeleton: Skeleton) -> np.ndarray:
    """Stack clips into a raw (B, N, D) frame array."""
    return np.stack([encode_repr(clip, skeleton) for clip in clips])


# ---------------------------------------------------------------------------
# toy priors and the grid posterior oracle
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DeltaPrior:
    """Discrete atoms; the classic two-delta case is DeltaPrior((-1, 1))."""

    locations: tuple = (-1.0, 1.0)
    weights: tuple = None

    def __post_init__(self):
        w = self.weights
        if w is None:
            w = (1.0 / len(self.locations),) * len(self.locations)
        w = tuple(float(v) for v in w)
        if len(w) != len(self.locations) or min(w) <= 0:
            raise ValueError("need one positive weight per atom")
        if abs(sum(w) - 1.0) > 1e-12:
            raise ValueError("weights must sum to 1")
        object.__setattr__(self, "locations",
                           tuple(float(v) for v in self.locations))
        object.__setattr__(self, "weights", w)

    def moments(self):
        xs, ws = np.asarray(self.locations), np.asarray(self.weights)
        mean = float(np.sum(ws * xs))
        return mean, float(np.sum(ws * (xs - mean) ** 2))

    def noised_density(self, x: np.ndarray, abar: float) -> np.ndarray:
        if abar >= 1.0:
            raise ValueError("atom prior has no density at step 0; "
                             "use a destination step >= 1")
        var = 1.0 - abar
        out = np.zeros_like(x)
        for loc, w in zip(self.locations, self.weights):
            out += w * _normal_pdf(x, np.sqrt(abar) * loc, var)
        return out


@dataclass(frozen=True)
class GaussianPrior:
    mean: float = 0.0
    std: float = 1.0

    def __post_init__(self):
        if self.std <= 0:
            raise ValueError("std must be positive")

    def moments(self):
        return float(self.mean), float(self.std) ** 2

    def noised_density(self, x: np.ndarray, abar: float) -> np.ndarray:
        mean, var = self.moments()
        return _normal_pdf(x, np.sqrt(abar) * mean,
                           abar * var + (1.0 - abar))


def _normal_pdf(x, mean, var):
    return np.exp(-(x - mean) ** 2 / (2.0 * var)) / np.sqrt(2.0 * np.pi * var)


@dataclass(frozen=True)
class GridPosterior:
    """1-D density sampled on a uniform grid; integrates to one."""

    x: np.ndarray
    density: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=np.float64)
        p = np.asarray(self.density, dtype=np.float64)
        if x.ndim != 1 or x.shape != p.shape or len(x) < 8:
            raise ValueError("grid and density must be matching 1-D arrays")
        steps = np.diff(x)
        if not np.allclose(steps, steps[0], rtol=1e-9):
            raise ValueError("grid must be uniform")
        if p.min() < 0:
            raise ValueError("density must be nonnegative")
        if abs(p.sum() * steps[0] - 1.0) > 1e-6:
            raise ValueError("density must integrate to 1")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "density", p)

    @property
    def dx(self) -> float:
        return float(self.x[1] - self.x[0])

    def moments(self):
        mean = float(np.sum(self.x * self.density) * self.dx)
        var = float(np.sum((self.x - mean) ** 2 * self.density) * self.dx)
        return mean, var


def posterior_grid_axis(prior, schedule: Schedule, to_t: int,
                        points: int = 2048, span: float = 6.0) -> np.ndarray:
    """Uniform grid spanning +-span marginal standard deviations at to_t."""
    abar = float(schedule.alphabar[to_t])
    mean, var = prior.moments()
    m = np.sqrt(abar) * mean
    s = np.sqrt(abar * var + (1.0 - abar))
    return np.linspace(m - span * s, m + span * s, points)


def grid_true_posterior(prior, schedule: Schedule, from_t: int, to_t: int,
                        x_t: float, grid: np.ndarray = None,
                        points: int = 2048, span: float = 6.0) -> GridPosterior:
    """Bayes posterior q(x_to | x_from = x_t) for a known 1-D prior.

    The prior's noised marginal at ``to_t`` is multiplied by the Gaussian
    bridge density of ``x_t`` given x_to, then normalized on the grid.
    """
    if not 0 <= to_t < from_t <= schedule.T:
        raise ValueError(f"need 0 <= to < from <= {schedule.T}, "
                         f"got to={to_t} from={from_t}")
    if grid is None:
        grid = posterior_grid_axis(prior, schedule, to_t, points, span)
    grid = np.asarray(grid, dtype=np.float64)
    a_to = float(schedule.alphabar[to_t])
    ratio = float(schedule.alphabar[from_t]) / a_to
    bridge_var = 1.0 - ratio
    p = prior.noised_density(grid, a_to)
    p = p * _normal_pdf(x_t, np.sqrt(ratio) * grid, bridge_var)
    dx = grid[1] - grid[0]
    total = p.sum() * dx
    if total <= 0:
        raise ValueError("posterior mass vanished on the grid")
    p = p / total
    if (p[0] + p[-1]) * dx > 1e-4:
        raise ValueError("grid too coarse: significant mass at the boundary")
    return GridPosterior(grid, p)


def gaussian_true_posterior(prior: GaussianPrior, schedule: Schedule,
                            from_t: int, to_t: int, x_t: float):
    """Closed-form (mean, var) of q(x_to | x_from) for a Gaussian prior."""
    if not 0 <= to_t < from_t <= schedule.T:
        raise ValueError(f"need 0 <= to < from <= {schedule.T}")
    a_to = float(schedule.alphabar[to_t])
    mu0, var0 = prior.moments()
    m = np.sqrt(a_to) * mu0
    v = a_to * var0 + (1.0 - a_to)
    ratio = float(schedule.alphabar[from_t]) / a_to
    b, bridge_var = np.sqrt(ratio), 1.0 - ratio
    gain = v * b / (ratio * v + bridge_var)
    mean = m + gain * (x_t - b * m)
    var = v * bridge_var / (ratio * v + bridge_var)
    return float(mean), float(var)


def discretized_normal(grid: np.ndarray, mean: float, var: float) -> GridPosterior:
    """A Gaussian restricted to (and renormalized on) the given grid."""
    grid = np.asarray(grid, dtype=np.float64)
    p = _normal_pdf(grid, mean, var)
    p = p / (p.sum() * (grid[1] - grid[0]))
    return GridPosterior(grid, p)


def grid_kl(p: GridPosterior, q: GridPosterior) -> float:
    """KL(p || q) for densities on the same grid; +inf if q misses p-mass."""
    if not np.array_equal(p.x, q.x):
        raise ValueError("posteriors live on different grids")
    mask = p.density > 0
    if np.any(q.density[mask] <= 0):
        return float("inf")
    ratio = p.density[mask] / q.density[mask]
    return float(np.sum(p.density[mask] * np.log(ratio)) * p.dx)


def gaussianity_score(p: GridPosterior) -> float:
    """KL from p to its moment-matched Gaussian on the same grid."""
    mean, var = p.moments()
    return grid_kl(p, discretized_normal(p.x, mean, var))


def empirical_grid(samples: np.ndarray, grid: np.ndarray) -> GridPosterior:
    """Histogram of samples as a density on the grid (outliers dropped)."""
    grid = np.asarray(grid, dtype=np.float64)
    dx = grid[1] - grid[0]
    edges = np.concatenate([grid - dx / 2, [grid[-1] + dx / 2]])
    counts, _ = np.histogram(np.asarray(samples), bins=edges)
    total = counts.sum()
    if total == 0:
        raise ValueError("no samples fall inside the grid")
    return GridPosterior(grid, counts / (total * dx))


# ---------------------------------------------------------------------------
# toy 1-D denoising GAN
# ---------------------------------------------------------------------------

@dataclass
class ToyDenoiser:
    schedule: Schedule
    layers: list                # [(w, b)] generator MLP
    z_dim: int

    def predict(self, x_t: np.ndarray, z: np.ndarray,
                t: np.ndarray) -> np.ndarray:
        with no_grad():
            out = _toy_mlp(self.layers,
                           _toy_inputs(x_t, z, t, self.schedule.T))
        return out.data


def _toy_inputs(x_t, z, t, T):
    onehot = np.zeros((len(t), T))
    onehot[np.arange(len(t)), np.asarray(t) - 1] = 1.0
    return concat([_as_tensor(x_t), _as_tensor(z), Tensor(onehot)], axis=1)


def _toy_mlp(layers, x: Tensor) -> Tensor:
    h = x
    for i, (w, b) in enumerate(layers):
        h = h @ w + b
        if i < len(layers) - 1:
            h = h.selu()
    return h


def _toy_init(rng, dims):
    layers = []
    for i in range(len(dims) - 1):
        limit = np.sqrt(6.0 / (dims[i] + dims[i + 1]))
        layers.append((Tensor(rng.uniform(-limit, limit,
                                          (dims[i], dims[i + 1])),
                              requires_grad=True),
                       Tensor(np.zeros(dims[i + 1]), requires_grad=True)))
    return layers


class _ToyAdam:
    def __init__(self, layers, lr):
        self.params = [p for pair in layers for p in pair]
        self.state = [(np.zeros_like(p.data), np.zeros_like(p.data))
                      for p in self.params]
        self.lr, self.step_count = lr, 0

    def step(self, grads):
        self.step_count += 1
        c1 = 1 - 0.9 ** self.step_count
        c2 = 1 - 0.999 ** self.step_count
        for p, g, (m, v) in zip(self.params, grads, self.state):
            m += 0.1 * (g.data - m)
            v += 0.001 * (g.data * g.data - v)
            p.data -= self.lr * (m / c1) / (np.sqrt(v / c2) + 1e-8)


def train_toy_denoiser(schedule: Schedule = None,
                       prior: DeltaPrior = DeltaPrior(),
                       iters: int = 2000, batch: int = 256, hidden: int = 64,
                       z_dim: int = 4, gamma: float = 0.05, lr: float = 1e-3,
                       seed: int = 0) -> ToyDenoiser:
    """Adversarially train a 1-D few-step denoiser on an atom prior."""
    schedule = make_schedule(2, "cosine") if schedule is None else schedule
    T = schedule.T
    rng = np.random.default_rng(seed)
    gen = _toy_init(rng, [1 + z_dim + T, hidden, hidden, 1])
    disc = _toy_init(rng, [2 + T, hidden, hidden, 1])
    g_params = [p for pair in gen for p in pair]
    d_params = [p for pair in disc for p in pair]
    opt_g, opt_d = _ToyAdam(gen, lr), _ToyAdam(disc, lr)
    locations = np.asarray(prior.locations)
    weights = np.asarray(prior.weights)

    for _ in range(iters):
        x0 = rng.choice(locations, p=weights, size=(batch, 1))
        t = rng.integers(1, T + 1, size=batch)
        x_prev, x_t = schedule.sample_real_pair(x0, t, rng)

        z = rng.standard_normal((batch, z_dim))
        with no_grad():
            x0_hat = _toy_mlp(gen, _toy_inputs(x_t, z, t, T))
        fake = schedule.posterior_given_noise(
            x0_hat.data, x_t, t, rng.standard_normal((batch, 1)))
        real_in = Tensor(x_prev, requires_grad=True)
        score_real = _toy_mlp(disc, _toy_inputs(real_in, x_t, t, T))
        (g,) = grad(score_real.sum(), [real_in], create_graph=True)
        r1 = g.square().sum() * (gamma / 2.0 / batch)
        score_fake = _toy_mlp(disc, _toy_inputs(fake, x_t, t, T))
        loss_d = ((-score_real).softplus().mean()
                  + score_fake.softplus().mean() + r1)
        opt_d.step(grad(loss_d, d_params))

        z = rng.standard_normal((batch, z_dim))
        x0_hat = _toy_mlp(gen, _toy_inputs(x_t, z, t, T))
        fake = schedule.posterior_given_noise(
            x0_hat, Tensor(x_t), t, rng.standard_normal((batch, 1)))
        score = _toy_mlp(disc, _toy_inputs(fake, x_t, t, T))
        opt_g.step(grad((-score).softplus().mean(), g_params))

    return ToyDenoiser(schedule=schedule, layers=gen, z_dim=z_dim)


def toy_denoiser_samples(model: ToyDenoiser, x_t_value: float, t: int,
                         count: int, seed: int = 0) -> np.ndarray:
    """Draw x_{t-1} samples from the trained denoiser at a fixed x_t."""
    rng = np.random.default_rng(seed)
    x_t = np.full((count, 1), float(x_t_value))
    z = rng.standard_normal((count, model.z_dim))
    x0_hat = model.predict(x_t, z, np.full(count, t))
    x_prev = model.schedule.posterior_given_noise(
        x0_hat, x_t, np.full(count, t), rng.standard_normal((count, 1)))
    return x_prev.ravel()


# ---------------------------------------------------------------------------
# full evaluation of a trained model
# ---------------------------------------------------------------------------

@dataclass
class MetricsReport:
    config: dict
    checkpoint_hash: str
    fid: float
    div: float
    mm: float
    acc: float
    penetration: float
    skate: float
    runtime_ms_per_frame: float
    per_step_s: list
    seeds: dict
    extractor_holdout_acc: float = 0.0
    fid_real_split: float = float("nan")

    def to_json(self) -> str:
        return json.dumps(self.__dict__, sort_keys=True, indent=2)

    @staticmethod
    def from_json(text: str) -> "MetricsReport":
        return MetricsReport(**json.loads(text))

    def write(self, path):
        with open(path, "w") as fh:
            fh.write(self.to_json() + "\n")


def checkpoint_hash(ckpt) -> str:
    digest = hashlib.sha256()
    for name, p in named_parameters(ckpt.gen):
        digest.update(name.encode())
        digest.update(np.ascontiguousarray(p.data).tobytes())
    for name in sorted(ckpt.ema):
        digest.update(name.encode())
        digest.update(np.ascontiguousarray(ckpt.ema[name]).tobytes())
    return digest.hexdigest()


def split_fid(extractor: FeatureExtractor, dataset) -> float:
    """Baseline: Frechet distance between two halves of the real data."""
    half_a, half_b = dataset.split_even_odd()
    return fid(extractor.features(half_a.frames),
               extractor.features(half_b.frames))


def evaluate(ckpt, dataset, extractor: FeatureExtractor = None,
             clips_per_class: int = 50, scale: float = 2.5, seed: int = 0,
             use_ema: bool = True, config: dict = None) -> MetricsReport:
    """Sample from the model and measure it against the real dataset."""
    if extractor is None:
        extractor = train_feature_extractor(dataset)
    num_classes = len(dataset.class_names)

    clips, raw_frames, labels, step_seconds = [], [], [], []
    for cls in range(num_classes):
        request = SampleRequest(label=cls, scale=scale,
                                count=clips_per_class, seed=seed + cls,
                                use_ema=use_ema)
        cls_clips, cls_raw, timing = sample(ckpt, request)
        clips.extend(cls_clips)
        raw_frames.append(cls_raw)
        labels.extend([cls] * clips_per_class)
        step_seconds.extend(timing["per_step_s"])
    labels = np.asarray(labels)

    # feature metrics read the sampled frame vectors as-is, mirroring how
    # the real frames enter the extractor; deriving velocities again from
    # decoded joint positions would multiply any rotation error by the
    # frame rate and swamp the distance.  The decoded clips still feed the
    # physical checks, which do look at actual joint trajectories.
    gen_frames = np.concatenate(raw_frames)
    feats_gen = extractor.features(gen_frames)
    feats_real = extractor.features(dataset.frames)
    rng = np.random.default_rng(seed)
    physical = physical_metrics(clips, dataset.skeleton)
    total_s = float(sum(step_seconds))

    return MetricsReport(
        config=dict(config or {}),
        checkpoint_hash=checkpoint_hash(ckpt),
        fid=fid(feats_gen, feats_real),
        div=diversity(feats_gen, rng=rng),
        mm=multimodality(feats_gen, labels, rng=rng),
        acc=accuracy(extractor, gen_frames, labels),
        penetration=physical["penetration"],
        skate=physical["skate"],
        runtime_ms_per_frame=1000.0 * total_s / (len(clips) * dataset.N),
        per_step_s=[float(s) for s in step_seconds],
        seeds={"sample": seed},
        extractor_holdout_acc=extractor.holdout_accuracy,
        fid_real_split=split_fid(extractor, dataset),
    )


def _as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))
