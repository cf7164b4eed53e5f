"""Conditional generator and discriminator.

Generator: a pre-norm transformer encoder over the token sequence
``[t-token, z-token, condition-token, N frame tokens]``.  The three prefix
tokens are discarded at the output and the frame tokens are projected back
to frame vectors (the predicted clean motion).  The condition table has a
trailing learned null row used when the condition is dropped, which is what
classifier-free guidance interpolates against at sampling time.

Discriminator: an MLP over ``concat(flat x_{t-1}, flat x_t, sinusoidal
t-embedding, one-hot condition)`` with selu activations and group
normalization after the second and fourth layers; 7 linear layers total,
scalar output (positive means "judged real").

All forwards are deterministic given parameters, inputs, and dropout masks;
dropout masks are explicit arguments so training owns all randomness.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields

import numpy as np

from .tensor import (Tensor, attention, concat, dropout_apply, group_norm,
                     layer_norm)

# raw generator invocations; sampling tests assert on this
GENERATOR_CALLS = [0]


def reset_generator_calls():
    GENERATOR_CALLS[0] = 0


@dataclass(frozen=True)
class ModelConfig:
    N: int = 60
    frame_dim: int = 85
    num_classes: int = 6
    latent: int = 128        # token width H
    layers: int = 4
    heads: int = 4
    dropout: float = 0.1
    z_dim: int = 64
    t_embed_dim: int = 128
    disc_width: int = 256
    disc_layers: int = 7
    disc_groups: int = 8

    def __post_init__(self):
        if self.latent % self.heads:
            raise ValueError("latent width must divide evenly into heads")
        if self.t_embed_dim % 2:
            raise ValueError("t embedding dimension must be even")
        if self.disc_width % self.disc_groups:
            raise ValueError("disc width must divide into groups")

    @property
    def tokens(self) -> int:
        return self.N + 3

    @property
    def disc_input_dim(self) -> int:
        return 2 * self.N * self.frame_dim + self.t_embed_dim + self.num_classes + 1

    def to_config(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @staticmethod
    def from_config(cfg: dict) -> "ModelConfig":
        return ModelConfig(**cfg)


# ---------------------------------------------------------------------------
# parameter containers
# ---------------------------------------------------------------------------

@dataclass
class LayerParams:
    ln1_g: Tensor; ln1_b: Tensor
    wq: Tensor; bq: Tensor
    wk: Tensor; bk: Tensor
    wv: Tensor; bv: Tensor
    wo: Tensor; bo: Tensor
    ln2_g: Tensor; ln2_b: Tensor
    w1: Tensor; b1: Tensor
    w2: Tensor; b2: Tensor


@dataclass
class GeneratorParams:
    config: ModelConfig
    cond_table: Tensor
    t_w: Tensor; t_b: Tensor
    z_mlp: list                  # [(w, b)] * 5
    in_w: Tensor; in_b: Tensor
    blocks: list                 # [LayerParams] * L
    lnf_g: Tensor; lnf_b: Tensor
    out_w: Tensor; out_b: Tensor


@dataclass
class DiscriminatorParams:
    config: ModelConfig
    linears: list                # [(w, b)] * disc_layers
    gn: dict                     # layer index -> (gamma, beta)


def named_parameters(params) -> list:
    """Stable (name, Tensor) list over any parameter container."""
    out = []

    def walk(obj, prefix):
        if isinstance(obj, Tensor):
            out.append((prefix, obj))
        elif isinstance(obj, (list, tuple)):
            for i, item in enumerate(obj):
                walk(item, f"{prefix}.{i}")
        elif isinstance(obj, dict):
            for k in sorted(obj):
                walk(obj[k], f"{prefix}.{k}")
        elif hasattr(obj, "__dataclass_fields__"):
            for f in fields(obj):
                if f.name != "config":
                    walk(getattr(obj, f.name), f"{prefix}.{f.name}" if prefix else f.name)

    walk(params, "")
    return out


def parameter_count(params) -> int:
    return sum(t.size for _, t in named_parameters(params))


# ---------------------------------------------------------------------------
# initialization
# ---------------------------------------------------------------------------

def _xavier(rng, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return Tensor(rng.uniform(-limit, limit, size=(fan_in, fan_out)),
                  requires_grad=True)


def _zeros(*shape):
    return Tensor(np.zeros(shape), requires_grad=True)


def _ones(*shape):
    return Tensor(np.ones(shape), requires_grad=True)


def init_generator(config: ModelConfig, rng) -> GeneratorParams:
    H = config.latent
    z_dims = [config.z_dim] + [H] * 5
    blocks = []
    for _ in range(config.layers):
        blocks.append(LayerParams(
            ln1_g=_ones(H), ln1_b=_zeros(H),
            wq=_xavier(rng, H, H), bq=_zeros(H),
            wk=_xavier(rng, H, H), bk=_zeros(H),
            wv=_xavier(rng, H, H), bv=_zeros(H),
            wo=_xavier(rng, H, H), bo=_zeros(H),
            ln2_g=_ones(H), ln2_b=_zeros(H),
            w1=_xavier(rng, H, H), b1=_zeros(H),
            w2=_xavier(rng, H, H), b2=_zeros(H),
        ))
    return GeneratorParams(
        config=config,
        # unit-scale rows: class tokens must be mutually distinguishable
        # from the start, or attention has nothing to route for many steps
        cond_table=Tensor(rng.normal(0.0, 1.0, size=(config.num_classes + 1, H)),
                          requires_grad=True),
        t_w=_xavier(rng, config.t_embed_dim, H), t_b=_zeros(H),
        z_mlp=[(_xavier(rng, z_dims[i], z_dims[i + 1]), _zeros(z_dims[i + 1]))
               for i in range(5)],
        in_w=_xavier(rng, config.frame_dim, H), in_b=_zeros(H),
        blocks=blocks,
        lnf_g=_ones(H), lnf_b=_zeros(H),
        out_w=_xavier(rng, H, config.frame_dim), out_b=_zeros(config.frame_dim),
    )


def init_discriminator(config: ModelConfig, rng) -> DiscriminatorParams:
    W = config.disc_width
    dims = [config.disc_input_dim] + [W] * (config.disc_layers - 1) + [1]
    linears = [(_xavier(rng, dims[i], dims[i + 1]), _zeros(dims[i + 1]))
               for i in range(config.disc_layers)]
    return DiscriminatorParams(
        config=config, linears=linears,
        gn={2: (_ones(W), _zeros(W)), 4: (_ones(W), _zeros(W))})


# ---------------------------------------------------------------------------
# building blocks
# ---------------------------------------------------------------------------

def sinusoidal_embed(t, dim: int) -> np.ndarray:
    """Classic sin/cos embedding of scalar step(s); sin half then cos half."""
    if dim % 2:
        raise ValueError("embedding dimension must be even")
    t = np.asarray(t, dtype=np.float64)
    half = dim // 2
    freqs = 10000.0 ** (-np.arange(half) / half)
    angles = t[..., None] * freqs
    return np.concatenate([np.sin(angles), np.cos(angles)], axis=-1)


def one_hot(labels, depth: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    if (labels < 0).any() or (labels >= depth).any():
        raise ValueError(f"labels out of range 0..{depth - 1}")
    out = np.zeros(labels.shape + (depth,))
    np.put_along_axis(out, labels[..., None], 1.0, axis=-1)
    return out


def condition_indices(labels, num_classes: int, uncond=None) -> np.ndarray:
    """Table rows for a batch: class label, or the null row when dropped."""
    labels = np.asarray(labels, dtype=np.int64)
    if (labels < 0).any() or (labels >= num_classes).any():
        raise ValueError(f"labels out of range 0..{num_classes - 1}")
    if uncond is None:
        return labels
    return np.where(np.asarray(uncond, dtype=bool), num_classes, labels)


def _linear(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """x @ w + b with leading dims folded into one matmul."""
    lead = x.shape[:-1]
    flat = x.reshape((-1, x.shape[-1])) if len(lead) != 1 else x
    out = flat @ w + b
    return out.reshape(lead + (w.shape[1],)) if len(lead) != 1 else out


def _positional_encoding(tokens: int, dim: int) -> np.ndarray:
    return sinusoidal_embed(np.arange(tokens), dim)


def make_dropout_masks(config: ModelConfig, batch: int, rng) -> list:
    """One 0/1 keep-mask per dropout site (two per transformer block)."""
    keep = 1.0 - config.dropout
    shape = (batch, config.tokens, config.latent)
    return [(rng.uniform(size=shape) < keep).astype(np.float64)
            for _ in range(2 * config.layers)]


# ---------------------------------------------------------------------------
# forward passes
# ---------------------------------------------------------------------------

def generator_forward(params: GeneratorParams, x_t: Tensor, z: Tensor,
                      labels, t, uncond=None, dropout_masks=None) -> Tensor:
    """Predict clean motion: (B, N, D_f) -> (B, N, D_f).

    ``t`` is a scalar step or a per-item integer array; ``uncond`` flags
    items whose condition is dropped to the null row.
    """
    GENERATOR_CALLS[0] += 1
    cfg = params.config
    B = x_t.shape[0]
    keep = 1.0 - cfg.dropout

    t_emb = sinusoidal_embed(np.broadcast_to(np.asarray(t), (B,)), cfg.t_embed_dim)
    t_tok = _linear(Tensor(t_emb), params.t_w, params.t_b)

    h = z
    for i, (w, b) in enumerate(params.z_mlp):
        h = _linear(h, w, b)
        if i < len(params.z_mlp) - 1:
            h = h.selu()
    z_tok = h

    idx = condition_indices(labels, cfg.num_classes, uncond)
    c_tok = params.cond_table.take_rows(idx)

    frame_tok = _linear(x_t, params.in_w, params.in_b)
    x = concat([t_tok.reshape(B, 1, cfg.latent),
                z_tok.reshape(B, 1, cfg.latent),
                c_tok.reshape(B, 1, cfg.latent),
                frame_tok], axis=1)
    x = x + Tensor(_positional_encoding(cfg.tokens, cfg.latent))

    d = cfg.latent // cfg.heads
    for li, blk in enumerate(params.blocks):
        h = layer_norm(x, blk.ln1_g, blk.ln1_b)
        q, k, v = (_linear(h, w, b).reshape(B, cfg.tokens, cfg.heads, d)
                   .transpose(0, 2, 1, 3)
                   for w, b in ((blk.wq, blk.bq), (blk.wk, blk.bk),
                                (blk.wv, blk.bv)))
        att = attention(q, k, v).transpose(0, 2, 1, 3).reshape(B, cfg.tokens,
                                                               cfg.latent)
        att = _linear(att, blk.wo, blk.bo)
        if dropout_masks is not None:
            att = dropout_apply(att, dropout_masks[2 * li], keep)
        x = x + att

        h = layer_norm(x, blk.ln2_g, blk.ln2_b)
        ffn = _linear(_linear(h, blk.w1, blk.b1).selu(), blk.w2, blk.b2)
        if dropout_masks is not None:
            ffn = dropout_apply(ffn, dropout_masks[2 * li + 1], keep)
        x = x + ffn

    x = layer_norm(x, params.lnf_g, params.lnf_b)
    return _linear(x[:, 3:, :], params.out_w, params.out_b)


def discriminator_forward(params: DiscriminatorParams, x_prev: Tensor,
                          x_t: Tensor, labels, t, uncond=None) -> Tensor:
    """Score a denoising step: returns (B,) raw scores."""
    cfg = params.config
    B = x_prev.shape[0]
    flat_dim = cfg.N * cfg.frame_dim

    t_emb = sinusoidal_embed(np.broadcast_to(np.asarray(t), (B,)), cfg.t_embed_dim)
    idx = condition_indices(labels, cfg.num_classes, uncond)
    c_emb = one_hot(idx, cfg.num_classes + 1)
    h = concat([x_prev.reshape(B, flat_dim), x_t.reshape(B, flat_dim),
                Tensor(t_emb), Tensor(c_emb)], axis=1)

    for i, (w, b) in enumerate(params.linears, start=1):
        h = _linear(h, w, b)
        if i < cfg.disc_layers:
            h = h.selu()
            if i in params.gn:
                gamma, beta = params.gn[i]
                h = group_norm(h, cfg.disc_groups, gamma, beta)
    return h.reshape(B)
