"""Diffusion-time bookkeeping for small step counts.

A :class:`Schedule` holds the noise schedule tables for a T-step diffusion
(T between 1 and 50), the forward (noising) kernels, and the posterior
sampling kernel used by the few-step sampler.

Index conventions
-----------------
Tables are 1-indexed by diffusion step: ``beta[1..T]``, ``alphabar[0..T]``
with ``alphabar[0] = 1`` (slot 0 of ``beta``/``alpha`` is an unused
placeholder so indices line up).  The sampler's 0-based loop index ``i``
(counting down from T-1 to 0) corresponds to table index ``i + 1``; noise
is disabled exactly at loop index 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor

KINDS = ("cosine", "linear")

# variance hits exactly zero at the final step (alphabar[0] = 1); clamp
# before the log -- harmless because noise is off there anyway
_MIN_VARIANCE = 1e-20


@dataclass(frozen=True)
class Schedule:
    """Immutable noise-schedule tables; see module docstring for indexing."""

    kind: str
    beta: np.ndarray
    alpha: np.ndarray = field(init=False)
    alphabar: np.ndarray = field(init=False)
    posterior_coef1: np.ndarray = field(init=False)
    posterior_coef2: np.ndarray = field(init=False)
    posterior_log_variance: np.ndarray = field(init=False)

    def __post_init__(self):
        # constructor takes beta for steps 1..T; store padded so that
        # beta[t] is the step-t entry
        beta = np.concatenate([[0.0], np.asarray(self.beta, dtype=np.float64)])
        object.__setattr__(self, "beta", beta)

        alpha = 1.0 - beta
        alphabar = np.cumprod(alpha)
        alphabar[0] = 1.0
        # prev[t] = alphabar[t-1]; slot 0 is a placeholder
        prev = np.concatenate([[1.0], alphabar[:-1]])

        one_minus = 1.0 - alphabar
        with np.errstate(divide="ignore", invalid="ignore"):
            coef1 = np.sqrt(prev) * beta / one_minus
            coef2 = np.sqrt(alpha) * (1.0 - prev) / one_minus
            variance = beta * (1.0 - prev) / one_minus
        coef1[0] = coef2[0] = variance[0] = 0.0  # unused placeholder slot

        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "alphabar", alphabar)
        object.__setattr__(self, "posterior_coef1", coef1)
        object.__setattr__(self, "posterior_coef2", coef2)
        object.__setattr__(self, "posterior_log_variance",
                           np.log(np.maximum(variance, _MIN_VARIANCE)))

    @property
    def T(self) -> int:
        return len(self.beta) - 1

    # -- forward (noising) kernels -----------------------------------------

    def q_sample(self, x0, t, eps):
        """Marginal noising: sqrt(abar_t) x0 + sqrt(1 - abar_t) eps.

        ``t`` may be an int in 0..T (t=0 returns x0 exactly) or an int array
        that broadcasts against the leading axes of ``x0``.
        """
        a = self.alphabar[t]
        c0, ce = np.sqrt(a), np.sqrt(1.0 - a)
        if np.ndim(t):
            extra = (1,) * (np.ndim(x0) - np.ndim(t))
            c0 = c0.reshape(c0.shape + extra)
            ce = ce.reshape(ce.shape + extra)
        if isinstance(x0, Tensor) or isinstance(eps, Tensor):
            return _as_tensor(x0) * c0 + _as_tensor(eps) * ce
        return c0 * x0 + ce * eps

    def sample_real_pair(self, x0, t, rng):
        """Draw (x_{t-1}, x_t): the marginal at t-1, then one forward step.

        ``t`` is a table index in 1..T, scalar or per-item array.  Two noise
        draws are consumed from ``rng``, in that order.
        """
        x0 = np.asarray(x0, dtype=np.float64)
        x_prev = self.q_sample(x0, np.asarray(t) - 1 if np.ndim(t) else t - 1,
                               rng.standard_normal(x0.shape))
        a, b = self.alpha[t], self.beta[t]
        if np.ndim(t):
            extra = (1,) * (x0.ndim - np.ndim(t))
            a = a.reshape(a.shape + extra)
            b = b.reshape(b.shape + extra)
        x_t = np.sqrt(a) * x_prev + np.sqrt(b) * rng.standard_normal(x0.shape)
        return x_prev, x_t

    # -- reverse (denoising) kernel ----------------------------------------

    def posterior_coeffs(self, t: int):
        """(coef1, coef2, log_variance) of q(x_{t-1} | x_t, x0) at table index t."""
        if not 1 <= t <= self.T:
            raise ValueError(f"step index {t} outside 1..{self.T}")
        return (float(self.posterior_coef1[t]),
                float(self.posterior_coef2[t]),
                float(self.posterior_log_variance[t]))

    def sample_posterior(self, x0, xt, t: int, rng):
        """One reverse step at 0-based loop index ``t`` (table index t+1).

        Returns coef1 x0 + coef2 xt plus posterior noise; the noise term is
        dropped at the final step (t == 0).
        """
        c1, c2, logvar = self.posterior_coeffs(t + 1)
        mean = c1 * np.asarray(x0) + c2 * np.asarray(xt)
        if t == 0:
            return mean
        return mean + np.exp(0.5 * logvar) * rng.standard_normal(mean.shape)

    def posterior_given_noise(self, x0, xt, t, eps):
        """Posterior draw coef1 x0 + coef2 xt + sigma eps with explicit noise.

        Training-path variant of :meth:`sample_posterior`: ``t`` is a table
        index in 1..T, scalar or per-item array; ``x0`` may be a
        :class:`~motiongan.tensor.Tensor` so gradients flow into the
        prediction.  At t=1 the posterior variance is exactly zero, so the
        noise term vanishes up to the variance clamp (sigma = 1e-10).
        """
        t = np.asarray(t)
        if np.any(t < 1) or np.any(t > self.T):
            raise ValueError(f"step index outside 1..{self.T}")
        c1 = self.posterior_coef1[t]
        c2 = self.posterior_coef2[t]
        sigma = np.exp(0.5 * self.posterior_log_variance[t])
        if t.ndim:
            extra = (1,) * (np.ndim(xt) - t.ndim)
            c1 = c1.reshape(c1.shape + extra)
            c2 = c2.reshape(c2.shape + extra)
            sigma = sigma.reshape(sigma.shape + extra)
        if isinstance(x0, Tensor) or isinstance(xt, Tensor) or isinstance(eps, Tensor):
            return (_as_tensor(x0) * c1 + _as_tensor(xt) * c2
                    + _as_tensor(eps) * sigma)
        return c1 * x0 + c2 * xt + sigma * eps

    # -- serialization ------------------------------------------------------

    def to_config(self) -> dict:
        return {"T": self.T, "kind": self.kind,
                "beta": [float(b) for b in self.beta[1:]]}

    @staticmethod
    def from_config(cfg: dict) -> "Schedule":
        s = Schedule(kind=cfg["kind"], beta=np.asarray(cfg["beta"]))
        if s.T != cfg["T"]:
            raise ValueError("schedule config length mismatch")
        return s


def _as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))


def beta_table(T: int, kind: str = "cosine") -> np.ndarray:
    """Per-step beta[1..T] for the given schedule kind, any T >= 1.

    cosine: squared-cosine alphabar curve (offset 0.008), normalized so
    alphabar[0] = 1; per-step beta clipped to 0.999 and alphabar rebuilt
    from the clipped betas so the product identity stays exact.

    linear: variance-preserving ramp integrated at step midpoints,
    beta_t = min(0.999, (0.05 + 9.95 (t - 1/2)/T) / T), which drives
    alphabar[T] below 0.01 for every T up to 50.
    """
    if T < 1:
        raise ValueError("need at least one step")
    if kind == "cosine":
        s = 0.008
        t = np.arange(T + 1)
        f = np.cos(((t / T + s) / (1 + s)) * (np.pi / 2)) ** 2
        abar = f / f[0]
        return np.minimum(1.0 - abar[1:] / abar[:-1], 0.999)
    if kind == "linear":
        mid = (np.arange(1, T + 1) - 0.5) / T
        return np.minimum((0.05 + 9.95 * mid) / T, 0.999)
    raise ValueError(f"unknown schedule kind {kind!r}; expected one of {KINDS}")


def make_schedule(T: int, kind: str = "cosine") -> Schedule:
    """Build a sampling-range schedule (1 <= T <= 50) of the given kind."""
    if not 1 <= T <= 50:
        raise ValueError(f"step count {T} outside 1..50")
    return Schedule(kind=kind, beta=beta_table(T, kind))
