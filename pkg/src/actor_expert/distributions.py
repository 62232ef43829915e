"""Gaussian mixture policy head over a box-bounded action space.

A policy net emits k * (1 + 2d) raw outputs per state, laid out as
[k coefficient logits | k*d mean pre-activations | k*d stdev pre-activations].
Coefficients go through softmax, means through tanh scaled to the action box,
and stdevs through exp(tanh(.)), which pins them inside [e^-1, e^1].

The *_core functions broadcast over arbitrary leading batch axes; the public
single-state API wraps them in MixtureParams. Gradients are closed-form with
respect to the raw head outputs so they push straight into nn.net_backward.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nn import ContractError, NumericError

__all__ = [
    "MixtureParams",
    "SampleBatch",
    "head_width",
    "to_mixture",
    "sample",
    "log_density",
    "log_density_grad",
    "predominant_mode",
]

_LOG_2PI = float(np.log(2.0 * np.pi))


def head_width(k: int, d: int) -> int:
    """Raw outputs required for k components over d action dimensions."""
    return k * (1 + 2 * d)


def split_raw(raw: np.ndarray, k: int, d: int):
    """Slice raw heads (..., k*(1+2d)) into logits, mean and stdev pre-activations."""
    raw = np.asarray(raw, dtype=np.float64)
    if raw.shape[-1] != head_width(k, d):
        raise ContractError(
            f"raw head width {raw.shape[-1]} != k*(1+2d) = {head_width(k, d)}"
        )
    logits = raw[..., :k]
    m_pre = raw[..., k : k + k * d].reshape(*raw.shape[:-1], k, d)
    s_pre = raw[..., k + k * d :].reshape(*raw.shape[:-1], k, d)
    return logits, m_pre, s_pre


def raw_to_params(raw: np.ndarray, k: int, low: np.ndarray, high: np.ndarray):
    """Map raw heads to (coeff, mean, std); broadcasts over leading axes."""
    d = low.shape[0]
    logits, m_pre, s_pre = split_raw(raw, k, d)
    shifted = logits - logits.max(axis=-1, keepdims=True)
    expl = np.exp(shifted)
    coeff = expl / expl.sum(axis=-1, keepdims=True)
    center = 0.5 * (low + high)
    half = 0.5 * (high - low)
    mean = center + half * np.tanh(m_pre)
    std = np.exp(np.tanh(s_pre))
    return coeff, mean, std


def log_density_core(coeff, mean, std, action):
    """Mixture log-density; densities per component combined by logsumexp.

    coeff (..., k), mean/std (..., k, d), action (..., d) -> (...,)
    """
    a = np.asarray(action, dtype=np.float64)[..., None, :]
    z = (a - mean) / std
    comp = (
        -0.5 * (z * z).sum(axis=-1)
        - np.log(std).sum(axis=-1)
        - 0.5 * mean.shape[-1] * _LOG_2PI
    )
    with np.errstate(divide="ignore"):  # coeff 0 -> weight -inf, dropped by logsumexp
        weighted = comp + np.log(coeff)
    top = weighted.max(axis=-1, keepdims=True)
    return (top + np.log(np.exp(weighted - top).sum(axis=-1, keepdims=True)))[..., 0]


def log_density_grad_core(raw, k, low, high, action):
    """Gradient of log_density_core w.r.t. the raw head vector; broadcasts.

    Chain rule through softmax (logits), tanh box scaling (means) and
    exp(tanh) (stdevs); responsibilities weight each component's terms.
    """
    d = low.shape[0]
    logits, m_pre, s_pre = split_raw(raw, k, d)
    coeff, mean, std = raw_to_params(raw, k, low, high)
    a = np.asarray(action, dtype=np.float64)[..., None, :]
    z = (a - mean) / std
    comp = (
        -0.5 * (z * z).sum(axis=-1)
        - np.log(std).sum(axis=-1)
        - 0.5 * d * _LOG_2PI
    )
    with np.errstate(divide="ignore"):
        weighted = comp + np.log(coeff)
    top = weighted.max(axis=-1, keepdims=True)
    logpi = (top + np.log(np.exp(weighted - top).sum(axis=-1, keepdims=True)))
    resp = np.exp(weighted - logpi)  # (..., k)

    g_logits = resp - coeff
    half = 0.5 * (high - low)
    tm = np.tanh(m_pre)
    g_mean = resp[..., None] * z / std * (half * (1.0 - tm * tm))
    ts = np.tanh(s_pre)
    g_std = resp[..., None] * (z * z - 1.0) * (1.0 - ts * ts)

    lead = g_mean.shape[:-2]  # broadcast of raw's and action's leading axes
    return np.concatenate(
        [
            np.broadcast_to(g_logits, lead + (k,)),
            g_mean.reshape(lead + (k * d,)),
            g_std.reshape(lead + (k * d,)),
        ],
        axis=-1,
    )


def sample_core(coeff, mean, std, n, rng, low, high):
    """Draw n actions per leading-batch entry. Returns (clipped, raws, components).

    coeff (B, k), mean/std (B, k, d) -> arrays shaped (B, n, d) / (B, n).
    Component choice inverts the coefficient CDF; draws are clipped to the box
    for execution while the unclipped values are kept for likelihoods.
    """
    b, k = coeff.shape
    d = mean.shape[-1]
    cdf = np.cumsum(coeff, axis=-1)
    u = rng.random((b, n))
    comps = np.minimum((u[..., None] > cdf[:, None, :]).sum(axis=-1), k - 1)
    idx = comps[..., None, None]
    mu = np.take_along_axis(mean[:, None].repeat(n, axis=1), idx, axis=2)[..., 0, :]
    sd = np.take_along_axis(std[:, None].repeat(n, axis=1), idx, axis=2)[..., 0, :]
    raws = mu + sd * rng.standard_normal((b, n, d))
    clipped = np.clip(raws, low, high)
    return clipped, raws, comps


@dataclass(frozen=True)
class MixtureParams:
    """Mixture parameters for one state, plus the raw heads that produced them."""

    coeff: np.ndarray  # (k,)
    mean: np.ndarray  # (k, d)
    std: np.ndarray  # (k, d)
    raw: np.ndarray  # (k * (1 + 2d),)
    low: np.ndarray  # (d,)
    high: np.ndarray  # (d,)

    @property
    def k(self) -> int:
        return self.coeff.shape[0]

    @property
    def d(self) -> int:
        return self.mean.shape[1]

    def validate(self) -> None:
        if not np.isfinite(self.coeff).all() or abs(self.coeff.sum() - 1.0) > 1e-12:
            raise NumericError("mixture coefficients must sum to 1")
        if np.any(self.coeff <= 0.0):
            raise NumericError("mixture coefficients must be strictly positive")
        if np.any(self.mean < self.low) or np.any(self.mean > self.high):
            raise NumericError("mixture means left the action box")
        if np.any(self.std < np.exp(-1.0) - 1e-12) or np.any(self.std > np.e + 1e-12):
            raise NumericError("mixture stdevs left [e^-1, e^1]")


@dataclass(frozen=True)
class SampleBatch:
    """Actions drawn from one state's mixture.

    actions are box-clipped (what the environment executes); raw_actions are
    the unclipped draws (where likelihoods are evaluated); log_densities are
    taken at the raw draws.
    """

    actions: np.ndarray  # (n, d)
    raw_actions: np.ndarray  # (n, d)
    components: np.ndarray  # (n,)
    log_densities: np.ndarray  # (n,)


def to_mixture(raw, k: int, box) -> MixtureParams:
    """Interpret a raw head vector as mixture parameters for one state."""
    raw = np.asarray(raw, dtype=np.float64)
    if raw.ndim != 1:
        raise ContractError("to_mixture takes a single raw head vector")
    low = np.asarray(box[0], dtype=np.float64)
    high = np.asarray(box[1], dtype=np.float64)
    if low.shape != high.shape or low.ndim != 1 or np.any(low >= high):
        raise ContractError("action box must satisfy low < high per dimension")
    coeff, mean, std = raw_to_params(raw, k, low, high)
    mix = MixtureParams(coeff=coeff, mean=mean, std=std, raw=raw, low=low, high=high)
    mix.validate()
    return mix


def sample(mix: MixtureParams, n: int, rng) -> SampleBatch:
    """Draw n actions from the mixture."""
    if n < 1:
        raise ContractError(f"need n >= 1 samples, got {n}")
    clipped, raws, comps = sample_core(
        mix.coeff[None], mix.mean[None], mix.std[None], n, rng, mix.low, mix.high
    )
    logp = log_density_core(mix.coeff[None, None], mix.mean[None, None], mix.std[None, None], raws)
    return SampleBatch(
        actions=clipped[0],
        raw_actions=raws[0],
        components=comps[0],
        log_densities=logp[0],
    )


def log_density(mix: MixtureParams, action) -> float:
    """Mixture log-density at an action (not necessarily inside the box)."""
    action = np.asarray(action, dtype=np.float64)
    if action.shape != (mix.d,):
        raise ContractError(f"action shape {action.shape} != ({mix.d},)")
    return float(log_density_core(mix.coeff, mix.mean, mix.std, action))


def log_density_grad(mix: MixtureParams, action) -> np.ndarray:
    """Exact gradient of log_density w.r.t. the raw head vector."""
    action = np.asarray(action, dtype=np.float64)
    if action.shape != (mix.d,):
        raise ContractError(f"action shape {action.shape} != ({mix.d},)")
    return log_density_grad_core(mix.raw, mix.k, mix.low, mix.high, action)


def predominant_mode(mix: MixtureParams) -> np.ndarray:
    """Mean of the highest-coefficient component; ties go to the lowest index."""
    return mix.mean[int(np.argmax(mix.coeff))].copy()
