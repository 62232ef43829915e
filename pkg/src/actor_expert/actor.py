"""Conditional cross-entropy actor.

Each update samples N actions per state from the slow policy, keeps the top
ceil(rho * N) by Q-value, and ascends the fast policy's mean elite
log-likelihood, scaled by 1/N. Fast weights are then clamped into a
[-w_max, w_max] box; slow weights trail the fast ones through an exponential
blend. The update direction itself is exposed separately (ccem_direction) so
the verification suite can compare raw stochastic directions against the
idealized update field without learning-rate or projection effects.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace

import numpy as np

from . import distributions as dist
from . import nn
from .nn import ContractError

__all__ = [
    "PolicyNet",
    "ActorState",
    "Schedule",
    "ScheduleValues",
    "policy_init",
    "policy_raw",
    "policy_mixture",
    "actor_init",
    "ccem_direction",
    "ccem_update",
    "slow_update",
    "project",
    "schedule_at",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PolicyNet:
    """Mixture policy: optional trunk (obs -> features, relu) plus raw-head net."""

    trunk: nn.DenseNet | None
    head: nn.DenseNet
    k: int
    low: np.ndarray
    high: np.ndarray

    def arrays(self) -> list:
        head = self.head.arrays()
        return head if self.trunk is None else self.trunk.arrays() + head

    def with_arrays(self, arrays) -> "PolicyNet":
        if self.trunk is None:
            return replace(self, head=self.head.with_arrays(arrays))
        n = len(self.trunk.arrays())
        return replace(
            self,
            trunk=self.trunk.with_arrays(arrays[:n]),
            head=self.head.with_arrays(arrays[n:]),
        )


def policy_init(
    obs_dim: int,
    box,
    k: int = 2,
    width: int = 200,
    rng=None,
    trunk: nn.DenseNet | None = None,
) -> PolicyNet:
    """Fresh policy net: trunk obs->width plus head width->width->k*(1+2d).

    Pass an existing trunk to share it with a Q net; pass width=0 for a
    trunkless head mapping observations straight to raw outputs.
    """
    if k < 1:
        raise ContractError(f"need at least one mixture component, got k={k}")
    low = np.asarray(box[0], dtype=np.float64)
    high = np.asarray(box[1], dtype=np.float64)
    d = low.shape[0]
    if rng is None:
        rng = np.random.default_rng()
    out = dist.head_width(k, d)
    if width == 0:
        head = nn.net_init((obs_dim, out), ("linear",), rng=rng)
        return PolicyNet(trunk=None, head=head, k=k, low=low, high=high)
    if trunk is None:
        trunk = nn.net_init((obs_dim, width), ("relu",), rng=rng)
    head = nn.net_init((trunk.out_dim, width, out), ("relu", "linear"), rng=rng)
    return PolicyNet(trunk=trunk, head=head, k=k, low=low, high=high)


def policy_raw(pnet: PolicyNet, obs, keep_traces: bool = False):
    """Raw head outputs for a batch of observations, shape (B, k*(1+2d))."""
    obs = np.atleast_2d(np.asarray(obs, dtype=np.float64))
    if pnet.trunk is None:
        raw, head_trace = nn.net_forward(pnet.head, obs)
        traces = (None, head_trace)
    else:
        phi, trunk_trace = nn.net_forward(pnet.trunk, obs)
        raw, head_trace = nn.net_forward(pnet.head, phi)
        traces = (trunk_trace, head_trace)
    return (raw, traces) if keep_traces else raw


def policy_backward(pnet: PolicyNet, traces, gout) -> list:
    """Parameter gradients of <gout, raw> through head and trunk."""
    trunk_trace, head_trace = traces
    head_grads, gin = nn.net_backward(pnet.head, head_trace, gout)
    if pnet.trunk is None:
        return head_grads.arrays()
    trunk_grads, _ = nn.net_backward(pnet.trunk, trunk_trace, gin)
    return trunk_grads.arrays() + head_grads.arrays()


def policy_mixture(pnet: PolicyNet, obs) -> dist.MixtureParams:
    """Mixture parameters at one observation."""
    raw = policy_raw(pnet, np.asarray(obs, dtype=np.float64)[None, :])[0]
    return dist.to_mixture(raw, pnet.k, (pnet.low, pnet.high))


@dataclass(frozen=True)
class ActorState:
    """Fast (updated) and slow (sampling) policy weights plus the weight box."""

    fast: PolicyNet
    slow: PolicyNet
    w_max: float
    t: int  # completed ccem updates


def actor_init(pnet: PolicyNet, w_max: float = 1e6) -> ActorState:
    if w_max <= 0.0:
        raise ContractError(f"w_max must be positive, got {w_max}")
    return ActorState(fast=pnet, slow=pnet, w_max=w_max, t=0)


def _elite_indices(values: np.ndarray, rho: float) -> np.ndarray:
    """Row-wise top-h indices, stable on ties; values (B, N) -> (B, h)."""
    n = values.shape[1]
    h = math.ceil(rho * n)
    return np.argsort(-values, axis=1, kind="stable")[:, :h]


def ccem_direction(
    actor: ActorState,
    obs,
    q_value_fn,
    n_samples: int,
    rho: float,
    rng,
    q_grad_fn=None,
    refine_steps: int = 0,
    refine_lr: float | None = None,
):
    """Batch-mean elite log-likelihood gradient for the fast policy.

    q_value_fn(obs_batch, actions (B, N, d)) -> (B, N). Actions are sampled
    from the slow policy; Q is evaluated at box-clipped actions while
    likelihood gradients use the raw draws. With refine_steps > 0 each
    candidate first hill-climbs q_grad_fn (clipped to the box each step) and
    the refined actions are used for both selection and likelihood.

    Returns (direction_arrays, info) where direction_arrays aligns with
    actor.fast.arrays() and info carries the per-state thresholds.
    """
    if n_samples < 1:
        raise ContractError(f"need n_samples >= 1, got {n_samples}")
    if not 0.0 < rho <= 1.0:
        raise ContractError(f"rho must lie in (0, 1], got {rho}")
    obs = np.atleast_2d(np.asarray(obs, dtype=np.float64))
    b = obs.shape[0]
    pnet = actor.fast
    low, high = pnet.low, pnet.high

    raw_slow = policy_raw(actor.slow, obs)
    coeff, mean, std = dist.raw_to_params(raw_slow, pnet.k, low, high)
    clipped, raws, _ = dist.sample_core(coeff, mean, std, n_samples, rng, low, high)

    if refine_steps > 0:
        if q_grad_fn is None:
            raise ContractError("refinement requires q_grad_fn")
        if refine_lr is None:
            refine_lr = 0.01 * float(np.max(high - low))
        current = clipped
        start = current.copy()
        for _ in range(refine_steps):
            stepped = np.clip(current + refine_lr * q_grad_fn(obs, current), low, high)
            bad = ~np.isfinite(stepped).all(axis=-1)
            if bad.any():
                stepped[bad] = start[bad]
            current = stepped
        value_actions = current
        likelihood_actions = current
    else:
        value_actions = clipped
        likelihood_actions = raws

    values = np.asarray(q_value_fn(obs, value_actions), dtype=np.float64)
    if values.shape != (b, n_samples):
        raise ContractError("q_value_fn must return one value per candidate")
    if not np.isfinite(values).all():
        raise nn.NumericError("non-finite candidate values from q_value_fn")
    elites = _elite_indices(values, rho)

    raw_fast, traces = policy_raw(pnet, obs, keep_traces=True)
    g_all = dist.log_density_grad_core(
        raw_fast[:, None, :], pnet.k, low, high, likelihood_actions
    )  # (B, N, H)
    g_elite = np.take_along_axis(g_all, elites[:, :, None], axis=1)
    # (1/N) sum over elites, averaged over the batch
    gout = g_elite.sum(axis=1) / (n_samples * b)
    direction = policy_backward(pnet, traces, gout)
    thresholds = np.take_along_axis(values, elites[:, -1:], axis=1)[:, 0]
    return direction, {"thresholds": thresholds, "h": elites.shape[1]}


def ccem_update(
    actor: ActorState,
    obs,
    q_value_fn,
    n_samples: int,
    rho: float,
    lr: float,
    rng,
    q_grad_fn=None,
    refine_steps: int = 0,
    refine_lr: float | None = None,
    opt: nn.AdamState | None = None,
):
    """Ascend the fast weights along the CCEM direction and project.

    Plain ascent by default; pass an AdamState to route the same direction
    through adaptive moments (returned alongside the new actor). A non-finite
    direction skips the update. Slow weights are untouched here; advance them
    with slow_update.
    """
    try:
        direction, _ = ccem_direction(
            actor, obs, q_value_fn, n_samples, rho, rng,
            q_grad_fn=q_grad_fn, refine_steps=refine_steps, refine_lr=refine_lr,
        )
    except nn.NumericError as err:
        log.warning("skipping ccem_update: %s", err)
        return (actor, opt) if opt is not None else actor
    if not all(np.isfinite(g).all() for g in direction):
        log.warning("skipping ccem_update: non-finite direction")
        return (actor, opt) if opt is not None else actor
    arrays = actor.fast.arrays()
    if opt is not None:
        arrays, opt = nn.adam_step(arrays, [-g for g in direction], opt, lr)
    else:
        arrays = [a + lr * g for a, g in zip(arrays, direction)]
    fast = actor.fast.with_arrays(project(arrays, actor.w_max))
    out = replace(actor, fast=fast, t=actor.t + 1)
    return (out, opt) if opt is not None else out


def slow_update(actor: ActorState, alpha: float) -> ActorState:
    """Blend slow weights toward fast: slow <- (1 - alpha) slow + alpha fast."""
    if not 0.0 <= alpha <= 1.0:
        raise ContractError(f"alpha must lie in [0, 1], got {alpha}")
    if alpha == 1.0:
        return replace(actor, slow=actor.fast)
    arrays = [
        (1.0 - alpha) * s + alpha * f
        for s, f in zip(actor.slow.arrays(), actor.fast.arrays())
    ]
    return replace(actor, slow=actor.slow.with_arrays(arrays))


def project(arrays, w_max: float) -> list:
    """Clamp every weight into [-w_max, w_max]."""
    return nn.clip_arrays(arrays, w_max)


# -- Step-size and sample-count schedules --------------------------------------


@dataclass(frozen=True)
class Schedule:
    """Learning-rate and sample-count schedule.

    practice mode holds every rate constant. theory mode decays the actor rate
    slowest, the slow-weight blend faster, and the expert rate fastest, with a
    sample count that grows geometrically across epochs; together these give
    square-summable but not summable steps with the separation the tracking
    argument needs.
    """

    mode: str = "practice"
    actor_lr: float = 1e-3
    slow_rate: float = 1.0
    expert_lr: float = 1e-2
    n_samples: int = 30
    # theory-mode shape parameters
    a0: float = 0.1
    n0: int = 10
    growth: float = 2.0
    epoch_len: int = 100


@dataclass(frozen=True)
class ScheduleValues:
    actor_lr: float
    slow_rate: float
    expert_lr: float
    n_samples: int


def schedule_at(sched: Schedule, t: int) -> ScheduleValues:
    """Rates in effect at update counter t (0-based)."""
    if t < 0:
        raise ContractError(f"t must be >= 0, got {t}")
    if sched.mode == "practice":
        return ScheduleValues(
            actor_lr=sched.actor_lr,
            slow_rate=sched.slow_rate,
            expert_lr=sched.expert_lr,
            n_samples=sched.n_samples,
        )
    if sched.mode != "theory":
        raise ContractError(f"unknown schedule mode {sched.mode!r}")
    if sched.growth <= 1.0:
        raise ContractError("theory mode needs growth > 1")
    base = 1.0 + t
    return ScheduleValues(
        actor_lr=sched.a0 * base**-0.6,
        slow_rate=min(1.0, sched.a0 * base**-0.8),
        expert_lr=sched.a0 * base**-0.9,
        n_samples=int(sched.n0 * math.ceil(sched.growth ** (t // sched.epoch_len))),
    )
