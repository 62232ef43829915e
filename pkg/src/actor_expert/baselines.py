"""Comparison agents: OU exploration noise, NAF, per-step CEM, and oracles.

Each baseline keeps the same replay/batch/target-network conventions as the
main agent so that learning curves differ only in how the greedy action is
obtained: NAF makes the argmax analytic by forcing a quadratic advantage,
the per-step CEM searches for it at decision time, the off-policy
actor-critic follows its own policy gradient, and the discretized oracle
simply scans a fine grid.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import actor as ac
from . import distributions as dist
from . import expert as xp
from . import nn
from .nn import ContractError

__all__ = [
    "OUState",
    "NafParams",
    "NafState",
    "ou_init",
    "ou_next",
    "naf_init",
    "naf_state_init",
    "naf_heads",
    "naf_q",
    "naf_q_batch",
    "naf_greedy",
    "naf_explore",
    "naf_grads",
    "naf_update",
    "qtopt_search",
    "qtopt_action",
    "qtopt_actions_batch",
    "qtopt_sample",
    "ac_sample_next_actions",
    "ac_critic_update",
    "ac_actor_update",
    "optimal_q_action",
]


# -- Ornstein-Uhlenbeck exploration noise ---------------------------------------


@dataclass(frozen=True)
class OUState:
    """Mean-reverting noise process state; defaults follow the benchmarks."""

    x: np.ndarray
    mu: float = 0.0
    theta: float = 0.15
    sigma: float = 0.2


def ou_init(d: int, mu: float = 0.0, theta: float = 0.15, sigma: float = 0.2) -> OUState:
    return OUState(x=np.zeros(d), mu=mu, theta=theta, sigma=sigma)


def ou_next(ou: OUState, rng):
    """Advance the process one step; the new value is the noise to add."""
    if not np.isfinite(ou.x).all():
        raise nn.NumericError("OU state left the finite range")
    x = ou.x + ou.theta * (ou.mu - ou.x) + ou.sigma * rng.standard_normal(ou.x.shape)
    return x, replace(ou, x=x)


# -- Normalized advantage function ----------------------------------------------


def _tril_indices(d: int):
    return np.tril_indices(d)


@dataclass(frozen=True)
class NafParams:
    """Shared trunk with linear heads for V(s), mu(s) and the precision factor.

    The packed L head holds the d(d+1)/2 lower-triangular entries row by row;
    diagonal entries are exponentiated on assembly so LL^T stays positive
    definite no matter what the net outputs.
    """

    trunk: nn.DenseNet
    v_head: nn.DenseNet
    mu_head: nn.DenseNet
    l_head: nn.DenseNet
    low: np.ndarray
    high: np.ndarray

    @property
    def action_dim(self) -> int:
        return self.low.shape[0]

    def arrays(self) -> list:
        return (
            self.trunk.arrays()
            + self.v_head.arrays()
            + self.mu_head.arrays()
            + self.l_head.arrays()
        )

    def with_arrays(self, arrays) -> "NafParams":
        nets = []
        i = 0
        for net in (self.trunk, self.v_head, self.mu_head, self.l_head):
            n = len(net.arrays())
            nets.append(net.with_arrays(arrays[i : i + n]))
            i += n
        return replace(self, trunk=nets[0], v_head=nets[1], mu_head=nets[2], l_head=nets[3])


def naf_init(obs_dim: int, box, width: int = 200, rng=None) -> NafParams:
    """Fresh NAF net: obs -> width -> width trunk, three linear heads."""
    if rng is None:
        rng = np.random.default_rng()
    low = np.asarray(box[0], dtype=np.float64)
    high = np.asarray(box[1], dtype=np.float64)
    d = low.shape[0]
    trunk = nn.net_init((obs_dim, width, width), ("relu", "relu"), rng=rng)
    return NafParams(
        trunk=trunk,
        v_head=nn.net_init((width, 1), ("linear",), rng=rng),
        mu_head=nn.net_init((width, d), ("linear",), rng=rng),
        l_head=nn.net_init((width, d * (d + 1) // 2), ("linear",), rng=rng),
        low=low,
        high=high,
    )


def _assemble_l(packed: np.ndarray, d: int) -> np.ndarray:
    """Packed entries (B, d(d+1)/2) -> factors (B, d, d), diagonal exponentiated."""
    b = packed.shape[0]
    rows, cols = _tril_indices(d)
    l = np.zeros((b, d, d))
    l[:, rows, cols] = packed
    diag = np.arange(d)
    l[:, diag, diag] = np.exp(l[:, diag, diag])
    return l


def naf_heads(naf: NafParams, obs):
    """Head outputs for a batch: (v (B,), mu (B,d), L (B,d,d))."""
    obs = np.atleast_2d(np.asarray(obs, dtype=np.float64))
    phi = nn.net_apply(naf.trunk, obs)
    v = nn.net_apply(naf.v_head, phi)[:, 0]
    mu = nn.net_apply(naf.mu_head, phi)
    l = _assemble_l(nn.net_apply(naf.l_head, phi), naf.action_dim)
    return v, mu, l


def naf_q(naf: NafParams, state, action) -> float:
    """Q(s, a) = V(s) - 0.5 (a - mu)^T LL^T (a - mu)."""
    v, mu, l = naf_heads(naf, np.asarray(state, dtype=np.float64)[None, :])
    e = np.asarray(action, dtype=np.float64) - mu[0]
    u = l[0].T @ e
    return float(v[0] - 0.5 * u @ u)


def naf_q_batch(naf: NafParams, obs, actions) -> np.ndarray:
    v, mu, l = naf_heads(naf, obs)
    e = np.atleast_2d(np.asarray(actions, dtype=np.float64)) - mu
    u = np.einsum("bij,bi->bj", l, e)
    return v - 0.5 * np.einsum("bj,bj->b", u, u)


def naf_greedy(naf: NafParams, obs) -> np.ndarray:
    """Analytic argmax of the quadratic: mu(s), clipped into the box."""
    _, mu, _ = naf_heads(naf, np.asarray(obs, dtype=np.float64)[None, :])
    return np.clip(mu[0], naf.low, naf.high)


def naf_explore(naf: NafParams, obs, scale: float, rng) -> np.ndarray:
    """Gaussian exploration around mu with the learned covariance times scale.

    Sigma = (LL^T)^{-1}, so a draw is mu + scale * L^{-T} xi.
    """
    _, mu, l = naf_heads(naf, np.asarray(obs, dtype=np.float64)[None, :])
    xi = rng.standard_normal(naf.action_dim)
    step = np.linalg.solve(l[0].T, xi)
    return np.clip(mu[0] + scale * step, naf.low, naf.high)


@dataclass(frozen=True)
class NafState:
    online: NafParams
    target: NafParams
    opt: nn.AdamState
    gamma: float
    tau: float


def naf_state_init(
    obs_dim: int, box, width: int = 200, gamma: float = 0.99, tau: float = 0.01, rng=None
) -> NafState:
    naf = naf_init(obs_dim, box, width, rng)
    return NafState(online=naf, target=naf, opt=nn.adam_init(naf.arrays()), gamma=gamma, tau=tau)


def naf_grads(naf: NafParams, obs, actions, targets):
    """Parameter gradients of (1/2B) sum (target - Q)^2 with targets constant.

    Returns (grads aligned with naf.arrays(), td_errors).
    """
    obs = np.atleast_2d(np.asarray(obs, dtype=np.float64))
    actions = np.atleast_2d(np.asarray(actions, dtype=np.float64))
    targets = np.asarray(targets, dtype=np.float64)
    b = obs.shape[0]
    d = naf.action_dim

    phi, trunk_trace = nn.net_forward(naf.trunk, obs)
    v, v_trace = nn.net_forward(naf.v_head, phi)
    mu, mu_trace = nn.net_forward(naf.mu_head, phi)
    packed, l_trace = nn.net_forward(naf.l_head, phi)
    l = _assemble_l(packed, d)

    e = actions - mu
    u = np.einsum("bij,bi->bj", l, e)
    q = v[:, 0] - 0.5 * np.einsum("bj,bj->b", u, u)
    delta = targets - q
    if not np.isfinite(delta).all():
        return None, delta

    # d/dq of (1/2B) sum delta^2, then chain into each head output
    gq = (-delta / b)[:, None]
    m = np.einsum("bik,bjk->bij", l, l)  # LL^T
    g_v = gq
    g_mu = gq * np.einsum("bij,bj->bi", m, e)
    g_l = -gq[:, :, None] * np.einsum("bi,bj->bij", e, u)
    diag = np.arange(d)
    g_l[:, diag, diag] *= l[:, diag, diag]  # diagonal entries live in log space
    rows, cols = _tril_indices(d)
    g_packed = g_l[:, rows, cols]

    v_grads, gin_v = nn.net_backward(naf.v_head, v_trace, g_v)
    mu_grads, gin_mu = nn.net_backward(naf.mu_head, mu_trace, g_mu)
    l_grads, gin_l = nn.net_backward(naf.l_head, l_trace, g_packed)
    trunk_grads, _ = nn.net_backward(naf.trunk, trunk_trace, gin_v + gin_mu + gin_l)
    grads = trunk_grads.arrays() + v_grads.arrays() + mu_grads.arrays() + l_grads.arrays()
    return grads, delta


def naf_update(state: NafState, obs, actions, rewards, next_obs, terminals, lr: float):
    """Q-learning step: the quadratic's analytic max makes the target V(s').

    Semi-gradient MSE with Adam, then soft target blend. Returns
    (new_state, td_errors); non-finite errors skip the step.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    terminals = np.asarray(terminals)
    v_next, _, _ = naf_heads(state.target, next_obs)
    targets = rewards + state.gamma * np.where(terminals, 0.0, v_next)
    grads, delta = naf_grads(state.online, obs, actions, targets)
    if grads is None:
        return state, delta
    arrays, opt = nn.adam_step(state.online.arrays(), grads, state.opt, lr)
    online = state.online.with_arrays(arrays)
    target = _naf_soft(state.target, online, state.tau)
    return replace(state, online=online, target=target, opt=opt), delta


def _naf_soft(target: NafParams, online: NafParams, tau: float) -> NafParams:
    return replace(
        target,
        trunk=nn.soft_update(target.trunk, online.trunk, tau),
        v_head=nn.soft_update(target.v_head, online.v_head, tau),
        mu_head=nn.soft_update(target.mu_head, online.mu_head, tau),
        l_head=nn.soft_update(target.l_head, online.l_head, tau),
    )


# -- Per-step cross-entropy search (QT-Opt style) --------------------------------


def qtopt_actions_batch(
    qf: xp.QFunction, obs, box, iters: int, n_samples: int, n_elite: int, rng
):
    """CEM over the action box, run in lockstep for a batch of states.

    Starts each state from a broad two-component mixture spanning the box;
    per iteration samples candidates, keeps the n_elite best under Q, and
    refits the mixture by hard-assigning elites to the nearest mean
    (coefficients proportional to assignment counts, variances floored at
    1e-4). Returns (best actions seen (B, d), fitted (coeff, mean, std)).
    """
    if iters < 1:
        raise ContractError(f"need iters >= 1, got {iters}")
    if not 1 <= n_elite <= n_samples:
        raise ContractError(f"need 1 <= n_elite <= n_samples, got {n_elite}/{n_samples}")
    obs = np.atleast_2d(np.asarray(obs, dtype=np.float64))
    b = obs.shape[0]
    low = np.asarray(box[0], dtype=np.float64)
    high = np.asarray(box[1], dtype=np.float64)
    d = low.shape[0]
    center = 0.5 * (low + high)
    quarter = 0.25 * (high - low)
    coeff = np.tile([0.5, 0.5], (b, 1))
    mean = np.tile(np.stack([center - quarter, center + quarter]), (b, 1, 1))
    std = np.tile(0.5 * (high - low), (b, 2, 1))

    phi = xp.trunk_features(qf, obs)
    best_a = np.empty((b, d))
    best_q = np.full(b, -np.inf)
    rows = np.arange(b)
    for _ in range(iters):
        comps = (rng.random((b, n_samples)) >= coeff[:, :1]).astype(int)
        m = np.take_along_axis(mean, comps[:, :, None], axis=1)
        s = np.take_along_axis(std, comps[:, :, None], axis=1)
        actions = np.clip(m + s * rng.standard_normal((b, n_samples, d)), low, high)
        values = xp.q_values_many(qf, phi, actions)
        order = np.argsort(-values, axis=1, kind="stable")[:, :n_elite]
        top = order[:, 0]
        improved = values[rows, top] > best_q
        best_a[improved] = actions[rows, top][improved]
        best_q = np.where(improved, values[rows, top], best_q)
        elite = np.take_along_axis(actions, order[:, :, None], axis=1)
        for i in range(b):
            coeff[i], mean[i], std[i] = _refit_two(elite[i], mean[i], std[i])
    return best_a, (coeff, mean, std)


def qtopt_search(qf: xp.QFunction, state, box, iters: int, n_samples: int, n_elite: int, rng):
    """Single-state CEM search; returns (best action, fitted (coeff, mean, std))."""
    best, (coeff, mean, std) = qtopt_actions_batch(
        qf, np.asarray(state, dtype=np.float64)[None, :], box, iters, n_samples, n_elite, rng
    )
    return best[0], (coeff[0], mean[0], std[0])


def _refit_two(elite: np.ndarray, mean: np.ndarray, std: np.ndarray):
    """Hard-assignment moment refit of a 2-component diagonal mixture."""
    dists = np.linalg.norm(elite[:, None, :] - mean[None, :, :], axis=-1)
    assign = np.argmin(dists, axis=1)
    counts = np.bincount(assign, minlength=2)
    new_mean = mean.copy()
    new_std = std.copy()
    for c in range(2):
        members = elite[assign == c]
        if members.shape[0] == 0:
            continue
        new_mean[c] = members.mean(axis=0)
        new_std[c] = np.sqrt(np.maximum(members.var(axis=0), 1e-4))
    return counts / counts.sum(), new_mean, new_std


def qtopt_action(
    qf: xp.QFunction, state, box, iters: int = 2, n_samples: int = 64, n_elite: int = 6, rng=None
) -> np.ndarray:
    """Best action found by the per-step CEM search."""
    if rng is None:
        rng = np.random.default_rng()
    best, _ = qtopt_search(qf, state, box, iters, n_samples, n_elite, rng)
    return best


def qtopt_sample(mixture, box, rng) -> np.ndarray:
    """One exploration draw from a fitted (coeff, mean, std) mixture."""
    coeff, mean, std = mixture
    comp = int(rng.random() >= coeff[0])
    draw = mean[comp] + std[comp] * rng.standard_normal(mean.shape[-1])
    return np.clip(draw, box[0], box[1])


# -- Off-policy actor-critic ------------------------------------------------------


def ac_sample_next_actions(pnet: ac.PolicyNet, next_obs, rng) -> np.ndarray:
    """One fresh policy draw per next state, for the policy-evaluation bootstrap."""
    next_obs = np.atleast_2d(np.asarray(next_obs, dtype=np.float64))
    raw = ac.policy_raw(pnet, next_obs)
    coeff, mean, std = dist.raw_to_params(raw, pnet.k, pnet.low, pnet.high)
    drawn, _, _ = dist.sample_core(coeff, mean, std, 1, rng, pnet.low, pnet.high)
    return drawn[:, 0, :]


def ac_critic_update(critic: xp.ExpertState, batch, pnet: ac.PolicyNet, rng, lr: float):
    """One Sarsa-style step; batch = (obs, actions, rewards, next_obs, terminals)."""
    obs, actions, rewards, next_obs, terminals = batch
    next_actions = ac_sample_next_actions(pnet, next_obs, rng)
    targets = xp.q_targets(critic, rewards, next_obs, next_actions, terminals)
    return xp.q_update(critic, obs, actions, targets, lr)


def ac_actor_update(
    actor: ac.ActorState, obs, q_value_fn, n_baseline: int, lr: float, rng
) -> ac.ActorState:
    """Likelihood-ratio policy ascent with a sampled mean-Q baseline.

    One action draw per state carries the gradient; n_baseline extra draws
    estimate the state's mean Q under the policy, and their average is
    subtracted as the advantage baseline.
    """
    if n_baseline < 1:
        raise ContractError(f"need n_baseline >= 1, got {n_baseline}")
    obs = np.atleast_2d(np.asarray(obs, dtype=np.float64))
    b = obs.shape[0]
    pnet = actor.fast
    raw, traces = ac.policy_raw(pnet, obs, keep_traces=True)
    coeff, mean, std = dist.raw_to_params(raw, pnet.k, pnet.low, pnet.high)
    clipped, raws, _ = dist.sample_core(
        coeff, mean, std, 1 + n_baseline, rng, pnet.low, pnet.high
    )
    values = np.asarray(q_value_fn(obs, clipped), dtype=np.float64)
    if not np.isfinite(values).all():
        raise nn.NumericError("non-finite candidate values from q_value_fn")
    adv = values[:, 0] - values[:, 1:].mean(axis=1)
    g = dist.log_density_grad_core(raw, pnet.k, pnet.low, pnet.high, raws[:, 0, :])
    gout = adv[:, None] * g / b
    direction = ac.policy_backward(pnet, traces, gout)
    arrays = [a + lr * g for a, g in zip(pnet.arrays(), direction)]
    fast = pnet.with_arrays(ac.project(arrays, actor.w_max))
    return replace(actor, fast=fast, slow=fast, t=actor.t + 1)


# -- Discretized argmax oracle -----------------------------------------------------


def optimal_q_action(qf: xp.QFunction, state, box, grid_step: float = 0.001) -> np.ndarray:
    """Exhaustive argmax of Q(state, .) over a uniform grid; ties go low.

    Only one-dimensional action boxes are supported; the grid includes both
    endpoints.
    """
    low = np.asarray(box[0], dtype=np.float64)
    high = np.asarray(box[1], dtype=np.float64)
    if low.shape[0] != 1:
        raise ContractError("grid search supports one-dimensional actions only")
    if grid_step <= 0.0:
        raise ContractError(f"grid_step must be positive, got {grid_step}")
    n = int(round((high[0] - low[0]) / grid_step)) + 1
    grid = np.linspace(low[0], high[0], n)
    phi = xp.trunk_features(qf, np.asarray(state, dtype=np.float64)[None, :])
    values = xp.q_values_many(qf, phi, grid[None, :, None])[0]
    return np.array([grid[int(np.argmax(values))]])
