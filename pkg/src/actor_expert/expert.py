"""Q-learning expert: action-value network, greedy-action estimation, updates.

The Q network is a state trunk (first hidden layer) plus a fused head that
takes the trunk features concatenated with the action (late fusion). In the
combined agent the trunk object is shared with the policy heads; standalone
value-based agents own a private trunk of the same shape.

The "many" paths evaluate N candidate actions per state without repeating the
trunk or the state block of the first head layer, which is what keeps the
per-step cost of sampling-based action proposals acceptable.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np

from . import distributions as dist
from . import nn
from .nn import ContractError

__all__ = [
    "QFunction",
    "ExpertState",
    "q_init",
    "expert_init",
    "q_value",
    "q_values",
    "trunk_features",
    "q_values_many",
    "q_action_grads_many",
    "max_action_estimate",
    "max_action_batch",
    "q_targets",
    "q_update",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class QFunction:
    """trunk: obs -> features (relu); head: [features, action] -> scalar."""

    trunk: nn.DenseNet
    head: nn.DenseNet

    @property
    def feature_dim(self) -> int:
        return self.trunk.out_dim

    @property
    def action_dim(self) -> int:
        return self.head.in_dim - self.trunk.out_dim

    def arrays(self) -> list:
        return self.trunk.arrays() + self.head.arrays()

    def with_arrays(self, arrays) -> "QFunction":
        n = len(self.trunk.arrays())
        return QFunction(
            trunk=self.trunk.with_arrays(arrays[:n]),
            head=self.head.with_arrays(arrays[n:]),
        )


def q_init(obs_dim: int, action_dim: int, width: int = 200, rng=None) -> QFunction:
    """Fresh Q net: trunk obs->width, head [width+action]->width->1, relu hidden."""
    if rng is None:
        rng = np.random.default_rng()
    trunk = nn.net_init((obs_dim, width), ("relu",), rng=rng)
    head = nn.net_init((width + action_dim, width, 1), ("relu", "linear"), rng=rng)
    return QFunction(trunk=trunk, head=head)


@dataclass(frozen=True)
class ExpertState:
    """Online and target Q nets plus the optimizer state over the online one."""

    online: QFunction
    target: QFunction
    opt: nn.AdamState
    gamma: float
    tau: float


def expert_init(
    obs_dim: int,
    action_dim: int,
    width: int = 200,
    gamma: float = 0.99,
    tau: float = 0.01,
    rng=None,
    trunk: nn.DenseNet | None = None,
) -> ExpertState:
    """Build the expert; target starts as an exact copy of the online net."""
    if not 0.0 <= gamma <= 1.0:
        raise ContractError(f"gamma must lie in [0, 1], got {gamma}")
    qf = q_init(obs_dim, action_dim, width, rng)
    if trunk is not None:
        qf = QFunction(trunk=trunk, head=qf.head)
    return ExpertState(
        online=qf,
        target=qf,  # value semantics: arrays are never mutated in place
        opt=nn.adam_init(qf.arrays()),
        gamma=gamma,
        tau=tau,
    )


def trunk_features(qf: QFunction, obs) -> np.ndarray:
    """Trunk activations for a batch of observations, shape (B, width)."""
    return nn.net_apply(qf.trunk, np.atleast_2d(np.asarray(obs, dtype=np.float64)))


def q_values(qf: QFunction, obs, actions) -> np.ndarray:
    """Q for aligned batches: obs (B, n), actions (B, d) -> (B,)."""
    obs = np.atleast_2d(np.asarray(obs, dtype=np.float64))
    actions = np.atleast_2d(np.asarray(actions, dtype=np.float64))
    phi = trunk_features(qf, obs)
    out = nn.net_apply(qf.head, np.concatenate([phi, actions], axis=1))
    return out[:, 0]


def q_value(qf: QFunction, obs, action) -> float:
    """Scalar Q(s, a)."""
    return float(q_values(qf, np.asarray(obs)[None, :], np.asarray(action)[None, :])[0])


def q_values_many(qf: QFunction, phi, actions) -> np.ndarray:
    """Q for N candidate actions per state: phi (B, W), actions (B, N, d) -> (B, N).

    Splits the first head layer into its state block (applied once per state)
    and action block (applied per candidate); later layers broadcast.
    """
    w0, b0 = qf.head.weights[0], qf.head.biases[0]
    wt = phi.shape[-1]
    z = (phi @ w0[:wt] + b0)[:, None, :] + actions @ w0[wt:]
    h = np.maximum(z, 0.0) if qf.head.activations[0] == "relu" else _act(qf.head.activations[0], z)
    for w, b, act in zip(qf.head.weights[1:], qf.head.biases[1:], qf.head.activations[1:]):
        h = _act(act, h @ w + b)
    return h[..., 0]


def q_action_grads_many(qf: QFunction, phi, actions) -> np.ndarray:
    """dQ/da for N candidates per state: returns (B, N, d).

    Reverse pass over the head only; the trunk does not depend on the action.
    """
    w0, b0 = qf.head.weights[0], qf.head.biases[0]
    wt = phi.shape[-1]
    preacts = []
    z = (phi @ w0[:wt] + b0)[:, None, :] + actions @ w0[wt:]
    preacts.append(z)
    h = _act(qf.head.activations[0], z)
    for w, b, act in zip(qf.head.weights[1:], qf.head.biases[1:], qf.head.activations[1:]):
        z = h @ w + b
        preacts.append(z)
        h = _act(act, z)
    g = np.ones(actions.shape[:-1] + (1,))
    for i in range(len(qf.head.weights) - 1, 0, -1):
        gz = g * _act_grad(qf.head.activations[i], preacts[i])
        g = gz @ qf.head.weights[i].T
    gz = g * _act_grad(qf.head.activations[0], preacts[0])
    return gz @ w0[wt:].T


def _act(name, z):
    if name == "linear":
        return z
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "tanh":
        return np.tanh(z)
    raise ContractError(f"unknown activation {name!r}")


def _act_grad(name, z):
    if name == "linear":
        return np.ones_like(z)
    if name == "relu":
        return (z > 0.0).astype(z.dtype)
    if name == "tanh":
        t = np.tanh(z)
        return 1.0 - t * t
    raise ContractError(f"unknown activation {name!r}")


def max_action_batch(
    qf: QFunction, mixtures_mean, mixtures_coeff, phi, n_ascent: int, ascent_lr: float, low, high
) -> np.ndarray:
    """Greedy-action estimates for a batch: predominant modes, optionally refined.

    mixtures_mean (B, k, d) and mixtures_coeff (B, k) come from the policy;
    with n_ascent > 0 each mode hill-climbs dQ/da, and the best-Q iterate
    (including the start) is returned per state.
    """
    best_idx = np.argmax(mixtures_coeff, axis=-1)
    modes = np.take_along_axis(mixtures_mean, best_idx[:, None, None], axis=1)[:, 0, :]
    if n_ascent == 0:
        return modes
    current = np.clip(modes, low, high)[:, None, :]  # (B, 1, d)
    best_a = current[:, 0, :].copy()
    best_q = q_values_many(qf, phi, current)[:, 0]
    for _ in range(n_ascent):
        grad = q_action_grads_many(qf, phi, current)
        current = np.clip(current + ascent_lr * grad, low, high)
        q = q_values_many(qf, phi, current)[:, 0]
        improved = q > best_q
        best_a[improved] = current[improved, 0, :]
        best_q = np.where(improved, q, best_q)
    return best_a


def max_action_estimate(
    mix: dist.MixtureParams, qf: QFunction, obs, n_ascent: int = 0, ascent_lr: float | None = None
) -> np.ndarray:
    """Single-state greedy-action estimate from a mixture and a Q net."""
    if n_ascent < 0:
        raise ContractError(f"n_ascent must be >= 0, got {n_ascent}")
    if n_ascent == 0:
        return dist.predominant_mode(mix)
    if ascent_lr is None:
        ascent_lr = 0.01 * float(np.max(mix.high - mix.low))
    phi = trunk_features(qf, np.asarray(obs, dtype=np.float64)[None, :])
    return max_action_batch(
        qf, mix.mean[None], mix.coeff[None], phi, n_ascent, ascent_lr, mix.low, mix.high
    )[0]


def q_targets(expert: ExpertState, rewards, next_obs, next_actions, terminals) -> np.ndarray:
    """Bootstrapped targets: r + gamma * Q_target(s', a') masked by terminals.

    next_actions are the greedy-action estimates (searched with the online
    net); the bootstrap value itself always comes from the target net.
    Time-limit truncations are not terminals and keep their bootstrap term.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    terminals = np.asarray(terminals)
    boot = q_values(expert.target, next_obs, next_actions)
    return rewards + expert.gamma * np.where(terminals, 0.0, boot)


def q_update(expert: ExpertState, obs, actions, targets, lr: float):
    """Semi-gradient step on mean squared TD error, then target soft blend.

    Targets enter as constants. Returns (new_expert, td_errors). A batch with
    non-finite TD errors is skipped (logged) rather than applied.
    """
    obs = np.atleast_2d(np.asarray(obs, dtype=np.float64))
    actions = np.atleast_2d(np.asarray(actions, dtype=np.float64))
    targets = np.asarray(targets, dtype=np.float64)
    b = obs.shape[0]
    phi, trunk_trace = nn.net_forward(expert.online.trunk, obs)
    fused = np.concatenate([phi, actions], axis=1)
    q, head_trace = nn.net_forward(expert.online.head, fused)
    delta = targets - q[:, 0]
    if not np.isfinite(delta).all():
        log.warning("skipping q_update: non-finite TD errors")
        return expert, delta
    # d/dq of (1/2B) sum delta^2
    gout = (-delta / b)[:, None]
    head_grads, gin = nn.net_backward(expert.online.head, head_trace, gout)
    trunk_grads, _ = nn.net_backward(expert.online.trunk, trunk_trace, gin[:, : phi.shape[1]])
    grads = trunk_grads.arrays() + head_grads.arrays()
    arrays, opt = nn.adam_step(expert.online.arrays(), grads, expert.opt, lr)
    online = expert.online.with_arrays(arrays)
    target = QFunction(
        trunk=nn.soft_update(expert.target.trunk, online.trunk, expert.tau),
        head=nn.soft_update(expert.target.head, online.head, expert.tau),
    )
    return replace(expert, online=online, target=target, opt=opt), delta
