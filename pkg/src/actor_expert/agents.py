"""Agent wiring: behavior policy, greedy evaluation, and per-step updates.

Every agent exposes the same four entry points the training loop drives:
explore(obs, rng) for the behavior action, greedy_batch(obs, rng) for
evaluation actions over a batch of states, update(batch, rng) for one
combined learning step, and nets()/meta() for snapshots. All learning state
lives in immutable dataclasses; agents just swap the references, so an
evaluation pass can never mutate training state.
"""

from __future__ import annotations

from dataclasses import replace

import numpy as np

from . import actor as act
from . import baselines as bl
from . import distributions as dist
from . import envs
from . import expert as xp
from . import nn
from .config import ExperimentConfig
from .nn import ContractError

__all__ = ["make_agent", "save_agent", "load_agent", "AGENT_CLASSES"]


def _next_actions_where_live(batch, action_dim: int, search_fn) -> np.ndarray:
    """Greedy next actions, searched only where the bootstrap survives.

    Terminal rows keep zeros: q_targets discards their bootstrap value, so
    searching them would only burn time (on a one-step environment, all of it).
    """
    live = ~np.asarray(batch.terminals, dtype=bool)
    next_actions = np.zeros((batch.next_states.shape[0], action_dim))
    if live.any():
        next_actions[live] = search_fn(batch.next_states[live])
    return next_actions


class AEAgent:
    """Mixture-policy actor guided by a Q-learning expert over a shared trunk.

    The expert's Adam step and the actor's likelihood ascent both write the
    shared first layer, one after the other, so the trunk reference is synced
    into whichever net updates next.
    """

    name = "ae"

    def __init__(self, cfg: ExperimentConfig, spec: envs.EnvSpec, rng, refine: bool):
        self.box = (spec.action_low, spec.action_high)
        trunk = nn.net_init((spec.obs_dim, cfg.width), ("relu",), rng=rng)
        self.expert = xp.expert_init(
            spec.obs_dim, spec.action_dim, width=cfg.width,
            gamma=cfg.gamma, tau=cfg.tau, rng=rng, trunk=trunk,
        )
        pnet = act.policy_init(
            spec.obs_dim, self.box, k=cfg.k, width=cfg.width, rng=rng, trunk=trunk
        )
        self.actor = act.actor_init(pnet, w_max=cfg.w_max)
        self.cfg = cfg
        self.refine = refine
        self.n_ascent = cfg.n_ascent if refine else 0
        self.ascent_lr = 0.01 * float(np.max(spec.action_high - spec.action_low))

    def policy_draw(self, obs, rng) -> np.ndarray:
        mix = act.policy_mixture(self.actor.slow, obs)
        return dist.sample(mix, 1, rng).actions[0]

    def greedy_batch(self, obs, rng) -> np.ndarray:
        raw = act.policy_raw(self.actor.fast, obs)
        coeff, mean, _ = dist.raw_to_params(raw, self.cfg.k, *self.box)
        phi = xp.trunk_features(self.expert.online, obs)
        return xp.max_action_batch(
            self.expert.online, mean, coeff, phi, self.n_ascent, self.ascent_lr, *self.box
        )

    def _q_value_fn(self, obs, actions):
        qf = self.expert.online
        return xp.q_values_many(qf, xp.trunk_features(qf, obs), actions)

    def _q_grad_fn(self, obs, actions):
        qf = self.expert.online
        return xp.q_action_grads_many(qf, xp.trunk_features(qf, obs), actions)

    def update(self, batch, rng) -> None:
        cfg = self.cfg
        next_actions = _next_actions_where_live(
            batch, batch.actions.shape[1], lambda s: self.greedy_batch(s, rng)
        )
        targets = xp.q_targets(
            self.expert, batch.rewards, batch.next_states, next_actions, batch.terminals
        )
        self.expert, _ = xp.q_update(
            self.expert, batch.states, batch.actions, targets, cfg.expert_lr
        )
        fast = replace(self.actor.fast, trunk=self.expert.online.trunk)
        self.actor = act.ccem_update(
            replace(self.actor, fast=fast),
            batch.states,
            self._q_value_fn,
            cfg.n_samples,
            cfg.rho,
            cfg.actor_lr,
            rng,
            q_grad_fn=self._q_grad_fn if self.refine else None,
            refine_steps=self.n_ascent,
            refine_lr=self.ascent_lr if self.refine else None,
        )
        online = replace(self.expert.online, trunk=self.actor.fast.trunk)
        self.expert = replace(self.expert, online=online)
        self.actor = act.slow_update(self.actor, cfg.slow_rate)

    def nets(self) -> dict:
        return {
            "trunk": self.actor.fast.trunk,
            "policy_head": self.actor.fast.head,
            "q_head": self.expert.online.head,
        }

    def restore(self, nets) -> None:
        fast = replace(
            self.actor.fast, trunk=nets["trunk"], head=nets["policy_head"]
        )
        self.actor = replace(self.actor, fast=fast, slow=fast)
        online = xp.QFunction(trunk=nets["trunk"], head=nets["q_head"])
        self.expert = replace(self.expert, online=online, target=online)


class AEPlusAgent(AEAgent):
    name = "ae-plus"


class QTOptAgent:
    """Q-learning with a per-decision CEM search instead of a learned actor."""

    name = "qtopt"

    def __init__(self, cfg: ExperimentConfig, spec: envs.EnvSpec, rng):
        self.box = (spec.action_low, spec.action_high)
        self.expert = xp.expert_init(
            spec.obs_dim, spec.action_dim, width=cfg.width,
            gamma=cfg.gamma, tau=cfg.tau, rng=rng,
        )
        self.cfg = cfg

    def _search(self, obs, rng):
        cfg = self.cfg
        return bl.qtopt_actions_batch(
            self.expert.online, obs, self.box,
            cfg.qtopt_iters, cfg.qtopt_samples, cfg.qtopt_elite, rng,
        )

    def policy_draw(self, obs, rng) -> np.ndarray:
        _, (coeff, mean, std) = self._search(obs[None], rng)
        return bl.qtopt_sample((coeff[0], mean[0], std[0]), self.box, rng)

    def greedy_batch(self, obs, rng) -> np.ndarray:
        best, _ = self._search(obs, rng)
        return best

    def update(self, batch, rng) -> None:
        next_actions = _next_actions_where_live(
            batch, batch.actions.shape[1], lambda s: self._search(s, rng)[0]
        )
        targets = xp.q_targets(
            self.expert, batch.rewards, batch.next_states, next_actions, batch.terminals
        )
        self.expert, _ = xp.q_update(
            self.expert, batch.states, batch.actions, targets, self.cfg.expert_lr
        )

    def nets(self) -> dict:
        return {"q_trunk": self.expert.online.trunk, "q_head": self.expert.online.head}

    def restore(self, nets) -> None:
        online = xp.QFunction(trunk=nets["q_trunk"], head=nets["q_head"])
        self.expert = replace(self.expert, online=online, target=online)


class NAFAgent:
    """Quadratic-advantage Q-learning; the greedy action is the head mean."""

    name = "naf"

    def __init__(self, cfg: ExperimentConfig, spec: envs.EnvSpec, rng):
        self.box = (spec.action_low, spec.action_high)
        self.state = bl.naf_state_init(
            spec.obs_dim, self.box, width=cfg.width, gamma=cfg.gamma, tau=cfg.tau, rng=rng
        )
        self.cfg = cfg

    def policy_draw(self, obs, rng) -> np.ndarray:
        return bl.naf_explore(self.state.online, obs, self.cfg.naf_scale, rng)

    def greedy_batch(self, obs, rng) -> np.ndarray:
        _, mu, _ = bl.naf_heads(self.state.online, obs)
        return np.clip(mu, *self.box)

    def update(self, batch, rng) -> None:
        self.state, _ = bl.naf_update(
            self.state, batch.states, batch.actions, batch.rewards,
            batch.next_states, batch.terminals, self.cfg.expert_lr,
        )

    def nets(self) -> dict:
        naf = self.state.online
        return {
            "trunk": naf.trunk, "v_head": naf.v_head,
            "mu_head": naf.mu_head, "l_head": naf.l_head,
        }

    def restore(self, nets) -> None:
        online = replace(
            self.state.online, trunk=nets["trunk"], v_head=nets["v_head"],
            mu_head=nets["mu_head"], l_head=nets["l_head"],
        )
        self.state = replace(self.state, online=online, target=online)


class ActorCriticAgent:
    """Policy-evaluation critic plus likelihood-ratio actor with a mean baseline."""

    name = "actor-critic"

    def __init__(self, cfg: ExperimentConfig, spec: envs.EnvSpec, rng):
        self.box = (spec.action_low, spec.action_high)
        self.critic = xp.expert_init(
            spec.obs_dim, spec.action_dim, width=cfg.width,
            gamma=cfg.gamma, tau=cfg.tau, rng=rng,
        )
        pnet = act.policy_init(spec.obs_dim, self.box, k=cfg.k, width=cfg.width, rng=rng)
        self.actor = act.actor_init(pnet, w_max=cfg.w_max)
        self.cfg = cfg

    def policy_draw(self, obs, rng) -> np.ndarray:
        mix = act.policy_mixture(self.actor.fast, obs)
        return dist.sample(mix, 1, rng).actions[0]

    def greedy_batch(self, obs, rng) -> np.ndarray:
        raw = act.policy_raw(self.actor.fast, obs)
        coeff, mean, _ = dist.raw_to_params(raw, self.cfg.k, *self.box)
        best = np.argmax(coeff, axis=-1)
        return np.take_along_axis(mean, best[:, None, None], axis=1)[:, 0, :]

    def _q_value_fn(self, obs, actions):
        qf = self.critic.online
        return xp.q_values_many(qf, xp.trunk_features(qf, obs), actions)

    def update(self, batch, rng) -> None:
        cfg = self.cfg
        columns = (batch.states, batch.actions, batch.rewards, batch.next_states, batch.terminals)
        self.critic, _ = bl.ac_critic_update(
            self.critic, columns, self.actor.fast, rng, cfg.expert_lr
        )
        self.actor = bl.ac_actor_update(
            self.actor, batch.states, self._q_value_fn, cfg.n_baseline, cfg.actor_lr, rng
        )

    def nets(self) -> dict:
        return {
            "policy_trunk": self.actor.fast.trunk,
            "policy_head": self.actor.fast.head,
            "q_trunk": self.critic.online.trunk,
            "q_head": self.critic.online.head,
        }

    def restore(self, nets) -> None:
        fast = replace(
            self.actor.fast, trunk=nets["policy_trunk"], head=nets["policy_head"]
        )
        self.actor = replace(self.actor, fast=fast, slow=fast)
        online = xp.QFunction(trunk=nets["q_trunk"], head=nets["q_head"])
        self.critic = replace(self.critic, online=online, target=online)


class OptimalQAgent:
    """Q-learning whose argmax is an exhaustive scan of a fine action grid."""

    name = "optimal-q"

    def __init__(self, cfg: ExperimentConfig, spec: envs.EnvSpec, rng):
        if spec.action_dim != 1:
            raise ContractError("the grid-search agent needs a one-dimensional action space")
        self.box = (spec.action_low, spec.action_high)
        self.expert = xp.expert_init(
            spec.obs_dim, spec.action_dim, width=cfg.width,
            gamma=cfg.gamma, tau=cfg.tau, rng=rng,
        )
        self.cfg = cfg
        n = int(round((self.box[1][0] - self.box[0][0]) / cfg.grid_step)) + 1
        self.grid = np.linspace(self.box[0][0], self.box[1][0], n)

    def policy_draw(self, obs, rng) -> np.ndarray:
        raise ContractError("the grid-search agent explores with OU noise only")

    def greedy_batch(self, obs, rng) -> np.ndarray:
        # repeated states are common here (the one-state environment), so
        # scan the grid once per distinct state
        obs = np.atleast_2d(obs)
        uniq, inverse = np.unique(obs, axis=0, return_inverse=True)
        qf = self.expert.online
        phi = xp.trunk_features(qf, uniq)
        values = xp.q_values_many(qf, phi, np.tile(self.grid[:, None], (uniq.shape[0], 1, 1)))
        return self.grid[np.argmax(values, axis=1)][inverse][:, None]

    def update(self, batch, rng) -> None:
        next_actions = _next_actions_where_live(
            batch, batch.actions.shape[1], lambda s: self.greedy_batch(s, rng)
        )
        targets = xp.q_targets(
            self.expert, batch.rewards, batch.next_states, next_actions, batch.terminals
        )
        self.expert, _ = xp.q_update(
            self.expert, batch.states, batch.actions, targets, self.cfg.expert_lr
        )

    def nets(self) -> dict:
        return {"q_trunk": self.expert.online.trunk, "q_head": self.expert.online.head}

    def restore(self, nets) -> None:
        online = xp.QFunction(trunk=nets["q_trunk"], head=nets["q_head"])
        self.expert = replace(self.expert, online=online, target=online)


AGENT_CLASSES = {
    "ae": AEAgent,
    "ae-plus": AEPlusAgent,
    "qtopt": QTOptAgent,
    "naf": NAFAgent,
    "actor-critic": ActorCriticAgent,
    "optimal-q": OptimalQAgent,
}


class _OUExploration:
    """Greedy action plus mean-reverting noise, clipped back into the box."""

    def __init__(self, agent, d: int):
        self.agent = agent
        self.ou = bl.ou_init(d)

    def __call__(self, obs, rng) -> np.ndarray:
        noise, self.ou = bl.ou_next(self.ou, rng)
        greedy = self.agent.greedy_batch(np.asarray(obs)[None, :], rng)[0]
        return np.clip(greedy + noise, *self.agent.box)


def make_agent(cfg: ExperimentConfig, spec: envs.EnvSpec, rng):
    """Build the configured agent and attach its exploration rule."""
    cfg.validate()
    if cfg.agent in ("ae", "ae-plus"):
        agent = AEAgent(cfg, spec, rng, refine=cfg.refine or cfg.agent == "ae-plus")
        agent.name = cfg.agent
    else:
        agent = AGENT_CLASSES[cfg.agent](cfg, spec, rng)
    if cfg.agent == "optimal-q" and cfg.exploration != "ou":
        raise ContractError("optimal-q has no sampling policy; use exploration = ou")
    if cfg.exploration == "ou":
        agent.explore = _OUExploration(agent, spec.action_dim)
    else:
        agent.explore = agent.policy_draw
    return agent


def save_agent(agent, cfg: ExperimentConfig, path) -> None:
    meta = {
        "agent": agent.name,
        "env": cfg.env,
        "k": cfg.k,
        "width": cfg.width,
        "refine": bool(cfg.refine or agent.name == "ae-plus"),
        "n_ascent": cfg.n_ascent,
        "qtopt_iters": cfg.qtopt_iters,
        "qtopt_samples": cfg.qtopt_samples,
        "qtopt_elite": cfg.qtopt_elite,
        "grid_step": cfg.grid_step,
        "naf_scale": cfg.naf_scale,
        "exploration": cfg.exploration,
    }
    nn.save_nets(path, agent.nets(), meta)


def load_agent(path, env_name: str | None = None):
    """Rebuild an evaluation-ready agent from a snapshot.

    Returns (agent, env name). The snapshot's own environment is used unless
    env_name overrides it (the action box must match either way).
    """
    nets, meta = nn.load_nets(path)
    env = env_name or meta["env"]
    spec = envs.make_env(env).spec
    cfg = ExperimentConfig(
        env=env,
        agent=meta["agent"],
        k=meta["k"],
        width=meta["width"],
        refine=meta["refine"],
        n_ascent=meta["n_ascent"],
        qtopt_iters=meta["qtopt_iters"],
        qtopt_samples=meta["qtopt_samples"],
        qtopt_elite=meta["qtopt_elite"],
        grid_step=meta["grid_step"],
        naf_scale=meta["naf_scale"],
        exploration=meta["exploration"],
    )
    agent = make_agent(cfg, spec, np.random.default_rng(0))
    agent.restore(nets)
    return agent, env
