import numpy as np
import pytest

from actor_expert import agents
from actor_expert.baselines import naf_heads
from actor_expert.config import ExperimentConfig
from actor_expert.envs import EnvSpec, make_env
from actor_expert.nn import ContractError
from actor_expert.replay import TransitionBatch

ALL_AGENTS = ("ae", "ae-plus", "qtopt", "naf", "actor-critic", "optimal-q")


def small_cfg(agent: str, env: str = "bimodal", **overrides) -> ExperimentConfig:
    base = dict(
        env=env,
        agent=agent,
        width=8,
        n_samples=6,
        qtopt_samples=8,
        qtopt_elite=2,
        n_baseline=3,
        grid_step=0.1,
        exploration="ou" if agent == "optimal-q" else "policy",
    )
    base.update(overrides)
    return ExperimentConfig(**base)


def build(agent: str, env: str = "bimodal", seed: int = 0, **overrides):
    cfg = small_cfg(agent, env, **overrides)
    spec = make_env(env).spec
    return agents.make_agent(cfg, spec, np.random.default_rng(seed)), spec


def batch_for(spec, n: int = 6) -> TransitionBatch:
    return TransitionBatch(
        states=np.zeros((n, spec.obs_dim)),
        actions=np.tile(np.linspace(-0.4, 0.4, n)[:, None], (1, spec.action_dim)),
        rewards=np.linspace(-0.2, 1.0, n),
        next_states=np.zeros((n, spec.obs_dim)),
        terminals=np.zeros(n, dtype=bool),
    )


def flat_params(agent) -> np.ndarray:
    return np.concatenate(
        [a.ravel() for net in agent.nets().values() for a in net.arrays()]
    )


@pytest.mark.parametrize("name", ALL_AGENTS)
@pytest.mark.parametrize("env", ("bimodal", "pendulum"))
def test_explore_and_greedy_stay_in_box(name, env):
    agent, spec = build(name, env)
    rng = np.random.default_rng(1)
    for _ in range(5):
        a = agent.explore(np.zeros(spec.obs_dim), rng)
        assert a.shape == (spec.action_dim,)
        assert np.all(a >= spec.action_low - 1e-12)
        assert np.all(a <= spec.action_high + 1e-12)
    g = agent.greedy_batch(np.zeros((4, spec.obs_dim)), rng)
    assert g.shape == (4, spec.action_dim)
    assert np.all(g >= spec.action_low - 1e-12)
    assert np.all(g <= spec.action_high + 1e-12)


@pytest.mark.parametrize("name", ALL_AGENTS)
def test_update_moves_parameters(name):
    agent, spec = build(name)
    rng = np.random.default_rng(2)
    before = flat_params(agent)
    for _ in range(3):
        agent.update(batch_for(spec), rng)
    after = flat_params(agent)
    assert before.shape == after.shape
    assert not np.array_equal(before, after)
    assert np.isfinite(after).all()


def test_ae_keeps_one_shared_trunk():
    agent, spec = build("ae")
    assert agent.actor.fast.trunk is agent.expert.online.trunk
    agent.update(batch_for(spec), np.random.default_rng(3))
    assert agent.actor.fast.trunk is agent.expert.online.trunk


def test_ae_practice_slow_follows_fast():
    agent, spec = build("ae")
    agent.update(batch_for(spec), np.random.default_rng(4))
    assert agent.actor.slow is agent.actor.fast


def test_ae_plus_enables_refinement():
    plain, _ = build("ae")
    plus, _ = build("ae-plus")
    assert plain.n_ascent == 0
    assert plus.refine and plus.n_ascent == plain.cfg.n_ascent == plus.cfg.n_ascent


def test_refine_flag_upgrades_plain_ae():
    agent, _ = build("ae", refine=True)
    assert agent.refine and agent.n_ascent > 0


def test_naf_greedy_is_clipped_head_mean():
    agent, spec = build("naf")
    obs = np.array([[0.0], [0.0]])
    _, mu, _ = naf_heads(agent.state.online, obs)
    g = agent.greedy_batch(obs, np.random.default_rng(0))
    assert np.allclose(g, np.clip(mu, spec.action_low, spec.action_high))


def test_qtopt_greedy_deterministic_per_rng():
    agent, spec = build("qtopt")
    obs = np.zeros((3, spec.obs_dim))
    a = agent.greedy_batch(obs, np.random.default_rng(9))
    b = agent.greedy_batch(obs, np.random.default_rng(9))
    assert np.array_equal(a, b)


def test_optimal_q_requires_ou_exploration():
    cfg = small_cfg("optimal-q", exploration="policy")
    with pytest.raises(ContractError, match="exploration"):
        agents.make_agent(cfg, make_env("bimodal").spec, np.random.default_rng(0))


def test_optimal_q_rejects_multidimensional_actions():
    spec = EnvSpec(
        name="fake", obs_dim=2, action_dim=2,
        action_low=np.array([-1.0, -1.0]), action_high=np.array([1.0, 1.0]),
        max_episode_steps=10,
    )
    with pytest.raises(ContractError, match="one-dimensional"):
        agents.OptimalQAgent(small_cfg("optimal-q"), spec, np.random.default_rng(0))


def test_optimal_q_greedy_lands_on_grid():
    agent, _ = build("optimal-q")
    g = agent.greedy_batch(np.zeros((2, 1)), np.random.default_rng(0))
    on_grid = np.isclose(g[..., 0][:, None], agent.grid[None, :]).any(axis=1)
    assert on_grid.all()


def test_unknown_agent_rejected():
    cfg = small_cfg("ae")
    cfg = ExperimentConfig(**{**cfg.__dict__, "agent": "dqn"})
    with pytest.raises(ContractError):
        agents.make_agent(cfg, make_env("bimodal").spec, np.random.default_rng(0))


@pytest.mark.parametrize("name", ALL_AGENTS)
def test_snapshot_round_trip_preserves_greedy(name, tmp_path):
    agent, spec = build(name, seed=5)
    cfg = small_cfg(name)
    path = tmp_path / "snap.npz"
    agents.save_agent(agent, cfg, path)
    loaded, env_name = agents.load_agent(path)
    assert env_name == "bimodal"
    obs = np.zeros((2, spec.obs_dim))
    a = agent.greedy_batch(obs, np.random.default_rng(7))
    b = loaded.greedy_batch(obs, np.random.default_rng(7))
    assert np.array_equal(a, b)


def test_all_terminal_batch_skips_next_state_search():
    agent, spec = build("qtopt")
    calls = []
    original = agent._search

    def counting_search(obs, rng):
        calls.append(obs.shape[0])
        return original(obs, rng)

    agent._search = counting_search
    batch = batch_for(spec)
    batch = TransitionBatch(
        batch.states, batch.actions, batch.rewards, batch.next_states,
        np.ones(len(batch), dtype=bool),
    )
    agent.update(batch, np.random.default_rng(0))
    assert calls == []
    # and a mixed batch searches exactly the surviving rows
    mixed = TransitionBatch(
        batch.states, batch.actions, batch.rewards, batch.next_states,
        np.array([True, False, True, False, True, True]),
    )
    agent.update(mixed, np.random.default_rng(0))
    assert calls == [2]


def test_ou_wrapper_reverts_toward_greedy():
    # theta pulls the noise back toward zero, so with sigma suppressed the
    # perturbation decays geometrically
    agent, spec = build("optimal-q")
    agent.explore.ou = agent.explore.ou.__class__(
        x=np.array([1.0]), mu=0.0, theta=0.15, sigma=0.0
    )
    rng = np.random.default_rng(0)
    greedy = agent.greedy_batch(np.zeros((1, 1)), rng)[0]
    first = agent.explore(np.zeros(1), rng)
    second = agent.explore(np.zeros(1), rng)
    assert abs(first[0] - np.clip(greedy[0] + 0.85, -2.0, 2.0)) < 1e-12
    assert abs(second[0] - np.clip(greedy[0] + 0.85**2, -2.0, 2.0)) < 1e-12
    assert agent.explore.ou.x[0] == pytest.approx(0.85**2)
