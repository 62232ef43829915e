import numpy as np
import pytest

from actor_expert import distributions as dist
from actor_expert.nn import ContractError, NumericError
from conftest import gradcheck_log_density

BOX1 = (np.array([-2.0]), np.array([2.0]))


def mix1(logits, m_pre, s_pre, box=BOX1):
    k = len(logits)
    raw = np.concatenate([np.asarray(logits, float), np.asarray(m_pre, float), np.asarray(s_pre, float)])
    return dist.to_mixture(raw, k, box)


def test_equal_logits_give_uniform_coefficients():
    mix = mix1([0.7, 0.7], [0.0, 0.0], [0.0, 0.0])
    assert np.allclose(mix.coeff, [0.5, 0.5], atol=1e-15)


def test_stdev_saturates_at_exp_of_one():
    mix = mix1([0.0], [0.0], [1e9])
    assert np.allclose(mix.std, np.e, atol=1e-12)
    mix = mix1([0.0], [0.0], [-1e9])
    assert np.allclose(mix.std, np.exp(-1.0), atol=1e-12)


def test_zero_mean_preactivation_gives_box_center():
    mix = mix1([0.0], [0.0], [0.3])
    assert np.allclose(mix.mean, 0.0, atol=1e-15)
    mix = dist.to_mixture(np.zeros(3), 1, (np.array([1.0]), np.array([5.0])))
    assert np.allclose(mix.mean, 3.0, atol=1e-15)


def test_raw_layout_logits_means_stdevs():
    # k=2, d=2: means must come from raw[k : k + k*d] in row-major (comp, dim) order
    box = (np.array([-2.0, -2.0]), np.array([2.0, 2.0]))
    raw = np.array([0.1, 0.2, 0.3, 0.4, 0.5, 0.6, -0.1, -0.2, -0.3, -0.4])
    mix = dist.to_mixture(raw, 2, box)
    want_means = 2.0 * np.tanh(np.array([[0.3, 0.4], [0.5, 0.6]]))
    assert np.allclose(mix.mean, want_means, atol=1e-15)
    want_stds = np.exp(np.tanh(np.array([[-0.1, -0.2], [-0.3, -0.4]])))
    assert np.allclose(mix.std, want_stds, atol=1e-15)


def test_invariants_hold_for_random_raw_heads():
    gen = np.random.default_rng(5)
    for _ in range(200):
        k = int(gen.integers(1, 4))
        d = int(gen.integers(1, 3))
        box = (-2.0 * np.ones(d), 2.0 * np.ones(d))
        raw = gen.normal(scale=3.0, size=dist.head_width(k, d))
        mix = dist.to_mixture(raw, k, box)
        assert abs(mix.coeff.sum() - 1.0) <= 1e-12
        assert np.all(mix.coeff > 0.0)
        assert np.all(mix.mean >= box[0]) and np.all(mix.mean <= box[1])
        assert np.all(mix.std >= np.exp(-1.0)) and np.all(mix.std <= np.e)


def test_to_mixture_rejects_bad_inputs():
    with pytest.raises(ContractError):
        dist.to_mixture(np.zeros(4), 1, BOX1)  # width mismatch
    with pytest.raises(ContractError):
        dist.to_mixture(np.zeros(3), 1, (np.array([2.0]), np.array([-2.0])))


def test_sample_mean_within_clt_bound():
    mix = mix1([0.0], [0.0], [-1e9])  # single component, mu=0, sigma=e^-1
    out = dist.sample(mix, 100_000, np.random.default_rng(42))
    bound = 3.0 * np.exp(-1.0) / np.sqrt(100_000.0)
    assert abs(out.raw_actions.mean()) <= bound
    # sigma = e^-1 on a [-2, 2] box: clipping should essentially never fire
    assert np.array_equal(out.actions, out.raw_actions)


def test_sample_degenerate_coefficients_pick_single_component():
    mix = dist.MixtureParams(
        coeff=np.array([1.0, 0.0]),
        mean=np.array([[1.0], [-1.0]]),
        std=np.array([[0.5], [0.5]]),
        raw=np.zeros(6),
        low=BOX1[0],
        high=BOX1[1],
    )
    out = dist.sample(mix, 1000, np.random.default_rng(3))
    assert np.all(out.components == 0)


def test_sample_component_counts_match_coefficients():
    mix = mix1([np.log(0.25), np.log(0.75)], [-1.0, 1.0], [-5.0, -5.0])
    out = dist.sample(mix, 40_000, np.random.default_rng(9))
    frac = (out.components == 1).mean()
    assert abs(frac - 0.75) < 4.0 * np.sqrt(0.25 * 0.75 / 40_000.0)


def test_sample_deterministic_per_seed():
    mix = mix1([0.3, -0.3], [0.5, -0.5], [0.0, 0.0])
    a = dist.sample(mix, 64, np.random.default_rng(11))
    b = dist.sample(mix, 64, np.random.default_rng(11))
    assert np.array_equal(a.raw_actions, b.raw_actions)
    assert np.array_equal(a.components, b.components)


def test_sample_clips_to_box_keeps_raw_draw():
    mix = dist.MixtureParams(
        coeff=np.array([1.0]),
        mean=np.array([[1.9]]),
        std=np.array([[np.e]]),
        raw=np.zeros(3),
        low=BOX1[0],
        high=BOX1[1],
    )
    out = dist.sample(mix, 2000, np.random.default_rng(1))
    assert np.all(out.actions <= 2.0) and np.all(out.actions >= -2.0)
    assert np.any(out.raw_actions > 2.0)  # wide sigma at the edge must overflow sometimes
    over = out.raw_actions[:, 0] > 2.0
    assert np.all(out.actions[over, 0] == 2.0)


def test_log_density_standard_normal_peak():
    box = (np.array([-5.0]), np.array([5.0]))
    raw = np.array([0.0, 0.0, 0.0])  # mu=0 (box center), sigma=exp(tanh(0))=1
    mix = dist.to_mixture(raw, 1, box)
    assert np.isclose(dist.log_density(mix, np.zeros(1)), -0.5 * np.log(2.0 * np.pi), atol=1e-12)


def test_log_density_duplicate_components_collapse():
    one = mix1([0.4], [0.3], [-0.2])
    two = mix1([0.4, 0.4], [0.3, 0.3], [-0.2, -0.2])
    for a in np.linspace(-2.5, 2.5, 11):
        assert np.isclose(dist.log_density(one, [a]), dist.log_density(two, [a]), atol=1e-12)


def test_log_density_matches_direct_sum_oracle():
    # oracle: sum of component normal densities computed without logsumexp
    gen = np.random.default_rng(31)
    for _ in range(50):
        k = int(gen.integers(1, 4))
        d = int(gen.integers(1, 3))
        box = (-2.0 * np.ones(d), 2.0 * np.ones(d))
        raw = gen.normal(scale=1.5, size=dist.head_width(k, d))
        mix = dist.to_mixture(raw, k, box)
        a = gen.uniform(-3, 3, size=d)
        dens = 0.0
        for i in range(k):
            per_dim = np.exp(-0.5 * ((a - mix.mean[i]) / mix.std[i]) ** 2) / (
                np.sqrt(2.0 * np.pi) * mix.std[i]
            )
            dens += mix.coeff[i] * np.prod(per_dim)
        assert np.isclose(dist.log_density(mix, a), np.log(dens), atol=1e-10)


def test_density_integrates_to_one_1d():
    gen = np.random.default_rng(17)
    grid = np.linspace(-15.0, 15.0, 4001)
    for _ in range(10):
        k = int(gen.integers(1, 4))
        raw = gen.normal(scale=2.0, size=dist.head_width(k, 1))
        mix = dist.to_mixture(raw, k, BOX1)
        vals = np.exp([dist.log_density(mix, [g]) for g in grid])
        assert abs(np.trapezoid(vals, grid) - 1.0) < 1e-3


def test_log_density_grad_zero_mean_grad_at_component_mean():
    mix = mix1([0.0], [0.7], [0.1])
    g = dist.log_density_grad(mix, mix.mean[0])
    assert np.allclose(g[0], 0.0, atol=1e-12)  # single-component logit grad is 0
    assert np.allclose(g[1], 0.0, atol=1e-12)  # mean grad vanishes at the mean


def test_log_density_grad_far_component_is_inert():
    mix = mix1([0.0, 0.0], [-0.999, 0.999], [-1e9, -1e9])
    g = dist.log_density_grad(mix, np.array([2.0 * np.tanh(0.999)]))
    # responsibilities collapse onto component 2; component 1 terms vanish
    assert abs(g[2]) < 1e-10  # its mean pre-activation grad
    assert abs(g[4]) < 1e-10  # its stdev pre-activation grad


def test_log_density_gradcheck_100_instances():
    assert gradcheck_log_density(100) < 1e-4


def test_predominant_mode_picks_highest_coefficient():
    mix = mix1([np.log(0.3), np.log(0.7)], [-0.5, 0.5], [0.0, 0.0])
    assert np.allclose(dist.predominant_mode(mix), mix.mean[1], atol=1e-15)


def test_predominant_mode_tie_goes_to_lowest_index():
    mix = mix1([0.2, 0.2], [-0.5, 0.5], [0.0, 0.0])
    assert np.allclose(dist.predominant_mode(mix), mix.mean[0], atol=1e-15)


def test_predominant_mode_single_component():
    mix = mix1([1.3], [0.4], [0.0])
    assert np.allclose(dist.predominant_mode(mix), mix.mean[0], atol=1e-15)


def test_predominant_mode_permutation_invariant():
    gen = np.random.default_rng(23)
    for _ in range(50):
        logits = gen.normal(size=3)
        m = gen.normal(size=3)
        s = gen.normal(size=3)
        mix = mix1(logits, m, s)
        perm = gen.permutation(3)
        pmix = mix1(logits[perm], m[perm], s[perm])
        assert np.allclose(dist.predominant_mode(mix), dist.predominant_mode(pmix), atol=1e-15)


def test_batched_core_matches_single_state_api():
    gen = np.random.default_rng(41)
    k, d = 2, 1
    raws = gen.normal(size=(8, dist.head_width(k, d)))
    coeff, mean, std = dist.raw_to_params(raws, k, BOX1[0], BOX1[1])
    a = gen.uniform(-2, 2, size=(8, d))
    batched = dist.log_density_core(coeff, mean, std, a)
    gbatch = dist.log_density_grad_core(raws, k, BOX1[0], BOX1[1], a)
    for i in range(8):
        mix = dist.to_mixture(raws[i], k, BOX1)
        assert np.isclose(batched[i], dist.log_density(mix, a[i]), atol=1e-12)
        assert np.allclose(gbatch[i], dist.log_density_grad(mix, a[i]), atol=1e-12)


def test_validate_flags_zero_coefficient():
    bad = dist.MixtureParams(
        coeff=np.array([1.0, 0.0]),
        mean=np.array([[0.0], [0.0]]),
        std=np.array([[1.0], [1.0]]),
        raw=np.zeros(6),
        low=BOX1[0],
        high=BOX1[1],
    )
    with pytest.raises(NumericError):
        bad.validate()


def test_grad_core_broadcasts_candidates_per_state():
    # one raw head vector per state against N candidate actions per state
    gen = np.random.default_rng(77)
    k, d = 2, 2
    box = (np.array([-2.0, -1.0]), np.array([2.0, 1.0]))
    raws = gen.normal(size=(3, dist.head_width(k, d)))
    acts = gen.uniform(-2, 2, size=(3, 5, d))
    g = dist.log_density_grad_core(raws[:, None, :], k, box[0], box[1], acts)
    assert g.shape == (3, 5, dist.head_width(k, d))
    for i in range(3):
        mix = dist.to_mixture(raws[i], k, box)
        for j in range(5):
            want = dist.log_density_grad(mix, acts[i, j])
            assert np.allclose(g[i, j], want, atol=1e-12)
