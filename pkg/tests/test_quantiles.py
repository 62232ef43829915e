import numpy as np
import pytest

from actor_expert import quantiles as qt
from actor_expert.nn import ContractError, NumericError


def col(values):
    return np.asarray(values, dtype=np.float64)[:, None]


def test_top_quantile_basic_example():
    values = np.array([1.0, 2.0, 3.0, 4.0, 5.0])
    elite = qt.empirical_top_quantile(col(values), values, rho=0.4)
    assert elite.h == 2
    assert sorted(elite.values.tolist()) == [4.0, 5.0]
    assert elite.threshold == 4.0


def test_top_quantile_rho_one_keeps_everything():
    values = np.array([3.0, -1.0, 2.0])
    elite = qt.empirical_top_quantile(col(values), values, rho=1.0)
    assert elite.h == 3
    assert elite.threshold == -1.0
    assert set(elite.indices.tolist()) == {0, 1, 2}


def test_top_quantile_tiny_rho_keeps_one():
    values = np.array([3.0, 9.0, 2.0])
    elite = qt.empirical_top_quantile(col(values), values, rho=1e-9)
    assert elite.h == 1
    assert elite.indices.tolist() == [1]


def test_top_quantile_stable_on_ties():
    values = np.array([2.0, 2.0, 2.0, 1.0])
    elite = qt.empirical_top_quantile(col(values), values, rho=0.5)
    assert elite.indices.tolist() == [0, 1]  # earliest duplicates win


def test_top_quantile_matches_brute_force_sort():
    gen = np.random.default_rng(77)
    for _ in range(1000):
        n = int(gen.integers(1, 40))
        values = np.round(gen.normal(size=n), 2)  # rounding forces duplicates
        rho = float(gen.uniform(0.01, 1.0))
        elite = qt.empirical_top_quantile(col(values), values, rho)
        h = int(np.ceil(rho * n))
        ranked = np.sort(values)[::-1]
        assert elite.h == h >= 1
        assert elite.threshold == ranked[h - 1]
        assert np.allclose(np.sort(elite.values), np.sort(ranked[:h]))
        discarded = np.delete(values, elite.indices)
        if discarded.size:
            assert elite.values.min() >= discarded.max()


def test_top_quantile_rejects_bad_input():
    with pytest.raises(ContractError):
        qt.empirical_top_quantile(col([1.0]), np.array([1.0]), rho=0.0)
    with pytest.raises(ContractError):
        qt.empirical_top_quantile(np.zeros((0, 1)), np.zeros(0), rho=0.5)
    with pytest.raises(NumericError):
        qt.empirical_top_quantile(col([1.0, 2.0]), np.array([1.0, np.nan]), rho=0.5)


BOX = (np.array([-2.0]), np.array([2.0]))


def quad_value(_state, actions):
    return -((actions[:, 0] - 0.7) ** 2)


def quad_grad(_state, actions):
    return -2.0 * (actions - 0.7)


def test_refine_zero_steps_equals_plain_selection():
    gen = np.random.default_rng(5)
    actions = gen.uniform(-2, 2, size=(20, 1))
    values = quad_value(None, actions)
    a = qt.refine_then_select(None, actions, quad_value, quad_grad, 0.3, 0, 0.04, BOX)
    b = qt.empirical_top_quantile(actions, values, 0.3)
    assert np.array_equal(a.actions, b.actions)
    assert np.array_equal(a.indices, b.indices)
    assert a.threshold == b.threshold


def test_refine_moves_actions_toward_maximum():
    gen = np.random.default_rng(6)
    actions = gen.uniform(-2, 2, size=(30, 1))
    elite = qt.refine_then_select(None, actions, quad_value, quad_grad, 1.0, 1, 0.01, BOX)
    before = np.abs(actions[elite.indices, 0] - 0.7)
    after = np.abs(elite.actions[:, 0] - 0.7)
    moved = before > 1e-12
    assert np.all(after[moved] < before[moved])


def test_refine_many_steps_converges_near_argmax():
    gen = np.random.default_rng(7)
    actions = gen.uniform(-2, 2, size=(10, 1))
    elite = qt.refine_then_select(None, actions, quad_value, quad_grad, 1.0, 200, 0.05, BOX)
    assert np.all(np.abs(elite.actions - 0.7) < 0.01)


def test_refine_stays_inside_box():
    actions = np.array([[1.9], [-1.9]])

    def edge_grad(_state, acts):
        return np.full_like(acts, 100.0)

    elite = qt.refine_then_select(None, actions, quad_value, edge_grad, 1.0, 5, 1.0, BOX)
    assert np.all(elite.actions <= 2.0)


def test_refine_falls_back_on_non_finite_step():
    actions = np.array([[0.0], [1.0]])

    def nan_grad(_state, acts):
        g = np.zeros_like(acts)
        g[acts[:, 0] > 0.5] = np.nan
        return g

    elite = qt.refine_then_select(None, actions, quad_value, nan_grad, 1.0, 3, 0.1, BOX)
    row = np.where(elite.indices == 1)[0][0]
    assert elite.actions[row, 0] == 1.0  # reverted to the unrefined start


def test_pinball_loss_examples():
    assert qt.pinball_loss(1.0, 1.0, 0.3) == 0.0
    assert np.isclose(qt.pinball_loss(2.0, 1.0, 0.2), 0.8)
    assert np.isclose(qt.pinball_loss(0.0, 1.0, 0.2), 0.2)


def test_pinball_loss_is_midpoint_convex_pointwise():
    gen = np.random.default_rng(8)
    for _ in range(2000):
        y, l1, l2 = gen.uniform(-5, 5, size=3)
        rho = float(gen.uniform(0.05, 0.95))
        mid = qt.pinball_loss(y, 0.5 * (l1 + l2), rho)
        avg = 0.5 * qt.pinball_loss(y, l1, rho) + 0.5 * qt.pinball_loss(y, l2, rho)
        assert mid <= avg + 1e-12


def test_pinball_sample_mean_lipschitz_bound():
    gen = np.random.default_rng(9)
    values = gen.normal(size=512)
    for rho in (0.2, 0.5, 0.8):
        for _ in range(500):
            l1, l2 = gen.uniform(-4, 4, size=2)
            f1 = qt.pinball_loss(values, l1, rho).mean()
            f2 = qt.pinball_loss(values, l2, rho).mean()
            assert abs(f1 - f2) <= (rho + 2.0) * abs(l1 - l2) + 1e-12


def test_true_quantile_uniform():
    gen = np.random.default_rng(10)
    got = qt.true_quantile(lambda n: gen.uniform(0, 1, size=n), rho=0.2, n_mc=100_000)
    assert abs(got - 0.8) < 0.02


def test_true_quantile_standard_normal_median():
    gen = np.random.default_rng(11)
    got = qt.true_quantile(lambda n: gen.standard_normal(n), rho=0.5, n_mc=100_000)
    assert abs(got) < 0.02


def test_true_quantile_degenerate_distribution():
    assert qt.true_quantile(lambda n: np.full(n, 3.25), rho=0.4, n_mc=1000) == 3.25


def test_true_quantile_matches_sample_quantile():
    gen = np.random.default_rng(12)
    draws = gen.exponential(size=50_000)
    got = qt.true_quantile(lambda n: draws[:n], rho=0.3, n_mc=50_000)
    assert abs(got - np.quantile(draws, 0.7)) < 1e-3


def test_empirical_threshold_approaches_true_quantile():
    # small-scale version of the convergence study in the verification suite
    gen = np.random.default_rng(13)
    true = 0.8
    errs = []
    for n in (100, 10_000):
        trial = [
            abs(
                qt.empirical_top_quantile(
                    col(draws := gen.uniform(0, 1, size=n)), draws, 0.2
                ).threshold
                - true
            )
            for _ in range(30)
        ]
        errs.append(np.mean(trial))
    assert errs[1] < errs[0]
