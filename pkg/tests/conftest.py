"""Shared oracles and helpers.

The finite-difference helpers are the independent route against which every
analytic gradient in the library is checked; they never call library code.
"""

import numpy as np
import pytest


def central_diff(f, x, h=1e-5):
    """Central finite differences of a scalar function at a flat vector x."""
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2.0 * h)
    return g


def rel_err(a, b):
    """Max per-coordinate |a-b| / max(1, |a|, |b|).

    The unit floor keeps coordinates with near-zero true gradient (where the
    difference quotient is pure roundoff) from dominating; at the O(1) gradient
    scales exercised here the bound stays a genuine relative one.
    """
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    denom = np.maximum(1.0, np.maximum(np.abs(a), np.abs(b)))
    return float(np.max(np.abs(a - b) / denom)) if a.size else 0.0


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def _gradcheck_topologies():
    return [
        ((3, 5, 2), ("relu", "linear")),
        ((2, 7, 3), ("tanh", "linear")),
        ((4, 4, 4, 2), ("relu", "tanh", "linear")),
        ((1, 6, 1), ("tanh", "tanh")),
        ((5, 3, 3, 2), ("relu", "relu", "linear")),
    ]


def gradcheck_net_params(n_instances=100):
    """Worst rel_err between analytic parameter gradients and central differences."""
    from actor_expert import nn

    worst = 0.0
    menu = _gradcheck_topologies()
    for i in range(n_instances):
        gen = np.random.default_rng(1000 + i)
        topology, acts = menu[i % len(menu)]
        net = nn.net_init(topology, acts, rng=gen)
        x = gen.normal(size=topology[0])
        c = gen.normal(size=topology[-1])
        out, trace = nn.net_forward(net, x)
        grads, _ = nn.net_backward(net, trace, c)
        flat = np.concatenate([a.ravel() for a in net.arrays()])

        def scalar(theta):
            arrays, k = [], 0
            for a in net.arrays():
                arrays.append(theta[k : k + a.size].reshape(a.shape))
                k += a.size
            return float(c @ nn.net_apply(net.with_arrays(arrays), x))

        fd = central_diff(scalar, flat)
        analytic = np.concatenate([a.ravel() for a in grads.arrays()])
        worst = max(worst, rel_err(analytic, fd))
    return worst


def gradcheck_net_inputs(n_instances=100):
    """Worst rel_err between analytic input gradients and central differences."""
    from actor_expert import nn

    worst = 0.0
    menu = _gradcheck_topologies()
    for i in range(n_instances):
        gen = np.random.default_rng(2000 + i)
        topology, acts = menu[i % len(menu)]
        net = nn.net_init(topology, acts, rng=gen)
        x = gen.normal(size=topology[0])
        c = gen.normal(size=topology[-1])
        _, trace = nn.net_forward(net, x)
        _, gin = nn.net_backward(net, trace, c)
        fd = central_diff(lambda v: float(c @ nn.net_apply(net, v)), x)
        worst = max(worst, rel_err(gin, fd))
    return worst


def gradcheck_log_density(n_instances=100):
    """Worst rel_err of the mixture log-density gradient w.r.t. raw head outputs."""
    from actor_expert import distributions as dist

    worst = 0.0
    for i in range(n_instances):
        gen = np.random.default_rng(3000 + i)
        k = int(gen.integers(1, 4))
        d = int(gen.integers(1, 3))
        low = -2.0 * np.ones(d)
        high = 2.0 * np.ones(d)
        raw = gen.normal(scale=1.5, size=k * (1 + 2 * d))
        action = gen.uniform(-2.5, 2.5, size=d)
        mix = dist.to_mixture(raw, k, (low, high))
        analytic = dist.log_density_grad(mix, action)
        fd = central_diff(
            lambda r: dist.log_density(dist.to_mixture(r, k, (low, high)), action),
            raw,
        )
        worst = max(worst, rel_err(analytic, fd))
    return worst
