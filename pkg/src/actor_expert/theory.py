"""Desk-scale checks of the stochastic-approximation claims behind CCEM.

Five suites, each a pure function returning a SuiteReport: sample-quantile
convergence, pinball-objective geometry (Lipschitz bound and convexity),
perturbed-minimizer convergence, Monte-Carlo concentration decay, and the
tracking alignment between averaged stochastic actor updates and their
mean-field direction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import actor as act
from . import distributions as dist
from .envs import bimodal_reward, make_env
from .nn import ContractError, concat_flat
from .quantiles import empirical_top_quantile, pinball_loss, true_quantile

__all__ = [
    "SuiteReport",
    "check_quantile_convergence",
    "check_pinball_geometry",
    "check_minimizer_convergence",
    "check_concentration",
    "check_tracking",
    "SUITES",
    "run_suite",
    "run_all",
]


@dataclass(frozen=True)
class SuiteReport:
    name: str
    passed: bool
    detail: str
    data: dict | None = None


def _report(name: str, passed: bool, detail: str, data: dict | None = None) -> SuiteReport:
    return SuiteReport(name=name, passed=bool(passed), detail=detail, data=data)


# -- sample-quantile convergence ----------------------------------------------

def check_quantile_convergence(
    rho: float = 0.2,
    ns=(100, 1000, 10000),
    trials: int = 100,
    threshold: float = 0.02,
    q_fn=bimodal_reward,
    rng=None,
) -> SuiteReport:
    """Empirical top-quantile error against the pinball oracle, per sample size.

    Actions come from a fixed unit Gaussian and are scored by q_fn (the
    two-peak reward by default). Passes when the mean error strictly
    decreases across ns and the final mean error is below threshold.
    """
    if list(ns) != sorted(set(ns)):
        raise ContractError("ns must be strictly increasing")
    rng = np.random.default_rng(0) if rng is None else rng
    f_star = true_quantile(lambda m: np.asarray(q_fn(rng.standard_normal(m)), dtype=np.float64), rho)
    errors = np.zeros((trials, len(ns)))
    for i in range(trials):
        for j, n in enumerate(ns):
            actions = rng.standard_normal((n, 1))
            elite = empirical_top_quantile(actions, q_fn(actions[:, 0]), rho)
            errors[i, j] = abs(elite.threshold - f_star)
    means = errors.mean(axis=0)
    decreasing = bool(np.all(np.diff(means) < 0.0))
    small = bool(means[-1] < threshold)
    pairwise = float(np.mean(np.all(np.diff(errors, axis=1) < 0.0, axis=1)))
    detail = (
        f"mean errors {np.array2string(means, precision=4)} over N={tuple(ns)}, "
        f"target quantile {f_star:.4f}, per-trial monotone fraction {pairwise:.2f}"
    )
    data = {"ns": tuple(ns), "means": means, "f_star": f_star, "pairwise": pairwise}
    return _report("quantile", decreasing and small, detail, data)


# -- pinball geometry ----------------------------------------------------------

def check_pinball_geometry(
    rho: float,
    pairs: int = 10_000,
    sample_size: int = 64,
    tol: float = 1e-12,
    rng=None,
) -> SuiteReport:
    """Lipschitz bound (rho + 2) and midpoint convexity of the sample objective.

    Each pair draws a fresh Gaussian sample and two thresholds; the mean
    pinball loss over the sample is the objective. Passes on zero violations
    of either property.
    """
    rng = np.random.default_rng(1) if rng is None else rng
    lipschitz_bad = 0
    convex_bad = 0
    for _ in range(pairs):
        y = rng.standard_normal(sample_size)
        l1, l2 = rng.uniform(-3.0, 3.0, size=2)

        def objective(level):
            return float(pinball_loss(y, level, rho).mean())

        o1, o2 = objective(l1), objective(l2)
        if abs(o1 - o2) > (rho + 2.0) * abs(l1 - l2):
            lipschitz_bad += 1
        if objective(0.5 * (l1 + l2)) > 0.5 * (o1 + o2) + tol:
            convex_bad += 1
    detail = (
        f"rho={rho}: {lipschitz_bad} Lipschitz and {convex_bad} convexity "
        f"violations over {pairs} pairs"
    )
    data = {"rho": rho, "lipschitz_violations": lipschitz_bad, "convexity_violations": convex_bad}
    return _report("pinball", lipschitz_bad == 0 and convex_bad == 0, detail, data)


def _pinball_suite(rng=None) -> SuiteReport:
    rng = np.random.default_rng(1) if rng is None else rng
    parts = [check_pinball_geometry(rho, rng=rng) for rho in (0.2, 0.5, 0.8)]
    return _report(
        "pinball", all(p.passed for p in parts), "; ".join(p.detail for p in parts)
    )


# -- perturbed-minimizer convergence -------------------------------------------

def _argmin_scalar(f, lo: float, hi: float, tol: float = 1e-10) -> float:
    """Ternary search over a unimodal scalar function."""
    while hi - lo > tol:
        m1 = lo + (hi - lo) / 3.0
        m2 = hi - (hi - lo) / 3.0
        if f(m1) < f(m2):
            hi = m2
        else:
            lo = m1
    return 0.5 * (lo + hi)


def check_minimizer_convergence(ns=None, gap_limit: float = 1e-3) -> SuiteReport:
    """Minimizers of shrinking perturbations of x^2 must approach its minimizer.

    Three families: a kink bump (1/n)|x - 1| added, no perturbation at all,
    and a mean shift to (x - 1/n)^2. Passes when each family's gap sequence
    is non-increasing and ends below gap_limit.
    """
    ns = [2**i for i in range(11)] if ns is None else list(ns)
    families = {
        "kink": lambda n: (lambda x: x * x + (1.0 / n) * abs(x - 1.0)),
        "fixed": lambda n: (lambda x: x * x),
        "shift": lambda n: (lambda x: (x - 1.0 / n) ** 2),
    }
    target = 0.0
    passed = True
    details = []
    data = {}
    for name, family in families.items():
        gaps = np.array(
            [abs(_argmin_scalar(family(n), -5.0, 5.0) - target) for n in ns]
        )
        ok = bool(np.all(np.diff(gaps) <= 1e-12) and gaps[-1] < gap_limit)
        passed = passed and ok
        details.append(f"{name}: final gap {gaps[-1]:.2e}")
        data[name] = gaps
    return _report("minimizer", passed, "; ".join(details), data)


# -- concentration decay ---------------------------------------------------------

def check_concentration(
    ns=(50, 100, 200, 400),
    eps: float = 0.1,
    trials: int = 10_000,
    p: float = 0.5,
    rng=None,
) -> SuiteReport:
    """Deviation frequency of a Bernoulli mean must fall as N doubles.

    Passes when the frequency never increases, drops overall, and the fitted
    log-frequency slope across the table is negative.
    """
    rng = np.random.default_rng(2) if rng is None else rng
    freqs = np.array(
        [
            float(np.mean(np.abs(rng.binomial(1, p, size=(trials, n)).mean(axis=1) - p) >= eps))
            for n in ns
        ]
    )
    floored = np.log(np.maximum(freqs, 1.0 / trials))
    slope = float(np.polyfit(np.arange(len(ns)), floored, 1)[0])
    ok = bool(np.all(np.diff(freqs) <= 0.0) and freqs[-1] < freqs[0] and slope < 0.0)
    detail = f"frequencies {np.array2string(freqs, precision=4)}, log slope {slope:.2f}"
    return _report("concentration", ok, detail, {"ns": tuple(ns), "freqs": freqs, "slope": slope})


# -- tracking ---------------------------------------------------------------------

def _mean_field_direction(fast, slow_raw, q_fn, f_star: float, n_mc: int, rng, obs):
    """Monte-Carlo estimate of the expected update at fast, sampling from slow."""
    k, low, high = fast.k, fast.low, fast.high
    coeff, mean, std = dist.raw_to_params(slow_raw, k, low, high)
    clipped, raws, _ = dist.sample_core(coeff[None, :], mean[None, :], std[None, :], n_mc, rng, low, high)
    values = q_fn(clipped)[0]
    keep = (values >= f_star).astype(np.float64)
    raw_fast, traces = act.policy_raw(fast, obs, keep_traces=True)
    g_raw = dist.log_density_grad_core(raw_fast[:, None, :], k, low, high, raws)
    gout = (keep[None, :, None] * g_raw).sum(axis=1) / n_mc
    return concat_flat(act.policy_backward(fast, traces, gout))


def check_tracking(
    n_probes: int = 10,
    updates: int = 1000,
    n_samples: int = 30,
    rho: float = 0.2,
    n_mc: int = 100_000,
    probe_scale: float = 0.1,
    cosine_floor: float = 0.9,
    need: int = 9,
    rng=None,
) -> SuiteReport:
    """Averaged stochastic updates must align with their mean-field direction.

    The value function and the sampling policy stay frozen; each probe
    perturbs the adjusted policy, averages many one-step update directions
    (before projection), and compares against a large-sample Monte-Carlo
    estimate of the expected update at that point. Probes where the field
    vanishes are excluded as degenerate.
    """
    rng = np.random.default_rng(3) if rng is None else rng
    env = make_env("bimodal")
    box = (env.spec.action_low, env.spec.action_high)
    obs = np.zeros((1, 1))

    def q_batch(actions):
        return bimodal_reward(actions[..., 0])

    slow = act.policy_init(1, box, k=2, width=50, rng=rng)
    slow_raw = act.policy_raw(slow, obs)[0]
    mix = dist.to_mixture(slow_raw, slow.k, box)

    def sampler(m):
        return bimodal_reward(dist.sample(mix, m, rng).actions[:, 0])

    f_star = true_quantile(sampler, rho)

    cosines = []
    degenerate = 0
    for _ in range(n_probes):
        fast = slow.with_arrays(
            [a + probe_scale * rng.standard_normal(a.shape) for a in slow.arrays()]
        )
        probe = act.ActorState(fast=fast, slow=slow, w_max=1e12, t=0)
        total = None
        for _u in range(updates):
            direction, _info = act.ccem_direction(
                probe, obs, lambda o, a: q_batch(a), n_samples, rho, rng
            )
            flat = concat_flat(direction)
            total = flat if total is None else total + flat
        avg = total / updates
        field = _mean_field_direction(fast, slow_raw, q_batch, f_star, n_mc, rng, obs)
        norm = float(np.linalg.norm(field) * np.linalg.norm(avg))
        if norm == 0.0:
            degenerate += 1
            continue
        cosines.append(float(np.dot(avg, field) / norm))
    hits = sum(c >= cosine_floor for c in cosines)
    detail = (
        f"cosines {np.array2string(np.array(cosines), precision=3)}, "
        f"{hits}/{len(cosines)} above {cosine_floor}, {degenerate} degenerate"
    )
    data = {"cosines": np.array(cosines), "hits": hits, "degenerate": degenerate}
    return _report("tracking", hits >= need, detail, data)


SUITES = {
    "quantile": check_quantile_convergence,
    "pinball": _pinball_suite,
    "minimizer": lambda rng=None: check_minimizer_convergence(),
    "concentration": check_concentration,
    "tracking": check_tracking,
}


def run_suite(name: str) -> SuiteReport:
    if name not in SUITES:
        raise ContractError(f"unknown suite {name!r}; choose from {tuple(SUITES)}")
    return SUITES[name]()


def run_all() -> list[SuiteReport]:
    return [run_suite(name) for name in SUITES]
