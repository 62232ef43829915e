"""Top-quantile elite selection and quantile machinery.

empirical_top_quantile keeps the h = ceil(rho * N) best-valued actions; the
threshold it reports is the empirical (1 - rho) quantile of the values.
true_quantile recovers the corresponding distributional quantile as the
minimizer of the expected pinball loss, which is the bridge the verification
suite uses between sampled and idealized behavior.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .nn import ContractError, NumericError

__all__ = [
    "EliteSet",
    "empirical_top_quantile",
    "refine_then_select",
    "pinball_loss",
    "true_quantile",
]


@dataclass(frozen=True)
class EliteSet:
    """The selected high-value actions from one round of candidates.

    actions holds the h selected actions (refined ones when refinement ran);
    indices point back into the candidate list; threshold is the smallest
    selected value.
    """

    actions: np.ndarray  # (h, d)
    indices: np.ndarray  # (h,)
    values: np.ndarray  # (h,)
    threshold: float
    h: int


def _check_rho(rho: float) -> None:
    if not 0.0 < rho <= 1.0:
        raise ContractError(f"rho must lie in (0, 1], got {rho}")


def empirical_top_quantile(actions, values, rho: float) -> EliteSet:
    """Select the ceil(rho * N) largest-valued actions, stably on ties."""
    _check_rho(rho)
    actions = np.asarray(actions, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if actions.ndim != 2:
        raise ContractError("actions must be a (N, d) array")
    if values.shape != (actions.shape[0],):
        raise ContractError("values must align with actions")
    n = actions.shape[0]
    if n == 0:
        raise ContractError("need at least one candidate action")
    if not np.isfinite(values).all():
        raise NumericError("non-finite candidate values")
    h = math.ceil(rho * n)
    order = np.argsort(-values, kind="stable")[:h]
    return EliteSet(
        actions=actions[order].copy(),
        indices=order.copy(),
        values=values[order].copy(),
        threshold=float(values[order[-1]]),
        h=h,
    )


def refine_then_select(
    state,
    actions,
    q_value_fn,
    q_grad_fn,
    rho: float,
    n_steps: int,
    ascent_lr: float,
    box,
) -> EliteSet:
    """Gradient-ascend each candidate on Q, then select the top quantile.

    q_value_fn(state, actions(M, d)) -> (M,); q_grad_fn likewise returns
    dQ/da with shape (M, d). Each ascent step clips back into the action box.
    A candidate whose ascent produces non-finite values falls back to its
    unrefined starting point. n_steps = 0 reduces to empirical_top_quantile.
    """
    _check_rho(rho)
    if n_steps < 0:
        raise ContractError(f"n_steps must be >= 0, got {n_steps}")
    actions = np.asarray(actions, dtype=np.float64)
    if actions.ndim != 2:
        raise ContractError("actions must be a (N, d) array")
    low = np.asarray(box[0], dtype=np.float64)
    high = np.asarray(box[1], dtype=np.float64)
    current = np.clip(actions, low, high)
    start = current.copy()
    for _ in range(n_steps):
        grad = np.asarray(q_grad_fn(state, current), dtype=np.float64)
        if grad.shape != current.shape:
            raise ContractError("q_grad_fn returned a mismatched shape")
        stepped = np.clip(current + ascent_lr * grad, low, high)
        bad = ~np.isfinite(stepped).all(axis=1)
        if bad.any():
            stepped[bad] = start[bad]
        current = stepped
    values = np.asarray(q_value_fn(state, current), dtype=np.float64)
    return empirical_top_quantile(current, values, rho)


def pinball_loss(y, level, rho: float):
    """Pinball loss of value y against threshold level at fraction rho.

    Overestimates of the (1 - rho) quantile cost rho per unit, underestimates
    cost (1 - rho) per unit; the expectation is minimized exactly at the
    quantile. Broadcasts over y and level.
    """
    _check_rho(rho)
    y = np.asarray(y, dtype=np.float64)
    level = np.asarray(level, dtype=np.float64)
    return (y - level) * (1.0 - rho) * (y >= level) + (level - y) * rho * (level >= y)


def true_quantile(sampler, rho: float, n_mc: int = 1_000_000, tol: float = 1e-6) -> float:
    """Monte-Carlo (1 - rho) quantile via pinball-loss minimization.

    sampler(n) must return n i.i.d. draws. The sample-mean pinball loss is
    convex in the threshold, so a ternary search over [min, max] of the draws
    closes in on the minimizer; a degenerate (constant) sample short-circuits.
    """
    _check_rho(rho)
    if n_mc < 1:
        raise ContractError(f"n_mc must be >= 1, got {n_mc}")
    if tol <= 0.0:
        raise ContractError(f"tol must be positive, got {tol}")
    values = np.asarray(sampler(n_mc), dtype=np.float64)
    if values.shape != (n_mc,):
        raise ContractError("sampler must return a flat array of n draws")
    if not np.isfinite(values).all():
        raise NumericError("sampler produced non-finite draws")
    lo = float(values.min())
    hi = float(values.max())
    if hi - lo <= tol:
        return 0.5 * (lo + hi)

    def objective(level: float) -> float:
        return float(pinball_loss(values, level, rho).mean())

    while hi - lo > tol:
        m1 = lo + (hi - lo) / 3.0
        m2 = hi - (hi - lo) / 3.0
        if objective(m1) < objective(m2):
            hi = m2
        else:
            lo = m1
    return 0.5 * (lo + hi)
