"""Slow, independent verifiers for the fast dual solver.

Two routes:

  * best_response certifies candidate strategic equilibria directly from
    the payoff definition pi_i = S_i(q_i) - p*q_i, by globally searching
    one prosumer's bid interval with a dense grid refined by golden
    section. No derivatives, no concavity assumptions.
  * brute_force_program certifies the welfare programs for 2- and
    3-prosumer markets by exhaustive grid search over the balanced
    capacity-bounded simplex slice, with zoom passes to sharpen the
    returned grid point.

Both are deliberately independent of the marginal-inversion machinery in
the solver module.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, TooLarge, UnboundedPayoff
from .market import Allocation, MarketConfig, modified_utility
from .solver import MODE_TRUE, MODES

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class BestResponseResult:
    """Outcome of one prosumer's global best-response search.

    gap = payoff_star - payoff_at_candidate; at a strategic equilibrium it
    is nonnegative and vanishes up to search precision.
    """

    prosumer_index: int
    theta_star: float
    payoff_star: float
    payoff_at_candidate: float
    gap: float


def strategic_payoff(i: int, thetas, config: MarketConfig) -> float:
    """Payoff of prosumer i under the full bid profile: S_i(q_i) - p*q_i.

    Defined only for profiles with a strictly positive clearing price
    (sum of bids < 0); at zero price the payoff is undefined.
    """
    t = np.asarray(thetas, dtype=float)
    if t.shape != (config.n_prosumers,):
        raise DomainError(
            f"expected {config.n_prosumers} bids, got shape {t.shape}")
    total = float(t.sum())
    if total >= 0:
        raise DomainError(
            f"payoff needs a positive price, so bid sum < 0; got {total}")
    rival_sum = total - float(t[i])
    return float(_payoff_curve(i, np.array([t[i]]), rival_sum, config)[0])


def _payoff_curve(i, theta_i, rival_sum, config):
    """Vectorized payoff of prosumer i over an array of own bids."""
    spec = config.utilities()[i]
    price = -(theta_i + rival_sum) / (config.n_prosumers * config.d_min)
    q = config.d_min + theta_i / price
    return spec.value(q) - price * q


def _capacity_lower_bound(rival_sum: float, config: MarketConfig) -> float:
    """Smallest own bid honoring the capacity constraint q_i >= -s_max.

    The bound theta_i >= p * (-s_max - d_min) moves with the price, which
    moves with theta_i; iterate to the fixed point. The map is a
    contraction whenever s_max < (N-1)*d_min; otherwise fall back to a
    wide static bound.
    """
    n, d, s = config.n_prosumers, config.d_min, config.s_max
    c = (s + d) / (n * d)
    if c >= 1.0:
        return -1e6 * max(1.0, abs(rival_sum))
    x = 0.0
    for _ in range(100):
        x_new = (x + rival_sum) * c
        if abs(x_new - x) <= 1e-15 * max(1.0, abs(x_new)):
            x = x_new
            break
        x = x_new
    return x


def _golden_max(f, lo: float, hi: float, tol: float) -> tuple[float, float]:
    """Maximize a scalar function on [lo, hi] by golden-section search."""
    a, b = lo, hi
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = f(d)
    x = 0.5 * (a + b)
    return x, f(x)


def best_response(i: int, thetas, config: MarketConfig,
                  grid_points: int = 200_000) -> BestResponseResult:
    """Globally maximize prosumer i's payoff over its own bid.

    thetas is the full candidate profile; entry i is the candidate bid the
    result's gap is measured against. The search interval is
    [theta_lb, -(sum of rival bids) - eps_price], with theta_lb the
    capacity bound at the interval's own price fixed point. A dense grid
    locates the global basin; golden section sharpens it.
    """
    t = np.asarray(thetas, dtype=float)
    if t.shape != (config.n_prosumers,):
        raise DomainError(
            f"expected {config.n_prosumers} bids, got shape {t.shape}")
    rival_sum = float(t.sum() - t[i])
    if rival_sum >= 0:
        raise UnboundedPayoff(
            f"rival bids sum to {rival_sum} >= 0; the payoff has no maximum")
    theta_hi = -rival_sum - config.eps_price
    theta_lb = _capacity_lower_bound(rival_sum, config)
    if theta_lb >= theta_hi:
        raise DomainError("empty bid interval; eps_price too large")

    grid_points = max(int(grid_points), 3)
    grid = np.linspace(theta_lb, theta_hi, grid_points)
    payoffs = _payoff_curve(i, grid, rival_sum, config)
    k = int(np.argmax(payoffs))
    lo = grid[max(k - 1, 0)]
    hi = grid[min(k + 1, grid_points - 1)]

    def f(x):
        return float(_payoff_curve(i, np.array([x]), rival_sum, config)[0])

    span = theta_hi - theta_lb
    theta_star, payoff_star = _golden_max(f, lo, hi, tol=1e-12 * max(1.0, span))
    # the endpoints of the refined bracket can beat its midpoint
    for x, px in ((grid[k], float(payoffs[k])),):
        if px > payoff_star:
            theta_star, payoff_star = x, px

    payoff_at_candidate = strategic_payoff(i, t, config)
    return BestResponseResult(
        prosumer_index=i,
        theta_star=float(theta_star),
        payoff_star=float(payoff_star),
        payoff_at_candidate=payoff_at_candidate,
        gap=float(payoff_star - payoff_at_candidate),
    )


def _objective(config: MarketConfig, mode: str):
    specs = config.utilities()
    n = config.n_prosumers
    if mode == MODE_TRUE:
        return lambda i, q: specs[i].value(q)
    return lambda i, q: modified_utility(specs[i], n, q)


def brute_force_program(config: MarketConfig, mode: str,
                        grid_points: int = 1001,
                        zoom_passes: int = 4) -> Allocation:
    """Exhaustive grid maximization of a welfare program for N in {2, 3}.

    Scans the balanced slice {sum q = 0, -s_max <= q_i <= (N-1)*s_max} with
    grid_points per free dimension, then re-grids a shrinking window around
    the incumbent for zoom_passes rounds so the returned grid point is
    sharp enough to certify the dual solver. The zoom assumes the incumbent
    basin contains the optimum, which holds on the concave regime this
    oracle is specified for.
    """
    if mode not in MODES:
        raise DomainError(f"mode must be one of {MODES}, got {mode!r}")
    n = config.n_prosumers
    if n > 3:
        raise TooLarge(f"brute force supports at most 3 prosumers, got {n}")
    if grid_points < 1000:
        raise DomainError(f"need at least 1000 grid points, got {grid_points}")
    s = config.s_max
    f = _objective(config, mode)
    lo_full, hi_full = -s, (n - 1) * s

    if n == 2:
        # q2 = -q1 forces q1 into [-s, s]
        lo, hi = -s, s
        best_q1 = None
        for _ in range(zoom_passes + 1):
            grid = np.linspace(lo, hi, grid_points)
            vals = f(0, grid) + f(1, -grid)
            k = int(np.argmax(vals))
            best_q1 = float(grid[k])
            cell = (hi - lo) / (grid_points - 1)
            lo = max(best_q1 - 2 * cell, -s)
            hi = min(best_q1 + 2 * cell, s)
        quantities = np.array([best_q1, -best_q1])
    else:
        lo1, hi1 = lo_full, hi_full
        lo2, hi2 = lo_full, hi_full
        best = None
        for _ in range(zoom_passes + 1):
            g1 = np.linspace(lo1, hi1, grid_points)
            g2 = np.linspace(lo2, hi2, grid_points)
            q1, q2 = np.meshgrid(g1, g2, indexing="ij")
            q3 = -q1 - q2
            feasible = (q3 >= lo_full) & (q3 <= hi_full)
            vals = f(0, q1) + f(1, q2) + f(2, q3)
            vals = np.where(feasible, vals, -np.inf)
            k = np.unravel_index(int(np.argmax(vals)), vals.shape)
            best = (float(g1[k[0]]), float(g2[k[1]]))
            c1 = (hi1 - lo1) / (grid_points - 1)
            c2 = (hi2 - lo2) / (grid_points - 1)
            lo1, hi1 = max(best[0] - 2 * c1, lo_full), min(best[0] + 2 * c1, hi_full)
            lo2, hi2 = max(best[1] - 2 * c2, lo_full), min(best[1] + 2 * c2, hi_full)
        quantities = np.array([best[0], best[1], -best[0] - best[1]])

    return _certify(config, mode, quantities)


def _certify(config: MarketConfig, mode: str, quantities) -> Allocation:
    """Wrap a grid optimum as an Allocation with an estimated dual price."""
    from .market import modified_utility_deriv  # local to avoid import cycle noise
    specs = config.utilities()
    n = config.n_prosumers

    def marginal(i, q):
        if mode == MODE_TRUE:
            return float(specs[i].deriv(q))
        return float(modified_utility_deriv(specs[i], n, q))

    q = np.asarray(quantities, dtype=float)
    at_capacity = np.abs(q + config.s_max) <= max(config.tol_root, 1e-7)
    interior = [marginal(i, q[i]) for i in range(n) if not at_capacity[i]]
    dual_price = float(np.median(interior)) if interior else max(
        marginal(i, q[i]) for i in range(n))
    residuals = np.array([
        max(0.0, marginal(i, q[i]) - dual_price) if at_capacity[i]
        else abs(marginal(i, q[i]) - dual_price)
        for i in range(n)
    ])
    return Allocation(q, dual_price, residuals, at_capacity)
