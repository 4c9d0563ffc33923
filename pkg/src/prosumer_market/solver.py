"""Dual-decomposition solver for the market's two welfare programs.

Both programs maximize a separable sum of per-prosumer curves over the
balanced, capacity-bounded set {q : sum q_i = 0, q_i >= -s_max}:

  * "true" mode uses each prosumer's actual curve S_i and yields the
    competitive (price-taking) equilibrium allocation;
  * "modified" mode uses the strategically shaded curve S_mod,i and yields
    the Nash (price-anticipating) equilibrium allocation.

The balance constraint is priced by a single multiplier eta > 0. For each
eta every prosumer independently maximizes its Lagrangian S(q) - eta*q over
[-s_max, q_upper]; the solver bisects eta until aggregate excess demand
sum_i q_i(eta) crosses zero. On the concave branch the per-prosumer
maximizer is the marginal inversion marginal(q) = eta (capacity-clipped);
where the modified curve loses concavity the per-prosumer step enumerates
stationary points and endpoints, takes the Lagrangian-best candidate, and
flags the prosumer. Excess demand can then jump, in which case the solver
returns the eta minimizing |excess| and records the residual.

Recovered bids theta_i = eta*(q_i - d_min) reproduce eta as the clearing
price of the recovered profile.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from .errors import BracketFailure, DomainError
from .market import (
    Allocation,
    MarketConfig,
    UtilitySpec,
    modified_utility,
    modified_utility_deriv,
    modified_utility_deriv2,
    utility_value,
)

MODE_TRUE = "true"
MODE_MODIFIED = "modified"
MODES = (MODE_TRUE, MODE_MODIFIED)

# widening factor applied to the closed-form dual bracket
_BRACKET_WIDEN = 10.0
# relative eta tolerance for the dual bisection
_ETA_RTOL = 1e-12


@dataclass(frozen=True)
class DualBracket:
    """An eta interval with excess demand of opposite signs at its ends."""

    eta_lo: float
    eta_hi: float
    excess_lo: float
    excess_hi: float

    def __post_init__(self):
        if not 0 < self.eta_lo < self.eta_hi:
            raise DomainError(
                f"need 0 < eta_lo < eta_hi, got [{self.eta_lo}, {self.eta_hi}]")
        if not (self.excess_lo >= 0 >= self.excess_hi):
            raise DomainError(
                f"excess must bracket zero, got [{self.excess_lo}, {self.excess_hi}]")


@dataclass(frozen=True)
class SolveResult:
    """One solved welfare program with its equilibrium certificate."""

    allocation: Allocation
    thetas: np.ndarray
    price: float
    welfare_true: float
    converged: bool
    iterations: int
    mode: str
    non_concave_prosumers: tuple[int, ...] = ()
    balance_residual: float = 0.0

    def __post_init__(self):
        t = np.asarray(self.thetas, dtype=float).copy()
        t.setflags(write=False)
        object.__setattr__(self, "thetas", t)

    @property
    def non_concave(self) -> bool:
        """True when any prosumer's solution point sits off the concave region."""
        return bool(self.non_concave_prosumers)

    @property
    def quantities(self) -> np.ndarray:
        return self.allocation.quantities


def _newton_bisect(f: Callable[[float], float],
                   fprime: Callable[[float], float],
                   lo: float, hi: float,
                   f_lo: float, f_hi: float,
                   xtol: float = 1e-14, ftol: float = 1e-15,
                   max_iter: int = 200) -> float:
    """Root of f on [lo, hi] by Newton steps safeguarded with bisection.

    Requires f(lo) and f(hi) of opposite sign; keeps the bracket valid so a
    wild Newton step can never escape it.
    """
    if f_lo == 0:
        return lo
    if f_hi == 0:
        return hi
    if (f_lo > 0) == (f_hi > 0):
        raise DomainError(
            f"root not bracketed: f({lo})={f_lo}, f({hi})={f_hi}")
    x = 0.5 * (lo + hi)
    for _ in range(max_iter):
        fx = f(x)
        if abs(fx) <= ftol:
            return x
        if (fx > 0) == (f_lo > 0):
            lo, f_lo = x, fx
        else:
            hi, f_hi = x, fx
        dfx = fprime(x)
        step_ok = False
        if dfx != 0 and math.isfinite(dfx):
            x_new = x - fx / dfx
            step_ok = lo < x_new < hi
        x = x_new if step_ok else 0.5 * (lo + hi)
        if hi - lo <= xtol * max(1.0, abs(x)):
            return x
    return x


def marginal_inverse_true(spec: UtilitySpec, eta: float, s_max: float) -> float:
    """q solving deriv(q) = eta, clipped below at the capacity bound -s_max."""
    if eta <= 0:
        raise DomainError(f"eta must be positive, got {eta}")
    if s_max <= 0:
        raise DomainError(f"s_max must be positive, got {s_max}")
    try:
        root = spec.deriv_inverse(eta)
    except NotImplementedError:
        root = _numeric_deriv_inverse(spec, eta, -s_max)
    return max(root, -s_max)


def _numeric_deriv_inverse(spec: UtilitySpec, eta: float, lo: float) -> float:
    # deriv is positive and strictly decreasing, so expand a bracket upward
    if spec.deriv(lo) <= eta:
        return lo
    hi = lo + 1.0
    while spec.deriv(hi) > eta:
        hi = 2 * (hi - lo) + lo
        if hi - lo > 1e12:
            raise DomainError("marginal inversion bracket expansion failed")
    return _newton_bisect(
        lambda q: spec.deriv(q) - eta, spec.deriv2,
        lo, hi, spec.deriv(lo) - eta, spec.deriv(hi) - eta)


class ModifiedInverse(NamedTuple):
    q: float
    non_concave: bool


def marginal_inverse_modified(spec: UtilitySpec, n: int, eta: float,
                              s_max: float, q_upper: float) -> ModifiedInverse:
    """Maximizer of the shaded Lagrangian S_mod(q) - eta*q over [-s_max, q_upper].

    On the concave branch (capacity bound at or above the concavity onset)
    this is the marginal inversion of the shaded curve, capacity-clipped.
    Otherwise the shaded marginal rises then falls, so the Lagrangian is
    scanned over its stationary points and both endpoints; the best
    candidate wins (larger q on ties) and the point is flagged when the
    shaded curve is locally convex there.
    """
    if eta <= 0:
        raise DomainError(f"eta must be positive, got {eta}")
    lo = -s_max
    if lo >= q_upper:
        raise DomainError("capacity bound exceeds the upper quantity bound")

    def md(q):
        return modified_utility_deriv(spec, n, q)

    q_c = spec.modified_concavity_threshold(n)

    if q_c <= lo:
        # shaded marginal strictly decreasing on the whole interval
        if eta >= md(lo):
            return ModifiedInverse(lo, False)
        if eta <= md(q_upper):
            return ModifiedInverse(q_upper, False)
        root = _newton_bisect(
            lambda q: md(q) - eta,
            lambda q: modified_utility_deriv2(spec, n, q),
            lo, q_upper, md(lo) - eta, md(q_upper) - eta)
        return ModifiedInverse(root, False)

    peak = min(q_c, q_upper)
    candidates = [lo]
    # falling branch [peak, q_upper]: the interior local max, if eta reaches it
    if eta <= md(peak):
        if eta <= md(q_upper):
            candidates.append(q_upper)
        else:
            candidates.append(_newton_bisect(
                lambda q: md(q) - eta,
                lambda q: modified_utility_deriv2(spec, n, q),
                peak, q_upper, md(peak) - eta, md(q_upper) - eta))
    # rising branch [lo, peak]: a stationary point is a local minimum, but it
    # is enumerated for completeness
    if md(lo) <= eta <= md(peak) and peak > lo:
        candidates.append(_newton_bisect(
            lambda q: md(q) - eta,
            lambda q: modified_utility_deriv2(spec, n, q),
            lo, peak, md(lo) - eta, md(peak) - eta))

    best_q, best_val = None, -math.inf
    for q in sorted(candidates):
        val = modified_utility(spec, n, q) - eta * q
        if val >= best_val:  # >= prefers the larger q on exact ties
            best_q, best_val = q, val
    flag = bool(modified_utility_deriv2(spec, n, best_q) > 0)
    return ModifiedInverse(best_q, flag)


def _prosumer_best(spec, n, eta, s_max, q_upper, mode) -> ModifiedInverse:
    if mode == MODE_TRUE:
        return ModifiedInverse(
            min(marginal_inverse_true(spec, eta, s_max), q_upper), False)
    return marginal_inverse_modified(spec, n, eta, s_max, q_upper)


def _find_bracket(excess, eta_lo, eta_hi) -> tuple[DualBracket, tuple, tuple]:
    e_lo = excess(eta_lo)
    e_hi = excess(eta_hi)
    for _ in range(60):
        if e_lo[0] >= 0:
            break
        eta_lo = max(eta_lo / _BRACKET_WIDEN, 1e-320)
        e_lo = excess(eta_lo)
    for _ in range(60):
        if e_hi[0] <= 0:
            break
        eta_hi *= _BRACKET_WIDEN
        e_hi = excess(eta_hi)
    if e_lo[0] < 0 or e_hi[0] > 0:
        raise BracketFailure(
            "no sign change in excess demand", eta_lo, eta_hi, e_lo[0], e_hi[0])
    return DualBracket(eta_lo, eta_hi, e_lo[0], e_hi[0]), e_lo, e_hi


def solve_dual(config: MarketConfig, mode: str) -> SolveResult:
    """Solve one welfare program by bisection on the balance multiplier.

    Returns the allocation with its stationarity residuals, the recovered
    bids theta_i = eta*(q_i - d_min), and the true welfare sum_i S_i(q_i)
    (evaluated with the actual curves in both modes). converged reports
    whether |sum q_i| reached tol_root; in the modified mode's non-concave
    regime the argmax can jump across the balance point, in which case the
    best available eta is returned, the residual recorded, and the affected
    prosumers listed in non_concave_prosumers.
    """
    if mode not in MODES:
        raise DomainError(f"mode must be one of {MODES}, got {mode!r}")
    specs = config.utilities()
    n = config.n_prosumers
    s_max = config.s_max
    q_upper = config.q_upper

    def excess(eta):
        results = [_prosumer_best(s, n, eta, s_max, q_upper, mode)
                   for s in specs]
        qs = np.array([r.q for r in results])
        flags = tuple(i for i, r in enumerate(results) if r.non_concave)
        return float(qs.sum()), qs, flags

    def marginal(spec, q):
        if mode == MODE_TRUE:
            return float(spec.deriv(q))
        return float(modified_utility_deriv(spec, n, q))

    # closed-form starting bracket: marginals at the interval ends, widened.
    # In the non-concave regime the shaded marginal peaks at the concavity
    # onset, so include that point when it lies inside the interval.
    lo_candidates, hi_candidates = [], []
    for spec in specs:
        hi_points = [-s_max]
        if mode == MODE_MODIFIED:
            q_c = spec.modified_concavity_threshold(n)
            if -s_max < q_c < q_upper:
                hi_points.append(q_c)
        lo_candidates.append(marginal(spec, q_upper))
        hi_candidates.append(max(marginal(spec, p) for p in hi_points))
    eta_lo = max(min(lo_candidates) / _BRACKET_WIDEN, 1e-300)
    eta_hi = max(hi_candidates) * _BRACKET_WIDEN

    bracket, e_lo, e_hi = _find_bracket(excess, eta_lo, eta_hi)
    lo, hi = bracket.eta_lo, bracket.eta_hi
    best = min((e_lo, lo), (e_hi, hi), key=lambda c: abs(c[0][0]))

    iterations = 0
    while hi - lo > _ETA_RTOL * hi and iterations < 200:
        mid = 0.5 * (lo + hi)
        e_mid = excess(mid)
        if abs(e_mid[0]) < abs(best[0][0]):
            best = (e_mid, mid)
        if e_mid[0] >= 0:
            lo = mid
        else:
            hi = mid
        iterations += 1

    (total, qs, flags), eta = best
    at_capacity = np.abs(qs + s_max) <= config.tol_root
    residuals = np.empty(n)
    for i, spec in enumerate(specs):
        m = marginal(spec, qs[i])
        if at_capacity[i]:
            residuals[i] = max(0.0, m - eta)
        elif qs[i] >= q_upper - config.tol_root:
            residuals[i] = max(0.0, eta - m)
        else:
            residuals[i] = abs(m - eta)
    allocation = Allocation(qs, eta, residuals, at_capacity)
    thetas = eta * (qs - config.d_min)
    return SolveResult(
        allocation=allocation,
        thetas=thetas,
        price=eta,
        welfare_true=welfare(config, qs),
        converged=bool(abs(total) <= config.tol_root),
        iterations=iterations,
        mode=mode,
        non_concave_prosumers=flags,
        balance_residual=total,
    )


def recover_bids(allocation: Allocation, d_min: float) -> np.ndarray:
    """Bids that reproduce a balanced allocation at its dual price.

    theta_i = dual_price * (q_i - d_min); the clearing price of the
    recovered profile equals the dual price again.
    """
    if allocation.dual_price <= 0:
        raise DomainError(
            f"dual price must be positive, got {allocation.dual_price}")
    if d_min <= 0:
        raise DomainError(f"d_min must be positive, got {d_min}")
    return allocation.dual_price * (allocation.quantities - d_min)


def welfare(config: MarketConfig, quantities) -> float:
    """True aggregate welfare sum_i S_i(q_i); may legitimately be negative."""
    q = np.asarray(quantities, dtype=float)
    if q.shape != (config.n_prosumers,):
        raise DomainError(
            f"expected {config.n_prosumers} quantities, got shape {q.shape}")
    return float(sum(utility_value(s, qi)
                     for s, qi in zip(config.utilities(), q)))
