"""Centralized benchmark: price bisection on the clamped best-response curves.

The welfare problem is separable with a single coupling constraint (power
balance), so its dual is one-dimensional. The aggregate excess supply
``f(lam) = sum gen_response - sum load_response`` is continuous and
nondecreasing; the optimal incremental cost is its zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from . import kernels
from .model import (
    BOUND_SLACK,
    Dispatch,
    Scenario,
    check_bounds,
    gen_response,
    load_response,
    marginal_cost,
    marginal_utility,
    social_cost,
)

DEFAULT_BALANCE_TOL = 1e-6
BISECT_REL_WIDTH = 1e-12


@dataclass(frozen=True)
class DispatchSolution:
    dispatch: Dispatch
    lambda_star: float
    total_gen: float
    total_load: float
    objective: float
    feasible: bool

    @property
    def imbalance(self) -> float:
        return self.total_gen - self.total_load


def build_solution(s: Scenario, d: Dispatch, lam: float, balance_tol: float) -> DispatchSolution:
    tg, tl = d.total_gen, d.total_load
    return DispatchSolution(
        dispatch=d,
        lambda_star=float(lam),
        total_gen=tg,
        total_load=tl,
        objective=social_cost(s, d),
        feasible=abs(tg - tl) <= balance_tol,
    )


def aggregate_generation(s: Scenario, lam: float) -> float:
    return math.fsum(gen_response(g, lam) for g in s.generators)


def aggregate_load(s: Scenario, lam: float) -> float:
    return math.fsum(load_response(c, lam) for c in s.consumers)


def price_bracket(s: Scenario) -> tuple[float, float]:
    lo = min(0.0, min(g.beta for g in s.generators))
    hi = max(c.omega for c in s.consumers) + max(
        g.beta + 2.0 * g.alpha * g.p_max for g in s.generators
    )
    return lo, hi


def dispatch_at(s: Scenario, lam: float) -> Dispatch:
    return Dispatch(
        tuple(gen_response(g, lam) for g in s.generators),
        tuple(load_response(c, lam) for c in s.consumers),
    )


def solve_centralized(s: Scenario, balance_tol: float = DEFAULT_BALANCE_TOL) -> DispatchSolution:
    """Welfare-optimal dispatch and its incremental cost.

    Both edges of the zero set of ``f`` are located by bisection; the returned
    price is their midpoint, which is the unique root in the regular case and
    the centre of the flat segment when every unit is clamped over an interval.
    """
    lo, hi = price_bracket(s)
    if aggregate_generation(s, lo) - aggregate_load(s, lo) > balance_tol:
        # cannot happen with zero lower bounds; kept as a guard
        d = dispatch_at(s, lo)
        return build_solution(s, d, lo, balance_tol)
    arr = s.arrays()
    left, right = kernels.bisect_zero_set(
        arr.is_gen, arr.curv, arr.icpt, arr.cap, lo, hi, BISECT_REL_WIDTH
    )
    lam = 0.5 * (left + right)
    return build_solution(s, dispatch_at(s, lam), lam, balance_tol)


@dataclass(frozen=True)
class KKTViolation:
    node_id: str
    kind: str
    power: float
    marginal: float
    condition: str


@dataclass
class KKTReport:
    lambda_star: float
    imbalance: float
    violations: list[KKTViolation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def flagged(self) -> list[str]:
        return [v.node_id for v in self.violations]

    def lines(self) -> list[str]:
        out = [f"KKT check at lambda* = {self.lambda_star:.6f} $/kWh, "
               f"imbalance = {self.imbalance:.3e} kW"]
        if self.ok:
            out.append("  all stationarity and complementarity conditions hold")
        for v in self.violations:
            out.append(f"  {v.node_id} ({v.kind}) p={v.power:.4f} kW "
                       f"marginal={v.marginal:.6f}: {v.condition}")
        return out


def verify_kkt(s: Scenario, sol: DispatchSolution, tol: float = 1e-6) -> KKTReport:
    """Check each node's optimality condition against ``sol.lambda_star``.

    Balance is reported as ``imbalance`` but not counted as a violation.
    """
    check_bounds(s, sol.dispatch)
    lam = sol.lambda_star
    report = KKTReport(lam, sol.dispatch.total_gen - sol.dispatch.total_load)
    d = sol.dispatch
    for gid, g, p in zip(s.gen_ids, s.generators, d.gen_power):
        p = min(max(p, 0.0), g.p_max)
        mc = marginal_cost(g, p)
        if p <= BOUND_SLACK:
            bad, cond = mc < lam - tol, "at lower bound needs marginal cost >= lambda"
        elif p >= g.p_max - BOUND_SLACK:
            bad, cond = mc > lam + tol, "at capacity needs marginal cost <= lambda"
        else:
            bad, cond = abs(mc - lam) > tol, "interior needs marginal cost == lambda"
        if bad:
            report.violations.append(KKTViolation(gid, "generator", p, mc, cond))
    for lid, c, p in zip(s.load_ids, s.consumers, d.load_power):
        p = min(max(p, 0.0), c.p_max)
        mu = marginal_utility(c, p)
        if p <= BOUND_SLACK:
            bad, cond = mu > lam + tol, "at zero demand needs marginal utility <= lambda"
        elif p >= c.p_max - BOUND_SLACK:
            bad, cond = mu < lam - tol, "at demand cap needs marginal utility >= lambda"
        elif p >= c.satiation - BOUND_SLACK:
            bad, cond = lam > tol, "satiated demand needs lambda <= 0"
        else:
            bad, cond = abs(mu - lam) > tol, "interior needs marginal utility == lambda"
        if bad:
            report.violations.append(KKTViolation(lid, "consumer", p, mu, cond))
    return report
