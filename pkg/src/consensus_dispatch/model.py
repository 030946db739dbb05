"""Per-node economics: cost and utility curves, their marginals, best responses.

Units: powers in kW, money rates in $/h, incremental cost in $/kWh.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


class DomainError(ValueError):
    """Raised when a function is evaluated outside its domain."""


def _check_power(p: float) -> None:
    if not p >= 0.0:
        raise DomainError(f"power must be >= 0 kW, got {p!r}")


@dataclass(frozen=True)
class GeneratorParams:
    alpha: float
    beta: float
    gamma: float
    p_max: float

    def __post_init__(self):
        if not self.alpha > 0:
            raise DomainError(f"alpha must be > 0, got {self.alpha!r}")
        if not self.p_max > 0:
            raise DomainError(f"p_max must be > 0, got {self.p_max!r}")
        if not self.gamma >= 0:
            raise DomainError(f"gamma must be >= 0, got {self.gamma!r}")
        if not math.isfinite(self.beta):
            raise DomainError(f"beta must be finite, got {self.beta!r}")


@dataclass(frozen=True)
class ConsumerParams:
    sigma: float
    omega: float
    p_max: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise DomainError(f"sigma must be > 0, got {self.sigma!r}")
        if not self.omega > 0:
            raise DomainError(f"omega must be > 0, got {self.omega!r}")
        if not self.p_max > 0:
            raise DomainError(f"p_max must be > 0, got {self.p_max!r}")

    @property
    def satiation(self) -> float:
        """Consumption level where marginal utility reaches zero."""
        return self.omega / (2.0 * self.sigma)


@dataclass(frozen=True)
class Scenario:
    """Generators and consumers with stable node ids.

    Node ordering everywhere in the package is generators first, then consumers.
    """

    generators: tuple[GeneratorParams, ...]
    consumers: tuple[ConsumerParams, ...]
    gen_ids: tuple[str, ...] = ()
    load_ids: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "generators", tuple(self.generators))
        object.__setattr__(self, "consumers", tuple(self.consumers))
        if not self.gen_ids:
            object.__setattr__(
                self, "gen_ids", tuple(f"DG{i + 1}" for i in range(len(self.generators)))
            )
        if not self.load_ids:
            object.__setattr__(
                self, "load_ids", tuple(f"L{j + 1}" for j in range(len(self.consumers)))
            )
        object.__setattr__(self, "gen_ids", tuple(self.gen_ids))
        object.__setattr__(self, "load_ids", tuple(self.load_ids))
        if not self.generators:
            raise DomainError("scenario needs at least one generator")
        if not self.consumers:
            raise DomainError("scenario needs at least one consumer")
        if len(self.gen_ids) != len(self.generators):
            raise DomainError("one id per generator required")
        if len(self.load_ids) != len(self.consumers):
            raise DomainError("one id per consumer required")
        ids = self.node_ids
        if len(set(ids)) != len(ids):
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            raise DomainError(f"duplicate node ids: {dupes}")

    @property
    def n_gen(self) -> int:
        return len(self.generators)

    @property
    def n_load(self) -> int:
        return len(self.consumers)

    @property
    def n_nodes(self) -> int:
        return self.n_gen + self.n_load

    @property
    def node_ids(self) -> tuple[str, ...]:
        return self.gen_ids + self.load_ids

    def kind(self, index: int) -> str:
        return "generator" if index < self.n_gen else "consumer"

    def params(self, index: int) -> GeneratorParams | ConsumerParams:
        if index < self.n_gen:
            return self.generators[index]
        return self.consumers[index - self.n_gen]

    def arrays(self) -> "NodeArrays":
        return NodeArrays.from_scenario(self)

    def permuted(self, gen_order: Sequence[int], load_order: Sequence[int]) -> "Scenario":
        return Scenario(
            generators=tuple(self.generators[i] for i in gen_order),
            consumers=tuple(self.consumers[j] for j in load_order),
            gen_ids=tuple(self.gen_ids[i] for i in gen_order),
            load_ids=tuple(self.load_ids[j] for j in load_order),
        )


@dataclass(frozen=True)
class NodeArrays:
    """Flat float64 arrays in the layout the numeric kernels expect."""

    is_gen: np.ndarray
    curv: np.ndarray
    icpt: np.ndarray
    cap: np.ndarray
    fixed: np.ndarray = field(repr=False)

    @classmethod
    def from_scenario(cls, s: Scenario) -> "NodeArrays":
        gens, loads = s.generators, s.consumers
        is_gen = np.array([True] * len(gens) + [False] * len(loads))
        curv = np.array([g.alpha for g in gens] + [c.sigma for c in loads], dtype=np.float64)
        icpt = np.array([g.beta for g in gens] + [c.omega for c in loads], dtype=np.float64)
        cap = np.array([g.p_max for g in gens] + [c.p_max for c in loads], dtype=np.float64)
        fixed = np.array([g.gamma for g in gens] + [0.0] * len(loads), dtype=np.float64)
        return cls(is_gen, curv, icpt, cap, fixed)


@dataclass(frozen=True)
class Dispatch:
    gen_power: tuple[float, ...]
    load_power: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "gen_power", tuple(float(p) for p in self.gen_power))
        object.__setattr__(self, "load_power", tuple(float(p) for p in self.load_power))

    @property
    def total_gen(self) -> float:
        return math.fsum(self.gen_power)

    @property
    def total_load(self) -> float:
        return math.fsum(self.load_power)

    def as_array(self) -> np.ndarray:
        return np.array(self.gen_power + self.load_power, dtype=np.float64)


def utility(c: ConsumerParams, p: float) -> float:
    """Consumer utility in $/h; flat at omega^2/(4 sigma) beyond satiation."""
    _check_power(p)
    if p <= c.satiation:
        return c.omega * p - c.sigma * p * p
    return c.omega * c.omega / (4.0 * c.sigma)


def cost(g: GeneratorParams, p: float) -> float:
    _check_power(p)
    return g.alpha * p * p + g.beta * p + g.gamma


def marginal_cost(g: GeneratorParams, p: float) -> float:
    _check_power(p)
    return 2.0 * g.alpha * p + g.beta


def marginal_utility(c: ConsumerParams, p: float) -> float:
    """Derivative of :func:`utility`; the kink itself takes the saturated value 0."""
    _check_power(p)
    if p < c.satiation:
        return c.omega - 2.0 * c.sigma * p
    return 0.0


def _clamp(x: float, hi: float) -> float:
    return min(max(x, 0.0), hi)


def gen_response(g: GeneratorParams, lam: float) -> float:
    """Output where marginal cost equals ``lam``, projected onto [0, p_max]."""
    return _clamp((lam - g.beta) / (2.0 * g.alpha), g.p_max)


def load_response(c: ConsumerParams, lam: float) -> float:
    """Demand where marginal utility equals ``lam``, projected onto [0, p_max].

    Demand never exceeds the satiation point: utility is flat beyond it, so a
    negative price does not buy extra consumption.
    """
    return _clamp((c.omega - lam) / (2.0 * c.sigma), min(c.p_max, c.satiation))


def response(params: GeneratorParams | ConsumerParams, lam: float) -> float:
    if isinstance(params, GeneratorParams):
        return gen_response(params, lam)
    return load_response(params, lam)


# slack allowed on the capacity bounds when a dispatch is checked
BOUND_SLACK = 1e-9


def check_bounds(s: Scenario, d: Dispatch) -> None:
    if len(d.gen_power) != s.n_gen or len(d.load_power) != s.n_load:
        raise DomainError("dispatch length does not match scenario")
    for name, p, params in zip(
        s.node_ids, d.gen_power + d.load_power, s.generators + s.consumers
    ):
        if not (-BOUND_SLACK <= p <= params.p_max + BOUND_SLACK):
            raise DomainError(f"{name}: power {p!r} kW outside [0, {params.p_max}]")


def social_cost(s: Scenario, d: Dispatch) -> float:
    """Total generation cost minus total consumer utility (lower is better)."""
    check_bounds(s, d)
    total_cost = math.fsum(cost(g, max(p, 0.0)) for g, p in zip(s.generators, d.gen_power))
    total_util = math.fsum(utility(c, max(p, 0.0)) for c, p in zip(s.consumers, d.load_power))
    return total_cost - total_util


def social_cost_batch(s: Scenario, gen: np.ndarray, load: np.ndarray) -> np.ndarray:
    """Vectorised :func:`social_cost` over rows of candidate dispatches (no bound check)."""
    a = s.arrays()
    ng = s.n_gen
    alpha, beta, gamma = a.curv[:ng], a.icpt[:ng], a.fixed[:ng]
    sigma, omega = a.curv[ng:], a.icpt[ng:]
    costs = (alpha * gen * gen + beta * gen + gamma).sum(axis=-1)
    sat = omega / (2.0 * sigma)
    util = np.where(load <= sat, omega * load - sigma * load * load, omega * omega / (4.0 * sigma))
    return costs - util.sum(axis=-1)
