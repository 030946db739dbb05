"""Leaderless incremental-cost consensus with distributed mismatch tracking.

Every node, generator or consumer, keeps three numbers: an estimate of the
common incremental cost (lambda), its own power setpoint, and an estimate of
the network power mismatch (demand minus generation). One iteration is

    lambda+ = sum_j w_ij lambda_j + eps * m_i
    p+      = best response to lambda+, clamped to [0, p_max]
    m+      = sum_j w_ij m_j  -/+ (p+ - p)     (- for generators, + for consumers)

with doubly stochastic Metropolis weights, so the mismatch estimates always sum
to the true network mismatch and the fixed point is the welfare optimum.

Agents only see each other through the message bus. Each broadcasts
``lambda``, ``mismatch``, ``power`` and ``mismatch_total`` (running sum of its
own mismatch estimates) on ``consensus/node/<id>``. Under message loss a node
reuses the last lambda it heard from a neighbour, renormalising the lambda
weights over neighbours heard from at least once. The mismatch channel instead
consumes the difference of running totals, so mismatch mass carried by a lost
message arrives with the next one instead of vanishing.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import kernels
from .bus import DeliveryPolicy, Message, MessageBus, node_topic
from .graph import CommGraph, GraphError, is_connected, metropolis_weights
from .model import (
    ConsumerParams,
    Dispatch,
    GeneratorParams,
    Scenario,
    gen_response,
    load_response,
)
from .oracle import DispatchSolution, build_solution

DIVERGENCE_LIMIT = 1e9
WEIGHT_SUM_TOL = 1e-9

TRACE_HEADER = ("iter", "node_id", "kind", "lambda", "power", "mismatch", "potential")


class ConsensusError(RuntimeError):
    pass


class DivergenceError(ConsensusError):
    def __init__(self, message: str, result: "RunResult | None" = None):
        super().__init__(message)
        self.result = result


@dataclass(frozen=True)
class SolverConfig:
    epsilon: float = 0.005
    max_iters: int = 5000
    tol_lambda: float = 1e-4
    tol_power: float = 1e-2
    delivery: DeliveryPolicy = field(default_factory=DeliveryPolicy)
    topology: str | tuple = "ring"

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be > 0, got {self.epsilon}")
        if not self.tol_lambda > 0 or not self.tol_power > 0:
            raise ValueError("tolerances must be > 0")
        # max_iters = 0 is allowed and yields the initial state only
        if int(self.max_iters) != self.max_iters or self.max_iters < 0:
            raise ValueError(f"max_iters must be a nonnegative integer, got {self.max_iters}")


@dataclass(frozen=True)
class AgentState:
    node_id: str
    kind: str
    lambda_est: float
    power: float
    mismatch_est: float


def init_states(s: Scenario) -> list[AgentState]:
    """Generators start at lambda = beta, consumers at lambda = omega, all powers zero."""
    states = []
    for gid, g in zip(s.gen_ids, s.generators):
        states.append(AgentState(gid, "generator", float(g.beta), 0.0, 0.0))
    for lid, c in zip(s.load_ids, s.consumers):
        p0 = load_response(c, c.omega)
        states.append(AgentState(lid, "consumer", float(c.omega), p0, p0))
    return states


def _weighted_sum(terms: Sequence[tuple[float, float]], what: str) -> float:
    total_w = math.fsum(w for w, _ in terms)
    if abs(total_w - 1.0) > WEIGHT_SUM_TOL:
        raise ConsensusError(f"{what} weights sum to {total_w!r}, expected 1")
    acc = 0.0
    for w, v in terms:
        if not (math.isfinite(w) and math.isfinite(v)):
            raise ConsensusError(f"non-finite {what} input ({w!r}, {v!r})")
        acc += w * v
    return acc


def local_update(
    state: AgentState,
    params: GeneratorParams | ConsumerParams,
    lambda_terms: Sequence[tuple[float, float]],
    mismatch_terms: Sequence[tuple[float, float]],
    cfg: SolverConfig,
) -> AgentState:
    """One consensus step for a single agent.

    ``lambda_terms`` and ``mismatch_terms`` are ``(weight, value)`` pairs that
    include the agent's own entry (``w_ii``); each list must sum to one. In a
    lossless synchronous round both lists carry the same Metropolis row, with
    the neighbours' lambda and mismatch estimates as values.
    """
    for v in (state.lambda_est, state.power, state.mismatch_est):
        if not math.isfinite(v):
            raise ConsensusError(f"{state.node_id}: non-finite state {state!r}")
    lam = _weighted_sum(lambda_terms, "lambda") + cfg.epsilon * state.mismatch_est
    mixed = _weighted_sum(mismatch_terms, "mismatch")
    if isinstance(params, GeneratorParams):
        p = gen_response(params, lam)
        m = mixed - (p - state.power)
    else:
        p = load_response(params, lam)
        m = mixed + (p - state.power)
    return AgentState(state.node_id, state.kind, lam, p, m)


def consensus_reached(states: Sequence[AgentState], cfg: SolverConfig) -> bool:
    if not states:
        return True
    lams = [st.lambda_est for st in states]
    worst = max(abs(st.mismatch_est) for st in states)
    return worst <= cfg.tol_power and (max(lams) - min(lams)) <= cfg.tol_lambda


@dataclass
class Trace:
    node_ids: tuple[str, ...]
    kinds: tuple[str, ...]
    lambdas: np.ndarray
    powers: np.ndarray
    mismatches: np.ndarray
    potential: np.ndarray

    def __len__(self) -> int:
        return self.lambdas.shape[0]

    def rows(self):
        for k in range(len(self)):
            for i, nid in enumerate(self.node_ids):
                yield (k, nid, self.kinds[i], float(self.lambdas[k, i]),
                       float(self.powers[k, i]), float(self.mismatches[k, i]),
                       float(self.potential[k]))

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(TRACE_HEADER)
        for row in self.rows():
            writer.writerow([row[0], row[1], row[2], *(repr(v) for v in row[3:])])
        return buf.getvalue()


def trace_laplacian_potential(trace: Trace, g: CommGraph) -> np.ndarray:
    if len(trace) == 0:
        raise ConsensusError("empty trace")
    ei, ej, ew = g.edge_arrays
    return kernels.potential_series(ei, ej, ew, trace.lambdas)


@dataclass
class RunResult:
    converged: bool
    iterations: int
    solution: DispatchSolution
    trace: Trace
    config: SolverConfig
    bus: MessageBus | None = None

    @property
    def lambda_spread(self) -> float:
        last = self.trace.lambdas[-1]
        return float(np.max(last) - np.min(last))


class ConsensusAgent:
    """Protocol participant bound to one scenario node.

    Holds the last values heard from each neighbour and the running-total
    bookkeeping for the mismatch channel.
    """

    def __init__(self, state: AgentState, params, self_weight: float,
                 neighbor_weights: dict[str, float]):
        self.state = state
        self.params = params
        self.self_weight = self_weight
        self.neighbor_weights = neighbor_weights
        self.mismatch_total = 0.0
        # neighbour id -> (publish_round, lambda, mismatch, mismatch_total)
        self.heard: dict[str, tuple[int, float, float, float]] = {}
        # neighbour id -> (publish_round, mismatch_total) already folded in
        self.consumed: dict[str, tuple[int, float]] = {}

    @property
    def node_id(self) -> str:
        return self.state.node_id

    def outgoing(self) -> Message:
        st = self.state
        self.mismatch_total += st.mismatch_est
        payload = {
            "lambda": st.lambda_est,
            "mismatch": st.mismatch_est,
            "power": st.power,
            "mismatch_total": self.mismatch_total,
        }
        return Message(node_topic(st.node_id), payload, st.node_id)

    def receive(self, messages: Sequence[Message]) -> None:
        for msg in messages:
            src = msg.publisher
            if src not in self.neighbor_weights:
                continue
            prev = self.heard.get(src)
            if prev is not None and prev[0] >= msg.publish_round:
                continue
            pl = msg.payload
            self.heard[src] = (msg.publish_round, pl["lambda"], pl["mismatch"],
                               pl["mismatch_total"])

    def step_terms(self) -> tuple[list[tuple[float, float]], list[tuple[float, float]]]:
        st = self.state
        lam_terms = [(self.self_weight, st.lambda_est)]
        mis_terms = [(self.self_weight, st.mismatch_est)]
        for nid, w in self.neighbor_weights.items():
            got = self.heard.get(nid)
            if got is None:
                mis_terms.append((w, 0.0))
                continue
            rnd, lam, mis, total = got
            lam_terms.append((w, lam))
            last = self.consumed.get(nid)
            if last is not None and last[0] == rnd:
                inflow = 0.0
            elif (last is None and rnd == 0) or (last is not None and last[0] == rnd - 1):
                # contiguous round: the plain value is exact
                inflow = mis
            else:
                inflow = total - (last[1] if last is not None else 0.0)
            self.consumed[nid] = (rnd, total)
            mis_terms.append((w, inflow))
        if len(lam_terms) < len(mis_terms):
            norm = math.fsum(w for w, _ in lam_terms)
            lam_terms = [(w / norm, v) for w, v in lam_terms]
        return lam_terms, mis_terms


def _check_inputs(s: Scenario, g: CommGraph) -> None:
    if g.n != s.n_nodes:
        raise ConsensusError(f"graph has {g.n} nodes, scenario has {s.n_nodes}")
    if not is_connected(g):
        raise GraphError("communication graph is disconnected; consensus would split")


def _make_agents(s: Scenario, W: np.ndarray) -> list[ConsensusAgent]:
    ids = s.node_ids
    agents = []
    for i, st in enumerate(init_states(s)):
        nbrs = {ids[j]: float(W[i, j]) for j in range(s.n_nodes) if j != i and W[i, j] > 0}
        agents.append(ConsensusAgent(st, s.params(i), float(W[i, i]), nbrs))
    return agents


def _finish(s: Scenario, g: CommGraph, cfg: SolverConfig, converged: bool, iterations: int,
            lam: np.ndarray, powr: np.ndarray, mis: np.ndarray, bus=None) -> RunResult:
    kinds = tuple(s.kind(i) for i in range(s.n_nodes))
    trace = Trace(s.node_ids, kinds, lam, powr, mis, np.zeros(lam.shape[0]))
    trace.potential = trace_laplacian_potential(trace, g)
    final = powr[-1]
    dispatch = Dispatch(final[: s.n_gen], final[s.n_gen:])
    solution = build_solution(
        s, dispatch, float(np.mean(lam[-1])),
        balance_tol=s.n_nodes * cfg.tol_power,
    )
    return RunResult(converged, iterations, solution, trace, cfg, bus)


def run_dispatch(s: Scenario, g: CommGraph, cfg: SolverConfig | None = None,
                 record_events: bool = False) -> RunResult:
    """Run the protocol through the message bus until consensus or ``max_iters``.

    Raises :class:`DivergenceError` (with the partial result attached) when any
    estimate exceeds 1e9 in magnitude.
    """
    cfg = cfg or SolverConfig()
    _check_inputs(s, g)
    W = metropolis_weights(g)
    agents = _make_agents(s, W)
    bus = MessageBus(cfg.delivery, record_events=record_events)
    for i, agent in enumerate(agents):
        for j in g.neighbors(i):
            bus.subscribe(agent.node_id, node_topic(s.node_ids[j]))

    n = s.n_nodes
    lam_t = np.empty((cfg.max_iters + 1, n))
    pow_t = np.empty_like(lam_t)
    mis_t = np.empty_like(lam_t)

    def record(k: int) -> None:
        for i, a in enumerate(agents):
            lam_t[k, i] = a.state.lambda_est
            pow_t[k, i] = a.state.power
            mis_t[k, i] = a.state.mismatch_est

    record(0)
    k = 0
    converged = False
    while True:
        if consensus_reached([a.state for a in agents], cfg):
            converged = True
            break
        if k >= cfg.max_iters:
            break
        for a in agents:
            bus.publish(a.outgoing())
        bus.deliver_round()
        for a in agents:
            a.receive(bus.drain_inbox(a.node_id))
        new_states = []
        for a in agents:
            lam_terms, mis_terms = a.step_terms()
            new_states.append(local_update(a.state, a.params, lam_terms, mis_terms, cfg))
        for a, st in zip(agents, new_states):
            a.state = st
        k += 1
        record(k)
        if any(abs(st.lambda_est) > DIVERGENCE_LIMIT or abs(st.mismatch_est) > DIVERGENCE_LIMIT
               for st in new_states):
            partial = _finish(s, g, cfg, False, k, lam_t[: k + 1], pow_t[: k + 1],
                              mis_t[: k + 1], bus)
            raise DivergenceError(
                f"consensus diverged at iteration {k} with epsilon={cfg.epsilon}; "
                "reduce epsilon", partial,
            )
    return _finish(s, g, cfg, converged, k, lam_t[: k + 1], pow_t[: k + 1], mis_t[: k + 1], bus)


def run_dispatch_matrix(s: Scenario, g: CommGraph, cfg: SolverConfig | None = None) -> RunResult:
    """Lossless synchronous run in matrix form, without the bus.

    Computes the same iteration as :func:`run_dispatch` with a perfect channel;
    useful as a cross-check and for large parameter sweeps.
    """
    cfg = cfg or SolverConfig()
    _check_inputs(s, g)
    W = metropolis_weights(g)
    arr = s.arrays()
    init = init_states(s)
    lam0 = np.array([st.lambda_est for st in init])
    p0 = np.array([st.power for st in init])
    m0 = np.array([st.mismatch_est for st in init])
    k, converged, lam, powr, mis = kernels.matrix_consensus(
        W, arr.is_gen, arr.curv, arr.icpt, arr.cap, lam0, p0, m0,
        cfg.epsilon, cfg.max_iters, cfg.tol_lambda, cfg.tol_power,
    )
    k = int(k)
    result = _finish(s, g, cfg, bool(converged), k, lam, powr, mis)
    if np.max(np.abs(lam[-1])) > DIVERGENCE_LIMIT or np.max(np.abs(mis[-1])) > DIVERGENCE_LIMIT:
        raise DivergenceError(
            f"consensus diverged at iteration {k} with epsilon={cfg.epsilon}; reduce epsilon",
            result,
        )
    return result
