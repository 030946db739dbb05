"""Run summaries: per-node output, total generation, total load, lambda and
iteration count, as a text table and as JSON."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

from .model import Scenario
from .oracle import DispatchSolution


@dataclass
class SummaryReport:
    node_ids: list[str]
    kinds: list[str]
    outputs: list[float]
    total_generation: float
    total_load: float
    lambda_: float
    iterations: int | None
    converged: bool
    objective: float
    lambda_spread: float = 0.0
    source: str = "distributed"

    @classmethod
    def from_solution(cls, s: Scenario, sol: DispatchSolution, *, iterations: int | None,
                      converged: bool, lambda_spread: float = 0.0,
                      source: str = "distributed") -> "SummaryReport":
        outputs = list(sol.dispatch.gen_power + sol.dispatch.load_power)
        kinds = [s.kind(i) for i in range(s.n_nodes)]
        return cls(
            node_ids=list(s.node_ids),
            kinds=kinds,
            outputs=outputs,
            total_generation=math.fsum(outputs[: s.n_gen]),
            total_load=math.fsum(outputs[s.n_gen:]),
            lambda_=sol.lambda_star,
            iterations=iterations,
            converged=converged,
            objective=sol.objective,
            lambda_spread=lambda_spread,
            source=source,
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["lambda"] = d.pop("lambda_")
        d["nodes"] = [
            {"id": i, "kind": k, "power": p}
            for i, k, p in zip(d.pop("node_ids"), d.pop("kinds"), d.pop("outputs"))
        ]
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def totals_line(self) -> str:
        iters = "-" if self.iterations is None else str(self.iterations)
        return (f"Total Generation (kW) {self.total_generation:.1f} | "
                f"Total Load (kW) {self.total_load:.1f} | "
                f"Lambda {self.lambda_:.2f} | Iterations {iters}")

    def format_table(self) -> str:
        # loads first, then generators
        order = [i for i, k in enumerate(self.kinds) if k == "consumer"]
        order += [i for i, k in enumerate(self.kinds) if k == "generator"]
        widths = [max(6, len(self.node_ids[i])) for i in order]
        head = "Node        " + " ".join(
            f"{self.node_ids[i]:>{w}}" for i, w in zip(order, widths))
        vals = "Output (kW) " + " ".join(
            f"{self.outputs[i]:>{w}.1f}" for i, w in zip(order, widths))
        if self.source == "oracle":
            status = "feasible" if self.converged else "INFEASIBLE"
        else:
            status = "converged" if self.converged else "NOT converged"
        tail = f"[{self.source}] {status}; objective {self.objective:.2f} $/h"
        if self.source == "distributed":
            tail += f"; lambda spread {self.lambda_spread:.2e} $/kWh"
        return "\n".join([head, vals, self.totals_line(), tail]) + "\n"
