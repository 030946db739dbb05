"""Scenario files: JSON documents pinning down node parameters, topology and solver.

Example::

    {
      "version": 1,
      "generators": [{"id": "DG1", "alpha": 0.01, "beta": 5.0, "gamma": 0.0, "p_max": 200.0}],
      "consumers":  [{"id": "L1", "sigma": 0.05, "omega": 10.0, "p_max": 150.0}],
      "graph": {"preset": "line"},
      "solver": {"epsilon": 0.005, "max_iters": 5000}
    }

``graph`` is either ``{"preset": name}`` or ``{"edges": [[u, v], [u, v, weight], ...]}``
over node ids; a bare preset string is accepted too. Every section except
``generators`` and ``consumers`` is optional.
"""

from __future__ import annotations

import json
from dataclasses import replace
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from .bus import DeliveryPolicy
from .consensus import SolverConfig
from .graph import PRESETS, CommGraph, GraphError, build_graph, preset_graph
from .model import ConsumerParams, DomainError, GeneratorParams, Scenario

SCHEMA_VERSION = 1

_TOP_KEYS = {"version", "generators", "consumers", "graph", "solver"}
_GEN_KEYS = {"id": True, "alpha": True, "beta": True, "gamma": False, "p_max": True}
_LOAD_KEYS = {"id": True, "sigma": True, "omega": True, "p_max": True}
_GRAPH_KEYS = {"preset", "edges"}
_SOLVER_KEYS = {
    "epsilon": float,
    "max_iters": int,
    "tol_lambda": float,
    "tol_power": float,
    "drop_prob": float,
    "delay_rounds": int,
    "seed": int,
}

DEFAULT_RANGES: dict[str, tuple[float, float]] = {
    "alpha": (0.005, 0.05),
    "beta": (2.0, 8.0),
    "gamma": (0.0, 5.0),
    "gen_p_max": (80.0, 200.0),
    "sigma": (0.02, 0.1),
    "omega": (6.0, 14.0),
    "load_p_max": (30.0, 100.0),
}


class ScenarioError(ValueError):
    """Invalid scenario document; the message names the offending location."""


def _number(value: Any, where: str, kind: type = float) -> float | int:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ScenarioError(f"{where}: expected a number, got {value!r}")
    if kind is int:
        if int(value) != value:
            raise ScenarioError(f"{where}: expected an integer, got {value!r}")
        return int(value)
    return float(value)


def _check_keys(obj: Any, allowed, where: str) -> None:
    if not isinstance(obj, dict):
        raise ScenarioError(f"{where}: expected an object, got {type(obj).__name__}")
    unknown = sorted(set(obj) - set(allowed))
    if unknown:
        raise ScenarioError(f"{where}: unknown key(s) {', '.join(map(repr, unknown))}")


def _node_list(doc: dict, section: str, spec: dict[str, bool], build) -> tuple[list, list[str]]:
    items = doc.get(section)
    if not isinstance(items, list) or not items:
        raise ScenarioError(f"{section}: expected a non-empty list")
    params, ids = [], []
    for k, item in enumerate(items):
        where = f"{section}[{k}]"
        _check_keys(item, spec, where)
        missing = [key for key, required in spec.items() if required and key not in item]
        if missing:
            raise ScenarioError(f"{where}: missing key(s) {', '.join(map(repr, missing))}")
        node_id = item["id"]
        if not isinstance(node_id, str) or not node_id or "/" in node_id:
            raise ScenarioError(f"{where}.id: expected a non-empty string without '/'")
        values = {key: _number(item[key], f"{where}.{key}") for key in spec
                  if key != "id" and key in item}
        try:
            params.append(build(**values))
        except DomainError as exc:
            raise ScenarioError(f"{where} ({node_id}): {exc}") from None
        ids.append(node_id)
    return params, ids


def _parse_graph(raw: Any, ids: tuple[str, ...]) -> CommGraph:
    n = len(ids)
    if raw is None:
        raw = {"preset": "ring"}
    if isinstance(raw, str):
        raw = {"preset": raw}
    _check_keys(raw, _GRAPH_KEYS, "graph")
    if ("preset" in raw) == ("edges" in raw):
        raise ScenarioError("graph: give exactly one of 'preset' or 'edges'")
    try:
        if "preset" in raw:
            if raw["preset"] not in PRESETS:
                raise ScenarioError(
                    f"graph.preset: unknown preset {raw['preset']!r}; expected one of {PRESETS}"
                )
            return preset_graph(raw["preset"], n)
        index = {nid: i for i, nid in enumerate(ids)}
        edges = []
        if not isinstance(raw["edges"], list):
            raise ScenarioError("graph.edges: expected a list")
        for k, e in enumerate(raw["edges"]):
            where = f"graph.edges[{k}]"
            if not isinstance(e, list) or len(e) not in (2, 3):
                raise ScenarioError(f"{where}: expected [u, v] or [u, v, weight]")
            for end in e[:2]:
                if not isinstance(end, str) or end not in index:
                    raise ScenarioError(f"{where}: unknown node id {end!r}")
            item = [index[e[0]], index[e[1]]]
            if len(e) == 3:
                item.append(_number(e[2], f"{where}[2]"))
            edges.append(tuple(item))
        return build_graph(n, edges)
    except GraphError as exc:
        raise ScenarioError(f"graph: {exc}") from None


def _parse_solver(raw: Any) -> SolverConfig:
    if raw is None:
        return SolverConfig()
    _check_keys(raw, _SOLVER_KEYS, "solver")
    vals = {k: _number(v, f"solver.{k}", _SOLVER_KEYS[k]) for k, v in raw.items()}
    base = SolverConfig()
    try:
        delivery = DeliveryPolicy(
            drop_probability=vals.pop("drop_prob", base.delivery.drop_probability),
            delay_rounds=vals.pop("delay_rounds", base.delivery.delay_rounds),
            rng_seed=vals.pop("seed", base.delivery.rng_seed),
        )
        return SolverConfig(delivery=delivery, **vals)
    except ValueError as exc:
        raise ScenarioError(f"solver: {exc}") from None


def parse_scenario(doc: Mapping) -> tuple[Scenario, CommGraph, SolverConfig]:
    _check_keys(doc, _TOP_KEYS, "<root>")
    version = doc.get("version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ScenarioError(f"version: unsupported schema version {version!r}")
    gens, gen_ids = _node_list(doc, "generators", _GEN_KEYS, GeneratorParams)
    loads, load_ids = _node_list(doc, "consumers", _LOAD_KEYS, ConsumerParams)
    try:
        scenario = Scenario(tuple(gens), tuple(loads), tuple(gen_ids), tuple(load_ids))
    except DomainError as exc:
        raise ScenarioError(str(exc)) from None
    raw_graph = doc.get("graph", "ring")
    graph = _parse_graph(raw_graph, scenario.node_ids)
    cfg = _parse_solver(doc.get("solver"))
    if isinstance(raw_graph, str):
        topology = raw_graph
    elif "preset" in raw_graph:
        topology = raw_graph["preset"]
    else:
        topology = graph.edges
    return scenario, graph, replace(cfg, topology=topology)


def load_scenario(path: str | Path) -> tuple[Scenario, CommGraph, SolverConfig]:
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    try:
        return parse_scenario(doc)
    except ScenarioError as exc:
        raise ScenarioError(f"{path}: {exc}") from None


def _check_ranges(ranges: Mapping[str, tuple[float, float]]) -> dict[str, tuple[float, float]]:
    merged = dict(DEFAULT_RANGES)
    for key, bounds in ranges.items():
        if key not in DEFAULT_RANGES:
            raise ValueError(f"unknown range {key!r}; expected one of {sorted(DEFAULT_RANGES)}")
        lo, hi = float(bounds[0]), float(bounds[1])
        if not lo < hi:
            raise ValueError(f"range {key!r} needs lo < hi, got ({lo}, {hi})")
        # gamma and beta may start at zero; everything else must stay positive
        if lo < 0 or (lo == 0 and key not in ("gamma", "beta")):
            raise ValueError(f"range {key!r} must be positive, got ({lo}, {hi})")
        merged[key] = (lo, hi)
    return merged


def generate_scenario(seed: int, n_gen: int = 6, n_load: int = 10,
                      ranges: Mapping[str, tuple[float, float]] | None = None,
                      topology: str = "ring") -> dict:
    """Draw a random scenario document; the same seed always gives the same document."""
    if n_gen < 1 or n_load < 1:
        raise ValueError("need at least one generator and one consumer")
    if topology not in PRESETS:
        raise ValueError(f"unknown topology {topology!r}")
    r = _check_ranges(ranges or {})
    rng = np.random.default_rng(seed)

    def draw(key: str) -> float:
        lo, hi = r[key]
        return round(float(rng.uniform(lo, hi)), 6)

    generators = []
    for i in range(n_gen):
        generators.append({
            "id": f"DG{i + 1}",
            "alpha": draw("alpha"),
            "beta": draw("beta"),
            "gamma": draw("gamma"),
            "p_max": draw("gen_p_max"),
        })
    consumers = []
    for j in range(n_load):
        consumers.append({
            "id": f"L{j + 1}",
            "sigma": draw("sigma"),
            "omega": draw("omega"),
            "p_max": draw("load_p_max"),
        })
    return {
        "version": SCHEMA_VERSION,
        "generators": generators,
        "consumers": consumers,
        "graph": {"preset": topology},
    }


def dump_scenario(doc: Mapping) -> str:
    return json.dumps(doc, indent=2) + "\n"


def write_scenario(doc: Mapping, path: str | Path) -> None:
    Path(path).write_text(dump_scenario(doc), encoding="utf-8")
