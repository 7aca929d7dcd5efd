"""Strict JSON scenario files.

    {
      "version": 1,
      "graph": {"n": 5, "edges": [[1, 2, 1.0], ...]}      or {"family": "grid_lattice", "args": [4, 4]},
      "x0": [3, 2, 5, -3, -1],
      "f": [<signal>, ...],          optional, zero by default
      "g": [<signal>, ...],          optional, zero by default
      "horizon": 30.0,
      "step": null,                  optional; null picks the step automatically
      "knowledge": {"case": 1, "alpha": 0.0, "beta": [0, 0, 0, 0, 0]},   optional
      "allow_unbalanced": false      optional
    }

Unknown keys anywhere are rejected.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

from .graph import Digraph, GraphError, topology
from .signals import SignalError, from_json, to_json
from .sim import Scenario, ScenarioError

VERSION = 1
_TOP_REQUIRED = {"version", "graph", "x0", "horizon"}
_TOP_OPTIONAL = {"f", "g", "step", "knowledge", "allow_unbalanced"}


class ScenarioFileError(ValueError):
    pass


@dataclass(frozen=True)
class Knowledge:
    """What an attacker is assumed to know.

    case 1: alpha and every beta known.
    case 2: betas unknown, so no observer can be calibrated.
    case 3: betas known but alpha unknown, which blocks the eavesdropper.
    """

    case: int = 1
    alpha: float = 0.0
    beta: tuple | None = None

    def __post_init__(self):
        if self.case not in (1, 2, 3):
            raise ScenarioFileError(f"knowledge case must be 1, 2 or 3, got {self.case!r}")
        if self.beta is not None:
            object.__setattr__(self, "beta", tuple(float(b) for b in self.beta))

    def beta_of(self, agent: int) -> float:
        return 0.0 if self.beta is None else self.beta[agent - 1]


@dataclass(frozen=True)
class ScenarioFile:
    scenario: Scenario
    knowledge: Knowledge = Knowledge()


def _reject_constant(token):
    raise ScenarioFileError(f"non-finite number {token} is not allowed")


def _check_keys(d, required, optional, where):
    if not isinstance(d, dict):
        raise ScenarioFileError(f"{where} must be an object")
    extra = set(d) - required - optional
    if extra:
        raise ScenarioFileError(f"unknown field(s) {sorted(extra)} in {where}")
    missing = required - set(d)
    if missing:
        raise ScenarioFileError(f"missing field(s) {sorted(missing)} in {where}")


def _real(v, what):
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ScenarioFileError(f"{what} must be a finite number, got {v!r}")
    return float(v)


def _bool(v, what):
    if not isinstance(v, bool):
        raise ScenarioFileError(f"{what} must be true or false, got {v!r}")
    return v


def _int(v, what):
    if isinstance(v, bool) or not isinstance(v, int):
        raise ScenarioFileError(f"{what} must be an integer, got {v!r}")
    return v


def parse_graph_spec(d) -> Digraph:
    if isinstance(d, dict) and "family" in d:
        _check_keys(d, {"family", "args"}, set(), "graph")
        if not isinstance(d["args"], list):
            raise ScenarioFileError("graph.args must be a list")
        args = [_int(a, "family argument") for a in d["args"]]
        try:
            return topology(d["family"], *args)
        except TypeError:
            raise ScenarioFileError(f"wrong number of arguments for family {d['family']!r}") from None
    _check_keys(d, {"n", "edges"}, set(), "graph")
    n = _int(d["n"], "graph.n")
    if not isinstance(d["edges"], list):
        raise ScenarioFileError("graph.edges must be a list")
    edges = []
    for e in d["edges"]:
        if not isinstance(e, list) or len(e) != 3:
            raise ScenarioFileError(f"edge must be [i, j, weight], got {e!r}")
        edges.append((_int(e[0], "edge node"), _int(e[1], "edge node"), _real(e[2], "edge weight")))
    seen = set()
    for i, j, _ in edges:
        if (i, j) in seen:
            raise ScenarioFileError(f"duplicate edge ({i}, {j})")
        seen.add((i, j))
    return Digraph.from_edges(n, edges)


def _signals(lst, n, name):
    if lst is None:
        return None
    if not isinstance(lst, list) or len(lst) != n:
        raise ScenarioFileError(f"{name!r} must list one signal per agent ({n})")
    return tuple(from_json(s) for s in lst)


def from_dict(d) -> ScenarioFile:
    try:
        _check_keys(d, _TOP_REQUIRED, _TOP_OPTIONAL, "scenario")
        if d["version"] != VERSION:
            raise ScenarioFileError(f"unsupported version {d['version']!r}")
        graph = parse_graph_spec(d["graph"])
        n = graph.n
        if not isinstance(d["x0"], list) or len(d["x0"]) != n:
            raise ScenarioFileError(f"'x0' must list {n} numbers")
        x0 = tuple(_real(v, "x0 entry") for v in d["x0"])
        step = d.get("step")
        scen = Scenario(
            graph=graph, x0=x0,
            f=_signals(d.get("f"), n, "f"), g=_signals(d.get("g"), n, "g"),
            horizon=_real(d["horizon"], "horizon"),
            step=None if step is None else _real(step, "step"),
            allow_unbalanced=_bool(d.get("allow_unbalanced", False), "allow_unbalanced"),
        )
        k = d.get("knowledge", {})
        _check_keys(k, set(), {"case", "alpha", "beta"}, "knowledge")
        beta = k.get("beta")
        if beta is not None and (not isinstance(beta, list) or len(beta) != n):
            raise ScenarioFileError(f"knowledge.beta must list {n} numbers")
        know = Knowledge(
            case=_int(k.get("case", 1), "knowledge.case"),
            alpha=_real(k.get("alpha", 0.0), "knowledge.alpha"),
            beta=None if beta is None else tuple(_real(b, "beta entry") for b in beta),
        )
    except (GraphError, SignalError, ScenarioError) as exc:
        raise ScenarioFileError(str(exc)) from None
    return ScenarioFile(scen, know)


def to_dict(s: Scenario, knowledge: Knowledge | None = None) -> dict:
    d = {
        "version": VERSION,
        "graph": {"n": s.n, "edges": [[i, j, w] for i, j, w in s.graph.edges()]},
        "x0": list(s.x0),
        "f": [to_json(f) for f in s.f],
        "g": [to_json(g) for g in s.g],
        "horizon": s.horizon,
        "step": s.step,
        "allow_unbalanced": s.allow_unbalanced,
    }
    if knowledge is not None:
        d["knowledge"] = {"case": knowledge.case, "alpha": knowledge.alpha}
        if knowledge.beta is not None:
            d["knowledge"]["beta"] = list(knowledge.beta)
    return d


def loads(text: str) -> ScenarioFile:
    try:
        d = json.loads(text, parse_constant=_reject_constant)
    except json.JSONDecodeError as exc:
        raise ScenarioFileError(f"invalid JSON: {exc}") from None
    return from_dict(d)


def load(path) -> ScenarioFile:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ScenarioFileError(f"cannot read {path}: {exc}") from None
    return loads(text)


def dumps(s: Scenario, knowledge: Knowledge | None = None) -> str:
    return json.dumps(to_dict(s, knowledge), indent=2)


def dump(s: Scenario, path, knowledge: Knowledge | None = None) -> None:
    Path(path).write_text(dumps(s, knowledge) + "\n")
