"""Alternative scenarios that no given set of observers can tell apart from the original.

Each construction changes some initial values and compensates in the
perturbation signals so that the outputs of the observable agents stay
exactly the same.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np
import scipy.linalg

from .graph import laplacian, islands, partition_island
from .signals import Constant, ExpDecay, LinearFilter
from .sim import Scenario, Trajectory, resolve_step, simulate


class ConstructionError(ValueError):
    pass


@dataclass(frozen=True)
class AlternativePair:
    original: Scenario
    alternative: Scenario
    observable: frozenset
    construction: str
    params: dict = field(default_factory=dict)

    @property
    def hidden(self) -> frozenset:
        return frozenset(self.original.graph.nodes) - self.observable


def _replace(seq, updates: Mapping[int, object]):
    out = list(seq)
    for node, value in updates.items():
        out[node - 1] = value
    return tuple(out)


def island_alternative(s: Scenario, agent: int, delta_x3: Mapping[int, float]) -> AlternativePair:
    """Move the hidden members (V3) of one island of ``agent`` by ``delta_x3``.

    The V2 members absorb the change: their initial values shift by
    ``-A23 L33^-1 delta``, their g cancels their own state deviation and their
    f cancels what they hear from the hidden members.
    """
    delta_x3 = {int(k): float(v) for k, v in delta_x3.items()}
    if not delta_x3:
        raise ConstructionError("delta_x3 must name at least one hidden agent")
    g = s.graph
    owner = [isl for isl in islands(g, agent) if set(delta_x3) <= isl]
    if not owner:
        raise ConstructionError(f"agents {sorted(delta_x3)} do not share one island of agent {agent}")
    island = owner[0]
    v2, v3, _ = partition_island(g, agent, island)
    if not set(delta_x3) <= v3:
        raise ConstructionError(f"agents {sorted(set(delta_x3) - v3)} are heard directly by agent {agent}")
    if not v2:
        raise ConstructionError(f"island {sorted(island)} has no V2 member to absorb the change")

    v2s, v3s = sorted(v2), sorted(v3)
    i2 = [i - 1 for i in v2s]
    i3 = [i - 1 for i in v3s]
    L = laplacian(g)
    L33 = L[np.ix_(i3, i3)]
    A23 = g.weights[np.ix_(i2, i3)]
    dx3 = np.array([delta_x3.get(i, 0.0) for i in v3s])
    lu = scipy.linalg.lu_factor(L33)
    if np.any(np.abs(np.diag(lu[0])) < 1e-12 * max(1.0, np.abs(L33).max())):
        raise ConstructionError("L33 is singular")
    dx2 = -A23 @ scipy.linalg.lu_solve(lu, dx3)

    d = g.out_degree()
    x0, f, gs = {}, {}, {}
    for k, i in enumerate(v3s):
        x0[i] = s.x0[i - 1] + dx3[k]
    for k, i in enumerate(v2s):
        x0[i] = s.x0[i - 1] + dx2[k]
        gs[i] = s.g[i - 1] - ExpDecay(dx2[k], d[i - 1]) if dx2[k] != 0 else s.g[i - 1]
        if np.any(A23[k]) and np.any(dx3):
            w = LinearFilter(-L33, A23[k], dx3)
            f[i] = s.f[i - 1] - w
        else:
            f[i] = s.f[i - 1]
    alt = s.with_(x0=_replace(s.x0, x0), f=_replace(s.f, f), g=_replace(s.g, gs))
    observable = frozenset(g.nodes) - v3
    return AlternativePair(s, alt, observable, "island",
                           {"agent": agent, "island": sorted(island), "delta_x3": delta_x3,
                            "delta_x2": dict(zip(v2s, dx2.tolist()))})


def external_scalar_alternative(s: Scenario, visible: int, hidden: int, delta: float) -> AlternativePair:
    """Single hidden out-neighbor version of the island construction.

    The formulas are exact when ``visible`` is the only agent that listens to
    ``hidden``; otherwise output equality is only checked by simulation.
    """
    g = s.graph
    if hidden not in g.out_neighbors(visible):
        raise ConstructionError(f"agent {hidden} is not an out-neighbor of agent {visible}")
    d = g.out_degree()
    a = g.weight(visible, hidden)
    l_hh = d[hidden - 1]
    if l_hh <= 0:
        raise ConstructionError(f"agent {hidden} listens to nobody")
    dv = -a / l_hh * delta
    x0 = {hidden: s.x0[hidden - 1] + delta, visible: s.x0[visible - 1] + dv}
    f = {visible: s.f[visible - 1] - a * ExpDecay(delta, l_hh)} if delta else {}
    gs = {visible: s.g[visible - 1] - ExpDecay(dv, d[visible - 1])} if dv else {}
    alt = s.with_(x0=_replace(s.x0, x0), f=_replace(s.f, f), g=_replace(s.g, gs))
    return AlternativePair(s, alt, frozenset(g.nodes) - {hidden}, "external_scalar",
                           {"visible": visible, "hidden": hidden, "delta": delta})


def alpha_shift_alternative(s: Scenario, a: float) -> AlternativePair:
    """Shift every state by -a and move it into a constant output offset."""
    d = s.graph.out_degree()
    if a == 0:
        alt = s
    else:
        alt = s.with_(
            x0=tuple(x - a for x in s.x0),
            f=tuple(fi - Constant(d[i] * a) for i, fi in enumerate(s.f)),
            g=tuple(gi + Constant(a) for gi in s.g),
        )
    return AlternativePair(s, alt, frozenset(s.graph.nodes), "alpha_shift", {"a": a})


def beta_exchange_alternative(s: Scenario, i: int, k: int, beta_ik: float, d: float) -> AlternativePair:
    """Trade ``beta_ik`` of initial value from agent i to agent k behind decaying signals."""
    if i == k:
        raise ConstructionError("i and k must differ")
    deg = s.graph.out_degree()
    di, dk = deg[i - 1], deg[k - 1]
    if not d > max(di, dk):
        raise ConstructionError(f"d = {d} must exceed both out-degrees ({di:g}, {dk:g})")
    if beta_ik == 0:
        return AlternativePair(s, s, frozenset(s.graph.nodes), "beta_exchange",
                               {"i": i, "k": k, "beta_ik": beta_ik, "d": d})
    x0 = {i: s.x0[i - 1] - beta_ik, k: s.x0[k - 1] + beta_ik}
    f = {i: s.f[i - 1] + ExpDecay(d * beta_ik, di + d), k: s.f[k - 1] - ExpDecay(d * beta_ik, dk + d)}
    gs = {i: s.g[i - 1] + ExpDecay(beta_ik, di + d), k: s.g[k - 1] - ExpDecay(beta_ik, dk + d)}
    alt = s.with_(x0=_replace(s.x0, x0), f=_replace(s.f, f), g=_replace(s.g, gs))
    return AlternativePair(s, alt, frozenset(s.graph.nodes), "beta_exchange",
                           {"i": i, "k": k, "beta_ik": beta_ik, "d": d})


def output_distance(tr: Trajectory, tr2: Trajectory, agents: Iterable[int]) -> float:
    if tr.times.shape != tr2.times.shape or not np.array_equal(tr.times, tr2.times):
        raise ValueError("trajectories are sampled on different grids")
    cols = [a - 1 for a in sorted(agents)]
    if not cols:
        return 0.0
    return float(np.max(np.abs(tr.y[:, cols] - tr2.y[:, cols])))


@dataclass
class PairCheck:
    max_dy: dict[int, float]
    observable_distance: float
    original: Trajectory
    alternative: Trajectory

    def to_dict(self) -> dict:
        return {"max_dy": {str(k): v for k, v in self.max_dy.items()},
                "observable_distance": self.observable_distance}


def verify_pair(pair: AlternativePair) -> PairCheck:
    """Simulate both sides on a common step and compare outputs agent by agent."""
    h = min(resolve_step(pair.original), resolve_step(pair.alternative))
    tr = simulate(pair.original.with_(step=h))
    tr2 = simulate(pair.alternative.with_(step=h))
    if tr2.times.shape != tr.times.shape:
        raise ValueError("alternative run produced a different grid")
    per_agent = {a: output_distance(tr, tr2, [a]) for a in pair.original.graph.nodes}
    return PairCheck(per_agent, output_distance(tr, tr2, pair.observable), tr, tr2)
