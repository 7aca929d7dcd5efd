"""Passive attacker estimators, co-integrated with the consensus run.

internal  an agent that hears the target and all of the target's out-neighbors
          rebuilds the target's reference value from its own state.
external  an eavesdropper that intercepts the target's and its out-neighbors'
          outputs, with a low-pass filter standing in for the unknown state.
island    an agent recovers the mean reference value over the members of one
          of its islands that it cannot identify individually.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from .graph import can_identify_external, can_identify_internal, partition_island
from .integrate import Assembly
from .sim import Layout, Scenario, Trajectory, simulate

FINAL_FRACTION = 0.01


class ObserverError(ValueError):
    pass


def final_estimate(trace: np.ndarray, fraction: float = FINAL_FRACTION) -> float:
    """Mean over the last ``fraction`` of samples (at least one)."""
    k = max(1, int(round(len(trace) * fraction)))
    return float(np.mean(trace[-k:]))


@dataclass
class ObserverRun:
    name: str
    times: np.ndarray
    estimate: np.ndarray
    states: dict[str, np.ndarray]
    truth: float
    error: np.ndarray
    analytic_error: np.ndarray | None = None

    @property
    def final(self) -> float:
        return final_estimate(self.estimate)


def _zeta(asm: Assembly, layout: Layout, target: int, init: float, name: str) -> int:
    """zeta' = sum_j a_tj (y_t - y_j) for target t."""
    s = layout.scenario
    row = s.graph.weights[target - 1]
    z = asm.add_state(name, init)
    i = target - 1
    asm.feed_outputs(z, [row.sum() if j == i else 0.0 for j in range(s.n)], layout.x, s.g)
    asm.feed_outputs(z, row, layout.x, s.g, coef=-1.0)
    return z


@dataclass
class InternalObserver:
    observer: int
    target: int
    beta: float = 0.0
    check: bool = True

    @property
    def name(self) -> str:
        return f"obs_internal_{self.target}"

    def validate(self, s: Scenario):
        if self.check and not can_identify_internal(s.graph, self.observer, self.target):
            raise ObserverError(f"agent {self.observer} cannot identify agent {self.target}: "
                                "the target must be an out-neighbor whose out-neighbors the observer also hears")

    def attach(self, asm, layout):
        self.validate(layout.scenario)
        return {f"{self.name}.zeta": _zeta(asm, layout, self.target, -self.beta, "zeta")}

    def finish(self, tr: Trajectory, s: Scenario) -> ObserverRun:
        zeta = tr.aux[f"{self.name}.zeta"]
        o, t = self.observer - 1, self.target - 1
        nu = zeta + tr.x[:, o]
        analytic = tr.x[:, o] - tr.x[:, t] + tr.aux[f"acc{self.target}"] - self.beta
        truth = s.x0[t]
        return ObserverRun(self.name, tr.times, nu, {"zeta": zeta}, truth, nu - truth, analytic)


@dataclass
class ExternalObserver:
    target: int
    beta: float = 0.0
    alpha: float = 0.0
    eta0: float = 0.0
    intercepted: frozenset | None = None

    @property
    def name(self) -> str:
        return f"obs_external_{self.target}"

    def validate(self, s: Scenario):
        if not 1 <= self.target <= s.n:
            raise ObserverError(f"target {self.target} not in 1..{s.n}")
        if self.intercepted is not None and not can_identify_external(s.graph, self.target, self.intercepted):
            missing = (s.graph.out_neighbors(self.target) | {self.target}) - set(self.intercepted)
            raise ObserverError(f"intercepted set misses outputs of {sorted(missing)}")

    def attach(self, asm, layout):
        self.validate(layout.scenario)
        s = layout.scenario
        t = self.target - 1
        zeta = _zeta(asm, layout, self.target, -self.beta - self.alpha, "zeta")
        eta = asm.add_state("eta", self.eta0)
        asm.feed_state(eta, eta, -1.0)
        asm.feed_state(eta, layout.x[t], 1.0)
        asm.feed_signal(eta, s.g[t])
        # the two filtered parts of eta, kept apart for the error formula
        lx = asm.add_state("lowpass_x")
        asm.feed_state(lx, lx, -1.0)
        asm.feed_state(lx, layout.x[t], 1.0)
        lg = asm.add_state("lowpass_g")
        asm.feed_state(lg, lg, -1.0)
        asm.feed_signal(lg, s.g[t])
        return {f"{self.name}.zeta": zeta, f"{self.name}.eta": eta,
                f"{self.name}.lowpass_x": lx, f"{self.name}.lowpass_g": lg}

    def finish(self, tr: Trajectory, s: Scenario) -> ObserverRun:
        t = self.target - 1
        zeta, eta = tr.aux[f"{self.name}.zeta"], tr.aux[f"{self.name}.eta"]
        nu = zeta + eta
        eta_formula = (np.exp(-tr.times) * self.eta0 + tr.aux[f"{self.name}.lowpass_x"]
                       + tr.aux[f"{self.name}.lowpass_g"])
        analytic = eta_formula - tr.x[:, t] + tr.aux[f"acc{self.target}"] - self.beta - self.alpha
        truth = s.x0[t]
        return ObserverRun(self.name, tr.times, nu, {"zeta": zeta, "eta": eta}, truth, nu - truth, analytic)


@dataclass
class IslandObserver:
    agent: int
    island: frozenset
    betas: Mapping[int, float] = field(default_factory=dict)

    def __post_init__(self):
        self.island = frozenset(self.island)

    @property
    def name(self) -> str:
        return f"obs_island_{'-'.join(str(i) for i in sorted(self.island))}"

    def parts(self, s: Scenario):
        v2, v3, v4 = partition_island(s.graph, self.agent, self.island)
        if not v2:
            raise ObserverError(f"island {sorted(self.island)} has no out-neighbor of agent {self.agent} "
                                "whose out-neighbors escape the agent's view; every member is identifiable")
        return v2, v3, v4

    def attach(self, asm, layout):
        s = layout.scenario
        v2, _, v4 = self.parts(s)
        a = self.agent - 1
        named = {}
        for i in sorted(v4):
            named[f"{self.name}.zeta{i}"] = _zeta(asm, layout, i, -self.betas.get(i, 0.0), f"zeta{i}")
        eta0 = -sum(self.betas.get(i, 0.0) for i in self.island - {self.agent})
        eta = asm.add_state("eta", eta0)
        # eta' = -sum_{j in V2 u V4} a_{agent,j} (y_agent - y_j)
        w = np.zeros(s.n)
        for j in v2 | v4:
            w[j - 1] = s.graph.weights[a, j - 1]
        self_w = np.zeros(s.n)
        self_w[a] = -w.sum()
        asm.feed_outputs(eta, self_w, layout.x, s.g)
        asm.feed_outputs(eta, w, layout.x, s.g)
        named[f"{self.name}.eta"] = eta
        return named

    def finish(self, tr: Trajectory, s: Scenario) -> ObserverRun:
        v2, v3, v4 = self.parts(s)
        eta = tr.aux[f"{self.name}.eta"]
        zetas = {f"zeta{i}": tr.aux[f"{self.name}.zeta{i}"] for i in sorted(v4)}
        n23 = len(v2) + len(v3)
        mu = (eta - sum(zetas.values(), np.zeros_like(eta))) / n23 + tr.x[:, self.agent - 1]
        truth = float(np.mean([s.x0[i - 1] for i in v2 | v3]))
        return ObserverRun(self.name, tr.times, mu, {"eta": eta, **zetas}, truth, mu - truth)


def observe(s: Scenario, observers: Iterable) -> tuple[Trajectory, list[ObserverRun]]:
    """One simulation carrying every observer; returns the trajectory and their runs."""
    observers = list(observers)
    tr = simulate(s, probes=observers)
    return tr, [obs.finish(tr, s) for obs in observers]


def run_internal(s: Scenario, observer: int, target: int, beta: float = 0.0, check: bool = True) -> ObserverRun:
    return observe(s, [InternalObserver(observer, target, beta, check)])[1][0]


def run_external(s: Scenario, target: int, beta: float = 0.0, alpha: float = 0.0, eta0: float = 0.0,
                 intercepted: Iterable[int] | None = None) -> ObserverRun:
    ic = frozenset(intercepted) if intercepted is not None else None
    return observe(s, [ExternalObserver(target, beta, alpha, eta0, ic)])[1][0]


def run_island(s: Scenario, agent: int, island: Iterable[int], betas: Mapping[int, float] | None = None) -> ObserverRun:
    return observe(s, [IslandObserver(agent, frozenset(island), dict(betas or {}))])[1][0]
