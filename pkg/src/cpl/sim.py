"""Perturbed Laplacian consensus: x' = -L x + f + A g, y = x + g."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Protocol, Sequence

import numpy as np

from .graph import Digraph, require_consensus_graph
from .integrate import MAX_SAMPLES, Assembly, choose_step
from .signals import ZERO, Signal


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class Scenario:
    graph: Digraph
    x0: tuple
    f: tuple
    g: tuple
    horizon: float = 30.0
    step: float | None = None  # None: default step, reduced automatically if needed
    allow_unbalanced: bool = False

    def __post_init__(self):
        n = self.graph.n
        x0 = tuple(float(v) for v in self.x0)
        f = tuple(self.f) if self.f is not None else (ZERO,) * n
        g = tuple(self.g) if self.g is not None else (ZERO,) * n
        object.__setattr__(self, "x0", x0)
        object.__setattr__(self, "f", f)
        object.__setattr__(self, "g", g)
        if not (len(x0) == len(f) == len(g) == n):
            raise ScenarioError(f"need {n} initial values and signal pairs, got {len(x0)}/{len(f)}/{len(g)}")
        if not all(isinstance(s, Signal) for s in f + g):
            raise ScenarioError("f and g entries must be Signal objects")
        if not np.all(np.isfinite(x0)):
            raise ScenarioError("initial values must be finite")
        if not self.horizon > 0:
            raise ScenarioError(f"horizon must be positive, got {self.horizon}")
        if self.step is not None and not (0 < self.step <= self.horizon):
            raise ScenarioError(f"step must lie in (0, horizon], got {self.step}")
        if not self.allow_unbalanced:
            try:
                require_consensus_graph(self.graph)
            except ValueError as exc:
                raise ScenarioError(str(exc)) from None

    @property
    def n(self) -> int:
        return self.graph.n

    def with_(self, **changes) -> "Scenario":
        fields = dict(graph=self.graph, x0=self.x0, f=self.f, g=self.g, horizon=self.horizon,
                      step=self.step, allow_unbalanced=self.allow_unbalanced)
        fields.update(changes)
        return Scenario(**fields)


@dataclass
class Trajectory:
    times: np.ndarray
    x: np.ndarray
    y: np.ndarray
    aux: dict[str, np.ndarray] = field(default_factory=dict)
    step: float = 0.0

    @property
    def n(self) -> int:
        return self.x.shape[1]


@dataclass
class Layout:
    """State indices of the consensus part, handed to probes."""

    scenario: Scenario
    x: list[int]
    acc: list[int]


class Probe(Protocol):
    def attach(self, asm: Assembly, layout: Layout) -> dict[str, int]: ...


def assemble(s: Scenario, probes: Iterable[Probe] = ()) -> tuple[Assembly, Layout, dict[str, int]]:
    asm = Assembly()
    n = s.n
    A = s.graph.weights
    d = s.graph.out_degree()
    x = [asm.add_state(f"x{i + 1}", s.x0[i]) for i in range(n)]
    # per-agent integral of f_i + d_i g_i, used for conservation and observer error formulas
    acc = [asm.add_state(f"acc{i + 1}") for i in range(n)]
    for i in range(n):
        asm.feed_state(x[i], x[i], -d[i])
        asm.feed_signal(x[i], s.f[i])
        asm.feed_outputs(x[i], A[i], x, s.g)
        asm.feed_signal(acc[i], s.f[i])
        asm.feed_signal(acc[i], s.g[i], d[i])
    layout = Layout(scenario=s, x=x, acc=acc)
    named = {f"acc{i + 1}": acc[i] for i in range(n)}
    for probe in probes:
        named.update(probe.attach(asm, layout))
    return asm, layout, named


def resolve_step(s: Scenario, probes: Iterable[Probe] = ()) -> float:
    """Step a run of ``s`` would use (validates an explicit step)."""
    asm, _, _ = assemble(s, probes)
    return min(choose_step(asm.rate(s.horizon), s.step), s.horizon)


def simulate(s: Scenario, probes: Sequence[Probe] = (), max_samples: int = MAX_SAMPLES) -> Trajectory:
    """RK4 run of the augmented system; every probe's states ride along."""
    asm, layout, named = assemble(s, probes)
    times, states, h = asm.run(s.horizon, s.step, max_samples)
    x = states[:, layout.x]
    y = x + np.column_stack([asm.trace(g, times, states) for g in s.g])
    aux = {name: states[:, k] for name, k in named.items()}
    return Trajectory(times=times, x=x, y=y, aux=aux, step=h)


def conservation_residual(tr: Trajectory, s: Scenario) -> float:
    """Largest deviation of sum(x) from its initial value plus the summed accumulators."""
    total_acc = sum(tr.aux[f"acc{i + 1}"] for i in range(s.n))
    drift = tr.x.sum(axis=1) - tr.x[0].sum() - total_acc
    return float(np.max(np.abs(drift)))


def consensus_error(tr: Trajectory) -> np.ndarray:
    return np.abs(tr.x[-1] - tr.x[0].mean())


def write_csv(tr: Trajectory, path, aux: Sequence[str] | None = None, extra: dict[str, np.ndarray] | None = None):
    """CSV with ``t, x1..xN, y1..yN`` and optional named auxiliary columns."""
    n = tr.n
    cols = [tr.times[:, None], tr.x, tr.y]
    header = ["t"] + [f"x{i + 1}" for i in range(n)] + [f"y{i + 1}" for i in range(n)]
    for name in aux or ():
        cols.append(tr.aux[name][:, None])
        header.append(name)
    for name, trace in (extra or {}).items():
        cols.append(np.asarray(trace)[:, None])
        header.append(name)
    np.savetxt(path, np.hstack(cols), delimiter=",", header=",".join(header), comments="", fmt="%.17g")


def read_csv(path) -> tuple[list[str], np.ndarray]:
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return header, data
