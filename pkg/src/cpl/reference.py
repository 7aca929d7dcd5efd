"""Reference graphs and the five-agent benchmark scenario.

The five-agent graph has agent 1 listening to 2, 4 and 5; agents 2 and 3 form
a chain back to 1, and 4, 5 listen to 1 and to each other.  Reference values
are (3, 2, 5, -3, -1) with average 1.2.

Benchmark perturbations for agent l (1-based):

    g_l(t) = sin(l*pi/12 + l*pi*t**2)
    f_l(t) = -d_l * (sin(l*pi/12) + cos(l*pi/12)) * sqrt(2l)/(4l) * exp(-t)

The Fresnel-type integral of g_l equals (sin + cos)(l*pi/12) * sqrt(2l)/(4l),
so f_l cancels d_l times it and every agent's integral limit is zero.  The
``corrected=False`` variant keeps the opposite sign on f_l; there both terms
add up and the integral limit is twice that value.
"""
from __future__ import annotations

import math

from .graph import Digraph
from .signals import Chirp, ExpDecay
from .sim import Scenario

REFERENCE_X0 = (3.0, 2.0, 5.0, -3.0, -1.0)
REFERENCE_AVERAGE = 1.2


def five_agent_graph() -> Digraph:
    return Digraph.from_edges(5, [
        (1, 2, 1.0), (1, 4, 1.0), (1, 5, 1.0),
        (2, 3, 1.0),
        (3, 1, 1.0),
        (4, 1, 1.0), (4, 5, 1.0),
        (5, 1, 1.0), (5, 4, 1.0),
    ])


def eight_node_graph() -> Digraph:
    """Eight-node balanced digraph where node 1 is a cut vertex with three islands."""
    return Digraph.from_edges(8, [
        (1, 2, 1.0), (1, 3, 1.0), (2, 3, 2.0), (3, 4, 3.0), (4, 2, 1.0), (4, 1, 2.0),
        (1, 5, 3.0), (5, 1, 3.0),
        (1, 6, 3.0), (6, 1, 3.0),
        (6, 7, 1.0), (7, 8, 1.0), (8, 6, 1.0),
    ])


def fresnel_value(phase: float, quad: float) -> float:
    """Closed form of the integral of sin(phase + quad t^2) over [0, inf), quad > 0."""
    return (math.sin(phase) + math.cos(phase)) * 0.5 * math.sqrt(math.pi / (2.0 * quad))


def reference_signals(graph: Digraph | None = None, corrected: bool = True):
    graph = graph or five_agent_graph()
    d = graph.out_degree()
    sign = -1.0 if corrected else 1.0
    f, g = [], []
    for l in range(1, graph.n + 1):
        phase, quad = l * math.pi / 12.0, l * math.pi
        g.append(Chirp(1.0, phase, quad))
        f.append(ExpDecay(sign * d[l - 1] * fresnel_value(phase, quad), 1.0))
    return tuple(f), tuple(g)


def reference_scenario(horizon: float = 30.0, step: float | None = None, corrected: bool = True,
                       perturbed: bool = True) -> Scenario:
    graph = five_agent_graph()
    if perturbed:
        f, g = reference_signals(graph, corrected)
    else:
        f = g = None
    return Scenario(graph=graph, x0=REFERENCE_X0, f=f, g=g, horizon=horizon, step=step)
