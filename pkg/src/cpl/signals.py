"""Perturbation signals and numeric admissibility checks.

A signal is a bounded scalar function of time built from closed-form leaves
(constants, exponential decays, chirps) and linear-filter leaves, combined by
sums and scalings.  Every check here works by co-integrating an accumulator or
filter state with the shared RK4 integrator and reading off its settled value.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from numbers import Real
from typing import Sequence

import numpy as np

from .graph import Digraph, positive_definite, reduced_laplacian
from .integrate import Assembly, LinearSystem, choose_step

DEFAULT_HORIZON = 60.0
DEFAULT_TOL = 1e-3
TAIL_FRACTION = 0.2
TAIL_WINDOWS = 4


class SignalError(ValueError):
    pass


def _coerce_floats(obj, names):
    for name in names:
        v = getattr(obj, name)
        if isinstance(v, bool) or not isinstance(v, Real) or not math.isfinite(v):
            raise SignalError(f"{type(obj).__name__}.{name} must be a finite number, got {v!r}")
        object.__setattr__(obj, name, float(v))


class Signal:
    is_filter = False

    def terms(self) -> list[tuple[float, "Signal"]]:
        """Flatten into ``(coef, unit leaf)`` pairs."""
        raise NotImplementedError

    def rate(self, horizon: float) -> float:
        """Fastest rate or instantaneous frequency over [0, horizon]."""
        return max((leaf.rate(horizon) for _, leaf in self.terms()), default=0.0)

    def __call__(self, t):
        return evaluate(self, t)

    def __add__(self, other):
        if isinstance(other, Real):
            other = Constant(float(other))
        if not isinstance(other, Signal):
            return NotImplemented
        return Sum((self, other))

    __radd__ = __add__

    def __neg__(self):
        return Scaled(-1.0, self)

    def __sub__(self, other):
        if isinstance(other, Real):
            other = Constant(float(other))
        if not isinstance(other, Signal):
            return NotImplemented
        return Sum((self, -other))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, factor):
        if not isinstance(factor, Real):
            return NotImplemented
        return Scaled(float(factor), self)

    __rmul__ = __mul__


@dataclass(frozen=True)
class Constant(Signal):
    value: float = 0.0

    def __post_init__(self):
        _coerce_floats(self, ("value",))

    def terms(self):
        return [(self.value, Constant(1.0))] if self.value != 0.0 else []

    def values(self, t):
        return np.full(np.shape(t), self.value)

    def rate(self, horizon):
        return 0.0


@dataclass(frozen=True)
class ExpDecay(Signal):
    amplitude: float
    decay: float

    def __post_init__(self):
        _coerce_floats(self, ("amplitude", "decay"))
        if not self.decay > 0:
            raise SignalError(f"decay rate must be positive, got {self.decay}")

    def terms(self):
        return [(self.amplitude, ExpDecay(1.0, self.decay))] if self.amplitude != 0.0 else []

    def values(self, t):
        return self.amplitude * np.exp(-self.decay * np.asarray(t, dtype=float))

    def rate(self, horizon):
        return self.decay


@dataclass(frozen=True)
class Chirp(Signal):
    """``amplitude * sin(phase + quad * t**2 + lin * t)``."""

    amplitude: float
    phase: float
    quad: float
    lin: float = 0.0

    def __post_init__(self):
        _coerce_floats(self, ("amplitude", "phase", "quad", "lin"))

    def terms(self):
        return [(self.amplitude, Chirp(1.0, self.phase, self.quad, self.lin))] if self.amplitude != 0.0 else []

    def values(self, t):
        t = np.asarray(t, dtype=float)
        return self.amplitude * np.sin(self.phase + self.quad * t * t + self.lin * t)

    def rate(self, horizon):
        return max(abs(self.lin), abs(2.0 * self.quad * horizon + self.lin))


def _as_tuple(a, ndim):
    arr = np.array(a, dtype=float)
    if ndim == 2:
        return tuple(tuple(float(v) for v in row) for row in np.atleast_2d(arr))
    return tuple(float(v) for v in np.atleast_1d(arr))


@dataclass(frozen=True)
class LinearFilter(Signal):
    """Output ``C s(t)`` of ``s' = M s``, ``s(0) = initial``.

    Construction requires ``M + M^T`` negative semidefinite, which keeps
    ``|s(t)|`` nonincreasing.
    """

    matrix: tuple
    output: tuple
    initial: tuple
    is_filter = True

    def __post_init__(self):
        M = np.array(self.matrix, dtype=float)
        M = M.reshape(1, 1) if M.ndim == 0 else np.atleast_2d(M)
        k = M.shape[0]
        object.__setattr__(self, "matrix", _as_tuple(M, 2))
        object.__setattr__(self, "output", _as_tuple(self.output, 1))
        object.__setattr__(self, "initial", _as_tuple(self.initial, 1))
        if M.shape != (k, k) or len(self.output) != k or len(self.initial) != k:
            raise SignalError("filter needs square matrix with matching output row and initial state")
        if not np.all(np.isfinite(M)):
            raise SignalError("filter matrix must be finite")
        if not positive_definite(-(M + M.T) + 1e-12 * np.eye(k)):
            raise SignalError("filter matrix fails the boundedness certificate M + M^T <= 0")

    @property
    def state_key(self):
        return (self.matrix, self.initial)

    def terms(self):
        return [(1.0, self)] if any(self.output) and any(self.initial) else []

    def rate(self, horizon):
        return float(np.abs(np.array(self.matrix)).sum(axis=1).max())

    def values(self, t):
        """Integrates the filter up to each requested time."""
        t = np.asarray(t, dtype=float)
        flat = t.ravel()
        order = np.argsort(flat, kind="stable")
        out = np.empty(len(flat))
        M = np.array(self.matrix)
        C = np.array(self.output)
        s = np.array(self.initial)
        now = 0.0
        h0 = choose_step(self.rate(1.0))
        for idx in order:
            target = flat[idx]
            if target > now:
                sys = LinearSystem(M=M, B=np.zeros((len(s), 0)), sources=[], z0=s)
                _, states = sys.integrate(target - now, min(h0, target - now), max_samples=1)
                s, now = states[-1], target
            out[idx] = C @ s
        return out.reshape(t.shape)


@dataclass(frozen=True)
class Sum(Signal):
    parts: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "parts", tuple(self.parts))
        if not all(isinstance(p, Signal) for p in self.parts):
            raise SignalError("Sum parts must be Signals")

    def terms(self):
        return [term for p in self.parts for term in p.terms()]


@dataclass(frozen=True)
class Scaled(Signal):
    factor: float
    signal: Signal

    def __post_init__(self):
        _coerce_floats(self, ("factor",))
        if not isinstance(self.signal, Signal):
            raise SignalError("Scaled wraps a Signal")

    def terms(self):
        if self.factor == 0.0:
            return []
        return [(self.factor * c, leaf) for c, leaf in self.signal.terms()]


ZERO = Constant(0.0)


def evaluate(s: Signal, t):
    """Value of ``s`` at time(s) ``t >= 0``."""
    arr = np.asarray(t, dtype=float)
    if np.any(arr < 0):
        raise SignalError("signals are defined for t >= 0 only")
    total = np.zeros(arr.shape)
    for c, leaf in s.terms():
        total = total + c * leaf.values(arr)
    return float(total) if total.ndim == 0 else total


# ----------------------------------------------------------------------------
# JSON form

def to_json(s: Signal) -> dict:
    if isinstance(s, Constant):
        return {"kind": "constant", "value": s.value}
    if isinstance(s, ExpDecay):
        return {"kind": "exp_decay", "amp": s.amplitude, "rate": s.decay}
    if isinstance(s, Chirp):
        return {"kind": "chirp", "amp": s.amplitude, "phase": s.phase, "quad": s.quad, "lin": s.lin}
    if isinstance(s, LinearFilter):
        return {"kind": "filter", "matrix": [list(r) for r in s.matrix], "output": list(s.output),
                "initial": list(s.initial)}
    if isinstance(s, Sum):
        return {"kind": "sum", "terms": [to_json(p) for p in s.parts]}
    if isinstance(s, Scaled):
        return {"kind": "scale", "factor": s.factor, "signal": to_json(s.signal)}
    raise SignalError(f"cannot serialise {type(s).__name__}")


_FIELDS = {
    "constant": ({"value"}, set()),
    "exp_decay": ({"amp", "rate"}, set()),
    "chirp": ({"amp", "phase", "quad"}, {"lin"}),
    "filter": ({"matrix", "output", "initial"}, set()),
    "sum": ({"terms"}, set()),
    "scale": ({"factor", "signal"}, set()),
}


def _number(d, key):
    v = d[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise SignalError(f"{key!r} must be a finite number, got {v!r}")
    return float(v)


def from_json(d) -> Signal:
    if isinstance(d, (int, float)) and not isinstance(d, bool):
        return Constant(float(d))
    if not isinstance(d, dict) or "kind" not in d:
        raise SignalError(f"signal must be an object with a 'kind', got {d!r}")
    kind = d["kind"]
    if kind not in _FIELDS:
        raise SignalError(f"unknown signal kind {kind!r}")
    required, optional = _FIELDS[kind]
    keys = set(d) - {"kind"}
    if keys - required - optional:
        raise SignalError(f"unknown field(s) {sorted(keys - required - optional)} in {kind} signal")
    if required - keys:
        raise SignalError(f"missing field(s) {sorted(required - keys)} in {kind} signal")
    if kind == "constant":
        return Constant(_number(d, "value"))
    if kind == "exp_decay":
        return ExpDecay(_number(d, "amp"), _number(d, "rate"))
    if kind == "chirp":
        return Chirp(_number(d, "amp"), _number(d, "phase"), _number(d, "quad"), _number(d, "lin") if "lin" in d else 0.0)
    if kind == "filter":
        try:
            return LinearFilter(d["matrix"], d["output"], d["initial"])
        except (TypeError, ValueError) as exc:
            raise SignalError(f"bad filter: {exc}") from None
    if kind == "sum":
        if not isinstance(d["terms"], list):
            raise SignalError("'terms' must be a list")
        return Sum(tuple(from_json(p) for p in d["terms"]))
    return Scaled(_number(d, "factor"), from_json(d["signal"]))


# ----------------------------------------------------------------------------
# settled values of co-integrated states

def tail_limit(times: np.ndarray, values: np.ndarray, tol: float, fraction: float = TAIL_FRACTION):
    """Estimate the limit of a trace from its final ``fraction`` of the horizon.

    The estimate is the mean over that tail.  The trace counts as converged
    when the means of ``TAIL_WINDOWS`` equal sub-windows of the tail agree to
    within ``tol``; averaging suppresses the slowly decaying ripple of chirp
    integrals while still catching drift.
    """
    values = np.asarray(values, dtype=float)
    start = times[-1] * (1.0 - fraction)
    mask = times >= start
    tail_t, tail_v = times[mask], values[mask]
    edges = np.linspace(start, times[-1], TAIL_WINDOWS + 1)
    means = []
    for k in range(TAIL_WINDOWS):
        sel = (tail_t >= edges[k]) & (tail_t <= edges[k + 1])
        means.append(tail_v[sel].mean(axis=0))
    means = np.array(means)
    spread = np.max(means.max(axis=0) - means.min(axis=0))
    ok = bool(np.all(np.isfinite(means)) and spread <= tol)
    return tail_v.mean(axis=0), ok


def beta_limit(f: Signal, g: Signal, d_out: float, horizon: float = DEFAULT_HORIZON, tol: float = DEFAULT_TOL,
               step: float | None = None) -> tuple[float, bool]:
    """Limit of the integral of ``f + d_out * g``."""
    if horizon <= 0 or d_out < 0:
        raise ValueError("need horizon > 0 and d_out >= 0")
    asm = Assembly()
    acc = asm.add_state("acc")
    asm.feed_signal(acc, f)
    asm.feed_signal(acc, g, d_out)
    times, states, _ = asm.run(horizon, step)
    beta, ok = tail_limit(times, states[:, acc], tol)
    return float(beta), ok


def alpha_limit(g: Signal, horizon: float = DEFAULT_HORIZON, tol: float = DEFAULT_TOL,
                step: float | None = None) -> tuple[float, bool]:
    """Settled output of the unit low-pass filter ``z' = -z + g``."""
    if horizon <= 0:
        raise ValueError("need horizon > 0")
    asm = Assembly()
    z = asm.add_state("lowpass")
    asm.feed_state(z, z, -1.0)
    asm.feed_signal(z, g)
    times, states, _ = asm.run(horizon, step)
    alpha, ok = tail_limit(times, states[:, z], tol)
    return float(alpha), ok


@dataclass
class AdmissibilityReport:
    beta: list[float]
    alpha: list[float]
    sum_beta: float
    converged: dict[str, list[bool]]
    horizon: float
    tol: float
    admissible: bool
    reasons: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "admissible": self.admissible,
            "beta": self.beta,
            "alpha": self.alpha,
            "sum_beta": self.sum_beta,
            "converged": self.converged,
            "horizon": self.horizon,
            "tol": self.tol,
            "reasons": self.reasons,
        }


def network_admissibility(pairs: Sequence[tuple[Signal, Signal]], graph: Digraph, horizon: float = DEFAULT_HORIZON,
                          tol: float = DEFAULT_TOL, step: float | None = None) -> AdmissibilityReport:
    """Per-agent beta and alpha limits plus the network conditions on them.

    Admissible means every limit settled, the betas sum to zero within
    ``n * tol`` and all alphas agree within ``tol``.
    """
    n = graph.n
    if len(pairs) != n:
        raise ValueError(f"expected {n} (f, g) pairs, got {len(pairs)}")
    d = graph.out_degree()
    asm = Assembly()
    acc = [asm.add_state(f"acc{i + 1}") for i in range(n)]
    low = [asm.add_state(f"lowpass{i + 1}") for i in range(n)]
    for i, (f, g) in enumerate(pairs):
        asm.feed_signal(acc[i], f)
        asm.feed_signal(acc[i], g, d[i])
        asm.feed_state(low[i], low[i], -1.0)
        asm.feed_signal(low[i], g)
    times, states, _ = asm.run(horizon, step)
    beta, beta_ok = zip(*(tail_limit(times, states[:, k], tol) for k in acc))
    alpha, alpha_ok = zip(*(tail_limit(times, states[:, k], tol) for k in low))
    beta = [float(b) for b in beta]
    alpha = [float(a) for a in alpha]
    reasons = []
    if not all(beta_ok):
        reasons.append(f"beta integral not settled for agents {[i + 1 for i, ok in enumerate(beta_ok) if not ok]}")
    if not all(alpha_ok):
        reasons.append(f"alpha filter not settled for agents {[i + 1 for i, ok in enumerate(alpha_ok) if not ok]}")
    sum_beta = float(sum(beta))
    if abs(sum_beta) > n * tol:
        reasons.append(f"sum of betas is {sum_beta:.6g}, not zero")
    if max(alpha) - min(alpha) > tol:
        reasons.append(f"alphas differ (range {min(alpha):.6g} .. {max(alpha):.6g})")
    return AdmissibilityReport(
        beta=beta, alpha=alpha, sum_beta=sum_beta,
        converged={"beta": list(beta_ok), "alpha": list(alpha_ok)},
        horizon=float(times[-1]), tol=tol, admissible=not reasons, reasons=reasons,
    )


@dataclass
class CoupledCheck:
    """Network-level limits: the summed integral and the reduced filtered state."""

    sum_limit: float
    p_limit: np.ndarray
    converged: bool
    tol: float

    @property
    def sum_ok(self) -> bool:
        return self.converged and abs(self.sum_limit) <= self.tol

    @property
    def p_ok(self) -> bool:
        return self.converged and bool(np.all(np.abs(self.p_limit) <= self.tol))

    @property
    def passed(self) -> bool:
        return self.sum_ok and self.p_ok

    def __bool__(self):
        return self.passed


def coupled_admissibility_check(pairs: Sequence[tuple[Signal, Signal]], graph: Digraph,
                                horizon: float = DEFAULT_HORIZON, tol: float = DEFAULT_TOL,
                                step: float | None = None) -> CoupledCheck:
    """Joint condition on the whole network.

    Integrates ``s' = 1^T (f + A g)`` and ``p' = -L+ p + R^T (f + A g)`` from
    zero; both must settle at zero.
    """
    n = graph.n
    if len(pairs) != n:
        raise ValueError(f"expected {n} (f, g) pairs, got {len(pairs)}")
    red = reduced_laplacian(graph)
    A = graph.weights
    asm = Assembly()
    s = asm.add_state("sum")
    p = [asm.add_state(f"p{k + 1}") for k in range(n - 1)]
    asm.feed_block(p, p, -red.Lplus)
    # coefficient of f_j and of g_j in each row: c^T (f + A g)
    rows = [(s, np.ones(n))] + [(p[k], red.R[:, k]) for k in range(n - 1)]
    for row, c in rows:
        cg = c @ A
        for j, (f, g) in enumerate(pairs):
            asm.feed_signal(row, f, c[j])
            asm.feed_signal(row, g, cg[j])
    times, states, _ = asm.run(horizon, step)
    limits, ok = tail_limit(times, states[:, [s] + p], tol)
    return CoupledCheck(sum_limit=float(limits[0]), p_limit=np.asarray(limits[1:]), converged=ok, tol=tol)


def lowpass_limit_oracle(u: Sequence[Signal], E, horizon: float = DEFAULT_HORIZON, tol: float = DEFAULT_TOL,
                         step: float | None = None) -> np.ndarray:
    """Settled state of ``z' = E z + u(t)``, ``z(0) = 0``, for ``E + E^T`` negative definite."""
    E = np.atleast_2d(np.asarray(E, dtype=float))
    if E.shape != (len(u), len(u)):
        raise ValueError("E must be square with one row per input signal")
    if not positive_definite(-(E + E.T)):
        raise SignalError("E + E^T is not negative definite")
    asm = Assembly()
    z = [asm.add_state(f"z{k + 1}") for k in range(len(u))]
    asm.feed_block(z, z, E)
    for k, sig in enumerate(u):
        asm.feed_signal(z[k], sig)
    times, states, _ = asm.run(horizon, step)
    limit, _ = tail_limit(times, states[:, z], tol)
    return np.asarray(limit)
