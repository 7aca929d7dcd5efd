"""Fixed-step classical Runge-Kutta integration.

Two entry points share the same method:

* ``rk4`` steps an arbitrary right-hand side ``f(t, z)``.
* ``LinearSystem`` integrates ``z' = M z + B u(t)`` where ``u`` is a vector of
  closed-form time functions.  One RK4 step of a linear system is itself linear
  in ``(z, u(t), u(t + h/2), u(t + h))``, so the step is tabulated once as
  matrices and then applied to the forcing evaluated in bulk on the grid.  The
  result is the classical RK4 update, just without re-deriving the stages at
  every step.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

log = logging.getLogger(__name__)

DEFAULT_STEP = 1e-3
MAX_SAMPLES = 100_000
# resolution rule: h * (fastest rate or frequency) <= STEP_RESOLUTION
STEP_RESOLUTION = 0.1
_CHUNK = 16_384


class StepSizeError(ValueError):
    """Requested step violates the resolution rule."""


class NumericalError(ArithmeticError):
    """Integration produced non-finite values."""


def rk4_step(rhs: Callable[[float, np.ndarray], np.ndarray], t: float, z: np.ndarray, h: float) -> np.ndarray:
    k1 = rhs(t, z)
    k2 = rhs(t + 0.5 * h, z + 0.5 * h * k1)
    k3 = rhs(t + 0.5 * h, z + 0.5 * h * k2)
    k4 = rhs(t + h, z + h * k3)
    return z + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def time_grid(horizon: float, h: float) -> np.ndarray:
    """Uniform grid 0, h, 2h, ... ending exactly at ``horizon``.

    The last interval is shorter than ``h`` when ``horizon / h`` is not an
    integer (up to a relative slack of 1e-9).
    """
    if horizon <= 0 or h <= 0 or h > horizon:
        raise ValueError(f"need 0 < h <= horizon, got h={h}, horizon={horizon}")
    n_full = int(math.floor(horizon / h * (1 + 1e-9)))
    grid = np.arange(n_full + 1) * h
    if abs(grid[-1] - horizon) <= 1e-9 * horizon:
        grid[-1] = horizon
        return grid
    return np.append(grid, horizon)


def rk4(rhs, z0, horizon: float, h: float):
    """Integrate ``z' = rhs(t, z)`` on ``time_grid(horizon, h)``; returns (times, states)."""
    times = time_grid(horizon, h)
    z = np.array(z0, dtype=float)
    out = np.empty((len(times),) + z.shape)
    out[0] = z
    for k in range(len(times) - 1):
        z = rk4_step(rhs, times[k], z, times[k + 1] - times[k])
        out[k + 1] = z
    return times, out


def _tabulate_step(M: np.ndarray, B: np.ndarray, h: float):
    """Matrices (P, Q0, Qh, Q1) with rk4(z) = P z + Q0 u(t) + Qh u(t+h/2) + Q1 u(t+h)."""
    m, p = B.shape

    def step(z, u0, uh, u1):
        k1 = M @ z + B @ u0
        k2 = M @ (z + 0.5 * h * k1) + B @ uh
        k3 = M @ (z + 0.5 * h * k2) + B @ uh
        k4 = M @ (z + h * k3) + B @ u1
        return z + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

    no_input = np.zeros((p, m))
    P = step(np.eye(m), no_input, no_input, no_input)
    Ip, Zp, no_state = np.eye(p), np.zeros((p, p)), np.zeros((m, p))
    Q0 = step(no_state, Ip, Zp, Zp)
    Qh = step(no_state, Zp, Ip, Zp)
    Q1 = step(no_state, Zp, Zp, Ip)
    return P, Q0, Qh, Q1


@dataclass
class LinearSystem:
    """``z' = M z + B u(t)`` with ``u_j(t) = sources[j](t)`` evaluated on arrays."""

    M: np.ndarray
    B: np.ndarray
    sources: Sequence[Callable[[np.ndarray], np.ndarray]]
    z0: np.ndarray

    def forcing(self, t: np.ndarray) -> np.ndarray:
        """Source values, shape (len(t), p)."""
        t = np.asarray(t, dtype=float)
        if not self.sources:
            return np.zeros((len(t), 0))
        return np.stack([np.broadcast_to(src(t), t.shape) for src in self.sources], axis=1)

    def integrate(self, horizon: float, h: float, max_samples: int = MAX_SAMPLES):
        """Returns (times, states) at every ``stride``-th grid point plus the end point."""
        M = np.asarray(self.M, dtype=float)
        B = np.asarray(self.B, dtype=float).reshape(M.shape[0], len(self.sources))
        grid = time_grid(horizon, h)
        n_steps = len(grid) - 1
        stride = max(1, math.ceil(n_steps / max_samples))
        keep = np.arange(0, n_steps + 1, stride)
        if keep[-1] != n_steps:
            keep = np.append(keep, n_steps)
        out = np.empty((len(keep), M.shape[0]))
        z = np.array(self.z0, dtype=float)
        out[0] = z
        slot = 1

        n_uniform = n_steps if grid[-1] == n_steps * h else n_steps - 1
        P, Q0, Qh, Q1 = _tabulate_step(M, B, h)
        Pt = P.T
        for k0 in range(0, n_uniform, _CHUNK):
            k1 = min(k0 + _CHUNK, n_uniform)
            ks = np.arange(k0, k1)
            t0 = ks * h
            W = self.forcing(t0) @ Q0.T + self.forcing(t0 + 0.5 * h) @ Qh.T + self.forcing((ks + 1) * h) @ Q1.T
            states = np.empty((k1 - k0, M.shape[0]))
            with np.errstate(over="ignore", invalid="ignore"):
                for j in range(k1 - k0):
                    z = z @ Pt + W[j]
                    states[j] = z
            if not np.all(np.isfinite(z)):
                raise NumericalError(f"non-finite state near t={k1 * h:g}")
            # grid index of states[j] is k0 + j + 1
            while slot < len(keep) and keep[slot] <= k1:
                out[slot] = states[keep[slot] - k0 - 1]
                slot += 1
        if n_uniform < n_steps:
            hl = grid[-1] - grid[-2]
            P, Q0, Qh, Q1 = _tabulate_step(M, B, hl)
            tl = grid[-2]
            u = self.forcing(np.array([tl, tl + 0.5 * hl, grid[-1]]))
            with np.errstate(over="ignore", invalid="ignore"):
                z = P @ z + Q0 @ u[0] + Qh @ u[1] + Q1 @ u[2]
            if not np.all(np.isfinite(z)):
                raise NumericalError("non-finite state at final step")
            out[slot] = z
        return grid[keep], out


def choose_step(rate: float, requested: float | None = None, default: float = DEFAULT_STEP) -> float:
    """Pick or validate a step against ``h * rate <= 0.1``.

    ``rate`` is the fastest dynamic rate or forcing frequency the run must
    resolve.  An explicit ``requested`` step that violates the rule raises;
    otherwise the default is reduced along a 1-2-5 ladder with a warning.
    """
    limit = math.inf if rate <= 0 else STEP_RESOLUTION / rate
    if requested is not None:
        if requested <= 0:
            raise StepSizeError(f"step must be positive, got {requested}")
        if requested > limit * (1 + 1e-12):
            raise StepSizeError(f"step {requested:g} exceeds resolution limit {limit:.3g} (rate {rate:.4g})")
        return float(requested)
    if default <= limit:
        return default
    exponent = math.floor(math.log10(limit))
    for mantissa in (5.0, 2.0, 1.0):
        h = mantissa * 10.0**exponent
        if h <= limit:
            break
    log.warning("step reduced from %g to %g to resolve rate %.4g", default, h, rate)
    return h


class Assembly:
    """Incremental builder for one augmented linear system.

    Signals are fed by expanding them into ``(coef, leaf)`` terms.  Closed-form
    leaves become columns of ``B`` (deduplicated by value); filter leaves
    become state blocks (deduplicated by their dynamics and initial state) and
    are read through their output row.
    """

    def __init__(self):
        self.names: list[str] = []
        self._z0: list[float] = []
        self._M: dict[tuple[int, int], float] = {}
        self._B: dict[tuple[int, int], float] = {}
        self._sources: dict = {}
        self._filters: dict = {}

    @property
    def size(self) -> int:
        return len(self._z0)

    def add_state(self, name: str, init: float = 0.0) -> int:
        self.names.append(name)
        self._z0.append(float(init))
        return len(self._z0) - 1

    def feed_state(self, row: int, col: int, coef: float) -> None:
        if coef != 0.0:
            self._M[row, col] = self._M.get((row, col), 0.0) + float(coef)

    def feed_block(self, rows: Sequence[int], cols: Sequence[int], matrix: np.ndarray, coef: float = 1.0) -> None:
        matrix = np.asarray(matrix, dtype=float).reshape(len(rows), len(cols))
        for a, r in enumerate(rows):
            for b, c in enumerate(cols):
                self.feed_state(r, c, coef * matrix[a, b])

    def feed_signal(self, row: int, signal, coef: float = 1.0) -> None:
        for c, leaf in signal.terms():
            if leaf.is_filter:
                cols = self._filter_states(leaf)
                for k, ck in zip(cols, leaf.output):
                    self.feed_state(row, k, coef * c * ck)
            else:
                j = self._sources.setdefault(leaf, len(self._sources))
                if c * coef != 0.0:
                    self._B[row, j] = self._B.get((row, j), 0.0) + coef * c

    def feed_outputs(self, row: int, weights: Sequence[float], x_index: Sequence[int], g: Sequence, coef: float = 1.0) -> None:
        """Add ``coef * sum_j weights[j] * y_j`` with ``y_j = x_j + g_j``."""
        for j, w in enumerate(weights):
            if w != 0.0:
                self.feed_state(row, x_index[j], coef * w)
                self.feed_signal(row, g[j], coef * w)

    def _filter_states(self, leaf) -> list[int]:
        key = leaf.state_key
        if key not in self._filters:
            k = len(leaf.initial)
            cols = [self.add_state(f"filter{len(self._filters)}[{i}]", leaf.initial[i]) for i in range(k)]
            self.feed_block(cols, cols, leaf.matrix)
            self._filters[key] = (cols, leaf)
        return self._filters[key][0]

    def rate(self, horizon: float) -> float:
        """Fastest rate to resolve: diagonal decay, filter norms, forcing frequencies."""
        r = max((abs(v) for (i, j), v in self._M.items() if i == j), default=0.0)
        for _, leaf in self._filters.values():
            r = max(r, leaf.rate(horizon))
        for leaf in self._sources:
            r = max(r, leaf.rate(horizon))
        return r

    def build(self) -> LinearSystem:
        m, p = self.size, len(self._sources)
        M = np.zeros((m, m))
        for (i, j), v in self._M.items():
            M[i, j] = v
        B = np.zeros((m, p))
        for (i, j), v in self._B.items():
            B[i, j] = v
        return LinearSystem(M=M, B=B, sources=[leaf.values for leaf in self._sources], z0=np.array(self._z0))

    def trace(self, signal, times: np.ndarray, states: np.ndarray) -> np.ndarray:
        """Evaluate ``signal`` on stored samples, reading filter leaves from ``states``."""
        out = np.zeros(len(times))
        for c, leaf in signal.terms():
            if leaf.is_filter:
                cols = self._filters[leaf.state_key][0]
                out += c * (states[:, cols] @ np.asarray(leaf.output))
            else:
                out += c * np.broadcast_to(leaf.values(times), out.shape)
        return out

    def run(self, horizon: float, step: float | None = None, max_samples: int = MAX_SAMPLES):
        """Integrate with a step checked against ``rate(horizon)``; returns (times, states, h)."""
        h = choose_step(self.rate(horizon), step)
        if h > horizon:
            h = horizon
        times, states = self.build().integrate(horizon, h, max_samples)
        return times, states, h
