"""Discrete signals on exponentially weighted windows.

A signal is a complex vector-valued function sampled on a uniform time grid
and normed in the exponentially weighted sense

    ||f||_rho^2 = sum_j |f(t_j)|^2 e^{-2 rho t_j} dt   (trapezoid end weights),

the finite-window stand-in for the weighted space of square-integrable
functions with weight e^{-2 rho t}.  The weight rho tilts the norm so that
causal (supported-to-the-right) behaviour is favoured for rho > 0 and
anti-causal behaviour for rho < 0; the inversion direction of
``antiderivative`` flips accordingly.

Inner products are linear in the SECOND argument throughout the package.

Signals are immutable after construction and all operations here are pure.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "TimeGrid",
    "Signal",
    "TraceValue",
    "NonGridShift",
    "ZeroWeight",
    "InsufficientNodes",
    "EdgeAmplitudeWarning",
    "weighted_norm",
    "weighted_inner",
    "cutoff",
    "translate",
    "antiderivative",
    "trace",
    "causality_leak",
    "edge_ratio",
    "save_signal",
    "load_signal",
]

EPS_MACHINE = float(np.finfo(np.float64).eps)

# node-matching slack: grid times are reproducible floats but t may come from
# arithmetic elsewhere
_NODE_ATOL_FACTOR = 1e-9


class NonGridShift(ValueError):
    """Requested translation is not an integer multiple of the grid step."""


class ZeroWeight(ValueError):
    """Operation requires a nonzero weight rho."""


class InsufficientNodes(ValueError):
    """Fewer strictly one-sided nodes than the trace stencil needs."""


class EdgeAmplitudeWarning(UserWarning):
    """Signal is not negligible at a window edge an operation relies on."""


@dataclass(frozen=True)
class TimeGrid:
    """Uniform time window t_j = t_start + j*dt, j = 0..n-1."""

    t_start: float
    dt: float
    n: int

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.n < 2:
            raise ValueError(f"need at least 2 nodes, got n={self.n}")

    def times(self) -> np.ndarray:
        return self.t_start + self.dt * np.arange(self.n)

    @property
    def t_end(self) -> float:
        return self.t_start + self.dt * (self.n - 1)

    def index_of(self, t: float) -> int | None:
        """Index of the node at time t, or None if t is off-grid."""
        j = round((t - self.t_start) / self.dt)
        if 0 <= j < self.n and abs(self.t_start + j * self.dt - t) <= _NODE_ATOL_FACTOR * self.dt:
            return j
        return None

    def close_to(self, other: "TimeGrid") -> bool:
        return (
            self.n == other.n
            and abs(self.dt - other.dt) <= 1e-12 * self.dt
            and abs(self.t_start - other.t_start) <= 1e-9 * self.dt
        )


@dataclass(frozen=True)
class Signal:
    """Complex samples of dimension ``dim`` on a grid, normed with weight rho.

    ``values`` has shape (grid.n, dim) and is frozen (read-only array).
    """

    grid: TimeGrid
    rho: float
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=np.complex128)
        if v.ndim == 1:
            v = v[:, None]
        if v.ndim != 2 or v.shape[0] != self.grid.n:
            raise ValueError(
                f"values shape {v.shape} incompatible with grid of {self.grid.n} nodes"
            )
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    # --- constructors -----------------------------------------------------

    @staticmethod
    def zeros(grid: TimeGrid, rho: float, dim: int = 1) -> "Signal":
        return Signal(grid, rho, np.zeros((grid.n, dim), dtype=np.complex128))

    @staticmethod
    def from_function(grid: TimeGrid, rho: float, fn) -> "Signal":
        """Sample ``fn`` on the grid; fn maps a time array to (n,) or (n, m)."""
        vals = np.asarray(fn(grid.times()), dtype=np.complex128)
        if vals.ndim == 1:
            vals = vals[:, None]
        return Signal(grid, rho, vals)

    def with_values(self, values: np.ndarray) -> "Signal":
        return Signal(self.grid, self.rho, values)

    def with_rho(self, rho: float) -> "Signal":
        """Same samples, re-tagged with a different weight."""
        return Signal(self.grid, rho, self.values)

    # --- conformable arithmetic ------------------------------------------

    def _check_conformable(self, other: "Signal"):
        if not self.grid.close_to(other.grid) or self.dim != other.dim:
            raise ValueError("signals are not conformable (grid or dim mismatch)")
        if self.rho != other.rho:
            raise ValueError("signals carry different weights rho")

    def __add__(self, other: "Signal") -> "Signal":
        self._check_conformable(other)
        return self.with_values(self.values + other.values)

    def __sub__(self, other: "Signal") -> "Signal":
        self._check_conformable(other)
        return self.with_values(self.values - other.values)

    def __mul__(self, c) -> "Signal":
        return self.with_values(self.values * c)

    __rmul__ = __mul__


@dataclass(frozen=True)
class TraceValue:
    """One-sided limit estimate f(t-) or f(t+) from strictly one-sided nodes."""

    t: float
    side: str  # "left" or "right"
    value: np.ndarray
    estimate_width: int  # number of nodes used


def _trapezoid_weights(n: int) -> np.ndarray:
    w = np.ones(n)
    w[0] = 0.5
    w[-1] = 0.5
    return w


def weighted_inner(f: Signal, g: Signal) -> complex:
    """Weighted inner product <f|g>_rho, linear in the second argument."""
    f._check_conformable(g)
    t = f.grid.times()
    w = _trapezoid_weights(f.grid.n) * np.exp(-2.0 * f.rho * t) * f.grid.dt
    return complex(np.sum(w * np.sum(np.conj(f.values) * g.values, axis=1)))


def weighted_norm(f: Signal) -> float:
    """sqrt(sum_j |f_j|^2 e^{-2 rho t_j} dt), trapezoid end weights halved."""
    t = f.grid.times()
    w = _trapezoid_weights(f.grid.n) * np.exp(-2.0 * f.rho * t) * f.grid.dt
    return float(np.sqrt(np.sum(w * np.sum(np.abs(f.values) ** 2, axis=1))))


def cutoff(f: Signal, t: float, side: str) -> Signal:
    """Zero all nodes strictly on the excluded side of t.

    side="below" keeps nodes with t_j <= t, side="above" keeps t_j >= t; a
    node exactly at t is kept on both, so below + above double-counts it.
    """
    if side not in ("below", "above"):
        raise ValueError(f"side must be 'below' or 'above', got {side!r}")
    tj = f.grid.times()
    atol = _NODE_ATOL_FACTOR * f.grid.dt
    if side == "below":
        keep = tj <= t + atol
    else:
        keep = tj >= t - atol
    return f.with_values(f.values * keep[:, None])


def translate(f: Signal, h: float) -> Signal:
    """Grid-aligned translation (tau_h f)(s) = f(s + h).

    h must be an integer multiple of dt within 1e-12*dt.  Values move by
    -h/dt nodes in index space; vacated nodes are zero-filled.
    """
    steps = h / f.grid.dt
    s = round(steps)
    if abs(steps - s) > 1e-12:
        raise NonGridShift(
            f"shift {h} is {steps} steps of dt={f.grid.dt}; not grid-aligned"
        )
    out = np.zeros_like(f.values)
    # new[j] = old[j + s]
    if s >= 0:
        if s < f.grid.n:
            out[: f.grid.n - s] = f.values[s:]
    else:
        if -s < f.grid.n:
            out[-s:] = f.values[: f.grid.n + s]
    return f.with_values(out)


def antiderivative(f: Signal) -> Signal:
    """Cumulative integral in the direction dictated by the weight.

    rho > 0: int_{-inf}^t f, cumulative trapezoid from the left window edge;
    rho < 0: -int_t^{inf} f, negated cumulative from the right edge.  Either
    way the inflow edge value is taken as zero, so the signal must be
    negligible there.
    """
    if f.rho == 0:
        raise ZeroWeight("antiderivative needs rho != 0 to pick a direction")
    _warn_if_edge_heavy(f, which="inflow")
    dt = f.grid.dt
    inc = 0.5 * dt * (f.values[1:] + f.values[:-1])
    out = np.zeros_like(f.values)
    if f.rho > 0:
        out[1:] = np.cumsum(inc, axis=0)
    else:
        out[:-1] = -np.cumsum(inc[::-1], axis=0)[::-1]
    return f.with_values(out)


def trace(f: Signal, t: float, side: str) -> TraceValue:
    """One-sided value by quadratic extrapolation from the 3 nearest
    strictly one-sided nodes."""
    if side not in ("left", "right"):
        raise ValueError(f"side must be 'left' or 'right', got {side!r}")
    tj = f.grid.times()
    atol = _NODE_ATOL_FACTOR * f.grid.dt
    if side == "left":
        idx = np.nonzero(tj < t - atol)[0]
        if idx.size < 3:
            raise InsufficientNodes(f"only {idx.size} nodes strictly left of {t}")
        use = idx[-3:]
    else:
        idx = np.nonzero(tj > t + atol)[0]
        if idx.size < 3:
            raise InsufficientNodes(f"only {idx.size} nodes strictly right of {t}")
        use = idx[:3]
    ts = tj[use]
    vals = f.values[use]
    value = np.zeros(f.dim, dtype=np.complex128)
    for i in range(3):
        li = 1.0
        for k in range(3):
            if k != i:
                li *= (t - ts[k]) / (ts[i] - ts[k])
        value += li * vals[i]
    return TraceValue(t=t, side=side, value=value, estimate_width=3)


def causality_leak(u: Signal, a: float) -> float:
    """Weighted mass strictly before a, relative to the total weighted mass."""
    before = weighted_norm(cutoff(u, a - u.grid.dt, "below"))
    return before / max(weighted_norm(u), EPS_MACHINE)


def edge_ratio(f: Signal) -> float:
    """Max weighted amplitude at the two window edges over the peak.

    The window-edge policy: operations that assume negligible content outside
    the window check this against 1e-8.
    """
    t = f.grid.times()
    amp = np.max(np.abs(f.values), axis=1) * np.exp(-f.rho * t)
    peak = float(np.max(amp))
    if peak == 0.0:
        return 0.0
    return float(max(amp[0], amp[-1]) / peak)


def _warn_if_edge_heavy(f: Signal, which: str = "both"):
    t = f.grid.times()
    amp = np.max(np.abs(f.values), axis=1) * np.exp(-f.rho * t)
    peak = float(np.max(amp))
    if peak == 0.0:
        return
    if which == "inflow":
        e = amp[0] if f.rho > 0 else amp[-1]
    else:
        e = max(amp[0], amp[-1])
    if e > 1e-8 * peak:
        warnings.warn(
            f"signal carries weighted amplitude {e / peak:.2e} of peak at a "
            "window edge the operation treats as empty",
            EdgeAmplitudeWarning,
            stacklevel=3,
        )


# --- serialization --------------------------------------------------------


def save_signal(f: Signal, csv_path: str, sidecar_path: str | None = None):
    """Write one row per node: t, re_0, im_0, ..., plus a JSON sidecar with
    {t_start, dt, n, rho, dim}."""
    if sidecar_path is None:
        sidecar_path = csv_path + ".json"
    t = f.grid.times()
    header = ["t"]
    for c in range(f.dim):
        header += [f"re_{c}", f"im_{c}"]
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for j in range(f.grid.n):
            row = [format(t[j], ".17g")]
            for c in range(f.dim):
                row += [
                    format(f.values[j, c].real, ".17g"),
                    format(f.values[j, c].imag, ".17g"),
                ]
            w.writerow(row)
    with open(sidecar_path, "w") as fh:
        json.dump(
            {
                "t_start": f.grid.t_start,
                "dt": f.grid.dt,
                "n": f.grid.n,
                "rho": f.rho,
                "dim": f.dim,
            },
            fh,
            sort_keys=True,
        )
        fh.write("\n")


def load_signal(csv_path: str, sidecar_path: str | None = None) -> Signal:
    if sidecar_path is None:
        sidecar_path = csv_path + ".json"
    with open(sidecar_path) as fh:
        meta = json.load(fh)
    grid = TimeGrid(t_start=meta["t_start"], dt=meta["dt"], n=meta["n"])
    dim = meta["dim"]
    vals = np.zeros((grid.n, dim), dtype=np.complex128)
    with open(csv_path, newline="") as fh:
        r = csv.reader(fh)
        next(r)  # header
        for j, row in enumerate(r):
            for c in range(dim):
                vals[j, c] = float(row[1 + 2 * c]) + 1j * float(row[2 + 2 * c])
    return Signal(grid, meta["rho"], vals)
