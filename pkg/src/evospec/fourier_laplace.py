"""Discrete exponentially weighted Fourier transform and frequency calculus.

The transform realized here is

    u_hat(xi_k) = (dt / sqrt(2 pi)) * sum_j e^{-(i xi_k + rho) t_j} f(t_j),

i.e. the plain Fourier transform of the re-weighted samples e^{-rho t} f(t),
evaluated on the frequency comb xi_k = 2 pi ktil / (n dt) with ktil the
signed DFT index in (-n/2, n/2].  It is the finite-window stand-in for the
unitary map from the e^{-2 rho t}-weighted space onto L2 of the line
Re z = rho, with z = i xi + rho.

Time differentiation becomes multiplication by (i xi + rho); material laws
(analytic operator families z -> M(z)) act per frequency as M(i xi_k + rho).
Dirac impulses never live on the time grid: their exact spectra
(2 pi)^{-1/2} e^{-(i xi + rho) t} are injected in frequency domain instead.

The DFT periodizes in time where the continuous transform does not; all
callers are expected to zero-pad until the weighted edge amplitude is
negligible, and every transform records the edge ratio it saw.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .weighted_signal import (
    EPS_MACHINE,
    Signal,
    TimeGrid,
    ZeroWeight,
    edge_ratio,
)

__all__ = [
    "FrequencyGrid",
    "Spectrum",
    "WeightBelowDomain",
    "transform",
    "inverse_transform",
    "spectrum_norm",
    "apply_derivative",
    "apply_multiplier",
    "apply_law",
    "delta_spectrum",
    "rho_independence",
    "save_spectrum",
    "load_spectrum",
]

SQRT_2PI = float(np.sqrt(2.0 * np.pi))


class WeightBelowDomain(ValueError):
    """Weight rho does not exceed the law's abscissa of definition b(M)."""


@dataclass(frozen=True)
class FrequencyGrid:
    """Frequency comb companion to a TimeGrid: xi_k = 2 pi ktil/(n dt)."""

    dt: float
    n: int

    def signed_indices(self) -> np.ndarray:
        """Signed DFT indices in (-n/2, n/2], ascending."""
        k = np.fft.fftfreq(self.n) * self.n
        k[k == -self.n / 2] = self.n / 2  # Nyquist bin labeled positive
        return np.sort(k)

    def frequencies(self) -> np.ndarray:
        return 2.0 * np.pi * self.signed_indices() / (self.n * self.dt)

    @property
    def d_xi(self) -> float:
        return 2.0 * np.pi / (self.n * self.dt)


@dataclass(frozen=True)
class Spectrum:
    """Transform values on the frequency comb, stored frequency-ascending.

    ``t_start`` pins the phase convention so the inverse is exact;
    ``edge_ratio`` is the window-edge diagnostic recorded at transform time.
    """

    freq: FrequencyGrid
    rho: float
    t_start: float
    values: np.ndarray = field(repr=False)
    edge_ratio: float = 0.0

    def __post_init__(self):
        v = np.array(self.values, dtype=np.complex128)
        if v.ndim == 1:
            v = v[:, None]
        if v.ndim != 2 or v.shape[0] != self.freq.n:
            raise ValueError(
                f"values shape {v.shape} incompatible with {self.freq.n} frequencies"
            )
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def z_values(self) -> np.ndarray:
        """The spectral parameter z = i xi + rho per stored frequency."""
        return 1j * self.freq.frequencies() + self.rho

    def with_values(self, values: np.ndarray) -> "Spectrum":
        return Spectrum(self.freq, self.rho, self.t_start, values, self.edge_ratio)


def _raw_order(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Permutation between raw FFT order and ascending-frequency order."""
    k = np.fft.fftfreq(n) * n
    k[k == -n / 2] = n / 2
    order = np.argsort(k, kind="stable")
    inverse = np.empty(n, dtype=np.intp)
    inverse[order] = np.arange(n)
    return order, inverse


def _raw_frequencies(n: int, dt: float) -> np.ndarray:
    k = np.fft.fftfreq(n) * n
    k[k == -n / 2] = n / 2
    return 2.0 * np.pi * k / (n * dt)


def transform(f: Signal) -> Spectrum:
    """Weighted transform of a signal; exact discrete pair with
    :func:`inverse_transform`."""
    g = f.grid
    t = g.times()
    w = f.values * np.exp(-f.rho * t)[:, None]
    F = np.fft.fft(w, axis=0)
    xi_raw = _raw_frequencies(g.n, g.dt)
    vals_raw = (g.dt / SQRT_2PI) * np.exp(-1j * xi_raw * g.t_start)[:, None] * F
    order, _ = _raw_order(g.n)
    return Spectrum(
        freq=FrequencyGrid(dt=g.dt, n=g.n),
        rho=f.rho,
        t_start=g.t_start,
        values=vals_raw[order],
        edge_ratio=edge_ratio(f),
    )


def inverse_transform(s: Spectrum) -> Signal:
    """Exact inverse of :func:`transform` on the same grid."""
    n, dt = s.freq.n, s.freq.dt
    order, inv = _raw_order(n)
    vals_raw = s.values[inv]
    xi_raw = _raw_frequencies(n, dt)
    F = (SQRT_2PI / dt) * np.exp(1j * xi_raw * s.t_start)[:, None] * vals_raw
    w = np.fft.ifft(F, axis=0)
    grid = TimeGrid(t_start=s.t_start, dt=dt, n=n)
    t = grid.times()
    return Signal(grid, s.rho, w * np.exp(s.rho * t)[:, None])


def spectrum_norm(s: Spectrum) -> float:
    """L2 norm over the frequency comb, sqrt(d_xi * sum |u_hat|^2)."""
    return float(np.sqrt(s.freq.d_xi * np.sum(np.abs(s.values) ** 2)))


def apply_multiplier(f: Signal, mult) -> Signal:
    """Apply a scalar frequency multiplier z -> m(z) and transform back."""
    s = transform(f)
    m = np.asarray(mult(s.z_values()), dtype=np.complex128)
    return inverse_transform(s.with_values(s.values * m[:, None]))


def apply_derivative(f: Signal, order: int) -> Signal:
    """Time derivative (or antiderivative) of the given integer order as the
    frequency multiplier (i xi + rho)^order."""
    if order < 0 and f.rho == 0:
        raise ZeroWeight("negative derivative orders need rho != 0")
    if order == 0:
        return f
    return apply_multiplier(f, lambda z: z**order)


def apply_law(f: Signal, law) -> Signal:
    """Apply an operator-valued analytic function of the time derivative.

    ``law`` must expose ``abscissa()`` (left edge b of its half-plane of
    definition) and ``evaluate_many(z) -> (k, m, m)``; the signal's weight
    must satisfy rho > b.
    """
    b = law.abscissa()
    if not f.rho > b:
        raise WeightBelowDomain(f"rho={f.rho} must exceed the law's abscissa b={b}")
    s = transform(f)
    M = law.evaluate_many(s.z_values())
    out = np.einsum("kij,kj->ki", M, s.values)
    return inverse_transform(s.with_values(out))


def delta_spectrum(grid: TimeGrid, rho: float, t: float, coeff) -> Spectrum:
    """Exact spectrum (2 pi)^{-1/2} e^{-(i xi + rho) t} c of an impulse
    c * delta_t.  Impulses exist only spectrally; they are never sampled."""
    coeff = np.atleast_1d(np.asarray(coeff, dtype=np.complex128))
    freq = FrequencyGrid(dt=grid.dt, n=grid.n)
    z = 1j * freq.frequencies() + rho
    vals = np.exp(-z * t)[:, None] * coeff[None, :] / SQRT_2PI
    return Spectrum(freq=freq, rho=rho, t_start=grid.t_start, values=vals)


def rho_independence(fwd_a, fwd_b, f: Signal) -> float:
    """Relative L2-on-window discrepancy of the unweighted values produced by
    two realizations of the same causal operator (typically at two different
    weights)."""
    ua = fwd_a(f)
    ub = fwd_b(f)
    dt = f.grid.dt
    num = np.sqrt(np.sum(np.abs(ua.values - ub.values) ** 2) * dt)
    den = max(
        np.sqrt(np.sum(np.abs(ua.values) ** 2) * dt),
        np.sqrt(np.sum(np.abs(ub.values) ** 2) * dt),
        EPS_MACHINE,
    )
    return float(num / den)


# --- serialization --------------------------------------------------------


def save_spectrum(s: Spectrum, csv_path: str, sidecar_path: str | None = None):
    if sidecar_path is None:
        sidecar_path = csv_path + ".json"
    xi = s.freq.frequencies()
    header = ["xi"]
    for c in range(s.dim):
        header += [f"re_{c}", f"im_{c}"]
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for k in range(s.freq.n):
            row = [format(xi[k], ".17g")]
            for c in range(s.dim):
                row += [
                    format(s.values[k, c].real, ".17g"),
                    format(s.values[k, c].imag, ".17g"),
                ]
            w.writerow(row)
    with open(sidecar_path, "w") as fh:
        json.dump(
            {
                "dt": s.freq.dt,
                "n": s.freq.n,
                "rho": s.rho,
                "t_start": s.t_start,
                "dim": s.dim,
                "edge_ratio": s.edge_ratio,
            },
            fh,
            sort_keys=True,
        )
        fh.write("\n")


def load_spectrum(csv_path: str, sidecar_path: str | None = None) -> Spectrum:
    if sidecar_path is None:
        sidecar_path = csv_path + ".json"
    with open(sidecar_path) as fh:
        meta = json.load(fh)
    n, dim = meta["n"], meta["dim"]
    vals = np.zeros((n, dim), dtype=np.complex128)
    with open(csv_path, newline="") as fh:
        r = csv.reader(fh)
        next(r)
        for k, row in enumerate(r):
            for c in range(dim):
                vals[k, c] = float(row[1 + 2 * c]) + 1j * float(row[2 + 2 * c])
    return Spectrum(
        freq=FrequencyGrid(dt=meta["dt"], n=n),
        rho=meta["rho"],
        t_start=meta["t_start"],
        values=vals,
        edge_ratio=meta.get("edge_ratio", 0.0),
    )
