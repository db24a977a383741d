"""Frequency-domain solver and stability estimators.

The solver works entirely on the multiplier side: transform the forcing,
invert z*M(z) + A frequency by frequency, transform back.  Everything it
reports (residuals, sigma_min profiles, accretivity constants, decay
rates) is a sampled quantity and is labeled as such; nothing here claims
an exact spectral bound.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from .fourier_laplace import FrequencyGrid, transform, inverse_transform
from .material_laws import (
    MaterialLaw,
    OutsideDomain,
    SingularEvaluation,
    accretivity_scan,
    _default_t_samples,
)
from .spatial_ops import MAccretivityCertificate, SpatialOperator, is_m_accretive
from .weighted_signal import Signal, TimeGrid, causality_leak, weighted_norm


class SingularFrequency(ArithmeticError):
    """z*M(z) + A lost invertibility at a sampled frequency."""

    def __init__(self, msg, z=None, sigma_min=None):
        super().__init__(msg)
        self.z = z
        self.sigma_min = sigma_min


class NoCertificate(RuntimeError):
    """solve() refused to run without a well-posedness certificate."""


class CertificationFailed(RuntimeError):
    """Neither certification route went through; carries a witness z."""

    def __init__(self, msg, witness=None):
        super().__init__(msg)
        self.witness = witness


class RangeExhausted(RuntimeError):
    """The abscissa search hit the end of the supplied weight range."""


class HypothesisFailed(ValueError):
    """A structural hypothesis (selfadjointness, accretivity) is violated."""


class DegenerateFit(RuntimeError):
    """Too little signal above the noise floor to fit a decay rate."""


@dataclass(frozen=True)
class EvolutionaryProblem:
    """A material law, a spatial operator, a weight, and a time window."""

    law: MaterialLaw
    A: SpatialOperator
    rho: float
    grid: TimeGrid
    s0_hint: Optional[float] = None

    def __post_init__(self):
        if self.law.dim != self.A.m:
            raise ValueError(
                f"law dim {self.law.dim} != operator dim {self.A.m}"
            )
        if not np.isfinite(self.rho):
            raise ValueError("rho must be finite")


@dataclass
class SolveReport:
    """Sampled diagnostics for one solve."""

    residual_max: float
    sigma_min_min: float
    c_est: Optional[float]
    leak: Optional[float]
    norm_f: float
    norm_u: float
    rho: float
    n_freq: int
    n_sigma_samples: int

    def to_json(self):
        return {
            "residual_max": self.residual_max,
            "sigma_min_min": self.sigma_min_min,
            "c_est": self.c_est,
            "leak": self.leak,
            "norms": {"f": self.norm_f, "u": self.norm_u},
            "rho": self.rho,
            "n_freq": self.n_freq,
            "n_sigma_samples": self.n_sigma_samples,
        }


@dataclass
class WellposednessCertificate:
    """Sampled evidence that z -> (z M(z) + A)^{-1} is bounded on a line.

    route 1: accretivity of the law plus m-accretivity of A.
    route 2: invertible A, a Neumann bound on a sampled ball around 0,
    and positive definiteness of Herm(z M(z) + A) off the ball.
    """

    route: int
    rho: float
    bound: float
    c_est: Optional[float] = None
    a_certificate: Optional[MAccretivityCertificate] = None
    delta: Optional[float] = None
    K: Optional[float] = None
    a_inv_norm: Optional[float] = None
    c_off: Optional[float] = None
    n_line_samples: int = 0
    n_ball_samples: int = 0
    label: str = "sampled"

    def to_json(self):
        return {
            "route": self.route,
            "rho": self.rho,
            "bound": self.bound,
            "c_est": self.c_est,
            "delta": self.delta,
            "K": self.K,
            "a_inv_norm": self.a_inv_norm,
            "c_off": self.c_off,
            "n_line_samples": self.n_line_samples,
            "n_ball_samples": self.n_ball_samples,
            "label": self.label,
        }


@dataclass
class StabilityReport:
    """Collected stability diagnostics; every entry is a sampled estimate.

    nu_pred and s0_est are only comparable when they came from the same
    frequency scan; the from_same_scan flag records that, and the
    consistency check nu_pred <= -s0_est + 1e-12 is enforced then.
    """

    rho: float
    s0_est: Optional[float] = None
    c_est: Optional[dict] = None
    nu_pred: Optional[float] = None
    nu_meas: Optional[float] = None
    causality_leak: Optional[float] = None
    rho_discrepancy: Optional[float] = None
    sigma_min_profile: Optional[np.ndarray] = None
    from_same_scan: bool = False
    notes: str = ""

    def __post_init__(self):
        if (
            self.from_same_scan
            and self.nu_pred is not None
            and self.s0_est is not None
        ):
            if self.nu_pred > -self.s0_est + 1e-12:
                raise ValueError(
                    "predicted rate exceeds the estimated abscissa margin: "
                    f"nu_pred={self.nu_pred} vs -s0_est={-self.s0_est}"
                )

    def to_json(self):
        prof = self.sigma_min_profile
        return {
            "rho": self.rho,
            "s0_est": self.s0_est,
            "c_est": self.c_est,
            "nu_pred": self.nu_pred,
            "nu_meas": self.nu_meas,
            "causality_leak": self.causality_leak,
            "rho_discrepancy": self.rho_discrepancy,
            "sigma_min_profile": None if prof is None else list(map(float, prof)),
            "from_same_scan": self.from_same_scan,
            "notes": self.notes,
        }


@dataclass(frozen=True)
class ParabolicRate:
    """nu1 = min(nu0, c / (m1_norm^2 m0_norm c_inv_norm^2)) with its inputs."""

    nu1: float
    nu0: float
    c: float
    m1_norm: float
    m0_norm: float
    c_inv_norm: float


def _symbol_chunk(law, A, zs):
    M = law.evaluate_many(zs)
    return zs[:, None, None] * M + A.matrix[None, :, :]


def solve(
    problem: EvolutionaryProblem,
    f: Signal,
    certificate: Optional[WellposednessCertificate] = None,
    certify: bool = True,
    sigma_samples: int = 64,
    threads: int = 1,
    support_start: Optional[float] = None,
):
    """Invert (d/dt M + A) u = f on the weighted line Re z = rho.

    Returns (u, SolveReport).  The residual ||(zM+A)u_hat - f_hat|| is
    checked at every frequency (one refinement step keeps it near eps);
    sigma_min is sampled on a log-spread subset plus the extremes and
    the frequency nearest 0.
    """
    p = problem
    if not f.grid.close_to(p.grid):
        raise ValueError("forcing grid does not match the problem grid")
    if f.rho != p.rho:
        raise ValueError("forcing weight does not match the problem weight")
    if f.dim != p.law.dim:
        raise ValueError("forcing dim does not match the problem dim")
    floor = p.law.abscissa()
    if p.s0_hint is not None:
        floor = max(floor, p.s0_hint)
    if not p.rho > floor:
        raise ValueError(f"rho={p.rho} must exceed max(b, s0_hint)={floor}")

    if certificate is None and certify:
        try:
            certificate = wellposedness_certificate(p)
        except CertificationFailed as e:
            raise NoCertificate(
                f"no well-posedness certificate at rho={p.rho}: {e}"
            ) from e

    spec = transform(f)
    zs = spec.z_values()
    fh = spec.values
    n, m = fh.shape
    fh_norms = np.linalg.norm(fh, axis=1)
    ref = max(float(fh_norms.max()), 1e-300)

    uh = np.empty_like(fh)
    chunk = max(16, int(2_000_000 // (m * m)))
    starts = list(range(0, n, chunk))

    def run_chunk(s0):
        s1 = min(s0 + chunk, n)
        T = _symbol_chunk(p.law, p.A, zs[s0:s1])
        rhs = fh[s0:s1, :, None]
        try:
            x = np.linalg.solve(T, rhs)
            r = rhs - T @ x
            x = x + np.linalg.solve(T, r)
        except np.linalg.LinAlgError as e:
            sub = np.abs(np.linalg.eigvals(T)).min(axis=1)
            j = int(np.argmin(sub))
            raise SingularFrequency(
                f"symbol singular near z={zs[s0 + j]}", z=zs[s0 + j]
            ) from e
        if not np.all(np.isfinite(x)):
            bad = ~np.isfinite(x).all(axis=(1, 2))
            j = int(np.argmax(bad))
            raise SingularFrequency(
                f"non-finite solve at z={zs[s0 + j]}", z=zs[s0 + j]
            )
        res = np.linalg.norm((T @ x - rhs)[:, :, 0], axis=1)
        denom = np.maximum(fh_norms[s0:s1], 1e-6 * ref)
        uh[s0:s1] = x[:, :, 0]
        return float((res / denom).max(initial=0.0))

    if threads > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            residual_max = max(ex.map(run_chunk, starts))
    else:
        residual_max = max(map(run_chunk, starts))

    # sigma_min on a sampled subset: the frequency nearest 0, the extremes,
    # and a log spread in |xi| (both signs interleave in the |xi| ordering)
    order = np.argsort(np.abs(zs.imag), kind="stable")
    pos = np.unique(
        np.round(np.geomspace(1, n - 1, max(2, sigma_samples - 1))).astype(int)
    )
    sel = np.unique(np.concatenate(([order[0]], order[pos])))
    Ts = _symbol_chunk(p.law, p.A, zs[sel])
    svals = np.linalg.svd(Ts, compute_uv=False)
    smin = svals[:, -1]
    scale = float(svals[:, 0].max())
    j = int(np.argmin(smin))
    if smin[j] < 1e-12 * scale:
        raise SingularFrequency(
            f"sigma_min={smin[j]:.3e} below floor at z={zs[sel[j]]}",
            z=zs[sel[j]],
            sigma_min=float(smin[j]),
        )

    u = inverse_transform(spec.with_values(uh))
    leak = None
    if support_start is not None:
        leak = causality_leak(u, support_start)
    report = SolveReport(
        residual_max=residual_max,
        sigma_min_min=float(smin[j]),
        c_est=None if certificate is None else certificate.c_est,
        leak=leak,
        norm_f=weighted_norm(f),
        norm_u=weighted_norm(u),
        rho=p.rho,
        n_freq=n,
        n_sigma_samples=len(sel),
    )
    return u, report


def _route_one(p, rho):
    scan = accretivity_scan(p.law, rho)
    a_cert = is_m_accretive(p.A)
    if scan.c_est > 0.0 and a_cert.passed:
        return WellposednessCertificate(
            route=1,
            rho=rho,
            bound=1.0 / scan.c_est,
            c_est=scan.c_est,
            a_certificate=a_cert,
            n_line_samples=len(scan.t_samples),
        )
    z = rho + 1j * scan.t_samples[int(np.argmin(scan.values))]
    raise CertificationFailed(
        f"route 1 failed: c_est={scan.c_est:.3e}, "
        f"A m-accretive={a_cert.passed}",
        witness=z,
    )


def _route_two(p, rho, delta):
    A = p.A.matrix
    sv = np.linalg.svd(A, compute_uv=False)
    if sv[-1] < 1e-12 * max(sv[0], 1.0):
        raise CertificationFailed("route 2 needs invertible A", witness=0.0)
    a_inv_norm = 1.0 / float(sv[-1])

    # Neumann condition on a sampled ball around the origin; points where
    # the law is singular (z = 0, kernel poles) are skipped, but at least
    # half the ball must be evaluable for the sample to count
    radii = np.linspace(delta / 8.0, delta, 8)
    thetas = np.linspace(0.0, 2.0 * np.pi, 32, endpoint=False)
    zs = (radii[:, None] * np.exp(1j * thetas)[None, :]).ravel()
    K = 0.0
    z_worst = zs[0]
    n_ok = 0
    for z in zs:
        try:
            val = p.law.evaluate_many(np.array([z]), strict=False)[0]
        except (OutsideDomain, SingularEvaluation):
            continue
        nrm = float(np.linalg.norm(z * val, 2))
        n_ok += 1
        if nrm > K:
            K, z_worst = nrm, z
    if n_ok < len(zs) // 2:
        raise CertificationFailed(
            "law not evaluable on the sampled ball", witness=z_worst
        )
    if not K < 1.0 / a_inv_norm:
        raise CertificationFailed(
            f"Neumann condition failed: K={K:.3e} >= {1.0 / a_inv_norm:.3e}",
            witness=z_worst,
        )
    neumann_bound = a_inv_norm / (1.0 - K * a_inv_norm)

    # off the ball: positive definiteness of Herm(z M(z) + A) on the line
    ts = _default_t_samples(rho)
    zs_line = rho + 1j * ts
    keep = np.abs(zs_line) > delta
    zs_line = zs_line[keep]
    try:
        M = p.law.evaluate_many(zs_line, strict=True)
    except (OutsideDomain, SingularEvaluation) as e:
        raise CertificationFailed(
            f"law not evaluable off the ball at rho={rho}: {e}", witness=rho
        ) from e
    T = zs_line[:, None, None] * M + A[None, :, :]
    H = 0.5 * (T + np.conj(np.swapaxes(T, 1, 2)))
    lam = np.linalg.eigvalsh(H)[:, 0]
    j = int(np.argmin(lam))
    c_off = float(lam[j])
    if not c_off > 0.0:
        raise CertificationFailed(
            f"off-ball positivity failed: min eig {c_off:.3e} at z={zs_line[j]}",
            witness=zs_line[j],
        )
    # the headline route-2 constant is the Neumann-series bound on the
    # ball; the off-ball margin is kept as metadata
    return WellposednessCertificate(
        route=2,
        rho=rho,
        bound=neumann_bound,
        delta=delta,
        K=K,
        a_inv_norm=a_inv_norm,
        c_off=c_off,
        n_line_samples=len(zs_line),
        n_ball_samples=n_ok,
    )


def wellposedness_certificate(
    problem: EvolutionaryProblem,
    rho: Optional[float] = None,
    delta: float = 0.1,
    route: Optional[int] = None,
) -> WellposednessCertificate:
    """Try route 1 (accretivity), then route 2 (invertible A + Neumann).

    Both routes are sampled scans, never proofs.  route=1 or route=2
    forces a single route; the default tries both.  Raises
    CertificationFailed with a witness frequency when nothing works.
    """
    p = problem
    if rho is None:
        rho = p.rho
    if not rho > p.law.abscissa():
        raise ValueError(
            f"certification needs rho > b(M)={p.law.abscissa()}, got {rho}"
        )
    if route == 1:
        return _route_one(p, rho)
    if route == 2:
        return _route_two(p, rho, delta)
    try:
        return _route_one(p, rho)
    except (CertificationFailed, OutsideDomain) as e1:
        try:
            return _route_two(p, rho, delta)
        except CertificationFailed as e2:
            raise CertificationFailed(
                f"route 1: {e1}; route 2: {e2}", witness=e2.witness
            ) from e2


def estimate_s0(
    problem: EvolutionaryProblem,
    rho_range: tuple,
    sigma_floor: float = 1e-6,
    freq_samples: int = 64,
    rho_samples: int = 17,
    refine: int = 1,
) -> float:
    """Sampled growth-abscissa estimate.

    Sweeps weights across rho_range and returns the smallest sampled rho
    such that min over the (subsampled) frequency grid of
    sigma_min(z M(z) + A) stays >= sigma_floor for every sampled weight
    above it.  Weights where the law is not evaluable count as failing;
    isolated singular frequency samples (z = 0 and friends) are skipped.
    """
    p = problem
    lo, hi = float(rho_range[0]), float(rho_range[1])
    if not lo < hi:
        raise ValueError("rho_range must be increasing")

    fg = FrequencyGrid(p.grid.dt, p.grid.n)
    xi = fg.frequencies()
    if freq_samples < len(xi):
        order = np.argsort(np.abs(xi))
        pick = np.unique(
            np.round(np.geomspace(1, len(xi) - 1, freq_samples - 1)).astype(int)
        )
        sel = np.concatenate(([order[0]], order[pick]))
        xi_s = np.unique(xi[sel])
    else:
        xi_s = xi

    def passes(rho):
        zs = rho + 1j * xi_s
        try:
            M = p.law.evaluate_many(zs, strict=False)
        except SingularEvaluation:
            # discrete exceptional points (z = 0 and friends) are skipped
            keep = np.abs(zs) > 1e-13
            if keep.sum() < len(zs) - 2:
                return False
            try:
                M = p.law.evaluate_many(zs[keep], strict=False)
            except (SingularEvaluation, OutsideDomain):
                return False
            zs = zs[keep]
        except OutsideDomain:
            return False
        T = zs[:, None, None] * M + p.A.matrix[None, :, :]
        smin = np.linalg.svd(T, compute_uv=False)[:, -1]
        return bool(smin.min() >= sigma_floor)

    grid = np.linspace(lo, hi, rho_samples)
    ok = np.array([passes(r) for r in grid])
    if not ok[-1]:
        raise RangeExhausted(
            f"top of range rho={hi} still fails the sigma floor"
        )
    # smallest index with everything above it passing
    i = len(grid) - 1
    while i > 0 and ok[i - 1]:
        i -= 1
    if i == 0:
        return float(grid[0])
    lo_b, hi_b = grid[i - 1], grid[i]
    for _ in range(refine):
        sub = np.linspace(lo_b, hi_b, rho_samples)
        ok_sub = np.array([passes(r) for r in sub])
        j = len(sub) - 1
        while j > 0 and ok_sub[j - 1]:
            j -= 1
        if j == 0:
            return float(sub[0])
        lo_b, hi_b = sub[j - 1], sub[j]
    return float(hi_b)


def predicted_parabolic_rate(
    M0: np.ndarray,
    M1: Union[np.ndarray, MaterialLaw, Callable],
    C,
    nu0: float,
) -> ParabolicRate:
    """Parabolic decay-rate prediction nu1 = min(nu0, c/(|M1|^2 |M0| |C^-1|^2)).

    M0 must be selfadjoint positive definite; M1 may be a constant block
    or a z-dependent block (MaterialLaw or callable on batches of z), in
    which case its accretivity constant and sup norm are sampled on lines
    Re z in (-nu0, large].
    """
    M0 = np.atleast_2d(np.asarray(M0, dtype=complex))
    scale = max(float(np.linalg.norm(M0, 2)), 1e-300)
    if np.linalg.norm(M0 - M0.conj().T, 2) > 1e-12 * scale:
        raise HypothesisFailed("M0 block must be selfadjoint")
    lam0 = float(np.linalg.eigvalsh(0.5 * (M0 + M0.conj().T))[0])
    if lam0 <= 0.0:
        raise HypothesisFailed("M0 block must be positive definite")
    m0_norm = float(np.linalg.norm(M0, 2))

    if isinstance(M1, np.ndarray) or np.isscalar(M1):
        B = np.atleast_2d(np.asarray(M1, dtype=complex))
        c = float(np.linalg.eigvalsh(0.5 * (B + B.conj().T))[0])
        m1_norm = float(np.linalg.norm(B, 2))
    else:
        ev = M1.evaluate_many if isinstance(M1, MaterialLaw) else M1
        rhos = np.array([-0.95 * nu0, -0.5 * nu0, 0.0, 1.0, 10.0])
        c = np.inf
        m1_norm = 0.0
        for r in rhos:
            zs = r + 1j * _default_t_samples(r)
            vals = np.asarray(ev(zs))
            H = 0.5 * (vals + np.conj(np.swapaxes(vals, 1, 2)))
            c = min(c, float(np.linalg.eigvalsh(H)[:, 0].min()))
            m1_norm = max(
                m1_norm, float(np.linalg.svd(vals, compute_uv=False)[:, 0].max())
            )
        c = float(c)
    if c <= 0.0:
        raise HypothesisFailed(
            f"M1 block not uniformly accretive: sampled constant {c:.3e}"
        )

    c_inv = float(C.c_inv_norm if hasattr(C, "c_inv_norm") else C)
    nu1 = min(float(nu0), c / (m1_norm**2 * m0_norm * c_inv**2))
    return ParabolicRate(
        nu1=nu1, nu0=float(nu0), c=c, m1_norm=m1_norm,
        m0_norm=m0_norm, c_inv_norm=c_inv,
    )


def measure_decay_rate(u: Signal, fit_window: tuple) -> float:
    """Least-squares exponential rate of |u(t)| over fit_window.

    Fits log|u| against t and returns minus the slope.  Nodes below the
    1e-13 amplitude floor are dropped; fewer than two surviving nodes is
    a DegenerateFit.
    """
    t = u.grid.times()
    t0, t1 = fit_window
    mask = (t >= t0) & (t <= t1)
    amp = np.linalg.norm(u.values[mask], axis=1)
    keep = amp > 1e-13
    if keep.sum() < 2:
        raise DegenerateFit(
            f"only {int(keep.sum())} nodes above the amplitude floor in "
            f"[{t0}, {t1}]"
        )
    slope = np.polyfit(t[mask][keep], np.log(amp[keep]), 1)[0]
    return -float(slope)


def causality_check(
    problem: EvolutionaryProblem,
    f: Signal,
    support_start: float,
    certify: bool = True,
) -> float:
    """Solve and report the relative weighted mass of u below support_start.

    certify=False skips the certificate and exists for negative controls
    (anti-causal weights produce O(1) leak on purpose).
    """
    u, _ = solve(problem, f, certify=certify)
    return causality_leak(u, support_start)
