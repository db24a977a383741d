"""Material law catalog.

A material law is an analytic matrix-valued function M on a right half
plane Re z > b(M).  The solver only ever sees the pair (b(M), evaluator),
but stability certificates need structure, so each constructor records
its kind and parameters:

  affine            M0 + z^{-1} M1
  delay             M0 + z^{-1} (M1 + sum_k N_k e^{-h_k z})
  kernel            1 + sqrt(2 pi) khat(z)
  resolvent_kernel  (1 - sqrt(2 pi) khat(z))^{-1}
  kelvin_voigt      diag(rho_tilde, z^{-1} (C + z^{-1} D)^{-1})
  dual_phase_lag    scalar (z^{-1} + tau_q + tau_q^2 z / 2) / (1 + tau_theta z)

khat is the (2 pi)^{-1/2} Laplace transform of a causal kernel k; the
weighted L1 norm |k|_{L1,rho} = int |k(t)| e^{-rho t} dt controls both the
convolution operator norm and the resolvent kernel's domain edge.

Accretivity constants c with Re <z M(z) x|x> >= c |x|^2 are estimated by
sampled scans over the boundary line Re z = rho; the inner product is
linear in its second argument, so Re <Bx|x> is the quadratic form of the
Hermitian part (B + B^H)/2.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

SQRT_2PI = np.sqrt(2.0 * np.pi)


class OutsideDomain(ValueError):
    """Evaluation requested left of the law's analyticity abscissa."""


class SingularEvaluation(ArithmeticError):
    """A z^{-1} factor hit z = 0 or a resolvent factor lost invertibility."""


class SubspaceAccretivityFailed(ValueError):
    """Declared subspace accretivity constants fail numerically."""


def _as_matrix(a, dim=None) -> np.ndarray:
    m = np.atleast_2d(np.asarray(a, dtype=np.complex128))
    if m.shape[0] != m.shape[1]:
        raise ValueError(f"expected square matrix, got {m.shape}")
    if dim is not None and m.shape[0] != dim:
        raise ValueError(f"dimension mismatch: {m.shape[0]} vs {dim}")
    return m


def _herm(B: np.ndarray) -> np.ndarray:
    return (B + np.conj(np.swapaxes(B, -1, -2))) / 2.0


# --- kernels ----------------------------------------------------------------


@dataclass(frozen=True)
class KernelSpec:
    """Causal convolution kernel with a recorded weighted L1 norm.

    form is one of "exponential" (k = sum_i amps_i e^{-rates_i t}),
    "indicator" (k = amp on [0, T]) or "sampled" (trapezoid data on a
    uniform grid from 0).  k0 is k(0+); kprime, where present, is the
    kernel of the pointwise derivative with its own weight mu_tilde.
    """

    form: str
    dim: int
    mu: float
    amps: Optional[tuple] = None
    rates: Optional[tuple] = None
    amp: Optional[np.ndarray] = None
    T: Optional[float] = None
    ts: Optional[np.ndarray] = None
    values: Optional[np.ndarray] = None
    l1: float = 0.0
    k0: Optional[np.ndarray] = None
    kprime: Optional["KernelSpec"] = None
    mu_tilde: Optional[float] = None

    @staticmethod
    def exponential(amps, rates, mu: float = 0.0, _derive_prime: bool = True):
        amps = tuple(_as_matrix(a) for a in amps)
        dim = amps[0].shape[0]
        for a in amps:
            _as_matrix(a, dim)
        rates = tuple(float(r) for r in rates)
        if len(rates) != len(amps):
            raise ValueError("need one rate per amplitude")
        if mu <= -min(rates):
            raise ValueError("weighted L1 norm diverges at this weight")
        k0 = sum(amps)
        kprime = None
        if _derive_prime:
            kprime = KernelSpec.exponential(
                tuple(-a * r for a, r in zip(amps, rates)),
                rates,
                mu=mu,
                _derive_prime=False,
            )
        spec = KernelSpec(
            form="exponential",
            dim=dim,
            mu=mu,
            amps=amps,
            rates=rates,
            k0=k0,
            kprime=kprime,
            mu_tilde=mu if kprime is not None else None,
        )
        object.__setattr__(spec, "l1", l1_weighted(spec, mu))
        return spec

    @staticmethod
    def indicator(amp, T: float, mu: float = 0.0):
        amp = _as_matrix(amp)
        if not T > 0:
            raise ValueError("indicator support length must be positive")
        spec = KernelSpec(
            form="indicator", dim=amp.shape[0], mu=mu, amp=amp, T=float(T), k0=amp
        )
        object.__setattr__(spec, "l1", l1_weighted(spec, mu))
        return spec

    @staticmethod
    def sampled(ts, values, mu: float = 0.0):
        ts = np.asarray(ts, dtype=float)
        values = np.asarray(values, dtype=np.complex128)
        if values.ndim == 1:
            values = values[:, None, None]
        if ts.ndim != 1 or ts[0] != 0.0 or np.any(np.diff(ts) <= 0):
            raise ValueError("sampled kernels need an increasing grid from t=0")
        step = np.diff(ts)
        if np.max(np.abs(step - step[0])) > 1e-9 * step[0]:
            raise ValueError("sampled kernels need a uniform grid")
        spec = KernelSpec(
            form="sampled",
            dim=values.shape[1],
            mu=mu,
            ts=ts,
            values=values,
            k0=values[0],
        )
        object.__setattr__(spec, "l1", l1_weighted(spec, mu))
        return spec


def kernel_values(spec: KernelSpec, ts) -> np.ndarray:
    """Pointwise kernel values k(t), zero for t < 0. Shape (len(ts), m, m)."""
    ts = np.asarray(ts, dtype=float)
    out = np.zeros((ts.size, spec.dim, spec.dim), dtype=np.complex128)
    pos = ts >= 0
    if spec.form == "exponential":
        for a, r in zip(spec.amps, spec.rates):
            out[pos] += np.exp(-r * ts[pos])[:, None, None] * a
    elif spec.form == "indicator":
        inside = pos & (ts <= spec.T)
        out[inside] = spec.amp
    elif spec.form == "sampled":
        grid_t = spec.ts
        for i in range(spec.dim):
            for j in range(spec.dim):
                re = np.interp(ts, grid_t, spec.values[:, i, j].real, left=0, right=0)
                im = np.interp(ts, grid_t, spec.values[:, i, j].imag, left=0, right=0)
                out[:, i, j] = re + 1j * im
        out[~pos] = 0.0
    else:
        raise ValueError(f"unknown kernel form {spec.form!r}")
    return out


def l1_weighted(spec: KernelSpec, weight: float) -> float:
    """|k|_{L1,weight} = int_0^inf norm(k(t)) e^{-weight t} dt."""
    if spec.form == "exponential":
        if len(spec.amps) == 1:
            a, r = spec.amps[0], spec.rates[0]
            if r + weight <= 0:
                return np.inf
            return float(np.linalg.norm(a, 2) / (r + weight))
        # mixed-sign sums need the norm inside the integral: quadrature on
        # an interval long enough that the slowest-decaying cutoff is tiny
        r_min = min(spec.rates)
        if r_min + weight <= 0:
            return np.inf
        T = 40.0 / (r_min + weight)
        return _l1_quadrature(spec, weight, T)
    if spec.form == "indicator":
        a = float(np.linalg.norm(spec.amp, 2))
        if weight == 0.0:
            return a * spec.T
        return a * (1.0 - np.exp(-weight * spec.T)) / weight
    if spec.form == "sampled":
        nrm = np.linalg.norm(spec.values, 2, axis=(1, 2))
        w = nrm * np.exp(-weight * spec.ts)
        return float(np.trapezoid(w, spec.ts))
    raise ValueError(f"unknown kernel form {spec.form!r}")


def _l1_quadrature(spec: KernelSpec, weight: float, T: float) -> float:
    n = 2048
    prev = None
    for _ in range(12):
        ts = np.linspace(0.0, T, n + 1)
        vals = kernel_values(spec, ts)
        nrm = np.linalg.norm(vals, 2, axis=(1, 2)) * np.exp(-weight * ts)
        cur = float(np.trapezoid(nrm, ts))
        if prev is not None and abs(cur - prev) < 1e-10 * max(1.0, abs(cur)):
            return cur
        prev = cur
        n *= 2
    return prev


def khat_many(spec: KernelSpec, zs: np.ndarray) -> np.ndarray:
    """(2 pi)^{-1/2} int_0^inf e^{-z s} k(s) ds for a batch of z."""
    zs = np.asarray(zs, dtype=np.complex128)
    if np.any(zs.real <= spec.mu):
        raise OutsideDomain(
            f"khat needs Re z > {spec.mu}, got min {zs.real.min()}"
        )
    out = np.zeros((zs.size, spec.dim, spec.dim), dtype=np.complex128)
    if spec.form == "exponential":
        for a, r in zip(spec.amps, spec.rates):
            out += (1.0 / (SQRT_2PI * (zs + r)))[:, None, None] * a
        return out
    if spec.form == "indicator":
        w = np.empty_like(zs)
        small = np.abs(spec.T * zs) < 1e-6
        zb = zs[~small]
        w[~small] = (1.0 - np.exp(-spec.T * zb)) / zb
        # series of (1 - e^{-Tz})/z around z = 0
        zt = spec.T * zs[small]
        w[small] = spec.T * (1.0 - zt / 2.0 + zt**2 / 6.0)
        return (w / SQRT_2PI)[:, None, None] * spec.amp
    if spec.form == "sampled":
        val, _ = _khat_sampled(spec, zs)
        return val
    raise ValueError(f"unknown kernel form {spec.form!r}")


def _khat_sampled(spec: KernelSpec, zs: np.ndarray):
    # trapezoid in time; the coarse/fine Richardson gap estimates the
    # quadrature error
    ts, vals = spec.ts, spec.values
    ex = np.exp(-np.multiply.outer(zs, ts))

    def trap(stride):
        t_s, v_s, e_s = ts[::stride], vals[::stride], ex[:, ::stride]
        w = np.full(t_s.size, t_s[1] - t_s[0])
        w[0] = w[-1] = 0.5 * (t_s[1] - t_s[0])
        return np.einsum("kn,n,nij->kij", e_s, w, v_s) / SQRT_2PI

    fine = trap(1)
    if ts.size >= 5 and (ts.size - 1) % 2 == 0:
        coarse = trap(2)
        err = float(np.max(np.abs(fine - coarse))) / 3.0
    else:
        err = np.nan
    return fine, err


def khat(spec: KernelSpec, z: complex) -> np.ndarray:
    return khat_many(spec, np.array([z]))[0]


def khat_with_error(spec: KernelSpec, z: complex):
    """khat plus a quadrature-error estimate (0 for closed forms)."""
    zs = np.array([z], dtype=np.complex128)
    if spec.form == "sampled":
        if np.any(zs.real <= spec.mu):
            raise OutsideDomain(f"khat needs Re z > {spec.mu}")
        val, err = _khat_sampled(spec, zs)
        return val[0], err
    return khat_many(spec, zs)[0], 0.0


# --- delay specs ------------------------------------------------------------


@dataclass(frozen=True)
class DelaySpec:
    """Affine part plus finitely many discrete delays h_k with weights N_k."""

    M0: np.ndarray
    M1: np.ndarray
    pairs: tuple  # ((h_k, N_k), ...) with h_k strictly increasing
    eta: float = field(init=False)
    h0: float = field(init=False)
    sup_norm: float = field(init=False)

    def __post_init__(self):
        M0 = _as_matrix(self.M0)
        M1 = _as_matrix(self.M1, M0.shape[0])
        pairs = tuple(
            (float(h), _as_matrix(N, M0.shape[0])) for h, N in self.pairs
        )
        hs = [h for h, _ in pairs]
        if not hs:
            raise ValueError("delay spec needs at least one delay pair")
        if min(hs) <= 0:
            raise ValueError("delays must be positive")
        if any(b <= a for a, b in zip(hs, hs[1:])):
            raise ValueError("delays must be strictly increasing")
        gaps = [b - a for a, b in zip(hs, hs[1:])]
        object.__setattr__(self, "M0", M0)
        object.__setattr__(self, "M1", M1)
        object.__setattr__(self, "pairs", pairs)
        object.__setattr__(self, "h0", hs[0])
        object.__setattr__(self, "eta", min(gaps) if gaps else hs[0])
        object.__setattr__(
            self, "sup_norm", max(np.linalg.norm(N, 2) for _, N in pairs)
        )

    @property
    def dim(self) -> int:
        return self.M0.shape[0]


def delay_tail_bound(spec: DelaySpec, s: float) -> float:
    """Upper bound for norm(sum_k N_k e^{-h_k z}) on the line Re z = s."""
    if not s > 0:
        raise ValueError("bound needs Re z = s > 0")
    return spec.sup_norm * (1.0 + 1.0 / (spec.eta * s)) * np.exp(-spec.h0 * s)


@dataclass(frozen=True)
class DualPhaseLagSpec:
    tau_q: float
    tau_theta: float

    def __post_init__(self):
        if not (self.tau_q > 0 and self.tau_theta > 0):
            raise ValueError("phases must be positive")

    @property
    def mu(self) -> float:
        return self.tau_q / self.tau_theta


# --- the law type -----------------------------------------------------------


@dataclass(frozen=True)
class MaterialLaw:
    """Analytic matrix family z -> M(z) on Re z > b_of_M.

    m_inf, where not None, is the limit of M(z) as |z| -> infinity within
    the half plane; scans use it for the asymptotic accretivity term.
    """

    kind: str
    dim: int
    b_of_M: float
    params: dict
    evaluator: Callable[[np.ndarray], np.ndarray]
    m_inf: Optional[np.ndarray] = None

    def abscissa(self) -> float:
        return self.b_of_M

    def evaluate_many(self, zs, strict: bool = True) -> np.ndarray:
        zs = np.asarray(zs, dtype=np.complex128).ravel()
        if strict and np.any(zs.real <= self.b_of_M):
            raise OutsideDomain(
                f"law of kind {self.kind!r} needs Re z > {self.b_of_M}"
            )
        out = self.evaluator(zs)
        if not np.all(np.isfinite(out)):
            raise SingularEvaluation(f"non-finite {self.kind} evaluation")
        return out


def evaluate(law: MaterialLaw, z: complex, strict: bool = True) -> np.ndarray:
    return law.evaluate_many(np.array([z]), strict=strict)[0]


def _guard_nonzero(zs: np.ndarray) -> None:
    if np.any(np.abs(zs) < 1e-300):
        raise SingularEvaluation("z^{-1} factor evaluated at z = 0")


def affine_law(M0, M1) -> MaterialLaw:
    """M(z) = M0 + z^{-1} M1."""
    M0 = _as_matrix(M0)
    M1 = _as_matrix(M1, M0.shape[0])

    def ev(zs):
        _guard_nonzero(zs)
        return M0[None] + M1[None] / zs[:, None, None]

    return MaterialLaw(
        kind="affine",
        dim=M0.shape[0],
        b_of_M=0.0,
        params={"M0": M0, "M1": M1},
        evaluator=ev,
        m_inf=M0,
    )


def delay_law(spec: DelaySpec, truncation: float = 1e-16) -> MaterialLaw:
    """M(z) = M0 + z^{-1} (M1 + sum_k N_k e^{-h_k z}).

    Terms whose norm bound norm(N_k) e^{-h_k Re z} falls below the
    truncation threshold everywhere in the batch are dropped.
    """

    def ev(zs):
        _guard_nonzero(zs)
        inner = np.broadcast_to(
            spec.M1, (zs.size, spec.dim, spec.dim)
        ).copy()
        rho_min = zs.real.min()
        for h, N in spec.pairs:
            if np.linalg.norm(N, 2) * np.exp(-h * rho_min) < truncation:
                continue
            inner += np.exp(-h * zs)[:, None, None] * N
        return spec.M0[None] + inner / zs[:, None, None]

    return MaterialLaw(
        kind="delay",
        dim=spec.dim,
        b_of_M=0.0,
        params={"spec": spec, "truncation": truncation},
        evaluator=ev,
        m_inf=spec.M0,
    )


def kernel_law(spec: KernelSpec) -> MaterialLaw:
    """M(z) = 1 + sqrt(2 pi) khat(z)."""
    eye = np.eye(spec.dim)

    def ev(zs):
        return eye[None] + SQRT_2PI * khat_many(spec, zs)

    return MaterialLaw(
        kind="kernel",
        dim=spec.dim,
        b_of_M=max(0.0, spec.mu),
        params={"spec": spec},
        evaluator=ev,
        m_inf=eye,
    )


def _resolvent_abscissa(spec: KernelSpec) -> float:
    # smallest weight with |k|_{L1,rho} < 1; the norm decreases in rho
    lo = spec.mu
    if l1_weighted(spec, lo + 1e-12) < 1.0:
        return lo
    hi = max(1.0, lo + 1.0)
    while l1_weighted(spec, hi) >= 1.0:
        hi = 2.0 * hi + 1.0
        if hi > 1e12:
            raise ValueError("kernel L1 norm never drops below 1")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if l1_weighted(spec, mid) < 1.0:
            hi = mid
        else:
            lo = mid
        if hi - lo < 1e-13 * max(1.0, abs(hi)):
            break
    return hi


def resolvent_kernel_law(spec: KernelSpec) -> MaterialLaw:
    """M(z) = (1 - sqrt(2 pi) khat(z))^{-1}."""
    eye = np.eye(spec.dim)
    b = _resolvent_abscissa(spec)

    def ev(zs):
        G = eye[None] - SQRT_2PI * khat_many(spec, zs)
        sig = np.linalg.svd(G, compute_uv=False)
        if np.any(sig[:, -1] < 1e-14 * max(1.0, sig.max())):
            raise SingularEvaluation("1 - sqrt(2 pi) khat(z) is singular")
        return np.linalg.inv(G)

    return MaterialLaw(
        kind="resolvent_kernel",
        dim=spec.dim,
        b_of_M=b,
        params={"spec": spec},
        evaluator=ev,
        m_inf=eye,
    )


def kelvin_voigt_law(rho_tilde, C, D) -> MaterialLaw:
    """M(z) = diag(rho_tilde, z^{-1} (C + z^{-1} D)^{-1})."""
    rho_tilde = _as_matrix(rho_tilde)
    C = _as_matrix(C)
    D = _as_matrix(D, C.shape[0])
    m1, m2 = rho_tilde.shape[0], C.shape[0]
    dim = m1 + m2
    b = float(np.linalg.norm(np.linalg.solve(C, D), 2))

    def ev(zs):
        _guard_nonzero(zs)
        out = np.zeros((zs.size, dim, dim), dtype=np.complex128)
        out[:, :m1, :m1] = rho_tilde
        inner = C[None] + D[None] / zs[:, None, None]
        out[:, m1:, m1:] = np.linalg.inv(inner) / zs[:, None, None]
        return out

    m_inf = np.zeros((dim, dim))
    m_inf[:m1, :m1] = rho_tilde
    return MaterialLaw(
        kind="kelvin_voigt",
        dim=dim,
        b_of_M=b,
        params={"rho_tilde": rho_tilde, "C": C, "D": D},
        evaluator=ev,
        m_inf=m_inf,
    )


def dual_phase_lag_law(spec: DualPhaseLagSpec, stable: bool = False) -> MaterialLaw:
    """Scalar law (z^{-1} + tau_q + tau_q^2 z / 2) / (1 + tau_theta z).

    stable=True insists on the delay ratio mu = tau_q/tau_theta < 2, the
    regime where the accretivity constant mu (1 - mu/2) is positive.
    """
    if stable and not spec.mu < 2.0:
        raise ValueError(f"stable constructor needs tau_q/tau_theta < 2, got {spec.mu}")
    tq, tth = spec.tau_q, spec.tau_theta

    def ev(zs):
        _guard_nonzero(zs)
        num = 1.0 / zs + tq + 0.5 * tq**2 * zs
        den = 1.0 + tth * zs
        return (num / den)[:, None, None]

    return MaterialLaw(
        kind="dual_phase_lag",
        dim=1,
        b_of_M=-1.0 / tth + 1e-6,
        params={"spec": spec},
        evaluator=ev,
        m_inf=np.array([[0.5 * tq**2 / tth]]),
    )


def custom_law(
    dim: int,
    b_of_M: float,
    evaluator: Callable[[np.ndarray], np.ndarray],
    kind: str = "custom",
    params: Optional[dict] = None,
    m_inf: Optional[np.ndarray] = None,
) -> MaterialLaw:
    return MaterialLaw(
        kind=kind,
        dim=dim,
        b_of_M=b_of_M,
        params=params or {},
        evaluator=evaluator,
        m_inf=m_inf,
    )


# --- accretivity ------------------------------------------------------------


@dataclass(frozen=True)
class AccretivityScan:
    """Sampled lower-bound estimate for Re <z M(z) x|x> on Re z = rho."""

    rho: float
    t_samples: np.ndarray
    values: np.ndarray
    c_est: float
    asymptotic_included: bool
    asymptotic_value: Optional[float] = None
    label: str = "sampled"


def _default_t_samples(rho: float) -> np.ndarray:
    ts = np.logspace(-3.0, 6.0, 512)
    parts = [ts, -ts]
    if rho != 0.0:
        parts.append(np.array([0.0]))  # z = rho itself, skipped when z would be 0
    return np.sort(np.concatenate(parts))


def accretivity_scan(
    law: MaterialLaw, rho: float, t_samples=None
) -> AccretivityScan:
    """min over sampled t of lambda_min Herm((it + rho) M(it + rho)).

    For kinds with a positive-definite limit M_inf the asymptotic value
    rho lambda_min(Herm(M_inf)) joins the minimum, covering the part of
    the line beyond the largest sample.
    """
    if not rho > law.b_of_M:
        raise OutsideDomain(f"scan needs rho > {law.b_of_M}, got {rho}")
    if t_samples is None:
        t_samples = _default_t_samples(rho)
    t_samples = np.asarray(t_samples, dtype=float)
    zs = rho + 1j * t_samples
    M = law.evaluate_many(zs)
    zM = zs[:, None, None] * M
    vals = np.linalg.eigvalsh(_herm(zM))[:, 0]
    c_est = float(vals.min())
    asym = None
    included = False
    if law.m_inf is not None:
        lam = float(np.linalg.eigvalsh(_herm(law.m_inf))[0])
        if lam > 0:
            asym = rho * lam
            c_est = min(c_est, asym)
            included = True
    return AccretivityScan(
        rho=rho,
        t_samples=t_samples,
        values=vals,
        c_est=c_est,
        asymptotic_included=included,
        asymptotic_value=asym,
    )


def affine_rho0(M0, M1, c0: float, c1: float):
    """Weight threshold for strict accretivity of z M0 + M1.

    c0 bounds Herm(M0) on the range of M0, c1 bounds Herm(M1) on its
    kernel; both are verified before use.  Returns (rho0, c) with
    c = c1/2 guaranteed for every Re z > rho0, confirmed by a scan just
    above rho0.
    """
    M0 = _as_matrix(M0)
    M1 = _as_matrix(M1, M0.shape[0])
    if not (c0 > 0 and c1 > 0):
        raise SubspaceAccretivityFailed("need positive c0, c1")
    H0 = _herm(M0)
    w, V = np.linalg.eigh(H0)
    tol = 1e-12 * max(1.0, float(np.abs(w).max()))
    rng = V[:, w > tol]
    ker = V[:, np.abs(w) <= tol]
    if rng.shape[1] > 0:
        have0 = float(np.linalg.eigvalsh(rng.conj().T @ H0 @ rng)[0])
        if have0 < c0 - 1e-10:
            raise SubspaceAccretivityFailed(
                f"M0 accretivity on its range is {have0}, below declared {c0}"
            )
    if ker.shape[1] > 0:
        H1k = ker.conj().T @ _herm(M1) @ ker
        have1 = float(np.linalg.eigvalsh(H1k)[0])
        if have1 < c1 - 1e-10:
            raise SubspaceAccretivityFailed(
                f"M1 accretivity on ker M0 is {have1}, below declared {c1}"
            )
    norm1 = float(np.linalg.norm(M1, 2))
    rho0 = (1.0 / c0) * (c1 / 2.0 + 2.0 * norm1**2 / c1)
    c = c1 / 2.0
    scan = accretivity_scan(affine_law(M0, M1), rho0 * 1.01)
    if scan.c_est < c - 1e-8:
        raise ArithmeticError(
            f"scan at rho0*1.01 found c_est={scan.c_est}, below guaranteed {c}"
        )
    return rho0, c


# --- kernel condition -------------------------------------------------------


def kernel_condition_check(spec: KernelSpec, rho_grid, t_grid) -> dict:
    """Selfadjointness, commutation and the one-sided time bound for khat.

    d_est is the grid minimum of the Hermitian form
    t Im <khat(it + rho) x|x> = x^H [t (khat^H - khat) / 2i] x.
    The propagation entry checks that at weights above the grid the same
    minimum stays above 4 d_est (one-sided; d_est <= 0 case only).
    """
    rho_grid = np.asarray(rho_grid, dtype=float)
    t_grid = np.asarray(t_grid, dtype=float)
    sample_ts = np.linspace(0.0, t_grid.max() if t_grid.size else 1.0, 17)
    kv = kernel_values(spec, sample_ts)
    scale = max(1.0, float(np.abs(kv).max()))
    sa = bool(
        np.max(np.abs(kv - np.conj(np.swapaxes(kv, 1, 2)))) <= 1e-10 * scale
    )
    commute = True
    for i in range(0, sample_ts.size, 4):
        for j in range(0, sample_ts.size, 4):
            gap = kv[i] @ kv[j] - kv[j] @ kv[i]
            if np.max(np.abs(gap)) > 1e-10 * scale**2:
                commute = False

    def grid_min(rhos):
        best = np.inf
        for rho in rhos:
            for sign in (1.0, -1.0):
                ts = sign * t_grid[t_grid > 0]
                if ts.size == 0:
                    continue
                kh = khat_many(spec, rho + 1j * ts)
                form = (
                    ts[:, None, None]
                    * (np.conj(np.swapaxes(kh, 1, 2)) - kh)
                    / 2j
                )
                best = min(best, float(np.linalg.eigvalsh(form)[:, 0].min()))
        return best

    d_est = grid_min(rho_grid)
    if d_est <= 0:
        rho_big = rho_grid.max()
        prop_min = grid_min([2 * rho_big, 5 * rho_big, 10 * rho_big])
        propagation_ok = bool(prop_min >= 4.0 * d_est - 1e-8)
    else:
        propagation_ok = True
    return {
        "sa": sa,
        "commute": commute,
        "d_est": d_est,
        "propagation_ok": propagation_ok,
    }
