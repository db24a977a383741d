"""Reduction of second-order equations d_t^2 M(d_t)u + C^H C u = f to first order.

Substituting v = d_t u + d u and q = -C u turns the scalar-in-time second
order problem into (d_t M_d(d_t) + A)(v, q) = (f, 0) with the shifted block
law M_d below and the skew block A = [[0, -C^H], [C, 0]].  The shift d > 0
restores the uniform accretivity that the plain d = 0 substitution loses at
low frequency; K(d) prices the shift and select_d picks d on a log grid.

Eliminating q from the reduced symbol gives back (z^2 M(z) + C^H C) u = f
identically in z, so the reduction is exact, not an approximation; the only
numerics live in the choice of d and in the sampled operator norms.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np

from .fourier_laplace import apply_derivative
from .material_laws import MaterialLaw, custom_law, _default_t_samples
from .spatial_ops import ReducedGradient
from .weighted_signal import Signal, weighted_norm


class NoAdmissibleD(RuntimeError):
    """No d on the search grid makes both accretivity branches positive."""


class BoundViolated(ArithmeticError):
    """Sampled Herm(z M_d(z)) dropped below the plan's guaranteed constant.

    Carries the witness z and the measured margin.  A violation means the
    plan's constants do not describe the law it was paired with (stale d,
    understated norms), or a genuine bug.
    """

    def __init__(self, msg, z=None, margin=None):
        super().__init__(msg)
        self.z = z
        self.margin = margin


class ConsistencyViolated(UserWarning):
    """Recovered u fails d_t u = v - d u beyond the diagnostic tolerance."""


@dataclass(frozen=True)
class ReductionPlan:
    """Shift d with its guaranteed accretivity constant.

    c_tilde = min{c - d K(d), 3d/4 - rho0} lower-bounds Herm(z M_d(z)) on
    Re z > -rho0; select_d guarantees c_tilde > 0, hand-built plans may
    carry anything (verify_Md_bound exists to catch the inconsistent ones).
    """

    d: float
    K_of_d: float
    c: float
    c_tilde: float
    rho0: float
    norm_M0: float
    norm_M1: float
    c_inv_norm: float

    def to_json(self) -> dict:
        return {
            "d": self.d,
            "K": self.K_of_d,
            "c": self.c,
            "c_tilde": self.c_tilde,
            "rho0": self.rho0,
            "norms": {
                "M0": self.norm_M0,
                "M1": self.norm_M1,
                "C_inv": self.c_inv_norm,
            },
        }


def k_of_d(d: float, norm_M0: float, norm_M1: float, c_inv_norm: float) -> float:
    """K(d) = |M0| + (d|M0| + |M1|)^2 |C^-1|^2, the accretivity price of d."""
    return norm_M0 + (d * norm_M0 + norm_M1) ** 2 * c_inv_norm**2


def _block_fn(obj, p: int) -> Callable[[np.ndarray], np.ndarray]:
    """Normalize a coefficient to a batch map zs -> (k, p, p)."""
    if callable(obj):
        def fn(zs):
            out = np.asarray(obj(np.asarray(zs, dtype=complex)), dtype=complex)
            if out.ndim == 1:
                return out[:, None, None] * np.eye(p)
            if out.shape != (len(zs), p, p):
                raise ValueError("coefficient batch has shape %r, want (%d, %d, %d)"
                                 % (out.shape, len(zs), p, p))
            return out
        return fn
    mat = np.asarray(obj, dtype=complex)
    if mat.ndim == 0:
        mat = mat * np.eye(p)
    if mat.shape != (p, p):
        raise ValueError("constant coefficient must be scalar or (%d, %d)" % (p, p))
    return lambda zs: np.broadcast_to(mat, (len(zs), p, p)).copy()


def _c_matrix(C) -> np.ndarray:
    if isinstance(C, ReducedGradient):
        return np.asarray(C.C, dtype=complex)
    mat = np.asarray(C, dtype=complex)
    if mat.ndim == 0:
        mat = mat.reshape(1, 1)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ValueError("C must be square")
    return mat


def build_Md(M0fn, M1fn, C, d: float) -> MaterialLaw:
    """Shifted block law of the second-order reduction.

    M_d(z) = [[M(z), 0], [0, I]]
           + (d/z) [[-M0(z), (M1(z) - d M0(z)) C^-1], [0, I]]

    with M(z) = M0(z) + z^-1 M1(z).  M0fn / M1fn may be constants (scalar
    or (p,p)) or batch callables zs -> (k,) or (k, p, p); C is the square
    invertible gradient factor (ReducedGradient or plain matrix).
    """
    if not d > 0:
        raise ValueError("d must be positive")
    Cmat = _c_matrix(C)
    p = Cmat.shape[0]
    Cinv = np.linalg.inv(Cmat)
    m0 = _block_fn(M0fn, p)
    m1 = _block_fn(M1fn, p)
    eye = np.eye(p)

    def evaluate(zs: np.ndarray) -> np.ndarray:
        zs = np.asarray(zs, dtype=complex)
        M0v = m0(zs)
        M1v = m1(zs)
        zinv = (1.0 / zs)[:, None, None]
        out = np.zeros((len(zs), 2 * p, 2 * p), dtype=complex)
        out[:, :p, :p] = M0v + zinv * M1v - d * zinv * M0v
        out[:, :p, p:] = d * zinv * ((M1v - d * M0v) @ Cinv)
        out[:, p:, p:] = eye + d * zinv * eye
        return out

    return custom_law(2 * p, 0.0, evaluate, kind="block_reduced",
                      params={"d": d, "p": p})


def sampled_norms(M0fn, M1fn, p: int, rho: float = 0.0,
                  t_samples: Optional[np.ndarray] = None,
                  safety: float = 1.05) -> tuple:
    """Sampled sup norms of M0(z), M1(z) on the line Re z = rho.

    Suprema over the certification frequency samples only; the safety
    factor absorbs the gap to the true sup for the decaying symbols we
    ship (rational in z, norm maximized at low frequency).
    """
    if t_samples is None:
        t_samples = _default_t_samples(rho)
    zs = rho + 1j * np.asarray(t_samples, dtype=float)
    m0 = _block_fn(M0fn, p)
    m1 = _block_fn(M1fn, p)
    n0 = float(np.max(np.linalg.norm(m0(zs), ord=2, axis=(1, 2))))
    n1 = float(np.max(np.linalg.norm(m1(zs), ord=2, axis=(1, 2))))
    return safety * n0, safety * n1


def select_d(c: float, norm_M0: float, norm_M1: float, c_inv_norm: float,
             nu_target: float, grid_points: int = 200) -> ReductionPlan:
    """Pick d maximizing min{c - d K(d), 3d/4 - nu_target} on a log grid.

    Existence is guaranteed for small nu_target because d K(d) -> 0 with d
    while 3d/4 needs d > 4 nu_target / 3; the two requirements collide when
    nu_target is too aggressive, and then every grid point fails.
    """
    if not c > 0:
        raise NoAdmissibleD("accretivity constant c = %g is not positive" % c)
    ds = np.geomspace(1e-6, 1e3, grid_points)
    ks = k_of_d(ds, norm_M0, norm_M1, c_inv_norm)
    obj = np.minimum(c - ds * ks, 0.75 * ds - nu_target)
    best = int(np.argmax(obj))
    if not obj[best] > 0:
        raise NoAdmissibleD(
            "no admissible d for nu_target=%g (best margin %g at d=%g)"
            % (nu_target, obj[best], ds[best]))
    d = float(ds[best])
    K = float(ks[best])
    rho0 = min(nu_target, 0.75 * d - 1e-12)
    c_tilde = min(c - d * K, 0.75 * d - rho0)
    return ReductionPlan(d=d, K_of_d=K, c=c, c_tilde=c_tilde, rho0=rho0,
                         norm_M0=norm_M0, norm_M1=norm_M1,
                         c_inv_norm=c_inv_norm)


def verify_Md_bound(law: MaterialLaw, plan: ReductionPlan,
                    z_samples: np.ndarray) -> dict:
    """Check lambda_min Herm(z M_d(z)) >= min{c - d K(d), 3d/4 + Re z} - 1e-10.

    The inequality is the sampled form of the plan's guarantee; a violation
    raises BoundViolated with the witness z.  All samples must satisfy
    Re z > -plan.rho0 (outside that half-plane the plan promises nothing).
    """
    zs = np.asarray(z_samples, dtype=complex).ravel()
    if len(zs) == 0:
        raise ValueError("need at least one z sample")
    if np.min(zs.real) <= -plan.rho0:
        raise ValueError("samples must satisfy Re z > -rho0 = %g" % -plan.rho0)
    vals = law.evaluate_many(zs, strict=False)
    T = zs[:, None, None] * vals
    H = 0.5 * (T + np.conj(np.swapaxes(T, 1, 2)))
    lam = np.linalg.eigvalsh(H)[:, 0]
    branch1 = plan.c - plan.d * plan.K_of_d
    bounds = np.minimum(branch1, 0.75 * plan.d + zs.real)
    margins = lam - bounds
    worst = int(np.argmin(margins))
    if margins[worst] < -1e-10:
        raise BoundViolated(
            "Herm(zM_d) = %g below guaranteed %g at z = %s"
            % (lam[worst], bounds[worst], zs[worst]),
            z=zs[worst], margin=float(margins[worst]))
    return {
        "passed": True,
        "worst_margin": float(margins[worst]),
        "worst_z": complex(zs[worst]),
        "n_samples": int(len(zs)),
    }


def recover_u(v: Signal, q: Signal, C, d: float) -> Signal:
    """u = -C^-1 q, with the derivative identity d_t u = v - d u as diagnostic.

    The identity holds exactly on the discrete transform when (v, q) came
    out of the reduced solve; a large defect means (v, q) are not a matched
    pair for this C and d.  The check warns (ConsistencyViolated), it never
    aborts: recovery itself is just the linear map.
    """
    Cmat = _c_matrix(C)
    p = Cmat.shape[0]
    if q.values.shape[1] != p:
        raise ValueError("q has %d components, C is %dx%d"
                         % (q.values.shape[1], p, p))
    if v.values.shape[1] != p:
        raise ValueError("v has %d components, expected %d" % (v.values.shape[1], p))
    if not v.grid.close_to(q.grid) or v.rho != q.rho:
        raise ValueError("v and q must share grid and weight")
    u_vals = -np.linalg.solve(Cmat, q.values.T).T
    u = Signal(v.grid, v.rho, u_vals)
    norm_v = weighted_norm(v)
    if norm_v > 0:
        defect = weighted_norm(apply_derivative(u, 1) - (v - d * u))
        if defect > 1e-3 * norm_v:
            warnings.warn(
                "derivative identity defect %.3g exceeds 1e-3 * |v| = %.3g"
                % (defect, 1e-3 * norm_v),
                ConsistencyViolated, stacklevel=2)
    return u
