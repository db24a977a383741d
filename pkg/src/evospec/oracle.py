"""Independent verification engines.

Everything here deliberately avoids the frequency domain: implicit Euler
marches (∂ M0 + M1 + A) u = f forward in time, with explicit history
lookups for delay terms and trapezoid quadrature for convolution memory,
and the Post-Widder formula inverts a Laplace representation through
resolvent matrix powers alone.  Agreement between these marchers and the
spectral solver is the main cross-check of the whole package.

Implicit Euler is the right oracle twin here: it is unconditionally
stable for accretive problems, and one step is literally the lambda = 1/dt
resolvent that Post-Widder raises to high powers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .material_laws import DelaySpec, KernelSpec, kernel_values
from .weighted_signal import Signal, TimeGrid


class SingularStep(ArithmeticError):
    """The implicit-Euler step matrix is not invertible."""


class SingularResolvent(ArithmeticError):
    """The Post-Widder resolvent does not exist at the requested point."""


@dataclass(frozen=True)
class StepperConfig:
    dt: float
    scheme: str = "implicit_euler"
    lag_handling: str = "explicit_history"
    quadrature: str = "trapezoid"

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")

    def snap_lag(self, h: float) -> int:
        """Delay h as an integer number of steps; h must sit on the grid."""
        s = int(round(h / self.dt))
        if s < 1 or abs(h - s * self.dt) > 1e-9 * self.dt:
            raise ValueError(f"delay {h} is not a multiple of dt={self.dt}")
        return s


def _as_forcing(f) -> np.ndarray:
    f = np.asarray(f, dtype=np.complex128)
    if f.ndim == 1:
        f = f[:, None]
    return f


def _factor(mat: np.ndarray):
    try:
        lu = scipy.linalg.lu_factor(mat)
    except scipy.linalg.LinAlgError as exc:
        raise SingularStep(str(exc)) from exc
    # lu_factor tolerates exact singularity; reject tiny pivots explicitly
    if np.min(np.abs(np.diag(lu[0]))) < 1e-14 * max(1.0, np.abs(mat).max()):
        raise SingularStep("step matrix is numerically singular")
    return lu


def step_affine(M0, M1, A, f, u0, dt: float) -> np.ndarray:
    """March (∂ M0 + M1 + A) u = f with u(0) = u0.

    f has shape (n_steps + 1, m), sampled at t_j = j dt; row 0 is never
    used.  Returns the trajectory (n_steps + 1, m) including u0.
    """
    M0 = np.atleast_2d(np.asarray(M0, dtype=np.complex128))
    M1 = np.atleast_2d(np.asarray(M1, dtype=np.complex128))
    A = np.atleast_2d(np.asarray(A, dtype=np.complex128))
    f = _as_forcing(f)
    lu = _factor(M0 / dt + M1 + A)
    out = np.empty_like(f)
    out[0] = np.atleast_1d(np.asarray(u0, dtype=np.complex128))
    for j in range(f.shape[0] - 1):
        rhs = M0 @ out[j] / dt + f[j + 1]
        out[j + 1] = scipy.linalg.lu_solve(lu, rhs)
    return out


def step_delay(spec: DelaySpec, A, f, history, dt: float) -> np.ndarray:
    """March the delay equation with explicit history lookups.

    history(t) supplies u for t <= 0; delays must sit on the step grid.
    """
    A = np.atleast_2d(np.asarray(A, dtype=np.complex128))
    f = _as_forcing(f)
    cfg = StepperConfig(dt=dt)
    lags = [(cfg.snap_lag(h), N) for h, N in spec.pairs]
    lu = _factor(spec.M0 / dt + spec.M1 + A)
    out = np.empty_like(f)
    out[0] = np.atleast_1d(np.asarray(history(0.0), dtype=np.complex128))
    for j in range(f.shape[0] - 1):
        rhs = spec.M0 @ out[j] / dt + f[j + 1]
        for s, N in lags:
            idx = j + 1 - s
            lagged = out[idx] if idx >= 0 else np.asarray(
                history(idx * dt), dtype=np.complex128
            )
            rhs = rhs - N @ lagged
        out[j + 1] = scipy.linalg.lu_solve(lu, rhs)
    return out


def step_convolution(spec: KernelSpec, A, f, u0, dt: float) -> np.ndarray:
    """March (∂ (1 - k*)^{-1} + A) u = f.

    Substituting v = (1 - k*)^{-1} u turns the equation into
    ∂ v + A (v - k * v) = f, stepped implicitly with the s = 0 trapezoid
    half weight dt k(0)/2 folded into the step matrix.  Returns the u
    trajectory v - k * v.
    """
    A = np.atleast_2d(np.asarray(A, dtype=np.complex128))
    f = _as_forcing(f)
    n_steps = f.shape[0] - 1
    m = A.shape[0]
    ks = kernel_values(spec, np.arange(n_steps + 1) * dt)
    eye = np.eye(m)
    if spec.dim == 1 and m > 1:
        ks = ks[:, 0, 0][:, None, None] * eye
    elif spec.dim != m:
        raise ValueError(f"kernel dim {spec.dim} does not match system dim {m}")
    lu = _factor(eye / dt + A @ (eye - 0.5 * dt * ks[0]))
    v = np.empty((n_steps + 1, m), dtype=np.complex128)
    v[0] = np.atleast_1d(np.asarray(u0, dtype=np.complex128))
    for j in range(n_steps):
        # trapezoid memory over s = 1 .. j+1 (s = 0 lives in the matrix)
        mem = 0.5 * ks[j + 1] @ v[0]
        if j >= 1:
            mem = mem + np.einsum("sab,sb->a", ks[1 : j + 1], v[j:0:-1])
        rhs = v[j] / dt + f[j + 1] + dt * (A @ mem)
        v[j + 1] = scipy.linalg.lu_solve(lu, rhs)
    u = np.empty_like(v)
    u[0] = v[0]  # (k * v)(0) is an empty integral
    for j in range(1, n_steps + 1):
        conv = 0.5 * ks[0] @ v[j] + 0.5 * ks[j] @ v[0]
        if j >= 2:
            conv = conv + np.einsum("sab,sb->a", ks[1:j], v[j - 1 : 0 : -1])
        u[j] = v[j] - dt * conv
    return u


def post_widder(M0, M1, A, x, t: float, k: int) -> np.ndarray:
    """[(k/t) ((k/t) M0 + M1 + A)^{-1} M0]^{k+1} x.

    Matrix powers of the scaled resolvent; converges to the semigroup
    value at time t as k grows.  Numerical differentiation of the Laplace
    transform would be hopeless; the power form is exact algebra.
    """
    if not t > 0:
        raise ValueError("Post-Widder needs t > 0")
    if k < 1:
        raise ValueError("Post-Widder needs k >= 1")
    M0 = np.atleast_2d(np.asarray(M0, dtype=np.complex128))
    M1 = np.atleast_2d(np.asarray(M1, dtype=np.complex128))
    A = np.atleast_2d(np.asarray(A, dtype=np.complex128))
    lam = k / t
    mat = lam * M0 + M1 + A
    sig = np.linalg.svd(mat, compute_uv=False)
    if sig[-1] < 1e-14 * max(1.0, sig[0]):
        raise SingularResolvent(f"resolvent missing at lambda={lam}")
    B = lam * np.linalg.solve(mat, M0)
    return np.linalg.matrix_power(B, k + 1) @ np.asarray(x, dtype=np.complex128)


def heat_eigen_oracle(D, kappa: float) -> dict:
    """Eigen ground truth for the diffusion block D^T D.

    Returns the smallest eigenvalue, its mode, and the decay rate
    kappa * lambda_min.  When D is the 1d interior-difference stencil the
    spectrum is also checked against (4/h^2) sin^2(j pi / (2(n+1))).
    """
    D = np.asarray(D, dtype=float)
    if np.linalg.matrix_rank(D) < D.shape[1]:
        raise ValueError("oracle needs a full-column-rank stencil")
    lam, vecs = np.linalg.eigh(D.T @ D)
    n = D.shape[1]
    if D.shape == (n + 1, n) and D[0, 0] > 0:
        h = 1.0 / D[0, 0]
        expected_D = np.zeros_like(D)
        for i in range(n):
            expected_D[i, i] = 1.0 / h
            expected_D[i + 1, i] = -1.0 / h
        if np.allclose(D, expected_D, rtol=0, atol=1e-12 / h):
            j = np.arange(1, n + 1)
            closed = np.sort((4.0 / h**2) * np.sin(j * np.pi / (2 * (n + 1))) ** 2)
            if np.max(np.abs(lam - closed)) > 1e-10 * closed.max():
                raise ArithmeticError("stencil spectrum disagrees with closed form")
    mode = vecs[:, 0]
    if mode[np.argmax(np.abs(mode))].real < 0:
        mode = -mode
    return {"lam_min": float(lam[0]), "mode": mode, "rate": float(kappa * lam[0])}


def trajectory_to_signal(traj: np.ndarray, dt: float, rho: float,
                         t_start: float = 0.0) -> Signal:
    """Wrap a stepper trajectory as a Signal for CSV export or comparison."""
    traj = np.atleast_2d(np.asarray(traj, dtype=np.complex128))
    grid = TimeGrid(t_start, dt, traj.shape[0])
    return Signal(grid, rho, traj)
