"""Time-domain oracles: steppers, Post-Widder powers, eigen ground truth."""

import math

import numpy as np
import pytest
import scipy.linalg

from evospec.fourier_laplace import apply_law, transform
from evospec.material_laws import DelaySpec, KernelSpec, custom_law
from evospec.oracle import (
    SingularResolvent,
    SingularStep,
    StepperConfig,
    heat_eigen_oracle,
    post_widder,
    step_affine,
    step_convolution,
    step_delay,
    trajectory_to_signal,
)
from evospec.spatial_ops import build_grad_div_1d
from evospec.weighted_signal import Signal, TimeGrid, load_signal, save_signal


def solution_multiplier(law_fn, A, dim, b=0.0):
    """Custom law z -> (z M(z) + A)^{-1} for spectral reference solves."""

    def ev(zs):
        M = law_fn(zs)
        return np.linalg.inv(zs[:, None, None] * M + A)

    return custom_law(dim, b, ev)


# --- step_affine ------------------------------------------------------------


def test_affine_geometric_recursion():
    a, dt, n = 1.0, 1e-3, 1000
    f = np.zeros((n + 1, 1))
    traj = step_affine([[1.0]], [[a]], [[0.0]], f, [1.0], dt)
    j = np.arange(n + 1)
    assert np.max(np.abs(traj[:, 0] - (1.0 + a * dt) ** (-j))) <= 1e-12
    assert abs(traj[-1, 0] - math.exp(-a)) <= 1e-3


def test_affine_singular_step():
    with pytest.raises(SingularStep):
        step_affine([[0.0]], [[0.0]], [[0.0]], np.zeros((3, 1)), [0.0], 0.1)


def test_affine_dae_constraint_preserved():
    # M0 = diag(1,0): the second row is purely algebraic, M1 u in R(M0)
    # forces u2 = 0 with this M1
    M0 = np.diag([1.0, 0.0])
    M1 = np.eye(2)
    f = np.zeros((2001, 2))
    traj = step_affine(M0, M1, np.zeros((2, 2)), f, [1.0, 0.0], 1e-3)
    assert np.max(np.abs(traj[:, 1])) <= 1e-8
    j = np.arange(2001)
    assert np.max(np.abs(traj[:, 0] - (1.0 + 1e-3) ** (-j))) <= 1e-12


def test_heat_cross_oracle():
    n_cells = 8
    D, op, _ = build_grad_div_1d(n_cells, 1.0, "dirichlet")
    m = op.m
    M0 = np.zeros((m, m))
    M0[:n_cells, :n_cells] = np.eye(n_cells)
    M1 = np.zeros((m, m))
    M1[n_cells:, n_cells:] = np.eye(m - n_cells)
    rng = np.random.default_rng(3)
    profile = rng.uniform(0.5, 1.0, n_cells)

    def forcing(t):
        t = np.asarray(t, dtype=float)
        out = np.zeros(t.shape + (m,))
        out[..., :n_cells] = np.exp(-3.0 * (t - 2.0) ** 2)[..., None] * profile
        return out

    n_fft = 2048
    g = TimeGrid(0.0, 16.384 / n_fft, n_fft)
    f_sig = Signal(g, 1.0, forcing(g.times()))
    law = solution_multiplier(
        lambda zs: np.broadcast_to(M0, (zs.size, m, m))
        + M1[None] / zs[:, None, None],
        op.matrix,
        m,
    )
    u_spec = apply_law(f_sig, law)

    dt = 1e-3
    steps_per_node = round(g.dt / dt)
    assert abs(steps_per_node * dt - g.dt) < 1e-12
    n_steps = (n_fft - 1) * steps_per_node
    f_step = forcing(np.arange(n_steps + 1) * dt)
    traj = step_affine(M0, M1, op.matrix, f_step, np.zeros(m), dt)
    on_nodes = traj[::steps_per_node]

    t = g.times()
    mask = (t > 0.5) & (t < 13.0)
    num = np.linalg.norm(u_spec.values[mask] - on_nodes[mask])
    assert num <= 1e-2 * np.linalg.norm(u_spec.values[mask])


def test_richardson_halving():
    # first-order scheme: halving dt about halves the error against the
    # spectral reference
    n_fft = 2048
    g = TimeGrid(0.0, 16.384 / n_fft, n_fft)
    f_sig = Signal.from_function(g, 1.0, lambda t: np.exp(-2.0 * (t - 3.0) ** 2))
    law = solution_multiplier(
        lambda zs: np.ones((zs.size, 1, 1)), np.array([[1.0]]), 1
    )
    u_spec = apply_law(f_sig, law).values[:, 0]
    t = g.times()
    mask = (t > 0.5) & (t < 13.0)

    errs = []
    for dt in (4e-3, 2e-3, 1e-3):
        per = round(g.dt / dt)
        n_steps = (n_fft - 1) * per
        ts = np.arange(n_steps + 1) * dt
        f_step = np.exp(-2.0 * (ts - 3.0) ** 2)
        traj = step_affine([[1.0]], [[0.0]], [[1.0]], f_step, [0.0], dt)
        errs.append(np.linalg.norm(traj[::per, 0][mask] - u_spec[mask]))
    for coarse, fine in zip(errs, errs[1:]):
        assert fine <= 0.65 * coarse
        assert fine >= 0.30 * coarse


# --- step_delay -------------------------------------------------------------


def test_delay_zero_history_matches_affine_before_first_lag():
    spec = DelaySpec(np.eye(2), 0.3 * np.eye(2), ((0.5, np.eye(2)),))
    A = np.array([[0.0, 1.0], [-1.0, 0.0]])
    dt = 1e-3
    n = 400  # t up to 0.4 < h
    rng = np.random.default_rng(5)
    f = rng.standard_normal((n + 1, 2))
    d_traj = step_delay(spec, A, f, lambda t: np.zeros(2), dt)
    a_traj = step_affine(spec.M0, spec.M1, A, f, np.zeros(2), dt)
    assert np.max(np.abs(d_traj - a_traj)) <= 1e-12


def test_delay_method_of_steps_closed_form():
    # u' = -u - u(t - 1/2)/2 with u = 1 on [-1/2, 0]:
    # u(t) = (3 - e^t) e^{-t} / 2 on [0, 1/2], then resonant piece; values
    # below are the exact evaluations at t = 1/2 and t = 1
    spec = DelaySpec([[1.0]], [[1.0]], ((0.5, [[0.5]]),))
    dt = 1e-4
    n = 10000
    f = np.zeros((n + 1, 1))
    traj = step_delay(spec, [[0.0]], f, lambda t: np.ones(1), dt)
    assert abs(traj[5000, 0] - 0.40979598956895014) <= 1e-3
    assert abs(traj[10000, 0] - 0.11947216958045088) <= 1e-3


def test_snap_lag_validation():
    cfg = StepperConfig(dt=1e-3)
    assert cfg.snap_lag(0.5) == 500
    with pytest.raises(ValueError):
        cfg.snap_lag(0.50012)
    with pytest.raises(ValueError):
        StepperConfig(dt=0.0)


# --- step_convolution -------------------------------------------------------


def test_convolution_zero_kernel_is_affine():
    spec = KernelSpec.exponential([0.0], [1.0])
    A = np.array([[1.0, 0.2], [0.0, 0.5]])
    dt = 1e-2
    rng = np.random.default_rng(8)
    f = rng.standard_normal((301, 2))
    c_traj = step_convolution(spec, A, f, np.zeros(2), dt)
    a_traj = step_affine(np.eye(2), np.zeros((2, 2)), A, f, np.zeros(2), dt)
    assert np.max(np.abs(c_traj - a_traj)) <= 1e-12


def test_convolution_vs_spectral_resolvent_law():
    from evospec.material_laws import resolvent_kernel_law

    spec = KernelSpec.exponential([0.5], [1.0])
    law = resolvent_kernel_law(spec)
    A = np.array([[1.0]])
    n_fft = 2048
    g = TimeGrid(0.0, 16.384 / n_fft, n_fft)
    f_sig = Signal.from_function(g, 1.0, lambda t: np.exp(-3.0 * (t - 2.0) ** 2))
    sol_law = solution_multiplier(
        lambda zs: law.evaluate_many(zs), A, 1
    )
    u_spec = apply_law(f_sig, sol_law).values[:, 0]

    dt = 2e-3
    per = round(g.dt / dt)
    n_steps = (n_fft - 1) * per
    ts = np.arange(n_steps + 1) * dt
    f_step = np.exp(-3.0 * (ts - 2.0) ** 2)
    traj = step_convolution(spec, A, f_step, [0.0], dt)

    t = g.times()
    mask = (t > 0.5) & (t < 13.0)
    num = np.linalg.norm(traj[::per, 0][mask] - u_spec[mask])
    assert num <= 2e-2 * np.linalg.norm(u_spec[mask])


# --- post_widder ------------------------------------------------------------


def test_post_widder_scalar_closed_form():
    got = post_widder([[1.0]], [[1.0]], [[0.0]], [1.0], 1.0, 100)[0]
    expected = (1.0 + 1.0 / 100.0) ** (-101)
    assert abs(got - expected) <= 1e-14
    rel = abs(got - math.exp(-1.0)) / math.exp(-1.0)
    assert rel <= 1e-2


def test_post_widder_short_time_identity():
    rng = np.random.default_rng(2)
    M1 = np.diag([1.0, 2.0, 0.5])
    x = rng.standard_normal(3)
    got = post_widder(np.eye(3), M1, np.zeros((3, 3)), x, 1e-8, 5)
    assert np.linalg.norm(got - x) <= 1e-6 * np.linalg.norm(x)


def test_post_widder_vs_matrix_exponential():
    rng = np.random.default_rng(4)
    V = rng.standard_normal((3, 3)) + 3.0 * np.eye(3)
    A = V @ np.diag([0.5, 1.0, 2.0]) @ np.linalg.inv(V)
    x = rng.standard_normal(3)
    t = 1.5
    exact = scipy.linalg.expm(-A * t) @ x
    errs = {}
    for k in (50, 200):
        got = post_widder(np.eye(3), np.zeros((3, 3)), A, x, t, k)
        errs[k] = np.linalg.norm(got - exact) / np.linalg.norm(exact)
    assert errs[200] <= 1e-2
    assert errs[200] <= errs[50]


def test_post_widder_singular_resolvent():
    with pytest.raises(SingularResolvent):
        post_widder([[1.0]], [[-10.0]], [[0.0]], [1.0], 1.0, 10)


# --- heat eigen oracle ------------------------------------------------------


def test_eigen_oracle_single_mode():
    D, _, _ = build_grad_div_1d(1, 1.0, "dirichlet")
    out = heat_eigen_oracle(D, kappa=2.0)
    assert out["lam_min"] == pytest.approx(8.0, abs=1e-10)
    assert out["rate"] == pytest.approx(16.0, abs=1e-9)


def test_eigen_oracle_continuum_limit():
    D, _, _ = build_grad_div_1d(64, 1.0, "dirichlet")
    out = heat_eigen_oracle(D, kappa=1.0)
    assert out["lam_min"] == pytest.approx(math.pi**2, rel=0.02)
    # slowest mode is the half-sine, positive after sign normalization
    assert np.all(out["mode"] > 0)


def test_eigen_oracle_kappa_scaling():
    D, _, _ = build_grad_div_1d(12, 1.0, "dirichlet")
    assert heat_eigen_oracle(D, 3.0)["rate"] == pytest.approx(
        3.0 * heat_eigen_oracle(D, 1.0)["rate"] / 1.0
    )


# --- trajectory export ------------------------------------------------------


def test_trajectory_signal_round_trip(tmp_path):
    traj = np.column_stack([np.exp(-np.arange(64) * 0.1)])
    sig = trajectory_to_signal(traj, 0.1, rho=0.7)
    p = tmp_path / "traj.csv"
    save_signal(sig, str(p))
    back = load_signal(str(p))
    assert back.grid.close_to(sig.grid)
    assert np.max(np.abs(back.values - sig.values)) <= 1e-15
