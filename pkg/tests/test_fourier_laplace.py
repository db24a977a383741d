import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from evospec.fourier_laplace import (
    FrequencyGrid,
    Spectrum,
    WeightBelowDomain,
    apply_derivative,
    apply_law,
    delta_spectrum,
    inverse_transform,
    load_spectrum,
    rho_independence,
    save_spectrum,
    spectrum_norm,
    transform,
)
from evospec.weighted_signal import (
    Signal,
    TimeGrid,
    ZeroWeight,
    antiderivative,
    causality_leak,
    translate,
    weighted_norm,
)

SQRT_2PI = np.sqrt(2 * np.pi)


class MultiplierLaw:
    """Minimal operator-valued law: a scalar symbol times the identity."""

    def __init__(self, fn, b=0.0, dim=1):
        self.fn = fn
        self.b = b
        self.dim = dim

    def abscissa(self):
        return self.b

    def evaluate_many(self, z):
        m = np.asarray(self.fn(z), dtype=np.complex128)
        return m[:, None, None] * np.eye(self.dim)[None, :, :]


def gaussian_bump(center, width=1.0):
    return lambda t: np.exp(-(((t - center) / width) ** 2))


# --- frequency grid -------------------------------------------------------


def test_signed_indices_cover_half_open_range():
    fg = FrequencyGrid(dt=0.1, n=8)
    k = fg.signed_indices()
    assert list(k) == [-3, -2, -1, 0, 1, 2, 3, 4]  # Nyquist labeled +n/2


def test_frequencies_ascending_and_centered():
    fg = FrequencyGrid(dt=0.01, n=256)
    xi = fg.frequencies()
    assert np.all(np.diff(xi) > 0)
    assert abs(xi[np.argmin(np.abs(xi))]) == 0.0


# --- transform / inverse --------------------------------------------------


def test_transform_zero():
    g = TimeGrid(-1.0, 0.01, 256)
    s = transform(Signal.zeros(g, 1.0))
    assert np.all(s.values == 0)


def test_round_trip_identity():
    g = TimeGrid(-1.0, 0.01, 512)
    rng = np.random.default_rng(0)
    f = Signal(g, 0.8, rng.standard_normal((g.n, 2)) + 1j * rng.standard_normal((g.n, 2)))
    back = inverse_transform(transform(f))
    scale = np.max(np.abs(f.values))
    assert np.max(np.abs(back.values - f.values)) <= 1e-12 * scale


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(-1.5, 1.5), st.integers(5, 9))
def test_round_trip_property(seed, rho, log2n):
    rng = np.random.default_rng(seed)
    n = 2**log2n
    g = TimeGrid(-2.0, 4.0 / n, n)
    f = Signal(g, rho, rng.standard_normal((g.n, 1)))
    back = inverse_transform(transform(f))
    assert np.max(np.abs(back.values - f.values)) <= 1e-11 * max(
        1.0, np.max(np.abs(f.values))
    )


def test_unitarity_interior_smooth():
    g = TimeGrid(-12.0, 24.0 / 2048, 2048)
    f = Signal.from_function(g, 1.0, gaussian_bump(0.3, 0.7))
    n1 = spectrum_norm(transform(f))
    n2 = weighted_norm(f)
    assert abs(n1 - n2) <= 1e-8 * n2


@settings(max_examples=15, deadline=None)
@given(st.floats(-2.0, 2.0), st.floats(-1.0, 1.0))
def test_unitarity_property(center, rho):
    g = TimeGrid(-14.0, 28.0 / 2048, 2048)
    f = Signal.from_function(g, rho, gaussian_bump(center, 0.8))
    n1 = spectrum_norm(transform(f))
    n2 = weighted_norm(f)
    assert abs(n1 - n2) <= 1e-8 * n2


def test_gaussian_closed_form():
    # e^{-(t-c)^2/2} transforms to e^{-i xi c} e^{-xi^2/2} under the
    # (2 pi)^{-1/2} int e^{-i xi t} convention
    c = 0.7
    g = TimeGrid(c - 12.0, 24.0 / 2048, 2048)
    f = Signal.from_function(g, 0.0, lambda t: np.exp(-((t - c) ** 2) / 2.0))
    s = transform(f)
    xi = s.freq.frequencies()
    expected = np.exp(-1j * xi * c) * np.exp(-(xi**2) / 2.0)
    assert np.max(np.abs(s.values[:, 0] - expected)) <= 1e-6


def test_constant_spectrum_is_grid_impulse():
    g = TimeGrid(-1.0, 0.01, 200)  # grid contains t=0
    c = 2.0 - 1.0j
    fg = FrequencyGrid(dt=g.dt, n=g.n)
    s = Spectrum(freq=fg, rho=0.5, t_start=g.t_start, values=np.full((g.n, 1), c))
    f = inverse_transform(s)
    j0 = g.index_of(0.0)
    expected_peak = c * SQRT_2PI / g.dt
    assert abs(f.values[j0, 0] - expected_peak) <= 1e-9 * abs(expected_peak)
    others = np.abs(np.delete(f.values[:, 0], j0))
    assert np.max(others) <= 1e-9 * abs(expected_peak)


def test_delta_spectrum_matches_analytic_form():
    g = TimeGrid(-1.0, 0.01, 128)
    s = delta_spectrum(g, rho=1.2, t=0.25, coeff=[2.0, -1.0])
    z = s.z_values()
    expected = np.exp(-z * 0.25)[:, None] * np.array([2.0, -1.0])[None, :] / SQRT_2PI
    assert np.allclose(s.values, expected, rtol=0, atol=1e-15)


# --- apply_derivative -----------------------------------------------------


def test_derivative_order_zero_identity():
    g = TimeGrid(-1.0, 0.01, 128)
    rng = np.random.default_rng(1)
    f = Signal(g, 1.0, rng.standard_normal((g.n, 1)))
    out = apply_derivative(f, 0)
    assert np.array_equal(out.values, f.values)


def test_derivative_of_windowed_sine():
    omega = 3.0
    g = TimeGrid(-16.0, 32.0 / 4096, 4096)
    w = lambda t: np.exp(-((t / 8.0) ** 16))
    f = Signal.from_function(g, 0.5, lambda t: np.sin(omega * t) * w(t))
    d = apply_derivative(f, 1)
    t = g.times()
    interior = np.abs(t) <= 4.0
    expected = omega * np.cos(omega * t[interior]) * w(t[interior])
    assert np.max(np.abs(d.values[interior, 0] - expected)) <= 1e-4 * omega


def test_inverse_derivative_vs_antiderivative():
    # window scales with 1/rho: rho*T >= ~12 keeps periodic wrap small while
    # rho*t_end <= ~20 keeps the e^{+rho t} unweighting from amplifying fft
    # rounding noise above the 1e-4 target
    for rho in (0.5, 1.0, 2.0):
        T = 24.0 / rho
        g = TimeGrid(-T / 4.0, T / 4096, 4096)
        f = Signal.from_function(g, rho, lambda t: np.exp(-4.0 * t**2))
        spec_route = apply_derivative(f, -1)
        time_route = antiderivative(f)
        t = g.times()
        interior = (t > g.t_start + T / 16.0) & (t < g.t_end - T / 16.0)
        num = np.linalg.norm(spec_route.values[interior] - time_route.values[interior])
        den = np.linalg.norm(time_route.values[interior])
        assert num <= 1e-4 * den


def test_negative_order_needs_weight():
    g = TimeGrid(-1.0, 0.01, 128)
    f = Signal.zeros(g, 0.0)
    with pytest.raises(ZeroWeight):
        apply_derivative(f, -1)


def test_derivative_inverse_round_trip():
    # t_end kept at 10 so e^{rho t_end} * eps stays below the 1e-9 target
    g = TimeGrid(-6.0, 16.0 / 2048, 2048)
    f = Signal.from_function(g, 1.0, lambda t: np.exp(-4.0 * (t - 1) ** 2))
    back = apply_derivative(apply_derivative(f, -1), 1)
    assert np.max(np.abs(back.values - f.values)) <= 1e-9


# --- apply_law ------------------------------------------------------------


def test_identity_law_is_identity():
    g = TimeGrid(-2.0, 0.01, 512)
    rng = np.random.default_rng(2)
    f = Signal(g, 1.0, rng.standard_normal((g.n, 1)))
    out = apply_law(f, MultiplierLaw(lambda z: np.ones_like(z)))
    assert np.max(np.abs(out.values - f.values)) <= 1e-12 * np.max(np.abs(f.values))


def test_resolvent_law_vs_antiderivative():
    g = TimeGrid(-6.0, 24.0 / 4096, 4096)
    f = Signal.from_function(g, 1.0, lambda t: np.exp(-4.0 * t**2))
    u1 = apply_law(f, MultiplierLaw(lambda z: 1.0 / z))
    u2 = antiderivative(f)
    t = g.times()
    interior = (t > -5.0) & (t < 17.0)
    num = np.linalg.norm(u1.values[interior] - u2.values[interior])
    assert num <= 1e-4 * np.linalg.norm(u2.values[interior])


def test_delay_law_is_grid_translation():
    g = TimeGrid(-4.0, 24.0 / 4096, 4096)
    h = 512 * g.dt  # exactly 3 time units
    f = Signal.from_function(g, 1.0, gaussian_bump(1.0, 0.5))
    delayed = apply_law(f, MultiplierLaw(lambda z: np.exp(-h * z)))
    ref = translate(f, -h)
    assert np.max(np.abs(delayed.values - ref.values)) <= 1e-6


def test_apply_law_checks_abscissa():
    g = TimeGrid(-1.0, 0.01, 128)
    f = Signal.zeros(g, 0.5)
    with pytest.raises(WeightBelowDomain):
        apply_law(f, MultiplierLaw(lambda z: 1.0 / z, b=1.0))


def test_causality_leak_of_analytic_bounded_laws():
    # source exactly zero below t=1.2: a gaussian tail below the support
    # start would register as genuine mass, not numerical leak
    g = TimeGrid(0.0, 20.0 / 4096, 4096)
    a = 1.0

    def bump(t):
        s = np.clip((t - 1.2) / 0.6, 0.0, 1.0)
        return np.sin(np.pi * s) ** 4

    f = Signal.from_function(g, 1.0, bump)
    for law in (
        MultiplierLaw(lambda z: 1.0 / z),  # causal integration
        MultiplierLaw(lambda z: np.exp(-0.5 * z)),  # pure delay
        MultiplierLaw(lambda z: 1.0 / (z + 2.0)),  # resolvent
    ):
        u = apply_law(f, law)
        assert causality_leak(u, a) <= 1e-6


def test_anticausal_control_leaks():
    # with rho < 0 the inverse derivative integrates from the right: mass
    # appears before the support, a deliberate negative control
    g = TimeGrid(0.0, 24.0 / 4096, 4096)
    f = Signal.from_function(g, -1.0, lambda t: np.exp(-30.0 * (t - 1.5) ** 2))
    u = apply_derivative(f, -1)
    assert causality_leak(u, 1.0) >= 0.1


def test_shift_covariance():
    # delay direction (h < 0): the zero-fill edge of translate then matches
    # the genuine zero of the causal output, so the two routes agree on the
    # whole window
    g = TimeGrid(-4.0, 20.0 / 4096, 4096)
    law = MultiplierLaw(lambda z: np.exp(-0.5 * z) / (z + 1.0))
    f = Signal.from_function(g, 1.0, gaussian_bump(1.0, 0.4))
    h = -256 * g.dt
    a = apply_law(translate(f, h), law)
    b = translate(apply_law(f, law), h)
    assert np.max(np.abs(a.values - b.values)) <= 1e-8 * max(
        1.0, np.max(np.abs(b.values))
    )


def test_rho_independence_identity_law():
    # 1e-9 rather than machine zero: the rho=2 branch unweights through
    # e^{+2t} which amplifies fft rounding near t_end
    g = TimeGrid(-3.0, 12.0 / 2048, 2048)
    f = Signal.from_function(g, 1.0, gaussian_bump(1.0, 0.4))
    d = rho_independence(
        lambda s: apply_law(s.with_rho(1.0), MultiplierLaw(lambda z: np.ones_like(z))),
        lambda s: apply_law(s.with_rho(2.0), MultiplierLaw(lambda z: np.ones_like(z))),
        f,
    )
    assert d <= 1e-9


def test_rho_independence_causal_resolvent():
    g = TimeGrid(-3.0, 12.0 / 4096, 4096)
    f = Signal.from_function(g, 1.0, gaussian_bump(1.0, 0.4))
    d = rho_independence(
        lambda s: apply_derivative(s.with_rho(1.0), -1),
        lambda s: apply_derivative(s.with_rho(2.0), -1),
        f,
    )
    assert d <= 1e-4


def test_rho_independence_flags_anticausal():
    g = TimeGrid(-4.0, 28.0 / 4096, 4096)
    f = Signal.from_function(g, 1.0, gaussian_bump(1.0, 0.4))
    d = rho_independence(
        lambda s: apply_derivative(s.with_rho(0.5), -1),
        lambda s: apply_derivative(s.with_rho(-0.5), -1),
        f,
    )
    assert d >= 0.1


# --- serialization --------------------------------------------------------


def test_spectrum_csv_round_trip(tmp_path):
    g = TimeGrid(-1.0, 0.05, 64)
    f = Signal.from_function(g, 0.6, gaussian_bump(0.0, 0.5))
    s = transform(f)
    p = tmp_path / "spec.csv"
    save_spectrum(s, str(p))
    back = load_spectrum(str(p))
    assert back.freq == s.freq
    assert back.rho == s.rho
    assert np.allclose(back.values, s.values, rtol=0, atol=1e-16)
    f2 = inverse_transform(back)
    assert np.max(np.abs(f2.values - f.values)) <= 1e-10
