import numpy as np
import pytest
from hypothesis import given, strategies as st

from dbarlab.torus_grid import (
    ComplexField, GridError, ScalarField, TorusGrid, dbar_apply, dbar_conjugate_apply,
    gradient, integrate, laplacian, make_grid, poisson_solve, read_field_csv,
    spectral_interpolate, write_complex_field_csv, write_field_csv,
)

sizes = st.sampled_from([8, 10, 12, 16, 20, 32])


def trig_field(grid, rng, kmax=3):
    X, Y = grid.mesh()
    f = np.zeros(grid.shape)
    for k in range(-kmax, kmax + 1):
        for l in range(-kmax, kmax + 1):
            a, b = rng.standard_normal(2)
            f += a * np.cos(k * X + l * Y) + b * np.sin(k * X + l * Y)
    return f


def test_grid_rejects_odd_and_tiny():
    with pytest.raises(GridError, match="odd dimension"):
        make_grid(63, 64)
    with pytest.raises(GridError):
        make_grid(6, 8)


def test_grid_geometry():
    g = make_grid(64, 32)
    assert g.shape == (32, 64)
    assert g.dx == pytest.approx(2 * np.pi / 64)
    X, Y = g.mesh()
    assert X[0, 1] == pytest.approx(g.dx) and Y[1, 0] == pytest.approx(g.dy)


def test_field_length_mismatch():
    with pytest.raises(GridError, match="nx\\*ny"):
        ScalarField(make_grid(8, 8), np.zeros(10))


def test_fields_are_read_only():
    f = ScalarField(make_grid(8, 8), np.zeros((8, 8)))
    with pytest.raises(ValueError):
        f.values[0, 0] = 1.0


def test_laplacian_of_sinx_siny():
    g = make_grid(16, 16)
    X, Y = g.mesh()
    f = ScalarField(g, np.sin(X) * np.sin(Y))
    assert np.allclose(laplacian(f).values, -2 * np.sin(X) * np.sin(Y), atol=1e-13)


def test_poisson_rejects_nonzero_mean():
    g = make_grid(8, 8)
    with pytest.raises(GridError, match="nonzero mean"):
        poisson_solve(ScalarField(g, np.ones(g.shape)))


@given(nx=sizes, ny=sizes, seed=st.integers(0, 10_000))
def test_poisson_inverts_laplacian(nx, ny, seed):
    g = make_grid(nx, ny)
    f = trig_field(g, np.random.default_rng(seed), kmax=min(nx, ny) // 2 - 1)
    f -= f.mean()
    back = poisson_solve(laplacian(ScalarField(g, f)))
    assert np.allclose(back.values, f, atol=1e-10 * max(1.0, np.abs(f).max()))


@given(seed=st.integers(0, 10_000))
def test_dbar_of_holomorphic_mode_vanishes(seed):
    # e^{i(kx+ly)} with ik - l = 0 only for k = l = 0; exp(z) is not periodic,
    # so check the multiplier identity instead
    g = make_grid(16, 16)
    X, Y = g.mesh()
    rng = np.random.default_rng(seed)
    k, l = rng.integers(-7, 8, size=2)
    u = np.exp(1j * (k * X + l * Y))
    assert np.allclose(dbar_apply(ComplexField(g, u)).values, (1j * k - l) / 2 * u, atol=1e-12)


def test_dbar_adjoint_and_laplacian_identity(rng):
    g = make_grid(16, 12)
    u = rng.standard_normal(g.shape) + 1j * rng.standard_normal(g.shape)
    v = rng.standard_normal(g.shape) + 1j * rng.standard_normal(g.shape)
    du = dbar_apply(ComplexField(g, u)).values
    dsv = dbar_conjugate_apply(ComplexField(g, v)).values
    assert np.vdot(v, du) == pytest.approx(np.vdot(dsv, u), rel=1e-12)
    # -lap = 4 dbar^* dbar on real fields
    f = rng.standard_normal(g.shape)
    lhs = -laplacian(ScalarField(g, f)).values
    rhs = 4 * dbar_conjugate_apply(dbar_apply(ComplexField(g, f))).values
    assert np.allclose(lhs, rhs.real, atol=1e-9) and np.abs(rhs.imag).max() < 1e-9


def test_dbar_kernel_is_constants(rng):
    g = make_grid(8, 8)
    c = ComplexField(g, np.full(g.shape, 2.0 + 1.0j))
    assert np.abs(dbar_apply(c).values).max() < 1e-14


def test_gradient_real_mode():
    g = make_grid(16, 16)
    X, Y = g.mesh()
    fx, fy = gradient(ScalarField(g, np.cos(3 * X) + np.sin(2 * Y)))
    assert np.allclose(fx.values, -3 * np.sin(3 * X), atol=1e-12)
    assert np.allclose(fy.values, 2 * np.cos(2 * Y), atol=1e-12)


def test_integrate_trig_exact():
    g = make_grid(16, 16)
    X, Y = g.mesh()
    assert integrate(ScalarField(g, 1 + np.cos(X) ** 2)) == pytest.approx(4 * np.pi**2 * 1.5)


@given(k=st.integers(-7, 7), l=st.integers(-7, 7), a=st.floats(-2, 2),
       seed=st.integers(0, 10_000))
def test_spectral_interpolation_exact_for_trig(k, l, a, seed):
    g = make_grid(16, 16)
    X, Y = g.mesh()
    f = np.cos(k * X + l * Y) + a * np.sin(l * X - k * Y)
    pts = np.random.default_rng(seed).uniform(0, 2 * np.pi, size=(12, 2))
    x, y = pts[:, 0], pts[:, 1]
    exact = np.cos(k * x + l * y) + a * np.sin(l * x - k * y)
    assert np.allclose(spectral_interpolate(f, g, pts), exact, atol=1e-11)


def test_spectral_interpolation_nyquist_cosine():
    g = make_grid(8, 8)
    X, _ = g.mesh()
    f = np.cos(4 * X)
    pts = np.array([[0.3, 0.0], [1.1, 2.0]])
    assert np.allclose(spectral_interpolate(f, g, pts), np.cos(4 * pts[:, 0]), atol=1e-12)


def test_csv_roundtrip(tmp_path, rng):
    g = make_grid(8, 10)
    f = rng.standard_normal(g.shape)
    write_field_csv(tmp_path / "f.csv", f, g)
    back = read_field_csv(tmp_path / "f.csv")
    assert back.grid == g and np.array_equal(back.values, f)
    write_complex_field_csv(tmp_path / "u", f + 2j * f, g)
    assert np.array_equal(read_field_csv(tmp_path / "u_im.csv").values, 2 * f)


def test_csv_requires_header(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("1,2\n3,4\n")
    with pytest.raises(GridError, match="header"):
        read_field_csv(p)
