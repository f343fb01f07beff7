import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import ynm
from spheroid_bie.geometry import SpheroidShape
from spheroid_bie.harmonics import (
    HarmonicCoeffs,
    SurfaceField,
    coeff_index,
    degree_mask,
    eval_Ynm,
    forward,
    forward_transform,
    from_modified_basis,
    inverse,
    inverse_transform,
    normalized_legendre,
    pole_regular_legendre,
    resample,
    surface_grid,
    to_modified_basis,
)
from spheroid_bie.selftest import _random_coeffs


@pytest.mark.parametrize("n,m", [(0, 0), (1, 1), (2, -1), (5, 3), (7, -7), (12, 4)])
def test_ynm_matches_scipy(n, m):
    rng = np.random.default_rng(n * 31 + m)
    v, phi = rng.uniform(-1, 1, 20), rng.uniform(0, 2 * np.pi, 20)
    np.testing.assert_allclose(eval_Ynm(n, m, v, phi), ynm(n, m, v, phi), atol=1e-13)


def test_orthonormal_on_grid():
    p = 9
    g = surface_grid(p)
    V, PH = g.mesh()
    modes = [(n, m) for n in range(p + 1) for m in range(-n, n + 1) if abs(m) < p]
    Y = np.stack([eval_Ynm(n, m, V, PH).ravel() for n, m in modes])
    gram = (Y * g.quad_weights().ravel()) @ Y.conj().T
    np.testing.assert_allclose(gram, np.eye(len(modes)), atol=1e-13)


def test_single_mode_transform():
    p = 8
    g = surface_grid(p)
    V, PH = g.mesh()
    c = forward(eval_Ynm(5, -3, V, PH), p)
    want = np.zeros_like(c)
    want[coeff_index(p, 5, -3)] = 1
    np.testing.assert_allclose(c, want, atol=1e-13)


def test_nyquist_split():
    # exp(i p phi) aliases with exp(-i p phi); the transform splits it evenly
    p = 6
    g = surface_grid(p)
    V, PH = g.mesh()
    c = forward(eval_Ynm(p, p, V, PH), p)
    assert abs(c[p, 2 * p]) == pytest.approx(0.5, abs=1e-13)
    assert abs(c[p, 0]) == pytest.approx(0.5, abs=1e-13)


@settings(max_examples=30, deadline=None)
@given(p=st.integers(2, 20), seed=st.integers(0, 2 ** 32 - 1))
def test_roundtrip_property(p, seed):
    c = _random_coeffs(np.random.default_rng(seed), p)
    vals = inverse(c, p)
    assert np.max(np.abs(vals.imag)) < 1e-12 * np.max(np.abs(vals))
    np.testing.assert_allclose(forward(vals.real, p), c, atol=1e-12)


@settings(max_examples=20, deadline=None)
@given(p=st.integers(2, 16), seed=st.integers(0, 2 ** 32 - 1))
def test_parseval_property(p, seed):
    c = _random_coeffs(np.random.default_rng(seed), p)
    vals = inverse(c, p, real=True)
    quad = np.sum(surface_grid(p).quad_weights() * vals ** 2)
    assert quad == pytest.approx(np.sum(np.abs(c) ** 2), rel=1e-12)


def test_resample_preserves_bandlimited_fields():
    rng = np.random.default_rng(4)
    p, q = 6, 11
    c = _random_coeffs(rng, p)
    up = resample(inverse(c, p, real=True), p, q)
    back = resample(up, q, p)
    np.testing.assert_allclose(back, inverse(c, p, real=True), atol=1e-13)
    cq = forward(up, q)
    np.testing.assert_allclose(cq[: p + 1, q - p: q + p + 1], c, atol=1e-13)
    assert np.max(np.abs(cq[p + 1:])) < 1e-13


def test_modified_basis_roundtrip():
    rng = np.random.default_rng(5)
    p = 10
    s = SpheroidShape("oblate", 0.4, 1.0)
    field = SurfaceField(surface_grid(p), inverse(_random_coeffs(rng, p), p, real=True))
    mod = to_modified_basis(field, s)
    # the weighted field is no longer band-limited; test the weight bookkeeping only
    again = from_modified_basis(mod, real=True)
    wfield = inverse(forward(field.values * s.modified_weight(field.grid.v)[:, None], p), p, real=True)
    np.testing.assert_allclose(again.values, wfield / s.modified_weight(field.grid.v)[:, None], atol=1e-13)
    with pytest.raises(ValueError):
        from_modified_basis(forward_transform(field))


def test_typed_wrappers():
    p = 5
    g = surface_grid(p)
    V, PH = g.mesh()
    coeffs = forward_transform(SurfaceField(g, eval_Ynm(3, 2, V, PH)))
    assert coeffs[3, 2] == pytest.approx(1.0) and coeffs[9, 0] == 0.0 and coeffs[2, 3] == 0.0
    np.testing.assert_allclose(inverse_transform(coeffs).values, eval_Ynm(3, 2, V, PH), atol=1e-13)
    with pytest.raises(ValueError):
        HarmonicCoeffs(p, np.zeros((3, 3)))
    with pytest.raises(ValueError):
        SurfaceField(g, np.zeros((3, 3)))


def test_pole_regular_table():
    v = np.linspace(-0.9, 0.9, 7)
    N = 8
    T = normalized_legendre(v, N)
    S = pole_regular_legendre(v, N)
    np.testing.assert_allclose(S[..., 1:] * np.sqrt(1 - v * v)[:, None, None], T[..., 1:], atol=1e-13)
    pole = pole_regular_legendre(np.array([1.0]), N)[0]
    assert np.all(np.isfinite(pole)) and np.all(pole[:, 2:] == 0) and np.all(pole[1:, 1] != 0)


def test_mask_and_grid():
    assert degree_mask(3).sum() == 16
    g = surface_grid(4)
    assert g.shape == (5, 8) and g.size == 40
    assert np.sum(g.quad_weights()) == pytest.approx(4 * np.pi)
    with pytest.raises(ValueError):
        surface_grid(0)
    with pytest.raises(ValueError):
        forward(np.zeros((3, 3)), 4)
    with pytest.raises(ValueError):
        eval_Ynm(2, 3, 0.1, 0.1)


def test_spectral_decay_of_analytic_field():
    # (x^2 - y^2) e^z on the unit sphere; exp(v) cos(2 phi) alone is not smooth at the poles
    p = 24
    V, PH = surface_grid(p).mesh()
    c = forward((1 - V ** 2) * np.exp(V) * np.cos(2 * PH), p)
    tail = np.array([np.abs(c[n:]).max() for n in range(2, 16)])
    assert np.all(tail[1:] / tail[:-1] < 0.9)


def test_modified_basis_example():
    s = SpheroidShape("prolate", 1.4, 1.0)
    p = 6
    g = surface_grid(p)
    V, PH = g.mesh()
    coeffs = to_modified_basis(SurfaceField(g, eval_Ynm(2, 1, V, PH) / s.modified_weight(V)), s)
    assert abs(coeffs[2, 1] - 1) < 1e-14
    assert np.sum(np.abs(coeffs.coeffs)) == pytest.approx(1.0, abs=1e-13)


def test_conjugate_symmetry_of_real_fields():
    p = 10
    V, PH = surface_grid(p).mesh()
    c = forward(np.exp(V) * np.sin(PH) * np.sqrt(1 - V ** 2) + V, p)
    m = np.arange(-p, p + 1)
    np.testing.assert_allclose(c[:, ::-1], ((-1.0) ** m)[::-1] * np.conj(c), atol=1e-14)


def test_constant_field():
    p = 7
    c = forward(np.full(surface_grid(p).shape, 2.0), p)
    assert c[0, p] == pytest.approx(2.0 * np.sqrt(4 * np.pi))
    c[0, p] = 0
    assert np.max(np.abs(c)) < 1e-14
