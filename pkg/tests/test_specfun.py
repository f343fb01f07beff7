import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spheroid_bie.errors import LegendreOverflow
from spheroid_bie.specfun import (
    ArgKind,
    casoratian_rhs,
    eval_P,
    eval_Q,
    factorial_ratio,
    legendre_table,
)

# Frozen from mpmath legenp / legenq (type=3) at 30 digits.
MPMATH = [
    ("real", 1.5, 3, 2, 28.125, 0.48272064360453654),
    ("real", 1.05, 10, 4, 5072.966672293643, 2275.2507729283993),
    ("real", 7.0, 20, 11, 6.161060188805655e34, -1.2909211008946993e-09),
    ("imag", 0.4, 5, 3, 160.04278993619175j, 12.564256244151327),
    ("imag", 2.5, 12, 7, 282644507288884.4, 0.054471686428655484j),
    ("imag", 0.05, 8, 0, 0.2983867221786499, -0.28047419091658354j),
]

WRONSKIAN_ARGS = [("real", u) for u in (1.001, 1.01, 1.1, 2.0, 10.0)] + [("imag", u) for u in (0.01, 0.1, 1.0, 10.0)]


@pytest.mark.parametrize("kind,u,n,m,P,Q", MPMATH)
def test_against_mpmath(kind, u, n, m, P, Q):
    t = legendre_table(kind, u, max(n, 2))
    assert abs(t.P[n, m] - P) <= 1e-12 * abs(P)
    assert abs(t.Q[n, m] - Q) <= 1e-11 * abs(Q)


def test_factorial_ratio():
    r = factorial_ratio(10)
    assert r[5, 3] == math.factorial(8) / math.factorial(2)
    assert r[3, 5] == 0
    assert casoratian_rhs(4)[3, 1] == -math.factorial(3) / math.factorial(2)


@pytest.mark.parametrize("u", [1.0001, 1.3, 4.0, 50.0])
def test_q_closed_forms_real(u):
    t = legendre_table("real", u, 2)
    q0 = 0.5 * math.log((u + 1) / (u - 1))
    assert t.Q[0, 0] == pytest.approx(q0, rel=1e-13)
    assert t.Q[1, 0] == pytest.approx(u * q0 - 1, rel=1e-13, abs=1e-13 * abs(u * q0))


@pytest.mark.parametrize("u", [0.01, 0.4, 2.5, 30.0])
def test_q_closed_forms_imag(u):
    t = legendre_table("imag", u, 2)
    q0 = -1j * math.atan(1 / u)
    assert abs(t.Q[0, 0] - q0) <= 1e-13 * abs(q0)
    q1 = 1j * u * q0 - 1
    assert abs(t.Q[1, 0] - q1) <= 1e-13 * max(abs(q1), abs(u * q0))


@pytest.mark.parametrize("kind,u", WRONSKIAN_ARGS)
def test_wronskian(kind, u):
    N = 48
    t = legendre_table(kind, u, N)
    valid = np.tri(N + 1, dtype=bool)
    rhs = ((-1.0) ** np.arange(N + 1)[None, :] * factorial_ratio(N) / (1 - t.x ** 2))[valid]
    w = (t.P * t.dQ - t.dP * t.Q)[valid]
    assert np.max(np.abs(w - rhs) / np.abs(rhs)) < 1e-10


@pytest.mark.parametrize("kind,u", [("real", 1.2), ("real", 3.0), ("imag", 0.3), ("imag", 2.0)])
def test_derivatives_vs_finite_difference(kind, u):
    N, h = 12, 1e-6 * max(1.0, u)
    t0 = legendre_table(kind, u, N)
    tp, tm = legendre_table(kind, u + h, N), legendre_table(kind, u - h, N)
    # tables are derivatives in x; for x = i u, d/du = i d/dx
    scale = 1.0 if kind == "real" else 1j
    for F, dF in (("P", "dP"), ("Q", "dQ")):
        fd = (getattr(tp, F) - getattr(tm, F)) / (2 * h)
        an = scale * getattr(t0, dF)
        mask = np.tri(N + 1, dtype=bool) & (np.abs(an) > 0)
        rel = np.abs(fd - an)[mask] / np.maximum(np.abs(an)[mask], 1e-300)
        assert rel.max() < 1e-7


def test_p_upper_triangle_is_zero():
    P = eval_P("real", 1.5, 6)
    assert np.all(P[np.triu_indices(7, 1)] == 0)


def test_p_vectorized():
    u = np.array([[1.1, 1.5], [2.0, 3.0]])
    P = eval_P("real", u, 5)
    assert P.shape == (2, 2, 6, 6)
    np.testing.assert_allclose(P[1, 0], eval_P("real", 2.0, 5))


def test_q_decays_and_p_grows():
    t = legendre_table("real", 2.0, 20)
    assert np.all(np.diff(np.abs(t.Q[:, 0])) < 0)
    assert np.all(np.diff(np.abs(t.P[:, 0])) > 0)


def test_invalid_arguments():
    with pytest.raises(ValueError):
        eval_P("real", 0.5, 4)
    with pytest.raises(ValueError):
        legendre_table("real", 1.5, 1000)


def test_overflow_is_reported():
    with pytest.raises(LegendreOverflow):
        eval_P("real", 1e12, 60)


@settings(max_examples=40, deadline=None)
@given(kind=st.sampled_from(["real", "imag"]), t=st.floats(0.02, 5.0), N=st.integers(2, 30))
def test_casoratian_property(kind, t, N):
    u = 1.0 + t if kind == "real" else t
    P = eval_P(kind, u, N + 1)
    Q = eval_Q(kind, u, N, P)
    W = casoratian_rhs(N + 1)
    for n in range(1, N + 1):
        m = np.arange(n)
        lhs = P[n, m] * Q[n - 1, m] - P[n - 1, m] * Q[n, m]
        assert np.all(np.abs(lhs - W[n, m]) <= 1e-10 * np.abs(W[n, m]))
