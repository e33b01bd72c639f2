import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from conelab.errors import CalculusError, IndefiniteOperatorError
from conelab.manifold import build_model
from conelab.spectral import (PotentialSplit, assemble, calculus, gradient_modulus, gradient_sq,
                              heat_apply, heat_kernel, inner, laplacian_apply, poisson_apply)


def test_laplacian_examples(path2, grid5, rng):
    assert np.allclose(laplacian_apply(grid5, np.full(grid5.n, 3.0)), 0.0)
    assert np.allclose(laplacian_apply(path2, [1.0, 0.0]), [1.0, -1.0])
    f = rng.standard_normal(grid5.n)
    lhs = inner(grid5.mu, laplacian_apply(grid5, f), f)
    u, v = grid5.edges.T
    rhs = float(np.sum(grid5.edge_w * (f[u] - f[v]) ** 2))
    assert lhs == pytest.approx(rhs, rel=1e-12)


def test_gradient_examples(path2, grid5, rng):
    assert np.allclose(gradient_modulus(grid5, np.ones(grid5.n)), 0.0)
    assert np.allclose(gradient_sq(path2, [1.0, 0.0]), [0.5, 0.5])
    f = rng.standard_normal(grid5.n)
    energy = float(np.sum(grid5.mu * gradient_sq(grid5, f)))
    assert energy == pytest.approx(inner(grid5.mu, laplacian_apply(grid5, f), f), rel=1e-12)


def test_p2_spectrum_and_heat_kernel(path2):
    op = assemble(path2)
    assert np.allclose(op.lambdas, [0.0, 2.0], atol=1e-14)
    P = heat_kernel(op, 1.0)
    assert P[0, 0] == pytest.approx((1 + math.exp(-2)) / 2, rel=1e-14)
    assert P[0, 1] == pytest.approx((1 - math.exp(-2)) / 2, rel=1e-14)


def test_potential_shift(grid5, rng):
    V = PotentialSplit.random(grid5.n, rng)
    op = assemble(grid5, V)
    c = 0.7
    op2 = assemble(grid5, PotentialSplit(V.vplus + c, V.vminus))
    assert np.allclose(op2.lambdas, op.lambdas + c, atol=1e-12)
    # modes agree up to sign (spectrum is simple for a random potential)
    G = op.modes.T @ (grid5.mu[:, None] * op2.modes)
    assert np.allclose(np.abs(np.diag(G)), 1.0, atol=1e-8)


def test_indefinite(grid5):
    V = PotentialSplit(np.zeros(grid5.n), np.full(grid5.n, 0.5))
    with pytest.raises(IndefiniteOperatorError):
        assemble(grid5, V)


def test_calculus_identities(grid5, rng):
    op = assemble(grid5)
    f = rng.standard_normal(grid5.n)
    assert np.allclose(calculus(op, lambda lam: np.ones_like(lam), f), f, atol=1e-12)
    s, t = 0.3, 1.1
    two = heat_apply(op, t, heat_apply(op, s, f))
    one = heat_apply(op, s + t, f)
    assert np.max(np.abs(two - one)) <= 1e-12 * max(1.0, np.max(np.abs(one)))
    proj = calculus(op, lambda lam: (lam <= 1e-9).astype(float), f)
    mean = np.sum(grid5.mu * f) / grid5.total_measure
    assert np.allclose(proj, mean, atol=1e-12)


def test_calculus_undefined_on_kernel(grid5):
    op = assemble(grid5)
    with pytest.raises(CalculusError):
        calculus(op, lambda lam: 1.0 / lam, np.ones(grid5.n))


def test_heat_kernel_markov(grid5):
    op = assemble(grid5)
    for t in (0.01, 0.5, 3.0, 40.0):
        P = heat_kernel(op, t)
        assert np.allclose(P @ grid5.mu, 1.0, atol=1e-10)
        assert P.min() >= -1e-12


def test_poisson_semigroup(grid5, rng):
    op = assemble(grid5)
    f = rng.standard_normal(grid5.n)
    assert np.allclose(poisson_apply(op, 0.0, f), f, atol=1e-12)
    assert np.allclose(poisson_apply(op, 1e-9, f), f, atol=1e-7)
    k = 5
    phi = op.modes[:, k]
    out = poisson_apply(op, 0.8, phi)
    assert np.allclose(out, np.exp(-0.8 * math.sqrt(op.lambdas[k])) * phi, atol=1e-12)


def test_subordination(grid5, rng):
    op = assemble(grid5)
    f = rng.standard_normal(grid5.n)
    t = 0.9
    kern = lambda s: t * np.exp(-t * t / (4 * s)) / math.sqrt(4 * math.pi * s**3)
    val, _ = integrate.quad_vec(lambda s: kern(s) * heat_apply(op, s, f), 0, np.inf,
                                epsrel=1e-10, epsabs=1e-12)
    exact = poisson_apply(op, t, f)
    assert np.max(np.abs(val - exact)) <= 1e-6 * np.max(np.abs(exact))


def test_residuals(grid5, rng):
    op = assemble(grid5, PotentialSplit.random(grid5.n, rng))
    r_eig, r_orth = op.residuals()
    assert r_eig < 1e-10 and r_orth < 1e-10


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(0.0, 3.0))
def test_spectral_properties(seed, scale):
    r = np.random.default_rng(seed)
    M = build_model("grid", d=2, side=4, mu=1.0)
    V = PotentialSplit.random(M.n, r, scale)
    op = assemble(M, V)
    assert op.lambdas.min() >= -1e-10
    assert np.all(np.diff(op.lambdas) >= -1e-12)
    f = r.standard_normal(M.n)
    # apply matches the direct operator
    direct = laplacian_apply(M, f) + V.signed * f
    assert np.allclose(op.apply(f), direct, atol=1e-10 * max(1.0, np.abs(direct).max()))
    # semigroup is an L2(μ) contraction
    g = heat_apply(op, 0.5, f)
    assert inner(M.mu, g, g) <= inner(M.mu, f, f) * (1 + 1e-12)
