from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from predcomb.errors import BasisCountOutOfRange, DimensionMismatch, NonPositiveNoise
from predcomb.predictability import (
    KernelSpec,
    _psd_half,
    basis_indices,
    build_nystrom,
    gp_posterior_mean,
    gram,
    linear_predictability,
    median_sq_dist,
    nonlinear_predictability,
    q_prime,
)


def _problem(seed, n=15, r=3):
    rng = np.random.default_rng(seed)
    return rng.normal(size=n), rng.normal(size=(n, r))


def _centering(n):
    return np.eye(n) - np.ones((n, n)) / n


# -- kernels -----------------------------------------------------------------
def test_gram_loop_oracle(rng):
    a, b = rng.normal(size=(5, 3)), rng.normal(size=(4, 3))
    w = np.array([0.5, 2.0, 0.1])
    k = gram(a, b, KernelSpec.anisotropic(w))
    for i in range(5):
        for j in range(4):
            assert k[i, j] == pytest.approx(np.exp(-sum(w[r] * (a[i, r] - b[j, r]) ** 2 for r in range(3))))
    iso = gram(a, b, KernelSpec.isotropic(2.0))
    assert iso[1, 2] == pytest.approx(np.exp(-np.sum((a[1] - b[2]) ** 2) / 2.0))
    lin = gram(a, b, KernelSpec.linear(w))
    assert lin[3, 0] == pytest.approx(np.sum(w * a[3] * b[0]))


def test_gram_identical_rows_exact_one(rng):
    a = rng.normal(size=(6, 2))
    k = gram(a, a, KernelSpec.isotropic(0.3))
    assert np.all(np.diag(k) == 1.0)


def test_kernel_spec_validation():
    with pytest.raises(ValueError):
        KernelSpec.isotropic(0.0)
    with pytest.raises(ValueError):
        KernelSpec.anisotropic([-1.0, 1.0])
    with pytest.raises(ValueError):
        KernelSpec("nope")
    with pytest.raises(DimensionMismatch):
        gram(np.ones((2, 3)), np.ones((2, 3)), KernelSpec.anisotropic([1.0, 1.0]))


def test_median_sq_dist_loop_oracle(rng):
    g = rng.normal(size=(12, 2))
    vals = [np.sum((g[i] - g[j]) ** 2) for i in range(12) for j in range(i + 1, 12)]
    assert median_sq_dist(g) == pytest.approx(np.median(vals))
    assert median_sq_dist(np.ones((5, 2))) == 1.0


# -- linear ------------------------------------------------------------------
def test_linear_predictability_least_squares_oracle(rng):
    f, g = _problem(1, n=30, r=4)
    design = np.column_stack([g, np.ones(30)])
    coef, *_ = np.linalg.lstsq(design, f, rcond=None)
    r2 = 1 - np.sum((f - design @ coef) ** 2) / np.sum((f - f.mean()) ** 2)
    # with centered references the intercept is implied
    gc = g - g.mean(axis=0)
    assert linear_predictability(f, gc) == pytest.approx(r2, abs=1e-9)


def test_linear_predictability_limits(rng):
    g = rng.normal(size=(20, 2))
    g -= g.mean(axis=0)
    assert linear_predictability(g @ [1.0, -2.0], g) == pytest.approx(1.0, abs=1e-9)
    q, _ = np.linalg.qr(np.column_stack([np.ones(20), g, rng.normal(size=20)]))
    assert linear_predictability(q[:, 3], g) == pytest.approx(0.0, abs=1e-9)


@given(st.integers(0, 10_000))
def test_linear_predictability_bounds(seed):
    f, g = _problem(seed, n=12, r=3)
    assert -1e-8 <= linear_predictability(f, g) <= 1 + 1e-8


# -- dense GP ----------------------------------------------------------------
def test_posterior_mean_explicit_inverse(rng):
    f, g = _problem(3)
    spec = KernelSpec.isotropic(1.5)
    k = gram(g, g, spec)
    expected = k @ np.linalg.inv(k + 0.2 * np.eye(15)) @ f
    assert np.allclose(gp_posterior_mean(f, g, spec, 0.2), expected, atol=1e-10)


def test_q_prime_explicit(rng):
    _, g = _problem(4, n=10)
    spec = KernelSpec.anisotropic([1.0, 0.5, 2.0])
    k = gram(g, g, spec)
    m = k @ np.linalg.inv(k + 0.3 * np.eye(10))
    c = _centering(10)
    assert np.allclose(q_prime(g, spec, 0.3), c @ (2 * m - m @ m) @ c, atol=1e-10)


def test_quadratic_and_residual_forms_agree(rng):
    f, g = _problem(5)
    spec = KernelSpec.isotropic(2.0)
    f = f - f.mean()
    a = nonlinear_predictability(f, g, spec, 0.1, form="quadratic")
    b = nonlinear_predictability(f, g, spec, 0.1, form="residual")
    assert a == pytest.approx(b, abs=1e-9)
    with pytest.raises(ValueError):
        nonlinear_predictability(f, g, spec, 0.1, form="other")


@given(st.integers(0, 10_000), st.floats(1e-4, 1e4))
def test_nonlinear_predictability_bounds(seed, s2):
    f, g = _problem(seed, n=10)
    assert -1e-8 <= nonlinear_predictability(f, g, KernelSpec.isotropic(1.0), s2) <= 1 + 1e-8


def test_nonlinear_predictability_noise_limits(rng):
    f, g = _problem(6)
    spec = KernelSpec.isotropic(1.0)
    assert nonlinear_predictability(f, g, spec, 1e-10) >= 0.999
    assert nonlinear_predictability(f, g, spec, 1e12) <= 1e-6


def test_nonpositive_noise_rejected():
    f, g = _problem(7)
    with pytest.raises(NonPositiveNoise):
        nonlinear_predictability(f, g, KernelSpec.isotropic(1.0), 0.0)
    with pytest.raises(NonPositiveNoise):
        build_nystrom(g, 5, KernelSpec.isotropic(1.0), -1.0)


# -- Nystrom -----------------------------------------------------------------
def test_basis_indices():
    assert basis_indices(10, 4).tolist() == [0, 2, 5, 7]
    assert basis_indices(5, 5).tolist() == [0, 1, 2, 3, 4]
    with pytest.raises(BasisCountOutOfRange):
        basis_indices(5, 6)
    with pytest.raises(BasisCountOutOfRange):
        basis_indices(5, 0)


@given(st.integers(1, 200), st.data())
def test_basis_indices_strictly_increasing(n, data):
    k = data.draw(st.integers(1, n))
    idx = basis_indices(n, k)
    assert idx.size == k and idx[0] == 0 and idx[-1] < n
    assert np.all(np.diff(idx) > 0)


def test_t_matches_explicit_formula(rng):
    _, g = _problem(8, n=25)
    spec = KernelSpec.isotropic(2.0)
    fac = build_nystrom(g, 8, spec, 0.1)
    kgb, kbb = fac.k_gb, fac.k_bb
    p = np.linalg.inv(kgb.T @ kgb + 0.1 * kbb)
    t = 2 * p - p @ kgb.T @ kgb @ p
    assert np.allclose(fac.t, t, rtol=1e-6, atol=1e-6 * np.abs(t).max())
    assert np.allclose(fac.t_half @ fac.t_half.T, fac.t, atol=1e-8 * np.abs(t).max())


@pytest.mark.parametrize("seed", range(5))
def test_full_basis_matches_dense(seed):
    f, g = _problem(seed, n=12)
    spec = KernelSpec.anisotropic([0.7, 1.1, 0.4])
    fac = build_nystrom(g, 12, spec, 0.1)
    assert np.allclose(fac.q_double_prime(2.0), 2.0 * q_prime(g, spec, 0.1), atol=1e-8)


def test_y_block_centered(rng):
    _, g = _problem(9, n=30)
    yb = build_nystrom(g, 10, KernelSpec.isotropic(1.0), 0.1).y_block()
    assert np.allclose(yb.sum(axis=0), 0.0, atol=1e-10)


def test_duplicate_basis_rows_survive(rng):
    g = np.repeat(rng.normal(size=(5, 2)), 4, axis=0)
    fac = build_nystrom(g, 20, KernelSpec.isotropic(1.0), 0.1)
    assert np.all(np.isfinite(fac.t_half))


def test_psd_half_eigen_fallback():
    bad = np.diag([1.0, -1e-3, 4.0])
    half, fallback = _psd_half(bad)
    assert fallback
    assert np.allclose(half @ half.T, np.diag([1.0, 1e-9, 4.0]))
    good = np.array([[2.0, 0.5], [0.5, 1.0]])
    half, fallback = _psd_half(good)
    assert not fallback and np.allclose(half @ half.T, good)
