"""Kernels, linear/nonlinear predictability, and the Nystrom factorization.

The GP-based predictability of a target ``f`` given reference rows ``G`` is

    P_N = f' Q' f / f' C f,   Q' = C (2M - M M) C,   M = K (K + s2 I)^-1

where ``C`` is the centering projector.  For large N the kernel matrix is
replaced by the Nystrom approximation ``K_GB K_BB^-1 K_GB'`` and the quadratic
form is carried by a factor ``K_GB T^(1/2)``, which is what the eigen-solver
in :mod:`predcomb.denoise` consumes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Literal

import numpy as np
from scipy import linalg
from scipy.spatial.distance import cdist

from .errors import BasisCountOutOfRange, DimensionMismatch, NonPositiveNoise, SingularSystem

KernelKind = Literal["isotropic_gaussian", "anisotropic_gaussian", "linear_anisotropic"]

EIG_FLOOR = 1e-9
BASIS_JITTER = 1e-10


@dataclass(frozen=True)
class KernelSpec:
    """Covariance function over reference rows.

    ``isotropic_gaussian``:   exp(-||a - b||^2 / sigma_k_sq)
    ``anisotropic_gaussian``: exp(-(a - b)' diag(weights) (a - b))
    ``linear_anisotropic``:   a' diag(weights) b
    """

    kind: KernelKind = "isotropic_gaussian"
    sigma_k_sq: float = 1.0
    weights: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.kind == "isotropic_gaussian":
            if not self.sigma_k_sq > 0:
                raise ValueError("sigma_k_sq must be positive")
        elif self.kind in ("anisotropic_gaussian", "linear_anisotropic"):
            if self.weights is None:
                raise ValueError(f"{self.kind} kernel needs per-reference weights")
            w = np.asarray(self.weights, dtype=float)
            if w.ndim != 1 or np.any(w < 0) or not np.all(np.isfinite(w)):
                raise ValueError("kernel weights must be a finite non-negative vector")
            object.__setattr__(self, "weights", w)
        else:
            raise ValueError(f"unknown kernel kind {self.kind!r}")

    @classmethod
    def isotropic(cls, sigma_k_sq: float = 1.0) -> "KernelSpec":
        return cls("isotropic_gaussian", sigma_k_sq=sigma_k_sq)

    @classmethod
    def anisotropic(cls, weights) -> "KernelSpec":
        return cls("anisotropic_gaussian", weights=np.asarray(weights, dtype=float))

    @classmethod
    def linear(cls, weights) -> "KernelSpec":
        return cls("linear_anisotropic", weights=np.asarray(weights, dtype=float))

    def column_weights(self, n_cols: int) -> np.ndarray:
        """Per-column multipliers of the squared differences (or products)."""
        if self.kind == "isotropic_gaussian":
            return np.full(n_cols, 1.0 / self.sigma_k_sq)
        if self.weights.size != n_cols:
            raise DimensionMismatch(
                f"kernel has {self.weights.size} weights but rows have {n_cols} columns"
            )
        return self.weights


def _as_rows(a) -> np.ndarray:
    arr = np.asarray(a, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise DimensionMismatch(f"expected a 2-D row matrix, got shape {arr.shape}")
    return arr


def weighted_sq_dists(rows_a, rows_b, col_weights) -> np.ndarray:
    """``sum_r w_r (a_r - b_r)^2`` for every pair of rows.

    ``cdist`` forms the differences explicitly (no ``|a|^2 + |b|^2 - 2ab``
    expansion), so identical rows give exactly zero.
    """
    a, b = _as_rows(rows_a), _as_rows(rows_b)
    scale = np.sqrt(np.asarray(col_weights, dtype=float))
    return cdist(a * scale, b * scale, "sqeuclidean")


def gram(rows_a, rows_b, spec: KernelSpec) -> np.ndarray:
    """Kernel matrix ``k(rows_a[i], rows_b[j])``."""
    a, b = _as_rows(rows_a), _as_rows(rows_b)
    if a.shape[1] != b.shape[1]:
        raise DimensionMismatch(f"row widths differ: {a.shape[1]} vs {b.shape[1]}")
    w = spec.column_weights(a.shape[1])
    if spec.kind == "linear_anisotropic":
        return (a * w) @ b.T
    return np.exp(-weighted_sq_dists(a, b, w))


def median_sq_dist(rows, col_weights=None, max_rows: int = 300) -> float:
    """Median of non-zero (weighted) squared distances among evenly sampled rows.

    Returns 1.0 when every sampled pair coincides.
    """
    g = _as_rows(rows)
    if col_weights is None:
        col_weights = np.ones(g.shape[1])
    sub = g[basis_indices(g.shape[0], min(max_rows, g.shape[0]))]
    d = weighted_sq_dists(sub, sub, col_weights)
    iu = np.triu_indices(sub.shape[0], 1)
    vals = d[iu]
    vals = vals[vals > 0]
    if vals.size == 0:
        return 1.0
    return float(np.median(vals))


def _check_noise(sigma_sq: float) -> None:
    if not sigma_sq > 0:
        raise NonPositiveNoise(f"noise variance must be strictly positive, got {sigma_sq}")


def _centered_rows(m: np.ndarray) -> np.ndarray:
    return m - m.mean(axis=0, keepdims=True)


def _ratio(num: float, den: float) -> float:
    return float(np.clip(num / den, 0.0, 1.0))


# ---------------------------------------------------------------------------
# Linear predictability
# ---------------------------------------------------------------------------
def projection_factor(g, ridge: float = 1e-10) -> np.ndarray:
    """Factor ``F`` with ``F F' = G (G'G + ridge I)^-1 G'``."""
    g = _as_rows(g)
    try:
        chol = linalg.cholesky(g.T @ g + ridge * np.eye(g.shape[1]), lower=True)
    except linalg.LinAlgError as exc:
        raise SingularSystem("G'G + ridge I is not positive definite") from exc
    return linalg.solve_triangular(chol, g.T, lower=True).T


def linear_predictability(f, g, ridge: float = 1e-10) -> float:
    """Normalized accuracy of the least-squares prediction of ``f`` from rows of ``g``.

    ``1 - sum (f_i - q(G_i))^2 / sum (f_i - mean f)^2``, clamped to [0, 1].
    """
    f = np.asarray(f, dtype=float)
    g = _as_rows(g)
    if g.shape[0] != f.size:
        raise DimensionMismatch("f and G must have the same number of rows")
    try:
        chol = linalg.cho_factor(g.T @ g + ridge * np.eye(g.shape[1]))
    except linalg.LinAlgError as exc:
        raise SingularSystem("G'G + ridge I is not positive definite") from exc
    fc = f - f.mean()
    w = linalg.cho_solve(chol, g.T @ fc)
    resid = fc - g @ w
    return _ratio(fc @ fc - resid @ resid, fc @ fc)


# ---------------------------------------------------------------------------
# Dense GP path
# ---------------------------------------------------------------------------
def _smoother(g, spec: KernelSpec, sigma_sq: float) -> np.ndarray:
    """``M = K (K + s2 I)^-1`` via a Cholesky solve; symmetric since the factors commute."""
    _check_noise(sigma_sq)
    k = gram(g, g, spec)
    chol = linalg.cho_factor(k + sigma_sq * np.eye(k.shape[0]))
    m = linalg.cho_solve(chol, k)
    return 0.5 * (m + m.T)


def gp_posterior_mean(f, g, spec: KernelSpec, sigma_sq: float) -> np.ndarray:
    """Posterior mean ``K (K + s2 I)^-1 f`` of a zero-mean GP fitted to ``f``."""
    _check_noise(sigma_sq)
    f = np.asarray(f, dtype=float)
    k = gram(g, g, spec)
    if k.shape[0] != f.size:
        raise DimensionMismatch("f and G must have the same number of rows")
    chol = linalg.cho_factor(k + sigma_sq * np.eye(f.size))
    return k @ linalg.cho_solve(chol, f)


def q_prime(g, spec: KernelSpec, sigma_sq: float) -> np.ndarray:
    """Dense ``Q' = C (2M - M M) C``; O(N^3), meant for small N and for checks."""
    m = _smoother(g, spec, sigma_sq)
    inner = 2.0 * m - m @ m
    inner = _centered_rows(_centered_rows(inner).T)
    return 0.5 * (inner + inner.T)


def nonlinear_predictability(f, g, spec: KernelSpec, sigma_sq: float, form: str = "quadratic") -> float:
    """GP predictability of ``f`` from the rows of ``g``.

    ``form="quadratic"`` evaluates ``f'Q'f / f'Cf``; ``form="residual"``
    evaluates ``1 - ||f - m_f||^2 / ||f - mean f||^2``.  Both agree for
    centered ``f``.
    """
    f = np.asarray(f, dtype=float)
    fc = f - f.mean()
    if form == "quadratic":
        return _ratio(fc @ q_prime(g, spec, sigma_sq) @ fc, fc @ fc)
    if form == "residual":
        resid = f - gp_posterior_mean(f, g, spec, sigma_sq)
        return _ratio(fc @ fc - resid @ resid, fc @ fc)
    raise ValueError(f"unknown form {form!r}")


# ---------------------------------------------------------------------------
# Nystrom path
# ---------------------------------------------------------------------------
def basis_indices(n: int, n_basis: int) -> np.ndarray:
    """Evenly spaced row indices ``floor(i * n / n_basis)``, strictly increasing."""
    if not 1 <= n_basis <= n:
        raise BasisCountOutOfRange(f"n_basis must lie in [1, {n}], got {n_basis}")
    return (np.arange(n_basis) * n) // n_basis


@dataclass
class NystromFactor:
    """Low-rank GP factor for one target.

    ``t`` is ``2P - P K_GB' K_GB P`` with ``P = (K_GB' K_GB + s2 K_BB)^-1``
    and ``t_half @ t_half.T == t``.  ``K_BB`` is factorized with a tiny
    diagonal jitter (``BASIS_JITTER`` relative to its mean diagonal) so that
    duplicate basis rows do not make ``P`` singular.
    """

    basis: np.ndarray
    k_gb: np.ndarray
    k_bb: np.ndarray
    t_half: np.ndarray
    chol_bb: np.ndarray
    inner: np.ndarray
    used_eig_fallback: bool = False

    @property
    def n_basis(self) -> int:
        return self.basis.shape[0]

    @cached_property
    def t(self) -> np.ndarray:
        left = linalg.solve_triangular(self.chol_bb, self.inner, lower=True, trans="T")
        t = linalg.solve_triangular(self.chol_bb, left.T, lower=True, trans="T")
        return 0.5 * (t + t.T)

    def y_block(self) -> np.ndarray:
        """Centered ``K_GB T^(1/2)``; the nonlinear block of the eigen-factor ``Y``."""
        return _centered_rows(self.k_gb @ self.t_half)

    def q_double_prime(self, lambda_j: float = 1.0) -> np.ndarray:
        """Dense ``C K_GB (lambda_j T) K_GB' C``; O(N^2) memory, for checks only."""
        yb = self.y_block()
        return lambda_j * (yb @ yb.T)


def _psd_half(mat: np.ndarray) -> tuple[np.ndarray, bool]:
    """Lower Cholesky factor, or ``E sqrt(max(L, eps))`` when Cholesky fails."""
    try:
        return linalg.cholesky(mat, lower=True), False
    except linalg.LinAlgError:
        vals, vecs = linalg.eigh(mat)
        vals = np.maximum(vals, EIG_FLOOR)
        return vecs * np.sqrt(vals), True


def _jittered_cholesky(k_bb: np.ndarray) -> np.ndarray:
    scale = max(float(np.mean(np.diag(k_bb))), 1e-300)
    jitter = BASIS_JITTER * scale
    eye = np.eye(k_bb.shape[0])
    for _ in range(12):
        try:
            return linalg.cholesky(k_bb + jitter * eye, lower=True)
        except linalg.LinAlgError:
            jitter *= 10.0
    raise SingularSystem("K_BB could not be factorized even with jitter")


def build_nystrom(g, n_basis: int, spec: KernelSpec, sigma_sq: float) -> NystromFactor:
    """Nystrom factor from ``n_basis`` evenly sampled rows of ``g``.

    With ``K_BB = L L'`` and ``V = K_GB L^-T`` the inner matrix is
    ``T = L^-T (2S - S V'V S) L^-1`` with ``S = (V'V + s2 I)^-1``, which is
    algebraically the ``2P - P K_GB' K_GB P`` form but never inverts ``K_BB``
    directly.  ``T^(1/2) = L^-T chol(2S - S V'V S)``.
    """
    _check_noise(sigma_sq)
    g = _as_rows(g)
    idx = basis_indices(g.shape[0], n_basis)
    basis = g[idx]
    k_gb = gram(g, basis, spec)
    k_bb = gram(basis, basis, spec)
    k_bb = 0.5 * (k_bb + k_bb.T)

    chol_bb = _jittered_cholesky(k_bb)
    v = linalg.solve_triangular(chol_bb, k_gb.T, lower=True).T
    vtv = v.T @ v
    vtv = 0.5 * (vtv + vtv.T)
    eye = np.eye(n_basis)
    s = linalg.cho_solve(linalg.cho_factor(vtv + sigma_sq * eye), eye)
    s = 0.5 * (s + s.T)
    inner = 2.0 * s - s @ vtv @ s
    inner = 0.5 * (inner + inner.T)
    inner_half, fallback = _psd_half(inner)

    # L^-T applied from the left
    t_half = linalg.solve_triangular(chol_bb, inner_half, lower=True, trans="T")
    return NystromFactor(basis=basis, k_gb=k_gb, k_bb=k_bb, t_half=t_half, chol_bb=chol_bb,
                         inner=inner, used_eig_fallback=fallback)
