"""Automatic relevance determination with a linear anisotropic GP kernel.

Per-reference weights ``sigma = exp(theta)`` minimize the negative log
marginal likelihood of ``f`` under ``f ~ N(0, G diag(sigma) G' + lam I)``,
reduced to R x R form with Sherman-Morrison-Woodbury (constants dropped):

    E'(sigma) = sum log sigma + log|M| - b' M^-1 b / lam^2
    M = diag(1/sigma) + G'G / lam,   b = G' f

The anisotropic Gaussian kernel then uses ``sigma / sigma_k_sq``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .errors import DimensionMismatch, NumericalError, NumericalOverflow

THETA_BOX = 50.0


@dataclass(frozen=True)
class ArdConfig:
    lambda_noise: float = 0.1
    step: float = 0.1
    max_iters: int = 500
    grad_tol: float = 1e-6
    armijo_c: float = 1e-4
    max_halvings: int = 40

    def __post_init__(self):
        if not (self.lambda_noise > 0 and self.step > 0 and self.max_iters > 0 and self.grad_tol > 0):
            raise ValueError("ArdConfig fields must all be positive")


@dataclass(frozen=True)
class RelevanceWeights:
    sigma_l: np.ndarray
    sigma_a: np.ndarray

    def normalized(self) -> np.ndarray:
        """``sigma_l`` rescaled to sum to one (for display only)."""
        total = float(self.sigma_l.sum())
        if total <= 0:
            return np.full(self.sigma_l.size, 1.0 / self.sigma_l.size)
        return self.sigma_l / total


def _inputs(theta, g, f):
    theta = np.asarray(theta, dtype=float)
    g = np.asarray(g, dtype=float)
    f = np.asarray(f, dtype=float)
    if g.ndim == 1:
        g = g[:, None]
    if g.shape[1] != theta.size or g.shape[0] != f.size:
        raise DimensionMismatch(
            f"theta ({theta.size}), G {g.shape} and f ({f.size}) are inconsistent"
        )
    if np.any(np.abs(theta) > THETA_BOX) or not np.all(np.isfinite(theta)):
        raise NumericalOverflow(f"log-weights must lie in [-{THETA_BOX}, {THETA_BOX}]")
    return theta, g, f


def _energy_parts(theta, g, f, lam):
    sigma = np.exp(theta)
    m = np.diag(1.0 / sigma) + (g.T @ g) / lam
    try:
        chol = linalg.cho_factor(m, lower=True)
    except linalg.LinAlgError as exc:
        raise NumericalError("marginal-likelihood system is not positive definite") from exc
    b = g.T @ f
    u = linalg.cho_solve(chol, b)
    logdet = 2.0 * np.sum(np.log(np.diag(chol[0])))
    energy = float(theta.sum() + logdet - (b @ u) / lam**2)
    return energy, sigma, chol, u


def ml_energy(theta, g, f, cfg: ArdConfig) -> float:
    """Reduced negative log marginal likelihood ``E'`` at log-weights ``theta``."""
    theta, g, f = _inputs(theta, g, f)
    return _energy_parts(theta, g, f, cfg.lambda_noise)[0]


def ml_energy_and_grad(theta, g, f, cfg: ArdConfig) -> tuple[float, np.ndarray]:
    """``E'`` and its gradient with respect to ``theta``.

    d E' / d theta_i = 1 - [M^-1]_ii / sigma_i - u_i^2 / (lam^2 sigma_i),  u = M^-1 b
    """
    theta, g, f = _inputs(theta, g, f)
    lam = cfg.lambda_noise
    energy, sigma, chol, u = _energy_parts(theta, g, f, lam)
    m_inv_diag = np.diag(linalg.cho_solve(chol, np.eye(theta.size)))
    grad = 1.0 - m_inv_diag / sigma - u**2 / (lam**2 * sigma)
    return energy, grad


def optimize_relevance(g, f0, cfg: ArdConfig | None = None) -> np.ndarray:
    """Projected gradient descent on ``E'`` from ``theta = 0``; returns ``exp(theta*)``.

    Each iteration starts from ``cfg.step`` and halves until the Armijo
    condition holds.  ``theta`` is kept inside the +-50 box.
    """
    cfg = cfg or ArdConfig()
    g = np.asarray(g, dtype=float)
    if g.ndim == 1:
        g = g[:, None]
    theta = np.zeros(g.shape[1])
    energy, grad = ml_energy_and_grad(theta, g, f0, cfg)
    for _ in range(cfg.max_iters):
        if np.linalg.norm(grad) <= cfg.grad_tol:
            break
        step = cfg.step
        for _ in range(cfg.max_halvings):
            trial = np.clip(theta - step * grad, -THETA_BOX, THETA_BOX)
            move = trial - theta
            trial_energy, trial_grad = ml_energy_and_grad(trial, g, f0, cfg)
            if trial_energy <= energy + cfg.armijo_c * (grad @ move):
                break
            step *= 0.5
        else:
            break
        if not np.any(move):
            break
        theta, energy, grad = trial, trial_energy, trial_grad
    return np.exp(theta)


def scale_to_anisotropic(sigma_l, sigma_k_sq: float) -> RelevanceWeights:
    if not sigma_k_sq > 0:
        raise ValueError("sigma_k_sq must be positive")
    sigma_l = np.asarray(sigma_l, dtype=float)
    return RelevanceWeights(sigma_l=sigma_l, sigma_a=sigma_l / sigma_k_sq)
