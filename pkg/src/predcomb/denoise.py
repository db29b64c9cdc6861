"""Iterative predictor denoising.

Each step replaces a member ``f^t`` of the ensemble by the maximizer of

    O(f) = f'Af / f'Cf,   A = (C f^t)(C f^t)' + lambda_j Q

over centered ``f``, where ``Q`` measures how well the remaining members
predict ``f``.  ``A`` is never formed: it is carried as ``Y Y'`` and the top
eigenvector of the small Gram matrix ``Y'Y`` is found by power iteration,
after which ``f^{t+1} = Y e / ||Y e||``.

Three choices of ``Q`` are provided:

* ``npc``: GP predictability with a Nystrom factor (``Y = [Cf^t, sqrt(l) C K_GB T^1/2]``)
* ``lpc``: least-squares projection onto the span of the references
* ``opc``: pairwise, similarity-weighted sum of rank-1 reference projections
"""

from __future__ import annotations

import itertools
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Literal, Sequence

import numpy as np

from .core import ScaleShift, center_normalize, inverse_normalize, normalize
from .errors import DegenerateTarget, DimensionMismatch, EmptyGrid
from .predictability import KernelSpec, build_nystrom, median_sq_dist, projection_factor
from .relevance import ArdConfig, RelevanceWeights, optimize_relevance, scale_to_anisotropic

log = logging.getLogger(__name__)

Algorithm = Literal["npc", "lpc", "opc"]


@dataclass(frozen=True)
class DenoiseConfig:
    """Hyperparameters of one denoising run.

    ``sigma_k_sq`` is a multiplier of the median (weighted) squared row
    distance when ``relative_bandwidth`` is set, and an absolute kernel
    bandwidth otherwise.  ``ard_lambda`` defaults to ``sigma_sq``.
    """

    algo: Algorithm = "npc"
    sigma_sq: float = 0.1
    sigma_k_sq: float = 1.0
    lambda_j: float = 1.0
    n_iters: int = 20
    n_basis: int = 300
    power_tol: float = 1e-10
    power_max: int = 10_000
    joint: bool = True
    use_ard: bool = True
    relative_bandwidth: bool = True
    ard_lambda: float | None = None
    ridge: float = 1e-10
    sigma_o_sq: float = 1.0
    lambda_o: float = 1.0

    def __post_init__(self):
        if self.algo not in ("npc", "lpc", "opc"):
            raise ValueError(f"unknown algorithm {self.algo!r}")
        if not self.sigma_sq > 0 or not self.sigma_k_sq > 0:
            raise ValueError("sigma_sq and sigma_k_sq must be positive")
        if self.lambda_j < 0 or self.lambda_o < 0 or not self.sigma_o_sq > 0:
            raise ValueError("lambda_j, lambda_o must be >= 0 and sigma_o_sq > 0")
        if self.n_iters < 0 or self.n_basis < 1 or self.power_max < 1 or not self.power_tol > 0:
            raise ValueError("iteration counts and tolerances must be positive")

    @property
    def ard_config(self) -> ArdConfig:
        return ArdConfig(lambda_noise=self.ard_lambda if self.ard_lambda is not None else self.sigma_sq)

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass
class PredictorEnsemble:
    """Normalized members ``h_0..h_R`` plus what is needed to map them back.

    ``relevance[i]`` holds the ARD weights of member ``i`` against all other
    members (in member order, skipping ``i``); ``None`` until computed.
    """

    members: list[np.ndarray]
    scale_shifts: list[ScaleShift]
    target_indices: tuple[int, ...] = (0,)
    relevance: list[RelevanceWeights | None] = field(default_factory=list)

    def __post_init__(self):
        if len(self.members) < 2:
            raise DimensionMismatch("an ensemble needs at least two members")
        n = self.members[0].size
        if any(m.size != n for m in self.members):
            raise DimensionMismatch("all members must have the same number of points")
        if len(self.scale_shifts) != len(self.members):
            raise DimensionMismatch("one ScaleShift per member is required")
        if not self.target_indices or any(not 0 <= i < len(self.members) for i in self.target_indices):
            raise DimensionMismatch("target indices out of range")
        if not self.relevance:
            self.relevance = [None] * len(self.members)

    @classmethod
    def from_raw(cls, targets: Sequence, references: Sequence) -> "PredictorEnsemble":
        """Normalize raw target and reference evaluations; targets come first."""
        members, shifts = [], []
        for v in list(targets) + list(references):
            p, s = center_normalize(v)
            members.append(p)
            shifts.append(s)
        return cls(members, shifts, tuple(range(len(targets))))

    @property
    def n_points(self) -> int:
        return self.members[0].size

    def __len__(self) -> int:
        return len(self.members)

    def others(self, idx: int, members: Sequence[np.ndarray] | None = None) -> np.ndarray:
        members = self.members if members is None else members
        return np.column_stack([m for j, m in enumerate(members) if j != idx])

    def with_members(self, members: list[np.ndarray]) -> "PredictorEnsemble":
        return PredictorEnsemble(list(members), list(self.scale_shifts), self.target_indices, list(self.relevance))

    def restored(self, idx: int) -> np.ndarray:
        return inverse_normalize(self.members[idx], self.scale_shifts[idx])


@dataclass
class DenoiseTrace:
    """Target snapshots per iteration (index 0 is the input) and optional metrics."""

    snapshots: list[dict[int, np.ndarray]] = field(default_factory=list)
    metrics: list[float] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    def best_iteration(self) -> int:
        """First iteration with the highest recorded metric."""
        if not self.metrics:
            raise ValueError("no metrics were recorded")
        return int(np.argmax(self.metrics))


# ---------------------------------------------------------------------------
# Eigen-solver
# ---------------------------------------------------------------------------
@dataclass
class PowerResult:
    vector: np.ndarray
    value: float
    iterations: int
    converged: bool


def power_iteration(mat: np.ndarray, start: np.ndarray, tol: float = 1e-10, max_iter: int = 10_000) -> PowerResult:
    """Dominant eigenvector of a symmetric PSD matrix.

    Stops when ``1 - |cos(x_k, x_{k+1})| <= tol``.
    """
    x = np.asarray(start, dtype=float).copy()
    nrm = np.linalg.norm(x)
    if nrm == 0:
        x = np.ones(mat.shape[0])
        nrm = np.linalg.norm(x)
    x /= nrm
    value = 0.0
    for it in range(1, max_iter + 1):
        y = mat @ x
        value = float(x @ y)
        ny = np.linalg.norm(y)
        if ny == 0:
            return PowerResult(x, 0.0, it, True)
        y /= ny
        cos = float(x @ y)
        x = y
        if 1.0 - abs(cos) <= tol:
            return PowerResult(x, value, it, True)
    return PowerResult(x, value, max_iter, False)


def _solve_rayleigh(y: np.ndarray, f_t: np.ndarray, cfg: DenoiseConfig, warnings: list[str] | None = None) -> np.ndarray:
    """Top eigenvector of ``Y Y'`` via power iteration on ``Y'Y``; sign follows ``f_t``."""
    gram_y = y.T @ y
    gram_y = 0.5 * (gram_y + gram_y.T)
    res = power_iteration(gram_y, y.T @ f_t, cfg.power_tol, cfg.power_max)
    if not res.converged and warnings is not None:
        warnings.append(f"power iteration stopped at {res.iterations} iterations without converging")
    out = y @ res.vector
    nrm = np.linalg.norm(out)
    if nrm <= 1e-12:
        raise DegenerateTarget("eigen-solution collapsed to zero")
    out = out - out.mean()
    out /= np.linalg.norm(out)
    if out @ f_t < 0:
        out = -out
    return out


# ---------------------------------------------------------------------------
# Single steps
# ---------------------------------------------------------------------------
def kernel_for(g: np.ndarray, relevance: RelevanceWeights | None, cfg: DenoiseConfig) -> KernelSpec:
    """Gaussian kernel over the rows of ``g`` for one target."""
    if cfg.use_ard:
        if relevance is None:
            raise ValueError("ARD is enabled but relevance weights were not computed")
        base = np.asarray(relevance.sigma_l, dtype=float)
    else:
        base = np.ones(g.shape[1])
    scale = cfg.sigma_k_sq
    if cfg.relative_bandwidth:
        scale *= median_sq_dist(g, base)
    return KernelSpec.anisotropic(base / scale)


def denoise_step(target_idx: int, ensemble: PredictorEnsemble, cfg: DenoiseConfig,
                 members: Sequence[np.ndarray] | None = None, warnings: list[str] | None = None) -> np.ndarray:
    """One NPC update of member ``target_idx`` given the snapshot ``members``."""
    members = ensemble.members if members is None else members
    f_t = members[target_idx]
    c = f_t - f_t.mean()
    if cfg.lambda_j == 0:
        return c / np.linalg.norm(c)
    g = ensemble.others(target_idx, members)
    kernel = kernel_for(g, ensemble.relevance[target_idx], cfg)
    factor = build_nystrom(g, min(cfg.n_basis, g.shape[0]), kernel, cfg.sigma_sq)
    if factor.used_eig_fallback and warnings is not None:
        warnings.append(f"member {target_idx}: T^(1/2) built by eigen fallback")
    y = np.column_stack([c, np.sqrt(cfg.lambda_j) * factor.y_block()])
    return _solve_rayleigh(y, c, cfg, warnings)


def lpc_denoise_step(target_idx: int, ensemble: PredictorEnsemble, cfg: DenoiseConfig,
                     members: Sequence[np.ndarray] | None = None, warnings: list[str] | None = None) -> np.ndarray:
    """One LPC update: ``Q = G (G'G)^-1 G'`` (ridge-regularized)."""
    members = ensemble.members if members is None else members
    f_t = members[target_idx]
    c = f_t - f_t.mean()
    if cfg.lambda_j == 0:
        return c / np.linalg.norm(c)
    g = ensemble.others(target_idx, members)
    y = np.column_stack([c, np.sqrt(cfg.lambda_j) * projection_factor(g, cfg.ridge)])
    return _solve_rayleigh(y, c, cfg, warnings)


def opc_weights(f_t: np.ndarray, g: np.ndarray, sigma_o_sq: float) -> np.ndarray:
    """``exp(-d^2 / sigma_o_sq)`` with ``d^2 = 2 - 2<f_t, g_i>`` on the unit sphere."""
    d2 = 2.0 - 2.0 * (g.T @ f_t)
    return np.exp(-np.maximum(d2, 0.0) / sigma_o_sq)


def opc_baseline_step(target_idx: int, ensemble: PredictorEnsemble, sigma_o_sq: float, lambda_o: float,
                      members: Sequence[np.ndarray] | None = None, cfg: DenoiseConfig | None = None,
                      warnings: list[str] | None = None) -> np.ndarray:
    """Pairwise baseline: top eigenvector of ``f f' + lambda_o sum w_i g_i g_i'``."""
    members = ensemble.members if members is None else members
    cfg = cfg or DenoiseConfig(algo="opc")
    f_t = normalize(members[target_idx])
    if lambda_o == 0:
        return f_t
    g = ensemble.others(target_idx, members)
    w = opc_weights(f_t, g, sigma_o_sq)
    y = np.column_stack([f_t, g * np.sqrt(lambda_o * w)])
    return _solve_rayleigh(y, f_t, cfg, warnings)


def update_member(idx: int, ensemble: PredictorEnsemble, cfg: DenoiseConfig,
                  members: Sequence[np.ndarray], warnings: list[str] | None = None) -> np.ndarray:
    if cfg.algo == "npc":
        return denoise_step(idx, ensemble, cfg, members, warnings)
    if cfg.algo == "lpc":
        return lpc_denoise_step(idx, ensemble, cfg, members, warnings)
    return opc_baseline_step(idx, ensemble, cfg.sigma_o_sq, cfg.lambda_o, members, cfg, warnings)


# ---------------------------------------------------------------------------
# Loops
# ---------------------------------------------------------------------------
def worker_count() -> int:
    """Worker threads for member updates, from ``PREDCOMB_THREADS`` (0 = auto)."""
    raw = os.environ.get("PREDCOMB_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        n = 1
    if n <= 0:
        n = os.cpu_count() or 1
    return n


def updated_indices(ensemble: PredictorEnsemble, cfg: DenoiseConfig) -> list[int]:
    if cfg.joint and cfg.algo != "opc":
        return list(range(len(ensemble)))
    return sorted(ensemble.target_indices)


def compute_relevance(ensemble: PredictorEnsemble, cfg: DenoiseConfig,
                      indices: Iterable[int] | None = None) -> PredictorEnsemble:
    """Fill in ARD weights for ``indices`` from the current (initial) members."""
    indices = updated_indices(ensemble, cfg) if indices is None else indices
    ard_cfg = cfg.ard_config
    relevance = list(ensemble.relevance)
    for i in indices:
        sigma_l = optimize_relevance(ensemble.others(i), ensemble.members[i], ard_cfg)
        relevance[i] = scale_to_anisotropic(sigma_l, cfg.sigma_k_sq)
    out = ensemble.with_members(ensemble.members)
    out.relevance = relevance
    return out


def joint_denoise(ensemble: PredictorEnsemble, cfg: DenoiseConfig,
                  evaluate: Callable[[PredictorEnsemble], float] | None = None,
                  ) -> tuple[PredictorEnsemble, DenoiseTrace]:
    """Run ``cfg.n_iters`` synchronous updates.

    Every update in iteration ``t`` reads the snapshot ``H^t`` only.  With
    ``cfg.joint`` off (and always for ``opc``) only the target members move.
    ``evaluate``, when given, is called on the ensemble after every iteration
    (and on the input) and its values land in ``trace.metrics``.
    """
    trace = DenoiseTrace()
    indices = updated_indices(ensemble, cfg)
    if cfg.algo == "npc" and cfg.use_ard and cfg.n_iters > 0 and cfg.lambda_j > 0:
        missing = [i for i in indices if ensemble.relevance[i] is None]
        if missing:
            ensemble = compute_relevance(ensemble, cfg, missing)

    current = ensemble
    trace.snapshots.append({i: current.members[i].copy() for i in current.target_indices})
    if evaluate is not None:
        trace.metrics.append(float(evaluate(current)))

    n_workers = min(worker_count(), len(indices))
    pool = ThreadPoolExecutor(max_workers=n_workers) if n_workers > 1 else None
    try:
        for _ in range(cfg.n_iters):
            snapshot = list(current.members)
            step_warnings: list[list[str]] = [[] for _ in indices]

            def run(k: int) -> np.ndarray:
                return update_member(indices[k], current, cfg, snapshot, step_warnings[k])

            if pool is None:
                results = [run(k) for k in range(len(indices))]
            else:
                results = list(pool.map(run, range(len(indices))))
            new_members = list(snapshot)
            for k, i in enumerate(indices):
                new_members[i] = results[k]
            for w in step_warnings:
                trace.warnings.extend(w)
            current = current.with_members(new_members)
            trace.snapshots.append({i: current.members[i].copy() for i in current.target_indices})
            if evaluate is not None:
                trace.metrics.append(float(evaluate(current)))
    finally:
        if pool is not None:
            pool.shutdown()
    return current, trace


def multiclass_denoise(class_columns, rank_refs, cfg: DenoiseConfig,
                       evaluate: Callable[[PredictorEnsemble], float] | None = None,
                       ) -> tuple[np.ndarray, DenoiseTrace]:
    """Jointly denoise ``H`` class-score columns with rank references.

    ``class_columns`` is N x H (or a sequence of H vectors); ``rank_refs`` is
    N x R.  Returns the N x H inverse-normalized columns; predicted labels are
    their row-wise argmax.
    """
    if isinstance(class_columns, (list, tuple)):
        cols = np.column_stack([np.asarray(c, dtype=float) for c in class_columns])
    else:
        cols = np.asarray(class_columns, dtype=float)
    if cols.ndim != 2:
        raise DimensionMismatch("class columns must form an N x H matrix")
    if cols.shape[1] < 2:
        raise DimensionMismatch("at least two class columns are required")
    refs = np.asarray(rank_refs, dtype=float)
    if refs.ndim == 1:
        refs = refs[:, None]
    ens = PredictorEnsemble.from_raw([cols[:, h] for h in range(cols.shape[1])],
                                     [refs[:, r] for r in range(refs.shape[1])])
    out, trace = joint_denoise(ens, cfg, evaluate)
    restored = np.column_stack([out.restored(h) for h in range(cols.shape[1])])
    return restored, trace


# ---------------------------------------------------------------------------
# Hyperparameter selection
# ---------------------------------------------------------------------------
@dataclass
class TuneResult:
    config: DenoiseConfig
    iteration: int
    score: float
    table: list[tuple[DenoiseConfig, int, float]]
    ensemble: PredictorEnsemble
    trace: DenoiseTrace


def tune(ensemble: PredictorEnsemble, base: DenoiseConfig, evaluate: Callable[[PredictorEnsemble], float],
         sigma_sq_grid: Sequence[float], sigma_k_sq_grid: Sequence[float], lambda_j_grid: Sequence[float],
         ) -> TuneResult:
    """Exhaustive grid search over (sigma_sq, sigma_k_sq, lambda_j) and iteration.

    ``evaluate`` must return a validation score (higher is better).  Ties go
    to the earliest grid point, then to the earliest iteration.
    """
    grid = list(itertools.product(sigma_sq_grid, sigma_k_sq_grid, lambda_j_grid))
    if not grid:
        raise EmptyGrid("hyperparameter grids must be non-empty")
    ard_cache: dict[float, PredictorEnsemble] = {}
    best: TuneResult | None = None
    table = []
    for s2, sk2, lj in grid:
        cfg = replace(base, sigma_sq=s2, sigma_k_sq=sk2, lambda_j=lj)
        ens = ensemble
        if cfg.algo == "npc" and cfg.use_ard:
            lam = cfg.ard_config.lambda_noise
            if lam not in ard_cache:
                ard_cache[lam] = compute_relevance(ensemble, cfg)
            ens = ard_cache[lam]
        out, trace = joint_denoise(ens, cfg, evaluate)
        t = trace.best_iteration()
        score = trace.metrics[t]
        table.append((cfg, t, score))
        if best is None or score > best.score:
            best = TuneResult(cfg, t, score, table, out, trace)
    log.debug("tuned %d configurations; best score %.4f", len(grid), best.score)
    return best
