"""Seeded benchmark scenarios shared by the CLI and the acceptance tests.

Every scenario splits the points evenly into validation and test halves.
Each algorithm runs for ``n_iters`` steps; the reported accuracy is the
test-half score at the iteration with the best validation-half score.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .bench import (
    ToySpec,
    classification_accuracy,
    gen_attribute_benchmark,
    gen_multiclass_benchmark,
    gen_toy,
    kendall_x100,
)
from .denoise import DenoiseConfig, PredictorEnsemble, joint_denoise

SCENARIOS = ("toy1", "toy2", "attr", "multiclass")


@dataclass
class VariantResult:
    variant: str
    seed: int
    baseline: float
    accuracy: float
    iteration: int
    curve: list[float] = field(default_factory=list)

    @property
    def offset(self) -> float:
        return self.accuracy - self.baseline


def scenario_configs(scenario: str, ablate: tuple[str, ...] = (), base: DenoiseConfig | None = None,
                     ) -> dict[str, DenoiseConfig]:
    """Algorithm variants compared in ``scenario``.

    The toy problems have exact references, so NPC/LPC only move the target
    there; the attribute and multi-class scenarios use joint denoising.
    """
    base = base or DenoiseConfig()
    joint = scenario not in ("toy1", "toy2")
    npc = replace(base, algo="npc", joint=joint)
    variants = {
        "opc": replace(base, algo="opc", joint=False),
        "lpc": replace(base, algo="lpc", joint=joint),
        "npc": npc,
    }
    if "joint" in ablate:
        variants["npc-joint"] = replace(npc, joint=True)
        variants["npc-target-only"] = replace(npc, joint=False)
    if "ard" in ablate:
        variants["npc-ard"] = replace(npc, use_ard=True)
        variants["npc-isotropic"] = replace(npc, use_ard=False)
    return variants


@dataclass
class _Problem:
    ensemble: PredictorEnsemble
    score_val: Callable[[PredictorEnsemble], float]
    score_test: Callable[[PredictorEnsemble], float]


def _ranking_problem(target, refs, gt, split) -> _Problem:
    val, test = split == "val", split == "test"
    ens = PredictorEnsemble.from_raw([target], refs)
    return _Problem(
        ens,
        lambda e: kendall_x100(e.members[0][val], gt[val]),
        lambda e: kendall_x100(e.members[0][test], gt[test]),
    )


def make_problem(scenario: str, seed: int, n_points: int | None = None) -> _Problem:
    if scenario in ("toy1", "toy2"):
        mode = "difference" if scenario == "toy1" else "xor"
        ds = gen_toy(ToySpec(n_points=n_points or 100, mode=mode, seed=seed))
        return _ranking_problem(ds.target, ds.references, ds.ground_truth, ds.split)
    if scenario == "attr":
        ds = gen_attribute_benchmark(n_points=n_points or 300, seed=seed)
        return _ranking_problem(ds.target, ds.references, ds.ground_truth, ds.split)
    if scenario == "multiclass":
        mc = gen_multiclass_benchmark(n_points=n_points or 300, seed=seed)
        h = mc.scores.shape[1]
        ens = PredictorEnsemble.from_raw([mc.scores[:, c] for c in range(h)],
                                         [mc.rank_refs[:, r] for r in range(mc.rank_refs.shape[1])])
        val, test = mc.split == "val", mc.split == "test"

        def acc(e: PredictorEnsemble, mask) -> float:
            cols = np.column_stack([e.restored(c) for c in range(h)])
            return classification_accuracy(cols[mask], mc.labels[mask])

        return _Problem(ens, lambda e: acc(e, val), lambda e: acc(e, test))
    raise ValueError(f"unknown scenario {scenario!r}; choose from {SCENARIOS}")


def run_variant(problem: _Problem, cfg: DenoiseConfig, name: str, seed: int) -> VariantResult:
    """Run one configuration and pick the iteration by validation score."""
    test_curve: list[float] = []

    def evaluate(e: PredictorEnsemble) -> float:
        test_curve.append(problem.score_test(e))
        return problem.score_val(e)

    _, trace = joint_denoise(problem.ensemble, cfg, evaluate)
    t = trace.best_iteration()
    return VariantResult(name, seed, test_curve[0], test_curve[t], t, test_curve)


def run_scenario(scenario: str, seeds, ablate: tuple[str, ...] = (), base: DenoiseConfig | None = None,
                 n_points: int | None = None) -> list[VariantResult]:
    """All variants of ``scenario`` for every seed, sorted by (seed, variant order)."""
    out = []
    configs = scenario_configs(scenario, ablate, base)
    for seed in sorted(seeds):
        problem = make_problem(scenario, seed, n_points)
        for name, cfg in configs.items():
            out.append(run_variant(problem, cfg, name, seed))
    return out


@dataclass
class SummaryRow:
    variant: str
    mean: float
    std: float
    offset_mean: float
    offset_std: float
    n: int


def summarize(results: list[VariantResult]) -> list[SummaryRow]:
    """Mean and std of accuracies and offsets per variant; baseline first."""
    rows = []
    seeds = sorted({r.seed for r in results})
    base = [next(r.baseline for r in results if r.seed == s) for s in seeds]
    rows.append(SummaryRow("baseline", float(np.mean(base)), float(np.std(base)), 0.0, 0.0, len(base)))
    order = list(dict.fromkeys(r.variant for r in results))
    for v in order:
        acc = np.array([r.accuracy for r in results if r.variant == v])
        off = np.array([r.offset for r in results if r.variant == v])
        rows.append(SummaryRow(v, float(acc.mean()), float(acc.std()), float(off.mean()), float(off.std()), acc.size))
    return rows


def format_table(rows: list[SummaryRow]) -> str:
    lines = [f"{'variant':<18}{'accuracy':>18}{'offset':>18}"]
    for r in rows:
        acc = f"{r.mean:.2f} ({r.std:.2f})"
        off = "" if r.variant == "baseline" else f"{r.offset_mean:+.2f} ({r.offset_std:.2f})"
        lines.append(f"{r.variant:<18}{acc:>18}{off:>18}")
    return "\n".join(lines)


def timed(fn, *args, **kwargs):
    t0 = time.perf_counter()
    out = fn(*args, **kwargs)
    return out, time.perf_counter() - t0


def finite(results: list[VariantResult]) -> bool:
    return all(math.isfinite(r.accuracy) and math.isfinite(r.baseline) for r in results)
