"""Batch command-line front end.

Commands: ``toygen``, ``attrgen``, ``denoise``, ``ard`` and ``bench``.  Every
command writes its output files plus a ``<output>.manifest.json`` run manifest
and prints the manifest (with the wall-clock duration) to stdout.  Output files
never contain timings, so identical flags give byte-identical files.

Exit codes: 0 success, 2 usage, 3 I/O, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .bench import (
    Dataset,
    MetricReport,
    ToySpec,
    gen_attribute_benchmark,
    gen_toy,
    kendall_x100,
    load_dataset,
    save_dataset,
    save_results,
)
from .core import inverse_normalize
from .denoise import DenoiseConfig, PredictorEnsemble, joint_denoise, tune
from .errors import NumericalError, ParseError, PredCombError
from .relevance import ArdConfig, optimize_relevance
from .runner import SCENARIOS, finite, format_table, run_scenario, summarize

log = logging.getLogger("predcomb")

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_NUMERICAL = 0, 2, 3, 4

DEFAULT_SIGMA_SQ_GRID = (1e-3, 1e-2, 1e-1, 1.0)
DEFAULT_SIGMA_K_SQ_GRID = (0.1, 1.0, 10.0)
DEFAULT_LAMBDA_J_GRID = (0.1, 1.0, 10.0)


class UsageError(Exception):
    pass


@dataclass
class RunManifest:
    command: str
    config: dict
    seed: int | None
    inputs: list[str] = field(default_factory=list)
    outputs: list[str] = field(default_factory=list)
    duration_s: float | None = None

    def to_json(self, with_duration: bool = True) -> str:
        d = asdict(self)
        if not with_duration:
            d.pop("duration_s")
        return json.dumps(d, indent=2, sort_keys=True)


def _write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8", newline="")


def _manifest_path(prefix: Path) -> Path:
    return prefix.with_name(prefix.name + ".manifest.json")


def _prefix(path: str) -> Path:
    p = Path(path)
    return p.with_suffix("") if p.suffix in (".csv", ".json") else p


def _grid_text(values: Sequence[float]) -> str:
    return ",".join(f"{v:g}" for v in values)


def _floats(text: str) -> tuple[float, ...]:
    try:
        vals = tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("grid must contain at least one value")
    return vals


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------
def cmd_toygen(args) -> RunManifest:
    spec = ToySpec(n_points=args.n, noise_std=args.noise_std, mode=args.mode, seed=args.seed)
    out = Path(args.output)
    _write_text(out, "")  # surface I/O problems before generating
    save_dataset(out, gen_toy(spec))
    return RunManifest("toygen", asdict(spec), args.seed, [], [str(out)])


def cmd_attrgen(args) -> RunManifest:
    cfg = dict(n_points=args.n, n_classes=args.classes, n_informative=args.informative,
               n_random=args.random, noise_std=args.noise_std, seed=args.seed)
    ds = gen_attribute_benchmark(**cfg)
    out = Path(args.output)
    _write_text(out, "")
    save_dataset(out, ds)
    return RunManifest("attrgen", cfg, args.seed, [], [str(out)])


def _denoise_config(args) -> DenoiseConfig:
    return DenoiseConfig(
        algo=args.algo, sigma_sq=args.sigma_sq, sigma_k_sq=args.sigma_k_sq, lambda_j=args.lambda_j,
        n_iters=args.iters, n_basis=args.n_basis, joint=args.joint, use_ard=not args.no_ard,
        relative_bandwidth=not args.absolute_bandwidth, sigma_o_sq=args.sigma_o_sq, lambda_o=args.lambda_o,
    )


def _kendall_curve(trace, ds: Dataset, mask: np.ndarray | None = None) -> list[float]:
    gt = ds.ground_truth
    sel = slice(None) if mask is None else mask
    return [kendall_x100(s[0][sel], gt[sel]) for s in trace.snapshots]


def cmd_denoise(args) -> RunManifest:
    ds = load_dataset(args.dataset)
    try:
        cfg = _denoise_config(args)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    ens = PredictorEnsemble.from_raw([ds.target], ds.references)
    tuned = None
    if args.tune:
        if ds.ground_truth is None:
            raise UsageError("--tune needs a dataset with ground truth (gt column)")
        val = ds.mask("val")
        if val.sum() < 2:
            raise UsageError("--tune needs at least two rows with split 'val'")
        gt_val = ds.ground_truth[val]
        tuned = tune(ens, cfg, lambda e: kendall_x100(e.members[0][val], gt_val),
                     args.grid_sigma_sq, args.grid_sigma_k_sq, args.grid_lambda_j)
        cfg, trace = tuned.config, tuned.trace
        final = trace.snapshots[tuned.iteration][0]
    else:
        _, trace = joint_denoise(ens, cfg)
        final = trace.snapshots[-1][0]
    restored = inverse_normalize(final, ens.scale_shifts[0])

    prefix = _prefix(args.output)
    out_csv = prefix.with_suffix(".csv")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["id", "split", "denoised"])
    for i, v in enumerate(restored):
        w.writerow([i, ds.split[i], repr(float(v))])
    _write_text(out_csv, buf.getvalue())

    per_iteration: dict[str, list[float]] = {}
    kendall = float("nan")
    if ds.ground_truth is not None:
        per_iteration["kendall_x100"] = _kendall_curve(trace, ds)
        kendall = kendall_x100(final, ds.ground_truth)
        for name in ("val", "test"):
            m = ds.mask(name)
            if m.sum() >= 2:
                per_iteration[f"kendall_x100_{name}"] = _kendall_curve(trace, ds, m)
    report = MetricReport(kendall, None, per_iteration.get("kendall_x100", []))
    config = cfg.as_dict()
    if tuned is not None:
        config["tuned_iteration"] = tuned.iteration
        config["tune_grid"] = {"sigma_sq": list(args.grid_sigma_sq), "sigma_k_sq": list(args.grid_sigma_k_sq),
                               "lambda_j": list(args.grid_lambda_j)}
    metrics_prefix = prefix.with_name(prefix.name + "_metrics")
    m_csv, m_json = save_results(metrics_prefix, report, per_iteration, config, args.seed)
    for warning in sorted(set(trace.warnings)):
        log.warning(warning)
    if ds.ground_truth is not None:
        print(f"final kendall_x100 {kendall:.4f}")
    return RunManifest("denoise", config, args.seed, [str(args.dataset)], [str(out_csv), str(m_csv), str(m_json)])


def cmd_ard(args) -> RunManifest:
    ds = load_dataset(args.dataset)
    if args.lambda_noise <= 0:
        raise UsageError("--lambda-noise must be positive")
    ens = PredictorEnsemble.from_raw([ds.target], ds.references)
    g = ens.others(0)
    sigma = optimize_relevance(g, ens.members[0], ArdConfig(lambda_noise=args.lambda_noise))
    norm = sigma / sigma.sum()
    prefix = _prefix(args.output)
    out_csv = prefix.with_suffix(".csv")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["reference", "weight_normalized", "sigma_l"])
    for i, (a, b) in enumerate(zip(norm, sigma)):
        w.writerow([f"ref_{i + 1}", repr(float(a)), repr(float(b))])
    _write_text(out_csv, buf.getvalue())
    for i, v in enumerate(norm):
        print(f"ref_{i + 1} {v:.6f}")
    config = {"lambda_noise": args.lambda_noise, "informative": args.informative}
    if args.informative is not None:
        k = args.informative
        if not 0 < k < norm.size:
            raise UsageError("--informative must lie strictly between 0 and the number of references")
        separated = bool(norm[:k].mean() > norm[k:].mean())
        print(f"informative_mean {norm[:k].mean():.6f} random_mean {norm[k:].mean():.6f} separated {separated}")
    return RunManifest("ard", config, None, [str(args.dataset)], [str(out_csv)])


def cmd_bench(args) -> RunManifest:
    if args.seeds < 1:
        raise UsageError("--seeds must be at least 1")
    ablate = tuple(dict.fromkeys(args.ablate or ()))
    base = DenoiseConfig(n_iters=args.iters, n_basis=args.n_basis)
    seeds = range(args.seed, args.seed + args.seeds)
    results = run_scenario(args.scenario, seeds, ablate, base, args.n)
    rows = summarize(results)
    print(format_table(rows))
    if not finite(results):
        raise NumericalError("benchmark produced non-finite accuracies")

    prefix = _prefix(args.output or f"bench_{args.scenario}")
    out_csv = prefix.with_suffix(".csv")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["variant", "accuracy_mean", "accuracy_std", "offset_mean", "offset_std", "n"])
    for r in rows:
        w.writerow([r.variant, repr(r.mean), repr(r.std), repr(r.offset_mean), repr(r.offset_std), r.n])
    _write_text(out_csv, buf.getvalue())
    per_seed = prefix.with_name(prefix.name + "_seeds.csv")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["seed", "variant", "baseline", "accuracy", "offset", "iteration"])
    for r in results:
        w.writerow([r.seed, r.variant, repr(r.baseline), repr(r.accuracy), repr(r.offset), r.iteration])
    _write_text(per_seed, buf.getvalue())
    config = {"scenario": args.scenario, "seeds": list(seeds), "ablate": list(ablate),
              "n_points": args.n, "base": base.as_dict()}
    return RunManifest("bench", config, args.seed, [], [str(out_csv), str(per_seed)])


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------
def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    p = argparse.ArgumentParser(prog="predcomb", description="Improve a target predictor from reference predictors.",
                                formatter_class=fmt)
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("toygen", help="generate a toy dataset CSV", formatter_class=fmt)
    t.add_argument("--mode", choices=("difference", "xor"), default="difference", help="target construction")
    t.add_argument("--n", type=int, default=100, help="number of points")
    t.add_argument("--noise-std", type=float, default=1.0, help="std of the Gaussian target noise")
    t.add_argument("--seed", type=int, default=0, help="random seed")
    t.add_argument("-o", "--output", default="toy.csv", help="dataset CSV path")
    t.set_defaults(func=cmd_toygen)

    a = sub.add_parser("attrgen", help="generate a class-derived attribute dataset CSV", formatter_class=fmt)
    a.add_argument("--n", type=int, default=300, help="number of points")
    a.add_argument("--classes", type=int, default=8, help="number of latent classes")
    a.add_argument("--informative", type=int, default=5, help="informative references (listed first)")
    a.add_argument("--random", type=int, default=8, help="pure-noise references (listed last)")
    a.add_argument("--noise-std", type=float, default=0.5, help="attribute observation noise")
    a.add_argument("--seed", type=int, default=0, help="random seed")
    a.add_argument("-o", "--output", default="attr.csv", help="dataset CSV path")
    a.set_defaults(func=cmd_attrgen)

    d = sub.add_parser("denoise", help="denoise the target column of a dataset CSV", formatter_class=fmt)
    d.add_argument("dataset", help="dataset CSV (id,split,gt,target,ref_1..)")
    d.add_argument("--algo", choices=("npc", "lpc", "opc"), default="npc", help="denoising algorithm")
    d.add_argument("--sigma-sq", type=float, default=0.1, help="GP noise level")
    d.add_argument("--sigma-k-sq", type=float, default=1.0, help="kernel bandwidth (multiplier of the median heuristic)")
    d.add_argument("--lambda-j", type=float, default=1.0, help="predictability weight")
    d.add_argument("--iters", type=int, default=20, help="denoising iterations")
    d.add_argument("--n-basis", type=int, default=300, help="Nystrom basis size")
    d.add_argument("--joint", action="store_true", help="also denoise the references")
    d.add_argument("--no-ard", action="store_true", help="isotropic kernel instead of ARD weights")
    d.add_argument("--absolute-bandwidth", action="store_true", help="use --sigma-k-sq as an absolute bandwidth")
    d.add_argument("--sigma-o-sq", type=float, default=1.0, help="opc similarity bandwidth")
    d.add_argument("--lambda-o", type=float, default=1.0, help="opc reference weight")
    d.add_argument("--tune", action="store_true", help="grid search on the val split")
    d.add_argument("--grid-sigma-sq", type=_floats, default=_grid_text(DEFAULT_SIGMA_SQ_GRID), help="comma-separated --tune grid")
    d.add_argument("--grid-sigma-k-sq", type=_floats, default=_grid_text(DEFAULT_SIGMA_K_SQ_GRID), help="comma-separated --tune grid (median-heuristic multipliers)")
    d.add_argument("--grid-lambda-j", type=_floats, default=_grid_text(DEFAULT_LAMBDA_J_GRID), help="comma-separated --tune grid")
    d.add_argument("--seed", type=int, default=None, help="recorded in the manifest")
    d.add_argument("-o", "--output", default="denoised.csv", help="denoised CSV path; metrics go to <stem>_metrics.csv/.json")
    d.set_defaults(func=cmd_denoise)

    r = sub.add_parser("ard", help="relevance weights of the references for the target", formatter_class=fmt)
    r.add_argument("dataset", help="dataset CSV")
    r.add_argument("--lambda-noise", type=float, default=0.1, help="noise level of the marginal likelihood")
    r.add_argument("--informative", type=int, default=None,
                   help="treat the first K references as informative and report the separation flag")
    r.add_argument("-o", "--output", default="ard.csv", help="weights CSV path")
    r.set_defaults(func=cmd_ard)

    b = sub.add_parser("bench", help="seeded benchmark of baseline/OPC/LPC/NPC", formatter_class=fmt)
    b.add_argument("scenario", choices=SCENARIOS, help="benchmark scenario")
    b.add_argument("--seeds", type=int, default=10, help="number of seeds")
    b.add_argument("--seed", type=int, default=0, help="first seed")
    b.add_argument("--ablate", action="append", choices=("joint", "ard"), help="add ablation variants")
    b.add_argument("--iters", type=int, default=20, help="denoising iterations")
    b.add_argument("--n-basis", type=int, default=300, help="Nystrom basis size")
    b.add_argument("--n", type=int, default=None, help="points per dataset (scenario default if omitted)")
    b.add_argument("-o", "--output", default=None, help="output prefix (default bench_<scenario>)")
    b.set_defaults(func=cmd_bench)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    t0 = time.perf_counter()
    try:
        manifest = args.func(args)
        out = Path(manifest.outputs[0]) if manifest.outputs else Path(args.command)
        mpath = _manifest_path(_prefix(str(out)))
        manifest.outputs.append(str(mpath))
        _write_text(mpath, manifest.to_json(with_duration=False) + "\n")
    except UsageError as exc:
        print(f"predcomb {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ParseError, OSError) as exc:
        print(f"predcomb {args.command}: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except NumericalError as exc:
        print(f"predcomb {args.command}: numerical failure in {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (PredCombError, ValueError) as exc:
        print(f"predcomb {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    manifest.duration_s = round(time.perf_counter() - t0, 6)
    print(manifest.to_json())
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
