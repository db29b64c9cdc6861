"""Synthetic benchmarks, evaluation metrics and dataset files.

Randomness comes from numpy's PCG64 bit generator seeded through
``SeedSequence(seed, spawn_key=(stream,))``; every logical stream (reference
bits, noise, split, ...) has its own fixed stream id, so adding a draw to one
stream never shifts another.  Gaussian variates are produced from the uniform
stream with the Box-Muller transform rather than numpy's ziggurat sampler.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal, Sequence

import numpy as np

from .errors import LabelOutOfRange, LengthMismatch, ParseError

SPLITS = ("train", "val", "test")

# stream ids
_S_REFS, _S_NOISE, _S_SPLIT, _S_LABELS, _S_ATTR, _S_RANDOM, _S_SCORES = range(7)


class SeededStream:
    """Uniform and Gaussian draws from one PCG64 stream."""

    def __init__(self, seed: int, stream: int):
        ss = np.random.SeedSequence(int(seed) & (2**64 - 1), spawn_key=(stream,))
        self._gen = np.random.Generator(np.random.PCG64(ss))

    def uniform(self, n: int) -> np.ndarray:
        """``n`` doubles in [0, 1)."""
        return self._gen.random(n)

    def normal(self, n: int) -> np.ndarray:
        """``n`` standard normals via Box-Muller on pairs of uniforms."""
        m = (n + 1) // 2
        u = self.uniform(2 * m)
        u1 = 1.0 - u[:m]  # (0, 1]
        u2 = u[m:]
        r = np.sqrt(-2.0 * np.log(u1))
        z = np.concatenate([r * np.cos(2.0 * np.pi * u2), r * np.sin(2.0 * np.pi * u2)])
        return z[:n]

    def integers(self, n: int, high: int) -> np.ndarray:
        """``n`` integers uniform in ``[0, high)``."""
        return np.minimum((self.uniform(n) * high).astype(np.int64), high - 1)

    def permutation(self, n: int) -> np.ndarray:
        return np.argsort(self.uniform(n), kind="stable")


@dataclass
class Dataset:
    target: np.ndarray
    references: list[np.ndarray]
    split: np.ndarray
    ground_truth: np.ndarray | None = None
    labels: np.ndarray | None = None
    name: str = ""

    def __post_init__(self):
        self.target = np.asarray(self.target, dtype=float)
        self.references = [np.asarray(r, dtype=float) for r in self.references]
        self.split = np.asarray(self.split, dtype=object)
        n = self.target.size
        if any(r.size != n for r in self.references) or self.split.size != n:
            raise LengthMismatch("target, references and split must share N")
        if self.ground_truth is not None:
            self.ground_truth = np.asarray(self.ground_truth, dtype=float)
            if self.ground_truth.size != n:
                raise LengthMismatch("ground truth must have N entries")
        bad = set(self.split.tolist()) - set(SPLITS)
        if bad:
            raise ValueError(f"unknown split names {sorted(bad)}")

    @property
    def n_points(self) -> int:
        return self.target.size

    def mask(self, name: str) -> np.ndarray:
        return self.split == name


@dataclass
class MetricReport:
    kendall_x100: float
    classification_accuracy_pct: float | None = None
    curve: list[float] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "kendall_x100": self.kendall_x100,
            "classification_accuracy_pct": self.classification_accuracy_pct,
            "curve": list(self.curve),
        }


# ---------------------------------------------------------------------------
# Generators
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class ToySpec:
    n_points: int = 100
    noise_std: float = 1.0
    mode: Literal["difference", "xor"] = "difference"
    seed: int = 0

    def __post_init__(self):
        if self.n_points < 2 or self.noise_std < 0:
            raise ValueError("need n_points >= 2 and noise_std >= 0")
        if self.mode not in ("difference", "xor"):
            raise ValueError(f"unknown toy mode {self.mode!r}")


def half_split(n: int, seed: int) -> np.ndarray:
    """Random even split of the points into ``val`` and ``test``."""
    perm = SeededStream(seed, _S_SPLIT).permutation(n)
    split = np.empty(n, dtype=object)
    split[perm[: n // 2]] = "val"
    split[perm[n // 2:]] = "test"
    return split


def gen_toy(spec: ToySpec) -> Dataset:
    """Two random binary references and a noisy target built from them."""
    bits = SeededStream(spec.seed, _S_REFS).uniform(2 * spec.n_points) < 0.5
    g1 = bits[: spec.n_points].astype(float)
    g2 = bits[spec.n_points:].astype(float)
    gt = g1 - g2 if spec.mode == "difference" else np.logical_xor(g1, g2).astype(float)
    f0 = gt + spec.noise_std * SeededStream(spec.seed, _S_NOISE).normal(spec.n_points)
    return Dataset(f0, [g1, g2], half_split(spec.n_points, spec.seed), ground_truth=gt,
                   name=f"toy-{spec.mode}")


def _class_profiles(stream: SeededStream, n_attrs: int, n_classes: int) -> np.ndarray:
    """Monotone class-level attribute strengths, one row per attribute.

    Each attribute is a cumulative sum of positive random increments over the
    class index, with a random direction.
    """
    inc = stream.uniform(n_attrs * n_classes).reshape(n_attrs, n_classes) + 0.1
    prof = np.cumsum(inc, axis=1)
    flip = stream.uniform(n_attrs) < 0.5
    prof[flip] = prof[flip][:, ::-1]
    return prof


def gen_attribute_benchmark(n_points: int = 300, n_classes: int = 8, n_informative: int = 5,
                            n_random: int = 8, noise_std: float = 0.5, seed: int = 0) -> Dataset:
    """Class-derived attributes: one noisy target plus informative and random references.

    Labels are uniform over classes.  The target and the informative
    references are monotone functions of the class index (their own random
    profiles) plus Gaussian noise of ``noise_std``; random references are pure
    standard-normal noise.  ``ground_truth`` is the noise-free target profile.
    """
    if min(n_points, n_classes, n_informative) < 1 or n_random < 0 or noise_std < 0:
        raise ValueError("counts must be positive and noise_std non-negative")
    labels = SeededStream(seed, _S_LABELS).integers(n_points, n_classes)
    prof = _class_profiles(SeededStream(seed, _S_ATTR), n_informative + 1, n_classes)
    noise = SeededStream(seed, _S_NOISE).normal(n_points * (n_informative + 1)).reshape(n_informative + 1, n_points)
    gt = prof[0, labels]
    target = gt + noise_std * noise[0]
    refs = [prof[j, labels] + noise_std * noise[j] for j in range(1, n_informative + 1)]
    rnd = SeededStream(seed, _S_RANDOM).normal(n_points * n_random).reshape(n_random, n_points) if n_random else []
    refs += [r for r in rnd]
    return Dataset(target, refs, half_split(n_points, seed), ground_truth=gt, labels=labels,
                   name="attributes")


@dataclass
class MulticlassBenchmark:
    scores: np.ndarray  # N x H initial class scores (logits)
    rank_refs: np.ndarray  # N x R
    labels: np.ndarray
    split: np.ndarray


def gen_multiclass_benchmark(n_points: int = 300, n_classes: int = 3, n_attrs: int = 4,
                             score_noise: float = 1.5, attr_noise: float = 0.3, seed: int = 0) -> MulticlassBenchmark:
    """Noisy classifier logits plus class-generated attribute references.

    Attribute ``j`` of a point of class ``c`` is ``P[j, c] + attr_noise * z``
    with a random class profile ``P[j]`` (not necessarily monotone, so that the
    attributes jointly separate the classes).  Scores are the logits
    ``2 * onehot + score_noise * z``; softmax-normalized columns would make
    every class column an exact function of the others.
    """
    labels = SeededStream(seed, _S_LABELS).integers(n_points, n_classes)
    prof = SeededStream(seed, _S_ATTR).uniform(n_attrs * n_classes).reshape(n_attrs, n_classes)
    z = SeededStream(seed, _S_NOISE).normal(n_attrs * n_points).reshape(n_attrs, n_points)
    refs = np.column_stack([prof[j, labels] + attr_noise * z[j] for j in range(n_attrs)])
    logits = 2.0 * np.eye(n_classes)[labels]
    logits = logits + score_noise * SeededStream(seed, _S_SCORES).normal(n_points * n_classes).reshape(n_points, n_classes)
    return MulticlassBenchmark(logits, refs, labels, half_split(n_points, seed))


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------
def pair_counts(a, b) -> tuple[int, int]:
    """Concordant and discordant pair counts by brute force over all i < j."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise LengthMismatch(f"vectors must have equal 1-D shapes, got {a.shape} and {b.shape}")
    if a.size < 2:
        raise LengthMismatch("need at least two points")
    conc = disc = 0
    for i in range(a.size - 1):
        s = np.sign(a[i + 1:] - a[i]) * np.sign(b[i + 1:] - b[i])
        conc += int(np.count_nonzero(s > 0))
        disc += int(np.count_nonzero(s < 0))
    return conc, disc


def kendall_x100(a, b) -> float:
    """100 x (concordant - discordant) / (concordant + discordant).

    Pairs tied in either vector are left out of both counts; returns 0 when no
    pair is comparable.
    """
    conc, disc = pair_counts(a, b)
    total = conc + disc
    if total == 0:
        return 0.0
    return 100.0 * (conc - disc) / total


def classification_accuracy(pred_columns, labels) -> float:
    """Percent of rows whose argmax column (lowest index on ties) equals the label."""
    if isinstance(pred_columns, (list, tuple)):
        scores = np.column_stack([np.asarray(c, dtype=float) for c in pred_columns])
    else:
        scores = np.asarray(pred_columns, dtype=float)
    labels = np.asarray(labels)
    if scores.ndim != 2 or scores.shape[0] != labels.size:
        raise LengthMismatch("need an N x H score matrix and N labels")
    if labels.size and (labels.min() < 0 or labels.max() >= scores.shape[1]):
        raise LabelOutOfRange(f"labels must lie in [0, {scores.shape[1]})")
    pred = np.argmax(scores, axis=1)
    return 100.0 * float(np.mean(pred == labels))


# ---------------------------------------------------------------------------
# Files
# ---------------------------------------------------------------------------
def _fmt(x: float) -> str:
    return repr(float(x))


def dataset_to_csv(ds: Dataset) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["id", "split", "gt", "target"] + [f"ref_{i + 1}" for i in range(len(ds.references))])
    for i in range(ds.n_points):
        gt = "" if ds.ground_truth is None else _fmt(ds.ground_truth[i])
        w.writerow([i, ds.split[i], gt, _fmt(ds.target[i])] + [_fmt(r[i]) for r in ds.references])
    return buf.getvalue()


def save_dataset(path, ds: Dataset) -> None:
    Path(path).write_text(dataset_to_csv(ds), encoding="utf-8", newline="")


def _parse_float(text: str, row: int, col: str) -> float:
    try:
        val = float(text)
    except ValueError:
        raise ParseError(f"not a number: {text!r}", row=row, column=col) from None
    if not math.isfinite(val):
        raise ParseError(f"non-finite value {text!r}", row=row, column=col)
    return val


def parse_dataset(text: str, name: str = "") -> Dataset:
    """Parse the ``id,split,gt,target,ref_1..ref_R`` CSV schema.

    Row numbers in errors are 1-based file lines (the header is line 1).
    """
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError("empty file", row=1) from None
    header = [h.strip() for h in header]
    for col in ("id", "split", "gt", "target"):
        if col not in header:
            raise ParseError("missing required column", row=1, column=col)
    ref_cols = [h for h in header if h.startswith("ref_")]
    if not ref_cols:
        raise ParseError("missing required column", row=1, column="ref_1")
    expected = [f"ref_{i + 1}" for i in range(len(ref_cols))]
    if ref_cols != expected:
        raise ParseError(f"reference columns must be {expected}", row=1)
    pos = {h: i for i, h in enumerate(header)}

    split, gt, target, refs = [], [], [], [[] for _ in ref_cols]
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise ParseError(f"expected {len(header)} fields, got {len(row)}", row=lineno)
        s = row[pos["split"]].strip()
        if s not in SPLITS:
            raise ParseError(f"split must be one of {SPLITS}, got {s!r}", row=lineno, column="split")
        split.append(s)
        g = row[pos["gt"]].strip()
        gt.append(None if g == "" else _parse_float(g, lineno, "gt"))
        target.append(_parse_float(row[pos["target"]], lineno, "target"))
        for k, col in enumerate(ref_cols):
            refs[k].append(_parse_float(row[pos[col]], lineno, col))
    if not target:
        raise ParseError("no data rows", row=2)
    has_gt = [v is not None for v in gt]
    if any(has_gt) and not all(has_gt):
        missing = has_gt.index(False) + 2
        raise ParseError("ground truth must be given for all rows or none", row=missing, column="gt")
    ground_truth = np.array(gt, dtype=float) if all(has_gt) else None
    return Dataset(np.array(target), [np.array(r) for r in refs], np.array(split, dtype=object),
                   ground_truth=ground_truth, name=name)


def load_dataset(path) -> Dataset:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot read dataset {path}: {exc}") from exc
    return parse_dataset(text, name=path.stem)


def results_csv(per_iteration: dict[str, Sequence[float]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["iteration", "metric", "value"])
    for metric in sorted(per_iteration):
        for t, v in enumerate(per_iteration[metric]):
            w.writerow([t, metric, _fmt(v)])
    return buf.getvalue()


def save_results(path, report: MetricReport, per_iteration: dict[str, Sequence[float]],
                 config: dict, seed: int | None = None) -> tuple[Path, Path]:
    """Write ``<path>.csv`` (iteration,metric,value) and ``<path>.json`` summary."""
    base = Path(path)
    if base.suffix in (".csv", ".json"):
        base = base.with_suffix("")
    csv_path, json_path = base.with_suffix(".csv"), base.with_suffix(".json")
    summary = {
        "config": config,
        "per_iteration": {k: [float(x) for x in v] for k, v in sorted(per_iteration.items())},
        "final_metrics": report.as_dict(),
        "seed": seed,
    }
    csv_path.write_text(results_csv(per_iteration), encoding="utf-8", newline="")
    json_path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return csv_path, json_path
