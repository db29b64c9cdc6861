from __future__ import annotations

import json

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy import stats

from predcomb.bench import (
    Dataset,
    MetricReport,
    SeededStream,
    ToySpec,
    classification_accuracy,
    dataset_to_csv,
    gen_attribute_benchmark,
    gen_multiclass_benchmark,
    gen_toy,
    kendall_x100,
    load_dataset,
    pair_counts,
    parse_dataset,
    save_dataset,
    save_results,
)
from predcomb.errors import LabelOutOfRange, LengthMismatch, ParseError

small_ints = arrays(np.float64, st.integers(2, 30), elements=st.integers(-5, 5).map(float))


def _loop_kendall(a, b):
    c = d = 0
    for i in range(len(a)):
        for j in range(i + 1, len(a)):
            s = (a[i] - a[j]) * (b[i] - b[j])
            c += s > 0
            d += s < 0
    return 0.0 if c + d == 0 else 100.0 * (c - d) / (c + d)


# -- random streams ----------------------------------------------------------
def test_stream_determinism_and_independence():
    a = SeededStream(3, 0).uniform(10)
    assert np.array_equal(a, SeededStream(3, 0).uniform(10))
    assert not np.array_equal(a, SeededStream(3, 1).uniform(10))
    assert not np.array_equal(a, SeededStream(4, 0).uniform(10))


def test_box_muller_moments():
    z = SeededStream(0, 0).normal(200_001)
    assert z.size == 200_001
    assert abs(z.mean()) < 0.01 and abs(z.std() - 1.0) < 0.01
    assert stats.kstest(z, "norm").pvalue > 1e-3


def test_integers_and_permutation():
    s = SeededStream(1, 2)
    ints = s.integers(1000, 7)
    assert ints.min() >= 0 and ints.max() <= 6
    assert sorted(SeededStream(1, 2).permutation(20).tolist()) == list(range(20))


# -- generators --------------------------------------------------------------
def test_toy_difference_construction():
    ds = gen_toy(ToySpec(n_points=50, noise_std=0.0, seed=2))
    g1, g2 = ds.references
    assert set(np.unique(g1)) <= {0.0, 1.0} and set(np.unique(g2)) <= {0.0, 1.0}
    assert np.array_equal(ds.ground_truth, g1 - g2)
    assert np.array_equal(ds.target, ds.ground_truth)
    assert kendall_x100(ds.target, ds.ground_truth) == 100.0


def test_toy_xor_construction():
    ds = gen_toy(ToySpec(n_points=40, mode="xor", seed=1))
    g1, g2 = ds.references
    assert np.array_equal(ds.ground_truth, np.logical_xor(g1, g2).astype(float))
    assert sorted(set(ds.split)) == ["test", "val"]


def test_toy_determinism():
    a = dataset_to_csv(gen_toy(ToySpec(seed=11)))
    assert a == dataset_to_csv(gen_toy(ToySpec(seed=11)))
    assert a != dataset_to_csv(gen_toy(ToySpec(seed=12)))


def test_toy_spec_validation():
    with pytest.raises(ValueError):
        ToySpec(n_points=1)
    with pytest.raises(ValueError):
        ToySpec(noise_std=-1.0)
    with pytest.raises(ValueError):
        ToySpec(mode="and")


def test_toy1_baseline_level():
    """Average baseline Kendall accuracy over 20 seeds should be 67.1 +- 3."""
    vals = [kendall_x100(d.target, d.ground_truth) for d in (gen_toy(ToySpec(seed=s)) for s in range(20))]
    assert abs(np.mean(vals) - 67.1) <= 3.0


def test_attribute_benchmark_informative_refs_correlate():
    ds = gen_attribute_benchmark(n_points=120, n_random=0, noise_std=0.0, seed=4)
    assert len(ds.references) == 5
    assert all(abs(kendall_x100(r, ds.target)) > 0 for r in ds.references)
    assert np.array_equal(ds.target, ds.ground_truth)


def test_attribute_benchmark_layout_and_determinism():
    ds = gen_attribute_benchmark(n_points=60, n_informative=3, n_random=2, seed=5)
    assert len(ds.references) == 5 and ds.labels.max() < 8
    again = gen_attribute_benchmark(n_points=60, n_informative=3, n_random=2, seed=5)
    assert dataset_to_csv(ds) == dataset_to_csv(again)
    with pytest.raises(ValueError):
        gen_attribute_benchmark(n_points=0)


def test_multiclass_benchmark_shapes():
    mc = gen_multiclass_benchmark(n_points=90, n_classes=3, n_attrs=4, seed=0)
    assert mc.scores.shape == (90, 3) and mc.rank_refs.shape == (90, 4)
    assert 33 < classification_accuracy(mc.scores, mc.labels) < 100


# -- Kendall -----------------------------------------------------------------
def test_kendall_examples():
    assert kendall_x100([1, 2, 3, 4], [10, 20, 30, 40]) == 100.0
    assert kendall_x100([1, 2, 3, 4], [4, 3, 2, 1]) == -100.0
    assert kendall_x100([1, 2, 3], [1, 3, 2]) == pytest.approx(33.333333, abs=1e-4)
    assert kendall_x100([1, 1, 1], [1, 2, 3]) == 0.0


def test_kendall_ties_excluded():
    # pair (0,1) is tied in a; the other two pairs are discordant
    assert pair_counts([1, 1, 2], [1, 2, 0]) == (0, 2)
    assert kendall_x100([0, 0, 1, 2], [0, 1, 2, 3]) == 100.0


def test_kendall_errors():
    with pytest.raises(LengthMismatch):
        kendall_x100([1, 2], [1, 2, 3])
    with pytest.raises(LengthMismatch):
        kendall_x100([1], [1])


@given(small_ints, st.data())
def test_kendall_matches_loop_oracle(a, data):
    b = data.draw(arrays(np.float64, a.size, elements=st.integers(-5, 5).map(float)))
    assert kendall_x100(a, b) == pytest.approx(_loop_kendall(a, b), abs=1e-12)


@given(st.integers(0, 10_000))
def test_kendall_matches_scipy_without_ties(seed):
    rng = np.random.default_rng(seed)
    a, b = rng.normal(size=25), rng.normal(size=25)
    assert kendall_x100(a, b) == pytest.approx(100 * stats.kendalltau(a, b)[0], abs=1e-9)


@given(small_ints, st.data())
def test_kendall_monotone_invariance(a, data):
    b = data.draw(arrays(np.float64, a.size, elements=st.integers(-5, 5).map(float)))
    k = kendall_x100(a, b)
    assert kendall_x100(np.exp(a / 3) + 2, b) == pytest.approx(k, abs=1e-12)
    assert kendall_x100(a, 5 * b ** 3 - 1) == pytest.approx(k, abs=1e-12)


@given(st.integers(0, 10_000))
def test_kendall_antisymmetric(seed):
    rng = np.random.default_rng(seed)
    a, b = rng.integers(0, 4, 20).astype(float), rng.normal(size=20)
    assume(len(np.unique(b)) == b.size)
    assert kendall_x100(a, -b) == pytest.approx(-kendall_x100(a, b), abs=1e-12)


def test_kendall_bounds_on_random_data(rng):
    for _ in range(20):
        v = kendall_x100(rng.integers(0, 3, 30), rng.normal(size=30))
        assert -100 <= v <= 100


# -- classification ----------------------------------------------------------
def test_classification_examples():
    labels = np.array([0, 2, 1, 2])
    assert classification_accuracy(np.eye(3)[labels], labels) == 100.0
    uniform = np.ones((4, 3))
    assert classification_accuracy(uniform, np.zeros(4, int)) == 100.0
    assert classification_accuracy(uniform, np.ones(4, int)) == 0.0
    assert classification_accuracy([np.ones(4), np.zeros(4)], np.zeros(4, int)) == 100.0
    with pytest.raises(LabelOutOfRange):
        classification_accuracy(uniform, np.array([0, 1, 3, 0]))
    with pytest.raises(LengthMismatch):
        classification_accuracy(uniform, np.zeros(3, int))


def test_classification_loop_oracle(rng):
    scores = rng.integers(0, 3, size=(200, 4)).astype(float)  # many ties
    labels = rng.integers(0, 4, size=200)
    hits = 0
    for row, lab in zip(scores, labels):
        best = 0
        for h in range(1, 4):
            if row[h] > row[best]:
                best = h
        hits += best == lab
    assert classification_accuracy(scores, labels) == 100.0 * hits / 200


# -- files -------------------------------------------------------------------
FIXTURE = """id,split,gt,target,ref_1,ref_2
0,val,1,0.5,1,0
1,test,0,-0.25,0,1
2,train,2,1e-3,1,1
"""


def test_fixture_parses_to_known_vectors():
    ds = parse_dataset(FIXTURE)
    assert ds.split.tolist() == ["val", "test", "train"]
    assert np.array_equal(ds.ground_truth, [1.0, 0.0, 2.0])
    assert np.array_equal(ds.target, [0.5, -0.25, 0.001])
    assert np.array_equal(ds.references[0], [1.0, 0.0, 1.0])
    assert np.array_equal(ds.references[1], [0.0, 1.0, 1.0])


def test_empty_gt_column_allowed():
    ds = parse_dataset("id,split,gt,target,ref_1\n0,val,,1,2\n1,val,,3,4\n")
    assert ds.ground_truth is None


@pytest.mark.parametrize("column", ["split", "target", "gt"])
def test_missing_column_named(column):
    header = [c for c in ["id", "split", "gt", "target", "ref_1"] if c != column]
    with pytest.raises(ParseError) as err:
        parse_dataset(",".join(header) + "\n")
    assert err.value.column == column and repr(column) in str(err.value)


def test_parse_errors_locate_row_and_column():
    with pytest.raises(ParseError) as err:
        parse_dataset(FIXTURE.replace("-0.25", "abc"))
    assert err.value.row == 3 and err.value.column == "target"
    with pytest.raises(ParseError) as err:
        parse_dataset(FIXTURE.replace("train", "holdout"))
    assert err.value.row == 4 and err.value.column == "split"
    with pytest.raises(ParseError):
        parse_dataset("id,split,gt,target\n")
    with pytest.raises(ParseError):
        parse_dataset("")


def test_round_trip(tmp_path):
    ds = gen_toy(ToySpec(n_points=30, seed=3))
    path = tmp_path / "toy.csv"
    save_dataset(path, ds)
    back = load_dataset(path)
    assert np.array_equal(back.target, ds.target)
    assert all(np.array_equal(a, b) for a, b in zip(back.references, ds.references))
    assert np.array_equal(back.ground_truth, ds.ground_truth)
    assert back.split.tolist() == ds.split.tolist()
    assert path.read_bytes().count(b"\r") == 0


def test_load_missing_file(tmp_path):
    with pytest.raises(OSError):
        load_dataset(tmp_path / "absent.csv")


def test_dataset_validation():
    with pytest.raises(LengthMismatch):
        Dataset(np.ones(3), [np.ones(2)], np.array(["val"] * 3))
    with pytest.raises(ValueError):
        Dataset(np.ones(2), [np.ones(2)], np.array(["val", "dev"]))


def test_save_results_schema(tmp_path):
    report = MetricReport(55.0, None, [50.0, 55.0])
    csv_path, json_path = save_results(tmp_path / "run", report, {"kendall_x100": [50.0, 55.0]},
                                       {"algo": "npc"}, seed=3)
    assert csv_path.read_text().splitlines() == ["iteration,metric,value", "0,kendall_x100,50.0",
                                                 "1,kendall_x100,55.0"]
    summary = json.loads(json_path.read_text())
    assert set(summary) == {"config", "per_iteration", "final_metrics", "seed"}
    assert summary["final_metrics"]["kendall_x100"] == 55.0 and summary["seed"] == 3
