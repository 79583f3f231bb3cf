import json
from itertools import permutations

import pytest

from cadorder.costmodel import SyntheticCostModel
from cadorder.datagen import GenConfig, random_dataset
from cadorder.features import (
    Agg,
    FeatureDescriptor,
    FeatureSet,
    Kernel,
    brown_features,
    enumerate_descriptors,
    selected_triplet,
)
from cadorder.heuristics import Ordering, feature_matrix, lex_order
from cadorder.search import (
    dataset_digest,
    enumerate_triplets,
    evaluate_triplet,
    search_triplets,
)


def _named_pool() -> FeatureSet:
    return FeatureSet.from_descriptors(brown_features() + selected_triplet())


def _brute_force_best(fs, dataset, oracle):
    """Independent recomputation: lexicographic path per triplet, min by cost."""
    best = None
    for ids in permutations(range(len(fs.descriptors)), 3):
        triplet = tuple(fs.descriptors[i] for i in ids)
        total = 0.0
        for pr in dataset:
            total += oracle.cost(pr, lex_order(feature_matrix(triplet, pr)))
        key = (total, ids)
        if best is None or key < best:
            best = key
    return best


def test_enumerate_triplets_counts():
    for k in (3, 6, 28):
        fs = FeatureSet.from_descriptors(enumerate_descriptors()[:k])
        triplets = enumerate_triplets(fs)
        assert len(triplets) == k * (k - 1) * (k - 2)
        assert len(set(triplets)) == len(triplets)
        assert all(len(set(t)) == 3 for t in triplets)
    assert len(enumerate_triplets(FeatureSet.from_descriptors(enumerate_descriptors()[:28]))) == 19_656


def test_enumerate_triplets_requires_three():
    with pytest.raises(ValueError, match="at least 3"):
        enumerate_triplets(FeatureSet.from_descriptors(enumerate_descriptors()[:2]))


def test_evaluate_triplet_brown_on_hand_instances(problem_a, problem_b):
    syn = SyntheticCostModel()
    cand = evaluate_triplet(brown_features(), [problem_a, problem_b], syn)
    # Independent expectation: Brown orders a as x>z>y and b as x>y>z; the
    # synthetic statistic is (3,1,3) for a and (4,3,1) for b.
    assert cand.per_problem == (19.0, 23.0)
    assert cand.total_cost == 42.0
    assert not cand.uses_average


def test_evaluate_triplet_single_problem(problem_b):
    syn = SyntheticCostModel()
    cand = evaluate_triplet(selected_triplet(), [problem_b], syn)
    fm = feature_matrix(selected_triplet(), problem_b)
    assert cand.total_cost == syn.cost(problem_b, lex_order(fm))


def test_evaluate_triplet_flags_averages(problem_a):
    av = FeatureDescriptor(Kernel.DEGREE, (Agg.AV_M, Agg.SUM_P, Agg.ID, Agg.ID))
    triplet = (av, brown_features()[0], brown_features()[1])
    cand = evaluate_triplet(triplet, [problem_a], SyntheticCostModel())
    assert cand.uses_average


def test_search_matches_brute_force():
    fs = _named_pool()
    dataset = random_dataset(GenConfig(seed=0), 200)
    oracle = SyntheticCostModel()
    report = search_triplets(fs, dataset, oracle)
    assert report.triplet_count == 120
    best_cost, best_ids = _brute_force_best(fs, dataset, oracle)
    top = report.ranked[0]
    assert top["total_cost"] == best_cost
    assert tuple(top["features"]) == best_ids
    # Ranking is a total order, ascending.
    costs = [row["total_cost"] for row in report.ranked]
    assert costs == sorted(costs)


def test_search_rank1_not_worse_than_brown():
    fs = _named_pool()
    dataset = random_dataset(GenConfig(seed=3), 120)
    report = search_triplets(fs, dataset, SyntheticCostModel())
    assert report.ranked[0]["total_cost"] <= report.baseline["total_cost"]
    assert report.baseline["features"] == [0, 1, 2]


def test_search_degenerate_oracle_ties_fall_back_to_encoding(problem_a):
    class FlatOracle:
        def cost(self, pr, ordering):
            return 1.0

        def describe(self):
            return "flat"

    fs = _named_pool()
    report = search_triplets(fs, [problem_a], FlatOracle())
    ids = [tuple(row["features"]) for row in report.ranked]
    assert ids == sorted(ids)


def test_search_top_k(problem_a, problem_b):
    fs = _named_pool()
    report = search_triplets(fs, [problem_a, problem_b], SyntheticCostModel(), top_k=1)
    assert len(report.ranked) == 1
    assert report.triplet_count == 120


def test_search_jobs_deterministic():
    fs = _named_pool()
    dataset = random_dataset(GenConfig(seed=4), 60)
    serial = search_triplets(fs, dataset, SyntheticCostModel(), jobs=1)
    parallel = search_triplets(fs, dataset, SyntheticCostModel(), jobs=8)
    assert json.dumps(serial.to_json(), sort_keys=True) == json.dumps(
        parallel.to_json(), sort_keys=True
    )


def test_search_journal_resume(tmp_path):
    fs = _named_pool()
    dataset = random_dataset(GenConfig(seed=5), 40)
    oracle = SyntheticCostModel()
    journal = tmp_path / "journal.txt"
    full = search_triplets(fs, dataset, oracle, journal_path=journal, checkpoint_every=7)
    lines = journal.read_text().splitlines()
    assert len(lines) == 120

    # Simulate a kill at 50%: replay only half the journal, then resume.
    half = tmp_path / "half.txt"
    half.write_text("\n".join(lines[:60]) + "\n")
    resumed = search_triplets(fs, dataset, oracle, journal_path=half)
    assert json.dumps(resumed.to_json(), sort_keys=True) == json.dumps(
        full.to_json(), sort_keys=True
    )
    assert len(half.read_text().splitlines()) == 120


def test_report_csv_shape(problem_a, problem_b):
    fs = _named_pool()
    report = search_triplets(fs, [problem_a, problem_b], SyntheticCostModel(), top_k=3)
    lines = report.to_csv().splitlines()
    assert lines[0] == "rank,f1,f2,f3,total_cost,wins_vs_brown"
    assert len(lines) == 4
    first = lines[1].split(",")
    assert first[0] == "1"
    assert float(first[4]) == report.ranked[0]["total_cost"]


def test_report_json_round_trip(tmp_path, problem_a):
    fs = _named_pool()
    report = search_triplets(fs, [problem_a], SyntheticCostModel(), top_k=2)
    path = tmp_path / "report.json"
    report.save_json(path)
    payload = json.loads(path.read_text())
    assert payload["pool_size"] == 6
    assert payload["dataset_id"] == dataset_digest([problem_a])
    assert payload["oracle_id"].startswith("synthetic")
