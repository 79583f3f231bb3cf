import math
import random
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import problem_instances
from cadorder.datagen import GenConfig, random_dataset
from cadorder.features import brown_features, selected_triplet
from cadorder.heuristics import (
    BaseWeightError,
    FeatureMatrix,
    HeuristicNetwork,
    Ordering,
    check_equivalence,
    feature_matrix,
    layer1_forward,
    layer2_scores,
    lex_order,
    nn_order,
    order_by_scores,
    parse_ordering,
    permutation_weights,
    select_base_weight,
)
from cadorder.polyset import (
    Monomial,
    Polynomial,
    ProblemInstance,
    parse_problem,
)


def test_ordering_validates_permutation():
    with pytest.raises(ValueError):
        Ordering((0, 0, 1))


def test_ordering_names_and_parse(problem_a):
    ordering = Ordering((0, 2, 1))
    assert ordering.names(problem_a) == "x>z>y"
    assert parse_ordering("x>z>y", problem_a) == ordering
    assert ordering.reversed().perm == (1, 2, 0)
    with pytest.raises(ValueError, match="unknown variable"):
        parse_ordering("x>q>y", problem_a)


def test_select_base_weight_examples(problem_a, problem_b):
    triplet = brown_features()
    assert select_base_weight([problem_a], triplet) == 5
    assert select_base_weight([problem_b], triplet) == 5
    constant = parse_problem("vars: x\n1")
    assert select_base_weight([constant], triplet) == 2


def test_select_base_weight_warns_on_fractional(problem_a):
    from cadorder.features import Agg, FeatureDescriptor, Kernel

    av = FeatureDescriptor(Kernel.DEGREE, (Agg.AV_M, Agg.SUM_P, Agg.ID, Agg.ID))
    triplet = (av, brown_features()[1], brown_features()[2])
    with pytest.warns(UserWarning, match="fractional"):
        w = select_base_weight([problem_a], triplet)
    assert w == 5  # max is still the integer 3 from the other features


def test_lex_order_examples(problem_a, problem_b):
    triplet = brown_features()
    assert lex_order(feature_matrix(triplet, problem_b)).names(problem_b) == "x>y>z"
    assert lex_order(feature_matrix(triplet, problem_a)).names(problem_a) == "x>z>y"
    tied = FeatureMatrix(((1, 1, 1), (1, 1, 1), (1, 1, 1)))
    assert lex_order(tied).perm == (0, 1, 2)


def test_lex_order_randomized_tie_break(problem_a):
    tied = FeatureMatrix(((2, 2, 2), (1, 1, 1), (2, 2, 2)))
    seen = set()
    for seed in range(8):
        ordering = lex_order(tied, tie_rng=random.Random(seed))
        seen.add(ordering.perm)
        assert ordering.perm[-1] == 1  # the strictly smaller row stays last
    assert seen == {(0, 2, 1), (2, 0, 1)}


def test_layer1_forward_examples(problem_a, problem_b):
    net = HeuristicNetwork(brown_features(), 5)
    assert layer1_forward(net, feature_matrix(net.triplet, problem_b)) == (92, 62, 36)
    assert layer1_forward(net, feature_matrix(net.triplet, problem_a)) == (67, 41, 67)
    zero = FeatureMatrix(((0, 0, 0), (0, 0, 0)))
    assert layer1_forward(net, zero) == (0, 0)


def test_layer2_scores_examples():
    scores = layer2_scores((92, 62, 36))
    assert max(scores) == 3 * 92 + 2 * 62 + 36 == 436
    assert scores.index(436) == 0  # neuron of ordering (0, 1, 2)
    assert layer2_scores((0, 0, 0)) == (0,) * 6
    best = max(range(6), key=lambda i: layer2_scores((1, 2, 3))[i])
    assert list(permutation_weights(3))[best][0] == (2, 1, 0)


def test_layer2_explicit_limit():
    with pytest.raises(ValueError, match="limited"):
        permutation_weights(9)


def test_nn_order_examples(problem_a, problem_b):
    net = HeuristicNetwork(brown_features(), 5)
    assert nn_order(net, problem_b).names(problem_b) == "x>y>z"
    assert nn_order(net, problem_a).names(problem_a) == "x>z>y"
    single = parse_problem("vars: x\nx^2 + 1")
    net1 = HeuristicNetwork(brown_features(), select_base_weight([single], brown_features()))
    assert nn_order(net1, single).perm == (0,)


def test_nn_order_rejects_undersized_weight(problem_b):
    net = HeuristicNetwork(brown_features(), 2)
    with pytest.raises(BaseWeightError) as err:
        nn_order(net, problem_b)
    assert err.value.value == 3
    assert err.value.w == 2


def test_check_equivalence_hand_instances(problem_a, problem_b, problem_c):
    report = check_equivalence([problem_a, problem_b, problem_c])
    assert report.total == 3
    assert report.ok


def test_check_equivalence_scaled_degrees(problem_a, problem_b):
    scaled = []
    for pr in (problem_a, problem_b):
        polys = tuple(
            Polynomial(tuple(Monomial(m.coeff, tuple(d * 5 for d in m.degrees)) for m in p.monomials))
            for p in pr.polynomials
        )
        scaled.append(ProblemInstance(pr.variables, polys, pr.id))
    report = check_equivalence(scaled)
    assert report.ok


def test_check_equivalence_force_w_reports_violation(problem_b):
    report = check_equivalence([problem_b], force_w=2)
    assert not report.ok
    assert report.violations[0]["problem_id"] == "b"
    assert report.mismatches == []


def test_check_equivalence_parallel_agrees():
    problems = random_dataset(GenConfig(seed=7), 60)
    serial = check_equivalence(problems, jobs=1)
    parallel = check_equivalence(problems, jobs=8)
    assert serial.to_json() == parallel.to_json()


@settings(max_examples=150, deadline=None)
@given(problem_instances(min_vars=1, max_vars=4), st.sampled_from(["brown", "selected"]))
def test_equivalence_property(pr, which):
    triplet = brown_features() if which == "brown" else selected_triplet()
    w = select_base_weight([pr], triplet)
    net = HeuristicNetwork(triplet, w)
    assert nn_order(net, pr).perm == lex_order(feature_matrix(triplet, pr)).perm


@settings(max_examples=100, deadline=None)
@given(problem_instances(min_vars=2, max_vars=3), st.integers(0, 20))
def test_equivalence_holds_for_any_admissible_w(pr, slack):
    triplet = brown_features()
    w = select_base_weight([pr], triplet) + slack
    net = HeuristicNetwork(triplet, w)
    assert nn_order(net, pr).perm == lex_order(feature_matrix(triplet, pr)).perm


def _rational_vectors(max_n=4):
    return st.integers(2, max_n).flatmap(
        lambda n: st.lists(
            st.fractions(min_value=-50, max_value=50, max_denominator=8),
            min_size=n,
            max_size=n,
        )
    )


@settings(max_examples=200, deadline=None)
@given(_rational_vectors())
def test_rearrangement_argmax_equals_sort(y):
    scores = layer2_scores(y)
    best = max(range(len(scores)), key=lambda i: (scores[i], -i))
    perms = [perm for perm, _ in permutation_weights(len(y))]
    assert perms[best] == order_by_scores(y).perm


@settings(max_examples=100, deadline=None)
@given(_rational_vectors(max_n=3), st.integers(0, 2), st.integers(0, 2))
def test_rearrangement_with_forced_ties(y, i, j):
    y = list(y)
    y[i % len(y)] = y[j % len(y)]  # force at least one tie
    scores = layer2_scores(y)
    best = max(range(len(scores)), key=lambda i: (scores[i], -i))
    perms = [perm for perm, _ in permutation_weights(len(y))]
    assert perms[best] == order_by_scores(y).perm


@settings(max_examples=60, deadline=None)
@given(
    problem_instances(min_vars=2, max_vars=3),
    st.fractions(min_value=Fraction(1, 7), max_value=9, max_denominator=7),
)
def test_argmax_scale_invariance(pr, scale):
    triplet = brown_features()
    w = select_base_weight([pr], triplet)
    net = HeuristicNetwork(triplet, w)
    fm = feature_matrix(triplet, pr)
    y = layer1_forward(net, fm)
    scaled = tuple(scale * yv for yv in y)
    assert order_by_scores(y).perm == order_by_scores(scaled).perm
    scores = layer2_scores(scaled)
    best = max(range(len(scores)), key=lambda i: (scores[i], -i))
    assert [p for p, _ in permutation_weights(pr.n_vars)][best] == nn_order(net, pr).perm


@settings(max_examples=150, deadline=None)
@given(problem_instances(min_vars=2, max_vars=3))
def test_monotone_dominance(pr):
    # If a row strictly beats another at the first differing feature and the
    # weight condition holds, its first-layer score is strictly larger.
    triplet = brown_features()
    w = select_base_weight([pr], triplet)
    net = HeuristicNetwork(triplet, w)
    fm = feature_matrix(triplet, pr)
    y = layer1_forward(net, fm)
    for v in range(pr.n_vars):
        for u in range(pr.n_vars):
            if fm.rows[v] > fm.rows[u]:
                assert y[v] > y[u]


@settings(max_examples=100, deadline=None)
@given(problem_instances(min_vars=1, max_vars=3))
def test_selected_weight_is_minimal(pr):
    triplet = brown_features()
    w = select_base_weight([pr], triplet)
    top = feature_matrix(triplet, pr).max_value()
    assert all(
        value < w - 1
        for row in feature_matrix(triplet, pr).rows
        for value in row
    )
    if top >= 1:
        assert not top < (w - 1) - 1


def test_base_weight_must_be_sane():
    with pytest.raises(ValueError):
        HeuristicNetwork(brown_features(), 1)
