"""Variable orderings from feature triplets, two equivalent ways.

The direct way sorts variables by their (f1, f2, f3) feature rows compared
lexicographically.  The network way encodes the same comparison as a
two-layer summation network: with a base weight w chosen so that every
feature value is below w - 1, the first-layer score

    y_v = f1(v) * w**2 + f2(v) * w + f3(v)

is a radix-w encoding of the row, so comparing scores is comparing rows
digit by digit.  The output layer has one neuron per permutation of the
variables, scoring y under the fixed weight pattern n, n-1, ..., 1 (first
position weighted n); its argmax neuron names the chosen ordering.  Both
paths share the same deterministic tie-break (ascending variable index),
so they agree exactly, ties included.

Convention: the variable with the lexicographically greatest feature row
is placed first in the ordering (see GREATEST_FIRST; the CLI can flip the
printed order with --reverse).
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from itertools import permutations

from .features import FeatureDescriptor, brown_features, eval_kernel, apply_pipeline
from .polyset import ProblemInstance

# Directional convention, recorded once: greatest feature row projects first.
GREATEST_FIRST = True

# The factorial output layer is only materialized up to this many variables;
# past it, nn_order falls back to the sort path (same result by the
# rearrangement inequality).
MAX_EXPLICIT_LAYER = 8


class BaseWeightError(ValueError):
    """A feature value breaks the base-weight condition value < w - 1."""

    def __init__(self, problem_id, variable, feature_index, value, w):
        self.problem_id = problem_id
        self.variable = variable
        self.feature_index = feature_index
        self.value = value
        self.w = w
        super().__init__(
            f"feature {feature_index} of variable {variable} is {value}, "
            f"not below w - 1 = {w - 1} (problem {problem_id!r})"
        )


@dataclass(frozen=True)
class Ordering:
    """A permutation of variable indices, first-projected variable first."""

    perm: tuple[int, ...]

    def __post_init__(self):
        if sorted(self.perm) != list(range(len(self.perm))):
            raise ValueError(f"{self.perm} is not a permutation of 0..n-1")

    def names(self, pr: ProblemInstance) -> str:
        return ">".join(pr.variables[i].name for i in self.perm)

    def reversed(self) -> Ordering:
        return Ordering(self.perm[::-1])


def parse_ordering(text: str, pr: ProblemInstance) -> Ordering:
    """Parse the ``x>y>z`` form against a problem's variable names."""
    index = {v.name: v.index for v in pr.variables}
    try:
        perm = tuple(index[name.strip()] for name in text.split(">"))
    except KeyError as e:
        raise ValueError(f"unknown variable {e.args[0]!r} in ordering {text!r}") from None
    return Ordering(perm)


@dataclass(frozen=True)
class FeatureMatrix:
    """Per-variable feature rows (n_vars x 3, exact rationals)."""

    rows: tuple[tuple, ...]

    @property
    def n_vars(self) -> int:
        return len(self.rows)

    def max_value(self):
        return max(x for row in self.rows for x in row)


def feature_matrix(triplet, pr: ProblemInstance) -> FeatureMatrix:
    """Evaluate the triplet for every variable, sharing kernel tables."""
    tables = {}
    rows = []
    for v in range(pr.n_vars):
        row = []
        for fd in triplet:
            key = (fd.kernel, v)
            table = tables.get(key)
            if table is None:
                table = tables[key] = eval_kernel(fd.kernel, pr, v)
            row.append(apply_pipeline(fd.pipeline, table))
        rows.append(tuple(row))
    return FeatureMatrix(tuple(rows))


def select_base_weight(dataset, triplet) -> int:
    """Smallest integer w with every feature value of the dataset below w - 1.

    For integer-valued features this is (max value) + 2.  Fractional
    (average-based) values still satisfy the strict bound with
    floor(max) + 2, but the unit gap the dominance argument needs may not
    hold; a warning flags that case.
    """
    dataset = list(dataset)
    if not dataset:
        raise ValueError("dataset must be nonempty")
    top = 0
    fractional = False
    for pr in dataset:
        fm = feature_matrix(triplet, pr)
        for row in fm.rows:
            for value in row:
                if isinstance(value, Fraction) and value.denominator != 1:
                    fractional = True
        top = max(top, fm.max_value())
    if fractional:
        import warnings

        warnings.warn(
            "fractional feature values: base weight guarantees the strict bound "
            "but not the unit gap; lexicographic comparison stays authoritative",
            stacklevel=2,
        )
    return math.floor(top) + 2


@dataclass(frozen=True)
class HeuristicNetwork:
    """Frozen two-layer network equivalent to lexicographic triplet ordering."""

    triplet: tuple[FeatureDescriptor, FeatureDescriptor, FeatureDescriptor]
    base_weight: int

    def __post_init__(self):
        if self.base_weight < 2:
            raise ValueError("base weight must be at least 2")

    @property
    def layer1(self) -> tuple[int, int, int]:
        w = self.base_weight
        return (w * w, w, 1)

    @classmethod
    def for_dataset(cls, dataset, triplet=None) -> HeuristicNetwork:
        triplet = tuple(triplet) if triplet is not None else brown_features()
        return cls(triplet, select_base_weight(dataset, triplet))


def layer1_forward(net: HeuristicNetwork, fm: FeatureMatrix) -> tuple:
    """First-layer scores y_v, exact."""
    w2, w, one = net.layer1
    return tuple(r[0] * w2 + r[1] * w + r[2] * one for r in fm.rows)


def permutation_weights(n: int) -> list[tuple[tuple[int, ...], tuple[int, ...]]]:
    """All (ordering, weight-vector) pairs of the output layer, lexicographic.

    The weight vector lists, per variable index, the weight that neuron
    applies: n for the ordering's first variable down to 1 for its last.
    """
    if n > MAX_EXPLICIT_LAYER:
        raise ValueError(f"explicit output layer limited to {MAX_EXPLICIT_LAYER} variables")
    out = []
    for perm in permutations(range(n)):
        weights = [0] * n
        for pos, v in enumerate(perm):
            weights[v] = n - pos
        out.append((perm, tuple(weights)))
    return out


def layer2_scores(y) -> tuple:
    """Score of every permutation neuron for first-layer output ``y``."""
    return tuple(
        sum(wv * yv for wv, yv in zip(weights, y))
        for _, weights in permutation_weights(len(y))
    )


def _order_scores(y) -> Ordering:
    """Argmax neuron, first (lexicographically smallest) on ties."""
    best = None
    best_score = None
    for perm, weights in permutation_weights(len(y)):
        score = sum(wv * yv for wv, yv in zip(weights, y))
        if best_score is None or score > best_score:
            best, best_score = perm, score
    return Ordering(best)


def order_by_scores(y) -> Ordering:
    """Descending stable sort of y; equals the argmax neuron's ordering."""
    return Ordering(tuple(sorted(range(len(y)), key=lambda v: y[v], reverse=True)))


def lex_order(fm: FeatureMatrix, tie_rng=None) -> Ordering:
    """Sort variables by feature row, lexicographically descending.

    Full ties break by ascending variable index; pass a seeded ``tie_rng``
    (random.Random) to instead shuffle within tied groups.  Randomized
    tie-break forfeits agreement with the network path.
    """
    order = list(range(fm.n_vars))
    if tie_rng is not None:
        groups: dict[tuple, list[int]] = {}
        for v in order:
            groups.setdefault(fm.rows[v], []).append(v)
        for group in groups.values():
            tie_rng.shuffle(group)
        order = [v for row in sorted(groups, reverse=True) for v in groups[row]]
        return Ordering(tuple(order))
    return Ordering(tuple(sorted(order, key=lambda v: fm.rows[v], reverse=True)))


def _check_weight(fm: FeatureMatrix, w: int, pr: ProblemInstance) -> None:
    bound = w - 1
    for v, row in enumerate(fm.rows):
        for i, value in enumerate(row):
            if not value < bound:
                raise BaseWeightError(pr.id, v, i, value, w)


def nn_order(net: HeuristicNetwork, pr: ProblemInstance) -> Ordering:
    """Ordering chosen by the network; raises BaseWeightError if w is too small."""
    fm = feature_matrix(net.triplet, pr)
    _check_weight(fm, net.base_weight, pr)
    y = layer1_forward(net, fm)
    if pr.n_vars <= MAX_EXPLICIT_LAYER:
        return _order_scores(y)
    return order_by_scores(y)


@dataclass
class EquivalenceReport:
    total: int
    mismatches: list[dict]
    violations: list[dict]

    @property
    def ok(self) -> bool:
        return not self.mismatches and not self.violations

    def to_json(self) -> dict:
        return {
            "total": self.total,
            "mismatches": self.mismatches,
            "violations": self.violations,
        }


def _check_one(pr: ProblemInstance, triplet, force_w: int | None):
    fm = feature_matrix(triplet, pr)
    w = force_w if force_w is not None else math.floor(fm.max_value()) + 2
    lex = lex_order(fm)
    try:
        _check_weight(fm, w, pr)
    except BaseWeightError as e:
        return {"problem_id": pr.id, "w": w, "error": str(e)}, None
    net = HeuristicNetwork(tuple(triplet), w)
    y = layer1_forward(net, fm)
    nn = _order_scores(y) if pr.n_vars <= MAX_EXPLICIT_LAYER else order_by_scores(y)
    if nn.perm != lex.perm:
        return None, {
            "problem_id": pr.id,
            "lex": lex.names(pr),
            "nn": nn.names(pr),
            "w": w,
        }
    return None, None


def check_equivalence(dataset, triplet=None, force_w: int | None = None, jobs: int = 1) -> EquivalenceReport:
    """Compare the two ordering paths on every problem.

    Per problem the base weight is re-selected minimally (unless forced),
    so the result is expected to have zero mismatches.  Results are merged
    in dataset order regardless of worker count.
    """
    triplet = tuple(triplet) if triplet is not None else brown_features()
    dataset = list(dataset)
    if jobs > 1 and len(dataset) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(lambda pr: _check_one(pr, triplet, force_w), dataset))
    else:
        results = [_check_one(pr, triplet, force_w) for pr in dataset]
    violations = [v for v, _ in results if v is not None]
    mismatches = [m for _, m in results if m is not None]
    return EquivalenceReport(len(dataset), mismatches, violations)
