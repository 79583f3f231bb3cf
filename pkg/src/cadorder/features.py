"""Per-variable features of polynomial problems, built from a small grammar.

A feature is a scalar function of (problem, variable) obtained by applying
four aggregation stages to a base kernel table.  The kernel assigns one
integer to every (polynomial p, monomial m) cell: either the variable's
degree in that monomial, or its containment sign times the monomial's
total degree.  Aggregators then reduce the monomial axis, the polynomial
axis, or both, with elementwise sign/identity allowed anywhere.

All evaluation is exact: integers throughout, `Fraction` once an
averaging stage divides.  Averages are per the usual per-polynomial
definitions: av_m divides each polynomial's sum by its own monomial
count, and av_mp is the mean of the per-polynomial means (not the grand
mean over all cells).

The monomial axis must be reduced before or together with the polynomial
axis: the kernel table is ragged (polynomials have different monomial
counts), so a polynomial-axis reduction of the full table has no
meaningful cell alignment.  Descriptors that attempt it are invalid,
as are those that reduce an axis twice or leave one unreduced.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from pathlib import Path

from .polyset import ProblemInstance, parse_problem


class Kernel(Enum):
    """Base per-(monomial, polynomial) quantity for one variable."""

    DEGREE = "d_v"
    SIGNED_TOTAL_DEGREE = "sgn(d_v)*totdeg"


class Agg(Enum):
    """Aggregation stages; declaration order is the canonical encoding order."""

    MAX_P = "max_p"
    MAX_M = "max_m"
    MAX_MP = "max_mp"
    SUM_P = "sum_p"
    SUM_M = "sum_m"
    SUM_MP = "sum_mp"
    AV_P = "av_p"
    AV_M = "av_m"
    AV_MP = "av_mp"
    SGN = "sgn"
    ID = "id"


_KERNEL_CODE = {k: i for i, k in enumerate(Kernel)}
_AGG_CODE = {a: i for i, a in enumerate(Agg)}

_REDUCES_M = {Agg.MAX_M, Agg.SUM_M, Agg.AV_M}
_REDUCES_P = {Agg.MAX_P, Agg.SUM_P, Agg.AV_P}
_REDUCES_MP = {Agg.MAX_MP, Agg.SUM_MP, Agg.AV_MP}
_ELEMENTWISE = {Agg.SGN, Agg.ID}

# Pipeline states: "mp" = full table, "p" = per-polynomial vector, "" = scalar.
_TRANSITIONS = {
    "mp": {**{a: "p" for a in _REDUCES_M}, **{a: "" for a in _REDUCES_MP}},
    "p": {a: "" for a in _REDUCES_P},
}


class InvalidDescriptorError(ValueError):
    """The aggregation pipeline does not reduce each axis exactly once."""


@dataclass(frozen=True)
class FeatureDescriptor:
    """A kernel plus an ordered pipeline of exactly four aggregation stages."""

    kernel: Kernel
    pipeline: tuple[Agg, Agg, Agg, Agg]

    def __post_init__(self):
        if len(self.pipeline) != 4:
            raise ValueError("pipeline must have exactly 4 stages")

    @property
    def is_valid(self) -> bool:
        state = "mp"
        for agg in self.pipeline:
            if agg in _ELEMENTWISE:
                continue
            nxt = _TRANSITIONS.get(state, {}).get(agg)
            if nxt is None:
                return False
            state = nxt
        return state == ""

    @property
    def encoding(self) -> tuple[int, tuple[int, ...]]:
        return _KERNEL_CODE[self.kernel], tuple(_AGG_CODE[a] for a in self.pipeline)

    @property
    def stage_count(self) -> int:
        """Number of non-identity stages; ties in dedup prefer fewer."""
        return sum(1 for a in self.pipeline if a is not Agg.ID)

    def describe(self) -> str:
        """Math-style reading, outermost stage first, e.g. ``sum_p max_m d_v``."""
        stages = [a.value for a in self.pipeline if a is not Agg.ID]
        return " ".join(list(reversed(stages)) + [self.kernel.value])

    def uses_average(self) -> bool:
        return any(a in (Agg.AV_P, Agg.AV_M, Agg.AV_MP) for a in self.pipeline)


def eval_kernel(kernel: Kernel, pr: ProblemInstance, v: int) -> list[list[int]]:
    """Kernel table for variable index ``v``: one row per polynomial."""
    if kernel is Kernel.DEGREE:
        return [[m.degrees[v] for m in p.monomials] for p in pr.polynomials]
    return [
        [m.total_degree if m.degrees[v] else 0 for m in p.monomials]
        for p in pr.polynomials
    ]


def _sgn(x):
    return (x > 0) - (x < 0)


def apply_pipeline(pipeline, table):
    """Run aggregation stages over a kernel table down to a scalar."""
    value = table
    state = "mp"
    for agg in pipeline:
        if agg is Agg.ID:
            continue
        if agg is Agg.SGN:
            if state == "mp":
                value = [[_sgn(x) for x in row] for row in value]
            elif state == "p":
                value = [_sgn(x) for x in value]
            else:
                value = _sgn(value)
            continue
        nxt = _TRANSITIONS.get(state, {}).get(agg)
        if nxt is None:
            raise InvalidDescriptorError(
                f"{agg.value} cannot apply when state is {state or 'scalar'!r}"
            )
        if agg is Agg.MAX_M:
            value = [max(row) for row in value]
        elif agg is Agg.SUM_M:
            value = [sum(row) for row in value]
        elif agg is Agg.AV_M:
            value = [sum(row) * Fraction(1, len(row)) for row in value]
        elif agg is Agg.MAX_MP:
            value = max(x for row in value for x in row)
        elif agg is Agg.SUM_MP:
            value = sum(x for row in value for x in row)
        elif agg is Agg.AV_MP:
            value = sum(sum(row) * Fraction(1, len(row)) for row in value) * Fraction(1, len(value))
        elif agg is Agg.MAX_P:
            value = max(value)
        elif agg is Agg.SUM_P:
            value = sum(value)
        elif agg is Agg.AV_P:
            value = sum(value) * Fraction(1, len(value))
        state = nxt
    if state != "":
        raise InvalidDescriptorError(f"pipeline left axis state {state!r} unreduced")
    return value


def eval_feature(fd: FeatureDescriptor, pr: ProblemInstance, v: int):
    """Exact rational value of the feature for variable index ``v``."""
    return apply_pipeline(fd.pipeline, eval_kernel(fd.kernel, pr, v))


def _fd(kernel: Kernel, *stages: Agg) -> FeatureDescriptor:
    pipeline = tuple(stages) + (Agg.ID,) * (4 - len(stages))
    return FeatureDescriptor(kernel, pipeline)


def brown_features() -> tuple[FeatureDescriptor, FeatureDescriptor, FeatureDescriptor]:
    """The three metrics of Brown's ordering heuristic, in priority order.

    Overall degree of the variable; maximum total degree of monomials
    containing it; count of monomials containing it.
    """
    return (
        _fd(Kernel.DEGREE, Agg.MAX_MP),
        _fd(Kernel.SIGNED_TOTAL_DEGREE, Agg.MAX_MP),
        _fd(Kernel.DEGREE, Agg.SGN, Agg.SUM_MP),
    )


def selected_triplet() -> tuple[FeatureDescriptor, FeatureDescriptor, FeatureDescriptor]:
    """The tuned triplet found by exhaustive search over the grammar.

    Per-polynomial maxima summed over polynomials: of the variable's
    degree; of the total degree of monomials containing it; and of its
    containment sign (the number of polynomials containing it).
    """
    return (
        _fd(Kernel.DEGREE, Agg.MAX_M, Agg.SUM_P),
        _fd(Kernel.SIGNED_TOTAL_DEGREE, Agg.MAX_M, Agg.SUM_P),
        _fd(Kernel.DEGREE, Agg.SGN, Agg.MAX_M, Agg.SUM_P),
    )


def enumerate_descriptors() -> list[FeatureDescriptor]:
    """All valid descriptors, in canonical (kernel, pipeline-encoding) order."""
    from itertools import product

    out = []
    for kernel in Kernel:
        for pipeline in product(Agg, repeat=4):
            fd = FeatureDescriptor(kernel, pipeline)
            if fd.is_valid:
                out.append(fd)
    return out


@dataclass(frozen=True)
class FeatureSet:
    """Deduplicated descriptors plus the equivalence classes they represent."""

    descriptors: tuple[FeatureDescriptor, ...]
    provenance: dict[FeatureDescriptor, tuple[FeatureDescriptor, ...]]

    def __len__(self) -> int:
        return len(self.descriptors)

    @classmethod
    def from_descriptors(cls, descriptors) -> FeatureSet:
        descriptors = tuple(descriptors)
        return cls(descriptors, {fd: (fd,) for fd in descriptors})

    def class_of(self, fd: FeatureDescriptor) -> FeatureDescriptor | None:
        """Representative whose class contains ``fd``, if any."""
        for rep, members in self.provenance.items():
            if fd == rep or fd in members:
                return rep
        return None

    def to_json(self) -> list[dict]:
        return [
            {
                "id": i,
                "kernel": fd.kernel.name,
                "pipeline": [a.value for a in fd.pipeline],
                "description": fd.describe(),
                "class_size": len(self.provenance.get(fd, (fd,))),
            }
            for i, fd in enumerate(self.descriptors)
        ]

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n")


def descriptor_from_record(record: dict) -> FeatureDescriptor:
    kernel = Kernel[record["kernel"]]
    pipeline = tuple(Agg(v) for v in record["pipeline"])
    return FeatureDescriptor(kernel, pipeline)


def load_feature_set(path: str | Path) -> FeatureSet:
    records = json.loads(Path(path).read_text())
    return FeatureSet.from_descriptors(descriptor_from_record(r) for r in records)


def dedup_features(candidates, probe) -> FeatureSet:
    """Partition candidates by their exact value vector over the probe set.

    The vector runs over every (problem, variable) pair.  Each class keeps
    one representative: fewest non-identity stages, then smallest encoding.
    Enlarging the probe can only split classes, never merge them.
    """
    probe = list(probe)
    if not probe:
        raise ValueError("probe set must be nonempty")
    n_vars = probe[0].n_vars
    if any(pr.n_vars != n_vars for pr in probe):
        raise ValueError("probe problems must share n_vars")

    tables: dict[tuple[int, Kernel, int], list[list[int]]] = {}
    for i, pr in enumerate(probe):
        for kernel in Kernel:
            for v in range(n_vars):
                tables[(i, kernel, v)] = eval_kernel(kernel, pr, v)

    classes: dict[tuple, list[FeatureDescriptor]] = {}
    for fd in candidates:
        vector = tuple(
            apply_pipeline(fd.pipeline, tables[(i, fd.kernel, v)])
            for i in range(len(probe))
            for v in range(n_vars)
        )
        classes.setdefault(vector, []).append(fd)

    reps = {}
    for members in classes.values():
        rep = min(members, key=lambda fd: (fd.stage_count, fd.encoding))
        reps[rep] = tuple(sorted(members, key=lambda fd: fd.encoding))
    ordered = tuple(sorted(reps, key=lambda fd: fd.encoding))
    return FeatureSet(ordered, {fd: reps[fd] for fd in ordered})


def separation_probes() -> list[ProblemInstance]:
    """Small hand instances that split near-duplicate features.

    The third one distinguishes monomial-containment counts from
    polynomial-containment counts (two monomials of one polynomial
    contain x).
    """
    texts = [
        "vars: x,y,z\nx^2*y + z\nx*z^2 - 1",
        "vars: x,y,z\nx^3 + y*z\ny^2 - x",
        "vars: x,y,z\nx^2 + x",
    ]
    return [parse_problem(t, problem_id=f"probe-{i}") for i, t in enumerate(texts)]


def default_probe(count: int = 200, seed: int = 0) -> list[ProblemInstance]:
    """Probe used for deduplication: seeded random problems plus hand instances."""
    from .datagen import GenConfig, random_dataset

    return random_dataset(GenConfig(seed=seed), count) + separation_probes()
