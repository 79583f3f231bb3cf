"""Exhaustive search over ordered feature triplets against a cost oracle.

Every ordered triplet of distinct deduplicated features defines a frozen
lexicographic/network heuristic; each is priced as the summed oracle cost
of the orderings it picks, then ranked.  Evaluation order, worker count,
and checkpoint resume never change the report.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from itertools import permutations
from pathlib import Path

from .costmodel import CostOracle
from .features import FeatureSet, apply_pipeline, brown_features, eval_kernel
from .heuristics import (
    FeatureMatrix,
    HeuristicNetwork,
    Ordering,
    _order_scores,
    feature_matrix,
    layer1_forward,
    lex_order,
    order_by_scores,
    MAX_EXPLICIT_LAYER,
)
from .polyset import ProblemInstance, serialize_problem


@dataclass(frozen=True)
class TripletCandidate:
    """One ordered triplet with its evaluation results."""

    ids: tuple[int, int, int] | None
    total_cost: float
    per_problem: tuple[float, ...]
    uses_average: bool


@dataclass
class SearchReport:
    dataset_id: str
    oracle_id: str
    pool_size: int
    triplet_count: int
    ranked: list[dict]
    baseline: dict

    def to_json(self) -> dict:
        return {
            "dataset_id": self.dataset_id,
            "oracle_id": self.oracle_id,
            "pool_size": self.pool_size,
            "triplet_count": self.triplet_count,
            "baseline": self.baseline,
            "ranked": self.ranked,
        }

    def save_json(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n"
        )

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["rank", "f1", "f2", "f3", "total_cost", "wins_vs_brown"])
        for row in self.ranked:
            writer.writerow(
                [row["rank"], *row["features"], repr(row["total_cost"]), row["wins_vs_brown"]]
            )
        return buf.getvalue()

    def save_csv(self, path: str | Path) -> None:
        Path(path).write_text(self.to_csv())


def dataset_digest(dataset) -> str:
    h = hashlib.sha256()
    for pr in dataset:
        h.update(serialize_problem(pr).encode())
    return h.hexdigest()[:16]


def enumerate_triplets(fs: FeatureSet) -> list[tuple[int, int, int]]:
    """All ordered triplets of distinct descriptor ids, k*(k-1)*(k-2) of them."""
    k = len(fs)
    if k < 3:
        raise ValueError(f"need at least 3 features, got {k}")
    return list(permutations(range(k), 3))


def _order_from_rows(rows, w: int) -> Ordering:
    """Network-path ordering for one problem given its feature rows."""
    w2 = w * w
    y = tuple(r[0] * w2 + r[1] * w + r[2] for r in rows)
    if len(y) <= MAX_EXPLICIT_LAYER:
        return _order_scores(y)
    return order_by_scores(y)


def evaluate_triplet(triplet, dataset, oracle: CostOracle) -> TripletCandidate:
    """Price one triplet: select w over the dataset, order every problem, sum.

    Average-based triplets can carry sub-unit feature gaps that break the
    radix argument, so for those the lexicographic path decides.
    """
    triplet = tuple(triplet)
    matrices = [feature_matrix(triplet, pr) for pr in dataset]
    top = max((fm.max_value() for fm in matrices), default=0)
    w = math.floor(top) + 2
    uses_average = any(fd.uses_average() for fd in triplet)
    costs = []
    for pr, fm in zip(dataset, matrices):
        if uses_average:
            ordering = lex_order(fm)
        else:
            ordering = _order_from_rows(fm.rows, w)
        costs.append(oracle.cost(pr, ordering))
    return TripletCandidate(None, sum(costs), tuple(costs), uses_average)


class _PoolValues:
    """Per-descriptor feature values cached over the dataset."""

    def __init__(self, fs: FeatureSet, dataset):
        self.dataset = list(dataset)
        k = len(fs.descriptors)
        self.values = [[] for _ in range(k)]  # values[d][p] = tuple over variables
        self.maxima = [0] * k
        for pr in self.dataset:
            tables = {}
            for d, fd in enumerate(fs.descriptors):
                col = []
                for v in range(pr.n_vars):
                    key = (fd.kernel, v)
                    table = tables.get(key)
                    if table is None:
                        table = tables[key] = eval_kernel(fd.kernel, pr, v)
                    col.append(apply_pipeline(fd.pipeline, table))
                self.values[d].append(tuple(col))
                self.maxima[d] = max(self.maxima[d], max(col))

    def candidate(self, ids, fs: FeatureSet, oracle: CostOracle) -> TripletCandidate:
        a, b, c = ids
        w = math.floor(max(self.maxima[a], self.maxima[b], self.maxima[c])) + 2
        uses_average = any(fs.descriptors[i].uses_average() for i in ids)
        costs = []
        for p, pr in enumerate(self.dataset):
            rows = tuple(
                (self.values[a][p][v], self.values[b][p][v], self.values[c][p][v])
                for v in range(pr.n_vars)
            )
            if uses_average:
                ordering = lex_order(FeatureMatrix(rows))
            else:
                ordering = _order_from_rows(rows, w)
            costs.append(oracle.cost(pr, ordering))
        return TripletCandidate(tuple(ids), sum(costs), tuple(costs), uses_average)


def _load_journal(path: Path) -> dict[int, float]:
    done: dict[int, float] = {}
    if path.exists():
        for line in path.read_text().splitlines():
            line = line.strip()
            if not line:
                continue
            idx_text, cost_text = line.split(",", 1)
            done[int(idx_text)] = float(cost_text)
    return done


def search_triplets(
    fs: FeatureSet,
    dataset,
    oracle: CostOracle,
    top_k: int | None = None,
    journal_path: str | Path | None = None,
    jobs: int = 1,
    checkpoint_every: int = 100,
) -> SearchReport:
    """Evaluate every ordered triplet; rank ascending by total cost.

    Cost ties break on the triplet id encoding.  A journal file makes long
    runs resumable: evaluated totals are appended as ``index,total`` lines
    and trusted on resume.
    """
    dataset = list(dataset)
    triplets = enumerate_triplets(fs)
    cache = _PoolValues(fs, dataset)

    done: dict[int, float] = {}
    journal = Path(journal_path) if journal_path is not None else None
    if journal is not None:
        done = _load_journal(journal)

    pending = [i for i in range(len(triplets)) if i not in done]

    def evaluate(idx: int) -> tuple[int, float]:
        return idx, cache.candidate(triplets[idx], fs, oracle).total_cost

    totals: dict[int, float] = dict(done)
    if jobs > 1 and len(pending) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(evaluate, pending))
    else:
        results = [evaluate(i) for i in pending]
    buffer: list[str] = []
    for idx, total in results:
        totals[idx] = total
        if journal is not None:
            buffer.append(f"{idx},{total!r}\n")
            if len(buffer) >= checkpoint_every:
                with open(journal, "a") as fh:
                    fh.writelines(buffer)
                buffer.clear()
    if journal is not None and buffer:
        with open(journal, "a") as fh:
            fh.writelines(buffer)

    order = sorted(range(len(triplets)), key=lambda i: (totals[i], triplets[i]))
    if top_k is not None:
        order = order[: top_k]

    brown = evaluate_triplet(brown_features(), dataset, oracle)
    brown_ids = _triplet_ids(brown_features(), fs)

    ranked = []
    for rank, idx in enumerate(order, start=1):
        cand = cache.candidate(triplets[idx], fs, oracle)
        wins = sum(1 for c, b in zip(cand.per_problem, brown.per_problem) if c < b)
        ranked.append(
            {
                "rank": rank,
                "features": list(cand.ids),
                "descriptions": [fs.descriptors[i].describe() for i in cand.ids],
                "total_cost": cand.total_cost,
                "wins_vs_brown": wins,
                "uses_average": cand.uses_average,
            }
        )

    return SearchReport(
        dataset_id=dataset_digest(dataset),
        oracle_id=oracle.describe(),
        pool_size=len(fs),
        triplet_count=len(triplets),
        ranked=ranked,
        baseline={
            "features": list(brown_ids) if brown_ids else None,
            "total_cost": brown.total_cost,
        },
    )


def _triplet_ids(triplet, fs: FeatureSet) -> tuple[int, ...] | None:
    """Ids of the classes containing each descriptor, or None if any is absent."""
    ids = []
    for fd in triplet:
        rep = fs.class_of(fd)
        if rep is None:
            return None
        ids.append(fs.descriptors.index(rep))
    return tuple(ids)
