"""Cost oracles: price a (problem, ordering) pair.

Three implementations share the same contract: a table of recorded
timings, a deterministic synthetic model for desk-scale experiments, and
an adapter that shells out to an external solver and measures wall time.
Timed-out runs cost timeout_s * penalty_factor.
"""

from __future__ import annotations

import csv
import hashlib
import shlex
import subprocess
import tempfile
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Protocol

from .heuristics import Ordering
from .polyset import ProblemInstance, serialize_problem


class MissingRecordError(KeyError):
    """A timing table has no record for the requested (problem, ordering)."""


class SolverError(RuntimeError):
    """The external solver failed for a reason other than timing out."""


class CostOracle(Protocol):
    def cost(self, pr: ProblemInstance, ordering: Ordering) -> float: ...

    def describe(self) -> str: ...


@dataclass(frozen=True)
class CostRecord:
    problem_id: str
    ordering: str
    time_s: float
    timed_out: bool


@dataclass(frozen=True)
class TimingTable:
    """Recorded costs; lookups of missing pairs are an error, never zero."""

    records: dict[tuple[str, str], CostRecord]
    timeout_s: float | None = None
    penalty_factor: float = 1.0

    def cost(self, pr: ProblemInstance, ordering: Ordering) -> float:
        key = (pr.id, ordering.names(pr))
        rec = self.records.get(key)
        if rec is None:
            raise MissingRecordError(f"no timing record for {key}")
        if rec.timed_out:
            return self.timeout_s * self.penalty_factor
        return rec.time_s

    def describe(self) -> str:
        return f"table(n={len(self.records)},timeout={self.timeout_s},penalty={self.penalty_factor})"


def _parse_bool(text: str, row: int) -> bool:
    value = text.strip().lower()
    if value in ("true", "1"):
        return True
    if value in ("false", "0"):
        return False
    raise ValueError(f"row {row}: timed_out must be true/false, got {text!r}")


def load_timing_table(
    path: str | Path, timeout_s: float | None = None, penalty_factor: float = 1.0
) -> TimingTable:
    """Load the CSV schema ``problem,ordering,time_s,timed_out``."""
    expected = ["problem", "ordering", "time_s", "timed_out"]
    records: dict[tuple[str, str], CostRecord] = {}
    first_row: dict[tuple[str, str], int] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != expected:
            raise ValueError(f"expected header {','.join(expected)}, got {header}")
        for rowno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise ValueError(f"row {rowno}: expected 4 fields, got {len(row)}")
            problem, ordering, time_text, timed_text = (f.strip() for f in row)
            try:
                time_s = float(time_text)
            except ValueError:
                raise ValueError(f"row {rowno}: bad time_s {time_text!r}") from None
            if time_s < 0:
                raise ValueError(f"row {rowno}: negative time {time_s}")
            timed_out = _parse_bool(timed_text, rowno)
            key = (problem, ordering)
            if key in records:
                raise ValueError(
                    f"row {rowno}: duplicate key {key} (first at row {first_row[key]})"
                )
            records[key] = CostRecord(problem, ordering, time_s, timed_out)
            first_row[key] = rowno
    if timeout_s is None and any(r.timed_out for r in records.values()):
        raise ValueError("table contains timed-out rows; a timeout_s is required")
    if timeout_s is not None:
        for key, rec in records.items():
            if not rec.timed_out and rec.time_s > timeout_s:
                raise ValueError(f"record {key}: time {rec.time_s} exceeds timeout {timeout_s}")
    return TimingTable(records, timeout_s, penalty_factor)


def _per_poly_max_degrees(pr: ProblemInstance) -> list[int]:
    """m_v = sum over polynomials of the variable's maximum degree in each."""
    out = []
    for v in range(pr.n_vars):
        out.append(sum(max(m.degrees[v] for m in p.monomials) for p in pr.polynomials))
    return out


@dataclass(frozen=True)
class SyntheticCostModel:
    """Deterministic stand-in cost: earlier-projected variables weigh more.

    cost = sum over positions k of step_base**(n-1-k) * m(ordering[k]),
    so the cheapest ordering sorts m ascending.  Optional multiplicative
    noise is a pure hash of (problem, ordering, seed): bit-identical on
    every platform.
    """

    step_base: float = 2.0
    noise_seed: int | None = None
    noise_scale: float = 0.0

    def __post_init__(self):
        if self.step_base <= 0:
            raise ValueError("step_base must be positive")
        if not (0.0 <= self.noise_scale < 1.0):
            raise ValueError("noise_scale must be in [0, 1)")

    def cost(self, pr: ProblemInstance, ordering: Ordering) -> float:
        m = _per_poly_max_degrees(pr)
        n = pr.n_vars
        total = float(sum(self.step_base ** (n - 1 - k) * m[v] for k, v in enumerate(ordering.perm)))
        if self.noise_seed is not None and self.noise_scale > 0.0:
            payload = f"{serialize_problem(pr)}|{ordering.names(pr)}|{self.noise_seed}"
            digest = hashlib.sha256(payload.encode()).digest()
            u = (int.from_bytes(digest[:8], "big") >> 11) * 2.0**-53
            total *= 1.0 + self.noise_scale * u
        return total

    def describe(self) -> str:
        return f"synthetic(step={self.step_base},noise_seed={self.noise_seed},noise_scale={self.noise_scale})"


@dataclass(frozen=True)
class ExternalSolverAdapter:
    """Runs a command template and prices the pair by wall-clock seconds.

    The template must contain {problem_file} and {ordering}; the problem is
    written to a temporary file in the .poly grammar.  At most max_procs
    solver processes run concurrently.
    """

    template: str
    timeout_s: float
    penalty_factor: float = 1.0
    max_procs: int | None = None

    def __post_init__(self):
        for placeholder in ("{problem_file}", "{ordering}"):
            if placeholder not in self.template:
                raise ValueError(f"command template is missing {placeholder}")
        if self.max_procs is not None:
            object.__setattr__(self, "_gate", threading.Semaphore(self.max_procs))
        else:
            object.__setattr__(self, "_gate", None)

    def run(self, pr: ProblemInstance, ordering: Ordering) -> CostRecord:
        names = ordering.names(pr)
        with tempfile.NamedTemporaryFile("w", suffix=".poly", delete=False) as fh:
            fh.write(serialize_problem(pr))
            problem_file = fh.name
        cmd = shlex.split(
            self.template.replace("{problem_file}", problem_file).replace("{ordering}", names)
        )
        gate = self._gate
        if gate is not None:
            gate.acquire()
        try:
            start = time.perf_counter()
            try:
                proc = subprocess.run(
                    cmd, capture_output=True, timeout=self.timeout_s, check=False
                )
            except subprocess.TimeoutExpired:
                return CostRecord(pr.id or "?", names, self.timeout_s, True)
            except OSError as e:
                raise SolverError(f"failed to spawn {cmd[0]!r}: {e}") from e
            elapsed = time.perf_counter() - start
            if proc.returncode != 0:
                raise SolverError(
                    f"solver exited {proc.returncode}: {proc.stderr.decode(errors='replace').strip()}"
                )
            return CostRecord(pr.id or "?", names, elapsed, False)
        finally:
            if gate is not None:
                gate.release()
            Path(problem_file).unlink(missing_ok=True)

    def cost(self, pr: ProblemInstance, ordering: Ordering) -> float:
        rec = self.run(pr, ordering)
        if rec.timed_out:
            return self.timeout_s * self.penalty_factor
        return rec.time_s

    def describe(self) -> str:
        return f"cmd({self.template!r},timeout={self.timeout_s})"


def external_cost(adapter: ExternalSolverAdapter, pr: ProblemInstance, ordering: Ordering) -> CostRecord:
    return adapter.run(pr, ordering)


@dataclass(frozen=True)
class CostTotal:
    total: float
    per_problem: tuple[tuple[str, float], ...]


def total_cost(
    oracle: CostOracle,
    dataset,
    chooser: Callable[[ProblemInstance], Ordering],
) -> CostTotal:
    """Sum of per-problem costs for the orderings the chooser picks."""
    items = []
    total = 0.0
    for i, pr in enumerate(dataset):
        c = oracle.cost(pr, chooser(pr))
        total += c
        items.append((pr.id or str(i), c))
    return CostTotal(total, tuple(items))
