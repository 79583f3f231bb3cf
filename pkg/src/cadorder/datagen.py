"""Seeded random polynomial-problem generation.

Determinism contract: problems are a pure function of (config, index).
Randomness comes from SplitMix64 (Steele, Lea & Flood's mix function:
state advances by the 64-bit golden-ratio gamma, outputs are finalized
with two xor-shift multiplies), implemented here in plain integer
arithmetic so identical datasets arise byte-for-byte on any platform.
The per-problem stream seed is ``mix64(mix64(seed) ^ (index + GAMMA))``.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, asdict
from pathlib import Path

from .polyset import Monomial, Polynomial, ProblemInstance, VariableId, serialize_problem

_GAMMA = 0x9E3779B97F4A7C15
_MASK = (1 << 64) - 1


def _mix64(z: int) -> int:
    z &= _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


class SplitMix64:
    """Tiny deterministic PRNG stream; state advances by the golden gamma."""

    def __init__(self, seed: int):
        self._state = seed & _MASK

    def next_u64(self) -> int:
        self._state = (self._state + _GAMMA) & _MASK
        return _mix64(self._state)

    def next_float(self) -> float:
        """Uniform in [0, 1) with 53 random bits."""
        return (self.next_u64() >> 11) * 2.0**-53

    def next_int(self, lo: int, hi: int) -> int:
        """Uniform integer in [lo, hi], by rejection to avoid modulo bias."""
        span = hi - lo + 1
        if span <= 0:
            raise ValueError(f"empty range [{lo}, {hi}]")
        limit = (1 << 64) - ((1 << 64) % span)
        while True:
            r = self.next_u64()
            if r < limit:
                return lo + r % span


def _problem_stream(seed: int, index: int) -> SplitMix64:
    return SplitMix64(_mix64(_mix64(seed) ^ ((index + _GAMMA) & _MASK)))


@dataclass(frozen=True)
class GenConfig:
    """Generation parameters; every value is explicit configuration.

    Defaults give small 3-variable systems where full ties on per-variable
    degree statistics still occur in a few percent of instances.
    """

    n_vars: int = 3
    min_polys: int = 1
    max_polys: int = 4
    min_monomials: int = 1
    max_monomials: int = 8
    max_degree: int = 6
    coeff_min: int = -100
    coeff_max: int = 100
    density: float = 0.7
    seed: int = 0

    def __post_init__(self):
        if self.n_vars < 1:
            raise ValueError("n_vars must be >= 1")
        if not (1 <= self.min_polys <= self.max_polys):
            raise ValueError("bad polynomial-count range")
        if not (1 <= self.min_monomials <= self.max_monomials):
            raise ValueError("bad monomial-count range")
        if self.max_degree < 1:
            raise ValueError("max_degree must be >= 1")
        if self.coeff_min > self.coeff_max or (self.coeff_min == 0 == self.coeff_max):
            raise ValueError("coefficient range must contain a nonzero value")
        if not (0.0 < self.density <= 1.0):
            raise ValueError("density must be in (0, 1]")


def _nonzero_coeff(rng: SplitMix64, lo: int, hi: int) -> int:
    if lo <= 0 <= hi:
        c = rng.next_int(lo, hi - 1)
        return c + 1 if c >= 0 else c
    return rng.next_int(lo, hi)


def _sample_monomial(rng: SplitMix64, cfg: GenConfig) -> Monomial:
    degrees = []
    for _ in range(cfg.n_vars):
        if rng.next_float() < cfg.density:
            degrees.append(rng.next_int(1, cfg.max_degree))
        else:
            degrees.append(0)
    return Monomial(_nonzero_coeff(rng, cfg.coeff_min, cfg.coeff_max), tuple(degrees))


def _sample_polynomial(rng: SplitMix64, cfg: GenConfig) -> Polynomial:
    # Degenerate draws (empty after cancellation, or constant-only) are
    # resampled; after 100 rejections one variable is forced to degree 1.
    last = None
    for _ in range(100):
        raw = [_sample_monomial(rng, cfg) for _ in range(rng.next_int(cfg.min_monomials, cfg.max_monomials))]
        try:
            poly = Polynomial.from_terms(raw)
        except ValueError:
            last = raw
            continue
        last = raw
        if any(m.total_degree > 0 for m in poly.monomials):
            return poly
    forced = Monomial(last[0].coeff, (1,) + last[0].degrees[1:])
    return Polynomial.from_terms([forced] + last[1:])


def random_problem(cfg: GenConfig, index: int) -> ProblemInstance:
    """Deterministic problem number ``index`` of the stream defined by ``cfg``."""
    rng = _problem_stream(cfg.seed, index)
    n_polys = rng.next_int(cfg.min_polys, cfg.max_polys)
    polys = tuple(_sample_polynomial(rng, cfg) for _ in range(n_polys))
    variables = tuple(VariableId(i, f"x{i}") for i in range(cfg.n_vars))
    return ProblemInstance(variables, polys, f"rnd-{cfg.seed}-{index}")


def random_dataset(cfg: GenConfig, count: int) -> list[ProblemInstance]:
    if count < 1:
        raise ValueError("count must be >= 1")
    return [random_problem(cfg, i) for i in range(count)]


def write_dataset(problems, out_dir: str | Path, cfg: GenConfig | None = None) -> Path:
    """Write one .poly file per problem plus a manifest with content hashes."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = []
    for i, pr in enumerate(problems):
        pid = pr.id or f"problem-{i}"
        name = f"{pid}.poly"
        data = serialize_problem(pr).encode()
        (out / name).write_bytes(data)
        files.append({"name": name, "id": pid, "sha256": hashlib.sha256(data).hexdigest()})
    manifest = {
        "config": asdict(cfg) if cfg is not None else None,
        "count": len(files),
        "files": files,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return out


def load_dataset(path: str | Path) -> list[ProblemInstance]:
    """Load a dataset directory; manifest order if present, else sorted names."""
    from .polyset import parse_problem

    root = Path(path)
    manifest = root / "manifest.json"
    problems = []
    if manifest.exists():
        meta = json.loads(manifest.read_text())
        for entry in meta["files"]:
            text = (root / entry["name"]).read_text()
            problems.append(parse_problem(text, problem_id=entry["id"]))
    else:
        for f in sorted(root.glob("*.poly")):
            problems.append(parse_problem(f.read_text(), problem_id=f.stem))
    if not problems:
        raise FileNotFoundError(f"no .poly files under {root}")
    return problems
