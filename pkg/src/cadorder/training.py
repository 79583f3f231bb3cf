"""Gradient tuning of the first-layer weights.

The frozen network's ordering is an argmax over permutation neurons; for
training, the argmax relaxes to a softmax over the neuron scores and the
loss is cross-entropy against the oracle-optimal ordering of each training
problem (brute-forced over all n! orderings, which is cheap at n = 3).
Weights are three scalars shared across variables; the permutation output
layer stays fixed.  Gradients are analytic; the optimizer is the standard
adaptive-moment scheme (bias-corrected first and second moment estimates).

Feature scaling: inputs can be divided by per-feature training-set maxima
so the three gradient components have comparable size.  Disable it
(``normalize=False``) to train on raw feature values.
"""

from __future__ import annotations

import hashlib
import json
import math
import random
from dataclasses import dataclass, field, asdict
from itertools import permutations
from pathlib import Path

from .costmodel import CostOracle
from .features import FeatureDescriptor, descriptor_from_record
from .heuristics import FeatureMatrix, Ordering, feature_matrix, order_by_scores, permutation_weights
from .polyset import ProblemInstance


@dataclass
class TrainableNetwork:
    """Three trainable weights over a fixed feature triplet."""

    triplet: tuple[FeatureDescriptor, FeatureDescriptor, FeatureDescriptor]
    weights: list[float]
    feature_scale: tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self):
        if len(self.weights) != 3 or len(self.feature_scale) != 3:
            raise ValueError("three weights and three scale divisors required")
        if any(s <= 0 for s in self.feature_scale):
            raise ValueError("feature scales must be positive")

    @classmethod
    def brown_init(cls, triplet, base_weight: float = 30.0, feature_scale=(1.0, 1.0, 1.0)):
        """Radix-style starting point (w^2, w, 1)."""
        w = float(base_weight)
        return cls(tuple(triplet), [w * w, w, 1.0], tuple(feature_scale))

    def scaled_rows(self, fm: FeatureMatrix) -> list[tuple[float, float, float]]:
        s = self.feature_scale
        return [tuple(float(x) / s[i] for i, x in enumerate(row)) for row in fm.rows]

    def scores_y(self, fm: FeatureMatrix) -> list[float]:
        w = self.weights
        return [sum(wi * xi for wi, xi in zip(w, row)) for row in self.scaled_rows(fm)]

    def hard_order(self, fm: FeatureMatrix) -> Ordering:
        """Argmax ordering: descending y with ascending-index tie-break."""
        return order_by_scores(self.scores_y(fm))


def _softmax(scores: list[float]) -> list[float]:
    top = max(scores)
    exps = [math.exp(s - top) for s in scores]
    z = sum(exps)
    return [e / z for e in exps]


def forward_soft(net: TrainableNetwork, fm: FeatureMatrix, temperature: float = 1.0) -> list[float]:
    """Probability of each permutation neuron, in lexicographic neuron order."""
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    y = net.scores_y(fm)
    scores = [
        sum(wv * yv for wv, yv in zip(weights, y))
        for _, weights in permutation_weights(len(y))
    ]
    return _softmax([s / temperature for s in scores])


def _neuron_index(n: int) -> dict[tuple[int, ...], int]:
    return {perm: i for i, perm in enumerate(permutations(range(n)))}


def loss(net: TrainableNetwork, batch, temperature: float = 1.0) -> float:
    """Mean cross-entropy of the soft orderings against target orderings."""
    total = 0.0
    for fm, target in batch:
        probs = forward_soft(net, fm, temperature)
        idx = _neuron_index(fm.n_vars)[target.perm]
        total += -math.log(max(probs[idx], 1e-300))
    return total / len(batch)


def gradient(net: TrainableNetwork, batch, temperature: float = 1.0) -> list[float]:
    """Analytic d(loss)/d(weights), averaged over the batch."""
    grad = [0.0, 0.0, 0.0]
    for fm, target in batch:
        n = fm.n_vars
        x = net.scaled_rows(fm)
        probs = forward_soft(net, fm, temperature)
        target_idx = _neuron_index(n)[target.perm]
        dy = [0.0] * n
        for k, (_, weights) in enumerate(permutation_weights(n)):
            coef = (probs[k] - (1.0 if k == target_idx else 0.0)) / temperature
            for v in range(n):
                dy[v] += coef * weights[v]
        for i in range(3):
            grad[i] += sum(dy[v] * x[v][i] for v in range(n))
    return [g / len(batch) for g in grad]


class AdamOptimizer:
    """Adaptive-moment gradient descent with bias correction."""

    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [0.0, 0.0, 0.0]
        self.v = [0.0, 0.0, 0.0]

    def step(self, weights: list[float], grads: list[float]) -> None:
        self.t += 1
        for i, g in enumerate(grads):
            self.m[i] = self.beta1 * self.m[i] + (1 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1 - self.beta2) * g * g
            m_hat = self.m[i] / (1 - self.beta1**self.t)
            v_hat = self.v[i] / (1 - self.beta2**self.t)
            weights[i] -= self.lr * m_hat / (math.sqrt(v_hat) + self.eps)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 2e-5
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    epochs: int = 3
    batch_size: int = 32
    softmax_temperature: float = 1.0
    seed: int = 0
    normalize: bool = True
    validate_per_batch: bool = False

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ValueError("betas must be in (0, 1)")
        if self.softmax_temperature <= 0:
            raise ValueError("softmax_temperature must be positive")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")

    def digest(self) -> str:
        return hashlib.sha256(
            json.dumps(asdict(self), sort_keys=True).encode()
        ).hexdigest()[:16]


@dataclass
class TrainEntry:
    epoch: int
    step: int
    train_loss: float
    val_cost: float
    val_accuracy: float
    weights: list[float] = field(repr=False, default_factory=list)


@dataclass
class TrainReport:
    entries: list[TrainEntry]
    best_index: int
    final_weights: list[float]
    feature_scale: tuple[float, float, float]
    config: TrainConfig

    @property
    def best_epoch(self) -> int:
        return self.entries[self.best_index].epoch

    @property
    def epoch0_val_cost(self) -> float:
        return self.entries[0].val_cost

    @property
    def best_val_cost(self) -> float:
        return self.entries[self.best_index].val_cost

    def to_json(self) -> dict:
        return {
            "entries": [
                {
                    "epoch": e.epoch,
                    "step": e.step,
                    "train_loss": e.train_loss,
                    "val_cost": e.val_cost,
                    "val_accuracy": e.val_accuracy,
                }
                for e in self.entries
            ],
            "best_epoch": self.best_epoch,
            "best_val_cost": self.best_val_cost,
            "final_weights": self.final_weights,
            "feature_scale": list(self.feature_scale),
            "config": asdict(self.config),
        }


def optimal_ordering(oracle: CostOracle, pr: ProblemInstance) -> tuple[Ordering, float]:
    """Exhaustive argmin over all orderings; ties pick the smallest permutation."""
    best = None
    best_cost = None
    for perm in permutations(range(pr.n_vars)):
        c = oracle.cost(pr, Ordering(perm))
        if best_cost is None or c < best_cost:
            best, best_cost = perm, c
    return Ordering(best), best_cost


def fit_feature_scale(matrices) -> tuple[float, float, float]:
    """Per-feature maxima over the training set; absent features scale by 1."""
    top = [0.0, 0.0, 0.0]
    for fm in matrices:
        for row in fm.rows:
            for i, x in enumerate(row):
                top[i] = max(top[i], float(x))
    return tuple(t if t > 0 else 1.0 for t in top)


def _validate(net, matrices, problems, optima, oracle):
    """Hard-argmax total cost and the fraction of cost-optimal picks."""
    total = 0.0
    hits = 0
    for fm, pr, (_, best_cost) in zip(matrices, problems, optima):
        ordering = net.hard_order(fm)
        c = oracle.cost(pr, ordering)
        total += c
        if c == best_cost:
            hits += 1
    return total, hits / len(problems)


class DivergenceError(RuntimeError):
    """Training loss became non-finite."""


def train(
    net: TrainableNetwork,
    train_set,
    val_set,
    oracle: CostOracle,
    cfg: TrainConfig,
) -> TrainReport:
    """Mini-batch tuning with per-epoch (or per-batch) validation.

    The input network is not mutated; the report carries the weights of
    the entry with the lowest validation cost (the pre-training state
    counts as epoch 0).  Deterministic for a given config and data.
    """
    train_set = list(train_set)
    val_set = list(val_set)
    if not train_set or not val_set:
        raise ValueError("training and validation sets must be nonempty")

    train_matrices = [feature_matrix(net.triplet, pr) for pr in train_set]
    val_matrices = [feature_matrix(net.triplet, pr) for pr in val_set]
    scale = fit_feature_scale(train_matrices) if cfg.normalize else (1.0, 1.0, 1.0)
    work = TrainableNetwork(net.triplet, list(net.weights), scale)

    targets = [optimal_ordering(oracle, pr)[0] for pr in train_set]
    val_optima = [optimal_ordering(oracle, pr) for pr in val_set]
    samples = list(zip(train_matrices, targets))

    temperature = cfg.softmax_temperature
    entries: list[TrainEntry] = []

    def record(epoch: int, step: int, train_loss: float) -> None:
        val_cost, val_acc = _validate(work, val_matrices, val_set, val_optima, oracle)
        entries.append(TrainEntry(epoch, step, train_loss, val_cost, val_acc, list(work.weights)))

    record(0, 0, loss(work, samples, temperature))

    rng = random.Random(cfg.seed)
    optimizer = AdamOptimizer(cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon)
    order = list(range(len(samples)))
    step = 0
    for epoch in range(1, cfg.epochs + 1):
        rng.shuffle(order)
        epoch_losses = []
        for start in range(0, len(order), cfg.batch_size):
            batch = [samples[i] for i in order[start : start + cfg.batch_size]]
            batch_loss = loss(work, batch, temperature)
            if not math.isfinite(batch_loss):
                raise DivergenceError(f"non-finite loss at epoch {epoch}")
            epoch_losses.append(batch_loss)
            optimizer.step(work.weights, gradient(work, batch, temperature))
            step += 1
            if cfg.validate_per_batch:
                record(epoch, step, batch_loss)
        if not cfg.validate_per_batch:
            record(epoch, step, sum(epoch_losses) / len(epoch_losses))

    best_index = min(range(len(entries)), key=lambda i: entries[i].val_cost)
    return TrainReport(
        entries=entries,
        best_index=best_index,
        final_weights=list(entries[best_index].weights),
        feature_scale=scale,
        config=cfg,
    )


def save_checkpoint(path: str | Path, report: TrainReport, triplet) -> None:
    payload = {
        "weights": report.final_weights,
        "feature_scale": list(report.feature_scale),
        "triplet": [
            {"kernel": fd.kernel.name, "pipeline": [a.value for a in fd.pipeline]}
            for fd in triplet
        ],
        "config_hash": report.config.digest(),
    }
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def load_checkpoint(path: str | Path) -> TrainableNetwork:
    payload = json.loads(Path(path).read_text())
    triplet = tuple(descriptor_from_record(r) for r in payload["triplet"])
    return TrainableNetwork(triplet, list(payload["weights"]), tuple(payload["feature_scale"]))
