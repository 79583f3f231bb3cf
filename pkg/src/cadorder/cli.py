"""Command-line entry point.

Subcommands wire the library into end-to-end experiments: ``gen`` writes
seeded datasets, ``features`` enumerates and deduplicates the grammar,
``order`` prints a heuristic's ordering for one problem, ``search`` ranks
feature triplets against a cost oracle, ``train`` tunes network weights,
and ``check`` verifies the lexicographic/network agreement.

Exit codes: 0 success, 1 usage error, 2 data error, 3 property violation.
Every command writes a run manifest next to its outputs.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from pathlib import Path

from . import __version__
from .costmodel import (
    ExternalSolverAdapter,
    MissingRecordError,
    SolverError,
    SyntheticCostModel,
    load_timing_table,
)
from .datagen import GenConfig, load_dataset, random_dataset, write_dataset
from .features import (
    brown_features,
    dedup_features,
    default_probe,
    descriptor_from_record,
    enumerate_descriptors,
    load_feature_set,
    selected_triplet,
)
from .heuristics import (
    BaseWeightError,
    HeuristicNetwork,
    check_equivalence,
    feature_matrix,
    layer1_forward,
    lex_order,
    nn_order,
    select_base_weight,
)
from .polyset import ParseError, parse_problem
from .search import search_triplets
from .training import TrainableNetwork, TrainConfig, save_checkpoint, train

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_VIOLATION = 3

DATA_ERRORS = (
    ParseError,
    MissingRecordError,
    SolverError,
    BaseWeightError,
    ValueError,
    OSError,
    json.JSONDecodeError,
)


class UsageError(Exception):
    """Semantically invalid invocation discovered after flag parsing."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def _sha256_path(path: Path) -> str | None:
    if path.is_file():
        return hashlib.sha256(path.read_bytes()).hexdigest()
    if path.is_dir():
        h = hashlib.sha256()
        for f in sorted(path.rglob("*")):
            if f.is_file():
                h.update(f.name.encode())
                h.update(f.read_bytes())
        return h.hexdigest()
    return None


def _write_manifest(command: str, args, inputs, outputs, started: float) -> None:
    manifest = {
        "command": command,
        "config": {k: v for k, v in sorted(vars(args).items()) if k != "func"},
        "inputs": {str(p): _sha256_path(Path(p)) for p in inputs},
        "outputs": {str(p): _sha256_path(Path(p)) for p in outputs},
        "tool_version": __version__,
        "wall_time_s": round(time.perf_counter() - started, 6),
    }
    outputs = list(outputs)
    first = Path(outputs[0])
    target = first / "run_manifest.json" if first.is_dir() else first.with_name(first.name + ".manifest.json")
    target.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _jobs_default() -> int:
    env = os.environ.get("CADORDER_JOBS")
    try:
        return max(1, int(env)) if env else 1
    except ValueError:
        return 1


def _add_oracle_flags(sub) -> None:
    sub.add_argument(
        "--oracle",
        default="synthetic",
        help="synthetic | table:<csv> | cmd:<template with {problem_file} {ordering}>",
    )
    sub.add_argument("--step-base", type=float, default=2.0, help="synthetic oracle step base")
    sub.add_argument("--noise-seed", type=int, default=None, help="synthetic oracle noise seed")
    sub.add_argument("--noise-scale", type=float, default=0.0, help="synthetic oracle noise scale")
    sub.add_argument("--timeout", type=float, default=None, help="timeout seconds (table/cmd oracle)")
    sub.add_argument("--penalty", type=float, default=1.0, help="timeout penalty factor")
    sub.add_argument("--max-procs", type=int, default=None, help="cap on concurrent solver processes")


def _build_oracle(args):
    spec = args.oracle
    if spec == "synthetic":
        return SyntheticCostModel(args.step_base, args.noise_seed, args.noise_scale)
    if spec.startswith("table:"):
        return load_timing_table(spec[len("table:"):], args.timeout, args.penalty)
    if spec.startswith("cmd:"):
        if args.timeout is None:
            raise ValueError("cmd oracle requires --timeout")
        return ExternalSolverAdapter(spec[len("cmd:"):], args.timeout, args.penalty, args.max_procs)
    raise ValueError(f"unknown oracle {spec!r}")


def _load_triplet(spec: str):
    if spec == "brown" or spec == "nn":
        return brown_features()
    if spec == "selected":
        return selected_triplet()
    records = json.loads(Path(spec).read_text())
    if len(records) != 3:
        raise ValueError(f"triplet file must hold exactly 3 descriptors, got {len(records)}")
    return tuple(descriptor_from_record(r) for r in records)


def cmd_gen(args) -> int:
    started = time.perf_counter()
    cfg = GenConfig(
        n_vars=args.n_vars,
        min_polys=args.min_polys,
        max_polys=args.max_polys,
        min_monomials=args.min_monomials,
        max_monomials=args.max_monomials,
        max_degree=args.max_degree,
        coeff_min=args.coeff_min,
        coeff_max=args.coeff_max,
        density=args.density,
        seed=args.seed,
    )
    problems = random_dataset(cfg, args.count)
    out = write_dataset(problems, args.out, cfg)
    _write_manifest("gen", args, [], [out], started)
    print(f"wrote {len(problems)} problems to {out}")
    return EXIT_OK


def cmd_features(args) -> int:
    started = time.perf_counter()
    if args.probe is not None:
        probe = load_dataset(args.probe)
    else:
        probe = default_probe()
    candidates = enumerate_descriptors()
    fs = dedup_features(candidates, probe)
    fs.save(args.out)
    _write_manifest("features", args, [args.probe] if args.probe else [], [args.out], started)
    print(f"{len(candidates)} valid descriptors -> {len(fs)} classes over {len(probe)} probe problems")
    return EXIT_OK


def cmd_order(args) -> int:
    started = time.perf_counter()
    pr = parse_problem(Path(args.problem).read_text(), problem_id=Path(args.problem).stem)
    triplet = _load_triplet(args.heuristic)
    fm = feature_matrix(triplet, pr)
    if args.heuristic == "nn":
        w = select_base_weight([pr], triplet)
        net = HeuristicNetwork(tuple(triplet), w)
        ordering = nn_order(net, pr)
    else:
        ordering = lex_order(fm)
    if args.reverse:
        ordering = ordering.reversed()
    if args.explain:
        for v, row in enumerate(fm.rows):
            print(f"{pr.variables[v].name}: features = {tuple(str(x) for x in row)}")
        if args.heuristic == "nn":
            for name, yv in zip(pr.var_names, layer1_forward(net, fm)):
                print(f"{name}: y = {yv}")
    print(ordering.names(pr))
    if args.out:
        Path(args.out).write_text(ordering.names(pr) + "\n")
        _write_manifest("order", args, [args.problem], [args.out], started)
    return EXIT_OK


def cmd_search(args) -> int:
    started = time.perf_counter()
    fs = load_feature_set(args.pool)
    dataset = load_dataset(args.data)
    oracle = _build_oracle(args)
    report = search_triplets(
        fs,
        dataset,
        oracle,
        top_k=args.top_k,
        journal_path=args.resume,
        jobs=args.jobs,
    )
    out_json = Path(args.out + ".json")
    out_csv = Path(args.out + ".csv")
    report.save_json(out_json)
    report.save_csv(out_csv)
    _write_manifest("search", args, [args.pool, args.data], [out_json, out_csv], started)
    best = report.ranked[0]
    print(
        f"evaluated {report.triplet_count} triplets; best {best['features']} "
        f"cost {best['total_cost']:.6g} vs baseline {report.baseline['total_cost']:.6g}"
    )
    return EXIT_OK


def cmd_train(args) -> int:
    started = time.perf_counter()
    triplet = _load_triplet(args.triplet)
    train_set = load_dataset(args.train)
    val_set = load_dataset(args.val)
    oracle = _build_oracle(args)
    cfg = TrainConfig(
        learning_rate=args.lr,
        epochs=args.epochs,
        batch_size=args.batch_size,
        softmax_temperature=args.temperature,
        seed=args.seed,
        normalize=not args.no_normalize,
        validate_per_batch=args.validate_per_batch,
    )
    net = TrainableNetwork.brown_init(triplet, base_weight=args.init_weight)
    report = train(net, train_set, val_set, oracle, cfg)
    out_json = Path(args.out + ".json")
    out_ckpt = Path(args.out + ".ckpt.json")
    out_json.write_text(json.dumps(report.to_json(), indent=2, sort_keys=True) + "\n")
    save_checkpoint(out_ckpt, report, triplet)
    _write_manifest("train", args, [args.train, args.val], [out_json, out_ckpt], started)
    print(
        f"epoch0 val cost {report.epoch0_val_cost:.6g} -> best (epoch {report.best_epoch}) "
        f"{report.best_val_cost:.6g}"
    )
    return EXIT_OK


def cmd_check(args) -> int:
    started = time.perf_counter()
    try:
        dataset = load_dataset(args.data)
    except FileNotFoundError as e:
        raise UsageError(f"empty dataset: {e}") from None
    triplet = _load_triplet(args.triplet)
    report = check_equivalence(dataset, triplet, force_w=args.force_w, jobs=args.jobs)
    payload = json.dumps(report.to_json(), indent=2, sort_keys=True) + "\n"
    if args.out:
        Path(args.out).write_text(payload)
        _write_manifest("check", args, [args.data], [args.out], started)
    else:
        print(payload, end="")
    print(
        f"{report.total} problems, {len(report.mismatches)} mismatches, "
        f"{len(report.violations)} weight violations"
    )
    return EXIT_OK if report.ok else EXIT_VIOLATION


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cadorder", description=__doc__.split("\n\n")[1])
    parser.add_argument("--version", action="version", version=f"cadorder {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a seeded random dataset")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--count", type=_positive_int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--n-vars", type=int, default=3)
    p.add_argument("--min-polys", type=int, default=1)
    p.add_argument("--max-polys", type=int, default=4)
    p.add_argument("--min-monomials", type=int, default=1)
    p.add_argument("--max-monomials", type=int, default=8)
    p.add_argument("--max-degree", type=int, default=6)
    p.add_argument("--coeff-min", type=int, default=-100)
    p.add_argument("--coeff-max", type=int, default=100)
    p.add_argument("--density", type=float, default=0.7)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("features", help="enumerate and deduplicate the feature grammar")
    p.add_argument("--probe", default=None, help="probe dataset dir (default: built-in probe)")
    p.add_argument("--out", required=True, help="feature-set JSON path")
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("order", help="print a heuristic's variable ordering")
    p.add_argument("--heuristic", default="brown", help="brown | nn | selected | <triplet.json>")
    p.add_argument("--problem", required=True)
    p.add_argument("--reverse", action="store_true", help="flip the printed order")
    p.add_argument("--explain", action="store_true", help="print feature rows (and y for nn)")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_order)

    p = sub.add_parser("search", help="rank feature triplets against a cost oracle")
    p.add_argument("--pool", required=True, help="feature-set JSON")
    p.add_argument("--data", required=True, help="dataset dir")
    p.add_argument("--top-k", type=int, default=None)
    p.add_argument("--resume", default=None, help="checkpoint journal path")
    p.add_argument("--jobs", type=int, default=_jobs_default())
    p.add_argument("--out", required=True, help="output path prefix")
    _add_oracle_flags(p)
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("train", help="tune first-layer weights by gradient descent")
    p.add_argument("--triplet", default="selected", help="brown | selected | <triplet.json>")
    p.add_argument("--train", required=True, help="training dataset dir")
    p.add_argument("--val", required=True, help="validation dataset dir")
    p.add_argument("--lr", type=float, default=2e-5)
    p.add_argument("--epochs", type=int, default=3)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--temperature", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--init-weight", type=float, default=30.0)
    p.add_argument("--no-normalize", action="store_true", help="train on raw feature values")
    p.add_argument("--validate-per-batch", action="store_true")
    p.add_argument("--out", required=True, help="output path prefix")
    _add_oracle_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("check", help="verify lexicographic/network ordering agreement")
    p.add_argument("--data", required=True, help="dataset dir")
    p.add_argument("--triplet", default="brown", help="brown | selected | <triplet.json>")
    p.add_argument("--force-w", type=int, default=None, help="override the base weight")
    p.add_argument("--jobs", type=int, default=_jobs_default())
    p.add_argument("--out", default=None, help="report JSON path")
    p.set_defaults(func=cmd_check)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except DATA_ERRORS as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
