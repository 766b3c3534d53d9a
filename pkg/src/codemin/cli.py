"""Command-line front end.

Commands: gen (random topology), opt (centralized or distributed
optimization), baseline (minimal1/minimal2 batches), compare (Table-style
four-method comparison), eval (single-chromosome debugging).

Exit codes: 0 ok, 2 usage, 3 infeasible instance, 4 internal error. The
CODEMIN_SEED environment variable supplies the default seed. All CSV/JSON
artifacts are byte-reproducible from the recorded seed and arguments; wall
times go to stderr only.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import statistics
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .baselines import minimal1, minimal2, run_baseline_batch
from .chromosome import chromosome_from_str, chromosome_to_str, count_coding_links, layout_of
from .distsim import run_distributed
from .errors import CodeminError, InfeasibleError
from .evaluators import AlgebraicEvaluator, DecompositionEvaluator
from .ga import GAParams, RunStats, evolve
from .rng import derive_rng
from .topology import (generate_random_instance, load_topology, make_acyclic_subgraph,
                       min_sink_max_flow)


def _default_seed() -> int:
    return int(os.environ.get("CODEMIN_SEED", "0"))


def _fitness_json(fit):
    return fit.coding_links if fit.is_feasible else "inf"


def _write_trace_csv(path: Path, stats: RunStats) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["generation", "best", "mean"])
        for row in stats.history:
            writer.writerow([row.generation, str(row.best),
                             "" if row.mean is None else f"{row.mean:.6f}"])


def _json_dump(path: Path, payload: dict) -> None:
    text = json.dumps(payload, indent=2, sort_keys=True)
    path.write_text(text + "\n", encoding="utf-8")
    print(text)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_gen(args) -> int:
    g = generate_random_instance(args.nodes, args.links, args.sinks, args.rate,
                                 args.seed)
    Path(args.output).write_text(g.to_json(), encoding="utf-8")
    print(f"wrote {args.output}: |V|={len(g.nodes)} |E|={g.n_links} "
          f"min sink max-flow={min_sink_max_flow(g)}")
    return 0


def cmd_opt(args) -> int:
    g = load_topology(args.topology)
    if args.acyclic_prune:
        g = make_acyclic_subgraph(g)
    params = GAParams(
        population_size=args.pop,
        generations=args.gens,
        representation=args.repr,
        tournament_size=args.tournament,
        crossover_probability=args.pc,
        mutation_rate=args.alpha,
        evaluator=args.method,
        q=1 << args.field_bits,
        trials=args.trials,
        seed=args.seed,
    )
    t0 = time.perf_counter()
    if args.mode == "central":
        stats = evolve(g, params)
    else:
        trace_fh = open(args.trace, "w", encoding="utf-8") if args.trace else None
        try:
            stats = run_distributed(g, params, workers=args.workers, trace=trace_fh)
        finally:
            if trace_fh:
                trace_fh.close()
    elapsed = time.perf_counter() - t0

    prefix = Path(args.out_prefix)
    _write_trace_csv(prefix.with_suffix(".csv"), stats)
    summary = {
        "command": "opt",
        "topology": str(args.topology),
        "mode": args.mode,
        "method": args.method,
        "representation": args.repr,
        "acyclic_prune": bool(args.acyclic_prune),
        "params": {
            "population_size": params.population_size,
            "generations": params.generations,
            "tournament_size": params.tournament_size,
            "crossover_probability": params.crossover_probability,
            "mutation_rate": params.mutation_rate,
            "field_order": params.q,
            "trials": params.trials,
            "seed": params.seed,
        },
        "best_before_sweep": _fitness_json(stats.best_fitness),
        "best_after_sweep": _fitness_json(stats.swept_fitness),
        "chromosome_before_sweep": chromosome_to_str(stats.best_chromosome, stats.layout),
        "chromosome_after_sweep": chromosome_to_str(stats.swept_chromosome, stats.layout),
        "evaluations": stats.evaluations,
        "generations_run": len(stats.history),
    }
    _json_dump(prefix.with_suffix(".json"), summary)
    print(f"completed in {elapsed:.2f}s", file=sys.stderr)
    return 0


def cmd_baseline(args) -> int:
    g = load_topology(args.topology)
    rows = run_baseline_batch(g, args.method, args.trials, args.seed)
    counts = [c for _s, c in rows]
    best = min(counts)
    avg = statistics.fmean(counts)
    std = statistics.pstdev(counts)
    with open(args.output, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["seed", "method", "coding_links", "best", "avg", "std"])
        for trial_seed, count in rows:
            writer.writerow([trial_seed, args.method, count, "", "", ""])
        writer.writerow(["summary", args.method, "", best, f"{avg:.6f}", f"{std:.6f}"])
    print(f"{args.method}: best={best} avg={avg:.2f} std={std:.2f} "
          f"({args.trials} trials) -> {args.output}")
    return 0


_COMPARE_METHODS = ("block", "bit", "minimal1", "minimal2")


def _compare_trial(doc: str, method: str, trial_seed: int, pop: int, gens: int) -> int:
    from .topology import parse_topology
    import random
    g = parse_topology(doc)
    if method in ("minimal1", "minimal2"):
        fn = minimal1 if method == "minimal1" else minimal2
        return fn(g, random.Random(trial_seed))
    params = GAParams(population_size=pop, generations=gens, representation=method,
                      seed=trial_seed)
    return evolve(g, params).swept_fitness.coding_links


def cmd_compare(args) -> int:
    g = load_topology(args.topology)
    doc = g.to_json()
    tasks = []
    for method in _COMPARE_METHODS:
        for trial in range(args.trials):
            trial_seed = derive_rng(args.seed, "compare", method, trial).randrange(1 << 31)
            tasks.append((method, trial_seed))
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            counts = list(pool.map(_compare_trial, [doc] * len(tasks),
                                   [m for m, _ in tasks], [s for _, s in tasks],
                                   [args.pop] * len(tasks), [args.gens] * len(tasks)))
    else:
        counts = [_compare_trial(doc, m, s, args.pop, args.gens) for m, s in tasks]

    per_method: dict[str, list[int]] = {m: [] for m in _COMPARE_METHODS}
    seeds: dict[str, list[int]] = {m: [] for m in _COMPARE_METHODS}
    for (method, trial_seed), count in zip(tasks, counts):
        per_method[method].append(count)
        seeds[method].append(trial_seed)

    with open(Path(args.out_prefix).with_suffix(".csv"), "w", newline="",
              encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["method", "best", "avg", "std"])
        for method in _COMPARE_METHODS:
            vals = per_method[method]
            writer.writerow([method, min(vals), f"{statistics.fmean(vals):.6f}",
                             f"{statistics.pstdev(vals):.6f}"])
    summary = {
        "command": "compare",
        "topology": str(args.topology),
        "trials": args.trials,
        "seed": args.seed,
        "population_size": args.pop,
        "generations": args.gens,
        "results": {m: {"values": per_method[m], "seeds": seeds[m],
                        "best": min(per_method[m]),
                        "avg": statistics.fmean(per_method[m]),
                        "std": statistics.pstdev(per_method[m])}
                    for m in _COMPARE_METHODS},
    }
    _json_dump(Path(args.out_prefix).with_suffix(".json"), summary)
    print(f"{'method':<10}{'best':>6}{'avg':>9}{'std':>9}")
    for method in _COMPARE_METHODS:
        vals = per_method[method]
        print(f"{method:<10}{min(vals):>6}{statistics.fmean(vals):>9.2f}"
              f"{statistics.pstdev(vals):>9.2f}")
    return 0


def cmd_eval(args) -> int:
    g = load_topology(args.topology)
    layout = layout_of(g)
    text = args.chromosome.strip()
    if set(text) <= {"0", "1"} and len(text) == layout.m:
        bits = bytes(int(c) for c in text)
    else:
        bits = chromosome_from_str(text, layout)
    if args.method == "decomposition":
        fit = DecompositionEvaluator(g).evaluate(bits)
    else:
        ev = AlgebraicEvaluator(g, q=1 << args.field_bits, trials=args.trials)
        fit = ev.evaluate(bits, derive_rng(args.seed, "cli-eval"))
    print(json.dumps({
        "chromosome": chromosome_to_str(bits, layout),
        "coding_blocks": count_coding_links(bits, layout),
        "feasible": fit.is_feasible,
        "fitness": _fitness_json(fit),
        "method": args.method,
    }, indent=2, sort_keys=True))
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="codemin",
        description="Minimize network-coding links for a target multicast rate.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a random feasible layered topology")
    p.add_argument("--nodes", type=int, required=True)
    p.add_argument("--links", type=int, required=True)
    p.add_argument("--sinks", type=int, required=True)
    p.add_argument("--rate", type=_positive_int, required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(fn=cmd_gen)

    p = sub.add_parser("opt", help="run the evolutionary optimizer")
    p.add_argument("topology")
    p.add_argument("--mode", choices=("central", "dist"), default="central")
    p.add_argument("--method", choices=("decomposition", "algebraic"),
                   default="decomposition",
                   help="fitness evaluator for central mode (dist always builds "
                        "random linear codes)")
    p.add_argument("--repr", choices=("block", "bit"), default="block")
    p.add_argument("--pop", type=int, default=150)
    p.add_argument("--gens", type=int, default=1000)
    p.add_argument("--tournament", type=int, default=None)
    p.add_argument("--pc", type=float, default=0.8)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--field-bits", type=int, default=16)
    p.add_argument("--trials", type=int, default=2)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--acyclic-prune", action="store_true")
    p.add_argument("--workers", type=int, default=1,
                   help="parallel node scheduler width for dist mode")
    p.add_argument("--trace", default=None, help="JSONL protocol trace (dist mode)")
    p.add_argument("-o", "--out-prefix", default="run")
    p.set_defaults(fn=cmd_opt)

    p = sub.add_parser("baseline", help="randomized greedy baselines")
    p.add_argument("topology")
    p.add_argument("--method", choices=("minimal1", "minimal2"), required=True)
    p.add_argument("--trials", type=_positive_int, default=30)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("-o", "--output", default="baseline.csv")
    p.set_defaults(fn=cmd_baseline)

    p = sub.add_parser("compare", help="block GA vs bit GA vs minimal1/minimal2")
    p.add_argument("topology")
    p.add_argument("--trials", type=_positive_int, default=30)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--pop", type=int, default=150)
    p.add_argument("--gens", type=int, default=1000)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("-o", "--out-prefix", default="compare")
    p.set_defaults(fn=cmd_compare)

    p = sub.add_parser("eval", help="evaluate one chromosome")
    p.add_argument("topology")
    p.add_argument("--chromosome", required=True,
                   help="hash-prefixed hex form, or a raw 0/1 string")
    p.add_argument("--method", choices=("decomposition", "algebraic"),
                   default="decomposition")
    p.add_argument("--field-bits", type=int, default=16)
    p.add_argument("--trials", type=int, default=2)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(fn=cmd_eval)

    return parser


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "seed", None) is None:
        args.seed = _default_seed()
    try:
        return args.fn(args)
    except InfeasibleError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except (CodeminError, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
