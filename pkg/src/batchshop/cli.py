"""Command-line front end: instance generation, solving, schedule checking,
front scoring, and multi-run comparison grids.

All outputs are deterministic under fixed seeds and evaluation budgets:
instance/report documents are sorted-key JSON, fronts and metric tables are
CSV sorted by their key columns.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from multiprocessing import Pool
from pathlib import Path

import numpy as np

from .disjgraph import build_graph
from .instance import Instance, InstanceError, generate_instance, read_instance, write_instance
from .metrics import (
    friedman_mean_ranks,
    hv_reference,
    hypervolume,
    igd,
    merged_reference_front,
    spread,
)
from .moead import VARIANTS, SolverParams, solve
from .schedule import (
    InfeasibleScheduleError,
    check_feasibility,
    decode,
    decode_table,
    read_schedule,
    write_schedule,
)

PAPER_SUITE = [
    (n, s, ms)
    for n in (20, 30, 40, 50, 60)
    for s in (3, 4, 5)
    for ms in (3, 4, 5)
]
SMALL_SUITE_JOBS = (10, 15, 20)
SMALL_SUITE_STAGES = (2, 3)


def _add_solver_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0, help="random seed")
    p.add_argument("--budget-evals", type=int, default=None,
                   help="terminate after this many move evaluations (deterministic)")
    p.add_argument("--runtime-ms", type=int, default=None,
                   help="terminate after this wall-clock time")
    p.add_argument("--variant", default="AMOEAD", choices=VARIANTS)
    p.add_argument("--popsize", type=int, default=40)
    p.add_argument("--tabu-l", type=int, default=2, dest="tabu_l",
                   help="consecutive same-side updates before a weight rotation (L)")
    p.add_argument("--neighbors-t", type=int, default=5, dest="neighbors_t",
                   help="neighborhood size T")
    p.add_argument("--alpha", type=float, default=0.1, help="Q-learning rate")
    p.add_argument("--gamma", type=float, default=0.9, help="Q-learning discount")


def _params_from_args(args, variant: str | None = None) -> SolverParams:
    budget = args.budget_evals
    if budget is None and args.runtime_ms is None:
        budget = 20000
    return SolverParams(
        popsize=args.popsize,
        rotation_threshold=args.tabu_l,
        neighborhood_size=args.neighbors_t,
        alpha=args.alpha,
        discount=args.gamma,
        variant=variant or args.variant,
        budget_evals=budget,
        runtime_ms=args.runtime_ms,
    )


def _write_front_csv(path: Path, front) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["makespan", "tec"])
        for mk, tec in sorted((p[0], p[1]) for p in front):
            w.writerow([mk, repr(float(tec))])


def _read_front_csv(path: Path) -> list[tuple[float, float]]:
    with path.open() as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"{path}: empty front file")
    return [(float(r["makespan"]), float(r["tec"])) for r in rows]


# -- subcommands ----------------------------------------------------------------


def cmd_gen(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if args.suite == "paper45":
        for idx, (n, s, ms) in enumerate(PAPER_SUITE):
            inst = generate_instance(n, s, ms, args.batch_prob, seed=args.seed + idx)
            path = out / f"inst_n{n}_s{s}_m{ms}_seed{args.seed + idx}.json"
            write_instance(inst, path)
            written.append(path)
    elif args.suite == "small":
        for idx in range(9):
            n = SMALL_SUITE_JOBS[idx % 3]
            s = SMALL_SUITE_STAGES[idx % 2]
            inst = generate_instance(n, s, 2, args.batch_prob, seed=args.seed + idx)
            path = out / f"inst_small{idx}_n{n}_s{s}_seed{args.seed + idx}.json"
            write_instance(inst, path)
            written.append(path)
    else:
        inst = generate_instance(
            args.jobs, args.stages, args.max_machines, args.batch_prob, seed=args.seed
        )
        path = out / f"inst_n{args.jobs}_s{args.stages}_m{args.max_machines}_seed{args.seed}.json"
        write_instance(inst, path)
        written.append(path)
    for p in written:
        print(p)
    return 0


def cmd_solve(args) -> int:
    inst = read_instance(args.instance)
    params = _params_from_args(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    trace_fh = (out / "trace.log").open("w") if args.trace else None
    trace = (lambda line: trace_fh.write(line + "\n")) if trace_fh else None
    try:
        result = solve(inst, params, args.seed, trace=trace)
    finally:
        if trace_fh:
            trace_fh.close()

    _write_front_csv(out / "front.csv", result.front)
    (out / "report.json").write_text(
        json.dumps(result.report, indent=2, sort_keys=True) + "\n"
    )
    schedules = [ind.schedule.to_dict() for ind in result.archive]
    (out / "schedules.json").write_text(
        json.dumps({"schedules": schedules}, indent=2, sort_keys=True) + "\n"
    )
    print(f"front size {len(result.front)}, evaluations {result.report['evaluations_used']}")
    return 0


def cmd_check(args) -> int:
    inst = read_instance(args.instance)
    try:
        sched = read_schedule(args.schedule, inst)
        res = decode(inst, sched)
    except InfeasibleScheduleError as exc:
        print(f"violation: {exc}", file=sys.stderr)
        return 2
    report = check_feasibility(inst, sched, res)
    if args.out:
        path = Path(args.out)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["job", "stage", "machine", "batch", "start", "end"])
            for row in decode_table(res):
                w.writerow(row)
    if args.dump_graph:
        Path(args.dump_graph).write_text(build_graph(inst, sched).edge_list() + "\n")
    if not report.ok:
        print(f"violation: {report.violation}: {report.detail}", file=sys.stderr)
        return 2
    print(f"feasible: makespan {res.objectives.makespan}, tec {res.objectives.tec}")
    return 0


def cmd_metrics(args) -> int:
    fronts = {Path(p).stem: _read_front_csv(Path(p)) for p in args.fronts}
    names = sorted(fronts)
    reference_front = merged_reference_front([fronts[n] for n in names])
    reference_point = hv_reference([fronts[n] for n in names])
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with (out / "metrics.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["front", "hv", "igd", "spread"])
        for n in names:
            try:
                sp = repr(spread(fronts[n]))
            except ValueError:
                sp = "nan"
            w.writerow([
                n,
                repr(hypervolume(fronts[n], reference_point)),
                repr(igd(fronts[n], reference_front)),
                sp,
            ])
    print(out / "metrics.csv")
    return 0


def _compare_job(task: tuple) -> tuple:
    path, variant, seed, params_kw = task
    inst = read_instance(path)
    params = SolverParams(variant=variant, **params_kw)
    res = solve(inst, params, seed)
    return (Path(path).stem, variant, seed, [(o.makespan, o.tec) for o in res.front])


def cmd_compare(args) -> int:
    instances = sorted(args.instances)
    variants = [v.strip() for v in args.variants.split(",") if v.strip()]
    for v in variants:
        if v not in VARIANTS:
            print(f"unknown variant {v!r}", file=sys.stderr)
            return 1
    seeds = list(range(args.seed, args.seed + args.seeds))
    budget = args.budget_evals
    if budget is None and args.runtime_ms is None:
        budget = 20000
    params_kw = dict(
        popsize=args.popsize,
        rotation_threshold=args.tabu_l,
        neighborhood_size=args.neighbors_t,
        alpha=args.alpha,
        discount=args.gamma,
        budget_evals=budget,
        runtime_ms=args.runtime_ms,
    )
    tasks = [
        (path, variant, seed, params_kw)
        for path in instances
        for variant in variants
        for seed in seeds
    ]
    if args.workers > 1:
        with Pool(args.workers) as pool:
            results = pool.map(_compare_job, tasks)
    else:
        results = [_compare_job(t) for t in tasks]

    fronts = {(inst, var, seed): front for inst, var, seed, front in results}
    out = Path(args.out)
    (out / "fronts").mkdir(parents=True, exist_ok=True)
    for (inst, var, seed), front in sorted(fronts.items()):
        _write_front_csv(out / "fronts" / f"{inst}__{var}__s{seed}.csv", front)

    inst_names = sorted({k[0] for k in fronts})
    rows = []
    scores_hv = {v: [] for v in variants}
    scores_igd = {v: [] for v in variants}
    scores_spread = {v: [] for v in variants}
    for inst_name in inst_names:
        union = [fronts[(inst_name, v, s)] for v in variants for s in seeds]
        ref_point = hv_reference(union)
        ref_front = merged_reference_front(union)
        per_variant_hv = {}
        per_variant_igd = {}
        per_variant_spread = {}
        for v in variants:
            hvs, igds, sps = [], [], []
            for s in seeds:
                front = fronts[(inst_name, v, s)]
                hv_val = hypervolume(front, ref_point)
                igd_val = igd(front, ref_front)
                try:
                    sp_val = spread(front)
                except ValueError:
                    sp_val = float("nan")
                hvs.append(hv_val)
                igds.append(igd_val)
                sps.append(sp_val)
                rows.append((inst_name, v, s, hv_val, igd_val, sp_val))
            per_variant_hv[v] = float(np.mean(hvs))
            per_variant_igd[v] = float(np.mean(igds))
            # all-singleton fronts leave spread undefined; rank those worst
            sp_mean = float(np.nanmean(sps)) if not all(np.isnan(sps)) else float("inf")
            per_variant_spread[v] = sp_mean
        for v in variants:
            scores_hv[v].append(per_variant_hv[v])
            scores_igd[v].append(per_variant_igd[v])
            scores_spread[v].append(per_variant_spread[v])

    with (out / "metrics.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["instance", "algorithm", "seed", "hv", "igd", "spread"])
        for inst_name, v, s, hv_val, igd_val, sp_val in sorted(rows, key=lambda r: (r[0], r[1], r[2])):
            w.writerow([inst_name, v, s, repr(hv_val), repr(igd_val), repr(sp_val)])

    hv_ranks, hv_chi = friedman_mean_ranks([scores_hv[v] for v in variants], higher_is_better=True)
    igd_ranks, igd_chi = friedman_mean_ranks([scores_igd[v] for v in variants], higher_is_better=False)
    spread_scores = [
        [x if not np.isinf(x) else 1e9 for x in scores_spread[v]] for v in variants
    ]
    sp_ranks, sp_chi = friedman_mean_ranks(spread_scores, higher_is_better=False)

    with (out / "ranks.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["algorithm", "hv_mean_rank", "igd_mean_rank", "spread_mean_rank"])
        for i, v in enumerate(variants):
            w.writerow([v, repr(hv_ranks[i]), repr(igd_ranks[i]), repr(sp_ranks[i])])

    summary = {
        "instances": inst_names,
        "variants": variants,
        "seeds": seeds,
        "budget": {"evals": budget, "runtime_ms": args.runtime_ms},
        "friedman_chi2": {"hv": hv_chi, "igd": igd_chi, "spread": sp_chi},
        "mean_ranks": {
            "hv": dict(zip(variants, hv_ranks)),
            "igd": dict(zip(variants, igd_ranks)),
            "spread": dict(zip(variants, sp_ranks)),
        },
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    print(out / "ranks.csv")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="batchshop",
        description="Bi-objective scheduling for hybrid flow shops with parallel-batching stages",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate instance files")
    p.add_argument("--suite", choices=["paper45", "small"], default=None)
    p.add_argument("--jobs", type=int, default=10)
    p.add_argument("--stages", type=int, default=3)
    p.add_argument("--max-machines", type=int, default=3)
    p.add_argument("--batch-prob", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("solve", help="run the solver on one instance")
    p.add_argument("--instance", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--trace", action="store_true", help="verbose run summary")
    _add_solver_flags(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("check", help="validate a schedule file against an instance")
    p.add_argument("--instance", required=True)
    p.add_argument("--schedule", required=True)
    p.add_argument("--out", default=None, help="write the per-operation decode table CSV here")
    p.add_argument("--dump-graph", default=None, help="write the disjunctive-graph arc list here")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("metrics", help="score front CSV files against their union")
    p.add_argument("--fronts", nargs="+", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("compare", help="variants x instances x seeds grid with rank summary")
    p.add_argument("--instances", nargs="+", required=True)
    p.add_argument("--variants", default="AMOEAD,AMOEAD1,AMOEAD2,AMOEAD3")
    p.add_argument("--seeds", type=int, default=10, help="number of seeds (0..n-1) per cell")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", required=True)
    _add_solver_flags(p)
    p.set_defaults(func=cmd_compare)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (InstanceError, InfeasibleScheduleError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
