"""Command-line interface: campaign management, benchmarking, serving."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import campaign as camp
from . import data
from .records import OBSERVATION_HEADER, observations_to_csv
from .space import load_space


def _load_state(path: str) -> camp.CampaignState:
    return camp.load_snapshot(Path(path).read_text())


def _save_state(state: camp.CampaignState, path: str) -> None:
    Path(path).write_text(json.dumps(camp.save_snapshot(state), indent=2) + "\n")


def _plan_csv(plan: camp.RoundPlan) -> str:
    lines = [OBSERVATION_HEADER]
    for i, c in enumerate(plan.conditions):
        vals = ",".join(f"{v:g}" for v in c.values)
        lines.append(f"{i},{vals},,")
    return "\n".join(lines) + "\n"


def cmd_campaign_new(args) -> int:
    space = load_space(args.space) if args.space else data.canonical_space()
    config = camp.CampaignConfig(batch_size=args.batch_size, seed=args.seed)
    prior = None
    if args.prior:
        from .records import parse_observation_csv

        prior = parse_observation_csv(Path(args.prior).read_text(), space)
    state = camp.new_campaign(space, config, prior_dataset=prior)
    _save_state(state, args.state)
    print(f"campaign {state.id}: {len(config.schedule)} rounds of {config.batch_size}, "
          f"grid of {space.grid_size} conditions -> {args.state}")
    return 0


def cmd_campaign_suggest(args) -> int:
    state = _load_state(args.state)
    plan = camp.suggest_next_round(state)
    _save_state(state, args.state)
    text = _plan_csv(plan)
    if args.out:
        Path(args.out).write_text(text)
        print(f"round {plan.round_index} ({plan.method}): {len(plan.conditions)} "
              f"conditions -> {args.out}")
    else:
        sys.stdout.write(text)
    return 0


def cmd_campaign_ingest(args) -> int:
    state = _load_state(args.state)
    camp.ingest_results(state, Path(args.results).read_text(),
                        allow_off_plan=args.allow_off_plan)
    _save_state(state, args.state)
    print(f"campaign {state.id}: {len(state.observations)} observations, "
          f"status {state.status}")
    return 0


def cmd_campaign_export(args) -> int:
    state = _load_state(args.state)
    text = observations_to_csv(state.observations)
    if args.out:
        Path(args.out).write_text(text)
        print(f"{len(state.observations)} observations -> {args.out}")
    else:
        sys.stdout.write(text)
    return 0


def cmd_campaign_manifold(args) -> int:
    state = _load_state(args.state)
    objective = camp.fit_objective_model(state)
    matrix, xi_vals, xj_vals = camp.manifold_projection(
        objective, state.space, args.xi, args.xj,
        grid=args.grid, samples=args.samples, seed=args.seed, reduce=args.reduce,
    )
    lines = ["," + ",".join(f"{v:g}" for v in xj_vals)]
    for a, xv in enumerate(xi_vals):
        lines.append(f"{xv:g}," + ",".join(f"{matrix[a, b]:.4f}" for b in range(len(xj_vals))))
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
        print(f"manifold {state.space.names[args.xi]} x {state.space.names[args.xj]} "
              f"-> {args.out}")
    else:
        sys.stdout.write(text)
    return 0


def cmd_campaign_replay(args) -> int:
    """Re-drive the bundled campaign data through the full schedule."""
    space = data.canonical_space()
    state = camp.new_campaign(space, camp.CampaignConfig(seed=args.seed))
    observations = data.load_dataset()
    for round_index in range(len(state.config.schedule)):
        plan = camp.suggest_next_round(state)
        batch = [o for o in observations if o.round_index == round_index]
        camp.ingest_results(state, batch, allow_off_plan=True)
        best = state.best_observation()
        print(f"round {round_index} ({plan.method}): ingested {len(batch)} rows, "
              f"best so far {best.pce_pct if best else None}")
    if args.state:
        _save_state(state, args.state)
        print(f"final state -> {args.state}")
    return 0


def cmd_bench_run(args) -> int:
    from . import bench
    from .records import dedup_max_pce
    from .space import normalize
    from .teacher import fit_teacher, percentile_marks
    import numpy as np
    from . import gp

    space = data.canonical_space()
    observations = data.load_dataset()
    teacher = fit_teacher(observations)
    marks = percentile_marks(teacher, space, seed=args.seed)
    film_emulator = None
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    if "bo_kc" in methods:
        ded = dedup_max_pce(observations)
        X = normalize(np.array([o.condition.values for o in ded]), space)
        y = np.array([1.0 if o.film_pass else 0.0 for o in ded])
        film_emulator = gp.fit(X, y, gp.GpFitConfig(seed=args.seed))
    results = {}
    for method in methods:
        if method not in bench.METHODS:
            print(f"unknown method {method!r}", file=sys.stderr)
            return 2
        print(f"running {method}: {args.runs} runs at budget {args.budget} ...")
        results[method] = bench.ensemble(
            method, teacher, space, args.budget, runs=args.runs,
            base_seed=args.seed, batch_size=args.batch_size,
            film_emulator=film_emulator, workers=args.workers,
        )
    summary = bench.write_report(results, marks, args.out)
    if args.plots:
        written = bench.plot_report(results, args.out)
        print("plots:", ", ".join(written))
    print(json.dumps(summary, indent=2, default=str))
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import CampaignStore, create_app

    app = create_app(CampaignStore(args.persist_dir), ui_dir=args.ui_dir)
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="procopt")
    sub = parser.add_subparsers(dest="command", required=True)

    p_campaign = sub.add_parser("campaign", help="manage an experiment campaign")
    csub = p_campaign.add_subparsers(dest="subcommand", required=True)

    p = csub.add_parser("new", help="create a campaign snapshot")
    p.add_argument("state", help="snapshot file to write")
    p.add_argument("--space", help="space definition JSON (default: bundled grid)")
    p.add_argument("--batch-size", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--prior", help="prior dataset CSV enabling the prior-data constraint")
    p.set_defaults(func=cmd_campaign_new)

    p = csub.add_parser("suggest", help="plan the next round")
    p.add_argument("state")
    p.add_argument("--out", help="write the plan CSV here instead of stdout")
    p.set_defaults(func=cmd_campaign_suggest)

    p = csub.add_parser("ingest", help="ingest measured results")
    p.add_argument("state")
    p.add_argument("results", help="results CSV (canonical observation schema)")
    p.add_argument("--allow-off-plan", action="store_true")
    p.set_defaults(func=cmd_campaign_ingest)

    p = csub.add_parser("export", help="export all observations as CSV")
    p.add_argument("state")
    p.add_argument("--out")
    p.set_defaults(func=cmd_campaign_export)

    p = csub.add_parser("manifold", help="project the response surface onto a pair")
    p.add_argument("state")
    p.add_argument("--xi", type=int, required=True)
    p.add_argument("--xj", type=int, required=True)
    p.add_argument("--reduce", choices=("max", "mean"), default="max")
    p.add_argument("--grid", type=int, default=20)
    p.add_argument("--samples", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_campaign_manifold)

    p = csub.add_parser("replay", help="replay the bundled dataset end to end")
    p.add_argument("--state", help="write the final snapshot here")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_campaign_replay)

    p_bench = sub.add_parser("bench", help="virtual benchmarking")
    bsub = p_bench.add_subparsers(dest="subcommand", required=True)
    p = bsub.add_parser("run", help="run seeded ensembles of planning methods")
    p.add_argument("--methods", default="bo,bo_kc,lhs,ovats,fspgs")
    p.add_argument("--budget", type=int, default=300)
    p.add_argument("--runs", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--batch-size", type=int, default=20)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--out", default="bench_report")
    p.add_argument("--plots", action="store_true")
    p.set_defaults(func=cmd_bench_run)

    p = sub.add_parser("serve", help="run the campaign HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--persist-dir")
    p.add_argument("--ui-dir", help="static directory with the built web console")
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
