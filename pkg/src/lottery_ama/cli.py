"""Command-line entry point: ``lottery-ama <subcommand> --config FILE --seed N``.

Exit codes: 0 success, 2 config error, 3 numerical failure, 4 invariant
violation.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from dataclasses import replace
from pathlib import Path

from lottery_ama.baselines import (
    grand_bundle_revenue,
    myerson_monte_carlo,
    separate_myerson_revenue,
    train_deterministic_ama,
    vcg_mechanism,
)
from lottery_ama.config import ExperimentConfig, load_config
from lottery_ama.errors import AmaError, ConfigError
from lottery_ama.evaluation import (
    allocation_usage,
    estimate_regret,
    evaluate_revenue,
    lottery_ticket_experiment,
)
from lottery_ama.mechanism import count_deterministic_allocations, load_mechanism, save_mechanism
from lottery_ama.optim import TrainTrace, train
from lottery_ama.params import AmaParams
from lottery_ama.results import ResultRow, append_result, run_stem

log = logging.getLogger("lottery_ama")

RESULTS_FILE = "results.csv"


def _record(args, exp: ExperimentConfig, **cols) -> ResultRow:
    row = ResultRow(experiment_id=exp.experiment_id, setting=exp.setting, seed=args.seed, **cols)
    append_result(Path(args.out_dir) / RESULTS_FILE, row)
    print(json.dumps({k: v for k, v in vars(row).items() if v != ""}))
    return row


def _audit(mech, exp: ExperimentConfig, seed: int) -> dict:
    rev = evaluate_revenue(mech, exp.distribution, exp.test_samples, seed)
    regret = estimate_regret(mech, exp.distribution, exp.regret_profiles, exp.regret_misreports, seed)
    usage = allocation_usage(mech, exp.distribution, exp.test_samples, seed)
    return dict(revenue_mean=rev.mean, revenue_se=rev.se, max_regret=regret.overall,
                used_allocations=usage.count_used, K=mech.menu_size)


def cmd_train(args, exp: ExperimentConfig) -> None:
    out = Path(args.out_dir)
    stem = run_stem(exp.experiment_id, args.seed)
    ckpt = out / f"{stem}-checkpoints" if args.checkpoints else None
    start = time.perf_counter()
    mech, trace = train(exp.train, exp.distribution, exp.feasibility, checkpoint_dir=ckpt)
    wall = time.perf_counter() - start
    out.mkdir(parents=True, exist_ok=True)
    save_mechanism(mech, out / f"{stem}.json")
    trace.initial_params.save(out / f"{stem}.initial.npz")
    trace.final_params.save(out / f"{stem}.final.npz")
    (out / f"{stem}.trace.json").write_text(json.dumps({
        "config": exp.train.to_dict(),
        "soft_revenue": trace.soft_revenue,
        "eval_steps": trace.eval_steps,
        "eval_revenue": trace.eval_revenue,
        "wall_clock_s": trace.wall_clock_s,
        "snapshots": trace.snapshots,
    }))
    kind = f"{exp.train.mechanism_kind}-ama"
    _record(args, exp, mechanism_kind=kind, steps=exp.train.steps, batch=exp.train.batch_size,
            wall_clock_s=round(wall, 3), **_audit(mech, exp, args.seed))
    print(f"mechanism: {out / f'{stem}.json'}")


def _load_mech(args, exp):
    if not args.mechanism:
        raise ConfigError("--mechanism is required")
    mech = load_mechanism(args.mechanism)
    if (mech.num_bidders, mech.num_items) != (exp.distribution.m, exp.distribution.n):
        raise ConfigError("mechanism does not match the configured m and n")
    return mech


def cmd_eval(args, exp):
    mech = _load_mech(args, exp)
    start = time.perf_counter()
    rev = evaluate_revenue(mech, exp.distribution, exp.test_samples, args.seed)
    _record(args, exp, mechanism_kind="ama", K=mech.menu_size, revenue_mean=rev.mean, revenue_se=rev.se,
            wall_clock_s=round(time.perf_counter() - start, 3))


def cmd_regret(args, exp):
    mech = _load_mech(args, exp)
    start = time.perf_counter()
    rep = estimate_regret(mech, exp.distribution, exp.regret_profiles, exp.regret_misreports, args.seed)
    print(json.dumps({"method": rep.method, "per_bidder_max_regret": rep.max_regret.tolist(),
                      "best_misreport": rep.best_misreport.tolist()}))
    _record(args, exp, mechanism_kind="ama", K=mech.menu_size, max_regret=rep.overall,
            wall_clock_s=round(time.perf_counter() - start, 3))


def cmd_usage(args, exp):
    mech = _load_mech(args, exp)
    start = time.perf_counter()
    rep = allocation_usage(mech, exp.distribution, exp.test_samples, args.seed)
    print(json.dumps({"used_indices": rep.used_indices.tolist(), "count_used": rep.count_used,
                      "count_at_initialization": rep.count_at_initialization,
                      "count_deterministic": rep.count_deterministic}))
    _record(args, exp, mechanism_kind="ama", K=mech.menu_size, used_allocations=rep.count_used,
            wall_clock_s=round(time.perf_counter() - start, 3))


def cmd_enumerate(args, exp):
    d = exp.distribution
    count = count_deterministic_allocations(d.m, d.n, exp.feasibility)
    mech = vcg_mechanism(d.m, d.n, exp.feasibility)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{run_stem(exp.experiment_id, args.seed)}.enumerated.json"
    save_mechanism(mech, path)
    print(json.dumps({"m": d.m, "n": d.n, "feasibility": exp.feasibility, "count": count, "mechanism": str(path)}))


def cmd_baseline(args, exp):
    d = exp.distribution
    start = time.perf_counter()
    if args.kind == "separate-myerson":
        mc_mean, mc_se = myerson_monte_carlo(d, exp.test_samples, args.seed)
        print(json.dumps({"closed_form": separate_myerson_revenue(d.m, d.n, d.low, d.high)}))
        cols = dict(revenue_mean=mc_mean, revenue_se=mc_se, max_regret=0.0)
    elif args.kind == "grand-bundle":
        reserve, mean, se = grand_bundle_revenue(d, exp.test_samples, exp.test_samples, args.seed)
        print(json.dumps({"reserve": reserve}))
        cols = dict(revenue_mean=mean, revenue_se=se, max_regret=0.0)
    elif args.kind == "vcg":
        cols = _audit(vcg_mechanism(d.m, d.n, exp.feasibility), exp, args.seed)
    else:
        mech, trace = train_deterministic_ama(d, exp.feasibility, exp.train)
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        save_mechanism(mech, out / f"{run_stem(exp.experiment_id, args.seed)}.deterministic.json")
        cols = dict(steps=exp.train.steps, batch=exp.train.batch_size, **_audit(mech, exp, args.seed))
    _record(args, exp, mechanism_kind=args.kind, wall_clock_s=round(time.perf_counter() - start, 3), **cols)


def cmd_ticket(args, exp):
    if not args.run:
        raise ConfigError("--run (artifact stem of a finished training run) is required")
    stem = Path(args.run)
    init_path, final_path = Path(f"{stem}.initial.npz"), Path(f"{stem}.final.npz")
    if not init_path.exists():
        raise ConfigError(f"missing initial-parameter snapshot {init_path}")
    if not final_path.exists():
        raise ConfigError(f"missing final parameters {final_path}")
    trace = TrainTrace(initial_params=AmaParams.load(init_path), final_params=AmaParams.load(final_path))
    start = time.perf_counter()
    seeds = tuple(args.seed + s for s in range(args.data_seeds))
    report = lottery_ticket_experiment(trace, exp.distribution, exp.feasibility, exp.train, data_seeds=seeds,
                                       test_samples=exp.test_samples, usage_samples=exp.test_samples,
                                       eval_seed=args.seed)
    wall = round(time.perf_counter() - start, 3)
    for r in report.rows():
        print(json.dumps(r))
    for arm in (report.ticket, report.random):
        _record(args, replace(exp, experiment_id=f"{exp.experiment_id}-{arm.name}"), mechanism_kind=arm.name,
                K=int(report.slots.size), steps=exp.train.steps, batch=exp.train.batch_size,
                revenue_mean=arm.mean, wall_clock_s=wall)


COMMANDS = {
    "train": (cmd_train, "train a lottery or deterministic AMA"),
    "eval": (cmd_eval, "exact-mode revenue of a saved mechanism"),
    "regret": (cmd_regret, "heuristic misreport search on a saved mechanism"),
    "usage": (cmd_usage, "menu entries chosen on sampled profiles"),
    "enumerate": (cmd_enumerate, "enumerate deterministic allocations"),
    "baseline": (cmd_baseline, "reference mechanisms"),
    "ticket": (cmd_ticket, "winning-ticket retraining experiment"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lottery-ama", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="flat key-value config file")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out-dir", default="runs")
        if name in ("eval", "regret", "usage"):
            p.add_argument("--mechanism", required=True, help="mechanism JSON file")
        if name == "train":
            p.add_argument("--checkpoints", action="store_true", help="write periodic checkpoints")
        if name == "baseline":
            p.add_argument("--kind", default="separate-myerson",
                           choices=["separate-myerson", "grand-bundle", "vcg", "deterministic"])
        if name == "ticket":
            p.add_argument("--run", required=True, help="artifact stem written by `train`")
            p.add_argument("--data-seeds", type=int, default=4)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        exp = load_config(args.config, seed=args.seed)
        COMMANDS[args.command][0](args, exp)
    except AmaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except FloatingPointError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
