"""Command-line entry point: ``ofdma-marl {train,eval,theory-check,oracle-compare,export-plots}``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from ..baselines import MethodKind, heuristic_allocation, method_spec
from ..env import path_graph
from ..federation import (
    advantage_disagreement_check,
    consensus_experiment,
    contraction_factor,
    metropolis_weights,
)
from ..oracle import enumerate_and_solve, objective_value, random_instance
from ..channel import own_gains
from .config import ExperimentConfig, reduced_config
from .evaluation import heuristic_policy, load_policy_set, run_evaluation
from .export import write_cdf, write_heatmap, write_records_csv, write_summary_json
from .metrics import cdf_data
from .training import run_training


def load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.from_file(args.config) if args.config else (
        reduced_config() if getattr(args, "reduced", False) else ExperimentConfig())
    kw = {}
    if getattr(args, "method", None):
        kw["method"] = method_spec(args.method).kind.value
    if getattr(args, "seed", None) is not None:
        kw["seed"] = args.seed
    if getattr(args, "updates", None) is not None:
        kw["n_updates"] = args.updates
    if getattr(args, "out", None):
        kw["out_dir"] = str(args.out)
    return cfg.with_overrides(**kw) if kw else cfg


def _fmt(rec) -> str:
    return (f"update {rec.update:4d}  sum-rate {rec.sum_rate:8.3f} +- {rec.sum_rate_ci:.3f}  "
            f"SINR {rec.mean_sinr_db:6.2f} dB  collisions {rec.collision_rate:.3f}  "
            f"Jain {rec.jain:.3f}  disagreement {rec.critic_disagreement:.3e}")


def cmd_train(args) -> int:
    cfg = load_config(args)
    out = Path(cfg.out_dir or "runs") / f"{cfg.method}_seed{cfg.seed}"
    cfg = cfg.with_overrides(out_dir=str(out))
    out.mkdir(parents=True, exist_ok=True)
    cfg.save(out / "config.json")

    def progress(log, rec):
        if rec.update == log.update:
            print(_fmt(rec), flush=True)

    res = run_training(cfg, progress=progress)
    print(f"final: {_fmt(res.final)}")
    print(f"outputs in {out}")
    return 0


def _policies(args, cfg):
    kind = method_spec(cfg.method).kind
    if method_spec(kind).learning:
        if not args.checkpoints:
            raise SystemExit("--checkpoints DIR is required for learning methods")
        return load_policy_set(args.checkpoints, cfg)
    return heuristic_policy(kind, cfg.heuristic_level)


def cmd_eval(args) -> int:
    cfg = load_config(args)
    res = run_evaluation(_policies(args, cfg), cfg, greedy=args.greedy)
    print(_fmt(res.record))
    print(f"sum-rate {res.record.sum_rate_mbps(cfg.mbps_per_unit):.3f} Mbps at {cfg.mbps_per_unit} Mbps per unit")
    if cfg.out_dir:
        out = Path(cfg.out_dir)
        write_records_csv([res.record], out / "eval.csv")
        write_records_csv(res.per_seed, out / "eval_per_seed.csv")
    return 0


def cmd_export_plots(args) -> int:
    cfg = load_config(args)
    out = Path(cfg.out_dir or "plots")
    res = run_evaluation(_policies(args, cfg), cfg, greedy=args.greedy)
    cdfs = cdf_data(res.traces)
    write_cdf(out / "cdf_sinr_db.csv", cdfs["sinr_db"])
    write_cdf(out / "cdf_link_rate.csv", cdfs["link_rate"])
    write_heatmap(out / "activity_heatmap.csv", res.record.activity)
    write_heatmap(out / "per_ue_rates.csv", res.record.per_ue_rates)
    write_summary_json(out / "eval_summary.json", [res.record], cfg.to_dict())
    print(f"plot data written to {out}")
    return 0


def cmd_theory_check(args) -> int:
    graph = path_graph(7)
    w = metropolis_weights(graph)
    sigma = contraction_factor(w)
    print(f"Metropolis weights on the 7-node path: sigma = {sigma:.6f}")
    print(f"row sums {np.abs(w.w.sum(1) - 1).max():.2e}, column sums {np.abs(w.w.sum(0) - 1).max():.2e}")
    for period in (1, 5):
        res = consensus_experiment(graph, args.rounds, period=period, scale=0.1, seed=args.seed)
        d = res.disagreements()
        g2 = res.grad_norms() ** 2
        print(f"K_g={period}: disagreement {d[0]:.3e} -> {d[-1]:.3e} (ratio {d[-1] / d[0]:.2e}), "
              f"min ||grad F||^2 {g2.min():.3e}")
    rng = np.random.default_rng(args.seed)
    holds = 0
    for _ in range(20):
        psi = rng.normal(size=(7, 6))
        feats = rng.normal(size=(7, 129, 6))
        rep = advantage_disagreement_check(psi, feats, rng.normal(size=128), 0.99)
        holds += rep.holds
    print(f"advantage bound held on {holds}/20 random linear-critic sets")
    return 0


def cmd_oracle_compare(args) -> int:
    rng = np.random.default_rng(args.seed)
    inst = random_instance(rng, n_bs=args.n_bs, n_sub=args.n_sub, n_ue=args.n_ue)
    sol = enumerate_and_solve(inst)
    print(f"instance: N={inst.n_bs} K={inst.n_sub} M={inst.n_ue} levels={inst.levels.levels}")
    print(f"queues:\n{inst.queues}")
    print(f"optimum {sol.value:.6f} over {inst.joint_count} joint decisions")
    print(f"optimal powers:\n{sol.alloc.p}")
    g = own_gains(inst.gains)
    for kind in (MethodKind.GREEDY, MethodKind.QOS):
        alloc = heuristic_allocation(kind, g, inst.queues, inst.levels)
        val = objective_value(inst, alloc)[0]
        print(f"{kind.value:7s} objective {val:.6f}  gap {sol.value - val:.6f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ofdma-marl", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", type=Path, help="flat JSON or YAML config file")
        sp.add_argument("--method", help="fedcritic, ctde (b1), ctde_vq (b2), fedactor (b3), greedy, qos")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out", type=Path, help="output directory")
        sp.add_argument("--reduced", action="store_true", help="desk-scale preset (N=3, K=8, M=2, L=3)")

    t = sub.add_parser("train", help="train one method")
    common(t)
    t.add_argument("--updates", type=int, help="override n_updates")
    t.set_defaults(func=cmd_train)

    for name, func, helptext in (("eval", cmd_eval, "evaluate a checkpoint set or heuristic"),
                                 ("export-plots", cmd_export_plots, "write CDF and heatmap data")):
        e = sub.add_parser(name, help=helptext)
        common(e)
        e.add_argument("--checkpoints", type=Path, help="directory with actor_<n>.ckpt files")
        e.add_argument("--greedy", action="store_true", help="argmax heads instead of sampling")
        e.set_defaults(func=func)

    th = sub.add_parser("theory-check", help="consensus and advantage-bound experiments")
    th.add_argument("--rounds", type=int, default=5000)
    th.add_argument("--seed", type=int, default=0)
    th.set_defaults(func=cmd_theory_check)

    o = sub.add_parser("oracle-compare", help="exhaustive optimum vs heuristics on a tiny instance")
    o.add_argument("--seed", type=int, default=0)
    o.add_argument("--n-bs", type=int, default=2)
    o.add_argument("--n-sub", type=int, default=2)
    o.add_argument("--n-ue", type=int, default=2)
    o.set_defaults(func=cmd_oracle_compare)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
