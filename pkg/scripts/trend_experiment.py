"""Train the proposed method and a baseline on several seeds at reduced scale.

Writes one CSV row per (method, seed) final evaluation plus the pooled and
per-seed orderings to ``--out``.
"""

import argparse
import json
from pathlib import Path

from ofdma_marl.harness.config import ExperimentConfig, reduced_config
from ofdma_marl.harness.experiments import run_trend
from ofdma_marl.harness.export import write_records_csv


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--config", type=Path, help="flat JSON or YAML config (default: reduced preset)")
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    p.add_argument("--methods", nargs=2, default=["fedcritic", "ctde"], metavar=("PROPOSED", "BASELINE"))
    p.add_argument("--updates", type=int, help="override n_updates")
    p.add_argument("--out", type=Path, default=Path("runs/trend"))
    args = p.parse_args(argv)

    cfg = ExperimentConfig.from_file(args.config) if args.config else reduced_config()
    if args.updates is not None:
        cfg = cfg.with_overrides(n_updates=args.updates)

    def progress(method, seed, rec):
        print(f"{method:10s} seed {seed}: sum-rate {rec.sum_rate:.3f} +- {rec.sum_rate_ci:.3f}  "
              f"collisions {rec.collision_rate:.3f}  SINR {rec.mean_sinr_db:.2f} dB", flush=True)

    res = run_trend(cfg, seeds=args.seeds, methods=tuple(args.methods), progress=progress)
    args.out.mkdir(parents=True, exist_ok=True)
    for method, records in res.finals.items():
        write_records_csv(records, args.out / f"final_{method}.csv")
    report = res.report()
    (args.out / "orderings.json").write_text(json.dumps(
        {"seeds": list(res.seeds), "methods": list(res.methods), "accepted": res.accepted(),
         "votes": res.seed_votes(), "report": report}, indent=2) + "\n")
    print("\n".join(report))
    print(f"accepted: {res.accepted()}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
