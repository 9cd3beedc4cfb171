"""Train one weight set per SNR and write the NMSE/UAD sweep for all estimators.

    python3 scripts/run_sweep.py --config configs/desk.cfg --out sweep.csv
"""
import argparse
import sys
from pathlib import Path

from dnn_mpbsbl.config import SystemConfig, load_config
from dnn_mpbsbl.evaluation import ESTIMATORS, evaluate, write_rows
from dnn_mpbsbl.experiments import RunPlan, make_test_set, train_at_snr
from dnn_mpbsbl.pilots import build_system
from dnn_mpbsbl.training import save_checkpoint


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config")
    ap.add_argument("--snr-list", default="0,5,10,15")
    ap.add_argument("--epochs", type=int, default=RunPlan.epochs)
    ap.add_argument("--train-count", type=int, default=RunPlan.train_count)
    ap.add_argument("--test-count", type=int, default=RunPlan.test_count)
    ap.add_argument("--ckpt-dir", help="keep the per-SNR weight sets here")
    ap.add_argument("--out", help="CSV path (default stdout)")
    args = ap.parse_args()

    cfg = load_config(args.config) if args.config else SystemConfig.desk()
    pilot = build_system(cfg).pilot
    plan = RunPlan(train_count=args.train_count, test_count=args.test_count, epochs=args.epochs)
    rows = []
    for snr in [float(s) for s in args.snr_list.split(",")]:
        weights, rep = train_at_snr(cfg, pilot, snr, plan)
        print(f"{snr:g} dB: holdout NMSE {rep.initial_nmse:.4f} -> {min(rep.holdout_nmse):.4f} "
              f"(epoch {rep.best_epoch})", file=sys.stderr)
        if args.ckpt_dir:
            Path(args.ckpt_dir).mkdir(parents=True, exist_ok=True)
            save_checkpoint(Path(args.ckpt_dir) / f"snr{snr:g}.ckpt", weights, cfg)
        te = make_test_set(cfg, pilot, snr, plan)
        rows += [evaluate(name, te, cfg, pilot, weights, seed=plan.test_seed) for name in ESTIMATORS]
    write_rows(rows, args.out if args.out else sys.stdout)


if __name__ == "__main__":
    main()
