"""Finite-difference check of the unfolded network's gradient on random weights and data."""
import argparse

from dnn_mpbsbl.backprop import grad_check
from dnn_mpbsbl.config import SystemConfig, load_config


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config")
    ap.add_argument("--trials", type=int, default=100)
    ap.add_argument("--params", type=int, default=200)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    cfg = load_config(args.config) if args.config else SystemConfig.desk()
    for snr in (0.0, 10.0, 20.0):
        err = grad_check(cfg, trials=args.trials, n_params=args.params, snr_db=snr, seed=args.seed)
        print(f"{snr:4.0f} dB  max_rel_error={err:.3e}")


if __name__ == "__main__":
    main()
