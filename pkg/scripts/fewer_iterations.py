"""Compare trained Nit-block weights with untrained MP-BSBL at Nit and 2*Nit iterations."""
import argparse

from dnn_mpbsbl.config import SystemConfig, load_config
from dnn_mpbsbl.evaluation import evaluate
from dnn_mpbsbl.experiments import RunPlan, make_test_set, train_at_snr
from dnn_mpbsbl.pilots import build_system


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config")
    ap.add_argument("--snr", type=float, default=10.0)
    ap.add_argument("--epochs", type=int, default=RunPlan.epochs)
    ap.add_argument("--loss", default=RunPlan.loss, choices=["masked", "soft"])
    args = ap.parse_args()

    cfg = load_config(args.config) if args.config else SystemConfig.desk()
    pilot = build_system(cfg).pilot
    plan = RunPlan(epochs=args.epochs, loss=args.loss)
    weights, rep = train_at_snr(cfg, pilot, args.snr, plan)
    te = make_test_set(cfg, pilot, args.snr, plan)
    long = cfg.replace(Nit=2 * cfg.Nit)
    rows = [
        (f"MP-BSBL Nit={cfg.Nit}", evaluate("mp-bsbl", te, cfg, pilot).nmse),
        (f"MP-BSBL Nit={long.Nit}", evaluate("mp-bsbl", te, long, pilot).nmse),
        (f"DNN Nit={cfg.Nit} trained", evaluate("dnn", te, cfg, pilot, weights).nmse),
    ]
    for epoch, nm in enumerate(rep.holdout_nmse, 1):
        print(f"epoch {epoch}: holdout NMSE {nm:.4f}")
    for name, nm in rows:
        print(f"{name:<24s} {nm:.4f}")


if __name__ == "__main__":
    main()
