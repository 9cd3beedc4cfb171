"""Command-line entry point: ``gen``, ``train``, ``eval``, ``sweep``, ``gradcheck``.

Errors are reported as one JSON line on stderr. Usage errors exit with 2,
errors raised by the library (bad files, fingerprints, numerics) with 1.
"""
from __future__ import annotations

import argparse
import json
import sys

from .config import SystemConfig, load_config
from .errors import MpbsblError

GRADCHECK_LIMIT = 1e-4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad number list {text!r}") from None


def _names(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key=value config file (default: full-size system)")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", help="output path")

    p = _Parser(prog="dnn-mpbsbl", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="cmd", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", parents=[common], help="generate a dataset file")
    g.add_argument("--snr-list", type=_floats, required=True)
    g.add_argument("--count", type=int, required=True)
    g.add_argument("--mixed-snr", action="store_true",
                   help="draw each sample's SNR uniformly from the list")

    t = sub.add_parser("train", parents=[common], help="train the unfolded network")
    t.add_argument("--train", required=True, help="training dataset")
    t.add_argument("--holdout", required=True, help="held-out dataset")
    t.add_argument("--epochs", type=int, default=20)
    t.add_argument("--batch-size", type=int, default=200)
    t.add_argument("--lr", type=float, default=1e-3)
    t.add_argument("--optimizer", choices=["adam", "sgd"], default="adam")
    t.add_argument("--loss", choices=["masked", "soft"], default="masked")
    t.add_argument("--log", help="per-epoch CSV log")

    e = sub.add_parser("eval", parents=[common], help="evaluate estimators on a dataset")
    e.add_argument("--data", required=True)
    e.add_argument("--weights", help="checkpoint for the dnn estimator")
    e.add_argument("--estimators", type=_names, default=["mp-bsbl", "bomp", "ga-mmse"])

    s = sub.add_parser("sweep", parents=[common], help="SNR sweep on generated test sets")
    s.add_argument("--snr-list", type=_floats, default=[0.0, 5.0, 10.0, 15.0])
    s.add_argument("--count", type=int, default=1000)
    s.add_argument("--estimators", type=_names, default=["mp-bsbl", "bomp", "ga-mmse"])
    s.add_argument("--weights", action="append", default=[],
                   help="checkpoint for the dnn estimator, or SNR=PATH per SNR point")

    c = sub.add_parser("gradcheck", parents=[common], help="finite-difference gradient check")
    c.add_argument("--trials", type=int, default=10)
    c.add_argument("--params", type=int, default=200)
    c.add_argument("--snr", type=float, default=10.0)
    return p


def _config(args) -> SystemConfig:
    return load_config(args.config) if args.config else SystemConfig()


def _weights_arg(specs, cfg, pilot, snr_list):
    from .training import load_checkpoint

    if not specs:
        return None
    if len(specs) == 1 and "=" not in specs[0]:
        return load_checkpoint(specs[0], cfg, pilot)[0]
    out = {}
    for spec in specs:
        snr, sep, path = spec.partition("=")
        if not sep:
            raise UsageError(f"expected SNR=PATH, got {spec!r}")
        out[float(snr)] = load_checkpoint(path, cfg, pilot)[0]
    missing = [s for s in snr_list if s not in out]
    if missing:
        raise UsageError(f"no weights for SNR points {missing}")
    return out


def _emit_rows(rows, out):
    from .evaluation import write_rows

    write_rows(rows, out if out else sys.stdout)


def cmd_gen(args) -> int:
    from .pilots import build_system
    from .scenario import generate_dataset, write_dataset

    if not args.out:
        raise UsageError("gen needs --out")
    if args.count < 0:
        raise UsageError("--count must be non-negative")
    cfg = _config(args)
    pilot = build_system(cfg).pilot
    ds = generate_dataset(cfg, pilot, args.snr_list, args.count, args.seed, mixed=args.mixed_snr)
    write_dataset(ds, args.out)
    print(f"wrote {len(ds)} samples to {args.out}")
    return 0


def cmd_train(args) -> int:
    from .pilots import build_system
    from .scenario import read_dataset
    from .training import TrainHyper, train

    if not args.out:
        raise UsageError("train needs --out for the checkpoint")
    cfg = _config(args)
    pilot = build_system(cfg).pilot
    hyper = TrainHyper(epochs=args.epochs, batch_size=args.batch_size, lr=args.lr,
                       seed=args.seed, optimizer=args.optimizer, loss=args.loss)
    _, report = train(read_dataset(args.train, cfg), read_dataset(args.holdout, cfg), cfg, pilot,
                      hyper, log_path=args.log, checkpoint_path=args.out)
    print(f"initial_nmse={report.initial_nmse!r}")
    for i, (loss, nm) in enumerate(zip(report.epoch_loss, report.holdout_nmse), 1):
        print(f"epoch={i} loss={loss!r} nmse_holdout={nm!r}")
    print(f"best_epoch={report.best_epoch}")
    return 0


def cmd_eval(args) -> int:
    from .evaluation import sweep_snr
    from .pilots import build_system
    from .scenario import read_dataset

    cfg = _config(args)
    pilot = build_system(cfg).pilot
    ds = read_dataset(args.data, cfg)
    if "dnn" in args.estimators and not args.weights:
        raise UsageError("the dnn estimator needs --weights")
    weights = _weights_arg([args.weights] if args.weights else [], cfg, pilot, [])
    rows = sweep_snr(cfg, pilot, args.estimators, dataset=ds, seed=args.seed, weights=weights)
    _emit_rows(rows, args.out)
    return 0


def cmd_sweep(args) -> int:
    from .evaluation import sweep_snr
    from .pilots import build_system

    cfg = _config(args)
    pilot = build_system(cfg).pilot
    if "dnn" in args.estimators and not args.weights:
        raise UsageError("the dnn estimator needs --weights")
    weights = _weights_arg(args.weights, cfg, pilot, args.snr_list)
    rows = sweep_snr(cfg, pilot, args.estimators, args.snr_list, args.count, args.seed,
                     weights=weights)
    _emit_rows(rows, args.out)
    return 0


def cmd_gradcheck(args) -> int:
    from .backprop import grad_check

    cfg = _config(args)
    err = grad_check(cfg, trials=args.trials, n_params=args.params, snr_db=args.snr,
                     seed=args.seed)
    print(f"max_rel_error={err:.3e}")
    return 0 if err < GRADCHECK_LIMIT else 1


COMMANDS = {"gen": cmd_gen, "train": cmd_train, "eval": cmd_eval, "sweep": cmd_sweep,
            "gradcheck": cmd_gradcheck}


def _fail(kind: str, message: str, code: int) -> int:
    print(json.dumps({"error": kind, "message": message, "exit": code}), file=sys.stderr)
    return code


def cli(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return COMMANDS[args.cmd](args)
    except UsageError as exc:
        return _fail("UsageError", str(exc), 2)
    except (MpbsblError, OSError, ValueError) as exc:
        return _fail(type(exc).__name__, str(exc), 1)


def main() -> None:
    sys.exit(cli())


if __name__ == "__main__":
    main()
