"""Desk-scale training and evaluation runs shared by the scripts and the acceptance suite."""
from __future__ import annotations

from dataclasses import dataclass

from .config import SystemConfig
from .pilots import ExpandedPilot
from .scenario import Dataset, generate_dataset
from .training import TrainHyper, TrainReport, train
from .unfolded import WeightSet


@dataclass(frozen=True)
class RunPlan:
    train_count: int = 10_000
    holdout_count: int = 2_000
    test_count: int = 10_000
    epochs: int = 5
    batch_size: int = 200
    lr: float = 1e-3
    loss: str = "masked"
    train_seed: int = 1
    holdout_seed: int = 2
    test_seed: int = 3
    shuffle_seed: int = 0


def train_at_snr(cfg: SystemConfig, pilot: ExpandedPilot, snr_db: float,
                 plan: RunPlan = RunPlan()) -> tuple[WeightSet, TrainReport]:
    """One per-SNR weight set trained from the all-ones initialisation."""
    tr = generate_dataset(cfg, pilot, [snr_db], plan.train_count, plan.train_seed)
    ho = generate_dataset(cfg, pilot, [snr_db], plan.holdout_count, plan.holdout_seed)
    hyper = TrainHyper(epochs=plan.epochs, batch_size=plan.batch_size, lr=plan.lr,
                       seed=plan.shuffle_seed, loss=plan.loss)
    return train(tr, ho, cfg, pilot, hyper)


def make_test_set(cfg: SystemConfig, pilot: ExpandedPilot, snr_db: float,
                  plan: RunPlan = RunPlan()) -> Dataset:
    return generate_dataset(cfg, pilot, [snr_db], plan.test_count, plan.test_seed)
