"""Bootstrap-world reward sources built from an observed experiment log.

Two constructions:

* Gaussian multiplier bootstrap (``mb``): arm k resamples as
  N(sample mean, MLE sample variance).  With Gaussian multiplier weights
  the weighted-recombination form collapses exactly to that normal law, so
  the world is represented directly as a Gaussian per arm.
* Efron's bootstrap (``efron``): each draw is a uniform pick, with
  replacement, from the arm's observed rewards.  Draws are per-pull i.i.d.
  resamples, so a replay may pull an arm more often than the real log did.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .distributions import FiniteDiscrete, Gaussian, RewardDistribution
from .simulator import ArmSummary, BanditLog

MULTIPLIER_GAUSSIAN = "mb"
EFRON = "efron"


class ZeroCountArm(Exception):
    """Bootstrap distribution undefined: the named arm was never pulled."""

    def __init__(self, arm: int):
        self.arm = arm
        super().__init__(f"arm {arm + 1} has zero pulls; bootstrap world undefined")


@dataclass(frozen=True)
class BootstrapSpec:
    kind: str
    B: int

    def __post_init__(self):
        if self.kind not in (MULTIPLIER_GAUSSIAN, EFRON):
            raise ValueError(f"bootstrap kind must be 'mb' or 'efron', got {self.kind!r}")
        if self.B < 1:
            raise ValueError("B must be >= 1")


def build_world(summary: ArmSummary, log: BanditLog, spec: BootstrapSpec) -> list[RewardDistribution]:
    """Per-arm unlimited i.i.d. reward sources for bootstrap replays."""
    for arm in summary.zero_count_arms:
        raise ZeroCountArm(arm)
    world: list[RewardDistribution] = []
    for k in range(log.K):
        if spec.kind == MULTIPLIER_GAUSSIAN:
            world.append(Gaussian(float(summary.means[k]), float(summary.variances[k])))
        else:
            observed = log.rewards[log.actions == k]
            values, multiplicity = np.unique(observed, return_counts=True)
            world.append(FiniteDiscrete(values, multiplicity / multiplicity.sum()))
    return world
