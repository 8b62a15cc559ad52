"""Baseline and comparison estimators: sample mean, IPW, AIPW.

IPW and AIPW require conditional propensity scores, which exist only for
internally randomized policies (epsilon-greedy, Thompson sampling).  Both
use uniform 1/T round weights:

    IPW_k  = (1/T) sum_t 1{a_t=k} r_t / e_t(k)
    AIPW_k = (1/T) sum_t [ mhat_t(k) + 1{a_t=k} (r_t - mhat_t(k)) / e_t(k) ]

where mhat_t(k) is arm k's running sample mean over rounds < t (0 before
its first pull), so the augmentation term is measurable with respect to
the history and unbiasedness is preserved under adaptive collection.

Propensity traces are recomputed from the log by a deterministic state
replay; they depend only on the history, not on the policy's realized
randomness, so the replayed values match what the policy used at run time.
"""
from __future__ import annotations

from typing import Optional

import numpy as np

from . import policies
from .policies import PolicySpec
from .simulator import BanditLog, summarize


class DivisionHazard(Exception):
    """Zero propensity on a chosen arm; the IPW weight is undefined."""

    def __init__(self, t: int, arm: int):
        self.t = t
        self.arm = arm
        super().__init__(f"propensity of chosen arm {arm + 1} at round {t + 1} is zero")


def propensity_trace(log: BanditLog) -> Optional[np.ndarray]:
    """Per-round per-arm e_t(k), shape (T, K); None if the policy is non-randomized."""
    state = policies.new_state(log.K)
    if policies.propensity_batch(log.policy, state._as_batch()) is None and not (
        isinstance(log.policy, policies.TsSpec) and log.K > 2
    ):
        return None
    out = np.empty((log.T, log.K))
    for t0 in range(log.T):
        for k in range(log.K):
            out[t0, k] = policies.propensity(log.policy, state, k)
        policies.update(state, int(log.actions[t0]), float(log.rewards[t0]))
    return out


def plugin_mean_trace(log: BanditLog) -> np.ndarray:
    """Running per-arm means using only strictly earlier rounds; 0 before first pull."""
    return _plugin_means(log.actions[None, :], log.rewards[None, :], log.K)[0]


def _plugin_means(actions: np.ndarray, rewards: np.ndarray, K: int) -> np.ndarray:
    n, T = actions.shape
    onehot = actions[:, :, None] == np.arange(K)[None, None, :]
    counts = np.cumsum(onehot, axis=1)
    sums = np.cumsum(np.where(onehot, rewards[:, :, None], 0.0), axis=1)
    # Shift by one round: round t sees data from rounds < t only.
    prev_counts = np.concatenate([np.zeros((n, 1, K)), counts[:, :-1, :]], axis=1)
    prev_sums = np.concatenate([np.zeros((n, 1, K)), sums[:, :-1, :]], axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        m = np.where(prev_counts > 0, prev_sums / np.maximum(prev_counts, 1), 0.0)
    return m


def ipw_batch(actions: np.ndarray, rewards: np.ndarray, props: np.ndarray) -> np.ndarray:
    """(n,) IPW estimates per arm from stacked logs; returns (n, K)."""
    n, T = actions.shape
    K = props.shape[2]
    chosen_p = np.take_along_axis(props, actions[:, :, None], axis=2)[:, :, 0]
    bad = np.argwhere(chosen_p == 0.0)
    if bad.size:
        i, t = bad[0]
        raise DivisionHazard(int(t), int(actions[i, t]))
    contrib = (rewards / chosen_p)[:, :, None] * (actions[:, :, None] == np.arange(K))
    return contrib.sum(axis=1) / T


def aipw_batch(actions: np.ndarray, rewards: np.ndarray, props: np.ndarray) -> np.ndarray:
    n, T = actions.shape
    K = props.shape[2]
    mhat = _plugin_means(actions, rewards, K)
    chosen_p = np.take_along_axis(props, actions[:, :, None], axis=2)[:, :, 0]
    bad = np.argwhere(chosen_p == 0.0)
    if bad.size:
        i, t = bad[0]
        raise DivisionHazard(int(t), int(actions[i, t]))
    onehot = actions[:, :, None] == np.arange(K)
    correction = onehot * ((rewards - np.where(onehot, mhat, 0.0).sum(axis=2)) / chosen_p)[:, :, None]
    return (mhat + correction).sum(axis=1) / T


def ipw_estimate(log: BanditLog, propensities: np.ndarray) -> np.ndarray:
    return ipw_batch(log.actions[None, :], log.rewards[None, :], np.asarray(propensities)[None])[0]


def aipw_estimate(log: BanditLog, propensities: np.ndarray, plug_in_means: np.ndarray) -> np.ndarray:
    """AIPW per arm; plug_in_means must be history-measurable ((T, K), row t from rounds < t)."""
    actions, rewards = log.actions[None, :], log.rewards[None, :]
    props = np.asarray(propensities)[None]
    mhat = np.asarray(plug_in_means)[None]
    K = props.shape[2]
    chosen_p = np.take_along_axis(props, actions[:, :, None], axis=2)[:, :, 0]
    bad = np.argwhere(chosen_p == 0.0)
    if bad.size:
        i, t = bad[0]
        raise DivisionHazard(int(t), int(actions[i, t]))
    onehot = actions[:, :, None] == np.arange(K)
    correction = onehot * ((rewards - np.where(onehot, mhat, 0.0).sum(axis=2)) / chosen_p)[:, :, None]
    return (mhat + correction).sum(axis=1)[0] / log.T


def evaluate(log: BanditLog, estimators=("mean", "ipw", "aipw")) -> dict:
    """Estimate set for one log; IPW/AIPW keys present iff propensities exist."""
    out: dict = {}
    if "mean" in estimators:
        out["mean"] = summarize(log).means.tolist()
    needs_props = {"ipw", "aipw"} & set(estimators)
    if needs_props:
        props = propensity_trace(log)
        if props is None:
            out["propensities_defined"] = False
        else:
            out["propensities_defined"] = True
            if "ipw" in estimators:
                out["ipw"] = ipw_estimate(log, props).tolist()
            if "aipw" in estimators:
                out["aipw"] = aipw_estimate(log, props, plugin_mean_trace(log)).tolist()
    return out
