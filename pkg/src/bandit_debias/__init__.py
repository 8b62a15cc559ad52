"""Bandit-experiment simulation and bootstrap debiasing toolkit."""

from . import bootstrap, debias, distributions, estimators, harness, policies, simulator, theory
from .bootstrap import BootstrapSpec
from .debias import DebiasReport, debias as debias_log
from .distributions import Bernoulli, FiniteDiscrete, Gaussian
from .policies import EgSpec, EtcSpec, TsSpec, UcbSpec
from .simulator import BanditLog, run_experiment, summarize

__all__ = [
    "BanditLog",
    "Bernoulli",
    "BootstrapSpec",
    "DebiasReport",
    "EgSpec",
    "EtcSpec",
    "FiniteDiscrete",
    "Gaussian",
    "TsSpec",
    "UcbSpec",
    "bootstrap",
    "debias",
    "debias_log",
    "distributions",
    "estimators",
    "harness",
    "policies",
    "run_experiment",
    "simulator",
    "summarize",
    "theory",
]
