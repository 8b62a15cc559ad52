"""Exact and asymptotic oracles for the explore-then-commit sample-mean bias.

Contents:

* the two-arm Gaussian closed form for the ETC bias and its log form g_k;
* an exact evaluator of the general two-arm ETC bias identity
  ((T-2m)/(T-m)) E[(mu_k - Xbar_k) 1{arm k committed}] by discrete
  enumeration or adaptive quadrature;
* the Legendre-Fenchel transform of the log-MGF and the exact-asymptotics
  constants for mean tail probabilities and tail expectations (lattice and
  non-lattice cases);
* the leading-order bias for a sub-Gaussian arm against a deterministic
  competitor, and Monte Carlo checks of the two decay-rate convergence
  results (log-bias ratio -> 1; bootstrap/real rate ratio bounded by
  proxy/variance).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate, optimize
from scipy.special import ndtr
from scipy.stats import norm

from .distributions import Bernoulli, FiniteDiscrete, Gaussian, RewardDistribution
from .policies import EtcSpec
from .simulator import run_batch
from .streams import TAG_THEORY, substream

_RATIONAL_DENOMINATOR_CAP = 10**6


class OutOfRange(Exception):
    """Threshold outside the open range of the log-MGF derivative."""


class LogOfZero(Exception):
    """log|bias| undefined: the bias is exactly zero (T = 2m)."""


class EnumerationTooLarge(Exception):
    """Exact enumeration exceeds the size cap; use a Monte Carlo estimate."""


@dataclass(frozen=True)
class EtcGaussianParams:
    mu1: float
    mu2: float
    var1: float
    var2: float
    m: int
    T: int

    def __post_init__(self):
        if self.var1 <= 0 or self.var2 <= 0:
            raise ValueError("variances must be > 0")
        if self.m < 1 or self.T < 2 * self.m:
            raise ValueError("need m >= 1 and T >= 2m")


def etc_bias_gaussian(p: EtcGaussianParams, k: int) -> float:
    """Closed-form ETC sample-mean bias of arm k in the two-arm Gaussian case."""
    if k not in (1, 2):
        raise ValueError("arm index must be 1 or 2")
    var_k = p.var1 if k == 1 else p.var2
    pooled = p.var1 + p.var2
    return (
        -(p.T - 2 * p.m)
        / (p.T - p.m)
        * var_k
        / math.sqrt(2.0 * math.pi * pooled * p.m)
        * math.exp(-p.m * (p.mu1 - p.mu2) ** 2 / (2.0 * pooled))
    )


def g_value(mu1: float, mu2: float, var1: float, var2: float, m: int, T: int, k: int) -> float:
    """log of the absolute two-arm Gaussian ETC bias at arbitrary arguments."""
    var_k = var1 if k == 1 else var2
    pooled = var1 + var2
    if T == 2 * m:
        raise LogOfZero("bias is exactly zero at T = 2m")
    return (
        math.log((T - 2 * m) / (T - m))
        + math.log(var_k)
        - 0.5 * math.log(2.0 * math.pi * pooled * m)
        - m * (mu1 - mu2) ** 2 / (2.0 * pooled)
    )


def log_bias_g(p: EtcGaussianParams, k: int) -> float:
    return g_value(p.mu1, p.mu2, p.var1, p.var2, p.m, p.T, k)


# --- exact evaluation of the general two-arm bias identity -----------------


def _as_fraction(x: float) -> Fraction:
    f = Fraction(x).limit_denominator(_RATIONAL_DENOMINATOR_CAP)
    if abs(float(f) - x) > 1e-9 * max(1.0, abs(x)):
        raise ValueError(f"value {x} has no rational representation under the denominator cap")
    return f


def mean_pmf(d: RewardDistribution, m: int, cap: int = 5_000_000) -> tuple[np.ndarray, np.ndarray]:
    """Exact distribution of the m-sample mean for a finite-support law.

    Supports are mapped to a common rational lattice and the sum law is an
    m-fold convolution on that lattice.  Returns (values, probabilities).
    """
    if isinstance(d, Gaussian):
        if d.var > 0:
            raise ValueError("mean_pmf needs a finite-support law")
        return np.array([d.mu]), np.array([1.0])
    if isinstance(d, Bernoulli):
        support, probs = np.array([0.0, 1.0]), np.array([1.0 - d.p, d.p])
    else:
        support, probs = np.asarray(d.support, dtype=float), np.asarray(d.probs, dtype=float)
    if len(support) == 1:
        return support.copy(), np.array([1.0])
    fracs = [_as_fraction(x) for x in support]
    step = Fraction(0)
    for f in fracs[1:]:
        step = _gcd_fraction(step, f - fracs[0])
    indices = [int((f - fracs[0]) / step) for f in fracs]
    width = max(indices)
    if (width * m + 1) > cap:
        raise EnumerationTooLarge(f"lattice of size {width * m + 1} exceeds cap {cap}")
    base = np.zeros(width + 1)
    base[indices] = probs
    pmf = base
    for _ in range(m - 1):
        pmf = np.convolve(pmf, base)
    values = (float(fracs[0]) * m + np.arange(len(pmf)) * float(step)) / m
    keep = pmf > 0
    return values[keep], pmf[keep]


def _gcd_fraction(a: Fraction, b: Fraction) -> Fraction:
    if a == 0:
        return abs(b)
    if b == 0:
        return abs(a)
    return Fraction(math.gcd(a.numerator * b.denominator, b.numerator * a.denominator), a.denominator * b.denominator)


def _mean_cdf(d: RewardDistribution, m: int, x: np.ndarray, strict: bool) -> np.ndarray:
    """P(Xbar_m < x) (strict) or P(Xbar_m <= x), vectorized over x."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if isinstance(d, Gaussian) and d.var > 0:
        return ndtr((x - d.mu) * math.sqrt(m / d.var))
    values, probs = mean_pmf(d, m)
    cum = np.concatenate([[0.0], np.cumsum(probs)])
    tol = 1e-12
    side_values = values + tol if strict else values - tol
    idx = np.searchsorted(side_values, x, side="right")
    return cum[idx]


def etc_bias_general(
    arms: Sequence[RewardDistribution],
    m: int,
    T: int,
    k: int,
    quad_tol: float = 1e-12,
    enum_cap: int = 5_000_000,
) -> float:
    """Exact ETC bias of arm k (two arms) via enumeration or quadrature.

    The committed arm is the exploration-phase argmax with ties to arm 1,
    so arm 1 commits on Xbar_1 >= Xbar_2 and arm 2 on Xbar_2 > Xbar_1.
    """
    if len(arms) != 2 or k not in (1, 2):
        raise ValueError("two arms required; k in {1, 2}")
    if m < 1 or T < 2 * m:
        raise ValueError("need m >= 1 and T >= 2m")
    own = arms[k - 1]
    other = arms[2 - k]
    mu_own = own.mean()
    # P(arm k committed | Xbar_own = x); equality goes to arm 1.
    strict = k == 2
    if isinstance(own, Gaussian) and own.var > 0:
        sd = math.sqrt(own.var / m)
        lo, hi = mu_own - 10.0 * sd, mu_own + 10.0 * sd

        def integrand(x: float) -> float:
            return (mu_own - x) * norm.pdf(x, mu_own, sd) * float(_mean_cdf(other, m, x, strict)[0])

        expectation, _ = integrate.quad(integrand, lo, hi, epsabs=quad_tol, limit=400)
    else:
        values, probs = mean_pmf(own, m, cap=enum_cap)
        commit = _mean_cdf(other, m, values, strict)
        expectation = float(np.dot(probs * (mu_own - values), commit))
    return (T - 2 * m) / (T - m) * expectation


def exact_mean_tail(d: RewardDistribution, mu2: float, m: int) -> tuple[float, float]:
    """Exact (P(Xbar_m >= mu2), E[(mu2 - Xbar_m) 1{Xbar_m >= mu2}]) by enumeration."""
    values, probs = mean_pmf(d, m)
    in_tail = values >= mu2 - 1e-12
    prob = float(probs[in_tail].sum())
    expect = float(np.dot(probs[in_tail], mu2 - values[in_tail]))
    return prob, expect


# --- Legendre-Fenchel transform and exact tail asymptotics -----------------


def _mgf_derivative_range(d: RewardDistribution) -> tuple[float, float]:
    """Open interval of attainable log-MGF slopes."""
    if isinstance(d, Gaussian):
        if d.var == 0:
            return d.mu, d.mu
        return -math.inf, math.inf
    if isinstance(d, Bernoulli):
        lo, hi = 0.0, 1.0
    else:
        lo, hi = d.support[0], d.support[-1]
    if d.variance() == 0:
        return d.mean(), d.mean()
    return lo, hi


def legendre_fenchel(d: RewardDistribution, x: float, tol: float = 1e-10) -> tuple[float, float]:
    """Rate Lambda*(x) and tilt zeta with eta'(zeta) = x.

    Solved by bracket expansion plus a safeguarded root find; the residual
    |eta'(zeta) - x| is driven below tol.
    """
    lo, hi = _mgf_derivative_range(d)
    if not lo < x < hi:
        if x == d.mean() and d.variance() == 0:
            return 0.0, 0.0
        raise OutOfRange(f"threshold {x} outside the attainable slope range ({lo}, {hi})")
    if x == d.mean():
        return 0.0, 0.0

    def slope_gap(h: float) -> float:
        return d.log_mgf_derivatives(h)[0] - x

    a, b = -1.0, 1.0
    for _ in range(200):
        if slope_gap(a) < 0 < slope_gap(b):
            break
        if slope_gap(a) >= 0:
            a *= 2.0
        if slope_gap(b) <= 0:
            b *= 2.0
    else:
        raise ArithmeticError("failed to bracket the tilt")
    zeta = optimize.brentq(slope_gap, a, b, xtol=1e-14, rtol=8.9e-16, maxiter=200)
    # Newton polish against the residual tolerance.
    for _ in range(50):
        d1, d2 = d.log_mgf_derivatives(zeta)
        if abs(d1 - x) <= tol:
            break
        if d2 <= 0:
            break
        zeta -= (d1 - x) / d2
    rate = zeta * x - d.log_mgf(zeta)
    return rate, zeta


@dataclass
class LDProfile:
    """Large-deviation profile of one (distribution, threshold) pair."""

    distribution: RewardDistribution
    threshold: float
    zeta: float
    rate: float
    eta_second: float
    lattice: bool
    span: Optional[float]
    threshold_span: Optional[float]
    c0: float
    c1: float
    c_star: float
    caveat: bool  # threshold is not an atom, so the lattice asymptotics
                  # apply only along m where the mean lattice hits it

    def to_dict(self) -> dict:
        return {
            "distribution": self.distribution.to_dict(),
            "threshold": self.threshold,
            "zeta": self.zeta,
            "rate": self.rate,
            "eta_second": self.eta_second,
            "lattice": self.lattice,
            "span": self.span,
            "threshold_span": self.threshold_span,
            "c0": self.c0,
            "c1": self.c1,
            "c_star": self.c_star,
            "caveat": self.caveat,
        }


def _support_points(d: RewardDistribution) -> Optional[list[float]]:
    if isinstance(d, Gaussian):
        return None
    if isinstance(d, Bernoulli):
        return [0.0, 1.0]
    return list(d.support)


def _lattice_span(d: RewardDistribution) -> Optional[float]:
    """GCD of pairwise support differences over a rational representation."""
    support = _support_points(d)
    if support is None:
        return None
    try:
        fracs = [_as_fraction(x) for x in support]
    except ValueError:
        return None
    span = Fraction(0)
    for f in fracs[1:]:
        span = _gcd_fraction(span, f - fracs[0])
    if span == 0:
        return None
    return float(span)


def _threshold_span(d: RewardDistribution, mu2: float) -> Optional[float]:
    """Largest d0 with (x - mu2)/d0 integral over the support, or None."""
    support = _support_points(d)
    if support is None:
        return None
    try:
        offsets = [_as_fraction(x) - _as_fraction(mu2) for x in support]
    except ValueError:
        return None
    span = Fraction(0)
    for off in offsets:
        span = _gcd_fraction(span, off)
    if span == 0:
        return None
    return float(span)


def bahadur_rao_constants(d: RewardDistribution, mu2: float) -> LDProfile:
    """Tail-asymptotics constants for P(Xbar_m >= mu2) and the tail expectation."""
    if d.variance() == 0:
        raise OutOfRange("degenerate law: the rare-event asymptotics do not apply")
    rate, zeta = legendre_fenchel(d, mu2)
    if zeta == 0.0:
        raise OutOfRange("threshold equals the mean: no exponential decay regime")
    _, eta_second = d.log_mgf_derivatives(zeta)
    span = _lattice_span(d)
    threshold_span = _threshold_span(d, mu2)
    if span is None:
        lattice = False
        c0 = 1.0 / abs(zeta)
        c1 = -1.0 / zeta**2
        caveat = False
    else:
        lattice = True
        c0 = span / (1.0 - math.exp(-abs(zeta) * span))
        c1 = -span * math.exp(-zeta * span) / ((1.0 - math.exp(-zeta * span)) * zeta)
        atoms = _support_points(d) or []
        caveat = not any(abs(a - mu2) < 1e-12 for a in atoms)
    mu1 = d.mean()
    return LDProfile(
        distribution=d,
        threshold=mu2,
        zeta=zeta,
        rate=rate,
        eta_second=eta_second,
        lattice=lattice,
        span=span,
        threshold_span=threshold_span,
        c0=c0,
        c1=c1,
        c_star=c0 * abs(mu1 - mu2),
        caveat=caveat,
    )


def tail_expectation_limit(profile: LDProfile) -> float:
    """Limit of J_m(mu2) * E[(mu2 - Xbar_m) 1{Xbar_m >= mu2}] as m grows."""
    if not profile.lattice:
        return 1.0
    span = profile.threshold_span if profile.threshold_span is not None else profile.span
    zd = profile.zeta * span
    return zd * math.exp(-zd) / (1.0 - math.exp(-zd))


def tail_normalizer(profile: LDProfile, m: int) -> float:
    """J_m(mu2) = -zeta^2 sqrt(2 pi m eta'') m exp(m Lambda*)."""
    return -profile.zeta**2 * math.sqrt(2.0 * math.pi * m * profile.eta_second) * m * math.exp(m * profile.rate)


def etc_bias_sharp_asymptotic(d: RewardDistribution, mu2: float, m: int, T: int) -> float:
    """Leading-order ETC bias of arm one against a deterministic arm at mu2."""
    if m < 1 or T < 2 * m:
        raise ValueError("need m >= 1 and T >= 2m")
    profile = bahadur_rao_constants(d, mu2)
    return (
        (T - 2 * m)
        / (T - m)
        * math.exp(-m * profile.rate)
        / math.sqrt(2.0 * math.pi * m * profile.eta_second)
        * (-profile.c_star)
    )


# --- Monte Carlo convergence experiments -----------------------------------


def _etc_two_arm_summaries(
    arms: Sequence[RewardDistribution],
    m: int,
    T: int,
    replications: int,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    """(means, variances) of shape (R, 2) from R lockstep ETC experiments."""
    out = run_batch(replications, 2, T, EtcSpec(m=m), arms, rng)
    return out.means(), out.variances()


def log_bias_ratio_experiment(
    p: EtcGaussianParams,
    m_grid: Sequence[int],
    replications: int,
    seed: int,
    horizon_of_m: Callable[[int], int] = lambda m: 4 * m,
) -> dict[int, dict]:
    """Empirical distribution of g_k(hat)/g_k(true) per exploration length.

    For each m, runs R two-arm Gaussian ETC experiments at horizon
    horizon_of_m(m) and evaluates the log-bias ratio at the sampled
    summaries.  Degenerate sample variances are excluded and counted.
    """
    results: dict[int, dict] = {}
    for i, m in enumerate(m_grid):
        T = horizon_of_m(m)
        if T <= 2 * m:
            raise ValueError(f"horizon {T} must exceed 2m for m={m}")
        rng = substream(seed, TAG_THEORY, i)
        arms = [Gaussian(p.mu1, p.var1), Gaussian(p.mu2, p.var2)]
        means, variances = _etc_two_arm_summaries(arms, m, T, replications, rng)
        ok = (variances[:, 0] > 0) & (variances[:, 1] > 0)
        ratios = np.full((replications, 2), np.nan)
        for k in (1, 2):
            g_true = g_value(p.mu1, p.mu2, p.var1, p.var2, m, T, k)
            for r in np.flatnonzero(ok):
                ratios[r, k - 1] = (
                    g_value(means[r, 0], means[r, 1], variances[r, 0], variances[r, 1], m, T, k) / g_true
                )
        valid = ratios[ok]
        results[m] = {
            "ratios": valid,
            "excluded": int(replications - ok.sum()),
            "median_abs_error": float(np.median(np.abs(valid - 1.0))),
            "frac_within_10pct": float(np.mean(np.abs(valid - 1.0) < 0.1)),
        }
    return results


def bootstrap_rate_ratio_check(
    d: RewardDistribution,
    mu2: float,
    m_grid: Sequence[int],
    replications: int,
    seed: int,
    horizon_of_m: Callable[[int], int] = lambda m: 4 * m,
) -> dict:
    """Bootstrap-vs-real decay-rate ratio against the proxy/variance bound.

    Arm one follows d; arm two is deterministic at mu2.  The bootstrap-world
    rate is (muhat_1 - mu2)^2 / (2 sighat_1^2) from simulated summaries; the
    real-world rate is the Legendre-Fenchel value.
    """
    if d.variance() == 0:
        raise OutOfRange("arm-one law must be non-degenerate")
    rate, _ = legendre_fenchel(d, mu2)
    bound = d.variance_proxy() / d.variance()
    per_m: dict[int, dict] = {}
    for i, m in enumerate(m_grid):
        T = horizon_of_m(m)
        rng = substream(seed, TAG_THEORY, 1000 + i)
        arms = [d, Gaussian(mu2, 0.0)]
        means, variances = _etc_two_arm_summaries(arms, m, T, replications, rng)
        ok = variances[:, 0] > 0
        boot_rate = (means[ok, 0] - mu2) ** 2 / (2.0 * variances[ok, 0])
        ratios = boot_rate / rate
        per_m[m] = {
            "ratios": ratios,
            "excluded": int(replications - ok.sum()),
            "median": float(np.median(ratios)),
        }
    largest = max(m_grid)
    return {
        "per_m": per_m,
        "bound": bound,
        "rate": rate,
        "bound_violated_at_largest_m": bool(per_m[largest]["median"] > bound),
    }
