"""Empirical distributions and simulation-versus-formula checks.

Every check returns a :class:`CheckReport` whose statistic is either a
distance (KS, total variation, sup-norm) or a mean difference measured in
standard errors.  Thresholds are arguments, never constants buried here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .fluctuation import LadderContext
from .pk_engine import OVERSHOOT, joint_tail_integral, n_tau_pmf, overshoot_tail, p_tau
from .simulator import EmpiricalSummary

__all__ = [
    "PASS",
    "FAIL",
    "INCONCLUSIVE",
    "EmpiricalCDF",
    "CheckReport",
    "ks_distance",
    "ks_two_sample",
    "two_sample_band",
    "proportion_ci",
    "standardized_mean",
    "tv_geometric",
    "supremum_law_check",
    "p_tau_check",
    "overshoot_check",
    "independence_check",
    "geometric_check",
    "occupation_check",
    "joint_law_check",
    "decomposition_check",
    "sup_norm_check",
]

PASS, FAIL, INCONCLUSIVE = "pass", "fail", "inconclusive"
Z99 = 2.5758293035489004  # two-sided 99% normal quantile


class EmpiricalCDF:
    """Right-continuous step CDF of a finite sample."""

    def __init__(self, samples):
        s = np.sort(np.asarray(samples, dtype=float).ravel())
        if s.size == 0:
            raise ValueError("empirical CDF needs at least one sample")
        if np.isnan(s).any():
            raise ValueError("samples contain NaN")
        self.samples = s
        self.samples.flags.writeable = False

    @property
    def n(self) -> int:
        return self.samples.size

    def __call__(self, x):
        out = np.searchsorted(self.samples, x, side="right") / self.n
        return out[()] if np.ndim(out) == 0 else out

    def left(self, x):
        """F(x-) = fraction of samples strictly below x."""
        out = np.searchsorted(self.samples, x, side="left") / self.n
        return out[()] if np.ndim(out) == 0 else out

    def table(self) -> tuple[np.ndarray, np.ndarray]:
        """Distinct sample values and the CDF there, for CSV output."""
        xs = np.unique(self.samples)
        return xs, self(xs)


@dataclass(frozen=True)
class CheckReport:
    name: str
    statistic: float
    threshold: float
    status: str
    n: tuple = ()
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.status == PASS

    def to_dict(self) -> dict:
        return {"name": self.name, "statistic": _jsonable(self.statistic),
                "threshold": _jsonable(self.threshold), "status": self.status, "n": list(self.n),
                "details": {k: _jsonable(v) for k, v in self.details.items()}}

    def line(self) -> str:
        return (f"{self.status.upper():12s} {self.name}: statistic={self.statistic:.6g} "
                f"threshold={self.threshold:.6g} n={list(self.n)}")


def _jsonable(v):
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if math.isfinite(v) else str(v)
    if isinstance(v, np.integer):
        return int(v)
    return v


def _report(name, statistic, threshold, n, **details) -> CheckReport:
    ok = statistic <= threshold  # NaN compares false and so fails
    return CheckReport(name, float(statistic), float(threshold), PASS if ok else FAIL,
                       tuple(int(k) for k in n), details)


def _inconclusive(name, threshold, n, reason) -> CheckReport:
    return CheckReport(name, math.nan, float(threshold), INCONCLUSIVE,
                       tuple(int(k) for k in n), {"reason": reason})


def ks_distance(emp: EmpiricalCDF, ref: Callable) -> float:
    """sup |F_emp - F_ref|, checking both one-sided gaps at each sample value.

    The reference is evaluated at every distinct sample value and just
    below it, so reference atoms are handled correctly.
    """
    xs, right = emp.table()
    left = np.concatenate(([0.0], right[:-1]))
    ref_right = np.asarray(ref(xs), dtype=float)
    ref_left = np.asarray(ref(np.nextafter(xs, -np.inf)), dtype=float)
    return float(max(np.max(np.abs(right - ref_right)), np.max(np.abs(left - ref_left))))


def ks_two_sample(a, b) -> float:
    """Two-sample KS distance sup |F_a - F_b|."""
    fa, fb = EmpiricalCDF(a), EmpiricalCDF(b)
    xs = np.union1d(fa.samples, fb.samples)
    return float(np.max(np.abs(fa(xs) - fb(xs))))


def two_sample_band(n1: int, n2: int, coef: float = 1.63) -> float:
    """Asymptotic 99% critical value of the two-sample KS distance."""
    return coef * math.sqrt((n1 + n2) / (n1 * n2))


def proportion_ci(hits: int, n: int, z: float = Z99) -> tuple[float, float]:
    """Wilson score interval (99% by default) for a binomial proportion."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if not 0 <= hits <= n:
        raise ValueError("hits must lie in [0, n]")
    p = hits / n
    z2 = z * z
    centre = (p + z2 / (2 * n)) / (1 + z2 / n)
    half = z / (1 + z2 / n) * math.sqrt(p * (1 - p) / n + z2 / (4 * n * n))
    return max(0.0, centre - half), min(1.0, centre + half)


def standardized_mean(d) -> tuple[float, float, float]:
    """(mean, standard error, |mean| / standard error) of per-path differences."""
    d = np.asarray(d, dtype=float)
    mean = float(d.mean())
    se = float(d.std(ddof=1) / math.sqrt(d.size)) if d.size > 1 else math.inf
    if se == 0:
        return mean, se, 0.0 if mean == 0 else math.inf
    return mean, se, abs(mean) / se


def tv_geometric(counts, rho: float) -> float:
    """Total variation between a histogram of counts and geometric(1 - rho) on {0, 1, ...}."""
    counts = np.asarray(counts, dtype=float)
    freq = counts / counts.sum()
    pmf = n_tau_pmf(rho, np.arange(freq.size))
    tail = rho ** freq.size  # model mass beyond the largest observed count
    return 0.5 * float(np.abs(freq - pmf).sum() + tail)


def supremum_law_check(summary: EmpiricalSummary, ctx: LadderContext,
                       threshold: float = 0.01) -> CheckReport:
    """KS distance of S(tau) to Exp(phi(q))."""
    rate = ctx.phi_q
    d = ks_distance(EmpiricalCDF(summary.s_tau), lambda x: -np.expm1(-rate * np.maximum(x, 0)))
    return _report("supremum_law", d, threshold, (summary.n_paths,), phi_q=rate)


def p_tau_check(summary: EmpiricalSummary, ctx: LadderContext,
                threshold: float = 3.0) -> CheckReport:
    """|p_hat - p_tau| in binomial standard errors."""
    p = p_tau(ctx)
    n = summary.n_paths
    hits = int(summary.sigma_le_tau.sum())
    se = math.sqrt(p * (1 - p) / n)
    stat = abs(hits / n - p) / se if se > 0 else (0.0 if hits / n == p else math.inf)
    lo, hi = proportion_ci(hits, n)
    return _report("p_tau", stat, threshold, (n,), p_tau=p, p_hat=hits / n,
                   wilson_lo=lo, wilson_hi=hi)


def overshoot_check(summary: EmpiricalSummary, ctx: LadderContext, threshold: float = 0.02,
                    form: str = OVERSHOOT, min_samples: int = 1000) -> CheckReport:
    """KS distance of the overshoots J on {sigma <= tau} to the analytic law."""
    name = f"overshoot[{form}]"
    j = summary.overshoots
    if j.size < min_samples:
        return _inconclusive(name, threshold, (j.size,), f"fewer than {min_samples} overshoots")
    d = ks_distance(EmpiricalCDF(j), lambda x: 1.0 - overshoot_tail(ctx, x, form=form))
    return _report(name, d, threshold, (j.size,))


def independence_check(values, flags, threshold_coef: float = 1.63,
                       min_group: int = 1000) -> CheckReport:
    """Two-sample KS between values given flag and given not flag."""
    values = np.asarray(values, dtype=float)
    flags = np.asarray(flags, dtype=bool)
    a, b = values[flags], values[~flags]
    band = two_sample_band(a.size, b.size, threshold_coef) if a.size and b.size else math.nan
    if min(a.size, b.size) < min_group:
        return _inconclusive("independence", band, (a.size, b.size),
                             f"a group has fewer than {min_group} samples")
    return _report("independence", ks_two_sample(a, b), band, (a.size, b.size))


def geometric_check(summary: EmpiricalSummary, ctx: LadderContext,
                    threshold: float = 0.02) -> CheckReport:
    rho = p_tau(ctx)
    tv = tv_geometric(summary.n_tau_hist(), rho)
    return _report("n_tau_geometric", tv, threshold, (summary.n_paths,), rho=rho)


def occupation_check(summary: EmpiricalSummary, ctx: LadderContext, x: float, y: float,
                     threshold: float = 3.0) -> CheckReport:
    """Mean occupation time below x versus P(sigma > tau, no passage above y) (1 - e^{-phi x}) / q.

    The probability is estimated on the same paths, so the statistic is the
    mean of per-path differences in standard errors.
    """
    factor = -math.expm1(-ctx.phi_q * x) / ctx.q
    d = summary.occupation_at(x, y) - factor * summary.survive(y)
    mean, se, stat = standardized_mean(d)
    return _report(f"occupation(x={x:g},y={y:g})", stat, threshold, (summary.n_paths,),
                   mean_diff=mean, std_err=se, lhs=float(summary.occupation_at(x, y).mean()))


def joint_law_check(summary: EmpiricalSummary, ctx: LadderContext, x: float, y: float, z: float,
                    threshold: float = 3.0, form: str = OVERSHOOT) -> CheckReport:
    """P(S^(sigma-) <= y, gap(sigma-) > z, J > x, sigma <= tau) against its analytic value.

    The right side is (phi/q) P(sigma > tau, no passage above y) times
    :func:`joint_tail_integral`, with the probability estimated per path.
    """
    factor = ctx.phi_q / ctx.q * joint_tail_integral(ctx, x, z, form)
    hits = summary.joint_event(x, y, z)
    d = hits - factor * summary.survive(y)
    mean, se, stat = standardized_mean(d)
    return _report(f"joint[{form}](x={x:g},y={y:g},z={z:g})", stat, threshold,
                   (summary.n_paths,), mean_diff=mean, std_err=se,
                   lhs=float(hits.mean()), rhs=float(factor * summary.survive(y).mean()))


def decomposition_check(summary: EmpiricalSummary, tol: float = 1e-9) -> CheckReport:
    """Worst relative residual of S^(tau) = sum L + sum J; every J must be > 0."""
    worst = float(summary.decomp_residual.max())
    jumps = summary.min_jump[summary.sigma_le_tau]
    min_j = float(jumps.min()) if jumps.size else math.inf
    stat = worst if min_j > 0 else math.inf
    return _report("decomposition", stat, tol, (summary.n_paths,), min_overshoot=min_j)


def sup_norm_check(name: str, samples, ref: Callable, threshold: float,
                   n_ref: Optional[int] = None) -> CheckReport:
    """KS distance between a sample and a reference CDF (e.g. a PK recomposition)."""
    emp = EmpiricalCDF(samples)
    n = (emp.n,) if n_ref is None else (emp.n, n_ref)
    return _report(name, ks_distance(emp, ref), threshold, n)
