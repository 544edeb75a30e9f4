"""Inversion of the Laplace exponent and ladder-process quantities.

All functions assume a spectrally negative model.  The ascending ladder
exponent is normalized so that ``kappa(q, 0) == phi(q)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import ModelSpec, dpsi_X, mean_X, psi_C, psi_X, psi_Z

__all__ = [
    "NumericalFailure",
    "RootResult",
    "LadderContext",
    "LimitReport",
    "largest_root",
    "phi",
    "ladder_context",
    "kappa",
    "kappa_hat",
    "kappa_hat_zero",
    "upsilon_q",
    "ladder_residual",
    "ladder_limit_target",
    "ladder_limit_check",
]

BRACKET_LIMIT = 1e9


class NumericalFailure(RuntimeError):
    """A root could not be bracketed or refined."""


@dataclass(frozen=True)
class RootResult:
    b: float
    bracket: tuple[float, float]
    tolerance: float


@dataclass(frozen=True)
class LadderContext:
    model: ModelSpec
    q: float
    phi_q: float
    b: float
    k: float = 1.0


@dataclass(frozen=True)
class LimitReport:
    beta_max: float
    limit_estimate: float
    target: float
    rel_error: float


def _solve_above(model: ModelSpec, level: float, lo: float) -> tuple[float, tuple[float, float]]:
    """Smallest beta > lo with psi_X(beta) = level, given psi_X(lo) <= level.

    Convexity of psi_X makes {psi_X > level} an interval to the right of
    the root, so plain bisection on the sign is safe.
    """
    hi = max(1.0, 2.0 * lo)
    while psi_X(model, hi) <= level:
        hi *= 2.0
        if hi > BRACKET_LIMIT:
            raise NumericalFailure(f"cannot bracket psi_X = {level} below {BRACKET_LIMIT:g}")
    bracket = (lo, hi)
    a, c = lo, hi
    for _ in range(400):
        m = 0.5 * (a + c)
        if m <= a or m >= c:
            break
        if psi_X(model, m) > level:
            c = m
        else:
            a = m
    root = c if abs(psi_X(model, c) - level) <= abs(psi_X(model, a) - level) else a
    # one Newton polish, kept only when it stays in the bracket and helps
    slope = dpsi_X(model, root)
    if slope > 0 and math.isfinite(slope):
        cand = root - (psi_X(model, root) - level) / slope
        if bracket[0] <= cand <= bracket[1] and \
                abs(psi_X(model, cand) - level) < abs(psi_X(model, root) - level):
            root = cand
    return root, bracket


def largest_root(model: ModelSpec) -> RootResult:
    """Largest nonnegative root b of psi_X (phi_X(0) in ladder terms)."""
    if mean_X(model) >= 0:
        return RootResult(0.0, (0.0, 0.0), 0.0)
    root, bracket = _solve_above(model, 0.0, 0.0)
    tol = abs(psi_X(model, root))
    if tol > 1e-10 * max(1.0, abs(dpsi_X(model, root))):
        raise NumericalFailure(f"root refinement stalled at |psi_X(b)| = {tol:g}")
    return RootResult(root, bracket, tol)


def phi(model: ModelSpec, q: float, b: float | None = None) -> float:
    """Right inverse of psi_X: the unique beta >= b with psi_X(beta) = q."""
    if not q > 0:
        raise ValueError(f"phi needs q > 0, got {q}")
    if b is None:
        b = largest_root(model).b
    root, _ = _solve_above(model, q, b)
    if abs(psi_X(model, root) - q) > 1e-10 * max(1.0, q):
        raise NumericalFailure(f"phi({q}) refinement stalled")
    return root


def ladder_context(model: ModelSpec, q: float | None = None) -> LadderContext:
    q = model.kill_rate if q is None else float(q)
    b = largest_root(model).b
    return LadderContext(model=model, q=q, phi_q=phi(model, q, b), b=b)


def kappa(ctx: LadderContext, beta: float) -> float:
    """kappa(q, beta) = phi(q) + beta."""
    return ctx.phi_q + beta


def kappa_hat(ctx: LadderContext, alpha: float, beta: float) -> float:
    """Descending ladder exponent (alpha - psi(beta)) / (phi(alpha) - beta).

    Near the removable point beta = phi(alpha) the limit psi'(phi(alpha))
    is taken from a symmetric difference of the numerator.
    """
    if not alpha > 0:
        raise ValueError("kappa_hat needs alpha > 0")
    model = ctx.model
    phi_a = ctx.phi_q if alpha == ctx.q else phi(model, alpha, ctx.b)
    if abs(phi_a - beta) < 1e-6 * max(1.0, phi_a):
        h = 1e-5 * max(1.0, phi_a)
        lo = max(phi_a - h, 0.0)
        return (psi_X(model, phi_a + h) - psi_X(model, lo)) / (phi_a + h - lo)
    return (alpha - psi_X(model, beta)) / (phi_a - beta)


def kappa_hat_zero(ctx: LadderContext, beta: float) -> float:
    """Limit of kappa_hat(alpha, beta) as alpha -> 0+: psi_X(beta) / (beta - b)."""
    if not beta > ctx.b:
        raise ValueError(f"need beta > b = {ctx.b}")
    return psi_X(ctx.model, beta) / (beta - ctx.b)


def upsilon_q(ctx: LadderContext, x):
    """q-killed renewal function of the ladder height, (1 - e^{-phi x}) / phi."""
    x = np.asarray(x, dtype=float)
    out = -np.expm1(-ctx.phi_q * x) / ctx.phi_q
    return out[()] if out.ndim == 0 else out


def ladder_residual(ctx: LadderContext, beta: float) -> float:
    """kappa_hat(0+, beta) minus the perturbation term psi_Z(beta) / beta.

    Algebraically (c beta - psi_C(beta) + b psi_Z(beta)/beta) / (beta - b).
    With psi_Z(beta) = beta**2 this is ((c + b) beta - psi_C(beta)) / (beta - b).
    """
    b = ctx.b
    if not beta > b:
        raise ValueError(f"ladder_residual needs beta > b = {b}")
    model = ctx.model
    pz = psi_Z(model.perturbation, beta) / beta
    num = model.premium * beta - psi_C(model.claims, beta) + b * pz
    return num / (beta - b)


def ladder_limit_target(ctx: LadderContext) -> float:
    """Limit of :func:`ladder_residual` at infinity for finite claim mass.

    Equals c + phi_X(0) when psi_Z(beta) = beta**2 and C has no drift.
    """
    model = ctx.model
    return model.premium - model.claims.drift + ctx.b * 0.5 * model.perturbation.brownian_vol ** 2


def ladder_limit_check(ctx: LadderContext, beta_max: float = 1e6) -> LimitReport:
    if beta_max < 1e4:
        raise ValueError("beta_max must be >= 1e4")
    est = ladder_residual(ctx, beta_max)
    target = ladder_limit_target(ctx)
    return LimitReport(beta_max, est, target, abs(est - target) / abs(target))
