"""Grid distributions and the geometric compound (Pollaczek-Khinchine) series.

Distributions live on the lattice ``{0, h, 2h, ...}``.  A continuous law
is discretized by CDF differences: the mass in ``((k-1)h, kh]`` is put on
``kh``, so the grid CDF agrees with the true CDF at every node and no mass
is created or destroyed.  Mass that falls beyond the last node is carried
as :attr:`GridDistribution.truncated_mass`, never renormalized away.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, signal

from .fluctuation import LadderContext
from .model import ModelSpec

__all__ = [
    "GridDistribution",
    "PKParameters",
    "UndefinedLaw",
    "overshoot_tail",
    "tail_integral",
    "h_tau",
    "joint_tail_integral",
    "p_tau",
    "ladder_K",
    "rho_tau_general",
    "convolve",
    "series_length",
    "pk_cdf",
    "n_tau_pmf",
    "geometric_exponential_cdf",
]

OVERSHOOT = "overshoot"
INTEGRATED_TAIL = "integrated_tail"


class UndefinedLaw(ValueError):
    """The requested law does not exist for this model (e.g. no claim jumps)."""


@dataclass(frozen=True, eq=False)
class GridDistribution:
    """CDF values ``cdf[k] = F(k h)`` for k = 0..n."""

    h: float
    cdf: np.ndarray = field(repr=False)

    def __post_init__(self):
        cdf = np.asarray(self.cdf, dtype=float)
        if not self.h > 0:
            raise ValueError("grid step must be > 0")
        if cdf.ndim != 1 or cdf.size < 1:
            raise ValueError("cdf must be a nonempty 1-d array")
        if np.any(cdf < -1e-12) or np.any(cdf > 1 + 1e-12) or np.any(np.diff(cdf) < -1e-12):
            raise ValueError("cdf values must be nondecreasing within [0, 1]")
        cdf = np.clip(np.maximum.accumulate(cdf), 0.0, 1.0)
        cdf.flags.writeable = False
        object.__setattr__(self, "cdf", cdf)

    @classmethod
    def from_masses(cls, h: float, masses) -> "GridDistribution":
        return cls(h, np.cumsum(masses))

    @classmethod
    def delta0(cls, h: float, n: int) -> "GridDistribution":
        return cls(h, np.ones(n + 1))

    @classmethod
    def from_function(cls, h: float, n: int, cdf_fn) -> "GridDistribution":
        x = h * np.arange(n + 1)
        return cls(h, np.asarray(cdf_fn(x), dtype=float))

    @classmethod
    def from_samples(cls, h: float, n: int, samples) -> "GridDistribution":
        """Empirical CDF of ``samples`` read off at the grid nodes."""
        s = np.sort(np.asarray(samples, dtype=float))
        if s.size == 0:
            raise ValueError("need at least one sample")
        x = h * np.arange(n + 1)
        return cls(h, np.searchsorted(s, x, side="right") / s.size)

    @property
    def n(self) -> int:
        return self.cdf.size - 1

    @property
    def x(self) -> np.ndarray:
        return self.h * np.arange(self.cdf.size)

    @property
    def atom_at_zero(self) -> float:
        return float(self.cdf[0])

    @property
    def truncated_mass(self) -> float:
        return float(max(0.0, 1.0 - self.cdf[-1]))

    def masses(self) -> np.ndarray:
        return np.diff(self.cdf, prepend=0.0)

    def __call__(self, x):
        """Step-function evaluation F(x) = cdf[floor(x / h)] (clamped)."""
        x = np.asarray(x, dtype=float)
        k = np.floor(x / self.h + 1e-9).astype(np.int64)
        out = np.where(k < 0, 0.0, self.cdf[np.clip(k, 0, self.n)])
        return out[()] if out.ndim == 0 else out

    def linear(self, x):
        """Piecewise-linear interpolation of the node values (0 left of 0)."""
        x = np.asarray(x, dtype=float)
        out = np.where(x < 0, 0.0, np.interp(x, self.x, self.cdf))
        return out[()] if out.ndim == 0 else out

    def sup_distance(self, other) -> float:
        """Sup-norm distance at the nodes to another grid law or a callable CDF."""
        if isinstance(other, GridDistribution):
            _same_grid(self, other)
            return float(np.max(np.abs(self.cdf - other.cdf)))
        return float(np.max(np.abs(self.cdf - np.asarray(other(self.x), dtype=float))))


@dataclass(frozen=True, eq=False)
class PKParameters:
    rho_tau: float
    H_tau: GridDistribution
    G_tau: GridDistribution
    series_eps: float = 1e-12

    def __post_init__(self):
        if not 0 <= self.rho_tau < 1:
            raise ValueError(f"rho_tau must lie in [0, 1), got {self.rho_tau}")
        if self.H_tau.atom_at_zero != 0:
            raise ValueError("overshoot law must have no atom at zero")
        if not self.series_eps > 0:
            raise ValueError("series_eps must be > 0")
        _same_grid(self.H_tau, self.G_tau)


def _same_grid(a: GridDistribution, b: GridDistribution):
    if a.h != b.h or a.n != b.n:
        raise ValueError(f"grids differ: (h={a.h}, n={a.n}) vs (h={b.h}, n={b.n})")


def _claims_or_raise(model: ModelSpec):
    claims = model.claims
    if not claims.has_jumps:
        raise UndefinedLaw("no claim jumps: sigma is infinite and the overshoot law is undefined")
    return claims


def tail_integral(ctx: LadderContext, method: str = "closed") -> float:
    """I = integral of exp(-phi(q) u) nu(u, inf) du over (0, inf).

    ``method="quad"`` uses adaptive Gauss-Kronrod quadrature on [0, U] with
    U chosen where the integrand is below 1e-14; ``"closed"`` uses the law's
    closed form.
    """
    claims = ctx.model.claims
    if not claims.has_jumps:
        return 0.0
    lam, law, rate = claims.intensity, claims.law, ctx.phi_q
    if method == "closed":
        return lam * float(law.discounted_tail(0.0, rate))
    if method != "quad":
        raise ValueError(f"unknown method {method!r}")

    def f(u):
        return math.exp(-rate * u) * lam * float(law.survival(u))

    upper = 1.0
    while f(upper) >= 1e-14 and upper < 1e8:
        upper *= 2.0
    upper = min(upper, law.upper_support)
    kinks = {"deterministic": (law.a,), "uniform": (law.a, law.b), "pareto": (law.b,)}
    pts = [p for p in kinks.get(law.kind, ()) if 0 < p < upper] or None
    val, _ = integrate.quad(f, 0.0, upper, epsabs=1e-10, epsrel=1e-12, limit=500, points=pts)
    return val


def ladder_K(ctx: LadderContext, method: str = "closed") -> float:
    """K = (phi(q) / q) * I, the odds P(sigma <= tau) / P(sigma > tau)."""
    return ctx.phi_q / ctx.q * tail_integral(ctx, method)


def p_tau(ctx: LadderContext, method: str = "closed") -> float:
    """P(sigma <= tau) = K / (1 + K)."""
    K = ladder_K(ctx, method)
    if not math.isfinite(K):
        raise ArithmeticError("tail integral diverged")
    return K / (1.0 + K)


def rho_tau_general(kappa_q0: float, I: float, q: float) -> float:
    """Solve rho = (1 - rho) * kappa(q,0) I / q for rho."""
    if I < 0:
        raise ValueError("the tail integral I must be >= 0")
    if not q > 0:
        raise ValueError("q must be > 0")
    K = kappa_q0 * I / q
    return K / (1.0 + K)


def overshoot_tail(ctx: LadderContext, x, form: str = OVERSHOOT):
    """P(J > x | sigma <= tau) on x >= 0.

    ``form="overshoot"`` is the law of the claim excess over the gap,
    integral of nu(x + u, inf) exp(-phi u) du normalized by its value at x = 0.
    ``form="integrated_tail"`` is the normalized integral of
    exp(-phi u) nu(u, inf) over (x, inf), the weighting without the shift.
    For exponential claims of rate mu these are exp(-mu x) and
    exp(-(mu + phi) x).
    """
    claims = _claims_or_raise(ctx.model)
    law, rate = claims.law, ctx.phi_q
    x = np.asarray(x, dtype=float)
    norm = float(law.discounted_tail(0.0, rate))
    tail = np.asarray(law.discounted_tail(np.maximum(x, 0.0), rate)) / norm
    if form == INTEGRATED_TAIL:
        tail = tail * np.exp(-rate * np.maximum(x, 0.0))
    elif form != OVERSHOOT:
        raise ValueError(f"unknown overshoot form {form!r}")
    out = np.where(x < 0, 1.0, np.clip(tail, 0.0, 1.0))
    return out[()] if out.ndim == 0 else out


def joint_tail_integral(ctx: LadderContext, x: float, z: float, form: str = OVERSHOOT) -> float:
    """Claim-tail integral in the joint law of (gap at sigma-, overshoot).

    ``form="overshoot"``: integral over u > z of nu(x + u, inf) e^{-phi u} du,
    the rate at which a claim beats a gap u > z by more than x.
    ``form="integrated_tail"``: integral over u > z + x of nu(u, inf) e^{-phi u} du.
    The two differ by the factor e^{phi x}.
    """
    claims = ctx.model.claims
    if not claims.has_jumps:
        return 0.0
    if x < 0 or z < 0:
        raise ValueError("x and z must be >= 0")
    rate = ctx.phi_q
    base = claims.intensity * float(claims.law.discounted_tail(x + z, rate))
    if form == OVERSHOOT:
        return math.exp(-rate * z) * base
    if form == INTEGRATED_TAIL:
        return math.exp(-rate * (x + z)) * base
    raise ValueError(f"unknown form {form!r}")


def h_tau(ctx: LadderContext, h: float, n: int, form: str = OVERSHOOT,
          return_norm: bool = False):
    """Overshoot CDF at sigma on the grid {0, h, ..., n h}; zero atom at 0.

    With ``return_norm`` also returns the tail integral that normalizes it.
    """
    tail = overshoot_tail(ctx, h * np.arange(n + 1), form=form)
    cdf = 1.0 - tail
    cdf[0] = 0.0
    grid = GridDistribution(h, cdf)
    return (grid, tail_integral(ctx)) if return_norm else grid


def _direct(a, b, n):
    return np.convolve(a, b)[: n + 1]


def _fft(a, b, n):
    out = signal.fftconvolve(a, b)[: n + 1]
    return np.clip(out, 0.0, None)


def _convolve_masses(ma, mb, n, method):
    # fixed operand order keeps a*b and b*a bitwise identical
    if ma.tobytes() > mb.tobytes():
        ma, mb = mb, ma
    if method == "direct":
        return _direct(ma, mb, n)
    if method == "fft":
        return _fft(ma, mb, n)
    raise ValueError(f"unknown convolution method {method!r}")


def convolve(a: GridDistribution, b: GridDistribution, method: str = "direct") -> GridDistribution:
    """Law of the sum of independent draws from ``a`` and ``b``.

    Mass pushed past the last node is dropped and shows up as
    ``truncated_mass`` of the result.
    """
    _same_grid(a, b)
    return GridDistribution.from_masses(a.h, _convolve_masses(a.masses(), b.masses(), a.n, method))


def series_length(rho: float, eps: float) -> int:
    """First N with rho**(N+1) < eps (1 - rho)."""
    if rho == 0:
        return 0
    N = max(0, math.ceil(math.log(eps * (1.0 - rho)) / math.log(rho) - 1.0))
    while rho ** (N + 1) >= eps * (1.0 - rho):
        N += 1
    while N > 0 and rho ** N < eps * (1.0 - rho):
        N -= 1
    return N


def pk_cdf(params: PKParameters, n_terms: int | None = None,
           method: str = "auto") -> GridDistribution:
    """(1 - rho) sum_n rho^n (G^{(n+1)*} * H^{n*}) on the common grid.

    The series is cut after ``series_length(rho, eps)`` terms unless
    ``n_terms`` is given; the neglected probability is ``rho**(N+1)``.
    """
    rho, G, H = params.rho_tau, params.G_tau, params.H_tau
    if not rho < 1:
        raise ValueError("rho_tau must be < 1")
    N = series_length(rho, params.series_eps) if n_terms is None else int(n_terms)
    n = G.n
    if method == "auto":
        method = "fft" if n > 2000 else "direct"
    g, hm = G.masses(), H.masses()
    gh = _convolve_masses(g, hm, n, method)
    term = g.copy()
    total = (1.0 - rho) * term
    weight = 1.0 - rho
    for _ in range(N):
        term = _convolve_masses(term, gh, n, method)
        weight *= rho
        total += weight * term
        if term.sum() < 1e-300:
            break
    return GridDistribution.from_masses(G.h, total)


def n_tau_pmf(rho: float, n):
    """P(N_tau = n) = (1 - rho) rho^n."""
    if not 0 <= rho < 1:
        raise ValueError("rho must lie in [0, 1)")
    n = np.asarray(n)
    out = (1.0 - rho) * np.power(rho, n, dtype=float)
    return out[()] if out.ndim == 0 else out


def geometric_exponential_cdf(rho: float, theta: float):
    """CDF of a geometric(1 - rho) sum of Exp(theta) variables: 1 - rho e^{-theta (1 - rho) x}."""
    def cdf(x):
        x = np.asarray(x, dtype=float)
        return np.where(x < 0, 0.0, 1.0 - rho * np.exp(-theta * (1.0 - rho) * np.maximum(x, 0.0)))
    return cdf
