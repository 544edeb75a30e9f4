"""Process family X(t) = c t - C(t) + Z(t) and its Laplace exponents.

Sign convention: for the spectrally negative process X we use
``E exp(beta X(t)) = exp(t psi_X(beta))`` with ``beta >= 0``.  A Brownian
component of scale ``s`` contributes ``s**2 beta**2 / 2``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import integrate

__all__ = [
    "JumpDistribution",
    "SubordinatorSpec",
    "PerturbationSpec",
    "ModelSpec",
    "NetProfit",
    "ModelError",
    "nu_tail",
    "psi_C",
    "psi_Z",
    "psi_X",
    "dpsi_X",
    "mean_C",
    "mean_X",
    "net_profit_status",
    "sample_jump",
]

_KINDS = ("exponential", "deterministic", "uniform", "pareto")


class ModelError(ValueError):
    """Raised for invalid or unsupported model specifications."""


def _check_finite(name, value):
    if not np.all(np.isfinite(value)):
        raise ValueError(f"{name} must be finite, got {value!r}")


@dataclass(frozen=True)
class JumpDistribution:
    """Law of a single jump size on (0, inf).

    Use the constructors :meth:`exponential`, :meth:`deterministic`,
    :meth:`uniform` and :meth:`pareto` rather than building directly.
    ``a`` and ``b`` hold the kind-specific parameters:

    ============= =========== ===========
    kind          a           b
    ============= =========== ===========
    exponential   rate mu     unused
    deterministic size        unused
    uniform       lo          hi
    pareto        index alpha scale x_m
    ============= =========== ===========
    """

    kind: str
    a: float
    b: float = 0.0

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ModelError(f"unknown jump law {self.kind!r}; expected one of {_KINDS}")
        _check_finite("jump parameters", (self.a, self.b))
        if self.kind in ("exponential", "deterministic") and not self.a > 0:
            raise ModelError(f"{self.kind} parameter must be > 0, got {self.a}")
        if self.kind == "uniform" and not (self.a >= 0 and self.b > self.a):
            raise ModelError(f"uniform law needs 0 <= lo < hi, got ({self.a}, {self.b})")
        if self.kind == "pareto" and not (self.a > 1 and self.b > 0):
            raise ModelError(f"pareto law needs alpha > 1 and scale > 0, got ({self.a}, {self.b})")

    @classmethod
    def exponential(cls, rate: float) -> "JumpDistribution":
        return cls("exponential", float(rate))

    @classmethod
    def deterministic(cls, size: float) -> "JumpDistribution":
        return cls("deterministic", float(size))

    @classmethod
    def uniform(cls, lo: float, hi: float) -> "JumpDistribution":
        return cls("uniform", float(lo), float(hi))

    @classmethod
    def pareto(cls, alpha: float, scale: float) -> "JumpDistribution":
        return cls("pareto", float(alpha), float(scale))

    # -- serialization ----------------------------------------------------
    def to_dict(self) -> dict:
        names = {
            "exponential": ("rate",),
            "deterministic": ("size",),
            "uniform": ("lo", "hi"),
            "pareto": ("alpha", "scale"),
        }[self.kind]
        out = {"kind": self.kind}
        for name, value in zip(names, (self.a, self.b)):
            out[name] = value
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "JumpDistribution":
        d = dict(d)
        kind = d.pop("kind", None)
        expected = {
            "exponential": ("rate",),
            "deterministic": ("size",),
            "uniform": ("lo", "hi"),
            "pareto": ("alpha", "scale"),
        }
        if kind not in expected:
            raise ModelError(f"unknown jump law {kind!r}")
        keys = expected[kind]
        if set(d) != set(keys):
            raise ModelError(f"{kind} law takes keys {keys}, got {sorted(d)}")
        return getattr(cls, kind)(*(float(d[k]) for k in keys))

    # -- distributional quantities ---------------------------------------
    @property
    def mean(self) -> float:
        if self.kind == "exponential":
            return 1.0 / self.a
        if self.kind == "deterministic":
            return self.a
        if self.kind == "uniform":
            return 0.5 * (self.a + self.b)
        alpha, xm = self.a, self.b
        return alpha * xm / (alpha - 1.0)

    @property
    def upper_support(self) -> float:
        if self.kind == "deterministic":
            return self.a
        if self.kind == "uniform":
            return self.b
        return math.inf

    def survival(self, u):
        """P(U > u), vectorized; equals 1 for u <= 0."""
        u = np.asarray(u, dtype=float)
        if self.kind == "exponential":
            out = np.exp(-self.a * np.maximum(u, 0.0))
        elif self.kind == "deterministic":
            out = np.where(u < self.a, 1.0, 0.0)
        elif self.kind == "uniform":
            lo, hi = self.a, self.b
            out = np.clip((hi - u) / (hi - lo), 0.0, 1.0)
        else:
            alpha, xm = self.a, self.b
            with np.errstate(divide="ignore"):
                out = np.where(u < xm, 1.0, (xm / np.maximum(u, xm)) ** alpha)
        return out[()] if out.ndim == 0 else out

    def laplace(self, beta: float) -> float:
        """E exp(-beta U) for beta >= 0."""
        if beta == 0:
            return 1.0
        if self.kind == "exponential":
            return self.a / (self.a + beta)
        if self.kind == "deterministic":
            return math.exp(-beta * self.a)
        if self.kind == "uniform":
            lo, w = self.a, self.b - self.a
            return math.exp(-beta * lo) * _one_minus_exp_over(beta * w)
        if math.isinf(beta):
            return 0.0
        alpha, xm = self.a, self.b
        val, _ = integrate.quad(lambda t: math.exp(-beta * xm * (t - 1.0)) * t ** (-alpha - 1.0),
                                1.0, math.inf, epsabs=1e-15, epsrel=1e-13, limit=200)
        return alpha * math.exp(-beta * xm) * val

    def laplace_moment(self, beta: float) -> float:
        """E[U exp(-beta U)] = -d/dbeta of :meth:`laplace`."""
        if self.kind == "exponential":
            return self.a / (self.a + beta) ** 2
        if self.kind == "deterministic":
            return self.a * math.exp(-beta * self.a)
        if self.kind == "uniform":
            lo, w = self.a, self.b - self.a
            z = beta * w
            if z < 1e-4:
                # -g'(beta) for g = (1 - e^{-z})/z, by series
                dg = w * (0.5 - z / 3.0 + z * z / 8.0)
            else:
                dg = -(z * math.exp(-z) + math.expm1(-z)) / (beta * z)
            return math.exp(-beta * lo) * (lo * _one_minus_exp_over(z) + dg)
        if beta == 0:
            return self.mean
        alpha, xm = self.a, self.b
        val, _ = integrate.quad(lambda t: math.exp(-beta * xm * (t - 1.0)) * t ** (-alpha),
                                1.0, math.inf, epsabs=1e-15, epsrel=1e-13, limit=200)
        return alpha * xm * math.exp(-beta * xm) * val

    def discounted_tail(self, x, rate: float):
        """Integral of exp(-rate (w - x)) P(U > w) over w in (x, inf).

        This is the building block of the overshoot law: the mass of
        claims exceeding ``x + u`` weighted by ``exp(-rate u)``.
        Vectorized in ``x`` (x >= 0); ``rate`` must be > 0 unless the
        law has bounded support.
        """
        x = np.asarray(x, dtype=float)
        if self.kind == "exponential":
            out = np.exp(-self.a * x) / (self.a + rate)
        elif self.kind == "deterministic":
            d = np.maximum(self.a - x, 0.0)
            out = _one_minus_exp_over(rate * d) * d
        elif self.kind == "uniform":
            out = _uniform_discounted_tail(self.a, self.b, x, rate)
        else:
            out = np.vectorize(self._pareto_discounted_tail, otypes=[float])(x, rate)
        return out[()] if np.ndim(out) == 0 else out

    def _pareto_discounted_tail(self, x, rate):
        alpha, xm = self.a, self.b
        flat = max(xm - x, 0.0)
        head = flat * float(_one_minus_exp_over(rate * flat))
        start = max(x, xm)
        tail, _ = integrate.quad(lambda w: math.exp(-rate * (w - x)) * (xm / w) ** alpha,
                                 start, math.inf, epsabs=1e-14, epsrel=1e-12, limit=400)
        return head + tail

    def sample(self, rng: np.random.Generator, size=None):
        if self.kind == "exponential":
            return rng.exponential(1.0 / self.a, size)
        if self.kind == "deterministic":
            return np.full(size, self.a) if size is not None else self.a
        if self.kind == "uniform":
            return rng.uniform(self.a, self.b, size)
        return self.b * (1.0 + rng.pareto(self.a, size))


def _one_minus_exp_over(z):
    """(1 - exp(-z)) / z with the removable point z = 0 filled by 1."""
    z = np.asarray(z, dtype=float)
    small = np.abs(z) < 1e-8
    safe = np.where(small, 1.0, z)
    out = np.where(small, 1.0 - 0.5 * z, -np.expm1(-safe) / safe)
    return out[()] if out.ndim == 0 else out


def _uniform_discounted_tail(lo, hi, x, rate):
    w = hi - lo
    x = np.asarray(x, dtype=float)
    flat = np.maximum(lo - x, 0.0)
    head = flat * _one_minus_exp_over(rate * flat)
    start = np.maximum(x, lo)
    d = np.maximum(hi - start, 0.0)
    z = rate * d
    # integral over [0, d] of exp(-rate v) (d - v) dv, divided by d^2/2 -> series at 0
    small = z < 1e-4
    zs = np.where(small, 1.0, z)
    ramp = np.where(small,
                    d * d * (0.5 - z / 6.0 + z * z / 24.0),
                    (z + np.expm1(-zs)) / np.where(small, 1.0, rate) ** 2)
    ramp = np.where(d > 0, ramp, 0.0)
    return head + np.exp(-rate * (start - x)) * ramp / w


@dataclass(frozen=True)
class SubordinatorSpec:
    """Claim process C: drift plus an optional compound Poisson part."""

    drift: float = 0.0
    intensity: float = 0.0
    law: Optional[JumpDistribution] = None
    small_jump_cutoff: float = 0.0

    def __post_init__(self):
        _check_finite("claims", (self.drift, self.intensity, self.small_jump_cutoff))
        if self.drift < 0:
            raise ModelError("claim drift must be >= 0")
        if self.small_jump_cutoff < 0:
            raise ModelError("small_jump_cutoff must be >= 0")
        if self.intensity < 0:
            raise ModelError("claim intensity must be >= 0")
        if self.intensity > 0 and self.law is None:
            raise ModelError("a positive claim intensity needs a jump law")
        if self.intensity == 0 and self.law is not None:
            raise ModelError("a jump law needs a positive intensity")

    @property
    def has_jumps(self) -> bool:
        return self.intensity > 0

    @property
    def mean(self) -> float:
        return self.drift + (self.intensity * self.law.mean if self.has_jumps else 0.0)

    def to_dict(self) -> dict:
        return {
            "drift": self.drift,
            "intensity": self.intensity,
            "law": self.law.to_dict() if self.law is not None else None,
            "small_jump_cutoff": self.small_jump_cutoff,
        }


@dataclass(frozen=True)
class PerturbationSpec:
    """Zero-mean spectrally negative perturbation Z.

    Brownian part of scale ``brownian_vol`` plus optional downward
    compound Poisson jumps, always compensated so that E Z(1) = 0.
    """

    brownian_vol: float = 0.0
    jump_intensity: float = 0.0
    jump_law: Optional[JumpDistribution] = None

    def __post_init__(self):
        _check_finite("perturbation", (self.brownian_vol, self.jump_intensity))
        if self.brownian_vol < 0:
            raise ModelError("brownian_vol must be >= 0")
        if self.jump_intensity < 0:
            raise ModelError("perturbation jump intensity must be >= 0")
        if (self.jump_intensity > 0) != (self.jump_law is not None):
            raise ModelError("perturbation jumps need both a positive intensity and a law")

    @property
    def has_jumps(self) -> bool:
        return self.jump_intensity > 0

    @property
    def compensation_drift(self) -> float:
        return self.jump_intensity * self.jump_law.mean if self.has_jumps else 0.0

    def to_dict(self) -> dict:
        neg = None
        if self.has_jumps:
            neg = {"intensity": self.jump_intensity, "law": self.jump_law.to_dict()}
        return {"brownian_vol": self.brownian_vol, "neg_jumps": neg}


@dataclass(frozen=True)
class ModelSpec:
    """X(t) = premium * t - C(t) + Z(t), killed at an independent Exp(kill_rate) time."""

    premium: float
    claims: SubordinatorSpec
    perturbation: PerturbationSpec
    kill_rate: float

    def __post_init__(self):
        _check_finite("premium", self.premium)
        _check_finite("kill_rate", self.kill_rate)
        if not self.kill_rate > 0:
            raise ModelError(f"kill rate must be > 0, got {self.kill_rate}")

    @classmethod
    def build(cls, premium, kill_rate, *, claim_intensity=0.0, claim_law=None,
              claim_drift=0.0, brownian_vol=0.0, neg_jump_intensity=0.0,
              neg_jump_law=None) -> "ModelSpec":
        """Flat-argument convenience constructor."""
        return cls(
            premium=float(premium),
            claims=SubordinatorSpec(drift=float(claim_drift), intensity=float(claim_intensity),
                                    law=claim_law),
            perturbation=PerturbationSpec(brownian_vol=float(brownian_vol),
                                          jump_intensity=float(neg_jump_intensity),
                                          jump_law=neg_jump_law),
            kill_rate=float(kill_rate),
        )

    @property
    def drift(self) -> float:
        """Slope of X between jumps, before the Brownian part."""
        return self.premium - self.claims.drift + self.perturbation.compensation_drift

    def with_kill_rate(self, q: float) -> "ModelSpec":
        return ModelSpec(self.premium, self.claims, self.perturbation, float(q))

    def to_dict(self) -> dict:
        return {
            "premium": self.premium,
            "kill_rate": self.kill_rate,
            "claims": self.claims.to_dict(),
            "perturbation": self.perturbation.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        _expect_keys("model", d, required={"premium", "kill_rate", "claims"},
                     optional={"perturbation"})
        cl = d["claims"]
        _expect_keys("model.claims", cl, required=set(),
                     optional={"drift", "intensity", "law", "small_jump_cutoff"})
        law = cl.get("law")
        claims = SubordinatorSpec(
            drift=float(cl.get("drift", 0.0)),
            intensity=float(cl.get("intensity", 0.0)),
            law=JumpDistribution.from_dict(law) if law is not None else None,
            small_jump_cutoff=float(cl.get("small_jump_cutoff", 0.0)),
        )
        pt = d.get("perturbation") or {}
        _expect_keys("model.perturbation", pt, required=set(),
                     optional={"brownian_vol", "neg_jumps"})
        neg = pt.get("neg_jumps")
        if neg is not None:
            _expect_keys("model.perturbation.neg_jumps", neg, required={"intensity", "law"},
                         optional=set())
        perturbation = PerturbationSpec(
            brownian_vol=float(pt.get("brownian_vol", 0.0)),
            jump_intensity=float(neg["intensity"]) if neg else 0.0,
            jump_law=JumpDistribution.from_dict(neg["law"]) if neg else None,
        )
        return cls(float(d["premium"]), claims, perturbation, float(d["kill_rate"]))


def _expect_keys(where, d, required, optional):
    if not isinstance(d, dict):
        raise ModelError(f"{where} must be a mapping")
    missing = required - set(d)
    unknown = set(d) - required - optional
    if missing:
        raise ModelError(f"{where}: missing keys {sorted(missing)}")
    if unknown:
        raise ModelError(f"{where}: unknown keys {sorted(unknown)}")


class NetProfit(enum.Enum):
    HOLDS = "NPC holds"
    BOUNDARY = "zero mean"
    VIOLATED = "NPC violated"


def nu_tail(spec: SubordinatorSpec, u):
    """Tail of the claim Levy measure, nu(u, inf) = intensity * P(U > u)."""
    u_arr = np.asarray(u, dtype=float)
    _check_finite("u", u_arr)
    if np.any(u_arr <= 0):
        raise ValueError("nu_tail needs u > 0")
    if not spec.has_jumps:
        out = np.zeros_like(u_arr)
        return out[()] if out.ndim == 0 else out
    return spec.intensity * spec.law.survival(u_arr)


def psi_C(spec: SubordinatorSpec, beta: float) -> float:
    """Laplace exponent of the subordinator: -log E exp(-beta C(1))."""
    if beta < 0:
        raise ValueError("psi_C needs beta >= 0")
    out = spec.drift * beta
    if spec.has_jumps:
        out += spec.intensity * (1.0 - spec.law.laplace(beta))
    return out


def psi_Z(spec: PerturbationSpec, beta: float) -> float:
    """Laplace exponent of the zero-mean perturbation."""
    out = 0.5 * spec.brownian_vol ** 2 * beta * beta
    if spec.has_jumps:
        lam, law = spec.jump_intensity, spec.jump_law
        out += lam * law.mean * beta - lam * (1.0 - law.laplace(beta))
    return out


def psi_X(model: ModelSpec, beta: float) -> float:
    """Laplace exponent psi_X(beta) = log E exp(beta X(1)), beta >= 0."""
    if not beta >= 0:
        raise ValueError(f"psi_X needs beta >= 0, got {beta}")
    return model.premium * beta + psi_Z(model.perturbation, beta) - psi_C(model.claims, beta)


def dpsi_X(model: ModelSpec, beta: float) -> float:
    """Analytic derivative of :func:`psi_X`; at 0 it is the mean of X(1)."""
    pert, claims = model.perturbation, model.claims
    out = model.premium + pert.brownian_vol ** 2 * beta - claims.drift
    if claims.has_jumps:
        out -= claims.intensity * claims.law.laplace_moment(beta)
    if pert.has_jumps:
        out += pert.jump_intensity * (pert.jump_law.mean - pert.jump_law.laplace_moment(beta))
    return out


def mean_C(spec: SubordinatorSpec) -> float:
    return spec.mean


def mean_X(model: ModelSpec) -> float:
    """E X(1) = premium - E C(1); the perturbation has zero mean."""
    return model.premium - model.claims.mean


def net_profit_status(model: ModelSpec) -> NetProfit:
    m = mean_X(model)
    if m > 0:
        return NetProfit.HOLDS
    if m == 0:
        return NetProfit.BOUNDARY
    return NetProfit.VIOLATED


def sample_jump(law: JumpDistribution, rng: np.random.Generator) -> float:
    """One draw from ``law``; advances only ``rng``."""
    return float(law.sample(rng))
