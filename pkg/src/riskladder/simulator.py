"""Monte Carlo of killed paths and their modified-ladder decomposition.

A path is stored on a set of nodes ``0 = t_0 < ... < t_m = tau`` made of
the diffusion grid (spacing ``dt``) merged with the exact jump times.
Between nodes X moves as a Brownian motion with drift; at a node it may
jump down by a claim or by a perturbation jump.  For every segment we keep
the segment maximum and minimum of X, drawn from the exact law of the
extremes of a Brownian bridge given its endpoints, so running suprema carry
no skeleton bias.  Without a Brownian part the grid is dropped and the path
is exactly piecewise linear.

Notation on the dual X^ = -X: S^ is its running supremum, and the gap
S^ - X^ equals X minus its running infimum.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Sequence

import numpy as np
from numba import njit

from .model import ModelSpec

__all__ = [
    "CLAIM",
    "PERTURBATION",
    "ConfigError",
    "PathEvent",
    "KilledRun",
    "LadderDecomposition",
    "SimConfig",
    "Probes",
    "EmpiricalSummary",
    "path_rng",
    "build_run",
    "scripted_run",
    "simulate_killed_run",
    "detect_modified_ladder",
    "first_passage",
    "occupation_time",
    "batch_simulate",
    "summarize_runs",
]

log = logging.getLogger(__name__)

CLAIM = "claim"
PERTURBATION = "perturbation"


class ConfigError(ValueError):
    """Invalid simulation configuration."""


@dataclass(frozen=True)
class PathEvent:
    time: float
    size: float
    source: str


@dataclass(frozen=True)
class SimConfig:
    n_paths: int
    dt: float
    master_seed: int
    batch_size: int = 10_000
    exact_max: bool = True
    workers: int = 1

    def __post_init__(self):
        if self.n_paths < 1:
            raise ConfigError("n_paths must be >= 1")
        if not self.dt > 0:
            raise ConfigError("dt must be > 0")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")

    def check_guard(self, model: ModelSpec):
        """Reject dt coarser than 0.01 / max(1, c + claim intensity)."""
        limit = 0.01 / max(1.0, model.premium + model.claims.intensity)
        if self.dt > limit * (1 + 1e-12):
            raise ConfigError(f"dt = {self.dt:g} exceeds the guard {limit:g}")

    def to_dict(self) -> dict:
        return {
            "n_paths": self.n_paths,
            "dt": self.dt,
            "master_seed": self.master_seed,
            "batch_size": self.batch_size,
            "exact_max": self.exact_max,
            "workers": self.workers,
        }


@dataclass(frozen=True)
class Probes:
    """Probe points for the occupation-time and joint-law functionals."""

    occupation: tuple = ()
    joint: tuple = ()

    def __post_init__(self):
        occ = tuple((float(x), float(y)) for x, y in self.occupation)
        joint = tuple((float(x), float(y), float(z)) for x, y, z in self.joint)
        for p in occ + joint:
            if not all(v > 0 for v in p):
                raise ConfigError(f"probe values must be > 0, got {p}")
        object.__setattr__(self, "occupation", occ)
        object.__setattr__(self, "joint", joint)


@dataclass(frozen=True, eq=False)
class KilledRun:
    """One path of X on [0, tau].

    Node arrays have length m + 1.  ``seg_max[k]`` and ``seg_min[k]`` are
    the extremes of X on the open segment (t_{k-1}, t_k), including the
    left limit ``x_pre[k]``; index 0 holds X(0) = 0.
    """

    tau: float
    dt: Optional[float]
    events: tuple
    times: np.ndarray = field(repr=False)
    x_pre: np.ndarray = field(repr=False)
    x_post: np.ndarray = field(repr=False)
    seg_max: np.ndarray = field(repr=False)
    seg_min: np.ndarray = field(repr=False)
    claim: np.ndarray = field(repr=False)
    brownian: bool = False
    path_index: int = -1

    @cached_property
    def _inf_post(self) -> np.ndarray:
        return np.minimum.accumulate(np.minimum(self.seg_min, self.x_post))

    @cached_property
    def _inf_pre(self) -> np.ndarray:
        out = np.empty_like(self._inf_post)
        out[0] = 0.0
        out[1:] = np.minimum(self._inf_post[:-1], self.seg_min[1:])
        return out

    @cached_property
    def _delta(self) -> np.ndarray:
        return np.diff(self.times)

    @cached_property
    def _gap_start(self) -> np.ndarray:
        # gap S^ - X^ = X - inf X at the start of every segment
        return self.x_post[:-1] - self._inf_post[:-1]

    @cached_property
    def _gap_end(self) -> np.ndarray:
        return self.x_pre[1:] - self._inf_pre[1:]

    @property
    def S_tau(self) -> float:
        return float(max(self.seg_max.max(), self.x_post.max(), 0.0))

    @property
    def I_tau(self) -> float:
        return float(self._inf_post[-1])

    @property
    def Shat_tau(self) -> float:
        return 0.0 - self.I_tau

    def shat_before(self) -> np.ndarray:
        """S^(t_k -) at every node."""
        return 0.0 - self._inf_pre

    def shat_after(self) -> np.ndarray:
        """S^(t_k) at every node."""
        return 0.0 - self._inf_post


@dataclass(frozen=True, eq=False)
class LadderDecomposition:
    sigmas: np.ndarray
    L_parts: np.ndarray
    J_parts: np.ndarray
    gap_at_sigma: float
    shat_tau: float

    @property
    def N_tau(self) -> int:
        return int(self.sigmas.size)

    @property
    def shat_pre_sigma(self) -> float:
        """S^((sigma ^ tau)-) = L_0."""
        return float(self.L_parts[0])

    def residual(self) -> float:
        """|S^(tau) - sum L - sum J| relative to max(1, S^(tau))."""
        total = self.L_parts.sum() + self.J_parts.sum()
        return abs(self.shat_tau - total) / max(1.0, self.shat_tau)


def path_rng(master_seed: int, path_index: int) -> np.random.Generator:
    """Private stream for one path; independent of batching."""
    return np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=(path_index,)))


def _arrivals(rng, rate, horizon):
    if rate <= 0:
        return np.empty(0)
    chunk = int(rate * horizon + 4.0 * math.sqrt(rate * horizon) + 8)
    parts, t = [], 0.0
    while True:
        times = t + np.cumsum(rng.exponential(1.0 / rate, chunk))
        parts.append(times[times < horizon])
        if times[-1] >= horizon:
            return np.concatenate(parts)
        t = times[-1]


def _sample_events(model: ModelSpec, rng, tau):
    claims, pert = model.claims, model.perturbation
    events = []
    if claims.has_jumps:
        t = _arrivals(rng, claims.intensity, tau)
        events += [PathEvent(float(a), float(s), CLAIM)
                   for a, s in zip(t, np.atleast_1d(claims.law.sample(rng, t.size)))]
    if pert.has_jumps:
        t = _arrivals(rng, pert.jump_intensity, tau)
        events += [PathEvent(float(a), float(s), PERTURBATION)
                   for a, s in zip(t, np.atleast_1d(pert.jump_law.sample(rng, t.size)))]
    events.sort(key=lambda e: e.time)
    return events


# Segments whose bridge extreme reaches the running endpoint extreme with
# probability below exp(-BRIDGE_CUTOFF) keep their endpoint value.
BRIDGE_CUTOFF = 50.0


@njit(cache=True)
def _skeleton(inc, jump, var2, cutoff):
    """Node values of X and the segments that need a bridge-extreme draw.

    The maximum of a bridge a -> b exceeds L >= max(a, b) iff an Exp(1)
    draw is below 2 (L - a)(L - b) / var2.  Taking L as the running
    endpoint maximum before the segment, only segments with that
    threshold under ``cutoff`` can move the running supremum; likewise
    for minima.
    """
    m = inc.size
    x_post = np.zeros(m + 1)
    x_pre = np.zeros(m + 1)
    need_hi = np.zeros(m, dtype=np.bool_)
    need_lo = np.zeros(m, dtype=np.bool_)
    top = 0.0
    bottom = 0.0
    for i in range(m):
        a = x_post[i]
        b = a + inc[i]
        x_pre[i + 1] = b
        x_post[i + 1] = b - jump[i + 1]
        if var2[i] > 0:
            need_hi[i] = 2.0 * (top - a) * (top - b) < cutoff * var2[i]
            need_lo[i] = 2.0 * (a - bottom) * (b - bottom) < cutoff * var2[i]
        top = max(top, a, b)
        bottom = min(bottom, a, b)
    return x_post, x_pre, need_hi, need_lo


def _bridge_draw(rng, a, b, var2, need, sign):
    idx = np.flatnonzero(need)
    e = rng.standard_exponential(idx.size)
    ai, bi = a[idx], b[idx]
    return idx, 0.5 * (ai + bi + sign * np.sqrt((bi - ai) ** 2 + var2[idx] * e))


def build_run(model: ModelSpec, tau: float, events: Sequence[PathEvent], dt: Optional[float],
              rng: Optional[np.random.Generator] = None, exact_max: bool = True,
              path_index: int = -1) -> KilledRun:
    """Assemble a path from a killing time and a list of jump events.

    ``rng`` supplies the Brownian increments and bridge extremes; it may be
    None when the model has no Brownian part.
    """
    vol = model.perturbation.brownian_vol
    events = tuple(sorted(events, key=lambda e: e.time))
    for e in events:
        if not 0 < e.time < tau:
            raise ValueError(f"event time {e.time} outside (0, tau)")
        if not e.size > 0:
            raise ValueError("event sizes must be > 0")
        if e.source not in (CLAIM, PERTURBATION):
            raise ValueError(f"unknown event source {e.source!r}")
    ev_t = np.array([e.time for e in events])
    if vol > 0:
        if dt is None:
            raise ConfigError("a Brownian model needs dt")
        grid = dt * np.arange(int(math.ceil(tau / dt)))
        grid = grid[grid < tau]
    else:
        grid = np.zeros(1)
    pos = np.searchsorted(grid, ev_t, side="right")
    times = np.append(np.insert(grid, pos, ev_t), tau)
    ev_nodes = pos + np.arange(ev_t.size)

    m = times.size - 1
    claim = np.zeros(m + 1)
    jump = np.zeros(m + 1)
    for node, e in zip(ev_nodes, events):
        jump[node] = e.size
        if e.source == CLAIM:
            claim[node] = e.size

    delta = np.diff(times)
    inc = model.drift * delta
    if vol > 0:
        inc = inc + vol * np.sqrt(delta) * rng.standard_normal(m)
    var2 = 2.0 * vol * vol * delta if (vol > 0 and exact_max) else np.zeros(m)
    x_post, x_pre, need_hi, need_lo = _skeleton(inc, jump, var2, BRIDGE_CUTOFF)

    a, b = x_post[:-1], x_pre[1:]
    hi, lo = np.maximum(a, b), np.minimum(a, b)
    if need_hi.any() or need_lo.any():
        idx, up = _bridge_draw(rng, a, b, var2, need_hi, 1.0)
        hi[idx] = np.maximum(up, hi[idx])
        idx, down = _bridge_draw(rng, a, b, var2, need_lo, -1.0)
        lo[idx] = np.minimum(down, lo[idx])
    seg_max = np.concatenate(([0.0], hi))
    seg_min = np.concatenate(([0.0], lo))
    return KilledRun(tau=float(tau), dt=dt if vol > 0 else None, events=events, times=times,
                     x_pre=x_pre, x_post=x_post, seg_max=seg_max, seg_min=seg_min, claim=claim,
                     brownian=vol > 0, path_index=path_index)


def scripted_run(model: ModelSpec, tau: float, events: Sequence[PathEvent],
                 dt: Optional[float] = None, seed: int = 0, path_index: int = 0) -> KilledRun:
    """Test hook: a run with a given killing time and scripted jumps."""
    rng = np.random.default_rng(seed) if model.perturbation.brownian_vol > 0 else None
    return build_run(model, tau, events, dt, rng, path_index=path_index)


def simulate_killed_run(model: ModelSpec, config: SimConfig, path_index: int) -> KilledRun:
    """Simulate path ``path_index``; deterministic in (master_seed, path_index)."""
    config.check_guard(model)
    rng = path_rng(config.master_seed, path_index)
    tau = rng.exponential(1.0 / model.kill_rate)
    events = _sample_events(model, rng, tau)
    return build_run(model, tau, events, config.dt, rng, config.exact_max, path_index)


def detect_modified_ladder(run: KilledRun) -> LadderDecomposition:
    """Split S^(tau) at the claim-driven ladder epochs sigma_1 < sigma_2 < ...

    A claim at node k is an epoch when it lifts X^ strictly above its
    previous supremum, i.e. the claim exceeds the gap S^(t-) - X^(t-).
    """
    before, after = run.shat_before(), run.shat_after()
    shat = run.Shat_tau
    idx = np.flatnonzero((run.claim > 0) & (-run.x_post > before))
    if idx.size == 0:
        return LadderDecomposition(np.empty(0), np.array([shat]), np.empty(0), math.nan, shat)
    pre, post = before[idx], after[idx]
    L = np.empty(idx.size + 1)
    L[0] = pre[0]
    L[1:-1] = pre[1:] - post[:-1]
    L[-1] = shat - post[-1]
    J = post - pre
    gap = run.x_pre[idx[0]] - run._inf_pre[idx[0]]
    return LadderDecomposition(run.times[idx], L, J, float(gap), shat)


def _passage_node(run: KilledRun, y: float, stop: Optional[int] = None):
    """First node k <= stop with inf X < -y by t_k, and the crossing time."""
    below = run._inf_post[: None if stop is None else stop + 1] < -y
    k = int(np.argmax(below))
    if not below[k]:
        return None, None
    if run._inf_pre[k] < -y:
        t0, t1 = run.times[k - 1], run.times[k]
        if run.brownian:
            return k, 0.5 * (t0 + t1)
        a, b = run.x_post[k - 1], run.x_pre[k]
        return k, t0 + (t1 - t0) * (a + y) / (a - b)
    return k, float(run.times[k])


def first_passage(run: KilledRun, y: float) -> tuple[bool, Optional[float]]:
    """Whether X^ exceeded y before tau, and the first time it did.

    Crossings inside a Brownian segment are dated at the segment midpoint.
    """
    if not y > 0:
        raise ValueError("y must be > 0")
    k, t = _passage_node(run, y)
    return (k is not None), t


@njit(cache=True)
def _linear_occupation(g0, slope, length, x):
    """Total time in [0, length_i] with max(g0_i + slope_i t, 0) <= x, over segments i."""
    total = 0.0
    for i in range(g0.size):
        L, g, v = length[i], g0[i], slope[i]
        if v > 0:
            total += min(max((x - g) / v, 0.0), L)
        elif v == 0:
            total += L if g <= x else 0.0
        else:
            total += L - min(max((g - x) / -v, 0.0), L)
    return total


def occupation_time(run: KilledRun, x: float, y: float,
                    decomposition: Optional[LadderDecomposition] = None) -> float:
    """Time before min(sigma, first passage above y, tau) with S^ - X^ <= x.

    With a Brownian part the indicator is integrated by the trapezoid rule
    on the nodes; without one the gap is piecewise linear and the
    integral is exact.
    """
    if not (x > 0 and y > 0):
        raise ValueError("x and y must be > 0")
    if decomposition is None:
        decomposition = detect_modified_ladder(run)
    times = run.times
    last = times.size - 1  # segments 1..last are counted fully
    if decomposition.N_tau:
        last = int(np.searchsorted(times, decomposition.sigmas[0]))
    k, t_hit = _passage_node(run, y, last)
    partial = False
    if k is not None:
        if run._inf_pre[k] < -y:
            last, partial = k - 1, True
        else:
            last = k
    delta = run._delta[:last]
    g0, g1 = run._gap_start[:last], run._gap_end[:last]
    if run.brownian:
        total = 0.5 * float(np.dot(delta, (g0 <= x).astype(float) + (g1 <= x)))
        if partial:
            total += 0.5 * run._delta[last] * (run._gap_start[last] <= x)
        return float(total)
    slope = np.zeros_like(delta)
    nz = delta > 0
    slope[nz] = (g1[nz] - g0[nz]) / delta[nz]
    total = _linear_occupation(g0, slope, delta, x)
    if partial:
        g_start, dur = run._gap_start[last], run._delta[last]
        slope = (run.x_pre[last + 1] - run.x_post[last]) / dur
        total += _linear_occupation(np.array([g_start]), np.array([slope]),
                                    np.array([t_hit - times[last]]), x)
    return total


_FIELDS = ("path_index", "tau", "s_tau", "shat_tau", "n_tau", "sigma1", "shat_pre_sigma",
           "overshoot", "gap_at_sigma", "min_jump", "decomp_residual")


@dataclass(frozen=True, eq=False)
class EmpiricalSummary:
    """Per-path records of a batch, kept sorted by path index.

    NaN marks "not applicable" (e.g. ``sigma1`` when sigma > tau).
    ``occupation[:, j]`` is the occupation functional at
    ``occupation_probes[j]``.
    """

    path_index: np.ndarray
    tau: np.ndarray
    s_tau: np.ndarray
    shat_tau: np.ndarray
    n_tau: np.ndarray
    sigma1: np.ndarray
    shat_pre_sigma: np.ndarray
    overshoot: np.ndarray
    gap_at_sigma: np.ndarray
    min_jump: np.ndarray
    decomp_residual: np.ndarray
    occupation: np.ndarray
    occupation_probes: tuple = ()

    @property
    def n_paths(self) -> int:
        return int(self.path_index.size)

    @property
    def sigma_le_tau(self) -> np.ndarray:
        return self.n_tau > 0

    @property
    def overshoots(self) -> np.ndarray:
        return self.overshoot[self.sigma_le_tau]

    def n_tau_hist(self) -> np.ndarray:
        return np.bincount(self.n_tau)

    def passage(self, y: float) -> np.ndarray:
        """Indicators of {first passage of X^ above y happens by tau}."""
        return self.shat_tau > y

    def survive(self, y: float) -> np.ndarray:
        """Indicators of {sigma > tau and passage above y after tau}."""
        return ~self.sigma_le_tau & (self.shat_tau <= y)

    def joint_event(self, x: float, y: float, z: float) -> np.ndarray:
        """Indicators of {S^(sigma-) <= y, gap(sigma-) > z, J > x, sigma <= tau}."""
        f = self.sigma_le_tau
        with np.errstate(invalid="ignore"):
            return f & (self.shat_pre_sigma <= y) & (self.gap_at_sigma > z) & (self.overshoot > x)

    def occupation_at(self, x: float, y: float) -> np.ndarray:
        j = self.occupation_probes.index((float(x), float(y)))
        return self.occupation[:, j]

    def subset(self, mask) -> "EmpiricalSummary":
        kw = {f: getattr(self, f)[mask] for f in _FIELDS}
        return EmpiricalSummary(**kw, occupation=self.occupation[mask],
                                occupation_probes=self.occupation_probes)

    def merge(self, other: "EmpiricalSummary") -> "EmpiricalSummary":
        if self.occupation_probes != other.occupation_probes:
            raise ValueError("cannot merge summaries with different probes")
        kw = {f: np.concatenate([getattr(self, f), getattr(other, f)]) for f in _FIELDS}
        occ = np.concatenate([self.occupation, other.occupation])
        order = np.argsort(kw["path_index"], kind="stable")
        if np.any(np.diff(kw["path_index"][order]) == 0):
            raise ValueError("summaries share path indices")
        kw = {f: v[order] for f, v in kw.items()}
        return EmpiricalSummary(**kw, occupation=occ[order],
                                occupation_probes=self.occupation_probes)

    def equals(self, other: "EmpiricalSummary") -> bool:
        return (self.occupation_probes == other.occupation_probes
                and all(np.array_equal(getattr(self, f), getattr(other, f), equal_nan=True)
                        for f in _FIELDS)
                and np.array_equal(self.occupation, other.occupation, equal_nan=True))


def _summarize_path(run: KilledRun, probes: Probes) -> tuple:
    dec = detect_modified_ladder(run)
    n = dec.N_tau
    row = (
        run.path_index, run.tau, run.S_tau, run.Shat_tau, n,
        dec.sigmas[0] if n else math.nan,
        dec.shat_pre_sigma,
        dec.J_parts[0] if n else math.nan,
        dec.gap_at_sigma,
        dec.J_parts.min() if n else math.nan,
        dec.residual(),
    )
    occ = [occupation_time(run, x, y, dec) for x, y in probes.occupation]
    return row, occ


def summarize_runs(runs, probes: Optional[Probes] = None) -> EmpiricalSummary:
    """Summary of already simulated runs (e.g. scripted ones)."""
    probes = probes or Probes()
    rows, occs = [], []
    for run in runs:
        try:
            row, occ = _summarize_path(run, probes)
        except Exception as exc:  # re-raised with the failing path attached
            raise RuntimeError(f"path {run.path_index} failed: {exc}") from exc
        rows.append(row)
        occs.append(occ)
    if not rows:
        raise ValueError("no runs to summarize")
    kw = {}
    for name, col in zip(_FIELDS, zip(*rows)):
        dtype = np.int64 if name in ("path_index", "n_tau") else float
        kw[name] = np.asarray(col, dtype=dtype)
    occ = np.asarray(occs, dtype=float).reshape(len(rows), len(probes.occupation))
    out = EmpiricalSummary(**kw, occupation=occ, occupation_probes=probes.occupation)
    order = np.argsort(out.path_index, kind="stable")
    return out if np.all(order == np.arange(order.size)) else out.subset(order)


def _simulated_runs(model, config, start, stop):
    for i in range(start, stop):
        try:
            yield simulate_killed_run(model, config, i)
        except Exception as exc:
            raise RuntimeError(f"path {i} failed: {exc}") from exc


def _run_batch(model: ModelSpec, config: SimConfig, probes: Probes, start: int,
               stop: int) -> EmpiricalSummary:
    return summarize_runs(_simulated_runs(model, config, start, stop), probes)


def batch_simulate(model: ModelSpec, config: SimConfig,
                   probes: Optional[Probes] = None) -> EmpiricalSummary:
    """Simulate ``config.n_paths`` paths in batches and merge the summaries.

    Every path draws from its own stream, so the result does not depend on
    ``batch_size``, ``workers`` or the merge order.
    """
    probes = probes or Probes()
    config.check_guard(model)
    bounds = [(s, min(s + config.batch_size, config.n_paths))
              for s in range(0, config.n_paths, config.batch_size)]
    if config.workers > 1 and len(bounds) > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            futures = [pool.submit(_run_batch, model, config, probes, a, b) for a, b in bounds]
            parts = [f.result() for f in futures]
    else:
        parts = []
        for a, b in bounds:
            parts.append(_run_batch(model, config, probes, a, b))
            log.debug("batch %d-%d done", a, b)
    out = parts[0]
    for p in parts[1:]:
        out = out.merge(p)
    return out
