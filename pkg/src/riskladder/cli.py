"""Command line entry point: ``riskladder {validate,analytic,simulate,compare,ladder-diag}``.

Every command takes a YAML scenario file and ``--out DIR``.  Exit codes:
0 success, 1 configuration error, 2 numerical failure, 3 failed check.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import platform
import re
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import scipy
import yaml

from . import __version__
from .fluctuation import NumericalFailure, kappa_hat_zero, ladder_context, ladder_limit_check, \
    ladder_residual
from .model import ModelError, ModelSpec, NetProfit, mean_X, net_profit_status
from .pk_engine import OVERSHOOT, INTEGRATED_TAIL, GridDistribution, PKParameters, h_tau, \
    ladder_K, p_tau, pk_cdf
from .simulator import CLAIM, ConfigError, EmpiricalSummary, PathEvent, Probes, \
    SimConfig, batch_simulate, scripted_run, summarize_runs
from .stats import EmpiricalCDF, decomposition_check, geometric_check, independence_check, \
    joint_law_check, occupation_check, overshoot_check, p_tau_check, sup_norm_check, \
    supremum_law_check

log = logging.getLogger("riskladder")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_CHECK = 0, 1, 2, 3
SCHEMA_VERSION = 1



class _Loader(yaml.SafeLoader):
    """Safe loader that also reads exponent floats without a dot, such as 1e-3."""


_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(r"""^[-+]?(?:[0-9][0-9_]*)(?:\.[0-9_]*)?[eE][-+]?[0-9]+$
               |^[-+]?(?:[0-9][0-9_]*)\.[0-9_]*(?:[eE][-+]?[0-9]+)?$
               |^[-+]?\.[0-9_]+(?:[eE][-+]?[0-9]+)?$
               |^[-+]?\.(?:inf|Inf|INF)$
               |^\.(?:nan|NaN|NAN)$""", re.X),
    list("-+0123456789."))

SAMPLE_COLUMNS = ("tau", "S_tau", "Shat_tau", "N_tau", "sigma1", "Shat_pre_sigma", "J1")


def _keys(where: str, d, allowed: set, required: set = frozenset()):
    if not isinstance(d, dict):
        raise ConfigError(f"{where} must be a mapping")
    unknown = set(d) - allowed
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    missing = set(required) - set(d)
    if missing:
        raise ConfigError(f"{where}: missing keys {sorted(missing)}")


@dataclass(frozen=True)
class GridConfig:
    h: float = 0.01
    xmax: float = 40.0
    series_eps: float = 1e-12
    g_source: Optional[str] = None  # "delta0", "split_half" or a path to an (x,F) CSV

    def __post_init__(self):
        if not (self.h > 0 and self.xmax > self.h and self.series_eps > 0):
            raise ConfigError("grid needs h > 0, xmax > h and series_eps > 0")

    @property
    def n(self) -> int:
        return int(math.ceil(self.xmax / self.h - 1e-9))


@dataclass(frozen=True)
class ChecksConfig:
    supremum_ks: float = 0.01
    p_tau_se: float = 3.0
    overshoot_ks: float = 0.02
    overshoot_form: str = OVERSHOOT
    independence_coef: float = 1.63
    independence_min_group: int = 1000
    geometric_tv: float = 0.02
    occupation_se: float = 3.0
    joint_se: float = 3.0
    decomposition_tol: float = 1e-9
    pk_sup: float = 0.02

    def __post_init__(self):
        if self.overshoot_form not in (OVERSHOOT, INTEGRATED_TAIL):
            raise ConfigError(f"overshoot_form must be {OVERSHOOT!r} or {INTEGRATED_TAIL!r}")


@dataclass(frozen=True)
class LadderConfig:
    beta_max: float = 1e6
    n_points: int = 61

    def __post_init__(self):
        if self.beta_max < 1e4 or self.n_points < 2:
            raise ConfigError("ladder needs beta_max >= 1e4 and n_points >= 2")


@dataclass(frozen=True)
class Script:
    """Scripted single path for hand-traceable runs."""

    tau: float
    events: tuple = ()

    def to_dict(self) -> dict:
        return {"tau": self.tau,
                "events": [{"time": e.time, "size": e.size, "source": e.source} for e in self.events]}


@dataclass(frozen=True)
class Scenario:
    model: ModelSpec
    sim: SimConfig
    grid: GridConfig = field(default_factory=GridConfig)
    probes: Probes = field(default_factory=Probes)
    checks: ChecksConfig = field(default_factory=ChecksConfig)
    ladder: LadderConfig = field(default_factory=LadderConfig)
    output_dir: Optional[str] = None
    script: Optional[Script] = None

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        _keys("scenario", d, {"model", "sim", "grid", "probes", "checks", "ladder",
                              "output_dir", "script"}, {"model", "sim"})
        try:
            model = ModelSpec.from_dict(d["model"])
            _keys("sim", d["sim"], {"n_paths", "dt", "master_seed", "batch_size", "exact_max",
                                    "workers"}, {"n_paths", "dt", "master_seed"})
            sim = SimConfig(**d["sim"])
            grid = d.get("grid") or {}
            _keys("grid", grid, {"h", "xmax", "series_eps", "g_source"})
            pr = d.get("probes") or {}
            _keys("probes", pr, {"occupation", "joint"})
            probes = Probes(occupation=tuple(tuple(p) for p in pr.get("occupation", ())),
                            joint=tuple(tuple(p) for p in pr.get("joint", ())))
            checks = d.get("checks") or {}
            _keys("checks", checks, set(ChecksConfig.__dataclass_fields__))
            ladder = d.get("ladder") or {}
            _keys("ladder", ladder, {"beta_max", "n_points"})
            script = None
            if d.get("script") is not None:
                _keys("script", d["script"], {"tau", "events"}, {"tau"})
                events = []
                for e in d["script"].get("events") or ():
                    _keys("script.events[]", e, {"time", "size", "source"}, {"time", "size"})
                    events.append(PathEvent(float(e["time"]), float(e["size"]),
                                            e.get("source", CLAIM)))
                script = Script(float(d["script"]["tau"]), tuple(events))
            out = d.get("output_dir")
            return cls(model, sim, GridConfig(**grid), probes, ChecksConfig(**checks),
                       LadderConfig(**ladder), None if out is None else str(out), script)
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from exc

    def to_dict(self) -> dict:
        out = {
            "model": self.model.to_dict(),
            "sim": self.sim.to_dict(),
            "grid": {"h": self.grid.h, "xmax": self.grid.xmax, "series_eps": self.grid.series_eps,
                     "g_source": self.grid.g_source},
            "probes": {"occupation": [list(p) for p in self.probes.occupation],
                       "joint": [list(p) for p in self.probes.joint]},
            "checks": dict(vars(self.checks)),
            "ladder": {"beta_max": self.ladder.beta_max, "n_points": self.ladder.n_points},
            "output_dir": self.output_dir,
            "script": self.script.to_dict() if self.script else None,
        }
        return out

    @classmethod
    def load(cls, path) -> "Scenario":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read scenario: {exc}") from exc
        try:
            data = yaml.load(text, Loader=_Loader)
        except yaml.YAMLError as exc:
            raise ConfigError(f"malformed YAML: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("scenario file must hold a mapping")
        return cls.from_dict(data)


# -- output helpers ---------------------------------------------------------

def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    return "" if math.isnan(v) else "%.17g" % v


def write_csv(path: Path, header, rows):
    """CSV with a header row and 17-significant-digit numbers; NaN is written empty."""
    lines = [",".join(header)]
    lines += [",".join(_fmt(v) for v in row) for row in rows]
    path.write_text("\n".join(lines) + "\n")


def read_ecdf_csv(path) -> tuple[np.ndarray, np.ndarray]:
    try:
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read ECDF file {path}: {exc}") from exc
    if data.shape[1] != 2 or data.shape[0] == 0:
        raise ConfigError(f"ECDF file {path} must have two columns x,F and at least one row")
    return data[:, 0], data[:, 1]


def _write_json(path: Path, obj):
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n")


def _ecdf_rows(samples):
    if len(samples) == 0:
        return []
    xs, fs = EmpiricalCDF(samples).table()
    return zip(xs, fs)


def _grid_rows(grid: GridDistribution):
    return zip(grid.x, grid.cdf)


def _out_dir(args, scenario: Scenario) -> Path:
    out = Path(args.out or scenario.output_dir or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


# -- commands ---------------------------------------------------------------

def cmd_validate(scenario: Scenario, out: Path) -> int:
    model = scenario.model
    status = net_profit_status(model)
    warnings = []
    if not model.claims.has_jumps:
        warnings.append("sigma is almost surely infinite; PK reduces to G_tau")
    if status is NetProfit.VIOLATED:
        warnings.append("NPC violated; psi_X has a positive root b > 0")
    if mean_X(model) <= 0:
        warnings.append("mean of X is not positive: X need not drift to infinity")
    diag = {
        "net_profit": status.value,
        "mean_X": mean_X(model),
        "finite_activity": True,
        "warnings": warnings,
    }
    print(f"net profit condition: {status.value}")
    print("finite activity: yes (compound Poisson claims)")
    for w in warnings:
        print(f"warning: {w}")
    _write_json(out / "validate.json", diag)
    return EXIT_OK


def _g_grid(scenario: Scenario, ecdf_source=None) -> GridDistribution:
    grid, model = scenario.grid, scenario.model
    src = grid.g_source
    perturbed = model.perturbation.brownian_vol > 0 or model.perturbation.has_jumps
    if ecdf_source is not None:
        return GridDistribution.from_samples(grid.h, grid.n, ecdf_source)
    if src is None and not perturbed:
        src = "delta0"
    if src == "delta0":
        return GridDistribution.delta0(grid.h, grid.n)
    if src is None or src == "split_half":
        raise ConfigError("the analytic PK CDF needs grid.g_source (delta0 or an ECDF file)")
    xs, fs = read_ecdf_csv(src)
    nodes = grid.h * np.arange(grid.n + 1)
    idx = np.searchsorted(xs, nodes, side="right") - 1
    return GridDistribution(grid.h, np.where(idx >= 0, fs[np.maximum(idx, 0)], 0.0))


def _analytic(scenario: Scenario, out: Path, g: Optional[GridDistribution] = None) -> dict:
    ctx = ladder_context(scenario.model)
    grid = scenario.grid
    has_claims = scenario.model.claims.has_jumps
    p = p_tau(ctx) if has_claims else 0.0
    K = ladder_K(ctx) if has_claims else 0.0
    block = {"phi_q": ctx.phi_q, "b": ctx.b, "p_tau": p, "K": K, "q": ctx.q,
             "files": {"phi_b": "phi_b.json", "h_tau": "h_tau.csv"}}
    _write_json(out / "phi_b.json", {k: block[k] for k in ("phi_q", "b", "p_tau", "K", "q")})
    H = h_tau(ctx, grid.h, grid.n) if has_claims else None
    write_csv(out / "h_tau.csv", ("x", "H"), _grid_rows(H) if H is not None else [])
    if g is None:
        try:
            g = _g_grid(scenario)
        except ConfigError:
            if has_claims or scenario.grid.g_source is not None:
                raise
    if g is not None:
        pk = pk_cdf(PKParameters(p, H, g, grid.series_eps)) if has_claims else g
        write_csv(out / "pk_cdf.csv", ("x", "F"), _grid_rows(pk))
        block["files"]["pk_cdf"] = "pk_cdf.csv"
        block["pk_grid"] = pk
    return block


def cmd_analytic(scenario: Scenario, out: Path) -> int:
    block = _analytic(scenario, out)
    if "pk_grid" not in block:
        raise ConfigError("the analytic PK CDF needs grid.g_source (delta0 or an ECDF file)")
    print(f"phi(q) = {block['phi_q']:.12g}  b = {block['b']:.12g}  p_tau = {block['p_tau']:.12g}")
    return EXIT_OK


def _simulate(scenario: Scenario) -> EmpiricalSummary:
    if scenario.script is not None:
        if scenario.sim.n_paths != 1:
            raise ConfigError("a scripted run needs n_paths = 1")
        model = scenario.model
        run = scripted_run(model, scenario.script.tau, scenario.script.events,
                           scenario.sim.dt, scenario.sim.master_seed)
        return summarize_runs([run], scenario.probes)
    return batch_simulate(scenario.model, scenario.sim, scenario.probes)


def _write_samples(summary: EmpiricalSummary, out: Path) -> dict:
    rows = zip(summary.tau, summary.s_tau, summary.shat_tau, summary.n_tau, summary.sigma1,
               summary.shat_pre_sigma, summary.overshoot)
    write_csv(out / "samples.csv", SAMPLE_COLUMNS, rows)
    write_csv(out / "ecdf_shat.csv", ("x", "F"), _ecdf_rows(summary.shat_tau))
    write_csv(out / "ecdf_g.csv", ("x", "F"), _ecdf_rows(summary.shat_pre_sigma))
    write_csv(out / "overshoots.csv", ("J",), ((j,) for j in summary.overshoots))
    hist = summary.n_tau_hist()
    write_csv(out / "n_tau_hist.csv", ("n", "count"), enumerate(hist))
    return {"files": {"samples": "samples.csv", "ecdf_shat": "ecdf_shat.csv",
                      "ecdf_g": "ecdf_g.csv", "overshoots": "overshoots.csv",
                      "n_tau_hist": "n_tau_hist.csv"},
            "n_paths": summary.n_paths, "n_tau_hist": [int(c) for c in hist]}


def cmd_simulate(scenario: Scenario, out: Path) -> int:
    summary = _simulate(scenario)
    _write_samples(summary, out)
    print(f"simulated {summary.n_paths} paths; P(sigma <= tau) estimate "
          f"{summary.sigma_le_tau.mean():.6g}")
    return EXIT_OK


def _versions() -> dict:
    return {"riskladder": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


def run_checks(scenario: Scenario, summary: EmpiricalSummary, out: Path) -> tuple[dict, list]:
    """Analytic block plus every simulation-versus-formula check."""
    model, chk, grid = scenario.model, scenario.checks, scenario.grid
    ctx = ladder_context(model)
    has_claims = model.claims.has_jumps
    src = grid.g_source or "split_half"
    if src == "split_half":
        even = summary.path_index % 2 == 0
        g = GridDistribution.from_samples(grid.h, grid.n, summary.shat_pre_sigma[even])
        target = summary.shat_tau[~even]
    else:
        g = _g_grid(scenario)
        target = summary.shat_tau
    analytic = _analytic(scenario, out, g)
    pk = analytic.pop("pk_grid")
    analytic["g_source"] = src
    reports = [supremum_law_check(summary, ctx, chk.supremum_ks)]
    if has_claims:
        reports += [p_tau_check(summary, ctx, chk.p_tau_se),
                    overshoot_check(summary, ctx, chk.overshoot_ks, chk.overshoot_form),
                    geometric_check(summary, ctx, chk.geometric_tv)]
    reports.append(independence_check(summary.shat_pre_sigma, summary.sigma_le_tau,
                                      chk.independence_coef, chk.independence_min_group))
    reports += [occupation_check(summary, ctx, x, y, chk.occupation_se)
                for x, y in scenario.probes.occupation]
    if has_claims:
        reports += [joint_law_check(summary, ctx, x, y, z, chk.joint_se, chk.overshoot_form)
                    for x, y, z in scenario.probes.joint]
    reports.append(decomposition_check(summary, chk.decomposition_tol))
    if target.size:
        reports.append(sup_norm_check(f"pk_recomposition[{src}]", target, pk.linear,
                                      chk.pk_sup))
    return analytic, reports


def cmd_compare(scenario: Scenario, out: Path) -> int:
    summary = _simulate(scenario)
    empirical = _write_samples(summary, out)
    analytic, reports = run_checks(scenario, summary, out)
    for r in reports:
        print(r.line())
    report = {
        "schema_version": SCHEMA_VERSION,
        "scenario": scenario.to_dict(),
        "analytic": analytic,
        "empirical": empirical,
        "checks": [r.to_dict() for r in reports],
        "versions": _versions(),
        "seeds": {"master_seed": scenario.sim.master_seed},
    }
    _write_json(out / "report.json", report)
    return EXIT_CHECK if any(r.status == "fail" for r in reports) else EXIT_OK


def cmd_ladder_diag(scenario: Scenario, out: Path) -> int:
    ctx = ladder_context(scenario.model)
    lad = scenario.ladder
    lo = max(ctx.b, 1e-3) * 10 ** 0.25 if ctx.b > 0 else 1e-2
    betas = np.geomspace(lo, lad.beta_max, lad.n_points)
    rows = [(beta, kappa_hat_zero(ctx, beta), ladder_residual(ctx, beta)) for beta in betas]
    write_csv(out / "ladder.csv", ("beta", "kappa_hat", "residual"), rows)
    rep = ladder_limit_check(ctx, lad.beta_max)
    _write_json(out / "ladder.json", {"b": ctx.b, "target": rep.target,
                                      "limit_estimate": rep.limit_estimate,
                                      "rel_error": rep.rel_error, "beta_max": rep.beta_max})
    print(f"b = {ctx.b:.12g}  target = {rep.target:.12g}  rel_error = {rep.rel_error:.3g}")
    return EXIT_OK


COMMANDS = {
    "validate": cmd_validate,
    "analytic": cmd_analytic,
    "simulate": cmd_simulate,
    "compare": cmd_compare,
    "ladder-diag": cmd_ladder_diag,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="riskladder", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("scenario", help="YAML scenario file")
        p.add_argument("--out", help="output directory (default: scenario output_dir or .)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        scenario = Scenario.load(args.scenario)
        out = _out_dir(args, scenario)
        return COMMANDS[args.command](scenario, out)
    except (ConfigError, ModelError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalFailure, ArithmeticError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except RuntimeError as exc:
        print(f"simulation failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
