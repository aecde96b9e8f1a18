"""Monte Carlo rejection-frequency harness.

A design is the product grid of sample sizes, nuisance dimensions, test
dimensions (fixed or growth rules), covariate cases and alternatives. Every
sample in every cell gets its own seed derived from ``(master seed, cell id,
sample index)``, so a cell can be re-run alone and results do not depend on
the thread count.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
import platform
import sys
import time
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .bootstrap import BootstrapSpec, bootstrap_pvalue_count, wild_bootstrap_stats
from .dgp import AlternativeSpec, CovariateSpec, Dependence, generate, k_growth
from .maxtest import WeightMode, max_statistic
from .pols import build_gram, fit_all, fit_restricted
from .wald import wald_test

TESTS = ("pmax", "pmaxt", "waldboot")
TEST_LABELS = {"pmax": "p-Max-Test", "pmaxt": "p-Max-t-Test", "waldboot": "Wald"}
DEFAULT_ALPHAS = (0.01, 0.05, 0.10)


class DesignError(ValueError):
    def __init__(self, key: str, message: str):
        self.key = key
        super().__init__(f"{key}: {message}")


@dataclass(frozen=True)
class Covariates:
    bound: float = math.inf
    dependence: Dependence = Dependence.CROSS_BLOCK

    def __post_init__(self):
        object.__setattr__(self, "bound", float(self.bound))
        object.__setattr__(self, "dependence", Dependence.coerce(self.dependence))

    @property
    def label(self) -> str:
        b = "inf" if math.isinf(self.bound) else f"{self.bound:g}"
        return f"U={b},{self.dependence.value}"


@dataclass(frozen=True, eq=False)
class McCell:
    n: int
    k_delta: int
    k_theta: int
    covariates: Covariates
    alternative: AlternativeSpec
    k_theta_rule: str = ""

    @property
    def cell_id(self) -> str:
        return (
            f"n={self.n}|kd={self.k_delta}|kt={self.k_theta}|{self.covariates.label}"
            f"|{self.alternative.label}"
        )

    def covariate_spec(self, seed: int = 0) -> CovariateSpec:
        return CovariateSpec(
            self.k_delta, self.k_theta, self.covariates.bound, self.covariates.dependence, seed
        )

    def wald_feasible(self) -> bool:
        return self.k_delta + self.k_theta < self.n


@dataclass(eq=False)
class McCellReport:
    """Rejection frequencies of one cell.

    ``rejection[test][alpha]`` is None for a test infeasible in the cell.
    ``p_values`` and ``statistics`` keep the per-sample values.
    """

    cell: McCell
    mc_samples: int
    replicates: int
    alphas: tuple[float, ...]
    rejection: dict[str, dict[float, float | None]]
    mean_p: dict[str, float | None]
    median_p: dict[str, float | None]
    p_values: dict[str, np.ndarray]
    statistics: dict[str, np.ndarray]
    mean_seconds: float
    degenerate_count: int
    error: str | None = None


@dataclass
class McDesign:
    n_list: list[int]
    k_delta_list: list[int] = field(default_factory=lambda: [0])
    k_theta_rules: list[int | str] = field(default_factory=lambda: [35])
    covariates: list[Covariates] = field(default_factory=lambda: [Covariates()])
    alternatives: list[AlternativeSpec] = field(default_factory=lambda: [AlternativeSpec("null")])
    tests: list[str] = field(default_factory=lambda: list(TESTS))
    mc_samples: int = 1000
    replicates: int = 1000
    alpha_list: list[float] = field(default_factory=lambda: list(DEFAULT_ALPHAS))
    seed: int = 0

    def __post_init__(self):
        for key in ("n_list", "k_delta_list", "k_theta_rules", "covariates", "alternatives", "tests", "alpha_list"):
            if not getattr(self, key):
                raise DesignError(key, "must be a nonempty list")
        for j, a in enumerate(self.alpha_list):
            if not 0 < a < 1:
                raise DesignError(f"alpha_list[{j}]", f"{a} not in (0, 1)")
        for j, t in enumerate(self.tests):
            if t not in TESTS:
                raise DesignError(f"tests[{j}]", f"unknown test {t!r}; choose from {', '.join(TESTS)}")
        if self.mc_samples < 1:
            raise DesignError("mc_samples", "must be >= 1")
        if self.replicates < 1:
            raise DesignError("replicates", "must be >= 1")

    def cells(self) -> list[McCell]:
        out = []
        for n, kd, rule, cov, alt in itertools.product(
            self.n_list, self.k_delta_list, self.k_theta_rules, self.covariates, self.alternatives
        ):
            if isinstance(rule, str):
                kt, label = k_growth(n, rule), rule
            else:
                kt, label = int(rule), ""
            out.append(McCell(int(n), int(kd), kt, cov, alt, label))
        return out

    @classmethod
    def from_dict(cls, cfg: dict) -> McDesign:
        """Build a design from plain config data; errors name the offending key."""
        if not isinstance(cfg, dict):
            raise DesignError("<root>", "design must be a mapping")
        known = {
            "n_list", "k_delta_list", "k_theta", "k_theta_rules", "covariates", "alternatives",
            "tests", "mc_samples", "replicates", "alpha_list", "seed",
        }
        for key in cfg:
            if key not in known:
                raise DesignError(key, "unknown key")
        kw = {}
        try:
            kw["n_list"] = [int(v) for v in _as_list(cfg, "n_list", required=True)]
        except (TypeError, ValueError):
            raise DesignError("n_list", "entries must be integers") from None
        if "k_delta_list" in cfg:
            kw["k_delta_list"] = [int(v) for v in _as_list(cfg, "k_delta_list")]
        rules = cfg.get("k_theta_rules", cfg.get("k_theta"))
        if rules is not None:
            parsed = []
            for j, r in enumerate(rules if isinstance(rules, list) else [rules]):
                if isinstance(r, str) and r.lower() in ("k1", "k2"):
                    parsed.append(r.lower())
                elif isinstance(r, int) and r >= 1:
                    parsed.append(r)
                else:
                    raise DesignError(f"k_theta[{j}]", f"expected a positive integer, 'k1' or 'k2', got {r!r}")
            kw["k_theta_rules"] = parsed
        if "covariates" in cfg:
            covs = []
            for j, c in enumerate(_as_list(cfg, "covariates")):
                try:
                    bound = c.get("bound", "inf")
                    bound = math.inf if str(bound).lower() in ("inf", "infinity", "none") else float(bound)
                    covs.append(Covariates(bound, c.get("dependence", "cross_block")))
                except (AttributeError, ValueError, TypeError) as e:
                    raise DesignError(f"covariates[{j}]", str(e)) from None
            kw["covariates"] = covs
        if "alternatives" in cfg:
            alts = []
            for j, a in enumerate(_as_list(cfg, "alternatives")):
                try:
                    a = {"kind": a} if isinstance(a, str) else dict(a)
                    alts.append(AlternativeSpec(**a))
                except (TypeError, ValueError) as e:
                    raise DesignError(f"alternatives[{j}]", str(e)) from None
            kw["alternatives"] = alts
        if "tests" in cfg:
            kw["tests"] = [str(t).lower() for t in _as_list(cfg, "tests")]
        for key in ("mc_samples", "replicates", "seed"):
            if key in cfg:
                try:
                    kw[key] = int(cfg[key])
                except (TypeError, ValueError):
                    raise DesignError(key, "must be an integer") from None
        if "alpha_list" in cfg:
            kw["alpha_list"] = [float(a) for a in _as_list(cfg, "alpha_list")]
        return cls(**kw)


def _as_list(cfg, key, required=False):
    if key not in cfg:
        if required:
            raise DesignError(key, "missing required key")
        return []
    v = cfg[key]
    if not isinstance(v, list):
        raise DesignError(key, "must be a list")
    return v


def _cell_key(cell: McCell) -> int:
    return zlib.crc32(cell.cell_id.encode("utf-8"))


def sample_seeds(master: int, cell: McCell, sample: int) -> tuple[np.random.SeedSequence, int]:
    """Data-generation seed sequence and bootstrap seed of one Monte Carlo sample."""
    key = _cell_key(cell)
    data = np.random.SeedSequence(master, spawn_key=(key, sample, 0))
    boot = np.random.SeedSequence(master, spawn_key=(key, sample, 1))
    return data, int(boot.generate_state(1, np.uint64)[0])


def _run_sample(cell: McCell, alt: AlternativeSpec, tests, replicates: int, master: int, s: int):
    t0 = time.perf_counter()
    data_ss, boot_seed = sample_seeds(master, cell, s)
    draw = generate(cell.covariate_spec(), alt, cell.n, np.random.default_rng(data_ss))
    ds = draw.dataset
    spec = BootstrapSpec(replicates, boot_seed)
    pvals, stats = {}, {}
    g = build_gram(ds)
    fs = fit_all(ds, g)
    degenerate = len(fs.degenerate)
    max_tests = [t for t in tests if t in ("pmax", "pmaxt")]
    if max_tests:
        mstats = {}
        for t in max_tests:
            mode = WeightMode.FLAT if t == "pmax" else WeightMode.INVSE
            try:
                mstats[t] = max_statistic(fs, mode, ds.n)
            except ValueError:
                pvals[t], stats[t] = math.nan, math.nan
        if mstats:
            rf = fit_restricted(ds, g)
            boot = wild_bootstrap_stats(ds, g, rf, [m.weights for m in mstats.values()], spec)
            for (t, m), b in zip(mstats.items(), boot):
                pvals[t] = bootstrap_pvalue_count(b, m.t_n)
                stats[t] = m.t_n
    if "waldboot" in tests and cell.wald_feasible():
        w = wald_test(ds, spec)
        pvals["waldboot"], stats["waldboot"] = w.p_boot, w.w_n
    return pvals, stats, degenerate, time.perf_counter() - t0


def run_cell(
    cell: McCell,
    tests=TESTS,
    mc_samples: int = 1000,
    replicates: int = 1000,
    alphas=DEFAULT_ALPHAS,
    seed: int = 0,
    threads: int = 1,
) -> McCellReport:
    """Simulate one design cell and tabulate ``P(p < alpha)`` per test."""
    tests = [t for t in tests]
    alphas = tuple(float(a) for a in alphas)
    pilot_seed = int(np.random.SeedSequence(seed, spawn_key=(_cell_key(cell), 2**31)).generate_state(1)[0])
    alt = cell.alternative.resolve(cell.covariate_spec(pilot_seed))

    def work(s):
        return _run_sample(cell, alt, tests, replicates, seed, s)

    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, range(mc_samples)))
    else:
        results = [work(s) for s in range(mc_samples)]

    rejection, mean_p, median_p, p_values, statistics = {}, {}, {}, {}, {}
    for t in tests:
        if t == "waldboot" and not cell.wald_feasible():
            rejection[t] = {a: None for a in alphas}
            mean_p[t] = median_p[t] = None
            continue
        p = np.array([r[0].get(t, math.nan) for r in results])
        p_values[t] = p
        statistics[t] = np.array([r[1].get(t, math.nan) for r in results])
        rejection[t] = {a: int(np.count_nonzero(p < a)) / mc_samples for a in alphas}
        mean_p[t] = float(np.nanmean(p)) if np.isfinite(p).any() else None
        median_p[t] = float(np.nanmedian(p)) if np.isfinite(p).any() else None
    return McCellReport(
        cell=cell,
        mc_samples=mc_samples,
        replicates=replicates,
        alphas=alphas,
        rejection=rejection,
        mean_p=mean_p,
        median_p=median_p,
        p_values=p_values,
        statistics=statistics,
        mean_seconds=float(np.mean([r[3] for r in results])),
        degenerate_count=int(sum(r[2] for r in results)),
    )


@dataclass
class GridResult:
    reports: list[McCellReport]
    text: str
    csv: str
    manifest: dict


def run_grid(design: McDesign, threads: int = 1, progress=None) -> GridResult:
    """Run every cell of ``design``; a failing cell is reported, never fatal."""
    reports = []
    started = time.time()
    for cell in design.cells():
        t0 = time.perf_counter()
        try:
            rep = run_cell(
                cell, design.tests, design.mc_samples, design.replicates,
                design.alpha_list, design.seed, threads,
            )
        except Exception as e:  # noqa: BLE001 - annotate and keep going
            rep = McCellReport(
                cell, design.mc_samples, design.replicates, tuple(design.alpha_list),
                {t: {a: None for a in design.alpha_list} for t in design.tests},
                {}, {}, {}, {}, math.nan, 0, error=f"{type(e).__name__}: {e}",
            )
        reports.append(rep)
        if progress is not None:
            progress(rep, time.perf_counter() - t0)
    manifest = {
        "seed": design.seed,
        "design": design_to_dict(design),
        "versions": {
            "pmaxtest": __version__,
            "python": sys.version.split()[0],
            "numpy": np.__version__,
            "platform": platform.platform(),
        },
        "started_unix": started,
        "elapsed_s": time.time() - started,
        "cells": [
            {"cell_id": r.cell.cell_id, "mean_seconds_per_sample": r.mean_seconds, "error": r.error}
            for r in reports
        ],
    }
    return GridResult(reports, render_text(reports), render_csv(reports), manifest)


def design_to_dict(design: McDesign) -> dict:
    return {
        "n_list": list(design.n_list),
        "k_delta_list": list(design.k_delta_list),
        "k_theta": list(design.k_theta_rules),
        "covariates": [
            {"bound": "inf" if math.isinf(c.bound) else c.bound, "dependence": c.dependence.value}
            for c in design.covariates
        ],
        "alternatives": [_alt_dict(a) for a in design.alternatives],
        "tests": list(design.tests),
        "mc_samples": design.mc_samples,
        "replicates": design.replicates,
        "alpha_list": list(design.alpha_list),
        "seed": design.seed,
    }


def _alt_dict(a: AlternativeSpec) -> dict:
    d = {"kind": a.kind}
    if a.theta is not None:
        d["theta"] = np.asarray(a.theta).tolist()
    if a.drift is not None:
        d["drift"] = np.asarray(a.drift).tolist()
    return d


INFEASIBLE = "\u2014"


def _fmt(v) -> str:
    if v is None:
        return INFEASIBLE
    if v >= 1.0:
        return "1.00"
    return f"{v:.3f}".lstrip("0")


def render_text(reports: list[McCellReport]) -> str:
    """Aligned tables: one block per (alternative, covariates, k_delta, n), k_theta panels side by side."""
    groups: dict[tuple, list[McCellReport]] = {}
    for r in reports:
        c = r.cell
        groups.setdefault((c.alternative.label, c.covariates.label, c.k_delta, c.n), []).append(r)
    lines = []
    for (alt, cov, kd, n), reps in groups.items():
        alphas = reps[0].alphas
        tests = list(reps[0].rejection)
        lines.append(f"{alt}  [{cov}, k_delta={kd}]  n={n}")
        head = f"{'Test / Size':<14}"
        sub = f"{'':<14}"
        for r in reps:
            width = 7 * len(alphas)
            head += "| " + f"k_theta={r.cell.k_theta}".center(width - 2)
            sub += "|" + "".join(f"{a * 100:>6g}%" for a in alphas)[1:]
        lines.append(head)
        lines.append(sub)
        lines.append("-" * len(sub))
        for t in tests:
            row = f"{TEST_LABELS.get(t, t):<14}"
            for r in reps:
                if r.error:
                    row += "|" + "error".center(7 * len(alphas) - 1)
                    continue
                vals = r.rejection.get(t, {})
                row += "|" + "".join(f"{_fmt(vals.get(a)):>7}" for a in alphas)[1:]
            lines.append(row)
        for r in reps:
            if r.error:
                lines.append(f"  ! {r.cell.cell_id}: {r.error}")
        lines.append("")
    return "\n".join(lines)


CSV_FIELDS = [
    "cell_id", "n", "k_delta", "k_theta", "k_theta_rule", "bound", "dependence", "alternative",
    "test", "alpha", "rejection_frequency", "mean_p", "median_p", "mc_samples", "replicates",
    "mean_seconds_per_sample", "degenerate_models", "error",
]


def render_csv(reports: list[McCellReport]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CSV_FIELDS, lineterminator="\n")
    w.writeheader()
    for r in reports:
        c = r.cell
        for t, per_alpha in r.rejection.items():
            for a, v in per_alpha.items():
                w.writerow({
                    "cell_id": c.cell_id, "n": c.n, "k_delta": c.k_delta, "k_theta": c.k_theta,
                    "k_theta_rule": c.k_theta_rule, "bound": c.covariates.bound,
                    "dependence": c.covariates.dependence.value, "alternative": c.alternative.label,
                    "test": t, "alpha": a, "rejection_frequency": "" if v is None else v,
                    "mean_p": "" if r.mean_p.get(t) is None else r.mean_p[t],
                    "median_p": "" if r.median_p.get(t) is None else r.median_p[t],
                    "mc_samples": r.mc_samples, "replicates": r.replicates,
                    "mean_seconds_per_sample": r.mean_seconds, "degenerate_models": r.degenerate_count,
                    "error": r.error or "",
                })
    return buf.getvalue()


def write_outputs(result: GridResult, outdir: str | Path) -> list[Path]:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    paths = [outdir / "tables.txt", outdir / "rejections.csv", outdir / "manifest.json"]
    paths[0].write_text(result.text, encoding="utf-8")
    paths[1].write_text(result.csv, encoding="utf-8")
    paths[2].write_text(json.dumps(result.manifest, indent=2, default=str), encoding="utf-8")
    return paths


def _paper(alt: str) -> dict:
    return {
        "n_list": [100, 250, 500],
        "k_delta_list": [0],
        "k_theta": [35, "k1", "k2"],
        "covariates": [{"bound": "inf", "dependence": "cross_block"}],
        "alternatives": [{"kind": alt}],
        "tests": list(TESTS),
        "mc_samples": 500,
        "replicates": 500,
        "alpha_list": list(DEFAULT_ALPHAS),
        "seed": 20230101,
    }


PRESETS = {
    "paper-h0": _paper("null"),
    "paper-alt1": _paper("alt1"),
    "paper-alt2": _paper("alt2"),
    "paper-alt3": _paper("alt3"),
    "desk-scale": {
        "n_list": [100],
        "k_delta_list": [0],
        "k_theta": [35, 200],
        "covariates": [{"bound": "inf", "dependence": "cross_block"}],
        "alternatives": [{"kind": "null"}, {"kind": "local_drift", "drift": 0.5}],
        "tests": list(TESTS),
        "mc_samples": 200,
        "replicates": 200,
        "alpha_list": list(DEFAULT_ALPHAS),
        "seed": 20230101,
    },
}
