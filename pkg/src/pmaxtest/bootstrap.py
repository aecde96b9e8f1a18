"""Bootstrap p-values for the weighted max statistic.

Two schemes are provided:

* the restricted-null parametric wild bootstrap (default): regenerate
  ``y* = fitted0 + resid0 * eta`` from the nuisance-only fit, refit every
  parsimonious model and take the max with the original-sample weights;
* the score multiplier bootstrap: perturb each model's least-squares score
  ``-(1/n) sum_t eta_t v_(i),t x_(i),t`` and map it through ``H_(i)^{-1}``.

Replicate ``j`` always draws its N(0, 1) multipliers from a generator seeded
by ``(seed, j)`` alone, and replicates are processed in fixed-size chunks, so
results are bit-identical for any number of worker threads.
"""

from __future__ import annotations

import enum
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .dataset import Dataset
from .maxtest import MaxStat, WeightMode, max_statistic
from .pols import (
    FitSet,
    GramCache,
    RestrictedFit,
    build_gram,
    fit_all,
    fit_restricted,
    model_residuals,
    residualized_tests,
    theta_hat_batch,
)

CHUNK = 64


class BootMode(str, enum.Enum):
    WILD = "wild"
    MULTIPLIER = "multiplier"

    @classmethod
    def coerce(cls, value) -> BootMode:
        if isinstance(value, cls):
            return value
        aliases = {"parametricwild": "wild", "scoremultiplier": "multiplier"}
        key = str(value).lower().replace("_", "").replace("-", "")
        try:
            return cls(aliases.get(key, key))
        except ValueError:
            raise ValueError(f"unknown bootstrap mode {value!r}") from None


@dataclass(frozen=True)
class BootstrapSpec:
    replicates: int = 1000
    seed: int = 0
    mode: BootMode = BootMode.WILD

    def __post_init__(self):
        if int(self.replicates) < 1:
            raise ValueError("replicates must be >= 1")
        if int(self.seed) < 0 or int(self.seed) >= 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        object.__setattr__(self, "replicates", int(self.replicates))
        object.__setattr__(self, "seed", int(self.seed))
        object.__setattr__(self, "mode", BootMode.coerce(self.mode))

    @property
    def weight_reuse(self) -> bool:
        # bootstrap statistics always use the original-sample weights
        return True


@dataclass(frozen=True, eq=False)
class TestOutcome:
    stat: MaxStat
    boot_stats: np.ndarray
    p_value: float
    spec: BootstrapSpec
    elapsed: float

    __test__ = False  # not a pytest class


def multipliers(seed: int, j: int, n: int) -> np.ndarray:
    """The N(0, 1) multiplier vector of replicate ``j``."""
    ss = np.random.SeedSequence(seed, spawn_key=(j,))
    return np.random.Generator(np.random.PCG64(ss)).standard_normal(n)


def multiplier_block(seed: int, start: int, stop: int, n: int) -> np.ndarray:
    """Rows ``start .. stop-1`` of the replicate-by-observation multiplier matrix."""
    out = np.empty((stop - start, n))
    for r, j in enumerate(range(start, stop)):
        out[r] = multipliers(seed, j, n)
    return out


def bootstrap_pvalue_count(boot_stats: np.ndarray, t_n: float) -> float:
    """Share of bootstrap statistics strictly above ``t_n``."""
    boot_stats = np.asarray(boot_stats)
    return float(np.count_nonzero(boot_stats > t_n)) / boot_stats.shape[-1]


def run_chunked(fn, replicates: int, threads: int = 1) -> np.ndarray:
    """Apply ``fn(start, stop) -> (..., stop-start)`` over fixed chunks and join on the last axis."""
    bounds = [(s, min(s + CHUNK, replicates)) for s in range(0, replicates, CHUNK)]
    if threads is None or threads <= 1 or len(bounds) == 1:
        parts = [fn(s, e) for s, e in bounds]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda se: fn(*se), bounds))
    return np.concatenate(parts, axis=-1)


def _max_abs(values: np.ndarray, scale: np.ndarray) -> np.ndarray:
    # values: (k, m); scale: (k,) with zero for excluded models
    z = np.abs(values * scale[:, None])
    z[scale == 0] = 0.0
    return z.max(axis=0)


def wild_bootstrap_stats(
    ds: Dataset,
    g: GramCache,
    rf: RestrictedFit,
    weights: list[np.ndarray],
    spec: BootstrapSpec,
    threads: int = 1,
    eta: np.ndarray | None = None,
) -> np.ndarray:
    """Bootstrap max statistics for several weight vectors sharing one set of draws.

    Returns an array of shape (len(weights), replicates).
    """
    n = ds.n
    scales = [np.sqrt(n) * np.asarray(w) for w in weights]

    def chunk(start, stop):
        E = eta[start:stop] if eta is not None else multiplier_block(spec.seed, start, stop, n)
        Y = rf.fitted0[:, None] + rf.resid0[:, None] * E.T
        theta = theta_hat_batch(ds, g, Y)
        return np.stack([_max_abs(theta, s) for s in scales])

    return run_chunked(chunk, spec.replicates, threads)


def multiplier_bootstrap_stats(
    ds: Dataset,
    g: GramCache,
    fs: FitSet,
    weights: list[np.ndarray],
    spec: BootstrapSpec,
    threads: int = 1,
    eta: np.ndarray | None = None,
) -> np.ndarray:
    """Score-multiplier analogue of :func:`wild_bootstrap_stats`.

    The theta coordinate of ``H_(i)^{-1} G~_(i)`` reduces to
    ``-(1/denom_i) * sum_t eta_t v_(i),t r_(i),t`` with ``r_(i)`` the test
    column after projecting out the nuisance block, so one (m x n) by (n x k)
    product per chunk does all models at once.
    """
    n = ds.n
    q = model_residuals(ds, fs) * residualized_tests(ds, g)
    q[:, fs.degenerate] = 0.0
    denom = np.where(np.isin(np.arange(len(fs.denom)), fs.degenerate), 1.0, fs.denom)
    scales = [np.sqrt(n) * np.asarray(w) / denom for w in weights]

    def chunk(start, stop):
        E = eta[start:stop] if eta is not None else multiplier_block(spec.seed, start, stop, n)
        score = -(E @ q).T
        return np.stack([_max_abs(score, s) for s in scales])

    return run_chunked(chunk, spec.replicates, threads)


def bootstrap_pvalue(
    ds: Dataset,
    g: GramCache,
    rf: RestrictedFit,
    fs: FitSet,
    stat: MaxStat,
    spec: BootstrapSpec,
    threads: int = 1,
    eta: np.ndarray | None = None,
) -> TestOutcome:
    """Restricted-null parametric wild bootstrap p-value for ``stat``."""
    if spec.mode is not BootMode.WILD:
        raise ValueError("bootstrap_pvalue requires mode 'wild'")
    t0 = time.perf_counter()
    boot = wild_bootstrap_stats(ds, g, rf, [stat.weights], spec, threads, eta)[0]
    p = bootstrap_pvalue_count(boot, stat.t_n)
    return TestOutcome(stat, boot, p, spec, time.perf_counter() - t0)


def bootstrap_pvalue_multiplier(
    ds: Dataset,
    g: GramCache,
    fs: FitSet,
    stat: MaxStat,
    spec: BootstrapSpec,
    threads: int = 1,
    eta: np.ndarray | None = None,
) -> TestOutcome:
    """Score multiplier bootstrap p-value for ``stat`` (materialises n x k residuals)."""
    if spec.mode is not BootMode.MULTIPLIER:
        raise ValueError("bootstrap_pvalue_multiplier requires mode 'multiplier'")
    t0 = time.perf_counter()
    boot = multiplier_bootstrap_stats(ds, g, fs, [stat.weights], spec, threads, eta)[0]
    p = bootstrap_pvalue_count(boot, stat.t_n)
    return TestOutcome(stat, boot, p, spec, time.perf_counter() - t0)


def max_test(
    ds: Dataset,
    weights: WeightMode | str = WeightMode.INVSE,
    spec: BootstrapSpec | None = None,
    threads: int = 1,
) -> TestOutcome:
    """Full pipeline: Gram cache, fits, max statistic and bootstrap p-value."""
    spec = spec or BootstrapSpec()
    t0 = time.perf_counter()
    g = build_gram(ds)
    fs = fit_all(ds, g)
    stat = max_statistic(fs, weights, ds.n, names=ds.test_names)
    if spec.mode is BootMode.WILD:
        out = bootstrap_pvalue(ds, g, fit_restricted(ds, g), fs, stat, spec, threads)
    else:
        out = bootstrap_pvalue_multiplier(ds, g, fs, stat, spec, threads)
    return TestOutcome(out.stat, out.boot_stats, out.p_value, spec, time.perf_counter() - t0)
