"""Full-model Wald test of theta = 0, usable only when k_delta + k_theta < n.

The statistic is the homoskedastic quadratic form

    W_n = theta_hat' [sigma2_hat * ((X'X)^{-1})_{theta theta}]^{-1} theta_hat

with ``sigma2_hat = SSR / n``. It is bootstrapped with the same
restricted-null wild scheme and multiplier streams as the max-test.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
from scipy import linalg, stats

from .bootstrap import BootstrapSpec, bootstrap_pvalue_count, multiplier_block, run_chunked
from .dataset import Dataset
from .pols import build_gram, fit_restricted


class InfeasibleDimensionError(ValueError):
    pass


class CollinearDesignError(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True, eq=False)
class WaldOutcome:
    """Wald statistic, its normalised form and p-values.

    ``p_asymp`` (chi-square) and ``p_asymp_normalized`` (one-sided normal on
    ``w_s``) are reference values only; both are badly over-sized in practice.
    """

    w_n: float
    w_s: float
    p_boot: float
    p_asymp: float
    p_asymp_normalized: float
    boot_stats: np.ndarray
    elapsed: float


def normalized_wald(w: float | np.ndarray, k_theta: int):
    return (w - k_theta) / np.sqrt(2.0 * k_theta)


class _WaldForm:
    def __init__(self, ds: Dataset):
        n, kd, kt = ds.n, ds.k_delta, ds.k_theta
        if kd + kt >= n:
            raise InfeasibleDimensionError(
                f"Wald test needs k_delta + k_theta < n (got {kd} + {kt} >= {n})"
            )
        X = np.column_stack([ds.x_delta, ds.x_theta])
        if np.linalg.matrix_rank(X) < X.shape[1]:
            raise CollinearDesignError("full design matrix is rank deficient")
        self.X = X
        self.n, self.kd, self.kt = n, kd, kt
        self.chol = linalg.cho_factor(X.T @ X, lower=True)
        inv = linalg.cho_solve(self.chol, np.eye(X.shape[1]))
        V = inv[kd:, kd:]
        # inverse of the theta block of (X'X)^{-1}
        self.precision = linalg.inv(V, check_finite=False)
        self.precision = 0.5 * (self.precision + self.precision.T)

    def statistic(self, Y: np.ndarray) -> np.ndarray:
        Xy = self.X.T @ Y
        beta = linalg.cho_solve(self.chol, Xy)
        yy = np.einsum("i...,i...->...", Y, Y)
        ssr = np.maximum(yy - np.einsum("i...,i...->...", beta, Xy), 0.0)
        sigma2 = ssr / self.n
        th = beta[self.kd:]
        q = np.einsum("i...,i...->...", th, self.precision @ th)
        return q / sigma2


def wald_test(ds: Dataset, spec: BootstrapSpec | None = None, threads: int = 1) -> WaldOutcome:
    """Wald statistic with restricted-null wild bootstrap p-value.

    ``p_boot`` counts ``W*_j > W_n``; since the normalisation is a monotone
    map this is also the p-value of the normalised statistic.

    Raises
    ------
    InfeasibleDimensionError
        If ``k_delta + k_theta >= n``.
    CollinearDesignError
        If the full design does not have full column rank.
    """
    spec = spec or BootstrapSpec()
    t0 = time.perf_counter()
    form = _WaldForm(ds)
    w_n = float(form.statistic(ds.y))

    rf = fit_restricted(ds, build_gram(ds))

    def chunk(start, stop):
        E = multiplier_block(spec.seed, start, stop, ds.n)
        return form.statistic(rf.fitted0[:, None] + rf.resid0[:, None] * E.T)

    boot = run_chunked(chunk, spec.replicates, threads)
    k = ds.k_theta
    w_s = float(normalized_wald(w_n, k))
    return WaldOutcome(
        w_n=w_n,
        w_s=w_s,
        p_boot=bootstrap_pvalue_count(boot, w_n),
        p_asymp=float(stats.chi2.sf(w_n, k)),
        p_asymp_normalized=float(stats.norm.sf(w_s)),
        boot_stats=boot,
        elapsed=time.perf_counter() - t0,
    )
