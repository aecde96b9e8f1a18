"""scikit-learn style front ends.

``fit(X, y, X_nuisance=None)`` runs the test and stores results in trailing
underscore attributes, so the tests compose with ``get_params``/``clone`` and
parameter sweeps like any other estimator.
"""

from __future__ import annotations

import os

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_consistent_length, check_is_fitted

from .bootstrap import BootMode, BootstrapSpec, bootstrap_pvalue, bootstrap_pvalue_multiplier
from .dataset import Dataset, ValidationError, validate
from .maxtest import WeightMode, max_statistic
from .pols import DegenerateModelError, build_gram, fit_all, fit_restricted
from .wald import wald_test


def _names(X):
    cols = getattr(X, "columns", None)
    if cols is None:
        return ()
    return tuple(str(c) for c in cols)


def check_regression_inputs(X, y, X_nuisance=None) -> Dataset:
    """Validate array-likes and assemble a :class:`Dataset`.

    Raises ``ValueError`` (or :class:`ValidationError`) on non-finite values,
    inconsistent lengths, zero columns or too few observations.
    """
    test_names = _names(X)
    nuis_names = _names(X_nuisance) if X_nuisance is not None else ()
    X = check_array(X, dtype=np.float64, ensure_min_features=1, ensure_min_samples=2)
    y = check_array(y, dtype=np.float64, ensure_2d=False)
    if y.ndim != 1:
        raise ValueError("y must be one-dimensional")
    if X_nuisance is None:
        Xd = np.empty((X.shape[0], 0))
    else:
        Xd = check_array(X_nuisance, dtype=np.float64, ensure_min_features=0)
    check_consistent_length(X, y, Xd)
    ds = Dataset(y, Xd, X, nuis_names, test_names)
    problems = validate(ds)
    if problems:
        raise ValidationError(problems)
    return ds


def _seed(random_state) -> int:
    if random_state is None:
        return int(np.random.SeedSequence().generate_state(1, np.uint64)[0])
    if isinstance(random_state, (int, np.integer)):
        return int(random_state)
    raise ValueError("random_state must be an int or None")


def _threads(n_jobs) -> int:
    if n_jobs is None:
        return 1
    if n_jobs < 0:
        return os.cpu_count() or 1
    return max(int(n_jobs), 1)


class ParsimoniousMaxTest(BaseEstimator):
    """Bootstrapped max-test of ``theta = 0`` over many parsimonious regressions.

    Parameters
    ----------
    weights : {"invse", "flat"}, default="invse"
        ``invse`` gives the max-t-test, ``flat`` the plain max-test.
    mode : {"wild", "multiplier"}, default="wild"
        Restricted-null parametric wild bootstrap or score multiplier bootstrap.
    n_replicates : int, default=1000
    random_state : int or None, default=0
        Master seed of the multiplier streams.
    n_jobs : int or None
        Worker threads for the replicate loop; results do not depend on it.

    Attributes
    ----------
    statistic_ : float
    pvalue_ : float
    argmax_ : int
        0-based index of the test column attaining the max.
    theta_ : ndarray of shape (k_theta,)
    se_ : ndarray of shape (k_theta,)
        Standard errors of ``sqrt(n) * theta_``.
    boot_stats_ : ndarray of shape (n_replicates,)
    """

    def __init__(self, weights="invse", mode="wild", n_replicates=1000, random_state=0, n_jobs=None):
        self.weights = weights
        self.mode = mode
        self.n_replicates = n_replicates
        self.random_state = random_state
        self.n_jobs = n_jobs

    def fit(self, X, y, X_nuisance=None):
        ds = check_regression_inputs(X, y, X_nuisance)
        spec = BootstrapSpec(self.n_replicates, _seed(self.random_state), self.mode)
        g = build_gram(ds)
        fs = fit_all(ds, g)
        if len(fs.degenerate):
            raise DegenerateModelError(fs.degenerate, ds.test_names)
        stat = max_statistic(fs, WeightMode.coerce(self.weights), ds.n, ds.test_names)
        threads = _threads(self.n_jobs)
        if spec.mode is BootMode.WILD:
            out = bootstrap_pvalue(ds, g, fit_restricted(ds, g), fs, stat, spec, threads)
        else:
            out = bootstrap_pvalue_multiplier(ds, g, fs, stat, spec, threads)
        self.outcome_ = out
        self.fit_set_ = fs
        self.statistic_ = stat.t_n
        self.argmax_ = stat.argmax
        self.argmax_name_ = ds.test_names[stat.argmax]
        self.pvalue_ = out.p_value
        self.theta_ = fs.theta_hat
        self.se_ = fs.s_hat
        self.boot_stats_ = out.boot_stats
        self.n_features_in_ = ds.k_theta
        return self

    def reject(self, alpha=0.05) -> bool:
        """Whether the bootstrap p-value falls below ``alpha``."""
        check_is_fitted(self, "pvalue_")
        return bool(self.pvalue_ < alpha)


class WaldBootstrapTest(BaseEstimator):
    """Full-model homoskedastic Wald test with restricted-null wild bootstrap.

    Needs ``k_delta + k_theta < n``.
    """

    def __init__(self, n_replicates=1000, random_state=0, n_jobs=None):
        self.n_replicates = n_replicates
        self.random_state = random_state
        self.n_jobs = n_jobs

    def fit(self, X, y, X_nuisance=None):
        ds = check_regression_inputs(X, y, X_nuisance)
        spec = BootstrapSpec(self.n_replicates, _seed(self.random_state))
        out = wald_test(ds, spec, _threads(self.n_jobs))
        self.outcome_ = out
        self.statistic_ = out.w_n
        self.normalized_statistic_ = out.w_s
        self.pvalue_ = out.p_boot
        self.pvalue_asymptotic_ = out.p_asymp
        self.boot_stats_ = out.boot_stats
        self.n_features_in_ = ds.k_theta
        return self

    def reject(self, alpha=0.05) -> bool:
        check_is_fitted(self, "pvalue_")
        return bool(self.pvalue_ < alpha)
