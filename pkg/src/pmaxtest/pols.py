"""Partitioned least squares for the restricted model and all parsimonious models.

Model ``i`` regresses ``y`` on ``x_(i) = [x_delta, x_theta_i]``. Writing
``G = X_d'X_d``, ``b_i = X_d'x_i``, ``c_i = x_i'x_i``, ``a = X_d'y`` and
``d_i = x_i'y``, block elimination gives

    u_i     = G^{-1} b_i
    s_i     = c_i - b_i'u_i                    (Schur complement)
    theta_i = (d_i - a'u_i) / s_i
    delta_i = G^{-1} a - u_i theta_i
    SSR_i   = y'y - a'delta_i - d_i theta_i

so after one factorisation of ``G`` every model costs O(k_delta^2) and no
per-model residual vector is ever formed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .dataset import Dataset

DEGENERACY_TOL = 1e-10
JITTER = 1e-10
PIVOT_TOL = 1e-9


class CollinearNuisanceError(np.linalg.LinAlgError):
    """Raised when ``X_delta'X_delta`` is singular even after a jitter retry."""


class DegenerateModelError(ValueError):
    """A parsimonious model has a vanishing Schur complement."""

    def __init__(self, indices, names=None):
        self.indices = list(int(i) for i in indices)
        self.names = [names[i] for i in self.indices] if names is not None else None
        label = ", ".join(self.names) if self.names else ", ".join(map(str, self.indices))
        super().__init__(f"test column(s) collinear with the nuisance block: {label}")


@dataclass(frozen=True, eq=False)
class GramCache:
    """Cross-products shared by every parsimonious fit.

    ``u`` (k_delta x k_theta) and ``denom`` (k_theta) are derived once here so
    that refits with a new response only need ``a``, ``d`` and ``yy``.
    """

    G: np.ndarray
    chol_G: np.ndarray
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d: np.ndarray
    yy: float
    u: np.ndarray
    denom: np.ndarray
    jittered: bool = False

    @property
    def degenerate(self) -> np.ndarray:
        return np.flatnonzero(~(self.denom > DEGENERACY_TOL * self.c))

    def solve_G(self, rhs: np.ndarray) -> np.ndarray:
        if self.G.shape[0] == 0:
            return np.zeros((0,) + np.shape(rhs)[1:])
        return linalg.cho_solve((self.chol_G, True), rhs)


@dataclass(frozen=True, eq=False)
class RestrictedFit:
    delta0_hat: np.ndarray
    resid0: np.ndarray
    fitted0: np.ndarray


@dataclass(frozen=True, eq=False)
class FitSet:
    """Estimates of all ``k_theta`` parsimonious models.

    ``s_hat[i]`` is the standard error of ``sqrt(n) * theta_hat[i]``, i.e.
    ``sqrt(n / denom[i] * v_hat_sq[i])``. Degenerate models carry NaN.
    """

    theta_hat: np.ndarray
    delta_hat: np.ndarray
    s_hat: np.ndarray
    v_hat_sq: np.ndarray
    denom: np.ndarray
    degenerate: np.ndarray
    n: int

    @property
    def t_ratio(self) -> np.ndarray:
        return np.sqrt(self.n) * self.theta_hat / self.s_hat


def _well_posed(L: np.ndarray, G: np.ndarray) -> bool:
    # squared pivots are the successive Schur complements; compare to the scale of G.
    # The bound sits above the jitter so a bump cannot mask exact collinearity.
    return bool(np.min(np.diag(L)) ** 2 > PIVOT_TOL * np.max(np.diag(G)))


def _cholesky(G: np.ndarray) -> tuple[np.ndarray, bool]:
    k = G.shape[0]
    if k == 0:
        return np.empty((0, 0)), False
    try:
        L = np.linalg.cholesky(G)
        if _well_posed(L, G):
            return L, False
    except np.linalg.LinAlgError:
        pass
    bump = JITTER * np.trace(G) / k
    try:
        L = np.linalg.cholesky(G + bump * np.eye(k))
        if _well_posed(L, G):
            return L, True
    except np.linalg.LinAlgError:
        pass
    raise CollinearNuisanceError(
        "nuisance block X_delta'X_delta is singular (collinear nuisance columns)"
    )


def response_products(ds: Dataset, y: np.ndarray) -> tuple[np.ndarray, np.ndarray, float]:
    """``(X_d'y, X_t'y, y'y)``; ``y`` may also be an (n, m) matrix of responses."""
    a = ds.x_delta.T @ y
    d = ds.x_theta.T @ y
    yy = y @ y if y.ndim == 1 else np.einsum("ij,ij->j", y, y)
    return a, d, yy


def build_gram(ds: Dataset) -> GramCache:
    """Precompute every cross-product needed by :func:`fit_all`.

    Raises
    ------
    CollinearNuisanceError
        If the nuisance Gram matrix cannot be factorised.
    """
    xd, xt = ds.x_delta, ds.x_theta
    G = xd.T @ xd
    chol, jittered = _cholesky(G)
    b = xd.T @ xt
    c = np.einsum("ij,ij->j", xt, xt)
    a, d, yy = response_products(ds, ds.y)
    if ds.k_delta:
        u = linalg.cho_solve((chol, True), b)
        denom = c - np.einsum("ij,ij->j", b, u)
    else:
        u = np.zeros((0, ds.k_theta))
        denom = c.copy()
    for arr in (G, chol, a, b, c, d, u, denom):
        arr.setflags(write=False)
    return GramCache(G, chol, a, b, c, d, float(yy), u, denom, jittered)


def fit_restricted(ds: Dataset, g: GramCache) -> RestrictedFit:
    """Least squares of ``y`` on the nuisance block alone (the null-imposed fit)."""
    if ds.k_delta == 0:
        return RestrictedFit(np.zeros(0), ds.y.copy(), np.zeros(ds.n))
    delta0 = g.solve_G(g.a)
    fitted = ds.x_delta @ delta0
    return RestrictedFit(delta0, ds.y - fitted, fitted)


def _solve_models(g: GramCache, a, d, yy, n: int):
    ok = g.denom > DEGENERACY_TOL * g.c
    safe = np.where(ok, g.denom, np.nan)
    theta = (d - g.u.T @ a) / safe
    delta = g.solve_G(a)[:, None] - g.u * theta[None, :]
    ssr = yy - a @ delta - d * theta
    ssr = np.maximum(ssr, 0.0)
    v2 = ssr / n
    s2 = n / safe * v2
    return theta, delta, np.sqrt(s2), v2, ok


def fit_all(ds: Dataset, g: GramCache, y_override: np.ndarray | None = None) -> FitSet:
    """Fit all parsimonious models from the cached cross-products.

    Parameters
    ----------
    y_override : array of shape (n,), optional
        Replacement response. Only ``a``, ``d`` and ``y'y`` are recomputed; the
        factorisation of ``G`` and the Schur complements are reused.
    """
    if y_override is None:
        a, d, yy = g.a, g.d, g.yy
    else:
        y = np.asarray(y_override, dtype=np.float64)
        if y.shape != (ds.n,):
            raise ValueError(f"y_override must have shape ({ds.n},)")
        a, d, yy = response_products(ds, y)
    theta, delta, s, v2, ok = _solve_models(g, a, d, yy, ds.n)
    return FitSet(
        theta_hat=theta,
        delta_hat=delta,
        s_hat=s,
        v_hat_sq=v2,
        denom=np.asarray(g.denom),
        degenerate=np.flatnonzero(~ok),
        n=ds.n,
    )


def theta_hat_batch(ds: Dataset, g: GramCache, Y: np.ndarray) -> np.ndarray:
    """Slopes of every parsimonious model for each column of ``Y`` (n x m).

    Returns a (k_theta, m) array. This is the bootstrap hot path: two matrix
    products against the data and one against the cached ``u``.
    """
    d = ds.x_theta.T @ Y
    if ds.k_delta:
        d = d - g.u.T @ (ds.x_delta.T @ Y)
    ok = g.denom > DEGENERACY_TOL * g.c
    return d / np.where(ok, g.denom, np.nan)[:, None]


def model_residuals(ds: Dataset, fs: FitSet) -> np.ndarray:
    """Materialise the n x k_theta matrix of per-model residuals."""
    v = ds.y[:, None] - ds.x_theta * fs.theta_hat[None, :]
    if ds.k_delta:
        v -= ds.x_delta @ fs.delta_hat
    return v


def residualized_tests(ds: Dataset, g: GramCache) -> np.ndarray:
    """``x_theta_i - X_d u_i`` for every i: test columns with the nuisance part projected out."""
    if ds.k_delta == 0:
        return np.array(ds.x_theta)
    return ds.x_theta - ds.x_delta @ g.u
