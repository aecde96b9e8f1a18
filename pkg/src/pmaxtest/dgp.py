"""Simulation designs: truncated-normal covariates, alternatives, growth rules.

Also hosts the population pseudo-true oracle: for zero-mean covariates with
covariance ``sigma_x`` the parsimonious model ``i`` has slope vector
``H_(i)^{-1} E[x_(i) y]``, which is pure covariance algebra.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import linalg, stats

from .dataset import Dataset


class GenerationError(RuntimeError):
    pass


class Dependence(str, enum.Enum):
    INDEPENDENT = "independent"
    BLOCK = "block"
    CROSS_BLOCK = "cross_block"

    @classmethod
    def coerce(cls, value) -> Dependence:
        if isinstance(value, cls):
            return value
        key = str(value).lower().replace("-", "_")
        aliases = {"blockdependent": "block", "crossblockdependent": "cross_block", "crossblock": "cross_block"}
        return cls(aliases.get(key.replace("_", ""), key))


class GrowthRule(str, enum.Enum):
    K1 = "k1"
    K2 = "k2"


def _round_half_away(x: float) -> int:
    return int(math.copysign(math.floor(abs(x) + 0.5), x))


def k_growth(n: int, rule: GrowthRule | str) -> int:
    """Number of test covariates allowed at sample size ``n``.

    ``k1(n) = [exp(3.2 n^(1/7 - 1e-10))]`` suits bounded covariates and
    ``k2(n) = [0.02 n^2]`` any covariate case with enough moments.
    """
    if n < 2:
        raise ValueError("n must be >= 2")
    rule = GrowthRule(str(rule.value if isinstance(rule, GrowthRule) else rule).lower())
    if rule is GrowthRule.K1:
        return _round_half_away(math.exp(3.2 * n ** (1.0 / 7.0 - 1e-10)))
    return _round_half_away(0.02 * n * n)


def truncated_normal_variance(bound: float) -> float:
    if math.isinf(bound):
        return 1.0
    return 1.0 - 2.0 * bound * stats.norm.pdf(bound) / (2.0 * stats.norm.cdf(bound) - 1.0)


def sample_truncated_normal(size, bound: float, rng: np.random.Generator) -> np.ndarray:
    """Standard normal draws conditioned on ``[-bound, bound]`` by rejection."""
    if not bound > 0:
        raise ValueError("bound must be positive")
    out = rng.standard_normal(size)
    if math.isinf(bound):
        return out
    flat = out.reshape(-1)
    bad = np.flatnonzero(np.abs(flat) > bound)
    while bad.size:
        flat[bad] = rng.standard_normal(bad.size)
        bad = bad[np.abs(flat[bad]) > bound]
    return out


def mixing_matrix(k: int, rng: np.random.Generator) -> np.ndarray:
    """Square matrix with iid U[-1, 1] entries, diagonal-repaired until full rank."""
    A = rng.uniform(-1.0, 1.0, size=(k, k))
    for _ in range(2):
        if _full_rank(A):
            return A
        A = A + np.diag(rng.uniform(0.0, 1.0, size=k))
    if _full_rank(A):
        return A
    raise GenerationError(f"could not draw a full-rank {k}x{k} mixing matrix")


def _full_rank(A: np.ndarray) -> bool:
    # pivoted LU is far cheaper than an SVD for large k
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", linalg.LinAlgWarning)
        lu, _ = linalg.lu_factor(A, check_finite=False)
    piv = np.abs(np.diag(lu))
    return bool(piv.min() > A.shape[0] * np.finfo(float).eps * piv.max())


@dataclass(frozen=True)
class CovariateSpec:
    k_delta: int
    k_theta: int
    bound: float = math.inf
    dependence: Dependence = Dependence.CROSS_BLOCK
    seed: int = 0

    def __post_init__(self):
        if not self.bound > 0:
            raise ValueError("bound must be positive")
        if self.k_delta < 0 or self.k_theta < 1:
            raise ValueError("need k_delta >= 0 and k_theta >= 1")
        object.__setattr__(self, "bound", float(self.bound))
        object.__setattr__(self, "dependence", Dependence.coerce(self.dependence))

    @property
    def k(self) -> int:
        return self.k_delta + self.k_theta


ALT_KINDS = ("null", "alt1", "alt2", "alt3", "custom", "local_drift")


@dataclass(frozen=True, eq=False)
class AlternativeSpec:
    """Coefficient vector ``theta0`` of the simulated model.

    ``alt1``: theta0[0] = .0015; ``alt2``: theta0[i] = .0002 (i+1) / k_theta;
    ``alt3``: theta0[i] = .00015 for the first ten entries; ``custom`` takes
    ``theta`` verbatim; ``local_drift`` sets ``drift * sqrt(ln(k_theta) * M / n)``
    where ``M`` is the fourth-moment envelope (estimated when ``envelope`` is None).
    """

    kind: str = "null"
    theta: np.ndarray | None = None
    drift: float | np.ndarray | None = None
    envelope: float | None = None

    def __post_init__(self):
        kind = str(self.kind).lower().replace("-", "_")
        kind = {"alt(i)": "alt1", "alt(ii)": "alt2", "alt(iii)": "alt3", "localdrift": "local_drift"}.get(kind, kind)
        if kind not in ALT_KINDS:
            raise ValueError(f"unknown alternative {self.kind!r}")
        if kind == "custom" and self.theta is None:
            raise ValueError("custom alternative needs theta")
        if kind == "local_drift" and self.drift is None:
            raise ValueError("local_drift alternative needs drift")
        object.__setattr__(self, "kind", kind)

    @property
    def label(self) -> str:
        if self.kind == "local_drift":
            c = np.atleast_1d(self.drift)
            return f"local_drift(c={c[0]:g})" if c.size == 1 else "local_drift"
        return self.kind

    def theta0(self, k_theta: int, n: int | None = None) -> np.ndarray:
        th = np.zeros(k_theta)
        if self.kind == "alt1":
            th[0] = 0.0015
        elif self.kind == "alt2":
            th = 0.0002 * np.arange(1, k_theta + 1) / k_theta
        elif self.kind == "alt3":
            th[:10] = 0.00015
        elif self.kind == "custom":
            th = np.asarray(self.theta, dtype=float).reshape(-1)
            if th.shape[0] != k_theta:
                raise ValueError(f"custom theta has length {th.shape[0]}, expected {k_theta}")
        elif self.kind == "local_drift":
            if self.envelope is None or n is None:
                raise ValueError("local_drift needs an envelope and n; use resolve()")
            c = np.broadcast_to(np.asarray(self.drift, dtype=float), (k_theta,))
            th = c * math.sqrt(math.log(k_theta) * self.envelope / n)
        return th

    def resolve(self, cov: CovariateSpec, seed: int | None = None, n_pilot: int = 10_000) -> AlternativeSpec:
        """Fix the moment envelope of a local-drift alternative by a pilot draw."""
        if self.kind != "local_drift" or self.envelope is not None:
            return self
        pilot = replace(cov, seed=cov.seed if seed is None else seed)
        return replace(self, envelope=moment_envelope(pilot, n_pilot))


@dataclass(frozen=True, eq=False)
class PopulationSpec:
    sigma_x: np.ndarray
    delta0: np.ndarray
    theta0: np.ndarray
    sigma_eps2: float = 1.0

    @property
    def beta0(self) -> np.ndarray:
        return np.concatenate([self.delta0, self.theta0])

    @property
    def k_delta(self) -> int:
        return len(self.delta0)


@dataclass(frozen=True, eq=False)
class Draw:
    """A generated dataset together with the population it came from."""

    dataset: Dataset
    population: PopulationSpec
    mixing: list[np.ndarray] = field(default_factory=list)


def _covariates(cov: CovariateSpec, n: int, rng: np.random.Generator, mixing=None):
    kd, kt, U = cov.k_delta, cov.k_theta, cov.bound
    s2 = truncated_normal_variance(U)
    if cov.dependence is Dependence.INDEPENDENT:
        X = sample_truncated_normal((n, cov.k), U, rng)
        return X, s2 * np.eye(cov.k), []
    if cov.dependence is Dependence.CROSS_BLOCK:
        blocks = [cov.k]
    else:
        blocks = [b for b in (kd, kt) if b > 0]
    mats = mixing or [mixing_matrix(b, rng) for b in blocks]
    parts, sig = [], np.zeros((cov.k, cov.k))
    off = 0
    for b, A in zip(blocks, mats):
        W = sample_truncated_normal((n, b), U, rng)
        V = sample_truncated_normal((n, b), U, rng)
        parts.append(W @ A.T + V)
        sig[off:off + b, off:off + b] = s2 * (A @ A.T + np.eye(b))
        off += b
    return np.hstack(parts), sig, mats


def generate(cov: CovariateSpec, alt: AlternativeSpec, n: int, rng: np.random.Generator | None = None) -> Draw:
    """Draw one sample ``y = x_delta'1 + x_theta'theta0 + eps`` with eps ~ N(0, 1).

    Dependence types: ``independent`` (iid truncated normals), ``block``
    (``x = A w + v`` separately within the nuisance and test blocks) and
    ``cross_block`` (one ``A`` over all k covariates). A fresh ``A`` is drawn
    per call.
    """
    rng = np.random.default_rng(cov.seed) if rng is None else rng
    alt = alt.resolve(cov)
    X, sigma, mats = _covariates(cov, n, rng)
    kd = cov.k_delta
    delta0 = np.ones(kd)
    theta0 = alt.theta0(cov.k_theta, n)
    eps = rng.standard_normal(n)
    xd, xt = X[:, :kd], X[:, kd:]
    y = xd @ delta0 + xt @ theta0 + eps
    ds = Dataset(y, xd, xt)
    return Draw(ds, PopulationSpec(sigma, delta0, theta0, 1.0), mats)


def moment_envelope(cov: CovariateSpec, n_pilot: int = 10_000, chunk: int = 1000) -> float:
    """Sample mean of ``max_i |x_(i),t|^4`` with ``|.|`` the l1 norm of ``[x_delta, x_theta_i]``."""
    rng = np.random.default_rng(cov.seed)
    kd = cov.k_delta
    mixing = None
    total = 0.0
    done = 0
    while done < n_pilot:
        m = min(chunk, n_pilot - done)
        X, _, mixing = _covariates(cov, m, rng, mixing)
        l1 = np.abs(X[:, :kd]).sum(axis=1) + np.abs(X[:, kd:]).max(axis=1)
        total += float(np.sum(l1 ** 4))
        done += m
    return total / n_pilot


def pseudo_true_all(ps: PopulationSpec) -> tuple[np.ndarray, np.ndarray]:
    """Population slopes of every parsimonious model: ``(delta_star (kd x kt), theta_star (kt,))``."""
    S = np.asarray(ps.sigma_x)
    kd = ps.k_delta
    kt = S.shape[0] - kd
    cross = S @ ps.beta0
    Sdd, Sdt = S[:kd, :kd], S[:kd, kd:]
    c = np.diag(S)[kd:]
    if kd:
        try:
            chol = linalg.cho_factor(Sdd, lower=True)
        except linalg.LinAlgError:
            raise np.linalg.LinAlgError("nuisance covariance is singular") from None
        u = linalg.cho_solve(chol, Sdt)
        d0 = linalg.cho_solve(chol, cross[:kd])
        schur = c - np.einsum("ij,ij->j", Sdt, u)
        theta = (cross[kd:] - u.T @ cross[:kd]) / schur
        delta = d0[:, None] - u * theta[None, :]
    else:
        schur = c
        theta = cross / c
        delta = np.zeros((0, kt))
    if np.any(schur <= 1e-14 * c):
        raise np.linalg.LinAlgError("singular parsimonious Hessian")
    return delta, theta


def pseudo_true(ps: PopulationSpec, i: int) -> tuple[np.ndarray, float]:
    """Pseudo-true ``(delta_star, theta_star)`` of parsimonious model ``i`` (0-based).

    Solves ``H_(i) beta = E[x_(i) y]`` directly with the (k_delta+1)-square
    population Hessian.
    """
    S = np.asarray(ps.sigma_x)
    kd = ps.k_delta
    kt = S.shape[0] - kd
    if not 0 <= i < kt:
        raise IndexError(f"model index {i} outside [0, {kt})")
    idx = np.r_[np.arange(kd), kd + i]
    H = S[np.ix_(idx, idx)]
    rhs = S[idx] @ ps.beta0
    try:
        beta = linalg.solve(H, rhs, assume_a="pos")
    except (linalg.LinAlgError, ValueError):
        raise np.linalg.LinAlgError(f"singular Hessian for model {i}") from None
    return beta[:kd], float(beta[kd])
