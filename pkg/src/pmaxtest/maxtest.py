"""Weighted max statistic over parsimonious slope estimates."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .pols import DegenerateModelError, FitSet


class WeightMode(str, enum.Enum):
    """Per-model weights ``W_{n,i}``.

    ``FLAT`` uses 1 for every model (the max-test). ``INVSE`` uses the inverted
    standard error ``1 / s_hat[i]`` (the max-t-test). Both converge to
    non-random limits, which is all the asymptotic theory asks of a weight.
    """

    FLAT = "flat"
    INVSE = "invse"

    @classmethod
    def coerce(cls, value) -> WeightMode:
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValueError(f"unknown weight mode {value!r}; expected 'flat' or 'invse'") from None


@dataclass(frozen=True, eq=False)
class MaxStat:
    """``t_n = max_i |sqrt(n) * weights[i] * theta_hat[i]|`` and its witnesses.

    ``argmax`` is a 0-based test-column index; exact ties go to the smallest.
    """

    t_n: float
    argmax: int
    per_model: np.ndarray
    weights: np.ndarray
    mode: WeightMode


def model_weights(fs: FitSet, mode: WeightMode | str, names=None) -> np.ndarray:
    mode = WeightMode.coerce(mode)
    k = fs.theta_hat.shape[0]
    if mode is WeightMode.FLAT:
        w = np.ones(k)
        w[fs.degenerate] = 0.0
        return w
    if len(fs.degenerate):
        raise DegenerateModelError(fs.degenerate, names)
    if np.any(fs.s_hat <= 0):
        raise DegenerateModelError(np.flatnonzero(fs.s_hat <= 0), names)
    return 1.0 / fs.s_hat


def max_statistic(fs: FitSet, mode: WeightMode | str, n: int | None = None, names=None) -> MaxStat:
    """Form the weighted max statistic.

    Under ``FLAT`` degenerate models get weight 0 and so never win the max;
    under ``INVSE`` any degenerate model raises :class:`DegenerateModelError`.
    """
    mode = WeightMode.coerce(mode)
    n = fs.n if n is None else n
    w = model_weights(fs, mode, names)
    theta = np.where(w > 0, fs.theta_hat, 0.0)
    per_model = np.abs(np.sqrt(n) * w * theta)
    i = int(np.argmax(per_model))
    return MaxStat(float(per_model[i]), i, per_model, w, mode)
