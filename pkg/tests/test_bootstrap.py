import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_dataset
from pmaxtest import (
    BootstrapSpec,
    Dataset,
    bootstrap_pvalue,
    bootstrap_pvalue_multiplier,
    build_gram,
    fit_all,
    fit_restricted,
    max_statistic,
    max_test,
)
from pmaxtest.bootstrap import BootMode, bootstrap_pvalue_count, multiplier_block, multipliers
from pmaxtest.maxtest import MaxStat


def _pieces(ds, mode="invse"):
    g = build_gram(ds)
    fs = fit_all(ds, g)
    return g, fs, max_statistic(fs, mode, ds.n)


def test_spanned_response_gives_zero_boot_stats(rng):
    xd = rng.standard_normal((40, 2))
    ds = Dataset(xd @ np.array([1.0, 2.0]), xd, rng.standard_normal((40, 5)))
    g, fs, st_ = _pieces(ds, "flat")
    rf = fit_restricted(ds, g)
    out = bootstrap_pvalue(ds, g, rf, fs, st_, BootstrapSpec(50, 1))
    assert np.max(np.abs(out.boot_stats)) < 1e-10 * np.linalg.norm(ds.y)
    # any positive observed statistic beats every replicate
    positive = MaxStat(1.0, 0, np.ones(5), st_.weights, st_.mode)
    assert bootstrap_pvalue(ds, g, rf, fs, positive, BootstrapSpec(50, 1)).p_value == 0.0


def test_counting():
    assert bootstrap_pvalue_count(np.array([1.0, 2.0, 3.0, 4.0]), 2.5) == 0.5


def test_ties_do_not_count():
    assert bootstrap_pvalue_count(np.full(10, 1.7), 1.7) == 0.0


@pytest.mark.parametrize("kd", [0, 2])
def test_zero_multipliers_give_zero(rng, kd):
    ds = random_dataset(rng, 30, kd, 4)
    g, fs, st_ = _pieces(ds)
    eta = np.zeros((3, 30))
    out = bootstrap_pvalue(ds, g, fit_restricted(ds, g), fs, st_, BootstrapSpec(3, 0), eta=eta)
    # exact without nuisance; with it y* = fitted0 leaves rounding-level slopes
    np.testing.assert_allclose(out.boot_stats, 0.0, atol=1e-12 if kd else 0.0)
    out = bootstrap_pvalue_multiplier(ds, g, fs, st_, BootstrapSpec(3, 0, "multiplier"), eta=eta)
    np.testing.assert_array_equal(out.boot_stats, 0.0)


def _dense_multiplier_stat(ds, eta, weights):
    n = ds.n
    vals = []
    for i in range(ds.k_theta):
        X = np.column_stack([ds.x_delta, ds.x_theta[:, i]])
        H = X.T @ X / n
        beta = np.linalg.solve(X.T @ X, X.T @ ds.y)
        v = ds.y - X @ beta
        score = -(X * (eta * v)[:, None]).sum(axis=0) / n
        step = np.linalg.inv(H) @ score
        vals.append(abs(np.sqrt(n) * weights[i] * step[-1]))
    return max(vals)


@pytest.mark.parametrize("mode", ["flat", "invse"])
def test_multiplier_dense_oracle(rng, mode):
    ds = random_dataset(rng, 30, 1, 3)
    g, fs, st_ = _pieces(ds, mode)
    eta = rng.standard_normal((1, 30))
    out = bootstrap_pvalue_multiplier(ds, g, fs, st_, BootstrapSpec(1, 0, "multiplier"), eta=eta)
    want = _dense_multiplier_stat(ds, eta[0], st_.weights)
    assert out.boot_stats[0] == pytest.approx(want, rel=1e-9)


def test_wild_dense_oracle(rng):
    ds = random_dataset(rng, 30, 2, 4)
    g, fs, st_ = _pieces(ds)
    eta = rng.standard_normal((2, 30))
    out = bootstrap_pvalue(ds, g, fit_restricted(ds, g), fs, st_, BootstrapSpec(2, 0), eta=eta)
    d0 = np.linalg.lstsq(ds.x_delta, ds.y, rcond=None)[0]
    for j in range(2):
        ystar = ds.x_delta @ d0 + (ds.y - ds.x_delta @ d0) * eta[j]
        th = [np.linalg.lstsq(np.column_stack([ds.x_delta, ds.x_theta[:, i]]), ystar, rcond=None)[0][-1]
              for i in range(4)]
        want = np.max(np.abs(np.sqrt(30) * st_.weights * np.array(th)))
        assert out.boot_stats[j] == pytest.approx(want, rel=1e-9)


def test_stream_depends_only_on_seed_and_index():
    block = multiplier_block(7, 0, 100, 25)
    np.testing.assert_array_equal(block[42], multipliers(7, 42, 25))
    np.testing.assert_array_equal(multiplier_block(7, 40, 45, 25), block[40:45])
    assert not np.array_equal(multipliers(7, 1, 25), multipliers(7, 2, 25))
    assert not np.array_equal(multipliers(7, 1, 25), multipliers(8, 1, 25))


@pytest.mark.parametrize("mode", ["wild", "multiplier"])
def test_thread_count_does_not_change_results(rng, mode):
    ds = random_dataset(rng, 80, 2, 30)
    spec = BootstrapSpec(300, 99, mode)
    ref = max_test(ds, "invse", spec, threads=1)
    for threads in (2, 4, 8):
        out = max_test(ds, "invse", spec, threads=threads)
        np.testing.assert_array_equal(out.boot_stats, ref.boot_stats)
        assert out.p_value == ref.p_value
        assert out.stat.t_n == ref.stat.t_n


def test_replicate_count_prefix_stable(rng):
    # extending R keeps earlier replicates unchanged
    ds = random_dataset(rng, 50, 0, 10)
    a = max_test(ds, "flat", BootstrapSpec(100, 5)).boot_stats
    b = max_test(ds, "flat", BootstrapSpec(200, 5)).boot_stats
    np.testing.assert_array_equal(a, b[:100])


def test_mode_mismatch_rejected(rng):
    ds = random_dataset(rng, 30, 1, 3)
    g, fs, st_ = _pieces(ds)
    with pytest.raises(ValueError):
        bootstrap_pvalue(ds, g, fit_restricted(ds, g), fs, st_, BootstrapSpec(5, 0, "multiplier"))


@pytest.mark.parametrize("seed", [-1, 2**64])
def test_seed_range(seed):
    with pytest.raises(ValueError):
        BootstrapSpec(10, seed)


def test_mode_aliases():
    assert BootMode.coerce("score-multiplier") is BootMode.MULTIPLIER
    assert BootstrapSpec(mode="parametric_wild").mode is BootMode.WILD
    assert BootstrapSpec().weight_reuse


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), R=st.integers(1, 150))
def test_pvalue_in_unit_interval_and_on_grid(seed, R):
    ds = random_dataset(np.random.default_rng(seed), 25, 1, 5)
    out = max_test(ds, "invse", BootstrapSpec(R, seed))
    assert 0.0 <= out.p_value <= 1.0
    assert out.p_value * R == pytest.approx(round(out.p_value * R))
    assert out.boot_stats.shape == (R,)


def test_strong_signal_rejects(rng):
    hits = 0
    for s in range(20):
        r = np.random.default_rng(s)
        xt = r.standard_normal((250, 30))
        y = 0.5 * xt[:, 0] + r.standard_normal(250)
        hits += max_test(Dataset(y, None, xt), "invse", BootstrapSpec(200, s)).p_value < 0.01
    assert hits == 20
