from __future__ import annotations

import math

import numpy as np
import pytest
import scipy.stats

from latticeclt.statistics import StatisticsError
from latticeclt.statistics import batch_standard_error
from latticeclt.statistics import cumulant
from latticeclt.statistics import ks_critical_value
from latticeclt.statistics import ks_statistic
from latticeclt.statistics import normal_cdf
from latticeclt.statistics import normal_pdf
from latticeclt.statistics import set_partitions
from latticeclt.statistics import summarize
from latticeclt.statistics import z_score


@pytest.mark.parametrize(
    ("r", "bell"),
    (
        pytest.param(1, 1, id="one"),
        pytest.param(2, 2, id="two"),
        pytest.param(3, 5, id="three"),
        pytest.param(4, 15, id="four"),
        pytest.param(5, 52, id="five"),
        pytest.param(8, 4140, id="eight"),
    ),
)
def test_set_partitions_bell_numbers(r: int, bell: int) -> None:
    partitions = set_partitions(r)

    assert len(partitions) == bell
    assert len(set(partitions)) == bell
    for partition in partitions:
        assert sorted(x for block in partition for x in block) == list(range(1, r + 1))


def test_set_partitions_of_three() -> None:
    assert set(set_partitions(3)) == {
        ((1, 2, 3),),
        ((1, 2), (3,)),
        ((1, 3), (2,)),
        ((1,), (2, 3)),
        ((1,), (2,), (3,)),
    }


@pytest.mark.parametrize("r", [0, 9])
def test_set_partitions_out_of_range(r: int) -> None:
    with pytest.raises(StatisticsError):
        set_partitions(r)


def test_cumulants_of_a_sign() -> None:
    samples = np.array([-1.0, 1.0] * 50)

    assert cumulant(samples, 2) == pytest.approx(1.0)
    assert cumulant(samples, 3) == pytest.approx(0.0, abs=1e-12)
    assert cumulant(samples, 4) == pytest.approx(-2.0)


def test_cumulant_two_is_variance() -> None:
    samples = np.random.default_rng(0).exponential(size=1000)

    assert cumulant(samples, 2) == pytest.approx(np.var(samples), rel=1e-12)


def test_cumulants_of_symmetric_samples() -> None:
    half = np.random.default_rng(1).normal(size=500)
    samples = np.concatenate([half, -half])

    assert abs(cumulant(samples, 3)) < 1e-12 * len(samples)
    assert abs(cumulant(samples, 5)) < 1e-12 * len(samples)


def test_cumulants_of_exponential_law() -> None:
    # the r-th cumulant of Exp(1) is (r - 1)!
    samples = np.random.default_rng(2).exponential(size=400_000)

    assert cumulant(samples, 3) == pytest.approx(2.0, rel=0.08)
    assert cumulant(samples, 4) == pytest.approx(6.0, rel=0.15)


def test_higher_cumulants_of_normal_draws_vanish() -> None:
    samples = np.random.default_rng(3).normal(size=100_000)
    summary = summarize(samples, 1.0)

    assert abs(summary.cum3) < 4 * summary.cum3_se
    assert abs(summary.cum4) < 4 * summary.cum4_se
    assert summary.variance == pytest.approx(1.0, abs=4 * summary.variance_se)


def test_cumulant_needs_samples() -> None:
    with pytest.raises(StatisticsError):
        cumulant(np.array([1.0, 2.0]), 3)
    with pytest.raises(StatisticsError):
        cumulant(np.array([1.0, 2.0]), 1)


def test_normal_cdf() -> None:
    assert normal_cdf(0.0) == 0.5
    assert normal_cdf(1.96) == pytest.approx(0.9750021048517795, abs=1e-12)
    assert normal_cdf(40.0) == 1.0
    assert normal_cdf(-40.0) == pytest.approx(0.0, abs=1e-300)
    assert normal_cdf(2.0, sigma2=4.0) == pytest.approx(normal_cdf(1.0))


def test_normal_cdf_matches_series() -> None:
    x = 1.96
    # erf(z) = 2/sqrt(pi) sum (-1)^n z^(2n+1) / (n! (2n+1))
    z = x / math.sqrt(2)
    series = math.fsum(
        (-1) ** n * z ** (2 * n + 1) / (math.factorial(n) * (2 * n + 1))
        for n in range(50)
    )
    assert normal_cdf(x) == pytest.approx(0.5 + series / math.sqrt(math.pi), abs=1e-9)


def test_normal_pdf() -> None:
    assert normal_pdf(0.0, 2.0) == pytest.approx(1 / math.sqrt(4 * math.pi))


@pytest.mark.parametrize("sigma2", [0.0, -1.0])
def test_normal_cdf_rejects_variance(sigma2: float) -> None:
    with pytest.raises(StatisticsError):
        normal_cdf(0.0, sigma2)


def test_ks_single_sample() -> None:
    assert ks_statistic(np.array([0.5]), scipy.stats.uniform.cdf) == pytest.approx(0.5)


def test_ks_exact_quantiles() -> None:
    n = 200
    samples = normal_quantiles(n)

    assert ks_statistic(samples, normal_cdf) == pytest.approx(0.5 / n)


def normal_quantiles(n: int) -> np.ndarray:
    return scipy.stats.norm.ppf((np.arange(1, n + 1) - 0.5) / n)


@pytest.mark.parametrize(
    ("forward", "inverse"),
    (
        pytest.param(np.exp, np.log, id="exp"),
        pytest.param(lambda x: x**3, np.cbrt, id="cube"),
        pytest.param(np.arctan, np.tan, id="arctan"),
    ),
)
def test_ks_invariant_under_increasing_maps(forward, inverse) -> None:
    samples = np.random.default_rng(4).normal(size=300)

    original = ks_statistic(samples, normal_cdf)
    mapped = ks_statistic(forward(samples), lambda y: normal_cdf(inverse(y)))

    assert mapped == pytest.approx(original, abs=1e-12)


def test_ks_calibration() -> None:
    n = 10_000
    samples = np.random.default_rng(5).normal(size=n)

    assert ks_critical_value(n) == pytest.approx(1.6276 / math.sqrt(n), rel=1e-3)
    assert ks_statistic(samples, normal_cdf) < ks_critical_value(n, alpha=1e-4)


def test_ks_needs_samples() -> None:
    with pytest.raises(StatisticsError):
        ks_statistic(np.array([]), normal_cdf)


def test_batch_standard_error_of_mean() -> None:
    samples = np.random.default_rng(6).normal(size=20_000)

    assert batch_standard_error(samples) == pytest.approx(
        1 / math.sqrt(len(samples)),
        rel=0.5,
    )
    assert math.isnan(batch_standard_error(np.array([1.0])))


def test_standard_error_scales_with_sample_size() -> None:
    rng = np.random.default_rng(7)
    small = summarize(rng.normal(size=20_000), 1.0)
    large = summarize(rng.normal(size=80_000), 1.0)

    assert small.mean_se / large.mean_se == pytest.approx(2.0, rel=0.5)


def test_summarize() -> None:
    samples = np.random.default_rng(8).normal(scale=math.sqrt(2), size=5000)

    summary = summarize(samples, 2.0)

    assert summary.n == 5000
    assert summary.nonfinite == 0
    assert summary.variance_ratio == pytest.approx(1.0, rel=0.1)
    assert 0 <= summary.ks_distance < ks_critical_value(5000, alpha=1e-4)
    assert summary.ks_pvalue > 1e-4
    assert summary.variance_defined


def test_summarize_single_sample() -> None:
    summary = summarize(np.array([0.3, math.nan]), 1.0)

    assert summary.n == 1
    assert summary.nonfinite == 1
    assert not summary.variance_defined
    assert math.isnan(summary.variance)
    assert math.isnan(summary.cum4)
    expected = max(normal_cdf(0.3), 1 - normal_cdf(0.3))
    assert summary.ks_distance == pytest.approx(expected)


def test_summarize_empty() -> None:
    with pytest.raises(StatisticsError):
        summarize(np.array([math.nan]), 1.0)


def test_z_score() -> None:
    assert z_score(2.0, 4.0) == 0.5
    assert z_score(0.0, 0.0) == 0.0
    assert z_score(-1.0, 0.0) == -math.inf
    assert math.isnan(z_score(1.0, math.nan))


def test_summarize_constant_samples() -> None:
    summary = summarize(np.full(100, 0.25), 1.0)

    assert summary.variance == pytest.approx(0.0, abs=1e-30)
    assert summary.cum3_z == 0.0
