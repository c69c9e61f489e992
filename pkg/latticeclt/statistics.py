"""Estimators for Monte Carlo samples of normalised discrepancies."""
from __future__ import annotations

import dataclasses
import functools
import math
from typing import Callable

import numpy as np
import scipy.stats


class StatisticsError(ValueError):
    ...


MAX_PARTITION_SIZE = 8
DEFAULT_BATCHES = 20

Partition = tuple[tuple[int, ...], ...]


@functools.lru_cache(maxsize=None)
def set_partitions(r: int) -> tuple[Partition, ...]:
    """Return every partition of {1, ..., r} into nonempty blocks."""
    if not 1 <= r <= MAX_PARTITION_SIZE:
        raise StatisticsError(
            f"partitions are available for 1 <= r <= {MAX_PARTITION_SIZE}, got {r}",
        )
    if r == 1:
        return (((1,),),)

    partitions = []
    for smaller in set_partitions(r - 1):
        for index in range(len(smaller)):
            blocks = list(smaller)
            blocks[index] = blocks[index] + (r,)
            partitions.append(tuple(blocks))
        partitions.append(smaller + ((r,),))
    return tuple(partitions)


def _central_moments(values: np.ndarray, order: int) -> list[float]:
    centered = values - values.mean()
    return [0.0] + [float(np.mean(centered**j)) for j in range(1, order + 1)]


def cumulant(samples: np.ndarray, r: int) -> float:
    """Return the r-th sample cumulant.

    Central moments are combined over the set partitions of {1, ..., r}
    with the Moebius coefficients (-1)^(|P|-1) (|P|-1)!, so the second
    cumulant is the variance and every higher cumulant of a normal law
    vanishes.
    """
    values = np.asarray(samples, dtype=float)
    if r < 2:
        raise StatisticsError(f"cumulants are computed for r >= 2, got {r}")
    if len(values) < r:
        raise StatisticsError(f"need at least {r} samples, got {len(values)}")

    moments = _central_moments(values, r)
    terms = []
    for partition in set_partitions(r):
        blocks = len(partition)
        product = math.prod(moments[len(block)] for block in partition)
        if product:
            terms.append((-1) ** (blocks - 1) * math.factorial(blocks - 1) * product)
    return math.fsum(terms)


def _check_sigma2(sigma2: float) -> float:
    if not sigma2 > 0:
        raise StatisticsError(f"variance must be positive, got {sigma2!r}")
    return math.sqrt(sigma2)


def normal_cdf(x: float | np.ndarray, sigma2: float = 1.0) -> float | np.ndarray:
    return scipy.stats.norm.cdf(x, scale=_check_sigma2(sigma2))


def normal_pdf(x: float | np.ndarray, sigma2: float = 1.0) -> float | np.ndarray:
    return scipy.stats.norm.pdf(x, scale=_check_sigma2(sigma2))


def _kstest(
    samples: np.ndarray,
    cdf: Callable[[np.ndarray], np.ndarray],
) -> tuple[float, float]:
    values = np.asarray(samples, dtype=float)
    if not len(values):
        raise StatisticsError("the Kolmogorov-Smirnov distance needs samples")
    result = scipy.stats.kstest(values, cdf)
    return float(result.statistic), float(result.pvalue)


def ks_statistic(
    samples: np.ndarray,
    cdf: Callable[[np.ndarray], np.ndarray],
) -> float:
    """Return the sup distance between the empirical CDF and ``cdf``."""
    statistic, _ = _kstest(samples, cdf)
    return statistic


def ks_critical_value(n: int, alpha: float = 0.01) -> float:
    """Asymptotic Kolmogorov quantile at level ``alpha`` scaled by 1/sqrt(n)."""
    if n < 1 or not 0 < alpha < 1:
        raise StatisticsError(f"need n >= 1 and 0 < alpha < 1, got {n}, {alpha!r}")
    return float(scipy.stats.kstwobign.ppf(1 - alpha)) / math.sqrt(n)


def batch_standard_error(
    values: np.ndarray,
    statistic: Callable[[np.ndarray], float] = np.mean,
    batches: int = DEFAULT_BATCHES,
) -> float:
    """Standard error of ``statistic`` from its spread over contiguous batches.

    Returns nan when there are fewer than two batches' worth of values.
    """
    values = np.asarray(values, dtype=float)
    batches = min(batches, len(values))
    if batches < 2:
        return math.nan
    estimates = np.array(
        [statistic(batch) for batch in np.array_split(values, batches)],
    )
    # a batch of size b estimates with variance ~ sigma^2 / b, the full
    # sample with sigma^2 / n = sigma^2 / (b * batches)
    return float(estimates.std(ddof=1) / math.sqrt(batches))


def z_score(value: float, standard_error: float) -> float:
    """Return value / standard_error, with 0 / 0 read as no deviation."""
    if standard_error == 0:
        return 0.0 if value == 0 else math.copysign(math.inf, value)
    return value / standard_error


def _batch_cumulant_error(values: np.ndarray, r: int) -> float:
    if len(values) < r * DEFAULT_BATCHES:
        return math.nan
    return batch_standard_error(values, functools.partial(cumulant, r=r))


@dataclasses.dataclass(frozen=True)
class SampleSummary:
    n: int
    nonfinite: int
    mean: float
    variance: float
    cum3: float
    cum4: float
    mean_se: float
    variance_se: float
    cum3_se: float
    cum4_se: float
    ks_distance: float
    ks_pvalue: float
    target_sigma2: float

    @property
    def variance_defined(self) -> bool:
        return self.n >= 2

    @property
    def variance_ratio(self) -> float:
        return self.variance / self.target_sigma2

    @property
    def cum3_z(self) -> float:
        return z_score(self.cum3, self.cum3_se)

    @property
    def cum4_z(self) -> float:
        return z_score(self.cum4, self.cum4_se)


def summarize(samples: np.ndarray, target_sigma2: float) -> SampleSummary:
    """Summarise the finite samples against the normal law N(0, target)."""
    values = np.asarray(samples, dtype=float)
    finite = values[np.isfinite(values)]
    if not len(finite):
        raise StatisticsError("cannot summarise an empty sample")
    _check_sigma2(target_sigma2)

    n = len(finite)
    ks_distance, ks_pvalue = _kstest(
        finite,
        functools.partial(normal_cdf, sigma2=target_sigma2),
    )
    return SampleSummary(
        n=n,
        nonfinite=len(values) - n,
        mean=float(finite.mean()),
        variance=cumulant(finite, 2) if n >= 2 else math.nan,
        cum3=cumulant(finite, 3) if n >= 3 else math.nan,
        cum4=cumulant(finite, 4) if n >= 4 else math.nan,
        mean_se=batch_standard_error(finite),
        variance_se=_batch_cumulant_error(finite, 2),
        cum3_se=_batch_cumulant_error(finite, 3),
        cum4_se=_batch_cumulant_error(finite, 4),
        ks_distance=ks_distance,
        ks_pvalue=ks_pvalue,
        target_sigma2=target_sigma2,
    )
