"""Monte Carlo checks over random unimodular lattices.

Every run is addressed by sample index: sample i draws its lattice from
``numpy.random.default_rng([seed, i])``, so results do not depend on how
the indices are spread over worker processes.
"""
from __future__ import annotations

import dataclasses
import logging
import math
import multiprocessing
from typing import Callable
from typing import Sequence
from typing import TypeVar

import numpy as np
import scipy.special

from latticeclt.counting import TestFunctionSpec
from latticeclt.counting import ball_volume
from latticeclt.counting import discrepancy
from latticeclt.counting import siegel_transform
from latticeclt.geometry import DomainError
from latticeclt.geometry import DomainSpec
from latticeclt.geometry import UnsupportedDimensionError
from latticeclt.geometry import VarianceResult
from latticeclt.geometry import variance_series
from latticeclt.lattice import LatticeBasis
from latticeclt.lattice import LatticeError
from latticeclt.lattice import ModularDomainSampler
from latticeclt.lattice import alpha_exact_d2
from latticeclt.lattice import alpha_proxy
from latticeclt.lattice import exact_sample_d2
from latticeclt.lattice import hecke_sample
from latticeclt.lattice import is_prime
from latticeclt.lattice import shortest_vector_length
from latticeclt.statistics import SampleSummary
from latticeclt.statistics import summarize
from latticeclt.statistics import z_score


DEFAULT_PRIME = 10007
THEOREM_DIMENSION = 9
MODULAR_ACCEPTANCE = math.pi * math.sqrt(3) / 6

SIEGEL_Z_TOLERANCE = 3.0
ROGERS_TOLERANCE = 0.1
CLT_VARIANCE_TOLERANCE = 0.15
CLT_CUMULANT_Z = 4.0
CLT_KS_TOLERANCE = 0.05
ALPHA_TOLERANCE = 0.1
CALIBRATION_Z_TOLERANCE = 4.0

_T = TypeVar("_T")


@dataclasses.dataclass(frozen=True)
class SamplerConfig:
    """Where random lattices come from.

    ``hecke`` draws rotated index-``prime`` sublattices of Z^dim, ``exact``
    draws planar lattices from the modular fundamental domain through one
    sampler kept for the life of the config.
    """

    kind: str = "hecke"
    dim: int = 3
    prime: int = DEFAULT_PRIME
    seed: int = 0
    modular: ModularDomainSampler = dataclasses.field(
        init=False,
        repr=False,
        compare=False,
    )

    def __post_init__(self) -> None:
        if self.kind not in ("hecke", "exact"):
            raise LatticeError(f"unknown sampler {self.kind!r}, use hecke or exact")
        if self.kind == "exact" and self.dim != 2:
            raise LatticeError(f"the exact sampler is planar, got d={self.dim}")
        if self.kind == "hecke":
            if self.dim < 2:
                raise LatticeError(f"Hecke sampling needs d >= 2, got {self.dim}")
            if not is_prime(self.prime):
                raise LatticeError(f"{self.prime} is not prime")
        if self.seed < 0:
            raise LatticeError(f"seed must be nonnegative, got {self.seed}")
        object.__setattr__(self, "modular", ModularDomainSampler())

    def generator(self, index: int) -> np.random.Generator:
        return np.random.default_rng([self.seed, index])

    def draw(self, index: int) -> LatticeBasis:
        rng = self.generator(index)
        if self.kind == "hecke":
            return hecke_sample(self.dim, self.prime, rng, rotate=True)
        return exact_sample_d2(rng, self.modular)


def map_samples(
    function: Callable[[int], _T],
    n: int,
    workers: int = 1,
) -> list[_T]:
    """Apply ``function`` to 0, ..., n - 1 and return the results in order.

    With more than one worker ``function`` must be picklable.
    """
    if workers <= 1 or n <= 1:
        return [function(index) for index in range(n)]
    with multiprocessing.Pool(min(workers, n)) as pool:
        return pool.map(function, range(n))


def _standard_error(values: np.ndarray) -> float:
    if len(values) < 2:
        return math.nan
    return float(np.std(values, ddof=1) / math.sqrt(len(values)))


@dataclasses.dataclass(frozen=True)
class SiegelWork:
    sampler: SamplerConfig
    function: TestFunctionSpec

    def __call__(self, index: int) -> float:
        return siegel_transform(self.function, self.sampler.draw(index))


def siegel_values(
    f: TestFunctionSpec,
    sampler: SamplerConfig,
    n: int,
    workers: int = 1,
) -> np.ndarray:
    return np.array(map_samples(SiegelWork(sampler, f), n, workers))


@dataclasses.dataclass(frozen=True)
class SiegelReport:
    n: int
    mean: float
    standard_error: float
    integral: float

    @property
    def gap(self) -> float:
        return self.mean - self.integral

    @property
    def z_score(self) -> float:
        return z_score(self.gap, self.standard_error)

    def passed(self, tolerance: float = SIEGEL_Z_TOLERANCE) -> bool:
        return abs(self.z_score) < tolerance


def siegel_mvt_check(
    f: TestFunctionSpec,
    sampler: SamplerConfig,
    n: int,
    *,
    workers: int = 1,
    logger: logging.Logger,
) -> SiegelReport:
    """Compare the mean of the Siegel transform with the integral of f."""
    values = siegel_values(f, sampler, n, workers)
    report = SiegelReport(
        n=n,
        mean=float(values.mean()),
        standard_error=_standard_error(values),
        integral=f.integral(sampler.dim),
    )
    logger.info(
        "Siegel mean %r against integral %r (z = %.3f)",
        report.mean,
        report.integral,
        report.z_score,
    )
    return report


def _check_rogers_dimension(dim: int) -> None:
    if dim < 3:
        raise UnsupportedDimensionError(f"Rogers' formula needs d >= 3, got {dim}")


def rogers_formula(
    f: TestFunctionSpec,
    dim: int,
    truncation: int = 100,
) -> VarianceResult:
    """Return the variance of the Siegel transform of f.

    The double sum over (p, q) is taken for max(p, q) <= truncation. Every
    dropped term is at most sup|f| * int f / max(p, q)^d, which gives the
    Hurwitz zeta tail bound.
    """
    _check_rogers_dimension(dim)
    if truncation < 1:
        raise DomainError(f"truncation must be at least 1, got {truncation}")

    terms = []
    for q in range(1, truncation + 1):
        for p in range(1, q + 1):
            # both integrals are symmetric under swapping p and q
            weight = 1 if p == q else 2
            pair = f.pair_integral(p, q, 1, dim) + f.pair_integral(p, q, -1, dim)
            if pair:
                terms.append(weight * pair)

    zeta_d = float(scipy.special.zeta(dim))
    tail = 2 * float(scipy.special.zeta(dim - 1, truncation + 1)) - float(
        scipy.special.zeta(dim, truncation + 1),
    )
    return VarianceResult(
        value=math.fsum(terms) / zeta_d,
        truncation_order=truncation,
        tail_bound=2 * f.sup_norm() * f.integral(dim) * tail / zeta_d,
    )


def ball_rogers_variance(dim: int, radius: float) -> float:
    _check_rogers_dimension(dim)
    zeta_d = float(scipy.special.zeta(dim))
    zeta_below = float(scipy.special.zeta(dim - 1))
    return 2 * ball_volume(dim, radius) * (2 * zeta_below - zeta_d) / zeta_d


def rogers_l2_bound(f: TestFunctionSpec, dim: int) -> float:
    """Upper bound for the mean square of the Siegel transform of f >= 0."""
    _check_rogers_dimension(dim)
    zeta_half = float(scipy.special.zeta(dim / 2))
    return (
        f.integral(dim) ** 2
        + 2 * zeta_half**2 / float(scipy.special.zeta(dim)) * f.l2_norm_squared(dim)
    )


@dataclasses.dataclass(frozen=True)
class RogersReport:
    n: int
    mean: float
    variance: float
    second_moment: float
    formula: VarianceResult
    l2_bound: float

    @property
    def relative_gap(self) -> float:
        return abs(self.variance - self.formula.value) / self.formula.value

    @property
    def within_l2_bound(self) -> bool:
        return self.second_moment <= self.l2_bound

    def passed(self, tolerance: float = ROGERS_TOLERANCE) -> bool:
        return self.relative_gap <= tolerance and self.within_l2_bound


def rogers_check(
    f: TestFunctionSpec,
    sampler: SamplerConfig,
    n: int,
    *,
    truncation: int = 100,
    workers: int = 1,
    logger: logging.Logger,
) -> RogersReport:
    _check_rogers_dimension(sampler.dim)
    formula = rogers_formula(f, sampler.dim, truncation)
    values = siegel_values(f, sampler, n, workers)
    report = RogersReport(
        n=n,
        mean=float(values.mean()),
        variance=float(np.var(values, ddof=1)) if n >= 2 else math.nan,
        second_moment=float(np.mean(values**2)),
        formula=formula,
        l2_bound=rogers_l2_bound(f, sampler.dim),
    )
    logger.info(
        "empirical variance %r against Rogers' formula %r (tail <= %.3g)",
        report.variance,
        formula.value,
        formula.tail_bound,
    )
    return report


@dataclasses.dataclass(frozen=True)
class SampleRow:
    sample_index: int
    raw_count: int
    volume: float
    discrepancy: float
    normalized: float
    boundary_flags: int
    alpha_proxy: float


@dataclasses.dataclass(frozen=True)
class CountWork:
    sampler: SamplerConfig
    spec: DomainSpec
    method: str = "tiled"
    cell_side: float | None = None

    def __call__(self, index: int) -> SampleRow:
        basis = self.sampler.draw(index)
        result = discrepancy(basis, self.spec, self.method, self.cell_side)
        return SampleRow(
            sample_index=index,
            raw_count=result.count,
            volume=result.volume,
            discrepancy=result.discrepancy,
            normalized=result.normalized,
            boundary_flags=result.boundary_flags,
            alpha_proxy=alpha_proxy(basis),
        )


@dataclasses.dataclass(frozen=True)
class CltRun:
    spec: DomainSpec
    target: VarianceResult
    rows: tuple[SampleRow, ...]
    summary: SampleSummary
    exploratory: bool

    @property
    def normalized(self) -> np.ndarray:
        return np.array([row.normalized for row in self.rows])

    @property
    def boundary_flags(self) -> int:
        return sum(row.boundary_flags for row in self.rows)

    def passed(self) -> bool:
        summary = self.summary
        return (
            abs(summary.variance_ratio - 1) <= CLT_VARIANCE_TOLERANCE
            and abs(summary.cum3_z) < CLT_CUMULANT_Z
            and abs(summary.cum4_z) < CLT_CUMULANT_Z
            and summary.ks_distance < CLT_KS_TOLERANCE
        )


def clt_experiment(
    spec: DomainSpec,
    T_values: Sequence[float],
    sampler: SamplerConfig,
    n: int,
    *,
    method: str = "tiled",
    cell_side: float | None = None,
    truncation: int = 200,
    workers: int = 1,
    logger: logging.Logger,
) -> list[CltRun]:
    """Sample normalised discrepancies for each cutoff in ``T_values``.

    Each sample is summarised against the normal law whose variance is the
    limiting variance of the domain family.
    """
    d = spec.partition.d
    if d < 3:
        raise UnsupportedDimensionError(f"the limit law needs d >= 3, got {d}")
    if sampler.dim != d:
        raise LatticeError(f"sampler draws d={sampler.dim} lattices, domain has d={d}")

    target = variance_series(spec.interval, spec.region, spec.partition, truncation)
    exploratory = d < THEOREM_DIMENSION
    if exploratory:
        logger.warning(
            "d=%d is below %d; results are exploratory",
            d,
            THEOREM_DIMENSION,
        )
    logger.debug("target variance %r (tail <= %.3g)", target.value, target.tail_bound)

    runs = []
    for T in T_values:
        run_spec = spec.with_T(T)
        run_spec.require_threshold()
        logger.info("T=%r: counting %d lattices", T, n)
        rows = tuple(
            map_samples(CountWork(sampler, run_spec, method, cell_side), n, workers),
        )
        run = CltRun(
            spec=run_spec,
            target=target,
            rows=rows,
            summary=summarize(
                np.array([row.normalized for row in rows]),
                target.value,
            ),
            exploratory=exploratory,
        )
        if run.boundary_flags:
            logger.warning(
                "T=%r: %d counted points lie within rounding of the boundary",
                T,
                run.boundary_flags,
            )
        logger.info(
            "T=%r: variance %r against %r, KS distance %.4f",
            T,
            run.summary.variance,
            target.value,
            run.summary.ks_distance,
        )
        runs.append(run)
    return runs


@dataclasses.dataclass(frozen=True)
class AlphaWork:
    sampler: SamplerConfig

    def __call__(self, index: int) -> float:
        return alpha_proxy(self.sampler.draw(index))


@dataclasses.dataclass(frozen=True)
class AlphaReport:
    n: int
    power: float
    moment_half: float
    moment_full: float

    @property
    def relative_gap(self) -> float:
        return abs(self.moment_full - self.moment_half) / self.moment_full

    def passed(self, tolerance: float = ALPHA_TOLERANCE) -> bool:
        return self.relative_gap <= tolerance


def alpha_moment_check(
    sampler: SamplerConfig,
    n: int,
    power: float = 2.0,
    *,
    workers: int = 1,
    logger: logging.Logger,
) -> AlphaReport:
    """Compare the moment of the alpha proxy over n and over 2n lattices.

    The moment is finite for power < d, so the two estimates settle.
    """
    proxies = np.array(map_samples(AlphaWork(sampler), 2 * n, workers))
    report = AlphaReport(
        n=n,
        power=power,
        moment_half=float(np.mean(proxies[:n] ** power)),
        moment_full=float(np.mean(proxies**power)),
    )
    logger.info(
        "alpha moment %r over %d lattices, %r over %d",
        report.moment_half,
        n,
        report.moment_full,
        2 * n,
    )
    return report


@dataclasses.dataclass(frozen=True)
class PlanarAlphaWork:
    sampler: SamplerConfig

    def __call__(self, index: int) -> tuple[float, float]:
        basis = self.sampler.draw(index)
        return alpha_proxy(basis), alpha_exact_d2(basis)


@dataclasses.dataclass(frozen=True)
class PlanarAlphaReport:
    n: int
    mean_proxy: float
    mean_exact: float
    min_ratio: float
    max_ratio: float

    @property
    def ratio(self) -> float:
        return self.mean_proxy / self.mean_exact

    @property
    def worst_ratio(self) -> float:
        """The per lattice proxy/exact ratio farthest from 1."""
        if self.max_ratio * self.min_ratio > 1:
            return self.max_ratio
        return self.min_ratio

    def passed(self) -> bool:
        return (
            1 / math.sqrt(2) - 1e-9 <= self.min_ratio
            and self.max_ratio <= math.sqrt(2) + 1e-9
        )


def alpha_d2_check(
    n: int,
    seed: int = 0,
    *,
    workers: int = 1,
    logger: logging.Logger,
) -> PlanarAlphaReport:
    """Compare the LLL proxy with the exact alpha lattice by lattice."""
    work = PlanarAlphaWork(SamplerConfig("exact", 2, seed=seed))
    pairs = np.array(map_samples(work, n, workers)).reshape(-1, 2)
    ratios = pairs[:, 0] / pairs[:, 1]
    report = PlanarAlphaReport(
        n=n,
        mean_proxy=float(pairs[:, 0].mean()),
        mean_exact=float(pairs[:, 1].mean()),
        min_ratio=float(ratios.min()),
        max_ratio=float(ratios.max()),
    )
    logger.info(
        "planar alpha: proxy/exact = %.4f on average, worst %.4f",
        report.ratio,
        report.worst_ratio,
    )
    return report


@dataclasses.dataclass(frozen=True)
class ShortestVectorWork:
    sampler: SamplerConfig

    def __call__(self, index: int) -> float:
        return shortest_vector_length(self.sampler.draw(index))


@dataclasses.dataclass(frozen=True)
class SamplerCalibration:
    """Exact planar samples against rotated Hecke samples."""

    n: int
    acceptance_rate: float
    mean_exact: float
    mean_hecke: float
    standard_error: float

    @property
    def gap(self) -> float:
        return self.mean_exact - self.mean_hecke

    @property
    def z_score(self) -> float:
        return z_score(self.gap, self.standard_error)

    def passed(self, tolerance: float = CALIBRATION_Z_TOLERANCE) -> bool:
        return abs(self.z_score) < tolerance


def sampler_calibration(
    n: int,
    seed: int = 0,
    prime: int = DEFAULT_PRIME,
    *,
    workers: int = 1,
    logger: logging.Logger,
) -> SamplerCalibration:
    """Compare the mean shortest vector of both planar samplers over n draws.

    The exact draws run in this process so the acceptance counters of the
    modular domain sampler cover all of them.
    """
    exact = SamplerConfig("exact", 2, seed=seed)
    exact_lengths = np.array([ShortestVectorWork(exact)(index) for index in range(n)])
    hecke = SamplerConfig("hecke", 2, prime, seed + 1)
    hecke_lengths = np.array(map_samples(ShortestVectorWork(hecke), n, workers))

    report = SamplerCalibration(
        n=n,
        acceptance_rate=exact.modular.acceptance_rate,
        mean_exact=float(exact_lengths.mean()),
        mean_hecke=float(hecke_lengths.mean()),
        standard_error=math.hypot(
            _standard_error(exact_lengths),
            _standard_error(hecke_lengths),
        ),
    )
    logger.info(
        "modular domain sampler accepted %d of %d proposals (%.4f, expected %.4f)",
        exact.modular.accepted,
        exact.modular.proposals,
        report.acceptance_rate,
        MODULAR_ACCEPTANCE,
    )
    logger.info(
        "mean shortest vector %r exact against %r Hecke (z = %.3f)",
        report.mean_exact,
        report.mean_hecke,
        report.z_score,
    )
    return report
