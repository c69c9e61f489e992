"""Lattice point counts in the domain and Siegel transforms."""
from __future__ import annotations

import dataclasses
import itertools
import math

import numpy as np
import scipy.special
from numpy.polynomial import Polynomial

from latticeclt.geometry import DimensionPartition
from latticeclt.geometry import DomainSpec
from latticeclt.geometry import angular_measure
from latticeclt.geometry import angular_symmetric_overlap
from latticeclt.geometry import block_norms
from latticeclt.geometry import boundary_mask
from latticeclt.geometry import forward_coordinates
from latticeclt.geometry import membership_mask
from latticeclt.geometry import reduce_linear_forms
from latticeclt.geometry import region_volume
from latticeclt.geometry import sphere_measure
from latticeclt.lattice import BoxConstraint
from latticeclt.lattice import DiagonalFlow
from latticeclt.lattice import LatticeBasis
from latticeclt.lattice import LatticeError
from latticeclt.lattice import enumerate_coefficients
from latticeclt.lattice import flow_scales
from latticeclt.lattice import lll_transform


class BruteForceCapExceeded(LatticeError):
    ...


BRUTE_FORCE_CAP = 10**8
BOUNDARY_TOLERANCE = 1e-12
CELL_MARGIN = 1e-9
CELL_BOX_SLACK = 1e-5
PREFILTER_TOLERANCE = 1e-6
RELIABLE_ERROR = 1e-9
DECIDED_MARGIN = 1e-6


@dataclasses.dataclass(frozen=True)
class CountResult:
    count: int
    volume: float
    covolume: float
    discrepancy: float
    normalized: float
    degenerate: bool
    boundary_flags: int
    cells_visited: int = 0
    candidates: int = 0

    @property
    def expected(self) -> float:
        return self.volume / self.covolume


def _covolume(basis: LatticeBasis) -> float:
    return 1.0 if basis.is_unimodular else basis.det_abs


def _spec_volume(spec: DomainSpec) -> float:
    return region_volume(
        spec.partition,
        spec.interval,
        angular_measure(spec.region),
        spec.T,
    )


def _result(
    basis: LatticeBasis,
    spec: DomainSpec,
    count: int,
    boundary_flags: int,
    cells_visited: int,
    candidates: int,
) -> CountResult:
    volume = _spec_volume(spec)
    covolume = _covolume(basis)
    expected = volume / covolume
    discrepancy = count - expected
    degenerate = expected <= 0
    return CountResult(
        count=count,
        volume=volume,
        covolume=covolume,
        discrepancy=discrepancy,
        normalized=math.nan if degenerate else discrepancy / math.sqrt(expected),
        degenerate=degenerate,
        boundary_flags=boundary_flags,
        cells_visited=cells_visited,
        candidates=candidates,
    )


def _check_dimension(basis: LatticeBasis, spec: DomainSpec) -> None:
    if basis.dim != spec.partition.d:
        raise LatticeError(
            f"basis has dimension {basis.dim}, domain has {spec.partition.d}",
        )


def _boundary_count(points: np.ndarray, spec: DomainSpec) -> int:
    return int(boundary_mask(points, spec, BOUNDARY_TOLERANCE).sum())


def _coefficients_in_box(basis: LatticeBasis, box: BoxConstraint) -> np.ndarray:
    """Enumerate through an LLL basis, returning coefficients of ``basis``."""
    reduced, transform = lll_transform(basis)
    return enumerate_coefficients(reduced, box) @ transform


def _rounding_bound(basis: LatticeBasis, coefficients: np.ndarray) -> np.ndarray:
    """Bound the error of ``approximate_points`` coordinate by coordinate."""
    eps = np.finfo(float).eps
    return 1.01 * basis.dim * eps * (np.abs(coefficients) @ np.abs(basis.basis))


def _decided_points(
    basis: LatticeBasis,
    coefficients: np.ndarray,
    spec: DomainSpec,
) -> np.ndarray:
    """Return the lattice points, exact wherever rounding could matter.

    A float point whose block norms carry relative error below
    RELIABLE_ERROR and which stays DECIDED_MARGIN away from the boundary
    has the membership of its correctly rounded counterpart; every other
    point is recomputed exactly.
    """
    points = basis.approximate_points(coefficients)
    partition = spec.partition
    errors = block_norms(_rounding_bound(basis, coefficients), partition)
    norms = block_norms(points, partition)
    unreliable = np.any(errors > RELIABLE_ERROR * norms, axis=1)
    unreliable |= boundary_mask(points, spec, DECIDED_MARGIN)
    if unreliable.any():
        points[unreliable] = basis.points(coefficients[unreliable])
    return points


def count_bruteforce(
    basis: LatticeBasis,
    spec: DomainSpec,
    cap: int = BRUTE_FORCE_CAP,
) -> CountResult:
    """Count by enumerating every lattice point of the box [-T, T]^d."""
    _check_dimension(basis, spec)
    d = basis.dim
    estimate = (2 * spec.T) ** d / basis.det_abs
    if estimate > cap:
        raise BruteForceCapExceeded(
            f"about {estimate:.3g} candidate points exceed the cap of {cap}; "
            f"use count_tiled",
        )

    coefficients = _coefficients_in_box(basis, BoxConstraint.symmetric([spec.T] * d))
    points = _decided_points(basis, coefficients, spec)
    inside = membership_mask(points, spec)
    return _result(
        basis,
        spec,
        count=int(inside.sum()),
        boundary_flags=_boundary_count(points[inside], spec),
        cells_visited=1,
        candidates=len(coefficients),
    )


def default_cell_side(partition: DimensionPartition) -> float:
    """Cell side minimising cells times candidates per cell.

    A cell of side h holds a box of volume proportional to
    exp((d - d_k) h) and there are about h^-(k-1) cells.
    """
    if partition.k == 1:
        return 1.0
    return (partition.k - 1) / (partition.d - partition.dims[-1])


def _cells(spec: DomainSpec, cell_side: float) -> list[tuple[int, ...]]:
    """Index the cubes of side h in u - log(T) that can meet the domain."""
    partition = spec.partition
    if partition.k == 1:
        return [()]
    log_lo, _ = spec.interval.log_bounds
    floor_value = log_lo - partition.d * spec.log_T
    margin = CELL_MARGIN * (1 + abs(floor_value))
    dims = partition.dims[:-1]

    ranges = [
        range(math.floor(floor_value / (cell_side * dim) - 1), 0)
        for dim in dims
    ]
    return [
        cell
        for cell in itertools.product(*ranges)
        if cell_side * sum(dim * (m + 1) for dim, m in zip(dims, cell))
        > floor_value - margin
    ]


def _cell_box(spec: DomainSpec, cell_side: float) -> BoxConstraint:
    partition = spec.partition
    _, log_hi = spec.interval.log_bounds
    d_last = partition.dims[-1]
    radii = [math.exp(cell_side / 2)] * (partition.k - 1)
    radii.append(math.exp((log_hi + (partition.d - d_last) * cell_side / 2) / d_last))
    radii = np.asarray(radii) * (1 + CELL_BOX_SLACK)
    return BoxConstraint.symmetric(np.repeat(radii, partition.dims))


class _CellReductions:
    """LLL transforms of the lattice flowed by a(-center) of each cell.

    A cell starts from the transform of its neighbour one step closer to
    the cell around u = 0, where no flow is needed, so every reduction
    sees a mildly skewed basis however large T is. Transforms are exact
    integer matrices and the flowed bases are rebuilt from them exactly.
    """

    def __init__(self, basis: LatticeBasis, spec: DomainSpec, cell_side: float):
        self.basis = basis
        self.spec = spec
        self.cell_side = cell_side
        k = spec.partition.k
        self.root = (math.floor(-spec.log_T / cell_side),) * (k - 1)
        self.transforms: dict[tuple[int, ...], np.ndarray] = {}

    def scales(self, cell: tuple[int, ...]) -> np.ndarray:
        offsets = np.asarray(cell, dtype=float) + 0.5
        center = self.spec.log_T + self.cell_side * offsets
        return flow_scales(-center, self.spec.partition)[0]

    def flowed(self, cell: tuple[int, ...], transform: np.ndarray) -> LatticeBasis:
        return LatticeBasis(self.basis.points(transform) * self.scales(cell))

    def _parent(self, cell: tuple[int, ...]) -> tuple[int, ...]:
        return tuple(m + (m < r) - (m > r) for m, r in zip(cell, self.root))

    def transform(self, cell: tuple[int, ...]) -> np.ndarray:
        path = []
        while cell not in self.transforms and cell != self.root:
            path.append(cell)
            cell = self._parent(cell)
        if cell not in self.transforms:
            identity = np.eye(self.basis.dim, dtype=np.int64).astype(object)
            self.transforms[cell] = self._reduce(cell, identity)
        for step in reversed(path):
            self.transforms[step] = self._reduce(step, self.transforms[cell])
            cell = step
        return self.transforms[cell]

    def _reduce(self, cell: tuple[int, ...], start: np.ndarray) -> np.ndarray:
        _, step = lll_transform(self.flowed(cell, start), check_precision=False)
        return step.astype(object) @ start


def _near_cell(
    flowed_points: np.ndarray,
    spec: DomainSpec,
    cell_side: float,
) -> np.ndarray:
    """Keep flowed points that may lie in the domain and in the cell.

    The flow moves the block logarithms by the cell center and keeps their
    weighted sum, so both tests read off the flowed point directly.
    """
    partition = spec.partition
    with np.errstate(divide="ignore"):
        logs = np.log(block_norms(flowed_points, partition))
    s = logs @ np.asarray(partition.dims)
    log_lo, log_hi = spec.interval.log_bounds
    near = (s > log_lo - PREFILTER_TOLERANCE) & (s < log_hi + PREFILTER_TOLERANCE)
    if partition.k > 1:
        reach = cell_side / 2 + PREFILTER_TOLERANCE
        near &= np.all(np.abs(logs[:, :-1]) <= reach, axis=1)
    return near


def count_tiled(
    basis: LatticeBasis,
    spec: DomainSpec,
    cell_side: float = 1.0,
) -> CountResult:
    """Count by sweeping cells of the flow parameter.

    Every domain point z has u(z) in exactly one cube log(T) + h[m, m + 1).
    For that cube the flow a(-center) carries z into a fixed box whose size
    depends only on h, I and the partition, so each cell costs a bounded
    enumeration of the flowed lattice. Points are rebuilt exactly from the
    caller's basis, which makes the count agree with count_bruteforce.
    """
    _check_dimension(basis, spec)
    partition = spec.partition
    if not (cell_side > 0 and math.isfinite(cell_side)):
        raise LatticeError(f"cell side must be positive, got {cell_side!r}")
    spec.require_threshold()

    box = _cell_box(spec, cell_side)
    reductions = _CellReductions(basis, spec, cell_side)
    count = 0
    boundary_flags = 0
    candidates = 0
    cells = _cells(spec, cell_side)
    for cell in cells:
        transform = reductions.transform(cell)
        flowed = reductions.flowed(cell, transform)
        found = enumerate_coefficients(flowed, box)
        candidates += len(found)
        found = found[_near_cell(flowed.approximate_points(found), spec, cell_side)]
        if not len(found):
            continue

        points = basis.points(found.astype(object) @ transform)
        with np.errstate(divide="ignore", invalid="ignore"):
            u, _, _ = forward_coordinates(points, partition)
            owned = np.all(
                np.floor((u - spec.log_T) / cell_side) == np.asarray(cell),
                axis=1,
            )
        inside = owned & membership_mask(points, spec)
        count += int(inside.sum())
        boundary_flags += _boundary_count(points[inside], spec)

    return _result(basis, spec, count, boundary_flags, len(cells), candidates)


def discrepancy(
    basis: LatticeBasis,
    spec: DomainSpec,
    method: str = "tiled",
    cell_side: float | None = None,
    cap: int = BRUTE_FORCE_CAP,
) -> CountResult:
    if cell_side is None:
        cell_side = default_cell_side(spec.partition)
    if method == "tiled":
        return count_tiled(basis, spec, cell_side)
    elif method == "bruteforce":
        return count_bruteforce(basis, spec, cap)
    raise LatticeError(f"unknown counting method {method!r}")


def count_linear_forms(
    basis: LatticeBasis,
    forms: np.ndarray,
    spec: DomainSpec,
    method: str = "tiled",
    cell_side: float | None = None,
) -> CountResult:
    """Count the lattice points z with forms @ z in the domain."""
    reduction = reduce_linear_forms(
        forms,
        spec.interval,
        spec.region,
        spec.partition,
    )
    image = LatticeBasis(basis.basis @ reduction.unimodular.T)
    return discrepancy(
        image,
        reduction.reduced_spec(spec.partition, spec.T),
        method=method,
        cell_side=cell_side,
    )


def ball_volume(dim: int, radius: float = 1.0) -> float:
    return float(math.pi ** (dim / 2) / scipy.special.gamma(dim / 2 + 1)) * radius**dim


class TestFunctionSpec:
    """A bounded nonnegative function with bounded support.

    Besides evaluation every kind knows the integrals the Siegel and
    Rogers formulas need.
    """

    __test__ = False

    def __call__(self, points: np.ndarray) -> np.ndarray:
        raise NotImplementedError("Abstract method needs to be overwritten")

    def support_box(self, dim: int) -> BoxConstraint:
        raise NotImplementedError("Abstract method needs to be overwritten")

    def integral(self, dim: int) -> float:
        raise NotImplementedError("Abstract method needs to be overwritten")

    def l2_norm_squared(self, dim: int) -> float:
        raise NotImplementedError("Abstract method needs to be overwritten")

    def sup_norm(self) -> float:
        return 1.0

    def pair_integral(self, p: int, q: int, sign: int, dim: int) -> float:
        """Return the integral of f(p z) f(sign q z) over R^dim."""
        raise NotImplementedError("Abstract method needs to be overwritten")


@dataclasses.dataclass(frozen=True)
class BallIndicator(TestFunctionSpec):
    radius: float

    def __call__(self, points: np.ndarray) -> np.ndarray:
        norms = np.linalg.norm(np.atleast_2d(points), axis=1)
        return (norms <= self.radius).astype(float)

    def support_box(self, dim: int) -> BoxConstraint:
        return BoxConstraint.symmetric([self.radius] * dim)

    def integral(self, dim: int) -> float:
        return ball_volume(dim, self.radius)

    def l2_norm_squared(self, dim: int) -> float:
        return self.integral(dim)

    def pair_integral(self, p: int, q: int, sign: int, dim: int) -> float:
        return ball_volume(dim, self.radius / max(p, q))


@dataclasses.dataclass(frozen=True)
class BoxIndicator(TestFunctionSpec):
    half_widths: tuple[float, ...]

    def __call__(self, points: np.ndarray) -> np.ndarray:
        inside = np.abs(np.atleast_2d(points)) <= np.asarray(self.half_widths)
        return np.all(inside, axis=1).astype(float)

    def support_box(self, dim: int) -> BoxConstraint:
        if dim != len(self.half_widths):
            raise LatticeError(f"box has dimension {len(self.half_widths)}, need {dim}")
        return BoxConstraint.symmetric(self.half_widths)

    def integral(self, dim: int) -> float:
        return math.prod(2 * width for width in self.half_widths)

    def l2_norm_squared(self, dim: int) -> float:
        return self.integral(dim)

    def pair_integral(self, p: int, q: int, sign: int, dim: int) -> float:
        return self.integral(dim) / max(p, q) ** dim


@dataclasses.dataclass(frozen=True)
class DomainIndicator(TestFunctionSpec):
    spec: DomainSpec

    def __call__(self, points: np.ndarray) -> np.ndarray:
        return membership_mask(points, self.spec).astype(float)

    def support_box(self, dim: int) -> BoxConstraint:
        return BoxConstraint.symmetric([self.spec.T] * dim)

    def integral(self, dim: int) -> float:
        return _spec_volume(self.spec)

    def l2_norm_squared(self, dim: int) -> float:
        return self.integral(dim)

    def pair_integral(self, p: int, q: int, sign: int, dim: int) -> float:
        # p z and +-q z both in the domain is a domain with cutoff
        # T / max(p, q), interval p^-d I & q^-d I and region B & +-B
        spec = self.spec
        d = spec.partition.d
        interval = spec.interval.scaled(p ** (-d)).intersection(
            spec.interval.scaled(q ** (-d)),
        )
        if interval is None:
            return 0.0
        kappa = (
            angular_measure(spec.region)
            if sign > 0
            else angular_symmetric_overlap(spec.region)
        )
        return region_volume(spec.partition, interval, kappa, spec.T / max(p, q))


@dataclasses.dataclass(frozen=True)
class RadialBump(TestFunctionSpec):
    """(1 - |z|^2 / R^2)^m inside the ball of radius R."""

    radius: float
    smoothness: int = 2

    def __post_init__(self) -> None:
        if self.radius <= 0 or self.smoothness < 1:
            raise LatticeError("a bump needs a positive radius and smoothness >= 1")

    def __call__(self, points: np.ndarray) -> np.ndarray:
        ratio = np.linalg.norm(np.atleast_2d(points), axis=1) / self.radius
        return np.clip(1 - ratio**2, 0, None) ** self.smoothness

    def support_box(self, dim: int) -> BoxConstraint:
        return BoxConstraint.symmetric([self.radius] * dim)

    def _profile(self, scale: int) -> Polynomial:
        return Polynomial([1, 0, -((scale / self.radius) ** 2)]) ** self.smoothness

    def _radial_integral(self, radial: Polynomial, dim: int, upper: float) -> float:
        antiderivative = (radial * Polynomial([0, 1]) ** (dim - 1)).integ()
        return sphere_measure(dim) * float(antiderivative(upper) - antiderivative(0))

    def integral(self, dim: int) -> float:
        return self._radial_integral(self._profile(1), dim, self.radius)

    def l2_norm_squared(self, dim: int) -> float:
        return self._radial_integral(self._profile(1) ** 2, dim, self.radius)

    def pair_integral(self, p: int, q: int, sign: int, dim: int) -> float:
        return self._radial_integral(
            self._profile(p) * self._profile(q),
            dim,
            self.radius / max(p, q),
        )


@dataclasses.dataclass(frozen=True)
class Pullback(TestFunctionSpec):
    """The function z -> f(a(-u) z)."""

    function: TestFunctionSpec
    flow: DiagonalFlow

    def __call__(self, points: np.ndarray) -> np.ndarray:
        return self.function(self.flow.inverse().apply_point(np.atleast_2d(points)))

    def support_box(self, dim: int) -> BoxConstraint:
        return self.function.support_box(dim).scaled(self.flow.scales())

    def integral(self, dim: int) -> float:
        return self.function.integral(dim)

    def l2_norm_squared(self, dim: int) -> float:
        return self.function.l2_norm_squared(dim)

    def sup_norm(self) -> float:
        return self.function.sup_norm()

    def pair_integral(self, p: int, q: int, sign: int, dim: int) -> float:
        return self.function.pair_integral(p, q, sign, dim)


def siegel_transform(f: TestFunctionSpec, basis: LatticeBasis) -> float:
    """Return the sum of f over the nonzero points of the lattice."""
    coefficients = _coefficients_in_box(basis, f.support_box(basis.dim))
    if not len(coefficients):
        return 0.0
    return math.fsum(f(basis.points(coefficients)))
