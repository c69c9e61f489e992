"""Domains bounded by a product of block norms.

A point z of R^d is split into blocks z_1, ..., z_k of sizes d_1, ..., d_k.
The domain Omega_T(I, B) collects the points whose norm product
N(z) = prod ||z_j||^{d_j} lies in the open interval I, whose block
directions lie in the angular region B and whose block norms all lie in
(0, T).
"""
from __future__ import annotations

import dataclasses
import math
import re
from typing import Sequence

import numpy as np
import scipy.integrate
import scipy.special
from numpy.polynomial import Polynomial


class DomainError(ValueError):
    ...


class ThresholdError(DomainError):
    ...


class UnsupportedDimensionError(DomainError):
    ...


@dataclasses.dataclass(frozen=True)
class DimensionPartition:
    dims: tuple[int, ...]

    def __post_init__(self) -> None:
        dims = tuple(int(dim) for dim in self.dims)
        if not dims:
            raise DomainError("a partition needs at least one block")
        if any(dim < 1 for dim in dims):
            raise DomainError(f"block sizes must be positive, got {dims}")
        object.__setattr__(self, "dims", dims)

    @classmethod
    def parse(cls, text: str) -> DimensionPartition:
        try:
            return cls(tuple(int(part) for part in text.split(",")))
        except ValueError as exception:
            raise DomainError(f"invalid partition {text!r}: {exception}")

    @property
    def k(self) -> int:
        return len(self.dims)

    @property
    def d(self) -> int:
        return sum(self.dims)

    @property
    def offsets(self) -> tuple[int, ...]:
        offsets = [0]
        for dim in self.dims:
            offsets.append(offsets[-1] + dim)
        return tuple(offsets)

    def split(self, points: np.ndarray) -> list[np.ndarray]:
        """Return the blocks of each row of ``points``."""
        offsets = self.offsets
        return [
            points[..., offsets[j] : offsets[j + 1]] for j in range(self.k)
        ]

    def __str__(self) -> str:
        return ",".join(str(dim) for dim in self.dims)


@dataclasses.dataclass(frozen=True)
class Interval:
    """The open interval (lo, hi) of the positive reals."""

    lo: float
    hi: float

    def __post_init__(self) -> None:
        lo, hi = float(self.lo), float(self.hi)
        if not (0 < lo < hi < math.inf):
            raise DomainError(f"need 0 < lo < hi < inf, got ({lo!r}, {hi!r})")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def parse(cls, text: str) -> Interval:
        parts = text.split(",")
        if len(parts) != 2:
            raise DomainError(f"interval must be 'lo,hi', got {text!r}")
        try:
            return cls(float(parts[0]), float(parts[1]))
        except ValueError as exception:
            raise DomainError(f"invalid interval {text!r}: {exception}")

    @property
    def length(self) -> float:
        return self.hi - self.lo

    @property
    def log_bounds(self) -> tuple[float, float]:
        return math.log(self.lo), math.log(self.hi)

    def contains(self, values: np.ndarray) -> np.ndarray:
        return (values > self.lo) & (values < self.hi)

    def scaled(self, factor: float) -> Interval:
        return Interval(self.lo * factor, self.hi * factor)

    def intersection(self, other: Interval) -> Interval | None:
        lo, hi = max(self.lo, other.lo), min(self.hi, other.hi)
        if lo >= hi:
            return None
        return Interval(lo, hi)


def sphere_measure(dim: int) -> float:
    """Return the surface measure of the unit sphere in R^dim.

    The sphere in R^1 is the pair {-1, +1} with counting measure.
    """
    return float(2 * math.pi ** (dim / 2) / scipy.special.gamma(dim / 2))


def cap_measure(dim: int, angle: float) -> float:
    """Return the measure of {xi : xi . a > cos(angle)} on the unit sphere."""
    if dim == 1:
        return 1.0
    if angle <= math.pi / 2:
        return float(
            sphere_measure(dim)
            / 2
            * scipy.special.betainc((dim - 1) / 2, 0.5, math.sin(angle) ** 2),
        )
    return sphere_measure(dim) - cap_measure(dim, math.pi - angle)


def cap_overlap_measure(dim: int, angle: float) -> float:
    """Return the measure of a cap intersected with its antipodal cap.

    The intersection is the band |xi . a| < -cos(angle) around the
    equator, empty unless the cap is wider than a hemisphere.
    """
    if dim == 1 or angle <= math.pi / 2:
        return 0.0
    if dim == 2:
        return 2 * (2 * angle - math.pi)
    band, _ = scipy.integrate.quad(
        lambda polar: math.sin(polar) ** (dim - 2),
        math.pi - angle,
        angle,
        epsabs=1e-13,
        epsrel=1e-11,
    )
    return sphere_measure(dim - 1) * band


def _unit_axis(axis: Sequence[float]) -> tuple[float, ...]:
    values = tuple(float(x) for x in axis)
    norm = math.hypot(*values) if values else 0.0
    if abs(norm - 1) > 1e-9:
        raise DomainError(f"axis {values} does not have unit norm")
    return values


class SphereFactor:
    """One factor of an angular region: a subset of the unit sphere.

    ``contains`` and ``boundary_margin`` receive unit vectors stacked as
    rows of an array with ``dim`` columns.
    """

    @property
    def dim(self) -> int:
        raise NotImplementedError("Abstract method needs to be overwritten")

    def contains(self, xi: np.ndarray) -> np.ndarray:
        raise NotImplementedError("Abstract method needs to be overwritten")

    def measure(self) -> float:
        raise NotImplementedError("Abstract method needs to be overwritten")

    def negated(self) -> SphereFactor:
        raise NotImplementedError("Abstract method needs to be overwritten")

    def transformed(self, orthogonal: np.ndarray) -> SphereFactor:
        """Return the image of the factor under an orthogonal matrix."""
        raise NotImplementedError("Abstract method needs to be overwritten")

    def overlap_with_negation(self) -> float:
        raise NotImplementedError("Abstract method needs to be overwritten")

    def boundary_margin(self, xi: np.ndarray) -> np.ndarray:
        """Return the angular distance of each row to the factor boundary."""
        return np.full(len(xi), math.inf)


@dataclasses.dataclass(frozen=True)
class FullSphere(SphereFactor):
    size: int

    @property
    def dim(self) -> int:
        return self.size

    def contains(self, xi: np.ndarray) -> np.ndarray:
        return np.ones(len(xi), dtype=bool)

    def measure(self) -> float:
        return sphere_measure(self.size)

    def negated(self) -> SphereFactor:
        return self

    def transformed(self, orthogonal: np.ndarray) -> SphereFactor:
        return self

    def overlap_with_negation(self) -> float:
        return self.measure()


@dataclasses.dataclass(frozen=True)
class Hemisphere(SphereFactor):
    """The open half sphere {xi : xi . axis > 0}."""

    axis: tuple[float, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "axis", _unit_axis(self.axis))

    @property
    def dim(self) -> int:
        return len(self.axis)

    def contains(self, xi: np.ndarray) -> np.ndarray:
        return xi @ np.asarray(self.axis) > 0

    def measure(self) -> float:
        return sphere_measure(self.dim) / 2

    def negated(self) -> SphereFactor:
        return Hemisphere(tuple(-x for x in self.axis))

    def transformed(self, orthogonal: np.ndarray) -> SphereFactor:
        return Hemisphere(tuple(orthogonal @ np.asarray(self.axis)))

    def overlap_with_negation(self) -> float:
        return 0.0

    def boundary_margin(self, xi: np.ndarray) -> np.ndarray:
        return np.abs(np.arcsin(np.clip(xi @ np.asarray(self.axis), -1, 1)))


@dataclasses.dataclass(frozen=True)
class Cap(SphereFactor):
    """The open cap {xi : xi . axis > cos(angle)}."""

    axis: tuple[float, ...]
    angle: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "axis", _unit_axis(self.axis))
        if not (0 < self.angle < math.pi):
            raise DomainError(f"cap angle must lie in (0, pi), got {self.angle!r}")

    @property
    def dim(self) -> int:
        return len(self.axis)

    def contains(self, xi: np.ndarray) -> np.ndarray:
        return xi @ np.asarray(self.axis) > math.cos(self.angle)

    def measure(self) -> float:
        return cap_measure(self.dim, self.angle)

    def negated(self) -> SphereFactor:
        return Cap(tuple(-x for x in self.axis), self.angle)

    def transformed(self, orthogonal: np.ndarray) -> SphereFactor:
        return Cap(tuple(orthogonal @ np.asarray(self.axis)), self.angle)

    def overlap_with_negation(self) -> float:
        return cap_overlap_measure(self.dim, self.angle)

    def boundary_margin(self, xi: np.ndarray) -> np.ndarray:
        polar = np.arccos(np.clip(xi @ np.asarray(self.axis), -1, 1))
        return np.abs(polar - self.angle)


@dataclasses.dataclass(frozen=True)
class SignSet(SphereFactor):
    """A subset of the zero-dimensional sphere {-1, +1}."""

    signs: frozenset[int]

    def __post_init__(self) -> None:
        signs = frozenset(int(sign) for sign in self.signs)
        if not signs or not signs <= {-1, 1}:
            raise DomainError(f"sign set must be a nonempty subset of {{-1, 1}}")
        object.__setattr__(self, "signs", signs)

    @property
    def dim(self) -> int:
        return 1

    def contains(self, xi: np.ndarray) -> np.ndarray:
        return np.isin(xi[:, 0], sorted(self.signs))

    def measure(self) -> float:
        return float(len(self.signs))

    def negated(self) -> SphereFactor:
        return SignSet(frozenset(-sign for sign in self.signs))

    def transformed(self, orthogonal: np.ndarray) -> SphereFactor:
        flip = 1 if orthogonal[0, 0] > 0 else -1
        return SignSet(frozenset(flip * sign for sign in self.signs))

    def overlap_with_negation(self) -> float:
        return float(len(self.signs & {-sign for sign in self.signs}))


_SIGN_TOKENS = {
    "+": {1},
    "+1": {1},
    "-": {-1},
    "-1": {-1},
    "±": {-1, 1},
    "±1": {-1, 1},
    "+-1": {-1, 1},
    "pm": {-1, 1},
}
_AXIS_RE = re.compile(r"e(\d+)$")


def _coordinate_axis(text: str, dim: int) -> tuple[float, ...]:
    match = _AXIS_RE.match(text.strip())
    if match is None or not 1 <= int(match.group(1)) <= dim:
        raise DomainError(f"axis must be one of e1..e{dim}, got {text!r}")
    axis = [0.0] * dim
    axis[int(match.group(1)) - 1] = 1.0
    return tuple(axis)


def _parse_factor(token: str, dim: int) -> SphereFactor:
    if token in _SIGN_TOKENS:
        if dim != 1:
            raise DomainError(f"sign set {token!r} needs a block of size 1")
        return SignSet(frozenset(_SIGN_TOKENS[token]))

    name, _, rest = token.partition(":")
    if name == "full":
        return FullSphere(dim)
    elif name == "hemisphere":
        return Hemisphere(_coordinate_axis(rest, dim))
    elif name == "cap":
        axis, _, angle = rest.partition(":")
        try:
            return Cap(_coordinate_axis(axis, dim), float(angle))
        except ValueError as exception:
            raise DomainError(f"invalid cap {token!r}: {exception}")

    raise DomainError(f"unknown region factor {token!r}")


@dataclasses.dataclass(frozen=True)
class AngularRegion:
    factors: tuple[SphereFactor, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "factors", tuple(self.factors))

    @classmethod
    def parse(cls, text: str, partition: DimensionPartition) -> AngularRegion:
        """Parse comma separated factors such as ``hemisphere:e1,full``."""
        tokens = [token.strip() for token in text.split(",")]
        if len(tokens) != partition.k:
            raise DomainError(
                f"region {text!r} has {len(tokens)} factors, "
                f"partition {partition} needs {partition.k}",
            )
        return cls(
            tuple(
                _parse_factor(token, dim)
                for token, dim in zip(tokens, partition.dims)
            ),
        )

    @classmethod
    def full(cls, partition: DimensionPartition) -> AngularRegion:
        return cls(tuple(FullSphere(dim) for dim in partition.dims))

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(factor.dim for factor in self.factors)

    def measure(self) -> float:
        return math.prod(factor.measure() for factor in self.factors)

    def symmetric_overlap(self) -> float:
        return math.prod(factor.overlap_with_negation() for factor in self.factors)

    def contains(self, xi_blocks: Sequence[np.ndarray]) -> np.ndarray:
        inside = np.ones(len(xi_blocks[0]), dtype=bool)
        for factor, xi in zip(self.factors, xi_blocks):
            inside &= factor.contains(xi)
        return inside

    def boundary_margin(self, xi_blocks: Sequence[np.ndarray]) -> np.ndarray:
        margin = np.full(len(xi_blocks[0]), math.inf)
        for factor, xi in zip(self.factors, xi_blocks):
            margin = np.minimum(margin, factor.boundary_margin(xi))
        return margin

    def negated(self) -> AngularRegion:
        return AngularRegion(tuple(factor.negated() for factor in self.factors))

    def transformed(
        self,
        orthogonal: np.ndarray,
        partition: DimensionPartition,
    ) -> AngularRegion:
        """Apply a block diagonal orthogonal matrix factor by factor."""
        offsets = partition.offsets
        return AngularRegion(
            tuple(
                factor.transformed(orthogonal[start:stop, start:stop])
                for factor, start, stop in zip(self.factors, offsets, offsets[1:])
            ),
        )


def angular_measure(region: AngularRegion) -> float:
    return region.measure()


def angular_symmetric_overlap(region: AngularRegion) -> float:
    """Return the measure of the region intersected with its negation."""
    return region.symmetric_overlap()


@dataclasses.dataclass(frozen=True)
class DomainSpec:
    partition: DimensionPartition
    interval: Interval
    region: AngularRegion
    T: float

    def __post_init__(self) -> None:
        T = float(self.T)
        if not (1 < T < math.inf):
            raise DomainError(f"cutoff T must be finite and exceed 1, got {T!r}")
        object.__setattr__(self, "T", T)
        if self.region.dims != self.partition.dims:
            raise DomainError(
                f"region factor sizes {self.region.dims} do not match "
                f"partition {self.partition.dims}",
            )

    @property
    def log_T(self) -> float:
        return math.log(self.T)

    @property
    def threshold(self) -> float:
        """Smallest cutoff for which the volume is polynomial in log T."""
        return self.interval.hi ** (1 / self.partition.d)

    @property
    def above_threshold(self) -> bool:
        return self.T > self.threshold

    def require_threshold(self) -> None:
        if not self.above_threshold:
            raise ThresholdError(
                f"T={self.T!r} must exceed sup(I)^(1/d) = {self.threshold!r}",
            )

    def with_T(self, T: float) -> DomainSpec:
        return dataclasses.replace(self, T=T)


@dataclasses.dataclass(frozen=True, eq=False)
class CoordPoint:
    u: tuple[float, ...]
    s: float
    xi: tuple[np.ndarray, ...]


def _as_rows(points: np.ndarray, dim: int) -> np.ndarray:
    rows = np.atleast_2d(np.asarray(points, dtype=float))
    if rows.shape[-1] != dim:
        raise DomainError(f"expected points of dimension {dim}, got {rows.shape[-1]}")
    return rows


def block_norms(points: np.ndarray, partition: DimensionPartition) -> np.ndarray:
    """Return the (n, k) array of block norms of each row."""
    rows = _as_rows(points, partition.d)
    return np.stack(
        [np.linalg.norm(block, axis=1) for block in partition.split(rows)],
        axis=1,
    )


def forward_coordinates(
    points: np.ndarray,
    partition: DimensionPartition,
) -> tuple[np.ndarray, np.ndarray, list[np.ndarray]]:
    """Vectorised coordinate map for rows with nonzero blocks.

    Returns the (n, k-1) array u, the array s and the direction blocks.
    """
    rows = _as_rows(points, partition.d)
    norms = block_norms(rows, partition)
    with np.errstate(divide="ignore", invalid="ignore"):
        log_norms = np.log(norms)
        xi = [
            block / norms[:, [j]] for j, block in enumerate(partition.split(rows))
        ]
    return log_norms[:, :-1], log_norms @ np.asarray(partition.dims), xi


def inverse_coordinates(
    u: np.ndarray,
    s: np.ndarray,
    xi: Sequence[np.ndarray],
    partition: DimensionPartition,
) -> np.ndarray:
    dims = np.asarray(partition.dims)
    u = np.atleast_2d(u)
    last = (np.asarray(s) - u @ dims[:-1]) / dims[-1]
    log_norms = np.column_stack([u, last])
    return np.concatenate(
        [np.exp(log_norms[:, [j]]) * block for j, block in enumerate(xi)],
        axis=1,
    )


def coord_forward(z: np.ndarray, partition: DimensionPartition) -> CoordPoint:
    norms = block_norms(z, partition)[0]
    for j, norm in enumerate(norms):
        if norm == 0:
            raise DomainError(f"block {j + 1} of the point is zero")
    u, s, xi = forward_coordinates(z, partition)
    return CoordPoint(
        u=tuple(float(x) for x in u[0]),
        s=float(s[0]),
        xi=tuple(block[0] for block in xi),
    )


def coord_inverse(point: CoordPoint, partition: DimensionPartition) -> np.ndarray:
    return inverse_coordinates(
        np.asarray([point.u], dtype=float).reshape(1, partition.k - 1),
        np.asarray([point.s]),
        [np.atleast_2d(block) for block in point.xi],
        partition,
    )[0]


def _norm_products(norms: np.ndarray, partition: DimensionPartition) -> np.ndarray:
    return np.prod(norms ** np.asarray(partition.dims), axis=1)


def membership_mask(points: np.ndarray, spec: DomainSpec) -> np.ndarray:
    """Vectorised domain membership; all inequalities are strict."""
    partition = spec.partition
    rows = _as_rows(points, partition.d)
    norms = block_norms(rows, partition)
    positive = np.all(norms > 0, axis=1)

    inside = np.zeros(len(rows), dtype=bool)
    if not positive.any():
        return inside

    norms = norms[positive]
    xi = [
        block / norms[:, [j]]
        for j, block in enumerate(partition.split(rows[positive]))
    ]
    inside[positive] = (
        spec.interval.contains(_norm_products(norms, partition))
        & np.all(norms < spec.T, axis=1)
        & spec.region.contains(xi)
    )
    return inside


def boundary_mask(
    points: np.ndarray,
    spec: DomainSpec,
    tolerance: float = 1e-12,
) -> np.ndarray:
    """Flag rows within a relative ``tolerance`` of the domain boundary."""
    partition = spec.partition
    rows = _as_rows(points, partition.d)
    norms = block_norms(rows, partition)
    positive = np.all(norms > 0, axis=1)

    flagged = np.zeros(len(rows), dtype=bool)
    if not positive.any():
        return flagged

    norms = norms[positive]
    products = _norm_products(norms, partition)
    xi = [
        block / norms[:, [j]]
        for j, block in enumerate(partition.split(rows[positive]))
    ]
    slack = np.minimum.reduce(
        [
            np.abs(products - spec.interval.lo) / spec.interval.lo,
            np.abs(products - spec.interval.hi) / spec.interval.hi,
            np.min(np.abs(norms - spec.T), axis=1) / spec.T,
            spec.region.boundary_margin(xi),
        ],
    )
    flagged[positive] = slack < tolerance
    return flagged


def domain_membership(z: np.ndarray, spec: DomainSpec) -> bool:
    return bool(membership_mask(z, spec)[0])


def _exponential_moment(c: float, n: int, a: float, b: float) -> float:
    """Return the integral of (c - s)**n * exp(s) over [a, b]."""

    def antiderivative(s: float) -> float:
        return math.exp(s) * math.fsum(
            math.factorial(n) / math.factorial(n - m) * (c - s) ** (n - m)
            for m in range(n + 1)
        )

    return antiderivative(b) - antiderivative(a)


def _volume_coefficient(partition: DimensionPartition, kappa: float) -> float:
    # kappa / d_k times the volume 1/(k-1)! of the standard simplex, over
    # the Jacobian d_1 ... d_{k-1} of the map to u coordinates.
    return kappa / (
        partition.dims[-1]
        * math.factorial(partition.k - 1)
        * math.prod(partition.dims[:-1])
    )


def region_volume(
    partition: DimensionPartition,
    interval: Interval,
    kappa: float,
    T: float,
) -> float:
    """Return the volume of the domain for any cutoff T > 0."""
    log_lo, log_hi = interval.log_bounds
    ceiling = partition.d * math.log(T)
    upper = min(log_hi, ceiling)
    if log_lo >= upper or kappa == 0:
        return 0.0
    return _volume_coefficient(partition, kappa) * _exponential_moment(
        ceiling,
        partition.k - 1,
        log_lo,
        upper,
    )


def domain_volume(spec: DomainSpec) -> float:
    spec.require_threshold()
    return region_volume(
        spec.partition,
        spec.interval,
        angular_measure(spec.region),
        spec.T,
    )


def volume_polynomial(
    partition: DimensionPartition,
    interval: Interval,
    region: AngularRegion,
) -> Polynomial:
    """Return P with domain_volume(spec) == P(log T) above the threshold."""
    n = partition.k - 1
    d = partition.d
    log_lo, log_hi = interval.log_bounds

    def power_moment(j: int) -> float:
        # integral of s**j * exp(s) over log I
        def antiderivative(s: float) -> float:
            return math.exp(s) * math.fsum(
                (-1) ** (j - i) * math.factorial(j) / math.factorial(i) * s**i
                for i in range(j + 1)
            )

        return antiderivative(log_hi) - antiderivative(log_lo)

    coefficient = _volume_coefficient(partition, angular_measure(region))
    return Polynomial(
        [
            coefficient
            * math.comb(n, m)
            * d**m
            * (-1) ** (n - m)
            * power_moment(n - m)
            for m in range(n + 1)
        ],
    )


@dataclasses.dataclass(frozen=True)
class VarianceResult:
    value: float
    truncation_order: int
    tail_bound: float


def _overlap_profile(interval: Interval, d: int, ratios: np.ndarray) -> np.ndarray:
    """Return Leb(I & x^-d I) / Leb(I) for ratios x in (0, 1]."""
    lo, hi = interval.lo, interval.hi
    return np.clip(hi - lo * ratios ** (-d), 0, None) / (hi - lo)


def variance_series(
    interval: Interval,
    region: AngularRegion,
    partition: DimensionPartition,
    truncation: int = 200,
) -> VarianceResult:
    """Return the limiting variance of the normalised discrepancy.

    The series over pairs (p, q) is summed exactly for q <= truncation.
    The remaining pairs are estimated from the integral of the overlap
    profile, which brackets each inner sum within one unit.
    """
    d = partition.d
    if d < 3:
        raise UnsupportedDimensionError(f"the variance series needs d >= 3, got {d}")
    if truncation < 1:
        raise DomainError(f"truncation must be at least 1, got {truncation}")

    kappa = angular_measure(region)
    if kappa <= 0:
        raise DomainError("the angular region has measure zero")
    factor = 1 + angular_symmetric_overlap(region) / kappa

    rho = (interval.lo / interval.hi) ** (1 / d)
    terms = []
    for q in range(2, truncation + 1):
        p = np.arange(max(1, math.floor(q * rho)), q)
        terms.append(q ** (-d) * math.fsum(_overlap_profile(interval, d, p / q)))
    head = math.fsum(terms)

    profile_integral = (
        interval.hi * (1 - rho) + (interval.lo - rho * interval.hi) / (d - 1)
    ) / interval.length
    zeta_d = float(scipy.special.zeta(d))
    first_tail = float(scipy.special.zeta(d - 1, truncation + 1))
    second_tail = float(scipy.special.zeta(d, truncation + 1))
    tail_estimate = profile_integral * first_tail - second_tail / 2

    return VarianceResult(
        value=factor * (1 + 2 * (head + tail_estimate) / zeta_d),
        truncation_order=truncation,
        tail_bound=factor * second_tail / zeta_d,
    )


@dataclasses.dataclass(frozen=True, eq=False)
class LinearFormsReduction:
    """Parameters of the standard domain equivalent to L^-1(domain).

    ``forms == scale * reflection @ unimodular`` with det(unimodular) = 1.
    """

    scale: float
    unimodular: np.ndarray
    reflection: np.ndarray
    interval: Interval
    region: AngularRegion

    def cutoff(self, T: float) -> float:
        return T / abs(self.scale)

    def reduced_spec(self, partition: DimensionPartition, T: float) -> DomainSpec:
        return DomainSpec(partition, self.interval, self.region, self.cutoff(T))


def reduce_linear_forms(
    forms: np.ndarray,
    interval: Interval,
    region: AngularRegion,
    partition: DimensionPartition,
) -> LinearFormsReduction:
    matrix = np.asarray(forms, dtype=float)
    d = partition.d
    if matrix.shape != (d, d):
        raise DomainError(f"expected a {d}x{d} matrix, got shape {matrix.shape}")
    determinant = float(np.linalg.det(matrix))
    if not math.isfinite(determinant) or np.linalg.matrix_rank(matrix) < d:
        raise DomainError("the linear forms are singular")

    magnitude = abs(determinant) ** (1 / d)
    reflection = np.eye(d)
    if determinant > 0:
        scale = magnitude
    elif d % 2:
        scale = -magnitude
    else:
        # no real scalar has a negative d-th power, reflect the first block
        scale = magnitude
        reflection[0, 0] = -1.0

    unimodular = reflection @ matrix / scale
    return LinearFormsReduction(
        scale=scale,
        unimodular=unimodular,
        reflection=reflection,
        interval=interval.scaled(1 / abs(determinant)),
        region=region.transformed(math.copysign(1, scale) * reflection, partition),
    )


def spiraling_spec(
    dim: int,
    interval: Interval,
    sphere_region: SphereFactor,
    T: float,
) -> DomainSpec:
    """Pairs (x, y) with ||x|| |y| in I, x/||x|| in the region and y > 0."""
    if dim < 2 or sphere_region.dim != dim - 1:
        raise DomainError(f"need dim >= 2 and a factor on the sphere of R^{dim - 1}")
    return DomainSpec(
        DimensionPartition((dim - 1, 1)),
        interval,
        AngularRegion((sphere_region, SignSet(frozenset({1})))),
        T,
    )


def product_of_forms_spec(dim: int, interval: Interval, T: float) -> DomainSpec:
    """Positive points 0 < x_i < T whose coordinate product lies in I."""
    return DomainSpec(
        DimensionPartition((1,) * dim),
        interval,
        AngularRegion(tuple(SignSet(frozenset({1})) for _ in range(dim))),
        T,
    )
