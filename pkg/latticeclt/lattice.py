"""Lattice bases, reduction, box enumeration and random unimodular lattices."""
from __future__ import annotations

import dataclasses
import fractions
import math
import pathlib
from typing import Iterator
from typing import Sequence

import numpy as np
import scipy.stats

from latticeclt.geometry import DimensionPartition


class LatticeError(ValueError):
    ...


ENUMERATION_MARGIN = 1e-9


@dataclasses.dataclass(frozen=True, eq=False)
class LatticeBasis:
    """A full rank lattice; the rows of ``basis`` are the basis vectors.

    The float entries are taken as exact dyadic rationals: the determinant
    and the lattice points are computed in integer arithmetic and rounded
    once, so a heavily flowed basis keeps every bit of its lattice.
    """

    basis: np.ndarray
    det_abs: float = dataclasses.field(init=False)
    _integers: np.ndarray = dataclasses.field(init=False, repr=False)
    _exponent: int = dataclasses.field(init=False, repr=False)

    def __post_init__(self) -> None:
        basis = np.array(self.basis, dtype=float)
        if basis.ndim != 2 or basis.shape[0] != basis.shape[1] or not basis.size:
            raise LatticeError(
                f"a basis must be a square matrix, got shape {basis.shape}",
            )
        if not np.all(np.isfinite(basis)):
            raise LatticeError("basis entries must be finite")

        integers, exponent = _integer_form(basis)
        determinant = _integer_determinant(integers)
        det_abs = abs(determinant) / (1 << (exponent * len(basis)))
        if det_abs == 0:
            raise LatticeError("basis vectors are linearly dependent")

        basis.setflags(write=False)
        object.__setattr__(self, "basis", basis)
        object.__setattr__(self, "det_abs", det_abs)
        object.__setattr__(self, "_integers", integers)
        object.__setattr__(self, "_exponent", exponent)

    @property
    def dim(self) -> int:
        return self.basis.shape[0]

    @property
    def is_unimodular(self) -> bool:
        return abs(self.det_abs - 1) <= 1e-9

    def points(self, coefficients: np.ndarray) -> np.ndarray:
        """Return the lattice points with the given integer coefficient rows.

        Every coordinate is the correctly rounded value of the exact sum,
        so a lattice point gets the same bits whichever coefficients and
        batch it is computed from.
        """
        coefficients = np.atleast_2d(coefficients)
        if coefficients.dtype != object:
            coefficients = coefficients.astype(np.int64).astype(object)
        if not len(coefficients):
            return np.zeros((0, self.dim))
        exact = coefficients @ self._integers
        return (exact / (1 << self._exponent)).astype(float)

    def approximate_points(self, coefficients: np.ndarray) -> np.ndarray:
        return np.atleast_2d(coefficients).astype(float) @ self.basis


def _integer_form(basis: np.ndarray) -> tuple[np.ndarray, int]:
    """Return integers N and an exponent e with basis == N / 2**e exactly."""
    ratios = [x.as_integer_ratio() for x in basis.flat]
    exponent = max(denominator.bit_length() - 1 for _, denominator in ratios)
    integers = [
        numerator << (exponent - denominator.bit_length() + 1)
        for numerator, denominator in ratios
    ]
    return np.array(integers, dtype=object).reshape(basis.shape), exponent


def _integer_determinant(matrix: np.ndarray) -> int:
    """Fraction free Gaussian elimination."""
    rows = [[int(x) for x in row] for row in matrix]
    n = len(rows)
    sign = 1
    previous = 1
    for k in range(n - 1):
        if rows[k][k] == 0:
            pivot = next((i for i in range(k + 1, n) if rows[i][k]), None)
            if pivot is None:
                return 0
            rows[k], rows[pivot] = rows[pivot], rows[k]
            sign = -sign
        for i in range(k + 1, n):
            for j in range(k + 1, n):
                rows[i][j] = (
                    rows[i][j] * rows[k][k] - rows[i][k] * rows[k][j]
                ) // previous
        previous = rows[k][k]
    return sign * rows[-1][-1]


@dataclasses.dataclass(frozen=True)
class BoxConstraint:
    """Closed coordinate bounds lo_i <= z_i <= hi_i."""

    lo: tuple[float, ...]
    hi: tuple[float, ...]

    def __post_init__(self) -> None:
        lo = tuple(float(x) for x in self.lo)
        hi = tuple(float(x) for x in self.hi)
        if len(lo) != len(hi):
            raise LatticeError("box bounds have different lengths")
        if not all(
            math.isfinite(a) and math.isfinite(b) and a <= b for a, b in zip(lo, hi)
        ):
            raise LatticeError(f"invalid box bounds {lo} .. {hi}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def symmetric(cls, radii: Sequence[float]) -> BoxConstraint:
        return cls(tuple(-r for r in radii), tuple(radii))

    @property
    def dim(self) -> int:
        return len(self.lo)

    def contains(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(points)
        return np.all((points >= self.lo) & (points <= self.hi), axis=1)

    def scaled(self, factors: np.ndarray) -> BoxConstraint:
        """Return the image of the box under a positive diagonal scaling."""
        return BoxConstraint(
            tuple(np.asarray(self.lo) * factors),
            tuple(np.asarray(self.hi) * factors),
        )


def flow_scales(u: np.ndarray, partition: DimensionPartition) -> np.ndarray:
    """Return the diagonal of a(u) for each row of the (n, k-1) array u."""
    dims = np.asarray(partition.dims)
    u = np.asarray(u, dtype=float)
    if u.ndim < 2:
        u = u.reshape(1, partition.k - 1)
    last = -(u @ dims[:-1]) / dims[-1]
    return np.repeat(np.exp(np.column_stack([u, last])), dims, axis=1)


@dataclasses.dataclass(frozen=True)
class DiagonalFlow:
    """The determinant one scaling a(u).

    Block j < k is multiplied by exp(u_j) and the last block by
    exp(-sum_j d_j u_j / d_k).
    """

    u: tuple[float, ...]
    partition: DimensionPartition

    def __post_init__(self) -> None:
        u = tuple(float(x) for x in self.u)
        if len(u) != self.partition.k - 1:
            raise LatticeError(
                f"flow parameter needs {self.partition.k - 1} entries, got {len(u)}",
            )
        object.__setattr__(self, "u", u)

    def scales(self) -> np.ndarray:
        return flow_scales(np.asarray(self.u), self.partition)[0]

    def apply_point(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points) * self.scales()

    def inverse(self) -> DiagonalFlow:
        return DiagonalFlow(tuple(-x for x in self.u), self.partition)

    def compose(self, other: DiagonalFlow) -> DiagonalFlow:
        if other.partition != self.partition:
            raise LatticeError("cannot compose flows of different partitions")
        return DiagonalFlow(
            tuple(a + b for a, b in zip(self.u, other.u)),
            self.partition,
        )


def apply_flow(flow: DiagonalFlow, basis: LatticeBasis) -> LatticeBasis:
    if flow.partition.d != basis.dim:
        raise LatticeError(
            f"flow acts on dimension {flow.partition.d}, basis has {basis.dim}",
        )
    return LatticeBasis(basis.basis * flow.scales())


def _gram_schmidt(rows: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Return the Gram-Schmidt coefficients mu and squared lengths."""
    _, r = np.linalg.qr(rows.T)
    diagonal = np.diag(r)
    mu = (r / diagonal[:, None]).T
    return mu, diagonal**2


def lll_transform(
    basis: LatticeBasis,
    delta: float = 0.99,
    check_precision: bool = True,
) -> tuple[LatticeBasis, np.ndarray]:
    """LLL-reduce ``basis``.

    Returns the reduced basis and the unimodular integer matrix U with
    reduced == U @ basis. The working rows are rebuilt exactly from U after
    every swap, so rounding does not pile up on skewed input. With
    ``check_precision`` the determinant of the result is compared with the
    input's.
    """
    if not (0.25 < delta < 1):
        raise LatticeError(f"delta must lie in (0.25, 1), got {delta!r}")

    n = basis.dim
    rows = basis.basis.copy()
    transform = np.eye(n, dtype=np.int64)
    mu, lengths = _gram_schmidt(rows)

    k = 1
    while k < n:
        for j in range(k - 1, -1, -1):
            q = int(np.rint(mu[k, j]))
            if q:
                rows[k] -= q * rows[j]
                transform[k] -= q * transform[j]
                mu[k, : j + 1] -= q * mu[j, : j + 1]

        if lengths[k] >= (delta - mu[k, k - 1] ** 2) * lengths[k - 1]:
            k += 1
        else:
            transform[[k - 1, k]] = transform[[k, k - 1]]
            rows = basis.points(transform)
            mu, lengths = _gram_schmidt(rows)
            k = max(k - 1, 1)

    reduced = LatticeBasis(basis.points(transform))
    drift = abs(reduced.det_abs - basis.det_abs)
    if check_precision and drift > 1e-9 * max(1.0, basis.det_abs):
        raise LatticeError("reduction lost precision; the basis is nearly degenerate")
    return reduced, transform


def lll_reduce(basis: LatticeBasis, delta: float = 0.99) -> LatticeBasis:
    reduced, _ = lll_transform(basis, delta)
    return reduced


def _exactly_inside(
    coefficients: np.ndarray,
    basis: np.ndarray,
    box: BoxConstraint,
) -> bool:
    exact_basis = [[fractions.Fraction(float(x)) for x in row] for row in basis]
    for j, (lo, hi) in enumerate(zip(box.lo, box.hi)):
        value = sum(
            int(m) * exact_basis[i][j] for i, m in enumerate(coefficients) if m
        )
        if not fractions.Fraction(lo) <= value <= fractions.Fraction(hi):
            return False
    return True


def enumerate_coefficients(
    basis: LatticeBasis,
    box: BoxConstraint,
    exclude_origin: bool = True,
) -> np.ndarray:
    """Return the integer coefficient rows m with m @ basis inside ``box``.

    The box is mapped onto the unit cube and searched one coordinate of the
    triangular form per level. A level keeps a value only while the partial
    point, projected onto the span of the Gram-Schmidt directions fixed so
    far, stays inside the projection of the cube coordinate by coordinate;
    at the innermost level that projection is the cube itself. The
    innermost level is vectorised.
    """
    d = basis.dim
    if box.dim != d:
        raise LatticeError(f"box has dimension {box.dim}, basis has {d}")

    lo, hi = np.asarray(box.lo), np.asarray(box.hi)
    slack = ENUMERATION_MARGIN * np.maximum(1.0, np.maximum(np.abs(lo), np.abs(hi)))
    center = (lo + hi) / 2
    half_width = (hi - lo) / 2 + slack

    q, r = np.linalg.qr((basis.basis / half_width).T)
    target = q.T @ (center / half_width)

    blocks = [
        block[_box_filter(block, basis, box, slack)]
        for block in _search(q, r, target)
    ]
    coefficients = (
        np.concatenate(blocks) if blocks else np.zeros((0, d), dtype=np.int64)
    )
    if exclude_origin:
        coefficients = coefficients[np.any(coefficients != 0, axis=1)]
    return coefficients


def _projected_cube_bounds(q: np.ndarray) -> np.ndarray:
    """Row i bounds |P_i w| coordinatewise for w in the cube [-1, 1]^d.

    P_i projects onto the span of the columns q_i, ..., q_{d-1}.
    """
    d = q.shape[1]
    bounds = np.empty((d, d))
    for i in range(d):
        tail = q[:, i:]
        bounds[i] = np.abs(tail @ tail.T).sum(axis=1)
    return bounds * (1 + ENUMERATION_MARGIN) + ENUMERATION_MARGIN


def _search(
    q: np.ndarray,
    r: np.ndarray,
    target: np.ndarray,
) -> Iterator[np.ndarray]:
    d = len(target)
    bounds = _projected_cube_bounds(q)
    radius = math.sqrt(d * (1 + ENUMERATION_MARGIN))
    current = np.zeros(d, dtype=np.int64)

    def interval(i: int, partial: np.ndarray) -> tuple[float, float]:
        # values y of the i-th triangular coordinate that keep
        # |partial + y q_i| <= bounds[i] in every coordinate
        column = q[:, i]
        active = np.abs(column) > 1e-12
        if np.any(np.abs(partial[~active]) > bounds[i, ~active]):
            return math.inf, -math.inf
        first = (-bounds[i, active] - partial[active]) / column[active]
        last = (bounds[i, active] - partial[active]) / column[active]
        return (
            max(float(np.minimum(first, last).max()), -radius),
            min(float(np.maximum(first, last).min()), radius),
        )

    def level(i: int, partial: np.ndarray) -> Iterator[np.ndarray]:
        y_lo, y_hi = interval(i, partial)
        if y_lo > y_hi:
            return
        offset = float(r[i, i + 1 :] @ current[i + 1 :]) - target[i]
        ends = sorted(((y_lo - offset) / r[i, i], (y_hi - offset) / r[i, i]))
        first, last = math.ceil(ends[0]), math.floor(ends[1])
        if first > last:
            return

        if i == 0:
            block = np.tile(current, (last - first + 1, 1))
            block[:, 0] = np.arange(first, last + 1)
            yield block
            return

        for value in range(first, last + 1):
            current[i] = value
            y = r[i, i] * value + offset
            yield from level(i - 1, partial + y * q[:, i])
        current[i] = 0

    yield from level(d - 1, np.zeros(d))


def _box_filter(
    coefficients: np.ndarray,
    basis: LatticeBasis,
    box: BoxConstraint,
    slack: np.ndarray,
) -> np.ndarray:
    points = basis.approximate_points(coefficients)
    lo, hi = np.asarray(box.lo), np.asarray(box.hi)
    surely_in = np.all((points >= lo + slack) & (points <= hi - slack), axis=1)
    maybe_in = np.all((points >= lo - slack) & (points <= hi + slack), axis=1)

    keep = surely_in.copy()
    for index in np.flatnonzero(maybe_in & ~surely_in):
        keep[index] = _exactly_inside(coefficients[index], basis.basis, box)
    return keep


def enumerate_in_box(
    basis: LatticeBasis,
    box: BoxConstraint,
    exclude_origin: bool = True,
) -> np.ndarray:
    """Return the lattice points inside the closed box, one per row."""
    return basis.points(enumerate_coefficients(basis, box, exclude_origin))


def is_prime(n: int) -> bool:
    if n < 2:
        return False
    if n % 2 == 0:
        return n == 2
    return all(n % factor for factor in range(3, math.isqrt(n) + 1, 2))


def hecke_basis(functional: np.ndarray, p: int) -> np.ndarray:
    """Return an integer basis of {x in Z^d : functional . x = 0 mod p}.

    ``functional`` must be normalised so its first nonzero entry is 1.
    """
    d = len(functional)
    pivot = int(np.flatnonzero(functional)[0])
    rows = np.eye(d, dtype=np.int64)
    for j in range(d):
        if j != pivot:
            rows[j, pivot] = (-int(functional[j])) % p
    rows[pivot, pivot] = p
    return rows


def hecke_sample(
    d: int,
    p: int,
    rng: np.random.Generator,
    rotate: bool = False,
) -> LatticeBasis:
    """Return a random index-p sublattice of Z^d rescaled to covolume one.

    Sublattices containing pZ^d correspond to points of projective space
    over F_p; the functional is drawn uniformly from that space. With
    ``rotate`` the lattice is also turned by a Haar random rotation, which
    keeps the invariant measure and moves the sample off the coordinate
    grid that every unrotated sublattice lies on.
    """
    if d < 2:
        raise LatticeError(f"Hecke sampling needs d >= 2, got {d}")
    if not is_prime(p):
        raise LatticeError(f"{p} is not prime")

    while True:
        functional = rng.integers(0, p, size=d)
        if functional.any():
            break
    pivot = int(np.flatnonzero(functional)[0])
    functional = functional * pow(int(functional[pivot]), -1, p) % p

    rows = hecke_basis(functional, p).astype(float) * p ** (-1 / d)
    if rotate:
        rotation = scipy.stats.special_ortho_group.rvs(d, random_state=rng)
        rows = rows @ rotation.T
    return lll_reduce(LatticeBasis(rows))


class ModularDomainSampler:
    """Exact sampler of unimodular planar lattices.

    Draws a point of the standard fundamental domain of the modular group
    by rejection from the strip |x| <= 1/2, y >= sqrt(3)/2 under the
    hyperbolic measure, then rotates the lattice uniformly.
    """

    def __init__(self) -> None:
        self.proposals = 0
        self.accepted = 0

    @property
    def acceptance_rate(self) -> float:
        return self.accepted / self.proposals if self.proposals else math.nan

    def __call__(self, rng: np.random.Generator) -> LatticeBasis:
        floor = math.sqrt(3) / 2
        while True:
            self.proposals += 1
            x = rng.uniform(-0.5, 0.5)
            # y has density proportional to y^-2 on [floor, inf)
            y = floor / (1.0 - rng.random())
            if x * x + y * y >= 1:
                self.accepted += 1
                break

        scale = 1 / math.sqrt(y)
        rows = np.array([[scale, 0.0], [x * scale, y * scale]])
        angle = rng.uniform(0, 2 * math.pi)
        rotation = np.array(
            [[math.cos(angle), -math.sin(angle)], [math.sin(angle), math.cos(angle)]],
        )
        return LatticeBasis(rows @ rotation.T)


def exact_sample_d2(
    rng: np.random.Generator,
    sampler: ModularDomainSampler | None = None,
) -> LatticeBasis:
    if sampler is None:
        sampler = ModularDomainSampler()
    return sampler(rng)


def gram_schmidt_lengths(basis: LatticeBasis) -> np.ndarray:
    _, lengths = _gram_schmidt(basis.basis)
    return np.sqrt(lengths)


def alpha_proxy(basis: LatticeBasis) -> float:
    """Return max over m of 1 / (|b*_1| ... |b*_m|) for an LLL basis.

    This is within a factor 2^(d(d-1)/4) of the maximal inverse covolume
    over rational subspaces.
    """
    lengths = gram_schmidt_lengths(lll_reduce(basis))
    return float(np.max(1 / np.cumprod(lengths)))


def gauss_reduce(basis: LatticeBasis) -> LatticeBasis:
    """Lagrange-Gauss reduction of a planar basis."""
    if basis.dim != 2:
        raise LatticeError(f"Gauss reduction needs a planar basis, got d={basis.dim}")
    u, v = basis.basis[0].copy(), basis.basis[1].copy()
    if u @ u > v @ v:
        u, v = v, u
    while True:
        v = v - np.rint((u @ v) / (u @ u)) * u
        if v @ v >= u @ u:
            break
        u, v = v, u
    return LatticeBasis(np.array([u, v]))


def shortest_vector_length(basis: LatticeBasis) -> float:
    return float(np.linalg.norm(gauss_reduce(basis).basis[0]))


def alpha_exact_d2(basis: LatticeBasis) -> float:
    """Return max(1, 1/lambda_1) for a unimodular planar lattice."""
    return max(1.0, 1 / shortest_vector_length(basis))


def write_lattice(path: pathlib.Path, basis: LatticeBasis) -> None:
    lines = [str(basis.dim)]
    lines.extend(" ".join(repr(float(x)) for x in row) for row in basis.basis)
    pathlib.Path(path).write_text("\n".join(lines) + "\n")


def read_lattice(path: pathlib.Path) -> LatticeBasis:
    lines = [
        line.strip()
        for line in pathlib.Path(path).read_text().splitlines()
        if line.strip()
    ]
    try:
        d = int(lines[0])
        rows = [[float(x) for x in line.split()] for line in lines[1:]]
    except (IndexError, ValueError) as exception:
        raise LatticeError(f"{path}: malformed lattice file: {exception}")
    if len(rows) != d or any(len(row) != d for row in rows):
        raise LatticeError(f"{path}: expected {d} rows of {d} numbers")
    return LatticeBasis(np.array(rows))
