"""Exact tessellation of the domain by flowed copies of two tiles.

In the coordinates w = tau_T(s)^-1 (u - v_T) the domain becomes the
simplex S(N) = {w < 0, sum(w) > -N}, which is the disjoint union of
integer translates of the tiles S_1 = {w < 0, sum(w) > -1} and
S_2 = {-1 <= w < 0, sum(w) <= -1}.
"""
from __future__ import annotations

import dataclasses
import itertools
import math

import numpy as np

from latticeclt.geometry import DomainError
from latticeclt.geometry import DomainSpec
from latticeclt.geometry import forward_coordinates
from latticeclt.geometry import inverse_coordinates
from latticeclt.geometry import membership_mask
from latticeclt.lattice import flow_scales


class TilingError(DomainError):
    ...


TILE_EXCLUSION = 1e-9
MAX_TILED_BLOCKS = 3


def in_simplex(w: np.ndarray, N: float) -> np.ndarray:
    return np.all(w < 0, axis=-1) & (w.sum(axis=-1) > -N)


def in_tile(w: np.ndarray, tile: int) -> np.ndarray:
    if tile == 1:
        return in_simplex(w, 1)
    return np.all((w >= -1) & (w < 0), axis=-1) & (w.sum(axis=-1) <= -1)


def _fits(n: tuple[int, ...], tile: int, N: int, k: int) -> bool:
    """Return whether the relative interior of S_tile - n lies in S(N)."""
    total = sum(n)
    if tile == 1:
        return -1 - total >= -N
    if k == 1:
        return False
    if k == 2:
        # S_2 is the single point -1, its own relative interior
        return -1 - total > -N
    return -(k - 1) - total >= -N


@dataclasses.dataclass(frozen=True, eq=False)
class TilingSpec:
    spec: DomainSpec
    N: int
    translates1: tuple[tuple[int, ...], ...]
    translates2: tuple[tuple[int, ...], ...]

    @property
    def partition(self):
        return self.spec.partition

    @property
    def interval(self):
        return self.spec.interval

    @property
    def log_T(self) -> float:
        return self.spec.log_T

    @property
    def vT(self) -> np.ndarray:
        return np.full(self.partition.k - 1, self.log_T)

    def translates(self, tile: int) -> tuple[tuple[int, ...], ...]:
        return self.translates1 if tile == 1 else self.translates2

    def delta(self, s: np.ndarray) -> np.ndarray:
        """Diagonal of delta_T(s) for each s, shape (..., k-1)."""
        dims = np.asarray(self.partition.dims[:-1])
        headroom = self.partition.d * self.log_T - np.asarray(s, dtype=float)
        return headroom[..., None] / dims

    def tau(self, s: np.ndarray) -> np.ndarray:
        return self.delta(s) / self.N

    @property
    def tau_infinity(self) -> np.ndarray:
        return self.partition.d / np.asarray(self.partition.dims[:-1], dtype=float)

    def beta(self, u: np.ndarray, s: np.ndarray) -> np.ndarray:
        return self.tau(s) * np.asarray(u, dtype=float) - self.vT

    def beta_tilde(self, u: np.ndarray) -> np.ndarray:
        return self.tau_infinity * np.asarray(u, dtype=float) - self.vT

    def simplex_coordinates(self, u: np.ndarray, s: np.ndarray) -> np.ndarray:
        """Return w = tau_T(s)^-1 (u - v_T)."""
        return (np.asarray(u) - self.vT) / self.tau(s)


def tiling_build(spec: DomainSpec) -> TilingSpec:
    k = spec.partition.k
    if k > MAX_TILED_BLOCKS:
        raise TilingError(
            f"the two-tile tessellation covers at most {MAX_TILED_BLOCKS} blocks, "
            f"got {k}",
        )
    spec.require_threshold()
    N = math.floor(spec.log_T)
    if N < 1:
        raise TilingError(f"need floor(log T) >= 1, got T={spec.T!r}")

    candidates = list(itertools.product(range(N + 1), repeat=k - 1))
    return TilingSpec(
        spec=spec,
        N=N,
        translates1=tuple(n for n in candidates if _fits(n, 1, N, k)),
        translates2=tuple(n for n in candidates if _fits(n, 2, N, k)),
    )


def _positive_rows(points: np.ndarray, spec: DomainSpec) -> np.ndarray:
    norms = np.stack(
        [np.linalg.norm(block, axis=1) for block in spec.partition.split(points)],
        axis=1,
    )
    return np.all(norms > 0, axis=1)


def tile_sums(points: np.ndarray, tiling: TilingSpec) -> np.ndarray:
    """Evaluate the sum of flowed tile indicators at each row of ``points``.

    For every translate n of tile i the point is moved by a(v) with
    v = beta_T(n, s(z)) and tested against the tile in the moved point's
    own coordinates.
    """
    spec = tiling.spec
    partition = spec.partition
    points = np.atleast_2d(np.asarray(points, dtype=float))
    total = np.zeros(len(points), dtype=np.int64)

    positive = _positive_rows(points, spec)
    if not positive.any():
        return total
    rows = points[positive]
    _, s, xi = forward_coordinates(rows, partition)
    log_lo, log_hi = spec.interval.log_bounds
    admissible = (s > log_lo) & (s < log_hi) & spec.region.contains(xi)

    sums = np.zeros(len(rows), dtype=np.int64)
    for tile in (1, 2):
        for n in tiling.translates(tile):
            v = tiling.beta(np.asarray(n), s)
            moved = rows * flow_scales(v, partition)
            moved_u, moved_s, _ = forward_coordinates(moved, partition)
            w = moved_u / tiling.tau(moved_s)
            sums += admissible & in_tile(w, tile)

    total[positive] = sums
    return total


def tile_boundary_distance(points: np.ndarray, tiling: TilingSpec) -> np.ndarray:
    """Distance of each row to the faces where the identity is undecidable.

    Faces are the integer hyperplanes w_j in Z and sum(w) in Z of the
    simplex coordinates, the ends of log I and the angular boundary.
    """
    spec = tiling.spec
    partition = spec.partition
    points = np.atleast_2d(np.asarray(points, dtype=float))
    distance = np.zeros(len(points))

    positive = _positive_rows(points, spec)
    if not positive.any():
        return distance
    u, s, xi = forward_coordinates(points[positive], partition)
    w = tiling.simplex_coordinates(u, s)

    log_lo, log_hi = spec.interval.log_bounds
    candidates = [
        np.abs(s - log_lo),
        np.abs(s - log_hi),
        spec.region.boundary_margin(xi),
    ]
    if w.shape[1]:
        total = w.sum(axis=1)
        candidates.append(np.min(np.abs(w - np.rint(w)), axis=1))
        candidates.append(np.abs(total - np.rint(total)))
    distance[positive] = np.minimum.reduce(candidates)
    return distance


def tiling_identity_eval(
    z: np.ndarray,
    spec: DomainSpec,
    tiling: TilingSpec | None = None,
) -> tuple[int, int]:
    """Return (domain indicator, tile sum) at the point z."""
    if tiling is None:
        tiling = tiling_build(spec)
    lhs = int(membership_mask(z, spec)[0])
    rhs = int(tile_sums(z, tiling)[0])
    return lhs, rhs


@dataclasses.dataclass(frozen=True)
class TilingCheckReport:
    evaluated: int
    skipped: int
    inside: int
    mismatches: int

    def passed(self) -> bool:
        return self.mismatches == 0


def _random_directions(
    rng: np.random.Generator,
    n: int,
    dim: int,
) -> np.ndarray:
    if dim == 1:
        return rng.choice([-1.0, 1.0], size=(n, 1))
    directions = rng.normal(size=(n, dim))
    return directions / np.linalg.norm(directions, axis=1, keepdims=True)


def tiling_check(
    spec: DomainSpec,
    n: int,
    rng: np.random.Generator,
) -> TilingCheckReport:
    """Compare both sides of the tiling identity at random points.

    Points are drawn around the domain in (u, s, xi) coordinates so that
    roughly half of them fall inside it; points within TILE_EXCLUSION of
    a face are skipped.
    """
    tiling = tiling_build(spec)
    partition = spec.partition
    log_lo, log_hi = spec.interval.log_bounds
    ceiling = partition.d * spec.log_T

    s = rng.uniform(log_lo - 0.5, min(log_hi + 0.5, (log_hi + ceiling) / 2), size=n)
    w = rng.uniform(-tiling.N - 0.5, 0.5, size=(n, partition.k - 1))
    u = tiling.tau(s) * w + tiling.vT
    xi = [_random_directions(rng, n, dim) for dim in partition.dims]
    points = inverse_coordinates(u, s, xi, partition)

    lhs = membership_mask(points, spec).astype(np.int64)
    rhs = tile_sums(points, tiling)
    keep = tile_boundary_distance(points, tiling) >= TILE_EXCLUSION

    return TilingCheckReport(
        evaluated=int(keep.sum()),
        skipped=int((~keep).sum()),
        inside=int(lhs[keep].sum()),
        mismatches=int(np.sum(keep & (lhs != rhs))),
    )
