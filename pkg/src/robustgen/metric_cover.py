"""Sample spaces, epsilon-covers, and the disjoint partitions they induce.

Partitions split a space into K cells with total, deterministic membership.
Cover-induced partitions additionally keep any two same-cell points within
distance gamma of each other, which is the property the robustness
certificates rely on.  Cells are 1-indexed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    CoverViolationError,
    EmptyInputError,
    EstimatorUnavailableError,
    OutOfSpaceError,
    ParameterError,
    PartitionTooLargeError,
    UnsupportedSpaceError,
)

EUCLIDEAN = "euclidean"
SUP = "sup"

DEFAULT_MAX_CELLS = 10_000_000

_EDGE_TOL = 1e-9       # membership slack at box faces
_BALL_TOL = 1e-12      # slack in ball-membership comparisons
_BALL_ATTEMPTS = 100   # rejection attempts per probe in ball-difference cells


def _check_metric(metric: str) -> None:
    if metric not in (EUCLIDEAN, SUP):
        raise ParameterError(f"unknown metric {metric!r}; expected 'euclidean' or 'sup'")


def _as_points(z) -> np.ndarray:
    pts = np.asarray(z, dtype=float)
    if pts.ndim == 1:
        pts = pts[None, :]
    if pts.ndim != 2:
        raise ParameterError("points must be a vector or a 2-d array of row vectors")
    return pts


def pair_distance(a: np.ndarray, b: np.ndarray, metric: str) -> np.ndarray:
    """Rowwise distance between two equally shaped batches of points."""
    _check_metric(metric)
    diff = _as_points(a) - _as_points(b)
    if metric == SUP:
        return np.abs(diff).max(axis=1)
    return np.sqrt((diff * diff).sum(axis=1))


def cross_distance(points: np.ndarray, centers: np.ndarray, metric: str) -> np.ndarray:
    """Distance matrix between every point (rows) and every center (columns)."""
    _check_metric(metric)
    diff = _as_points(points)[:, None, :] - _as_points(centers)[None, :, :]
    if metric == SUP:
        return np.abs(diff).max(axis=2)
    return np.sqrt((diff * diff).sum(axis=2))


@dataclass(frozen=True)
class Box:
    """Axis-aligned box with strict per-coordinate bounds lo < hi."""

    lo: tuple
    hi: tuple

    def __post_init__(self):
        lo = tuple(float(v) for v in np.atleast_1d(self.lo))
        hi = tuple(float(v) for v in np.atleast_1d(self.hi))
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        if len(lo) != len(hi) or not lo:
            raise ParameterError("box bounds must be non-empty and equally long")
        if not all(math.isfinite(a) and math.isfinite(b) for a, b in zip(lo, hi)):
            raise UnsupportedSpaceError("box bounds must be finite")
        if any(a >= b for a, b in zip(lo, hi)):
            raise ParameterError("box requires lo_j < hi_j for every coordinate")

    @property
    def dim(self) -> int:
        return len(self.lo)

    def lo_array(self) -> np.ndarray:
        return np.array(self.lo, dtype=float)

    def hi_array(self) -> np.ndarray:
        return np.array(self.hi, dtype=float)

    def contains(self, points, tol: float = _EDGE_TOL) -> np.ndarray:
        pts = _as_points(points)
        lo = self.lo_array()
        hi = self.hi_array()
        return ((pts >= lo - tol) & (pts <= hi + tol)).all(axis=1)

    def clip(self, points) -> np.ndarray:
        return np.clip(_as_points(points), self.lo_array(), self.hi_array())

    def uniform(self, count: int, rng: np.random.Generator) -> np.ndarray:
        lo = self.lo_array()
        hi = self.hi_array()
        return lo + rng.random((count, self.dim)) * (hi - lo)

    def max_norm(self) -> float:
        """Largest euclidean norm over the box (attained at a corner)."""
        extreme = np.maximum(np.abs(self.lo_array()), np.abs(self.hi_array()))
        return float(np.sqrt((extreme * extreme).sum()))


@dataclass(frozen=True, eq=False)
class FiniteSet:
    """Finite, non-empty point set in R^m."""

    points: np.ndarray

    def __post_init__(self):
        pts = _as_points(self.points)
        if pts.shape[0] == 0:
            raise EmptyInputError("finite point sets must be non-empty")
        object.__setattr__(self, "points", pts)

    @property
    def dim(self) -> int:
        return self.points.shape[1]


@dataclass(frozen=True)
class BinaryLabels:
    """Output space {-1, +1}."""


@dataclass(frozen=True)
class Interval:
    """Bounded real output interval [lo, hi]."""

    lo: float
    hi: float

    def __post_init__(self):
        if not (math.isfinite(self.lo) and math.isfinite(self.hi)):
            raise UnsupportedSpaceError("output interval must be bounded")
        if self.lo >= self.hi:
            raise ParameterError("output interval requires lo < hi")


@dataclass(frozen=True, eq=False)
class SampleSpace:
    """Declared sample space: an input region, its metric, optional outputs.

    Supervised samples are row vectors with the label in the last column;
    unsupervised samples are plain input vectors.
    """

    inputs: object                     # Box | FiniteSet
    metric: str = EUCLIDEAN
    outputs: object = None             # BinaryLabels | Interval | None

    def __post_init__(self):
        _check_metric(self.metric)
        if not isinstance(self.inputs, (Box, FiniteSet)):
            raise UnsupportedSpaceError("inputs must be a Box or a FiniteSet")
        if self.outputs is not None and not isinstance(self.outputs, (BinaryLabels, Interval)):
            raise UnsupportedSpaceError("outputs must be BinaryLabels, Interval, or None")

    @property
    def input_dim(self) -> int:
        return self.inputs.dim

    @property
    def point_dim(self) -> int:
        return self.inputs.dim + (0 if self.outputs is None else 1)

    def split(self, Z: np.ndarray):
        Z = _as_points(Z)
        if self.outputs is None:
            return Z, None
        return Z[:, :-1], Z[:, -1]

    def joint_box(self) -> Box:
        """The (x, y) box for interval outputs; the input box otherwise."""
        if self.outputs is None:
            if not isinstance(self.inputs, Box):
                raise UnsupportedSpaceError("joint box requires a box input space")
            return self.inputs
        if not isinstance(self.outputs, Interval):
            raise UnsupportedSpaceError("joint box requires an interval output space")
        if not isinstance(self.inputs, Box):
            raise UnsupportedSpaceError("joint box requires a box input space")
        return Box(self.inputs.lo + (self.outputs.lo,), self.inputs.hi + (self.outputs.hi,))

    def contains(self, Z, tol: float = _EDGE_TOL) -> np.ndarray:
        X, y = self.split(Z)
        ok = self.inputs.contains(X, tol) if isinstance(self.inputs, Box) else np.ones(len(X), bool)
        if self.outputs is None:
            return ok
        if isinstance(self.outputs, BinaryLabels):
            return ok & (np.abs(np.abs(y) - 1.0) <= tol)
        return ok & (y >= self.outputs.lo - tol) & (y <= self.outputs.hi + tol)


class _PartitionBase:
    """Shared scalar helpers; concrete partitions implement the *_many forms."""

    def cell_index(self, z) -> int:
        return int(self.cell_index_many(_as_points(z))[0])

    def sample_in_cell(self, cell: int, count: int, rng: np.random.Generator) -> np.ndarray:
        raise EstimatorUnavailableError(
            f"{type(self).__name__} has no per-cell probe sampler"
        )


@dataclass(frozen=True, eq=False)
class GridPartition(_PartitionBase):
    """Axis-aligned grid over a box; each cell has diameter <= gamma.

    Cells are half-open on their upper faces except along the box boundary,
    where the last cell is closed, so membership is total and deterministic.
    """

    box: Box
    metric: str
    gamma: float
    step: float
    counts: tuple

    @property
    def K(self) -> int:
        return int(np.prod(self.counts))

    @property
    def point_dim(self) -> int:
        return self.box.dim

    def cell_index_many(self, Z) -> np.ndarray:
        pts = _as_points(Z)
        if pts.shape[1] != self.box.dim:
            raise ParameterError(
                f"points have dimension {pts.shape[1]}, partition expects {self.box.dim}"
            )
        inside = self.box.contains(pts)
        if not inside.all():
            bad = int(np.flatnonzero(~inside)[0])
            raise OutOfSpaceError(f"point at row {bad} lies outside the declared box")
        rel = (pts - self.box.lo_array()) / self.step
        idx = np.floor(rel).astype(np.int64)
        np.clip(idx, 0, np.array(self.counts) - 1, out=idx)
        return np.ravel_multi_index(idx.T, self.counts) + 1

    def cell_bounds(self, cell: int):
        """Lower and upper corners of a 1-indexed cell, clipped to the box."""
        if not 1 <= cell <= self.K:
            raise ParameterError(f"cell {cell} out of range 1..{self.K}")
        multi = np.array(np.unravel_index(cell - 1, self.counts), dtype=float)
        lo = self.box.lo_array() + multi * self.step
        hi = np.minimum(lo + self.step, self.box.hi_array())
        return lo, hi

    def sample_in_cell(self, cell: int, count: int, rng: np.random.Generator) -> np.ndarray:
        lo, hi = self.cell_bounds(cell)
        return lo + rng.random((count, self.box.dim)) * (hi - lo)


@dataclass(frozen=True, eq=False)
class CoverPartition(_PartitionBase):
    """Ball-difference cells: cell i is the gamma/2 ball at center i minus
    all earlier balls.  Membership is the first center within gamma/2."""

    centers: np.ndarray
    gamma: float
    metric: str
    space: object                    # Box | FiniteSet
    _members: tuple = field(default=None, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "centers", _as_points(self.centers))
        if isinstance(self.space, FiniteSet):
            idx = self.cell_index_many(self.space.points)
            members = tuple(
                self.space.points[idx == i] for i in range(1, len(self.centers) + 1)
            )
            object.__setattr__(self, "_members", members)

    @property
    def K(self) -> int:
        return len(self.centers)

    @property
    def radius(self) -> float:
        return self.gamma / 2.0

    @property
    def point_dim(self) -> int:
        return self.centers.shape[1]

    def cell_index_many(self, Z) -> np.ndarray:
        pts = _as_points(Z)
        dists = cross_distance(pts, self.centers, self.metric)
        within = dists <= self.radius + _BALL_TOL
        covered = within.any(axis=1)
        if not covered.all():
            bad = int(np.flatnonzero(~covered)[0])
            raise CoverViolationError(
                f"point at row {bad} is covered by no center; the centers are not a"
                f" {self.radius:g}-cover of the space"
            )
        return within.argmax(axis=1) + 1

    def _ball_draw(self, center: np.ndarray, count: int, rng: np.random.Generator) -> np.ndarray:
        dim = self.point_dim
        if self.metric == SUP:
            return center + (rng.random((count, dim)) * 2.0 - 1.0) * self.radius
        direction = rng.standard_normal((count, dim))
        norms = np.sqrt((direction * direction).sum(axis=1, keepdims=True))
        norms[norms == 0] = 1.0
        radii = self.radius * rng.random(count) ** (1.0 / dim)
        return center + direction / norms * radii[:, None]

    def sample_in_cell(self, cell: int, count: int, rng: np.random.Generator) -> np.ndarray:
        if not 1 <= cell <= self.K:
            raise ParameterError(f"cell {cell} out of range 1..{self.K}")
        if isinstance(self.space, FiniteSet):
            members = self._members[cell - 1]
            if len(members) == 0:
                return np.empty((0, self.point_dim))
            return members[rng.integers(0, len(members), size=count)]
        center = self.centers[cell - 1]
        draws = self._ball_draw(center, count * _BALL_ATTEMPTS, rng)
        draws = draws.reshape(count, _BALL_ATTEMPTS, self.point_dim)
        accepted = np.empty((count, self.point_dim))
        kept = 0
        for block in draws:
            ok = self.space.contains(block)
            if cell > 1:
                earlier = cross_distance(block, self.centers[: cell - 1], self.metric)
                ok &= ~(earlier <= self.radius + _BALL_TOL).any(axis=1)
            hits = np.flatnonzero(ok)
            if hits.size:
                accepted[kept] = block[hits[0]]
                kept += 1
        return accepted[:kept]


@dataclass(frozen=True, eq=False)
class ProductPartition(_PartitionBase):
    """Cells are (output cell, input cell) pairs, ordered output-major."""

    base: object                     # partition over the input coordinates
    outputs: object                  # BinaryLabels | Interval
    y_grid: GridPartition = None     # 1-d grid over the interval, when present

    @property
    def n_outputs(self) -> int:
        return 2 if isinstance(self.outputs, BinaryLabels) else self.y_grid.K

    @property
    def K(self) -> int:
        return self.base.K * self.n_outputs

    @property
    def gamma(self):
        if isinstance(self.outputs, BinaryLabels):
            return self.base.gamma
        return max(self.base.gamma, self.y_grid.gamma)

    @property
    def point_dim(self) -> int:
        return self.base.point_dim + 1

    def cell_index_many(self, Z) -> np.ndarray:
        pts = _as_points(Z)
        x, y = pts[:, :-1], pts[:, -1]
        in_idx = self.base.cell_index_many(x) - 1
        if isinstance(self.outputs, BinaryLabels):
            is_neg = np.abs(y + 1.0) <= _EDGE_TOL
            is_pos = np.abs(y - 1.0) <= _EDGE_TOL
            if not (is_neg | is_pos).all():
                bad = int(np.flatnonzero(~(is_neg | is_pos))[0])
                raise OutOfSpaceError(f"label at row {bad} is not in {{-1, +1}}")
            out_idx = is_pos.astype(np.int64)
        else:
            out_idx = self.y_grid.cell_index_many(y[:, None]) - 1
        return out_idx * self.base.K + in_idx + 1

    def sample_in_cell(self, cell: int, count: int, rng: np.random.Generator) -> np.ndarray:
        if not 1 <= cell <= self.K:
            raise ParameterError(f"cell {cell} out of range 1..{self.K}")
        out_idx, in_idx = divmod(cell - 1, self.base.K)
        x = self.base.sample_in_cell(in_idx + 1, count, rng)
        if isinstance(self.outputs, BinaryLabels):
            y = np.full((len(x), 1), -1.0 if out_idx == 0 else 1.0)
        else:
            y = self.y_grid.sample_in_cell(out_idx + 1, len(x), rng)
        return np.hstack([x, y])


def grid_cover(box: Box, gamma: float, metric: str = SUP,
               max_cells: int = DEFAULT_MAX_CELLS) -> GridPartition:
    """Partition a box into grid cells of diameter <= gamma under the metric.

    The cell side is gamma for the sup norm and gamma / sqrt(m) for the
    euclidean norm, so K = prod_j ceil((hi_j - lo_j) / side).
    """
    if not isinstance(box, Box):
        raise UnsupportedSpaceError("grid covers require an axis-aligned box")
    _check_metric(metric)
    if not gamma > 0:
        raise ParameterError("gamma must be positive")
    step = gamma if metric == SUP else gamma / math.sqrt(box.dim)
    widths = box.hi_array() - box.lo_array()
    counts = tuple(
        max(1, int(math.ceil(w / step * (1.0 - 1e-12)))) for w in widths
    )
    total = 1
    for c in counts:
        total *= c
        if total > max_cells:
            raise PartitionTooLargeError(
                f"grid at gamma={gamma:g} needs more than {max_cells} cells"
            )
    return GridPartition(box=box, metric=metric, gamma=float(gamma),
                         step=step, counts=counts)


def greedy_cover(points, radius: float, metric: str = EUCLIDEAN) -> np.ndarray:
    """Farthest-point traversal: feasible (not minimal) radius-cover centers.

    Starts from the first point and repeatedly adds the point farthest from
    the current centers until every point is within the radius of one.
    """
    _check_metric(metric)
    pts = _as_points(points)
    if pts.shape[0] == 0:
        raise EmptyInputError("greedy cover of an empty point set")
    if not radius > 0:
        raise ParameterError("radius must be positive")
    chosen = [0]
    dist = pair_distance(pts, np.broadcast_to(pts[0], pts.shape), metric)
    while dist.max() > radius:
        far = int(dist.argmax())
        chosen.append(far)
        dist = np.minimum(dist, pair_distance(pts, np.broadcast_to(pts[far], pts.shape), metric))
    return pts[chosen]


def partition_from_cover(centers, gamma: float, metric: str, space) -> CoverPartition:
    """Ball-difference partition induced by a gamma/2 cover.

    Cell i is the gamma/2 ball around center i minus all earlier balls, so
    membership is the smallest covering index and same-cell points are at
    distance at most gamma.
    """
    _check_metric(metric)
    if not gamma > 0:
        raise ParameterError("gamma must be positive")
    if not isinstance(space, (Box, FiniteSet)):
        raise UnsupportedSpaceError("cover partitions need a Box or FiniteSet space")
    return CoverPartition(centers=_as_points(centers), gamma=float(gamma),
                          metric=metric, space=space)


def product_partition(input_partition, outputs, gamma_y: float = None) -> ProductPartition:
    """Extend an input partition over the output space.

    Binary labels double the cell count; an interval multiplies it by
    ceil((hi - lo) / gamma_y).
    """
    if isinstance(outputs, BinaryLabels):
        return ProductPartition(base=input_partition, outputs=outputs)
    if isinstance(outputs, Interval):
        if gamma_y is None or not gamma_y > 0:
            raise ParameterError("interval outputs need a positive gamma_y")
        y_grid = grid_cover(Box((outputs.lo,), (outputs.hi,)), gamma_y, SUP)
        return ProductPartition(base=input_partition, outputs=outputs, y_grid=y_grid)
    raise UnsupportedSpaceError("outputs must be BinaryLabels or a bounded Interval")


def cell_index(partition, z) -> int:
    """1-based index of the unique cell containing z."""
    return partition.cell_index(z)
