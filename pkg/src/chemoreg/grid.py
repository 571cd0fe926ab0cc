"""Uniform periodic grids, gridded fields and the cube/cylinder geometry.

Every diagnostic in the package slices data through the objects defined here:
a :class:`Domain` is the periodic box ``[-L, L)^N``, a :class:`ScalarField` is
one snapshot of cell values, a :class:`FieldSeries` is a time-ordered list of
snapshots, and :class:`Cube` / :class:`IntrinsicCylinder` describe the
space-time regions ``K_R(x0) x (t0 - theta R^2, t0]``.

Cell membership uses cell centres, so measures are counting measures times
``h^N``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

__all__ = [
    "Domain",
    "ScalarField",
    "FieldSeries",
    "Cube",
    "IntrinsicCylinder",
    "make_domain",
    "cube_axis_indices",
    "cube_mask",
    "cube_cells",
    "cube_measure",
    "cylinder_slices",
    "cylinder_window",
    "window_weights",
    "time_integral",
]

# relative slack used when comparing coordinates against cube faces and times
# against window edges; keeps exact-arithmetic cases (faces on cell centres,
# t0 on a snapshot) stable under round-off
_REL_TOL = 1e-9


@dataclass(frozen=True)
class Domain:
    """Periodic box ``[-extent, extent)^dim`` split into ``cells_per_dim^dim`` cells."""

    dim: int
    extent: float
    cells_per_dim: int

    @property
    def spacing(self) -> float:
        return 2.0 * self.extent / self.cells_per_dim

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.cells_per_dim,) * self.dim

    @property
    def size(self) -> int:
        return self.cells_per_dim**self.dim

    @property
    def cell_volume(self) -> float:
        return self.spacing**self.dim

    @property
    def volume(self) -> float:
        return (2.0 * self.extent) ** self.dim

    def axis_centers(self) -> np.ndarray:
        """Cell-centre coordinates along one axis."""
        h = self.spacing
        return -self.extent + h * (np.arange(self.cells_per_dim) + 0.5)

    def centers(self) -> list[np.ndarray]:
        """Broadcastable coordinate arrays, one per axis (``np.meshgrid`` with ``indexing='ij'``)."""
        x = self.axis_centers()
        return list(np.meshgrid(*([x] * self.dim), indexing="ij"))

    def radius_squared(self, center: Sequence[float] | float = 0.0) -> np.ndarray:
        """Squared periodic-minimal Euclidean distance from ``center`` to every cell centre."""
        c = _as_point(center, self.dim)
        r2 = np.zeros(self.shape)
        for axis, xa in enumerate(self.centers()):
            r2 += self.periodic_offset(xa - c[axis]) ** 2
        return r2

    def periodic_offset(self, d: np.ndarray | float) -> np.ndarray:
        """Wrap coordinate differences into ``[-L, L)``."""
        two_l = 2.0 * self.extent
        return np.mod(np.asarray(d, dtype=float) + self.extent, two_l) - self.extent


@dataclass(frozen=True)
class ScalarField:
    domain: Domain
    values: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.size != self.domain.size:
            raise ValueError(
                f"field has {values.size} values, domain needs {self.domain.size}"
            )
        values = values.reshape(self.domain.shape)
        if not np.all(np.isfinite(values)):
            raise ValueError("field values must be finite")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def flat(self) -> np.ndarray:
        """Row-major flat view of the values."""
        return self.values.reshape(-1)

    def integral(self) -> float:
        return float(self.values.sum() * self.domain.cell_volume)


@dataclass
class FieldSeries:
    """Time-ordered snapshots sharing one domain, plus the accepted step sizes."""

    snapshots: list[ScalarField]
    dt_history: list[float] = field(default_factory=list)

    def __post_init__(self):
        if not self.snapshots:
            raise ValueError("a series needs at least one snapshot")
        dom = self.snapshots[0].domain
        times = [s.time for s in self.snapshots]
        if any(s.domain != dom for s in self.snapshots):
            raise ValueError("all snapshots must share one domain")
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("snapshot times must be strictly increasing")

    @property
    def domain(self) -> Domain:
        return self.snapshots[0].domain

    @property
    def times(self) -> np.ndarray:
        return np.array([s.time for s in self.snapshots])

    def stacked(self) -> np.ndarray:
        """Array of shape ``(n_snapshots, *domain.shape)``."""
        return np.stack([s.values for s in self.snapshots])

    def __len__(self) -> int:
        return len(self.snapshots)

    @classmethod
    def from_arrays(cls, domain: Domain, times, values) -> "FieldSeries":
        return cls([ScalarField(domain, v, float(t)) for t, v in zip(times, values)])


@dataclass(frozen=True)
class Cube:
    """``K_R(x0)``: all points within sup-distance ``radius`` of ``center`` (edge ``2R``)."""

    center: tuple[float, ...]
    radius: float

    def __post_init__(self):
        c = self.center
        if np.isscalar(c):
            c = (float(c),)
        object.__setattr__(self, "center", tuple(float(x) for x in c))
        if not self.radius > 0:
            raise ValueError("cube radius must be positive")

    @property
    def edge(self) -> float:
        return 2.0 * self.radius

    def scaled(self, radius: float) -> "Cube":
        return Cube(self.center, radius)


@dataclass(frozen=True)
class IntrinsicCylinder:
    """``K_R(x0) x (t_end - theta R^2, t_end]``."""

    cube: Cube
    t_end: float
    theta: float

    def __post_init__(self):
        if not self.theta > 0:
            raise ValueError("theta must be positive")

    @property
    def radius(self) -> float:
        return self.cube.radius

    @property
    def duration(self) -> float:
        return self.theta * self.cube.radius**2

    @property
    def t_start(self) -> float:
        return self.t_end - self.duration

    def with_radius(self, radius: float, theta: float | None = None) -> "IntrinsicCylinder":
        """Same vertex and centre, new radius (and optionally new theta)."""
        return IntrinsicCylinder(self.cube.scaled(radius), self.t_end, self.theta if theta is None else theta)


def make_domain(dim: int, extent: float, cells_per_dim: int) -> Domain:
    """Validated constructor for :class:`Domain`."""
    if int(dim) != dim or dim not in (1, 2, 3):
        raise ValueError(f"dim must be 1, 2 or 3, got {dim}")
    if int(cells_per_dim) != cells_per_dim or cells_per_dim < 8 or cells_per_dim % 2:
        raise ValueError(f"cells_per_dim must be an even integer >= 8, got {cells_per_dim}")
    if not extent > 0:
        raise ValueError("extent must be positive")
    return Domain(int(dim), float(extent), int(cells_per_dim))


def _as_point(center, dim: int) -> np.ndarray:
    c = np.atleast_1d(np.asarray(center, dtype=float))
    if c.size == 1 and dim > 1:
        c = np.full(dim, c[0])
    if c.size != dim:
        raise ValueError(f"point has {c.size} coordinates, domain is {dim}-dimensional")
    return c


def cube_axis_indices(domain: Domain, cube: Cube) -> list[np.ndarray]:
    """Per-axis cell indices inside ``cube``, ordered left to right (periodic wrap)."""
    if cube.radius > domain.extent * (1 + _REL_TOL):
        raise ValueError(f"cube radius {cube.radius} exceeds domain extent {domain.extent}")
    c = _as_point(cube.center, domain.dim)
    x = domain.axis_centers()
    tol = _REL_TOL * domain.spacing
    out = []
    for axis in range(domain.dim):
        d = domain.periodic_offset(x - c[axis])
        inside = (d >= -cube.radius - tol) & (d < cube.radius - tol)
        idx = np.flatnonzero(inside)
        out.append(idx[np.argsort(d[idx], kind="stable")])
    return out


def cube_mask(domain: Domain, cube: Cube) -> np.ndarray:
    """Boolean array of ``domain.shape``; True for cells whose centre lies in ``cube``."""
    mask = np.zeros(domain.shape, dtype=bool)
    mask[np.ix_(*cube_axis_indices(domain, cube))] = True
    return mask


def cube_cells(domain: Domain, cube: Cube) -> np.ndarray:
    """Sorted flat (row-major) indices of the cells inside ``cube``."""
    return np.flatnonzero(cube_mask(domain, cube).reshape(-1))


def cube_measure(domain: Domain, cube: Cube) -> float:
    return float(np.prod([len(i) for i in cube_axis_indices(domain, cube)]) * domain.cell_volume)


def _window_index(series: FieldSeries, t_lo: float, t_hi: float) -> np.ndarray:
    times = series.times
    scale = max(1.0, abs(t_hi), abs(t_lo))
    tol = _REL_TOL * scale
    return np.flatnonzero((times > t_lo + tol) & (times <= t_hi + tol))


def cylinder_slices(series: FieldSeries, cylinder: IntrinsicCylinder) -> list[tuple[float, ScalarField]]:
    """Snapshots with time in ``(t0 - theta R^2, t0]`` restricted to the cube.

    Each restricted field lives on a sub-domain with the cube's cell count per
    axis (cell order follows the periodic unwrapping around the centre).
    """
    idx = _window_index(series, cylinder.t_start, cylinder.t_end)
    if idx.size == 0:
        raise ValueError(
            f"no snapshot in ({cylinder.t_start:.6g}, {cylinder.t_end:.6g}]; output cadence too coarse"
        )
    dom = series.domain
    axes = cube_axis_indices(dom, cylinder.cube)
    counts = {len(a) for a in axes}
    sub = Domain(dom.dim, 0.5 * dom.spacing * len(axes[0]), len(axes[0])) if len(counts) == 1 else None
    out = []
    for i in idx:
        snap = series.snapshots[i]
        block = snap.values[np.ix_(*axes)]
        if sub is None:
            raise ValueError("cube restriction is not a regular block")
        out.append((snap.time, ScalarField(sub, block, snap.time)))
    return out


def cylinder_window(series: FieldSeries, cylinder: IntrinsicCylinder) -> tuple[np.ndarray, np.ndarray]:
    """Times and full-domain values of the snapshots inside the cylinder's time window.

    Diagnostics work on full fields (so periodic differences are available at
    the cube faces) and restrict with :func:`cube_mask` afterwards.
    """
    idx = _window_index(series, cylinder.t_start, cylinder.t_end)
    if idx.size == 0:
        raise ValueError(
            f"no snapshot in ({cylinder.t_start:.6g}, {cylinder.t_end:.6g}]; output cadence too coarse"
        )
    return series.times[idx], np.stack([series.snapshots[i].values for i in idx])


def window_weights(times: np.ndarray, t_lo: float, t_hi: float) -> np.ndarray:
    """Quadrature weights for ``int_{t_lo}^{t_hi}`` from samples at ``times``.

    Trapezoid rule between samples; the stretch between ``t_lo`` and the first
    sample (and between the last sample and ``t_hi``) is covered by holding the
    nearest sample constant, so the weights always sum to ``t_hi - t_lo``.
    """
    times = np.asarray(times, dtype=float)
    w = np.zeros(times.size)
    if times.size == 0:
        return w
    gaps = np.diff(times)
    w[:-1] += 0.5 * gaps
    w[1:] += 0.5 * gaps
    w[0] += max(times[0] - t_lo, 0.0)
    w[-1] += max(t_hi - times[-1], 0.0)
    return w


def time_integral(times: np.ndarray, values: np.ndarray, t_lo: float, t_hi: float) -> np.ndarray | float:
    """Integrate samples (leading axis = time) over ``[t_lo, t_hi]`` with :func:`window_weights`."""
    w = window_weights(times, t_lo, t_hi)
    return np.tensordot(w, np.asarray(values, dtype=float), axes=(0, 0))
