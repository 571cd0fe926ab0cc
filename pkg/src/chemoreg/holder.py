"""Empirical Hölder modulus in the intrinsic parabolic distance.

The fit is an upper envelope: random point pairs are binned by
``log d``, each bin keeps its largest ``log |u(p1) - u(p2)|`` and a
least-squares line through those maxima gives ``log gamma + alpha log d``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass

import numpy as np

from .grid import Domain, FieldSeries, IntrinsicCylinder, cube_axis_indices

__all__ = ["ZeroFieldWarning", "SamplerConfig", "HolderFit", "intrinsic_distance", "holder_fit"]


class ZeroFieldWarning(UserWarning):
    """Sup norm is zero, so the intrinsic time weight was replaced by 1."""


def _time_weight(M: float, m: float) -> tuple[float, bool]:
    if M < 0:
        raise ValueError("M must be nonnegative")
    if M == 0:
        return 1.0, True
    return M ** ((m - 1) / 2), False


def intrinsic_distance(p1, p2, M: float, m: float, domain: Domain | None = None) -> float:
    """``|x1 - x2| + M^((m-1)/2) |t1 - t2|^(1/2)`` for points ``(x, t)``.

    With a domain the spatial part is the periodic-minimal Euclidean distance.
    ``M = 0`` uses time weight 1 and emits :class:`ZeroFieldWarning`.
    """
    (x1, t1), (x2, t2) = p1, p2
    dx = np.atleast_1d(np.asarray(x1, dtype=float)) - np.atleast_1d(np.asarray(x2, dtype=float))
    if domain is not None:
        dx = domain.periodic_offset(dx)
    w, zero = _time_weight(M, m)
    if zero:
        warnings.warn("zero sup norm: time weight set to 1", ZeroFieldWarning, stacklevel=2)
    return float(np.sqrt(np.sum(dx * dx)) + w * math.sqrt(abs(t1 - t2)))


@dataclass(frozen=True)
class SamplerConfig:
    seed: int
    n_pairs: int = 20000
    n_bins: int = 12
    same_slice_fraction: float = 0.5

    def __post_init__(self):
        if self.n_pairs < 200:
            raise ValueError("a fit needs at least 200 pairs")
        if self.n_bins < 5:
            raise ValueError("a fit needs at least 5 bins")
        if not 0 <= self.same_slice_fraction <= 1:
            raise ValueError("same_slice_fraction must lie in [0, 1]")


@dataclass
class HolderFit:
    holder_exponent: float | None
    holder_exponent_raw: float | None
    prefactor: float | None
    sup_norm: float
    n_pairs: int
    n_bins_used: int
    d_min: float
    residual_rms: float | None
    residual_max: float | None
    constant_field: bool
    zero_field: bool
    seed: int

    def to_record(self) -> dict:
        return asdict(self)


def _sample_pairs(rng, axes, n_slices, h, diam, cfg):
    """Cell multi-indices and slice indices of both ends of every pair."""
    dim = len(axes)
    sizes = np.array([len(a) for a in axes])
    n = cfg.n_pairs
    i1 = np.stack([rng.integers(0, s, n) for s in sizes], axis=1)
    r = np.exp(rng.uniform(math.log(h), math.log(diam), n))
    direc = rng.normal(size=(n, dim))
    direc /= np.linalg.norm(direc, axis=1, keepdims=True)
    step = np.rint(direc * r[:, None] / h).astype(np.int64)
    i2 = i1 + step
    ok = np.all((i2 >= 0) & (i2 < sizes), axis=1)
    s1 = rng.integers(0, n_slices, n)
    other = rng.integers(0, n_slices, n)
    same = rng.random(n) < cfg.same_slice_fraction
    s2 = np.where(same, s1, other)
    return i1[ok], i2[ok], s1[ok], s2[ok]


def holder_fit(series: FieldSeries, region: IntrinsicCylinder, m: float, sampler: SamplerConfig) -> HolderFit:
    """Fit ``|u(p1) - u(p2)| <= gamma d(p1, p2)^alpha`` on ``region``.

    Pairs are drawn inside the region's cube at log-uniform spatial
    separations (seeded, so the fit is reproducible).  Bins whose lower edge
    is below ``3h``, or below ``sqrt(snapshot spacing) M^((m-1)/2)`` when
    the window holds several slices, are dropped as sub-resolution.  Slices
    at ``t <= 0`` are never used.
    """
    dom = series.domain
    if region.radius >= dom.extent:
        raise ValueError("region must lie strictly inside the periodic box")
    times = series.times
    # the modulus is a statement for t > 0 only
    idx = np.flatnonzero((times > max(region.t_start, 0.0)) & (times > 0) & (times <= region.t_end))
    if idx.size == 0:
        raise ValueError("no snapshot inside the region's time window")
    axes = cube_axis_indices(dom, region.cube)
    block = np.stack([series.snapshots[i].values[np.ix_(*axes)] for i in idx])
    tw = times[idx]
    M = float(np.abs(block).max())
    weight, zero = _time_weight(M, m)
    h = dom.spacing
    diam = h * math.sqrt(sum(len(a) ** 2 for a in axes))
    rng = np.random.default_rng(sampler.seed)
    i1, i2, s1, s2 = _sample_pairs(rng, axes, idx.size, h, diam, sampler)
    if i1.shape[0] < 200:
        raise ValueError("fewer than 200 usable pairs; enlarge the region or the sample")
    u1 = block[(s1, *i1.T)]
    u2 = block[(s2, *i2.T)]
    du = np.abs(u1 - u2)
    d = h * np.linalg.norm((i1 - i2).astype(float), axis=1) + weight * np.sqrt(np.abs(tw[s1] - tw[s2]))
    base = dict(sup_norm=M, n_pairs=int(du.size), zero_field=zero, seed=sampler.seed)
    if not np.any(du > 0):
        return HolderFit(None, None, None, n_bins_used=0, d_min=0.0, residual_rms=None, residual_max=None,
                         constant_field=True, **base)
    d_min = 3 * h
    if idx.size > 1:
        d_min = max(d_min, math.sqrt(float(np.diff(tw).min())) * weight)
    keep = (d > 0) & (du > 0)
    d, du = d[keep], du[keep]
    edges = np.geomspace(d.min(), d.max() * (1 + 1e-12), sampler.n_bins + 1)
    which = np.clip(np.searchsorted(edges, d, side="right") - 1, 0, sampler.n_bins - 1)
    xs, ys = [], []
    for b in range(sampler.n_bins):
        if edges[b] < d_min:
            continue
        sel = which == b
        if not sel.any():
            continue
        j = np.argmax(du[sel])
        xs.append(math.log(d[sel][j]))
        ys.append(math.log(du[sel][j]))
    if len(xs) < 5:
        raise ValueError(f"only {len(xs)} usable bins (need 5)")
    x, y = np.array(xs), np.array(ys)
    alpha, log_g = np.polyfit(x, y, 1)
    res = y - (alpha * x + log_g)
    return HolderFit(
        holder_exponent=float(min(alpha, 1.0)),
        holder_exponent_raw=float(alpha),
        prefactor=float(math.exp(log_g)),
        n_bins_used=len(xs),
        d_min=d_min,
        residual_rms=float(np.sqrt(np.mean(res**2))),
        residual_max=float(np.abs(res).max()),
        constant_field=False,
        **base,
    )
