"""Time integration of the coupled density / chemoattractant system.

One step is an explicit conservative update of ``u`` followed by a
backward-Euler solve for ``v`` with the new ``u`` as source; both share the
step chosen by :func:`cfl_dt`.  The periodic Helmholtz-type system for ``v``
is diagonal in Fourier space and is solved exactly there; the residual of the
stencil equation is checked against ``v_solver_tol`` afterwards.

The floor ``u_floor`` enters only the step-size bound.  Cells below the floor
can still ask to export more mass than they hold (the drift speed
``u**(q-2) |grad v|`` is unbounded as ``u -> 0`` when ``q < 2``); such
outflows are scaled down face by face so the update stays conservative and
nonnegative.  The number of limited cells is reported per step.
"""

from __future__ import annotations

import logging
import math
from array import array
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np

from .grid import Domain, FieldSeries, ScalarField
from .operators import ModelParams, divergence, drift_flux, gradient, shift

__all__ = [
    "SolverConfig",
    "StepReport",
    "RunResult",
    "SolverError",
    "PositivityError",
    "cfl_dt",
    "step_u",
    "step_v",
    "run",
    "StepLog",
]

log = logging.getLogger(__name__)

NEG_TOL = 1e-13


class SolverError(RuntimeError):
    """Numerical failure during a run (step collapse, NaN, solver breakdown)."""


class PositivityError(SolverError):
    pass


@dataclass
class SolverConfig:
    params: ModelParams
    t_end: float
    snapshot_interval: float
    u_floor: float | None = None
    cfl_safety: float = 0.4
    v_solver_tol: float = 1e-10
    min_dt: float = 1e-14
    max_steps: int = 50_000_000
    positivity_limiter: bool = True

    def __post_init__(self):
        if not (0 < self.cfl_safety <= 1):
            raise ValueError("cfl_safety must lie in (0, 1]")
        if self.u_floor is not None and not self.u_floor > 0:
            raise ValueError("u_floor must be positive")
        if self.t_end < 0:
            raise ValueError("t_end must be >= 0")
        if not self.snapshot_interval > 0:
            raise ValueError("snapshot_interval must be positive")


@dataclass(frozen=True)
class StepReport:
    step: int
    t: float
    dt_used: float
    mass_u: float
    mass_v: float
    min_u: float
    max_u: float
    max_v_grad: float
    limited_cells: int = 0


@dataclass
class RunResult:
    u: FieldSeries
    v: FieldSeries
    reports: Sequence[StepReport] = field(default_factory=list)
    u_floor: float = 0.0


def _max_face_grad(v: np.ndarray, h: float) -> float:
    return max(float(np.abs(g).max()) for g in gradient(v, h))


def cfl_dt(u: np.ndarray, v: np.ndarray, config: SolverConfig, h: float, u_floor: float | None = None) -> float:
    """Stable explicit step for the density update.

    ``safety * h^2 / (2 N max(m u_eff^(m-1)) + h N chi max|grad v| max(u)^(q-1))``
    with ``u_eff = max(u_floor, u)``.
    """
    p = config.params
    u = np.asarray(u, dtype=float)
    if np.any(u < 0):
        raise ValueError("cfl_dt needs u >= 0")
    eps = config.u_floor if u_floor is None else u_floor
    if eps is None:
        raise ValueError("u_floor not set")
    n = u.ndim
    u_eff_min = max(eps, float(u.min()))
    diffusivity = p.m * u_eff_min ** (p.m - 1)
    drift = 0.0
    if p.chi > 0:
        umax = float(u.max())
        if umax > 0:
            drift = h * _max_face_grad(v, h) * p.chi * umax ** (p.q_exp - 1) * n
    return config.cfl_safety * h * h / (2 * n * diffusivity + drift)


def _limit_outflow(u: np.ndarray, flux: list[np.ndarray], dt: float, h: float) -> int:
    """Scale face fluxes in place so no cell exports more than it holds; returns #limited cells."""
    out = None
    for a, f in enumerate(flux):
        # f > 0 on face i+1/2 moves mass from cell i+1 into cell i
        pos = np.maximum(f, 0.0)
        part = (pos - f) + shift(pos, 1, a)
        out = part if out is None else out + part
    out *= dt / h
    over = out > u
    if not over.any():
        return 0
    ratio = np.ones_like(u)
    ratio[over] = u[over] / out[over]
    for a, f in enumerate(flux):
        f *= np.where(f < 0, ratio, shift(ratio, -1, a))
    return int(over.sum())


def _advance_u(u, v, dt, p: ModelParams, h, limiter: bool):
    flux = gradient(u**p.m, h)
    if p.chi > 0:
        for a, d in enumerate(drift_flux(u, v, p, h)):
            flux[a] -= d
    n_limited = _limit_outflow(u, flux, dt, h) if limiter else 0
    u_new = u + dt * divergence(flux, h)
    low = float(u_new.min())
    if not math.isfinite(low) or not np.isfinite(u_new.max()):
        raise SolverError("non-finite density after update")
    if low < 0:
        floor = -NEG_TOL * float(u.max())
        if low < floor:
            raise PositivityError(f"density dropped to {low:.3e} (CFL breach or flux defect)")
        log.debug("clamping %d round-off negative density values (min %.3e)", int((u_new < 0).sum()), low)
        np.maximum(u_new, 0.0, out=u_new)
    return u_new, n_limited


def step_u(u: np.ndarray, v: np.ndarray, dt: float, config: SolverConfig, h: float, *, return_limited: bool = False):
    """One explicit conservative update of the density."""
    u = np.asarray(u, dtype=float)
    if np.any(u < 0):
        raise ValueError("step_u needs u >= 0")
    u_new, n_limited = _advance_u(u, np.asarray(v, dtype=float), dt, config.params, h, config.positivity_limiter)
    if return_limited:
        return u_new, n_limited
    return u_new


_symbol_cache: dict[tuple, np.ndarray] = {}


def _laplacian_symbol(shape: tuple[int, ...], h: float) -> np.ndarray:
    """Eigenvalues of ``-Lap_h`` on the periodic grid, laid out for ``rfftn``."""
    key = (shape, h)
    sym = _symbol_cache.get(key)
    if sym is None:
        axes = []
        for a, n in enumerate(shape):
            k = np.fft.rfftfreq(n) if a == len(shape) - 1 else np.fft.fftfreq(n)
            axes.append((2.0 - 2.0 * np.cos(2.0 * np.pi * k)) / (h * h))
        grids = np.meshgrid(*axes, indexing="ij")
        sym = np.sum(grids, axis=0)
        _symbol_cache[key] = sym
    return sym


def _apply_helmholtz(w: np.ndarray, dt: float, alpha: float, h: float) -> np.ndarray:
    lap = np.zeros_like(w)
    for a in range(w.ndim):
        lap += (shift(w, -1, a) - 2 * w + shift(w, 1, a)) / (h * h)
    return (1 + dt * alpha) * w - dt * lap


def _solve_v(v, u, dt, alpha, h, tol):
    rhs = v + dt * u
    sym = _laplacian_symbol(v.shape, h)
    axes = tuple(range(v.ndim))
    v_new = np.fft.irfftn(np.fft.rfftn(rhs) / (1.0 + dt * (sym + alpha)), s=v.shape, axes=axes)
    res = _apply_helmholtz(v_new, dt, alpha, h) - rhs
    res_norm = math.sqrt(float(np.dot(res.ravel(), res.ravel())))
    scale = math.sqrt(float(np.dot(rhs.ravel(), rhs.ravel())))
    if res_norm > tol * max(scale, np.finfo(float).tiny):
        raise SolverError(f"chemoattractant solve residual {res_norm:.3e} above tolerance")
    return v_new, rhs


def _max_principle(v_new, v, rhs, dt, alpha):
    # the exact solution obeys this bound; the transform only misses it by round-off
    bound = float(v.min()) / (1.0 + dt * alpha)
    low = float(v_new.min())
    if low < bound:
        if bound - low > 1e-12 * max(float(np.abs(rhs).max()), 1.0):
            raise SolverError("chemoattractant solve violated the maximum principle")
        np.maximum(v_new, bound, out=v_new)
    return v_new


def step_v(v: np.ndarray, u: np.ndarray, dt: float, config: SolverConfig, h: float) -> np.ndarray:
    """Backward Euler for ``v_t = Lap v - alpha v + u``: ``(I - dt Lap_h + dt alpha) v_new = v + dt u``."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    alpha = config.params.decay_rate
    v = np.asarray(v, dtype=float)
    u = np.asarray(u, dtype=float)
    v_new, rhs = _solve_v(v, u, dt, alpha, h, config.v_solver_tol)
    if np.any(u < 0):
        return v_new
    return _max_principle(v_new, v, rhs, dt, alpha)


def _snapshot_targets(t_end: float, interval: float) -> list[float]:
    targets = []
    k = 1
    while k * interval < t_end * (1 - 1e-12):
        targets.append(k * interval)
        k += 1
    if t_end > 0:
        targets.append(t_end)
    return targets


class StepLog(Sequence):
    """Per-step records stored column-wise; indexing yields :class:`StepReport`."""

    _fields = ("step", "t", "dt_used", "mass_u", "mass_v", "min_u", "max_u", "max_v_grad", "limited_cells")

    def __init__(self):
        self._cols = {f: array("q" if f in ("step", "limited_cells") else "d") for f in self._fields}

    def append(self, *values) -> None:
        for f, x in zip(self._fields, values):
            self._cols[f].append(x)

    def column(self, name: str) -> np.ndarray:
        return np.asarray(self._cols[name])

    def __len__(self) -> int:
        return len(self._cols["step"])

    def __getitem__(self, i):
        if isinstance(i, slice):
            return [self[j] for j in range(*i.indices(len(self)))]
        n = len(self)
        if i < 0:
            i += n
        if not 0 <= i < n:
            raise IndexError(i)
        return StepReport(*(self._cols[f][i] for f in self._fields))


def run(u0: ScalarField, v0: ScalarField, config: SolverConfig) -> RunResult:
    """Integrate to ``config.t_end``; snapshots at every multiple of the interval plus ``t_end``."""
    dom: Domain = u0.domain
    if v0.domain != dom:
        raise ValueError("u0 and v0 must share a domain")
    p = config.params
    if dom.dim != p.dim:
        raise ValueError("ModelParams.dim does not match the domain")
    u = np.array(u0.values, dtype=float)
    v = np.array(v0.values, dtype=float)
    if np.any(u < 0) or np.any(v < 0):
        raise ValueError("initial data must be nonnegative")
    h = dom.spacing
    vol = dom.cell_volume
    n = dom.dim
    umax0 = float(u.max())
    eps = config.u_floor if config.u_floor is not None else 1e-4 * (umax0 if umax0 > 0 else 1.0)
    alpha = p.decay_rate
    tol = config.v_solver_tol
    limiter = config.positivity_limiter

    u_snaps = [ScalarField(dom, u.copy(), 0.0)]
    v_snaps = [ScalarField(dom, v.copy(), 0.0)]
    dts: list[float] = []
    reports = StepLog()
    umin, umax = float(u.min()), umax0
    vgrad = _max_face_grad(v, h)
    reports.append(0, 0.0, 0.0, float(u.sum() * vol), float(v.sum() * vol), umin, umax, vgrad, 0)
    growth_flagged = False

    t = 0.0
    step = 0
    for target in _snapshot_targets(config.t_end, config.snapshot_interval):
        while t < target:
            # same bound as cfl_dt, using the already-known extrema
            diffusivity = p.m * max(eps, umin) ** (p.m - 1)
            drift = h * vgrad * p.chi * umax ** (p.q_exp - 1) * n if (p.chi > 0 and umax > 0) else 0.0
            dt = config.cfl_safety * h * h / (2 * n * diffusivity + drift)
            if dt < config.min_dt:
                raise SolverError(f"step size {dt:.3e} below minimum at t = {t:.6g}")
            if t + dt >= target * (1 - 1e-14) or target - (t + dt) < 1e-3 * dt:
                dt = target - t
                t_next = target
            else:
                t_next = t + dt
            u, limited = _advance_u(u, v, dt, p, h, limiter)
            v_new, rhs = _solve_v(v, u, dt, alpha, h, tol)
            v = _max_principle(v_new, v, rhs, dt, alpha)
            t = t_next
            step += 1
            if step > config.max_steps:
                raise SolverError("step budget exhausted")
            dts.append(dt)
            umin, umax = float(u.min()), float(u.max())
            vgrad = _max_face_grad(v, h)
            reports.append(step, t, dt, float(u.sum() * vol), float(v.sum() * vol), umin, umax, vgrad, limited)
            if not growth_flagged and umax > 1e3 * max(umax0, eps):
                log.warning("max_u grew to %.3e at t = %.6g; boundedness is not certified", umax, t)
                growth_flagged = True
        u_snaps.append(ScalarField(dom, u.copy(), t))
        v_snaps.append(ScalarField(dom, v.copy(), t))

    return RunResult(FieldSeries(u_snaps, dts), FieldSeries(v_snaps, list(dts)), reports, eps)
