"""Level sets, cutoffs and the energy-type budgets evaluated on solver output.

All budgets work on full-domain snapshots and restrict to cube cells only
after differencing, so periodic neighbours are available at cube faces.
Products such as ``(k - u)_+ * eta`` are formed cellwise first and then
differenced; the discrete product rule is never used.

Time integrals use :func:`chemoreg.grid.window_weights` over the snapshots in
the cylinder's window, and "ess sup in time" is the max over those
snapshots.  Fitted constants are ratios ``lhs / rhs`` and are reported as
``None`` when the left side vanishes identically.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import integrate

from .grid import (
    Cube,
    Domain,
    FieldSeries,
    IntrinsicCylinder,
    ScalarField,
    cube_mask,
    cylinder_window,
    window_weights,
)
from .operators import ModelParams, grad_norm_cells, grad_sq_cells, gradient
from .oracles import ParabolicNorms, heat_estimate_check

__all__ = [
    "trunc_below",
    "trunc_above",
    "steklov_average",
    "level_set_measure",
    "LevelSetReport",
    "level_set_report",
    "CutoffFunction",
    "make_cutoff",
    "compute_Id",
    "default_exponents",
    "EnergyBudget",
    "energy_budget_below",
    "energy_budget_above",
    "LogFunctionalReport",
    "psi_log",
    "psi_slope_check",
    "log_budget",
    "key_primitive_chain",
]

_TIME_TOL = 1e-9


def trunc_below(u, k):
    """``(k - u)_+``."""
    return np.maximum(k - np.asarray(u, dtype=float), 0.0)


def trunc_above(u, k):
    """``(u - k)_+``."""
    return np.maximum(np.asarray(u, dtype=float) - k, 0.0)


def _level_mask(values: np.ndarray, k: float, mode: str) -> np.ndarray:
    # k^m - u^m > 0 iff u < k because s -> s^m is strictly increasing
    if mode == "below":
        return values < k
    if mode == "above":
        return values > k
    raise ValueError(f"mode must be 'below' or 'above', got {mode!r}")


# ---------------------------------------------------------------- Steklov


def steklov_average(series: FieldSeries, h_avg: float) -> FieldSeries:
    """Forward time averages ``(1/h) int_t^{t+h} u`` at every snapshot time whose window fits.

    The integrand is the piecewise-linear interpolant of the snapshots, so
    the trapezoid rule is exact for data linear in time.
    """
    times = series.times
    if len(times) < 2:
        raise ValueError("Steklov averaging needs at least two snapshots")
    gaps = np.diff(times)
    if not h_avg > 0 or h_avg < gaps.min() * (1 - _TIME_TOL):
        raise ValueError(f"h_avg must be at least the snapshot spacing ({gaps.min():.6g})")
    vals = series.stacked()
    tol = _TIME_TOL * max(1.0, abs(times[-1]))
    out = []
    for i, t in enumerate(times):
        t_hi = t + h_avg
        if t_hi > times[-1] + tol:
            break
        j = int(np.searchsorted(times, t_hi - tol, side="left"))
        knots = list(times[i:j]) + [t_hi]
        inner = [vals[q] for q in range(i, j)]
        if j < len(times) and abs(times[j] - t_hi) <= tol:
            end_val = vals[j]
        else:
            lam = (t_hi - times[j - 1]) / (times[j] - times[j - 1])
            end_val = (1 - lam) * vals[j - 1] + lam * vals[j]
        samples = inner + [end_val]
        acc = np.zeros_like(vals[0])
        for q in range(len(knots) - 1):
            acc += 0.5 * (knots[q + 1] - knots[q]) * (samples[q] + samples[q + 1])
        out.append(ScalarField(series.domain, acc / h_avg, float(t)))
    if not out:
        raise ValueError("averaging window exceeds the series")
    return FieldSeries(out)


# ---------------------------------------------------------------- level sets


def level_set_measure(field: ScalarField, k: float, cube: Cube, mode: str = "below") -> float:
    """``h^N * #{cells of cube with u < k}`` (mode ``below``) or ``u > k`` (mode ``above``)."""
    if not k > 0:
        raise ValueError("level k must be positive")
    mask = cube_mask(field.domain, cube)
    return float(np.count_nonzero(_level_mask(field.values, k, mode) & mask) * field.domain.cell_volume)


@dataclass
class LevelSetReport:
    k: float
    mode: str
    times: list[float]
    slice_measures: list[float]
    total: float
    power_integral: float
    power: float

    def to_record(self) -> dict:
        return asdict(self)


def _slice_measures(vals: np.ndarray, mask: np.ndarray, k: float, mode: str, vol: float) -> np.ndarray:
    hit = _level_mask(vals, k, mode) & mask
    return hit.reshape(len(vals), -1).sum(axis=1) * vol


def level_set_report(
    series: FieldSeries, k: float, cylinder: IntrinsicCylinder, mode: str = "below", exponents: ParabolicNorms | None = None
) -> LevelSetReport:
    """Slice measures of ``A_{k,R}(t)``, their time integral, and ``int |A(t)|^(r~/l~) dt``."""
    dom = series.domain
    ex = exponents if exponents is not None else default_exponents(dom.dim)
    times, vals = cylinder_window(series, cylinder)
    w = window_weights(times, cylinder.t_start, cylinder.t_end)
    meas = _slice_measures(vals, cube_mask(dom, cylinder.cube), k, mode, dom.cell_volume)
    power = ex.r_tilde / ex.l_tilde
    return LevelSetReport(
        k=float(k),
        mode=mode,
        times=times.tolist(),
        slice_measures=meas.tolist(),
        total=float(np.dot(w, meas)),
        power_integral=float(np.dot(w, meas**power)),
        power=power,
    )


# ---------------------------------------------------------------- cutoffs


@dataclass(frozen=True)
class CutoffFunction:
    """``eta(x, t) = eta1(x) * eta2(t)``, both piecewise linear.

    ``eta1`` is 1 on the sup-norm ball of radius ``r_inner`` around
    ``center`` and 0 outside radius ``r_outer``; ``eta2`` rises from 0 at
    ``t_zero`` to 1 at ``t_one`` (or is identically 1 when ``static``).
    """

    center: tuple[float, ...]
    r_outer: float
    r_inner: float
    t_vertex: float
    t_zero: float
    t_one: float
    theta: float
    static: bool = False
    grad_bound: float = math.inf
    dt_bound: float = math.inf

    @property
    def cylinder(self) -> IntrinsicCylinder:
        """The cylinder on whose lateral boundary ``eta`` vanishes."""
        return IntrinsicCylinder(Cube(self.center, self.r_outer), self.t_vertex, self.theta)

    def spatial(self, domain: Domain) -> np.ndarray:
        c = np.atleast_1d(np.asarray(self.center, dtype=float))
        if c.size == 1 and domain.dim > 1:
            c = np.full(domain.dim, c[0])
        dist = np.zeros(domain.shape)
        for a, xa in enumerate(domain.centers()):
            dist = np.maximum(dist, np.abs(domain.periodic_offset(xa - c[a])))
        width = self.r_outer - self.r_inner
        if width <= 0:
            return (dist < self.r_outer).astype(float)
        return np.clip((self.r_outer - dist) / width, 0.0, 1.0)

    def temporal(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if self.static:
            return np.ones_like(t)
        if self.t_one <= self.t_zero:
            return (t >= self.t_one).astype(float)
        return np.clip((t - self.t_zero) / (self.t_one - self.t_zero), 0.0, 1.0)

    def temporal_rate(self, t) -> np.ndarray:
        """``d eta2 / dt`` (one-sided from the right at the kinks)."""
        t = np.asarray(t, dtype=float)
        if self.static or self.t_one <= self.t_zero:
            return np.zeros_like(t)
        inside = (t >= self.t_zero) & (t < self.t_one)
        return np.where(inside, 1.0 / (self.t_one - self.t_zero), 0.0)

    def measured_bounds(self, domain: Domain, times=None) -> tuple[float, float]:
        """Max face-difference slope of ``eta1`` and max difference-quotient rate of ``eta2``."""
        eta1 = self.spatial(domain)
        g = max(float(np.abs(d).max()) for d in gradient(eta1, domain.spacing))
        if times is None or len(times) < 2 or self.static:
            rate = float(self.temporal_rate(np.atleast_1d(self.t_zero)).max()) if not self.static else 0.0
        else:
            ts = np.asarray(times, dtype=float)
            rate = float((np.diff(self.temporal(ts)) / np.diff(ts)).max())
        return g, rate

    def validate(self, domain: Domain) -> None:
        h = domain.spacing
        if self.r_outer > self.r_inner and self.r_outer - self.r_inner < h * (1 - 1e-12):
            raise ValueError(f"cutoff ramp width {self.r_outer - self.r_inner:.3g} is below the grid spacing {h:.3g}")
        if 2 * self.r_inner < 2 * h * (1 - 1e-12):
            raise ValueError("inner cube of the cutoff holds fewer than 2 cells per axis")


def make_cutoff(
    n: int,
    R: float,
    theta: float,
    *,
    center=0.0,
    t_vertex: float = 0.0,
    static: bool = False,
    domain: Domain | None = None,
) -> CutoffFunction:
    """Cutoff for level ``n`` of the shrinking family ``R_n = R + R / 2^n``.

    ``eta1`` is 1 on ``K_{R_{n+1}}`` and 0 outside ``K_{R_n}`` (slope
    ``2^{n+1}/R``); ``eta2`` vanishes before ``t_vertex - theta R_n^2`` and is
    1 after ``t_vertex - theta R_{n+1}^2``.  With a ``domain`` the grid can
    resolve it or a ``ValueError`` is raised.
    """
    if int(n) != n or n < 0:
        raise ValueError("level index n must be a nonnegative integer")
    if not (R > 0 and theta > 0):
        raise ValueError("R and theta must be positive")
    r_n = R + R / 2**n
    r_next = R + R / 2 ** (n + 1)
    c = tuple(np.atleast_1d(np.asarray(center, dtype=float)).tolist())
    cut = CutoffFunction(
        center=c,
        r_outer=r_n,
        r_inner=r_next,
        t_vertex=float(t_vertex),
        t_zero=t_vertex - theta * r_n**2,
        t_one=t_vertex - theta * r_next**2,
        theta=float(theta),
        static=static,
        grad_bound=2 ** (n + 1) / R,
        dt_bound=0.0 if static else 2 ** (2 * (n + 1)) / (theta * R**2),
    )
    if domain is not None:
        cut.validate(domain)
    return cut


# ---------------------------------------------------------------- drift constant


def default_exponents(dim: int, l_exp: float = 2.0, r_exp: float = 2.0) -> ParabolicNorms:
    """Hölder pair ``(l, r)`` with ``kappa = 2/N``."""
    return ParabolicNorms(l_exp, r_exp, 2.0 / dim, dim=dim)


def compute_Id(
    u_series: FieldSeries,
    v0: ScalarField,
    cylinder: IntrinsicCylinder,
    l_exp: float,
    m: float,
    c0: float,
) -> float:
    """``[C0 sup_t ||u(t)||_{L^{m+1}(K)} + ||grad v0||_{L^{2l}(K)}]^2`` over the cylinder."""
    dom = u_series.domain
    n = dom.dim
    if not 1.0 / (m + 1) - 1.0 / (2 * l_exp) < 1.0 / n:
        raise ValueError(
            f"1/(m+1) - 1/(2l) < 1/N violated ({1.0 / (m + 1) - 1.0 / (2 * l_exp):.6g} >= {1.0 / n:.6g})"
        )
    if not c0 >= 0:
        raise ValueError("C0 must be nonnegative")
    mask = cube_mask(dom, cylinder.cube)
    vol = dom.cell_volume
    _, vals = cylinder_window(u_series, cylinder)
    sup_u = max(float((np.abs(v[mask]) ** (m + 1)).sum() * vol) ** (1.0 / (m + 1)) for v in vals)
    gv = grad_norm_cells(v0.values, dom.spacing)[mask]
    grad_term = float((gv ** (2 * l_exp)).sum() * vol) ** (1.0 / (2 * l_exp))
    return (c0 * sup_u + grad_term) ** 2


def _resolve_id(u_series, v_series, cylinder, exponents, params, c0, id_value):
    if id_value is not None:
        return float(id_value), c0
    if v_series is None:
        raise ValueError("v_series (or id_value) is needed for the drift constant")
    if c0 is None:
        fit = heat_estimate_check(v_series, u_series, p=2 * exponents.l_exp, p0=params.m + 1)
        c0 = fit["c0"]
    return compute_Id(u_series, v_series.snapshots[0], cylinder, exponents.l_exp, params.m, c0), c0


# ---------------------------------------------------------------- energy budgets


@dataclass
class EnergyBudget:
    mode: str
    k: float
    lhs_sup: float
    lhs_grad: float
    T_grad_eta: float
    T_drift: float
    T_initial: float
    T_time: float
    I_d: float
    c0: float | None
    level_power_integral: float
    C_hat: float | None
    notes: dict = field(default_factory=dict)

    @property
    def lhs(self) -> float:
        return self.lhs_sup + self.lhs_grad

    @property
    def rhs(self) -> float:
        return self.T_grad_eta + self.T_drift + self.T_initial + self.T_time

    def to_record(self) -> dict:
        rec = asdict(self)
        notes = rec.pop("notes")
        rec.update({f"note_{k}": v for k, v in sorted(notes.items())})
        return rec


def _far_index(series: FieldSeries, t_far: float) -> int:
    times = series.times
    tol = _TIME_TOL * max(1.0, abs(t_far))
    before = np.flatnonzero(times <= t_far + tol)
    if before.size:
        return int(before[-1])
    return 0


def _fit(lhs: float, rhs: float) -> float | None:
    if lhs == 0.0:
        return None
    if rhs == 0.0:
        return math.inf
    return lhs / rhs


def _budget_setup(u_series, cylinder, cutoff):
    dom = u_series.domain
    cutoff.validate(dom)
    times, vals = cylinder_window(u_series, cylinder)
    w = window_weights(times, cylinder.t_start, cylinder.t_end)
    mask = cube_mask(dom, cylinder.cube)
    eta1 = cutoff.spatial(dom)
    eta2 = cutoff.temporal(times)
    eta2_t = cutoff.temporal_rate(times)
    far = u_series.snapshots[_far_index(u_series, cylinder.t_start)]
    eta_far = eta1 * float(cutoff.temporal(cylinder.t_start))
    return dom, times, vals, w, mask, eta1, eta2, eta2_t, far, eta_far


def energy_budget_below(
    u_series: FieldSeries,
    v_series: FieldSeries | None,
    k: float,
    cylinder: IntrinsicCylinder,
    cutoff: CutoffFunction,
    exponents: ParabolicNorms | None = None,
    *,
    params: ModelParams,
    c0: float | None = None,
    id_value: float | None = None,
) -> EnergyBudget:
    """Both sides of the local energy estimate for the truncation ``(k - u)_+``.

    ``T_drift`` carries the factor ``chi^2`` of the drift coefficient.  When
    ``id_value`` is absent the drift constant comes from :func:`compute_Id`
    with ``v0`` the first ``v`` snapshot and ``C0`` fitted by the heat
    estimate unless given.
    """
    if not k > 0:
        raise ValueError("level k must be positive")
    m = params.m
    ex = exponents if exponents is not None else default_exponents(u_series.domain.dim)
    dom, times, vals, w, mask, eta1, eta2, eta2_t, far, eta_far = _budget_setup(u_series, cylinder, cutoff)
    h, vol = dom.spacing, dom.cell_volume

    sup_t = []
    grad_t = []
    for v, e2 in zip(vals, eta2):
        eta = eta1 * e2
        tr = trunc_below(v, k)
        sup_t.append(float(((eta * tr) ** 2)[mask].sum() * vol))
        grad_t.append(float(grad_sq_cells(tr * eta, h)[mask].sum() * vol))
    lhs_sup = max(sup_t)
    lhs_grad = 0.5 * m * k ** (m - 1) * float(np.dot(w, grad_t))

    g_eta1 = float(grad_sq_cells(eta1, h)[mask].sum() * vol)
    T_grad_eta = m * k ** (m + 1) * g_eta1 * float(np.dot(w, eta2**2))

    I_d, c0_used = _resolve_id(u_series, v_series, cylinder, ex, params, c0, id_value)
    meas = _slice_measures(vals, mask, k, "below", vol)
    pint = float(np.dot(w, meas ** (ex.r_tilde / ex.l_tilde)))
    T_drift = params.chi**2 * I_d * k ** (2 * params.q_exp - m - 1) * pint ** (2 * (1 + ex.kappa) / ex.r_tilde)

    T_initial = k * float((eta_far**2 * trunc_below(far.values, k))[mask].sum() * vol)
    eta1_sum = float(eta1[mask].sum() * vol)
    T_time = k**2 * eta1_sum * float(np.dot(w, np.abs(eta2 * eta2_t)))

    lhs = lhs_sup + lhs_grad
    rhs = T_grad_eta + T_drift + T_initial + T_time
    return EnergyBudget(
        mode="below",
        k=float(k),
        lhs_sup=lhs_sup,
        lhs_grad=lhs_grad,
        T_grad_eta=T_grad_eta,
        T_drift=T_drift,
        T_initial=T_initial,
        T_time=T_time,
        I_d=I_d,
        c0=c0_used,
        level_power_integral=pint,
        C_hat=_fit(lhs, rhs),
        notes={"far_time": far.time, "n_slices": len(times)},
    )


def energy_budget_above(
    u_series: FieldSeries,
    v_series: FieldSeries | None,
    k: float,
    cylinder: IntrinsicCylinder,
    cutoff: CutoffFunction,
    exponents: ParabolicNorms | None = None,
    mu_plus: float | None = None,
    *,
    params: ModelParams,
    u_floor: float,
    c0: float | None = None,
    id_value: float | None = None,
) -> EnergyBudget:
    """Both sides of the local energy estimate for ``(u - k)_+``.

    The weight ``u^(m-1)`` is evaluated as ``max(u, u_floor)^(m-1)``, the
    same convention the solver uses in its step bound.  ``mu_plus`` defaults
    to the max of ``u`` over the cylinder.
    """
    if not k > 0:
        raise ValueError("level k must be positive")
    if not u_floor > 0:
        raise ValueError("u_floor must be positive")
    m = params.m
    ex = exponents if exponents is not None else default_exponents(u_series.domain.dim)
    dom, times, vals, w, mask, eta1, eta2, eta2_t, far, eta_far = _budget_setup(u_series, cylinder, cutoff)
    h, vol = dom.spacing, dom.cell_volume
    if mu_plus is None:
        mu_plus = float(max(v[mask].max() for v in vals))
    g_eta1 = grad_sq_cells(eta1, h)

    sup_t, grad_t, geta_t, time_t = [], [], [], []
    for v, e2, e2t in zip(vals, eta2, eta2_t):
        eta = eta1 * e2
        tr = trunc_above(v, k)
        weight = np.maximum(v, u_floor) ** (m - 1)
        sup_t.append(float(((eta * tr) ** 2)[mask].sum() * vol))
        grad_t.append(float((weight * grad_sq_cells(tr * eta, h))[mask].sum() * vol))
        geta_t.append(float((weight * tr**2 * g_eta1)[mask].sum() * vol) * e2**2)
        time_t.append(float((tr**2 * eta1**2)[mask].sum() * vol) * abs(e2 * e2t))
    lhs_sup = max(sup_t)
    lhs_grad = float(np.dot(w, grad_t))
    T_grad_eta = float(np.dot(w, geta_t))
    T_time = float(np.dot(w, time_t))

    I_d, c0_used = _resolve_id(u_series, v_series, cylinder, ex, params, c0, id_value)
    meas = _slice_measures(vals, mask, k, "above", vol)
    pint = float(np.dot(w, meas ** (ex.r_tilde / ex.l_tilde)))
    T_drift = params.chi**2 * I_d * mu_plus ** (2 * params.q_exp - m - 1) * pint ** (2 * (1 + ex.kappa) / ex.r_tilde)
    T_initial = float((eta_far**2 * trunc_above(far.values, k) ** 2)[mask].sum() * vol)

    lhs = lhs_sup + lhs_grad
    rhs = T_grad_eta + T_drift + T_initial + T_time
    return EnergyBudget(
        mode="above",
        k=float(k),
        lhs_sup=lhs_sup,
        lhs_grad=lhs_grad,
        T_grad_eta=T_grad_eta,
        T_drift=T_drift,
        T_initial=T_initial,
        T_time=T_time,
        I_d=I_d,
        c0=c0_used,
        level_power_integral=pint,
        C_hat=_fit(lhs, rhs),
        notes={"far_time": far.time, "n_slices": len(times), "u_floor": u_floor, "mu_plus": mu_plus},
    )


# ---------------------------------------------------------------- logarithmic functional


def psi_log(u, k: float, H: float, c: float) -> np.ndarray:
    """``log+( H / (H - (u - k) + c) )``.

    ``u`` is clipped at ``k + H`` first; inside the cylinder that is a no-op
    because ``H`` is the supremum of the excursion there.
    """
    u = np.minimum(np.asarray(u, dtype=float), k + H)
    return np.maximum(np.log(H / (H - (u - k) + c)), 0.0)


def psi_slope_check(k: float, H: float, c: float, samples: int = 4097) -> dict:
    """Max of ``psi`` and of its difference quotient in ``u`` over ``u in [k - H, k + H]``."""
    u = np.linspace(k - H, k + H, samples)
    psi = psi_log(u, k, H, c)
    slope = float(np.max(np.abs(np.diff(psi) / np.diff(u))))
    cap = math.log(H / c)
    return {
        "psi_max": float(psi.max()),
        "psi_cap": cap,
        "slope_max": slope,
        "slope_cap": 1.0 / c,
        "ok": bool(psi.max() <= cap + 1e-12 and slope <= 1.0 / c + 1e-9),
    }


def _psi_slope(u: np.ndarray, k: float, H: float, c: float) -> float:
    """Largest ``|psi(u2) - psi(u1)| / (u2 - u1)`` over neighbours in sorted order.

    Where both ends lie on the logarithmic branch the difference is
    ``log1p((u2 - u1) / D2)`` with ``D = H - (u - k) + c``, which stays
    accurate when ``u2 - u1`` is a few ulps.
    """
    u = np.sort(np.minimum(u, k + H), kind="stable")
    du = np.diff(u)
    ok = du > 0
    if not ok.any():
        return 0.0
    u1, u2, du = u[:-1][ok], u[1:][ok], du[ok]
    d1, d2 = H - (u1 - k) + c, H - (u2 - k) + c
    both = d1 < H
    dp = np.where(both, np.log1p(du / d2), np.maximum(np.log(H / d2), 0.0))
    return float(np.max(dp / du))


@dataclass
class LogFunctionalReport:
    k: float
    H: float
    c: float | None
    psi_max: float
    psi_cap: float | None
    slope_max: float
    lhs_sup: float
    initial: float
    T_drift: float
    T_grad_zeta: float
    gamma: float | None
    mu_choice: str = "mu_plus"
    notes: dict = field(default_factory=dict)

    def to_record(self) -> dict:
        rec = asdict(self)
        notes = rec.pop("notes")
        rec.update({f"note_{k}": v for k, v in sorted(notes.items())})
        return rec


def log_budget(
    u_series: FieldSeries,
    cylinder: IntrinsicCylinder,
    omega: float,
    mu_plus: float,
    c: float,
    cutoff: CutoffFunction,
    *,
    params: ModelParams,
    id_value: float,
    u_floor: float,
) -> LogFunctionalReport:
    """Logarithmic estimate at level ``k = mu_plus - omega/4`` with a time-independent ``zeta``.

    Only the spatial part of ``cutoff`` is used.  The drift term uses
    ``mu = mu_plus`` and ``chi^2 * id_value``.  Returns ``gamma = None`` when
    ``H = 0`` or when the sup-in-time gain over the initial slice vanishes.
    """
    dom = u_series.domain
    m = params.m
    k = mu_plus - omega / 4.0
    times, vals = cylinder_window(u_series, cylinder)
    w = window_weights(times, cylinder.t_start, cylinder.t_end)
    mask = cube_mask(dom, cylinder.cube)
    vol, h = dom.cell_volume, dom.spacing
    H = max(float(max((v[mask] - k).max() for v in vals)), 0.0)
    empty = LogFunctionalReport(k, H, None, 0.0, None, 0.0, 0.0, 0.0, 0.0, 0.0, None)
    if H == 0.0:
        empty.notes["reason"] = "no excursion above k"
        return empty
    if not 0 < c < min(1.0, H):
        raise ValueError(f"need 0 < c < min(1, H) = {min(1.0, H):.6g}")
    zeta = cutoff.spatial(dom)
    cap = math.log(H / c)

    psi_slices = [psi_log(v, k, H, c) for v in vals]
    lhs_sup = max(float((p**2 * zeta**2)[mask].sum() * vol) for p in psi_slices)
    far = u_series.snapshots[_far_index(u_series, cylinder.t_start)]
    initial = float((psi_log(far.values, k, H, c) ** 2 * zeta**2)[mask].sum() * vol)
    g_zeta = grad_sq_cells(zeta, h)
    grad_t = [float((np.maximum(v, u_floor) ** (m - 1) * g_zeta)[mask].sum() * vol) for v in vals]
    T_grad = cap * float(np.dot(w, grad_t))
    measure_k = float(mask.sum() * vol)
    T_drift = (1.0 / c**2) * (1.0 + cap) * params.chi**2 * id_value * mu_plus ** (2 * params.q_exp - m - 1) * measure_k

    slope = 0.0
    for v in vals:
        slope = max(slope, _psi_slope(v[mask].ravel(), k, H, c))

    gain = max(lhs_sup - initial, 0.0)
    bracket = T_drift + T_grad
    if gain == 0.0:
        gamma = None
    elif bracket == 0.0:
        gamma = math.inf
    else:
        gamma = gain / bracket
    return LogFunctionalReport(
        k=k,
        H=H,
        c=c,
        psi_max=float(max(p[mask].max() for p in psi_slices)),
        psi_cap=cap,
        slope_max=slope,
        lhs_sup=lhs_sup,
        initial=initial,
        T_drift=T_drift,
        T_grad_zeta=T_grad,
        gamma=gamma,
        notes={"far_time": far.time, "u_floor": u_floor},
    )


# ---------------------------------------------------------------- primitive chain


def key_primitive_chain(u: float, k: float, m: float, tol: float = 1e-9) -> dict:
    """Evaluate ``1/2 m k^(m-1) (k-u)^2 <= int_u^k (k^m - s^m) ds <= k^m (k-u) <= k^(m+1)``.

    The integral is computed by adaptive quadrature; each inequality is
    accepted with slack ``tol`` (relative to ``k^(m+1)``).
    """
    if not (0 <= u < k and 0 < m < 1):
        raise ValueError("need 0 <= u < k and 0 < m < 1")
    a = 0.5 * m * k ** (m - 1) * (k - u) ** 2
    b, _ = integrate.quad(lambda s: k**m - s**m, u, k, epsabs=1e-13 * k ** (m + 1), epsrel=1e-11, limit=200)
    c = k**m * (k - u)
    d = k ** (m + 1)
    slack = tol * max(d, 1.0)
    return {
        "lower": a,
        "integral": b,
        "middle": c,
        "upper": d,
        "ok": bool(a <= b + slack and b <= c + slack and c <= d + slack),
    }
