"""De Giorgi iteration machinery on gridded data.

* the two-sequence recursion and its smallness threshold,
* the isoperimetric (De Giorgi) inequality in its divided form,
* the normalized level-set sequences ``X_n``, ``Y_n`` of a shrinking family,
* the two-alternative oscillation-decay driver and its supporting checks.

Cubes are described by their half-edge (``Cube.radius``) everywhere except
in the isoperimetric inequality, whose ``R`` is the edge length.  Space-time
measures are slice measures integrated with the cylinder's window weights,
so ``|Q| = |K| * theta R^2`` and normalized measures lie in ``[0, 1]``.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .grid import (
    Cube,
    FieldSeries,
    IntrinsicCylinder,
    ScalarField,
    cube_axis_indices,
    cube_mask,
    cube_measure,
    cylinder_window,
    window_weights,
)
from .operators import grad_sq_cells
from .functionals import default_exponents
from .oracles import ParabolicNorms

__all__ = [
    "GeoIterParams",
    "fast_geometric_iterate",
    "geometric_threshold",
    "nu_lemma_below",
    "isoperimetric_check",
    "band_variation",
    "ShrinkingFamily",
    "measure_sequences",
    "AlternativeConfig",
    "degiorgi_lemma_below",
    "degiorgi_lemma_above",
    "DecayLevel",
    "DecayTrace",
    "oscillation_decay",
    "time_propagation_check",
    "shrinking_measure_check",
    "nu_bar_star",
]

CONVERGED_BELOW = 1e-10
_TIME_TOL = 1e-9
_LOG_OVERFLOW = 700.0


# ---------------------------------------------------------------- fast geometric convergence


@dataclass(frozen=True)
class GeoIterParams:
    c: float
    b: float
    alpha: float
    kappa: float

    def __post_init__(self):
        # c = 1 is admitted: the threshold formula is still meaningful there
        if not (self.c >= 1 and self.b > 1 and self.alpha > 0 and self.kappa > 0):
            raise ValueError("need c >= 1, b > 1, alpha > 0, kappa > 0")

    @property
    def sigma(self) -> float:
        return min(self.kappa, self.alpha)

    @property
    def nu0(self) -> float:
        return geometric_threshold(self.c, self.b, self.alpha, self.kappa)

    @property
    def log_nu0(self) -> float:
        s = self.sigma
        return -(1 + self.kappa) / s * math.log(2 * self.c) - (1 + self.kappa) / s**2 * math.log(self.b)


def geometric_threshold(c: float, b: float, alpha: float, kappa: float) -> float:
    """``(2c)^(-(1+kappa)/sigma) * b^(-(1+kappa)/sigma^2)`` with ``sigma = min(kappa, alpha)``."""
    s = min(kappa, alpha)
    return (2 * c) ** (-(1 + kappa) / s) * b ** (-(1 + kappa) / s**2)


def nu_lemma_below(c3: float, dim: int) -> float:
    """Smallness threshold of the below-mode lemma: ``c = C3, b = 16, alpha = 2/(N+2), kappa = 2/N``."""
    return geometric_threshold(c3, 16.0, 2.0 / (dim + 2), 2.0 / dim)


def _log(x: float) -> float:
    return math.log(x) if x > 0 else -math.inf


def fast_geometric_iterate(params: GeoIterParams, X0: float, Y0: float, n_max: int = 200) -> dict:
    """Iterate the recursion with equality, in log space.

    Stops as soon as both terms are below ``1e-10`` (converged) or a term
    overflows (diverged); otherwise runs ``n_max`` steps.
    """
    if X0 < 0 or Y0 < 0:
        raise ValueError("X0, Y0 must be nonnegative")
    c, b, a, k = params.c, params.b, params.alpha, params.kappa
    lc, lb = math.log(c), math.log(b)
    lx, ly = _log(X0), _log(Y0)
    traj = [(float(X0), float(Y0))]
    log_tol = math.log(CONVERGED_BELOW)
    converged = lx < log_tol and ly < log_tol
    diverged = False
    n = 0
    while not converged and n < n_max:
        pre = lc + n * lb
        nx = pre + np.logaddexp((1 + a) * lx, a * lx + (1 + k) * ly)
        ny = pre + np.logaddexp(lx, (1 + k) * ly)
        lx, ly = float(nx), float(ny)
        n += 1
        if lx > _LOG_OVERFLOW or ly > _LOG_OVERFLOW:
            diverged = True
            traj.append((math.inf if lx > _LOG_OVERFLOW else math.exp(lx), math.inf if ly > _LOG_OVERFLOW else math.exp(ly)))
            break
        traj.append((math.exp(lx), math.exp(ly)))
        converged = lx < log_tol and ly < log_tol
    return {"converged": bool(converged), "diverged": diverged, "iterations": n, "trajectory": traj}


# ---------------------------------------------------------------- isoperimetric inequality


def _cube_block(field: ScalarField, cube: Cube) -> np.ndarray:
    axes = cube_axis_indices(field.domain, cube)
    if any(len(a) == 0 for a in axes):
        raise ValueError("cube contains no cell centres")
    return field.values[np.ix_(*axes)]


def band_variation(block: np.ndarray, k: float, l: float, h: float) -> float:
    """``int_{k<w<l} |Dw|`` as the face total variation of ``clip(w, k, l)`` inside the block.

    Differences are taken only between neighbouring cells of the block (no
    wrap).  In 1D this is the exact coarea value of the clipped profile.
    """
    c = np.clip(block, k, l)
    total = 0.0
    for a in range(c.ndim):
        total += float(np.abs(np.diff(c, axis=a)).sum())
    return total * h ** (c.ndim - 1)


def isoperimetric_check(field: ScalarField, cube: Cube, k: float, l: float) -> dict:
    """Divided isoperimetric inequality ``(l-k)|{w<k}| <= gamma_D R^(N+1) / |{w>l}| * int_{k<w<l} |Dw|``.

    ``R`` is the cube's edge length.  Returns ``gamma_fit = None`` when
    ``|{w > l}| = 0``; ``inf`` flags a positive left side with zero variation.
    """
    if not k < l:
        raise ValueError("need k < l")
    dom = field.domain
    block = _cube_block(field, cube)
    vol = dom.cell_volume
    below = float(np.count_nonzero(block < k) * vol)
    above = float(np.count_nonzero(block > l) * vol)
    edge = cube.edge
    n = dom.dim
    lhs = (l - k) * below
    var = band_variation(block, k, l, dom.spacing)
    out = {"lhs": lhs, "measure_below": below, "measure_above": above, "variation": var, "R": edge}
    if above == 0.0:
        out.update(rhs_over_gamma=None, gamma_fit=None)
        return out
    rhs = edge ** (n + 1) / above * var
    out["rhs_over_gamma"] = rhs
    if lhs == 0.0:
        out["gamma_fit"] = 0.0
    elif rhs == 0.0:
        out["gamma_fit"] = math.inf
    else:
        out["gamma_fit"] = lhs / rhs
    return out


# ---------------------------------------------------------------- helpers on cylinders


def _window(series: FieldSeries, cyl: IntrinsicCylinder):
    times, vals = cylinder_window(series, cyl)
    w = window_weights(times, cyl.t_start, cyl.t_end)
    mask = cube_mask(series.domain, cyl.cube)
    return times, vals, w, mask


def _extrema(series: FieldSeries, cyl: IntrinsicCylinder) -> tuple[float, float]:
    _, vals, _, mask = _window(series, cyl)
    sel = vals[:, mask]
    return float(sel.min()), float(sel.max())


def _spacetime_fraction(series: FieldSeries, cyl: IntrinsicCylinder, pred) -> tuple[float, float]:
    """``(|{pred} cap Q|, |Q|)`` with slice measures integrated by the window weights."""
    _, vals, w, mask = _window(series, cyl)
    vol = series.domain.cell_volume
    counts = np.array([np.count_nonzero(pred(v) & mask) for v in vals], dtype=float) * vol
    q = float(mask.sum() * vol) * cyl.duration
    return float(np.dot(w, counts)), q


def _fits_series(series: FieldSeries, cyl: IntrinsicCylinder) -> bool:
    t = series.times
    tol = _TIME_TOL * max(1.0, abs(cyl.t_end))
    return cyl.t_start >= t[0] - tol and cyl.t_end <= t[-1] + tol


def _contains(outer: IntrinsicCylinder, inner: IntrinsicCylinder, tol: float = 1e-12) -> bool:
    """Coordinate test ``inner subset outer`` (same centre assumed compared per axis)."""
    co = np.asarray(outer.cube.center, dtype=float)
    ci = np.asarray(inner.cube.center, dtype=float)
    if co.size != ci.size:
        co = np.broadcast_to(co, np.broadcast(co, ci).shape)
        ci = np.broadcast_to(ci, co.shape)
    space = bool(np.all(np.abs(ci - co) + inner.radius <= outer.radius * (1 + tol) + tol))
    time = inner.t_end <= outer.t_end + tol and inner.t_start >= outer.t_start - tol * max(1.0, abs(outer.t_start))
    return space and time


# ---------------------------------------------------------------- shrinking families


@dataclass(frozen=True)
class ShrinkingFamily:
    """Levels ``k_n`` and radii ``R_n = R + R/2^n`` of the below/above lemmas."""

    center: tuple[float, ...]
    R: float
    t_vertex: float
    mu: float
    omega: float
    xi: float = 0.5
    a: float = 0.5
    mode: str = "below"

    def __post_init__(self):
        if self.mode not in ("below", "above"):
            raise ValueError("mode must be 'below' or 'above'")
        if not (0 < self.xi < 1 and 0 < self.a < 1):
            raise ValueError("xi and a must lie in (0, 1)")
        object.__setattr__(self, "center", tuple(np.atleast_1d(np.asarray(self.center, dtype=float)).tolist()))

    def xi_n(self, n: int) -> float:
        return self.a * self.xi + (1 - self.a) * self.xi / 2**n

    def radius(self, n: int) -> float:
        return self.R + self.R / 2**n

    def level(self, n: int) -> float:
        """``mu^- + xi_n omega`` (below) or ``mu^+ - xi_n omega`` (above)."""
        if self.mode == "below":
            return self.mu + self.xi_n(n) * self.omega
        return self.mu - self.xi_n(n) * self.omega

    def cylinder(self, n: int, theta: float) -> IntrinsicCylinder:
        return IntrinsicCylinder(Cube(self.center, self.radius(n)), self.t_vertex, theta)


def measure_sequences(
    series: FieldSeries, family: ShrinkingFamily, theta: float, exponents: ParabolicNorms | None = None, n_levels: int = 6
) -> dict:
    """``X_n = |A_n| / |Q_n|`` and ``Y_n = (int |A_n(t)|^(r~/l~) dt)^(2/r~) / |Q_n|^(N/(N+2))``."""
    dom = series.domain
    ex = exponents if exponents is not None else default_exponents(dom.dim)
    n_dim = dom.dim
    vol = dom.cell_volume
    X, Y, levels = [], [], []
    for n in range(n_levels):
        cyl = family.cylinder(n, theta)
        k = family.level(n)
        _, vals, w, mask = _window(series, cyl)
        hit = (vals < k) if family.mode == "below" else (vals > k)
        slices = (hit & mask).reshape(len(vals), -1).sum(axis=1) * vol
        q = float(mask.sum() * vol) * cyl.duration
        X.append(float(np.dot(w, slices)) / q)
        Y.append(float(np.dot(w, slices ** (ex.r_tilde / ex.l_tilde))) ** (2 / ex.r_tilde) / q ** (n_dim / (n_dim + 2)))
        levels.append(k)
    return {"X": X, "Y": Y, "levels": levels}


# ---------------------------------------------------------------- alternatives


@dataclass(frozen=True)
class AlternativeConfig:
    xi: float = 0.5
    a: float = 0.5
    nu: float = 0.5
    n_star: int = 4
    q_star: int = 6
    lam: float | None = None
    tolerance: float = 0.05

    def __post_init__(self):
        if not (0 < self.xi < 1 and 0 < self.a < 1 and 0 < self.nu < 1):
            raise ValueError("xi, a and nu must lie in (0, 1)")
        if int(self.n_star) != self.n_star or self.n_star < 1 or int(self.q_star) != self.q_star or self.q_star < 1:
            raise ValueError("n_star and q_star must be positive integers")
        if not self.lambda_ > 1:
            raise ValueError("lambda must exceed 1")

    @property
    def lambda_(self) -> float:
        return float(self.n_star + self.q_star) if self.lam is None else float(self.lam)

    @property
    def b(self) -> float:
        return math.sqrt(32.0 / self.nu)

    @property
    def delta(self) -> float:
        return 1.0 - 2.0 ** -(self.q_star + self.n_star + 1)

    @property
    def contraction_bound(self) -> float:
        return max(self.delta, 0.75)


def _conclusion_violations(series, cyl, pred) -> tuple[int, dict | None]:
    times, vals, _, mask = _window(series, cyl)
    bad = 0
    first = None
    for t, v in zip(times, vals):
        viol = mask & ~pred(v)
        cnt = int(np.count_nonzero(viol))
        if cnt and first is None:
            idx = tuple(int(i) for i in np.argwhere(viol)[0])
            first = {"t": float(t), "cell": list(idx), "value": float(v[idx])}
        bad += cnt
    return bad, first


def degiorgi_lemma_below(
    series: FieldSeries,
    cyl_2R: IntrinsicCylinder,
    theta: float | None = None,
    config: AlternativeConfig | None = None,
    *,
    nu: float | None = None,
    conclusion_radius: float | None = None,
    mu_minus: float | None = None,
    omega: float | None = None,
) -> dict:
    """Hypothesis ``|{u < mu^- + xi omega} cap Q_2R| <= nu |Q_2R|`` and, if it holds, ``u > mu^- + a xi omega`` on ``Q_R``."""
    cfg = config if config is not None else AlternativeConfig()
    if theta is not None:
        cyl_2R = IntrinsicCylinder(cyl_2R.cube, cyl_2R.t_end, theta)
    lo, hi = _extrema(series, cyl_2R)
    mu = lo if mu_minus is None else mu_minus
    om = (hi - lo) if omega is None else omega
    nu_used = cfg.nu if nu is None else nu
    rep = {"mode": "below", "mu_minus": mu, "omega": om, "nu": nu_used, "xi": cfg.xi, "a": cfg.a}
    if not om > 0:
        rep.update(applicable=False, fired=False, conclusion_verified=None, hypothesis_measure=None, reason="omega = 0")
        return rep
    level = mu + cfg.xi * om
    meas, q = _spacetime_fraction(series, cyl_2R, lambda v: v < level)
    fired = meas <= nu_used * q
    rep.update(applicable=True, hypothesis_measure=meas, cylinder_measure=q, hypothesis_ratio=meas / q, fired=fired)
    if fired:
        r = cyl_2R.radius / 2 if conclusion_radius is None else conclusion_radius
        inner = IntrinsicCylinder(cyl_2R.cube.scaled(r), cyl_2R.t_end, cyl_2R.theta)
        target = mu + cfg.a * cfg.xi * om
        bad, first = _conclusion_violations(series, inner, lambda v: v > target)
        rep.update(conclusion_radius=r, conclusion_level=target, violations=bad, first_violation=first, conclusion_verified=bad == 0)
    else:
        rep["conclusion_verified"] = None
    return rep


def degiorgi_lemma_above(
    series: FieldSeries,
    cyl_2R: IntrinsicCylinder,
    theta: float | None = None,
    config: AlternativeConfig | None = None,
    mu_plus: float | None = None,
    omega: float | None = None,
    *,
    nu: float | None = None,
    conclusion_radius: float | None = None,
) -> dict:
    """Mirror of :func:`degiorgi_lemma_below` around the supremum, gated on ``mu^+ <= (13/12) omega``."""
    cfg = config if config is not None else AlternativeConfig()
    if theta is not None:
        cyl_2R = IntrinsicCylinder(cyl_2R.cube, cyl_2R.t_end, theta)
    lo, hi = _extrema(series, cyl_2R)
    mu = hi if mu_plus is None else mu_plus
    om = (hi - lo) if omega is None else omega
    nu_used = cfg.nu if nu is None else nu
    rep = {"mode": "above", "mu_plus": mu, "omega": om, "nu": nu_used, "xi": cfg.xi, "a": cfg.a}
    if not om > 0:
        rep.update(applicable=False, fired=False, conclusion_verified=None, hypothesis_measure=None, reason="omega = 0")
        return rep
    if mu > 13.0 / 12.0 * om:
        rep.update(applicable=False, fired=False, conclusion_verified=None, hypothesis_measure=None, reason="mu_plus > (13/12) omega")
        return rep
    level = mu - cfg.xi * om
    meas, q = _spacetime_fraction(series, cyl_2R, lambda v: v > level)
    fired = meas <= nu_used * q
    rep.update(applicable=True, hypothesis_measure=meas, cylinder_measure=q, hypothesis_ratio=meas / q, fired=fired)
    if fired:
        r = cyl_2R.radius / 2 if conclusion_radius is None else conclusion_radius
        inner = IntrinsicCylinder(cyl_2R.cube.scaled(r), cyl_2R.t_end, cyl_2R.theta)
        target = mu - cfg.a * cfg.xi * om
        # strict, so the report is the exact mirror of the below mode
        bad, first = _conclusion_violations(series, inner, lambda v: v < target)
        rep.update(conclusion_radius=r, conclusion_level=target, violations=bad, first_violation=first, conclusion_verified=bad == 0)
    else:
        rep["conclusion_verified"] = None
    return rep


# ---------------------------------------------------------------- oscillation decay


@dataclass
class DecayLevel:
    n: int
    R_n: float
    omega_bar: float
    theta_n: float
    t_start: float
    omega_n: float
    mu_minus: float
    mu_plus: float
    osc_within_bound: bool
    first_alt_ratio: float
    alternative: str
    predicted_bound: float
    omega_next: float
    ratio: float | None
    nested: bool
    nested_in_quarter: bool
    second_alt_window: bool
    mu_plus_ratio_ok: bool
    passed: bool


@dataclass
class DecayTrace:
    levels: list[DecayLevel]
    center: tuple[float, ...]
    t_vertex: float
    R0: float
    m: float
    b: float
    delta: float
    nu: float
    n_star: int
    q_star: int
    lam: float
    lambda_ok: bool
    truncated: bool
    passes: bool
    notes: dict = field(default_factory=dict)

    def to_record(self) -> dict:
        rec = asdict(self)
        rec["center"] = list(self.center)
        return rec

    def to_ndjson_lines(self) -> list[str]:
        head = {k: v for k, v in self.to_record().items() if k != "levels"}
        lines = []
        for lev in self.levels:
            rec = {"type": "decay_level", **asdict(lev), **{f"trace_{k}": v for k, v in head.items()}}
            lines.append(json.dumps(rec, sort_keys=True))
        return lines


def oscillation_decay(
    series: FieldSeries,
    start_cylinder: IntrinsicCylinder,
    config: AlternativeConfig | None = None,
    *,
    m: float,
    n_levels: int = 4,
) -> DecayTrace:
    """Measure the oscillation along ``Q_n = K_{R_n} x (t0 - omega_n^(1-m) R_n^2, t0]``.

    ``R_n = R0 / b^n``.  The intrinsic scale follows the prescribed sequence
    ``omega_bar_0 = osc over start_cylinder``, ``omega_bar_{n+1} = delta *
    omega_bar_n``; the measured oscillation ``omega_n`` of every ``Q_n`` is
    compared against it and against the previous level.  A level is
    recorded only if ``Q_n`` and ``Q_{n+1}`` both lie inside the stored time
    span and contain cell centres; otherwise the trace is flagged truncated.
    """
    cfg = config if config is not None else AlternativeConfig()
    if not 0 < m < 1:
        raise ValueError("m must lie in (0, 1)")
    b, delta, nu = cfg.b, cfg.delta, cfg.nu
    bound = cfg.contraction_bound
    center = start_cylinder.cube.center
    t0 = start_cylinder.t_end
    R0 = start_cylinder.radius

    def base(**extra):
        return DecayTrace(
            levels=[], center=center, t_vertex=t0, R0=R0, m=m, b=b, delta=delta, nu=nu,
            n_star=cfg.n_star, q_star=cfg.q_star, lam=cfg.lambda_, lambda_ok=False,
            truncated=False, passes=True, notes=dict(extra),
        )

    def usable(cyl):
        if not _fits_series(series, cyl):
            return False
        try:
            if any(len(a) == 0 for a in cube_axis_indices(series.domain, cyl.cube)):
                return False
            cylinder_window(series, cyl)
        except ValueError:
            return False
        return True

    if not usable(start_cylinder):
        tr = base(reason="start cylinder outside the stored data")
        tr.truncated, tr.passes = True, False
        return tr
    lo0, hi0 = _extrema(series, start_cylinder)
    omega_bar0 = hi0 - lo0
    trace = base()
    trace.lambda_ok = bool(R0 < omega_bar0**2 / cfg.lambda_)
    trace.notes["omega_bar0"] = omega_bar0
    if omega_bar0 == 0.0:
        trace.notes["reason"] = "constant on the start cylinder"
        return trace

    def cyl_at(n):
        ob = omega_bar0 * delta**n
        return IntrinsicCylinder(Cube(center, R0 / b**n), t0, ob ** (1 - m)), ob

    cur, ob = cyl_at(0)
    if not usable(cur):
        trace.truncated, trace.passes = True, False
        return trace
    lo, hi = _extrema(series, cur)
    for n in range(n_levels):
        nxt, ob_next = cyl_at(n + 1)
        if not usable(nxt):
            trace.truncated = True
            break
        om = hi - lo
        rn = cur.radius
        half = IntrinsicCylinder(cur.cube.scaled(rn / 2), t0, cur.theta)
        if om > 0:
            meas, q = _spacetime_fraction(series, half, lambda v, lv=lo + 0.5 * om: v <= lv)
            first_ratio = meas / q
        else:
            first_ratio = 0.0
        first = first_ratio <= nu
        quarter_star = IntrinsicCylinder(cur.cube.scaled(rn / 4), t0, 0.5 * nu * cur.theta)
        quarter = IntrinsicCylinder(cur.cube.scaled(rn / 4), t0, cur.theta)
        lo_n, hi_n = _extrema(series, nxt)
        om_next = hi_n - lo_n
        ratio = om_next / om if om > 0 else None
        lvl = DecayLevel(
            n=n,
            R_n=rn,
            omega_bar=ob,
            theta_n=cur.theta,
            t_start=cur.t_start,
            omega_n=om,
            mu_minus=lo,
            mu_plus=hi,
            osc_within_bound=bool(om <= ob * (1 + 1e-12)),
            first_alt_ratio=first_ratio,
            alternative="first" if first else "second",
            predicted_bound=0.75 if first else delta,
            omega_next=om_next,
            ratio=ratio,
            nested=_contains(cur, nxt),
            nested_in_quarter=_contains(quarter, nxt) and _contains(quarter_star, nxt),
            second_alt_window=bool(om > 0 and 0.5 * om < hi - 0.25 * om < 5.0 / 6.0 * om),
            mu_plus_ratio_ok=bool(om > 0 and hi <= 13.0 / 12.0 * om),
            passed=ratio is None or ratio <= bound + cfg.tolerance,
        )
        trace.levels.append(lvl)
        cur, ob, lo, hi = nxt, ob_next, lo_n, hi_n
    trace.passes = (not trace.truncated) and all(l.passed and l.nested and l.nested_in_quarter for l in trace.levels)
    return trace


# ---------------------------------------------------------------- second-alternative checks


def time_propagation_check(series: FieldSeries, cylinder: IntrinsicCylinder, config: AlternativeConfig | None = None) -> dict:
    """Seed ``|{u(s) < mu^- + omega/2} cap K| > (nu/2)|K|`` then ``|{u(t) > mu^+ - omega/2^n*} cap K| <= (1 - nu^2/4)|K|`` for ``t > s``.

    ``K`` is the cube of half the cylinder's radius; ``s`` ranges over the
    stored slices in ``(t0 - theta (R/2)^2, t0 - (nu/2) theta (R/2)^2)`` and
    the earliest seeding slice is used.
    """
    cfg = config if config is not None else AlternativeConfig()
    dom = series.domain
    lo, hi = _extrema(series, cylinder)
    om = hi - lo
    half_r = cylinder.radius / 2
    K = cylinder.cube.scaled(half_r)
    mask = cube_mask(dom, K)
    k_meas = float(mask.sum())
    t0, th = cylinder.t_end, cylinder.theta
    s_lo = t0 - th * half_r**2
    s_hi = t0 - 0.5 * cfg.nu * th * half_r**2
    times = series.times
    cand = np.flatnonzero((times > s_lo) & (times < s_hi))
    if cand.size == 0:
        raise ValueError(f"no stored slice in the seed window ({s_lo:.6g}, {s_hi:.6g})")
    rep = {"mu_minus": lo, "mu_plus": hi, "omega": om, "s_window": [s_lo, s_hi], "n_star": cfg.n_star, "nu": cfg.nu}
    seed = None
    for i in cand:
        v = series.snapshots[i].values
        frac = np.count_nonzero((v < lo + 0.5 * om) & mask) / k_meas
        if frac > 0.5 * cfg.nu:
            seed = int(i)
            rep["seed_fraction"] = float(frac)
            break
    if seed is None:
        rep.update(status="not_applicable", seed_time=None, passed=None)
        return rep
    rep["seed_time"] = float(times[seed])
    cap = 1.0 - cfg.nu**2 / 4
    level = hi - om / 2**cfg.n_star
    worst = 0.0
    checked = 0
    for i in range(seed + 1, len(times)):
        if times[i] > t0 + _TIME_TOL * max(1.0, abs(t0)):
            break
        v = series.snapshots[i].values
        frac = np.count_nonzero((v > level) & mask) / k_meas
        worst = max(worst, float(frac))
        checked += 1
        if frac > cap:
            rep.update(status="violated", passed=False, first_violation={"t": float(times[i]), "fraction": float(frac)},
                       cap=cap, slices_checked=checked, worst_fraction=worst)
            return rep
    rep.update(status="passed", passed=True, cap=cap, slices_checked=checked, worst_fraction=worst)
    return rep


def nu_bar_star(gamma2: float, q_star: int, nu: float) -> float:
    """``sqrt(gamma2 / ((q* - 2) nu^5))``."""
    if q_star < 3:
        raise ValueError("q_star must be at least 3")
    return math.sqrt(gamma2 / ((q_star - 2) * nu**5))


def shrinking_measure_check(series: FieldSeries, cylinder: IntrinsicCylinder, config: AlternativeConfig | None = None) -> dict:
    """Gradient bound for ``(u - k_j)_+`` on ``Q_{R/2}(theta*)`` and the final measure bound.

    ``theta* = (nu/2) theta`` with ``theta`` the cylinder's, ``k_j = mu^+ -
    omega/2^j`` for ``j = n*, ..., n* + q*``.  ``gamma_bar`` is the largest
    ratio of the measured gradient integral to ``(omega/2^j)^2 |Q| / (nu (R/2)^2)``;
    ``gamma_D`` is fitted slice by slice from the isoperimetric inequality.
    """
    cfg = config if config is not None else AlternativeConfig()
    if cfg.q_star < 3:
        raise ValueError("q_star must be at least 3")
    dom = series.domain
    lo, hi = _extrema(series, cylinder)
    om = hi - lo
    half_r = cylinder.radius / 2
    qs = IntrinsicCylinder(cylinder.cube.scaled(half_r), cylinder.t_end, 0.5 * cfg.nu * cylinder.theta)
    times, vals, w, mask = _window(series, qs)
    vol, h = dom.cell_volume, dom.spacing
    q_meas = float(mask.sum() * vol) * qs.duration
    js = list(range(cfg.n_star, cfg.n_star + cfg.q_star + 1))
    gamma_bar = 0.0
    grads = []
    for j in js:
        k = hi - om / 2**j
        g = [float(grad_sq_cells(np.maximum(v - k, 0.0), h)[mask].sum() * vol) for v in vals]
        G = float(np.dot(w, g))
        grads.append(G)
        scale = (om / 2**j) ** 2 * q_meas / (cfg.nu * half_r**2) if om > 0 else 0.0
        if G > 0:
            gamma_bar = max(gamma_bar, G / scale if scale > 0 else math.inf)
    gamma_d = 0.0
    for j in js[:-1]:
        k, l = hi - om / 2**j, hi - om / 2 ** (j + 1)
        if not k < l:
            continue
        for t, v in zip(times, vals):
            # the inequality is used with the roles of the two level sets swapped: apply it to -u
            rep = isoperimetric_check(ScalarField(dom, -v, float(t)), qs.cube, -l, -k)
            if rep["gamma_fit"] is not None and math.isfinite(rep["gamma_fit"]):
                gamma_d = max(gamma_d, rep["gamma_fit"])
    gamma2 = gamma_bar * (4 * gamma_d) ** 2
    nbs = nu_bar_star(gamma2, cfg.q_star, cfg.nu)
    k_last = hi - om / 2 ** (cfg.n_star + cfg.q_star)
    counts = np.array([np.count_nonzero((v > k_last) & mask) for v in vals], dtype=float) * vol
    a_last = float(np.dot(w, counts))
    return {
        "omega": om,
        "mu_plus": hi,
        "theta_star": qs.theta,
        "levels": [hi - om / 2**j for j in js],
        "grad_integrals": grads,
        "gamma_bar": gamma_bar,
        "gamma_D": gamma_d,
        "gamma2": gamma2,
        "nu_bar_star": nbs,
        "measure_last": a_last,
        "cylinder_measure": q_meas,
        "passed": bool(a_last <= nbs * q_meas + 1e-15 * q_meas),
    }
