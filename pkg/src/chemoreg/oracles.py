"""Reference solutions and parabolic-norm apparatus.

* the Barenblatt (ZKB) profile of the fast-diffusion equation ``u_t = Lap(u^m)``,
* quadrature versions of ``L^p``, ``L^{q,r}`` and ``V^p`` norms over cylinders,
* the parabolic embedding inequality and the heat-equation ``L^p`` bound, both
  evaluated on gridded data with fitted constants.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .grid import (
    Domain,
    FieldSeries,
    IntrinsicCylinder,
    ScalarField,
    cube_mask,
    cylinder_window,
    window_weights,
)
from .operators import grad_sq_cells

__all__ = [
    "BarenblattParams",
    "barenblatt",
    "barenblatt_field",
    "barenblatt_series",
    "ParabolicNorms",
    "lp_norm",
    "lqr_norm",
    "vp_norm",
    "embedding_check",
    "heat_estimate_check",
]


@dataclass(frozen=True)
class BarenblattParams:
    m: float
    dim: int
    mass: float
    t_offset: float

    def __post_init__(self):
        lower = max(self.dim - 2, 0) / self.dim
        if not (lower < self.m < 1):
            raise ValueError(
                f"Barenblatt profile has finite mass only for {lower:.6g} < m < 1 (m = {self.m})"
            )
        if not (self.mass > 0 and self.t_offset > 0):
            raise ValueError("mass and t_offset must be positive")

    @property
    def alpha(self) -> float:
        return self.dim / (self.dim * (self.m - 1) + 2)

    @property
    def beta(self) -> float:
        return self.alpha / self.dim

    @property
    def k(self) -> float:
        return (1 - self.m) * self.alpha / (2 * self.m * self.dim)

    @property
    def constant(self) -> float:
        """``C`` such that the profile carries total mass ``mass``.

        With ``p = 1/(1-m)`` the mass is ``C^{N/2-p} k^{-N/2} pi^{N/2} G(p-N/2)/G(p)``.
        """
        p = 1.0 / (1.0 - self.m)
        n2 = self.dim / 2.0
        unit = math.pi**n2 * math.gamma(p - n2) / math.gamma(p) * self.k ** (-n2)
        return (self.mass / unit) ** (1.0 / (n2 - p))


def barenblatt(params: BarenblattParams, x, t):
    """Evaluate ``U(x, t)``; ``x`` is ``|x|`` or an array whose last axis holds coordinates.

    For ``dim == 1`` a plain array of positions is accepted.
    """
    s = np.asarray(t, dtype=float) + params.t_offset
    if np.any(s <= 0):
        raise ValueError("t + t_offset must be positive")
    x = np.asarray(x, dtype=float)
    r2 = x * x if (params.dim == 1 or x.ndim == 0) else np.sum(x * x, axis=-1)
    base = params.constant + params.k * r2 * s ** (-2 * params.beta)
    return s ** (-params.alpha) * base ** (-1.0 / (1.0 - params.m))


def barenblatt_field(params: BarenblattParams, domain: Domain, t: float, center=0.0) -> ScalarField:
    """Profile sampled at cell centres (periodic-minimal distance to ``center``)."""
    if params.dim != domain.dim:
        raise ValueError("dimension mismatch")
    r2 = domain.radius_squared(center)
    s = t + params.t_offset
    if s <= 0:
        raise ValueError("t + t_offset must be positive")
    base = params.constant + params.k * r2 * s ** (-2 * params.beta)
    return ScalarField(domain, s ** (-params.alpha) * base ** (-1.0 / (1.0 - params.m)), t)


def barenblatt_series(params: BarenblattParams, domain: Domain, times, center=0.0) -> FieldSeries:
    """Exact profile sampled at every time in ``times`` (increasing)."""
    return FieldSeries([barenblatt_field(params, domain, float(t), center) for t in times])


@dataclass(frozen=True)
class ParabolicNorms:
    """Hölder pair ``(l, r)``, the paired exponents ``(l_tilde, r_tilde)`` and embedding exponent.

    The pairing is ``1 - 1/l = 2(1+kappa)/l_tilde`` (same for ``r``), and
    ``q_embed = p(N+s)/N``.
    """

    l_exp: float
    r_exp: float
    kappa: float
    p: float = 2.0
    s: float = 2.0
    dim: int = 1

    def __post_init__(self):
        if not (self.l_exp > 1 and self.r_exp > 1 and self.kappa > 0):
            raise ValueError("need l > 1, r > 1, kappa > 0")

    @property
    def l_tilde(self) -> float:
        return 2 * (1 + self.kappa) / (1 - 1 / self.l_exp)

    @property
    def r_tilde(self) -> float:
        return 2 * (1 + self.kappa) / (1 - 1 / self.r_exp)

    @property
    def q_embed(self) -> float:
        return self.p * (self.dim + self.s) / self.dim

    @staticmethod
    def from_tildes(l_tilde: float, r_tilde: float, kappa: float, **kw) -> "ParabolicNorms":
        """Invert the pairing: ``l = 1 / (1 - 2(1+kappa)/l_tilde)``."""
        l_exp = 1.0 / (1.0 - 2 * (1 + kappa) / l_tilde)
        r_exp = 1.0 / (1.0 - 2 * (1 + kappa) / r_tilde)
        return ParabolicNorms(l_exp, r_exp, kappa, **kw)


def _power_sum(values: np.ndarray, p: float, weight: float) -> float:
    a = np.abs(values)
    if math.isinf(p):
        return float(a.max()) if a.size else 0.0
    return float((a**p).sum() * weight) ** (1.0 / p)


def lp_norm(field: ScalarField | np.ndarray, p: float, cube=None, cell_volume: float | None = None) -> float:
    """``(sum |w|^p h^N)^(1/p)`` over the whole box or the cells of ``cube``; ``p = inf`` is the max."""
    if p < 1:
        raise ValueError("p must be >= 1")
    if isinstance(field, ScalarField):
        values, dom = field.values, field.domain
        vol = dom.cell_volume
        if cube is not None:
            values = values[cube_mask(dom, cube)]
    else:
        values = np.asarray(field, dtype=float)
        if cell_volume is None:
            raise ValueError("cell_volume needed for raw arrays")
        vol = cell_volume
    return _power_sum(values, p, vol)


def _window(series: FieldSeries, cylinder: IntrinsicCylinder):
    times, vals = cylinder_window(series, cylinder)
    mask = cube_mask(series.domain, cylinder.cube)
    w = window_weights(times, cylinder.t_start, cylinder.t_end)
    return times, vals, mask, w


def lqr_norm(series: FieldSeries, cylinder: IntrinsicCylinder, q: float, r: float) -> float:
    """``( int ( int_K |w|^q dx )^{r/q} dt )^{1/r}``; ``r = inf`` takes the max over slices."""
    if q < 1 or r < 1:
        raise ValueError("q, r must be >= 1")
    _, vals, mask, w = _window(series, cylinder)
    vol = series.domain.cell_volume
    per_slice = np.array([_power_sum(v[mask], q, vol) for v in vals])
    if math.isinf(r):
        return float(per_slice.max())
    return float(np.dot(w, per_slice**r)) ** (1.0 / r)


def vp_norm(series: FieldSeries, cylinder: IntrinsicCylinder, p: float) -> float:
    """``sup_t ||w||_{L^p(K)} + ||grad w||_{L^p(Q)}``."""
    _, vals, mask, w = _window(series, cylinder)
    dom = series.domain
    vol = dom.cell_volume
    sup = max(_power_sum(v[mask], p, vol) for v in vals)
    grad_p = np.array(
        [float((grad_sq_cells(v, dom.spacing)[mask] ** (p / 2)).sum() * vol) for v in vals]
    )
    return sup + float(np.dot(w, grad_p)) ** (1.0 / p)


def embedding_check(series: FieldSeries, cylinder: IntrinsicCylinder, p: float, s: float) -> dict:
    """Both sides of the parabolic embedding inequality and the implied constant.

    ``lhs = int int |w|^q`` with ``q = p(N+s)/N``, ``rhs_product =
    (int int |grad w|^p) (sup_t int |w|^s)^{p/N}``, ``gamma_estimate =
    (lhs/rhs_product)^{1/q}`` (``None`` when both sides vanish).
    The field is zeroed outside the cube before differencing.
    """
    _, vals, mask, w = _window(series, cylinder)
    dom = series.domain
    n = dom.dim
    vol = dom.cell_volume
    q = p * (n + s) / n
    vals = np.where(mask, vals, 0.0)
    lhs_t = np.array([float((np.abs(v) ** q).sum() * vol) for v in vals])
    grad_t = np.array([float((grad_sq_cells(v, dom.spacing) ** (p / 2)).sum() * vol) for v in vals])
    sup_s = max(float((np.abs(v) ** s).sum() * vol) for v in vals)
    lhs = float(np.dot(w, lhs_t))
    rhs = float(np.dot(w, grad_t)) * sup_s ** (p / n)
    if rhs == 0.0:
        if lhs > 0.0:
            raise ValueError("rhs vanishes with lhs > 0: field does not vanish on the cube boundary")
        gamma = None
    else:
        gamma = (lhs / rhs) ** (1.0 / q)
    return {"lhs": lhs, "rhs_product": rhs, "gamma_estimate": gamma, "q": q}


def heat_estimate_check(v_series: FieldSeries, u_series: FieldSeries, p: float, p0: float, dim: int | None = None) -> dict:
    """Fit the smallest ``C0`` with ``||v(t)||_p <= ||v0||_p + C0 sup_s ||u(s)||_{p0}``.

    ``u_series`` supplies the source term; its sup is taken over its stored
    snapshots up to the last ``v`` time. For ``p == 2`` the gradient line is
    fitted too (``grad_c0``).
    """
    n = v_series.domain.dim if dim is None else dim
    inv = lambda x: 0.0 if math.isinf(x) else 1.0 / x  # noqa: E731
    if not (1 <= p0 <= p):
        raise ValueError("need 1 <= p0 <= p")
    if not inv(p0) - inv(p) < 1.0 / n:
        raise ValueError(f"1/p0 - 1/p < 1/N violated ({inv(p0) - inv(p):.6g} >= {1.0 / n:.6g})")
    vol = v_series.domain.cell_volume
    h = v_series.domain.spacing
    lhs = np.array([_power_sum(s.values, p, vol) for s in v_series.snapshots])
    t_last = v_series.times[-1]
    src = max(_power_sum(s.values, p0, vol) for s in u_series.snapshots if s.time <= t_last + 1e-12)
    excess = np.maximum(lhs - lhs[0], 0.0)
    c0 = _fit_ratio(excess, src)
    out = {
        "lhs_series": lhs.tolist(),
        "times": v_series.times.tolist(),
        "source_norm": src,
        "c0": c0,
        "rhs_bound": lhs[0] + (c0 if c0 is not None and math.isfinite(c0) else math.inf) * src,
        "satisfied": c0 is not None and math.isfinite(c0),
    }
    if p == 2:
        g = np.array([math.sqrt(grad_sq_cells(s.values, h).sum() * vol) for s in v_series.snapshots])
        out["grad_c0"] = _fit_ratio(np.maximum(g - g[0], 0.0), src)
    return out


def _fit_ratio(excess: np.ndarray, src: float) -> float:
    top = float(excess.max())
    if top == 0.0:
        return 0.0
    return top / src if src > 0 else math.inf
