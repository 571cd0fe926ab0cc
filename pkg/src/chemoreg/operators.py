"""Discrete operators and the two fluxes of the cell-density equation.

Faces are stored once per cell and axis: ``flux[axis][i]`` sits between cell
``i`` and cell ``i + e_axis`` (periodic), so every face is shared by exactly
two cells and the divergence telescopes to zero.

The diffusive flux is the face difference of ``u**m``; ``u**(m-1)`` is never
formed, so nothing is singular where ``u`` vanishes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "ModelParams",
    "FluxField",
    "gradient",
    "diffusive_flux",
    "drift_flux",
    "divergence",
    "grad_sq_cells",
    "grad_norm_cells",
    "shift",
]


def shift(a: np.ndarray, k: int, axis: int) -> np.ndarray:
    """Periodic shift by one cell: ``k=-1`` gives ``a[i+1]``, ``k=+1`` gives ``a[i-1]`` (like ``np.roll``)."""
    if a.ndim == 1:
        if k == -1:
            return np.concatenate((a[1:], a[:1]))
        return np.concatenate((a[-1:], a[:-1]))
    return np.roll(a, k, axis=axis)


@dataclass(frozen=True)
class ModelParams:
    """Constants of the coupled system.

    ``q_exp`` is the drift exponent (flux ``chi * u**(q_exp - 1) * grad v``)
    and ``decay_rate`` the damping of the chemoattractant equation.
    """

    m: float
    q_exp: float
    chi: float
    decay_rate: float
    dim: int = 1

    def __post_init__(self):
        for problem in self.violations():
            raise ValueError(problem)

    @property
    def m_lower(self) -> float:
        return max(self.dim - 2, 0) / (self.dim + 2)

    @property
    def q_upper(self) -> float:
        return (self.m + 1) * (self.dim + 2) / (2 * self.dim)

    def violations(self) -> list[str]:
        """Human-readable list of violated admissibility inequalities."""
        out = []
        if self.dim not in (1, 2, 3):
            out.append(f"dim must be 1, 2 or 3 (got {self.dim})")
            return out
        if not self.m < 1:
            out.append(f"m < 1 violated (m = {self.m})")
        if not self.m > self.m_lower:
            out.append(f"(N-2)+/(N+2) < m violated (m = {self.m}, bound {self.m_lower:.6g})")
        if not self.q_exp > 1:
            out.append(f"1 < q_exp violated (q_exp = {self.q_exp})")
        if not self.q_exp < self.q_upper:
            out.append(
                f"q_exp < (m+1)(N+2)/(2N) violated (q_exp = {self.q_exp}, bound {self.q_upper:.6g})"
            )
        if not self.chi >= 0:
            out.append(f"chi >= 0 violated (chi = {self.chi})")
        if not self.decay_rate > 0:
            out.append(f"decay_rate > 0 violated (decay_rate = {self.decay_rate})")
        return out


# one array per axis, each with the field's shape
FluxField = list


def gradient(w: np.ndarray, h: float) -> FluxField:
    """Face differences ``(w[i+1] - w[i]) / h`` along every axis, periodic."""
    w = np.asarray(w, dtype=float)
    return [(shift(w, -1, a) - w) / h for a in range(w.ndim)]


def diffusive_flux(u: np.ndarray, m: float, h: float) -> FluxField:
    """Face flux of ``grad(u**m)``."""
    u = np.asarray(u, dtype=float)
    if np.any(u < 0):
        raise ValueError("diffusive_flux needs u >= 0")
    return gradient(u**m, h)


def drift_flux(u: np.ndarray, v: np.ndarray, params: ModelParams, h: float) -> FluxField:
    """Donor-cell face flux of ``chi * u**(q-1) * grad v``.

    The donor is the cell on the low-``v`` side of the face (cells climb the
    chemoattractant gradient); a face with zero ``v`` difference carries no
    flux.
    """
    u = np.asarray(u, dtype=float)
    if np.any(u < 0):
        raise ValueError("drift_flux needs u >= 0")
    mob = u ** (params.q_exp - 1)
    out = []
    for a, g in enumerate(gradient(v, h)):
        right = shift(mob, -1, a)
        donor = np.where(g > 0, mob, np.where(g < 0, right, 0.0))
        out.append(donor * g * params.chi)
    return out


def divergence(flux: FluxField, h: float) -> np.ndarray:
    """Cellwise sum over axes of ``(F_right - F_left) / h``."""
    div = np.zeros_like(flux[0])
    for a, f in enumerate(flux):
        div += (f - shift(f, 1, a)) / h
    return div


def grad_sq_cells(w: np.ndarray, h: float) -> np.ndarray:
    """Cell-centred ``|grad w|^2``: per axis, the mean of the squared face differences on both sides.

    Summed over cells and multiplied by ``h^N`` this equals the face-based
    Dirichlet energy exactly.
    """
    out = np.zeros(np.shape(w))
    for a, g in enumerate(gradient(w, h)):
        g2 = g * g
        out += 0.5 * (g2 + shift(g2, 1, a))
    return out


def grad_norm_cells(w: np.ndarray, h: float) -> np.ndarray:
    return np.sqrt(grad_sq_cells(w, h))
