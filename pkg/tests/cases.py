"""Shared fixtures that are too bulky for conftest."""

import numpy as np

from chemoreg.degiorgi import AlternativeConfig
from chemoreg.grid import Cube, IntrinsicCylinder, make_domain
from chemoreg.oracles import BarenblattParams, barenblatt_series

M_BB = 0.5
T0 = 0.2
R0 = 0.1


def decay_times(omega0, cfg, n_levels, t0=T0, r0=R0, m=M_BB, per_level=16):
    """Snapshot times dense enough to resolve every level's time window."""
    ts = [np.linspace(t0 - r0**2, t0, 8)]
    for n in range(n_levels + 2):
        dur = (omega0 * cfg.delta**n) ** (1 - m) * (r0 / cfg.b**n) ** 2
        ts.append(np.linspace(t0 - dur, t0, per_level))
    return np.unique(np.concatenate(ts))


def barenblatt_decay_case(cells=8192, n_levels=4, cfg=None):
    """Exact Barenblatt samples around an interior point plus the start cylinder."""
    cfg = cfg or AlternativeConfig()
    bp = BarenblattParams(M_BB, 1, 50.0, 0.001)
    dom = make_domain(1, 0.15, cells)
    start = IntrinsicCylinder(Cube((0.0,), R0), T0, 1.0)
    coarse = barenblatt_series(bp, dom, np.linspace(T0 - R0**2, T0, 8))
    vals = coarse.stacked()
    omega0 = float(vals.max() - vals.min())
    series = barenblatt_series(bp, dom, decay_times(omega0, cfg, n_levels))
    return series, start, cfg
