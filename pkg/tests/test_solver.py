import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from chemoreg.grid import ScalarField, make_domain
from chemoreg.operators import ModelParams
from chemoreg.solver import SolverConfig, SolverError, cfl_dt, run, step_u, step_v


def cfg(m=0.5, chi=0.0, q=1.2, alpha=1.0, dim=1, **kw):
    kw.setdefault("t_end", 0.01)
    kw.setdefault("snapshot_interval", 0.005)
    return SolverConfig(ModelParams(m, q, chi, alpha, dim), **kw)


def test_cfl_hand_example():
    c = cfg(u_floor=1e-3)
    dt = cfl_dt(np.zeros(16), np.zeros(16), c, 0.01)
    assert dt == pytest.approx(0.4 * 1e-4 / (2 * 0.5 * (1e-3) ** -0.5), rel=1e-12)
    assert dt == pytest.approx(1.265e-6, rel=1e-3)


def test_cfl_heat_limit():
    c = cfg(m=0.999999, u_floor=1e-3)
    assert cfl_dt(np.ones(16), np.zeros(16), c, 0.01) == pytest.approx(0.4 * 1e-4 / 2, rel=1e-5)


def test_cfl_flat_v_has_no_drift_term():
    c0 = cfg(chi=0.0, u_floor=1e-3)
    c1 = cfg(chi=0.7, u_floor=1e-3)
    u = np.linspace(0.1, 1, 16)
    assert cfl_dt(u, np.full(16, 3.0), c0, 0.01) == cfl_dt(u, np.full(16, 3.0), c1, 0.01)


def test_config_validation():
    with pytest.raises(ValueError):
        cfg(cfl_safety=0.0)
    with pytest.raises(ValueError):
        cfg(u_floor=0.0)


def test_step_u_constant_state():
    c = cfg(chi=0.5)
    u = np.full(16, 0.7)
    assert np.array_equal(step_u(u, np.full(16, 2.0), 1e-4, c, 0.1), u)


@given(arrays(float, (32,), elements=st.floats(0, 5)), arrays(float, (32,), elements=st.floats(0, 5)))
def test_step_u_conserves_mass_and_sign(u, v):
    c = cfg(m=0.6, chi=0.5, u_floor=1e-3)
    h = 1 / 16
    dt = cfl_dt(u, v, c, h)
    new = step_u(u, v, dt, c, h)
    assert new.min() >= 0
    assert abs(new.sum() - u.sum()) <= 1e-12 * max(u.sum(), 1e-300) + 1e-300


def test_step_v_constant_source():
    c = cfg(alpha=2.0)
    v = step_v(np.zeros(16), np.full(16, 3.0), 0.1, c, 0.1)
    assert np.allclose(v, 0.1 * 3.0 / (1 + 0.1 * 2.0), rtol=1e-13)


def test_step_v_heat_contraction():
    rng = np.random.default_rng(0)
    v = rng.random(64)
    new = step_v(v, np.zeros(64), 0.01, cfg(alpha=1e-300), 0.05)
    assert np.linalg.norm(new) <= np.linalg.norm(v)


@pytest.mark.parametrize("k", [1, 3, 7])
def test_step_v_fourier_mode(k):
    n, h, dt, a = 64, 1 / 32, 0.003, 0.5
    x = np.arange(n)
    v = np.cos(2 * np.pi * k * x / n)
    lam = (2 - 2 * np.cos(2 * np.pi * k / n)) / h**2
    new = step_v(v, np.zeros(n), dt, cfg(alpha=a), h)
    assert np.allclose(new, v / (1 + dt * (lam + a)), atol=1e-13)


def test_step_v_residual_failure_is_reported():
    with pytest.raises(SolverError):
        step_v(np.random.default_rng(1).random(16), np.zeros(16), 0.1, cfg(v_solver_tol=1e-30), 0.1)


def _gauss(dom, amp=1.0, w=0.2):
    return ScalarField(dom, amp * np.exp(-dom.radius_squared(0.0) / w**2))


def test_run_t_end_zero():
    dom = make_domain(1, 1.0, 32)
    r = run(_gauss(dom), _gauss(dom, 0.1), cfg(t_end=0.0))
    assert len(r.u) == 1 and len(r.v) == 1 and len(r.reports) == 1


def test_run_snapshots_aligned():
    dom = make_domain(1, 1.0, 32)
    r = run(_gauss(dom), _gauss(dom, 0.1), cfg(t_end=0.003, snapshot_interval=0.001))
    assert r.u.times.tolist() == [0.0, 0.001, 0.002, 0.003]


def test_u_independent_of_v_without_drift():
    dom = make_domain(1, 1.0, 32)
    a = run(_gauss(dom), ScalarField(dom, np.zeros(32)), cfg(t_end=0.002))
    b = run(_gauss(dom), _gauss(dom, 5.0, 0.05), cfg(t_end=0.002))
    assert np.array_equal(a.u.snapshots[-1].values, b.u.snapshots[-1].values)


def test_gaussian_run_positive_and_conservative():
    dom = make_domain(1, 1.0, 64)
    r = run(_gauss(dom, 0.3), _gauss(dom, 0.5), cfg(chi=0.5, t_end=0.01))
    mass = r.reports.column("mass_u")
    assert r.reports.column("min_u").min() >= 0
    assert np.abs(mass - mass[0]).max() / mass[0] < 1e-10


def test_v_duhamel_bound_on_snapshots():
    dom = make_domain(1, 1.0, 64)
    r = run(_gauss(dom), _gauss(dom, 0.5), cfg(chi=0.5, t_end=0.02, snapshot_interval=0.005))
    h = dom.spacing
    v0 = np.sqrt((r.v.snapshots[0].values ** 2).sum() * h)
    sup_u = max(np.sqrt((s.values**2).sum() * h) for s in r.u.snapshots)
    for s in r.v.snapshots:
        assert np.sqrt((s.values**2).sum() * h) <= v0 + s.time * sup_u + 1e-12


def test_step_log_rows():
    dom = make_domain(1, 1.0, 32)
    r = run(_gauss(dom), _gauss(dom, 0.1), cfg(t_end=0.001))
    rep = r.reports[-1]
    assert rep.t == pytest.approx(0.001) and rep.step == len(r.reports) - 1
    assert sum(r.u.dt_history) == pytest.approx(0.001, rel=1e-12)


def test_negative_initial_data_rejected():
    dom = make_domain(1, 1.0, 16)
    u = np.ones(16)
    u[0] = -1
    with pytest.raises(ValueError):
        run(ScalarField(dom, u), ScalarField(dom, np.zeros(16)), cfg())
