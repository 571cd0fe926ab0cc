"""One test per acceptance criterion; each prints a single PASS/FAIL line."""

import csv
import json
import math
import time

import numpy as np
import pytest

from cases import M_BB, barenblatt_decay_case
from chemoreg.cli import EXIT_OK, main, sweep_geometric, sweep_isoperimetric
from chemoreg.degiorgi import isoperimetric_check, oscillation_decay
from chemoreg.functionals import (
    _resolve_id,
    default_exponents,
    energy_budget_above,
    energy_budget_below,
    key_primitive_chain,
    log_budget,
    make_cutoff,
)
from chemoreg.grid import Cube, FieldSeries, IntrinsicCylinder, ScalarField, cube_mask, cylinder_window, make_domain
from chemoreg.holder import SamplerConfig, holder_fit
from chemoreg.operators import ModelParams
from chemoreg.solver import SolverConfig, run
from conftest import ACCEPTANCE_LINES


@pytest.fixture
def verdict(request):
    tr = request.config.pluginmanager.get_plugin("terminalreporter")

    def emit(n, ok, text):
        line = f"AC{n} {'PASS' if ok else 'FAIL'}: {text}"
        ACCEPTANCE_LINES.append(line)
        if tr is not None:
            tr.write_line("")
            tr.write_line(line)
        assert ok, line

    return emit


def _steps(run_dir):
    with open(run_dir / "steps.csv") as fh:
        return list(csv.DictReader(fh))


MATRIX = [(m, chi) for m in (0.4, 0.6, 0.8) for chi in (0.0, 0.5)]


@pytest.fixture(scope="module")
def matrix_runs(tmp_path_factory):
    runs = {}
    for m, chi in MATRIX:
        out = tmp_path_factory.mktemp(f"m{m}_chi{chi}")
        code = main(["simulate", "--out", str(out), "--set", f"m={m}", "--set", f"chi={chi}", "--set", "q_exp=1.2",
                     "--set", "v0_amplitude=0.5", "--set", "u0_background=0.01"])
        assert code == EXIT_OK
        runs[(m, chi)] = out
    out = tmp_path_factory.mktemp("m0.6_chi0.5_2d")
    code = main(["simulate", "--out", str(out), "--set", "dim=2", "--set", "cells_per_dim=48", "--set", "t_end=0.004",
                 "--set", "u0_center=0,0", "--set", "v0_center=0,0", "--set", "v0_amplitude=0.5"])
    assert code == EXIT_OK
    runs["2d"] = out
    return runs


def test_ac1_barenblatt_convergence(tmp_path, verdict):
    cfg = tmp_path / "conv.cfg"
    cfg.write_text(
        "m = 0.5\nchi = 0\nextent = 1.5\ncells_per_dim = 192\nt_end = 0.05\n"
        "u0 = barenblatt\nu0_mass = 150\nu0_t_offset = 0.03\nu_floor = 1e-12\n"
    )
    out = tmp_path / "conv.csv"
    tic = time.perf_counter()
    code = main(["convergence", "--config", str(cfg), "--refinements", "3", "--out", str(out)])
    elapsed = time.perf_counter() - tic
    rows = list(csv.DictReader(out.read_text().splitlines()))
    hs = [float(r["h"]) for r in rows]
    errs = [float(r["L1_error"]) for r in rows]
    orders = [float(r["observed_order"]) for r in rows[1:]]
    ok = (code == EXIT_OK and hs == [1 / 64, 1 / 128, 1 / 256] and all(o >= 0.7 for o in orders)
          and errs[0] > errs[1] > errs[2] and elapsed < 120)
    verdict(1, ok, f"L1 errors {[f'{e:.3g}' for e in errs]}, orders {[f'{o:.2f}' for o in orders]}, {elapsed:.1f}s")


def test_ac2_mass_conservation(matrix_runs, verdict):
    worst = 0.0
    for run_dir in matrix_runs.values():
        rows = _steps(run_dir)
        m0 = float(rows[0]["mass_u"])
        worst = max(worst, max(abs(float(r["mass_u"]) - m0) / m0 for r in rows))
        worst = max(worst, json.loads((run_dir / "meta.json").read_text())["relative_mass_drift"])
    verdict(2, worst < 1e-10, f"max relative mass drift {worst:.2e} over {len(matrix_runs)} runs")


def test_ac3_positivity(matrix_runs, verdict):
    lows = {}
    for key, run_dir in matrix_runs.items():
        lows[key] = min(float(r["min_u"]) for r in _steps(run_dir))
    ok = all(v >= 0 for v in lows.values()) and set(MATRIX) <= set(lows)
    verdict(3, ok, f"min_u over every accepted step: {min(lows.values()):.3g} (m in 0.4/0.6/0.8, chi in 0/0.5, plus one 2D run)")


def test_ac4_geometric_sweep(verdict):
    tic = time.perf_counter()
    rep = sweep_geometric(np.random.default_rng(2024), 100)
    elapsed = time.perf_counter() - tic
    ok = rep["failures"] == 0 and rep["worked_instance_converged"] and elapsed < 5
    verdict(4, ok, f"{rep['count']} sets, {rep['failures']} failures, worked instance "
                   f"{'converged' if rep['worked_instance_converged'] else 'failed'}, {elapsed:.2f}s")


def test_ac5_key_primitive_chain(verdict):
    rng = np.random.default_rng(5)
    bad = 0
    for _ in range(1000):
        k = float(rng.uniform(1e-3, 10))
        u = float(rng.uniform(0, k))
        m = float(rng.uniform(0.01, 0.99))
        bad += not key_primitive_chain(u, k, m, tol=1e-9)["ok"]
    verdict(5, bad == 0, f"1000 random (u, k, m) triples, {bad} violations")


P6 = ModelParams(0.6, 1.2, 0.5, 1.0, 1)
T6 = 0.02


def _gaussian_run(n):
    d = make_domain(1, 1.0, n)
    x = d.axis_centers()
    u0 = ScalarField(d, 0.05 + np.exp(-x**2 / 0.04))
    v0 = ScalarField(d, 0.5 * np.exp(-x**2 / 0.04))
    return run(u0, v0, SolverConfig(P6, T6, 0.0005))


@pytest.fixture(scope="module")
def gaussian_runs():
    return {n: _gaussian_run(n) for n in (128, 256)}


def _extrema(series, cyl):
    _, vals = cylinder_window(series, cyl)
    sel = vals[:, cube_mask(series.domain, cyl.cube)]
    return float(sel.min()), float(sel.max())


def test_ac6_energy_budgets(gaussian_runs, verdict):
    cylinders = [((0.0,), 0.15, 0), ((0.2,), 0.1, 0), ((0.0,), 0.1, 1)]
    fits = {}
    for n, r in gaussian_runs.items():
        d = r.u.domain
        vals = []
        for center, R, level in cylinders:
            cut = make_cutoff(level, R, 0.3, center=center, t_vertex=T6, domain=d)
            cyl = cut.cylinder
            lo, hi = _extrema(r.u, cyl)
            for frac in (0.25, 0.5, 0.75):
                k = lo + frac * (hi - lo)
                below = energy_budget_below(r.u, r.v, k, cyl, cut, params=P6)
                above = energy_budget_above(r.u, r.v, k, cyl, cut, params=P6, u_floor=r.u_floor)
                vals += [below.C_hat, above.C_hat]
        fits[n] = vals
    coarse, fine = fits[128], fits[256]
    finite = all(v is not None and math.isfinite(v) and v > 0 for v in coarse + fine)
    factors = [max(a / b, b / a) for a, b in zip(coarse, fine)] if finite else [math.inf]
    ok = finite and len(coarse) == 18 and max(factors) <= 2
    verdict(6, ok, f"18 fitted constants (9 below, 9 above) finite={finite}, worst refinement factor {max(factors):.3f}")


def test_ac7_log_functional(gaussian_runs, verdict):
    cap_ok = slope_ok = True
    gammas = []
    for r in gaussian_runs.values():
        d = r.u.domain
        for c in (0.0, 0.25, 0.35):
            cyl = IntrinsicCylinder(Cube((c,), 0.1), T6, 1.5)
            lo, hi = _extrema(r.u, cyl)
            om = hi - lo
            _, vals = cylinder_window(r.u, cyl)
            H = float((vals[:, cube_mask(d, cyl.cube)] - (hi - om / 4)).max())
            cut = make_cutoff(0, 0.05, 1.5, center=(c,), t_vertex=T6)
            id_value, _ = _resolve_id(r.u, r.v, cyl, default_exponents(1), P6, None, None)
            rep = log_budget(r.u, cyl, om, hi, 0.5 * min(1.0, H), cut, params=P6, id_value=id_value, u_floor=r.u_floor)
            cap_ok &= rep.psi_max <= rep.psi_cap + 1e-12
            slope_ok &= rep.slope_max <= 1 / rep.c + 1e-9
            if c == 0.35:
                gammas.append(rep.gamma)
    finite = all(g is not None and math.isfinite(g) for g in gammas)
    verdict(7, cap_ok and slope_ok and finite,
            f"psi cap {'ok' if cap_ok else 'violated'}, slope cap {'ok' if slope_ok else 'violated'}, "
            f"off-peak gamma {[f'{g:.3g}' for g in gammas if g is not None]}")


def test_ac8_oscillation_decay(verdict):
    tic = time.perf_counter()
    series, start, cfg = barenblatt_decay_case()
    tr = oscillation_decay(series, start, cfg, m=M_BB, n_levels=4)
    elapsed = time.perf_counter() - tic
    bound = max(cfg.delta, 0.75) + 0.05
    ratios = [l.ratio for l in tr.levels]
    ok = (tr.passes and len(ratios) == 4 and all(q is not None and q <= bound for q in ratios)
          and all(l.nested and l.nested_in_quarter for l in tr.levels) and elapsed < 60)
    verdict(8, ok, f"4 levels, ratios {[f'{q:.3g}' for q in ratios]} <= {bound:.4f}, nesting verified, {elapsed:.2f}s")


def test_ac9_holder_oracles(verdict):
    d = make_domain(1, 1.0, 4096)
    x = d.axis_centers()
    region = IntrinsicCylinder(Cube((0.0,), 0.5), 1.0, 1.0)
    sqrt_s = FieldSeries([ScalarField(d, np.sqrt(np.abs(x)), 1.0)])
    lin_s = FieldSeries([ScalarField(d, x.copy(), 1.0)])
    a_sqrt = holder_fit(sqrt_s, region, 0.5, SamplerConfig(seed=1)).holder_exponent
    a_sqrt2 = holder_fit(sqrt_s, region, 0.5, SamplerConfig(seed=1, n_pairs=40000)).holder_exponent
    a_lin = holder_fit(lin_s, region, 0.5, SamplerConfig(seed=1)).holder_exponent
    a_lin2 = holder_fit(lin_s, region, 0.5, SamplerConfig(seed=1, n_pairs=40000)).holder_exponent
    ok = abs(a_sqrt - 0.5) <= 0.05 and a_lin >= 0.95 and abs(a_sqrt - a_sqrt2) <= 0.05 and abs(a_lin - a_lin2) <= 0.05
    verdict(9, ok, f"|x|^1/2 -> {a_sqrt:.3f} (doubled {a_sqrt2:.3f}), linear -> {a_lin:.3f} (doubled {a_lin2:.3f})")


def test_ac10_isoperimetric(verdict):
    rep = sweep_isoperimetric(np.random.default_rng(10), 1000)
    d = make_domain(1, 1.0, 192)
    hand = isoperimetric_check(ScalarField(d, d.axis_centers().copy()), Cube((0.5,), 0.5), 1 / 3, 2 / 3)["gamma_fit"]
    hand_ok = abs(hand - 1 / 9) <= 2 * np.spacing(1 / 9)
    ok = rep["passed"] and rep["nonfinite"] == 0 and hand_ok
    verdict(10, ok, f"{rep['fitted']} fitted fields, global gamma_D {rep['gamma_D']:.4f} "
                    f"(1D {rep['gamma_D_1d']:.4f} <= 1/4), ramp gamma_fit {hand!r}")


def _tree_bytes(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_ac11_determinism(tmp_path, verdict):
    same = {}
    sim = ["--set", "t_end=0.004", "--set", "snapshot_interval=0.0001", "--set", "u0_noise=0.05", "--seed", "17"]
    for i, threads in enumerate((1, 4)):
        assert main(["simulate", "--out", str(tmp_path / f"s{i}"), "--threads", str(threads), *sim]) == EXIT_OK
    same["simulate"] = _tree_bytes(tmp_path / "s0") == _tree_bytes(tmp_path / "s1")

    diags = ("energy_below,energy_above,log_budget,level_sets,measure_sequences,decay_trace,holder,"
             "lemma_below,lemma_above,time_propagation,shrinking_measure")
    for i, threads in enumerate((1, 4)):
        assert main(["diagnose", str(tmp_path / "s0"), "--set", f"diagnostics={diags}", "--set", "radius=0.2",
                     "--set", "theta=0.02", "--seed", "3", "--threads", str(threads),
                     "--out", str(tmp_path / f"d{i}.ndjson")]) == EXIT_OK
    same["diagnose"] = (tmp_path / "d0.ndjson").read_bytes() == (tmp_path / "d1.ndjson").read_bytes()

    for i, threads in enumerate((1, 3)):
        assert main(["lemmas", "--seed", "8", "--geo", "50", "--iso", "100", "--embed", "10", "--threads", str(threads),
                     "--out", str(tmp_path / f"l{i}.ndjson")]) == EXIT_OK
    same["lemmas"] = (tmp_path / "l0.ndjson").read_bytes() == (tmp_path / "l1.ndjson").read_bytes()

    conv = ["--set", "chi=0", "--set", "m=0.5", "--set", "u0=barenblatt", "--set", "t_end=0.002", "--set", "cells_per_dim=64"]
    for i, threads in enumerate((1, 2)):
        assert main(["convergence", "--refinements", "2", "--threads", str(threads), *conv,
                     "--out", str(tmp_path / f"c{i}.csv")]) == EXIT_OK
    same["convergence"] = (tmp_path / "c0.csv").read_bytes() == (tmp_path / "c1.csv").read_bytes()
    verdict(11, all(same.values()), ", ".join(f"{k} {'identical' if v else 'DIFFERS'}" for k, v in same.items()))
