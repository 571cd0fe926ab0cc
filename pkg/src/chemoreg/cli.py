"""Command-line front end: ``simulate``, ``diagnose``, ``lemmas`` and ``convergence``."""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import math
import struct
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .degiorgi import (
    AlternativeConfig,
    GeoIterParams,
    degiorgi_lemma_above,
    degiorgi_lemma_below,
    fast_geometric_iterate,
    isoperimetric_check,
    measure_sequences,
    oscillation_decay,
    ShrinkingFamily,
    shrinking_measure_check,
    time_propagation_check,
)
from .functionals import (
    _resolve_id,
    default_exponents,
    energy_budget_above,
    energy_budget_below,
    level_set_report,
    log_budget,
    make_cutoff,
)
from .grid import Cube, Domain, FieldSeries, IntrinsicCylinder, ScalarField, cube_mask, cylinder_window, make_domain
from .holder import SamplerConfig, holder_fit
from .operators import ModelParams
from .oracles import BarenblattParams, barenblatt_field, embedding_check
from .solver import SolverConfig, SolverError, run

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC = 0, 1, 2, 3

HELP_EPILOG = """exit codes:
  0  success
  1  configuration error (unknown key, bad value, inadmissible parameters)
  2  input/output error (missing or unreadable files, missing snapshots)
  3  numerical failure (solver abort, non-finite values)
"""


class ConfigError(ValueError):
    pass


class DataError(OSError):
    pass


# ---------------------------------------------------------------- key=value config


def _parse_bool(s: str) -> bool:
    low = s.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _parse_floats(s: str) -> tuple[float, ...]:
    s = s.strip()
    return tuple(float(x) for x in s.split(",") if x.strip()) if s else ()


def _converter(f: dataclasses.Field):
    kind = f.metadata.get("kind", "str")
    return {
        "float": float,
        "int": int,
        "bool": _parse_bool,
        "floats": _parse_floats,
        "opt_float": lambda s: None if s.strip().lower() in ("", "none") else float(s),
        "str": str.strip,
        "list": lambda s: tuple(x.strip() for x in s.split(",") if x.strip()),
    }[kind]


def _f(default, kind):
    return field(default=default, metadata={"kind": kind})


def read_key_values(text: str) -> dict[str, str]:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, val = (p.strip() for p in line.split("=", 1))
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[key] = val
    return out


def _build(cls, pairs: dict[str, str]):
    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(pairs) - set(known))
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
    kwargs = {}
    for key, val in pairs.items():
        try:
            kwargs[key] = _converter(known[key])(val)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {exc}") from None
    return cls(**kwargs)


def _dump(obj) -> str:
    lines = []
    for f in fields(obj):
        v = getattr(obj, f.name)
        if isinstance(v, tuple):
            v = ",".join(repr(x) if isinstance(x, float) else str(x) for x in v)
        elif isinstance(v, float):
            v = repr(v)
        elif v is None:
            v = "none"
        lines.append(f"{f.name} = {v}")
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class RunConfig:
    m: float = _f(0.6, "float")
    q_exp: float = _f(1.2, "float")
    chi: float = _f(0.5, "float")
    decay_rate: float = _f(1.0, "float")
    dim: int = _f(1, "int")
    extent: float = _f(1.0, "float")
    cells_per_dim: int = _f(128, "int")
    t_end: float = _f(0.01, "float")
    snapshot_interval: float = _f(0.002, "float")
    u_floor: float | None = _f(None, "opt_float")
    cfl_safety: float = _f(0.4, "float")
    v_solver_tol: float = _f(1e-10, "float")
    positivity_limiter: bool = _f(True, "bool")
    u0: str = _f("gaussian", "str")
    u0_amplitude: float = _f(1.0, "float")
    u0_width: float = _f(0.2, "float")
    u0_center: tuple = _f((0.0,), "floats")
    u0_background: float = _f(0.0, "float")
    u0_mass: float = _f(1.0, "float")
    u0_t_offset: float = _f(0.01, "float")
    u0_path: str = _f("", "str")
    u0_noise: float = _f(0.0, "float")
    v0: str = _f("gaussian", "str")
    v0_amplitude: float = _f(0.0, "float")
    v0_width: float = _f(0.2, "float")
    v0_center: tuple = _f((0.0,), "floats")
    v0_background: float = _f(0.0, "float")
    v0_mass: float = _f(1.0, "float")
    v0_t_offset: float = _f(0.01, "float")
    v0_path: str = _f("", "str")
    v0_noise: float = _f(0.0, "float")
    seed: int = _f(0, "int")
    out_dir: str = _f("", "str")

    def __post_init__(self):
        try:
            self.model_params()
            make_domain(self.dim, self.extent, self.cells_per_dim)
            self.solver_config()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        for name in ("u0", "v0"):
            kind = getattr(self, name)
            if kind not in ("gaussian", "barenblatt", "file"):
                raise ConfigError(f"{name} must be gaussian, barenblatt or file (got {kind!r})")
            if kind == "file" and not getattr(self, f"{name}_path"):
                raise ConfigError(f"{name} = file needs {name}_path")
            if getattr(self, f"{name}_noise") < 0 or getattr(self, f"{name}_background") < 0:
                raise ConfigError(f"{name}_noise and {name}_background must be nonnegative")

    def model_params(self) -> ModelParams:
        return ModelParams(self.m, self.q_exp, self.chi, self.decay_rate, self.dim)

    def domain(self) -> Domain:
        return make_domain(self.dim, self.extent, self.cells_per_dim)

    def solver_config(self) -> SolverConfig:
        return SolverConfig(
            self.model_params(),
            t_end=self.t_end,
            snapshot_interval=self.snapshot_interval,
            u_floor=self.u_floor,
            cfl_safety=self.cfl_safety,
            v_solver_tol=self.v_solver_tol,
            positivity_limiter=self.positivity_limiter,
        )


@dataclass(frozen=True)
class DiagConfig:
    diagnostics: tuple = _f((), "list")
    center: tuple = _f((0.0,), "floats")
    radius: float | None = _f(None, "opt_float")
    theta: float = _f(1.0, "float")
    t_vertex: float | None = _f(None, "opt_float")
    cutoff_n: int = _f(0, "int")
    levels: tuple = _f((), "floats")
    c0: float | None = _f(None, "opt_float")
    id_value: float | None = _f(None, "opt_float")
    l_exp: float = _f(2.0, "float")
    r_exp: float = _f(2.0, "float")
    log_c_fraction: float = _f(0.5, "float")
    xi: float = _f(0.5, "float")
    a: float = _f(0.5, "float")
    nu: float = _f(0.5, "float")
    n_star: int = _f(4, "int")
    q_star: int = _f(6, "int")
    lam: float | None = _f(None, "opt_float")
    decay_levels: int = _f(4, "int")
    sequence_levels: int = _f(6, "int")
    holder_pairs: int = _f(20000, "int")
    holder_bins: int = _f(12, "int")

    KNOWN = (
        "energy_below", "energy_above", "log_budget", "level_sets", "measure_sequences",
        "decay_trace", "holder", "lemma_below", "lemma_above", "time_propagation", "shrinking_measure",
    )

    def __post_init__(self):
        bad = [d for d in self.diagnostics if d not in self.KNOWN]
        if bad:
            raise ConfigError(f"unknown diagnostic(s): {', '.join(bad)}")
        try:
            self.alternatives()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if not 0 < self.log_c_fraction < 1:
            raise ConfigError("log_c_fraction must lie in (0, 1)")

    def alternatives(self) -> AlternativeConfig:
        return AlternativeConfig(self.xi, self.a, self.nu, self.n_star, self.q_star, self.lam)


def load_config(cls, path: str | Path | None, overrides: dict[str, str] | None = None):
    pairs = {}
    if path is not None:
        try:
            pairs = read_key_values(Path(path).read_text())
        except OSError as exc:
            raise DataError(f"cannot read config {path}: {exc.strerror or exc}") from None
    pairs.update(overrides or {})
    return _build(cls, pairs)


# ---------------------------------------------------------------- checkpoints


def write_checkpoint(path: str | Path, f: ScalarField, name: str) -> None:
    """Length-prefixed JSON header, then the values as little-endian float64, row-major."""
    dom = f.domain
    header = {
        "cells_per_dim": dom.cells_per_dim,
        "dim": dom.dim,
        "dtype": "f64",
        "endianness": "LE",
        "extent": dom.extent,
        "field": name,
        "time": float(f.time),
    }
    head = json.dumps(header, sort_keys=True).encode("utf-8")
    data = np.ascontiguousarray(f.values, dtype="<f8").tobytes(order="C")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<I", len(head)))
        fh.write(head)
        fh.write(data)


def read_checkpoint(path: str | Path) -> tuple[ScalarField, str]:
    raw = Path(path).read_bytes()
    if len(raw) < 4:
        raise DataError(f"{path}: truncated checkpoint")
    (n,) = struct.unpack("<I", raw[:4])
    try:
        header = json.loads(raw[4 : 4 + n].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError):
        raise DataError(f"{path}: unreadable checkpoint header") from None
    if header.get("endianness") != "LE" or header.get("dtype") != "f64":
        raise DataError(f"{path}: unsupported element encoding")
    dom = Domain(int(header["dim"]), float(header["extent"]), int(header["cells_per_dim"]))
    body = raw[4 + n :]
    if len(body) != 8 * dom.size:
        raise DataError(f"{path}: expected {8 * dom.size} data bytes, found {len(body)}")
    vals = np.frombuffer(body, dtype="<f8").astype(float).reshape(dom.shape)
    return ScalarField(dom, vals, float(header["time"])), str(header["field"])


# ---------------------------------------------------------------- initial data


def _initial(cfg: RunConfig, name: str, dom: Domain, rng: np.random.Generator) -> ScalarField:
    kind = getattr(cfg, name)
    g = lambda key: getattr(cfg, f"{name}_{key}")  # noqa: E731
    if kind == "gaussian":
        width = g("width")
        if not width > 0:
            raise ConfigError(f"{name}_width must be positive")
        vals = g("amplitude") * np.exp(-dom.radius_squared(g("center")) / width**2) + g("background")
    elif kind == "barenblatt":
        try:
            bp = BarenblattParams(cfg.m, cfg.dim, g("mass"), g("t_offset"))
        except ValueError as exc:
            raise ConfigError(f"{name}: {exc}") from None
        vals = barenblatt_field(bp, dom, 0.0, g("center")).values
    else:
        f, _ = read_checkpoint(g("path"))
        if f.domain != dom:
            raise ConfigError(f"{name}_path: checkpoint grid does not match the configured domain")
        vals = f.values.copy()
    if g("noise") > 0:
        vals = vals * (1.0 + g("noise") * rng.random(dom.shape))
    if np.any(vals < 0):
        raise ConfigError(f"{name} must be nonnegative")
    return ScalarField(dom, vals, 0.0)


# ---------------------------------------------------------------- output helpers


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isfinite(x):
            return x
        return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")
    if dataclasses.is_dataclass(x):
        return _jsonable(dataclasses.asdict(x))
    return x


def ndjson(record: dict) -> str:
    return json.dumps(_jsonable(record), sort_keys=True)


def _g17(x) -> str:
    return "%.17g" % x


CSV_HEADER = ("step", "t", "dt", "mass_u", "mass_v", "min_u", "max_u")


def step_csv(log) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    cols = [log.column(c) for c in ("step", "t", "dt_used", "mass_u", "mass_v", "min_u", "max_u")]
    for row in zip(*cols):
        w.writerow([str(int(row[0]))] + [_g17(v) for v in row[1:]])
    return buf.getvalue()


# ---------------------------------------------------------------- simulate


def simulate(cfg: RunConfig, out: Path) -> dict:
    dom = cfg.domain()
    rng = np.random.default_rng(cfg.seed)
    u0 = _initial(cfg, "u0", dom, rng)
    v0 = _initial(cfg, "v0", dom, rng)
    res = run(u0, v0, cfg.solver_config())
    snap = out / "snapshots"
    snap.mkdir(parents=True, exist_ok=True)
    for i, (fu, fv) in enumerate(zip(res.u.snapshots, res.v.snapshots)):
        write_checkpoint(snap / f"u_{i:05d}.bin", fu, "u")
        write_checkpoint(snap / f"v_{i:05d}.bin", fv, "v")
    (out / "steps.csv").write_text(step_csv(res.reports))
    (out / "run.cfg").write_text(_dump(cfg))
    mass = res.reports.column("mass_u")
    meta = {
        "u_floor": res.u_floor,
        "n_steps": len(res.reports) - 1,
        "n_snapshots": len(res.u),
        "final_time": float(res.u.times[-1]),
        "relative_mass_drift": float(np.abs(mass - mass[0]).max() / mass[0]) if mass[0] > 0 else 0.0,
        "min_u": float(res.reports.column("min_u").min()),
    }
    (out / "meta.json").write_text(ndjson(meta) + "\n")
    return meta


# ---------------------------------------------------------------- diagnose


def load_run(run_dir: Path) -> tuple[RunConfig, FieldSeries, FieldSeries, dict]:
    try:
        cfg = load_config(RunConfig, run_dir / "run.cfg")
        meta = json.loads((run_dir / "meta.json").read_text())
        us = sorted((run_dir / "snapshots").glob("u_*.bin"))
        vs = sorted((run_dir / "snapshots").glob("v_*.bin"))
    except OSError as exc:
        raise DataError(f"{run_dir}: not a simulate output ({exc})") from None
    if not us or len(us) != len(vs):
        raise DataError(f"{run_dir}: missing snapshots")
    u = FieldSeries([read_checkpoint(p)[0] for p in us])
    v = FieldSeries([read_checkpoint(p)[0] for p in vs])
    return cfg, u, v, meta


def _require(series: FieldSeries, cyl: IntrinsicCylinder) -> None:
    t = series.times
    tol = 1e-9 * max(1.0, abs(cyl.t_end))
    if cyl.t_start < t[0] - tol or cyl.t_end > t[-1] + tol:
        raise DataError(
            f"cylinder time span ({cyl.t_start:.6g}, {cyl.t_end:.6g}] is not covered by the snapshots "
            f"[{t[0]:.6g}, {t[-1]:.6g}]; lower theta or radius"
        )
    try:
        cylinder_window(series, cyl)
    except ValueError as exc:
        raise DataError(str(exc)) from None


def _extrema(series, cyl):
    _, vals = cylinder_window(series, cyl)
    mask = cube_mask(series.domain, cyl.cube)
    sel = vals[:, mask]
    return float(sel.min()), float(sel.max())


def _diag_levels(dc: DiagConfig, lo: float, hi: float) -> list[float]:
    if dc.levels:
        return list(dc.levels)
    return [lo + f * (hi - lo) for f in (0.25, 0.5, 0.75)]


def run_diagnostic(name: str, dc: DiagConfig, rc: RunConfig, u: FieldSeries, v: FieldSeries, meta: dict, seed: int) -> list[dict]:
    dom = u.domain
    params = rc.model_params()
    radius = dc.radius if dc.radius is not None else dom.extent / 4
    t0 = dc.t_vertex if dc.t_vertex is not None else float(u.times[-1])
    center = dc.center
    cyl = IntrinsicCylinder(Cube(center, radius), t0, dc.theta)
    alt = dc.alternatives()
    tag = {"type": name, "center": list(center), "radius": radius, "t_vertex": t0, "theta": dc.theta}
    u_floor = float(meta["u_floor"])

    if name == "decay_trace":
        trace = oscillation_decay(u, cyl, alt, m=params.m, n_levels=dc.decay_levels)
        return [{**tag, **trace.to_record()}]

    if name in ("energy_below", "energy_above"):
        cut = make_cutoff(dc.cutoff_n, radius, dc.theta, center=center, t_vertex=t0, domain=dom)
        bcyl = cut.cylinder
        _require(u, bcyl)
        lo, hi = _extrema(u, bcyl)
        ex = default_exponents(dom.dim, dc.l_exp, dc.r_exp)
        out = []
        for k in _diag_levels(dc, lo, hi):
            if not k > 0:
                continue
            if name == "energy_below":
                b = energy_budget_below(u, v, k, bcyl, cut, ex, params=params, c0=dc.c0, id_value=dc.id_value)
            else:
                b = energy_budget_above(u, v, k, bcyl, cut, ex, params=params, u_floor=u_floor, c0=dc.c0, id_value=dc.id_value)
            out.append({**tag, "cutoff_n": dc.cutoff_n, "l_exp": dc.l_exp, "r_exp": dc.r_exp, **b.to_record()})
        return out

    _require(u, cyl)
    lo, hi = _extrema(u, cyl)

    if name == "log_budget":
        omega = hi - lo
        k = hi - omega / 4
        _, vals = cylinder_window(u, cyl)
        H = max(float((vals[:, cube_mask(dom, cyl.cube)] - k).max()), 0.0)
        c = dc.log_c_fraction * min(1.0, H) if H > 0 else 0.5
        cut = make_cutoff(dc.cutoff_n, radius / 2, dc.theta, center=center, t_vertex=t0)
        id_value = dc.id_value
        if id_value is None:
            id_value, _ = _resolve_id(u, v, cyl, default_exponents(dom.dim, dc.l_exp, dc.r_exp), params, dc.c0, None)
        rep = log_budget(u, cyl, omega, hi, c, cut, params=params, id_value=id_value, u_floor=u_floor)
        return [{**tag, "omega": omega, "I_d": id_value, **rep.to_record()}]

    if name == "level_sets":
        out = []
        for k in _diag_levels(dc, lo, hi):
            if not k > 0:
                continue
            for mode in ("below", "above"):
                rep = level_set_report(u, k, cyl, mode)
                out.append({**tag, "mode": mode, **dataclasses.asdict(rep)})
        return out

    if name == "measure_sequences":
        out = []
        for mode, mu in (("below", lo), ("above", hi)):
            fam = ShrinkingFamily(center, radius / 2, t0, mu, hi - lo, dc.xi, dc.a, mode)
            if hi - lo <= 0:
                continue
            seq = measure_sequences(u, fam, dc.theta, n_levels=dc.sequence_levels)
            out.append({**tag, "mode": mode, **seq})
        return out

    if name == "holder":
        fit = holder_fit(u, cyl, params.m, SamplerConfig(seed, dc.holder_pairs, dc.holder_bins))
        return [{**tag, **fit.to_record()}]

    if name == "lemma_below":
        return [{**tag, **degiorgi_lemma_below(u, cyl, config=alt)}]
    if name == "lemma_above":
        return [{**tag, **degiorgi_lemma_above(u, cyl, config=alt)}]
    if name == "time_propagation":
        try:
            rep = time_propagation_check(u, cyl, alt)
        except ValueError as exc:
            raise DataError(str(exc)) from None
        return [{**tag, **rep}]
    if name == "shrinking_measure":
        try:
            rep = shrinking_measure_check(u, cyl, alt)
        except ValueError as exc:
            raise DataError(str(exc)) from None
        return [{**tag, **rep}]
    raise ConfigError(f"unknown diagnostic {name}")


def diagnose(run_dir: Path, dc: DiagConfig, seed: int, threads: int = 1) -> list[str]:
    if not dc.diagnostics:
        return []
    rc, u, v, meta = load_run(run_dir)
    jobs = list(dc.diagnostics)

    def one(name):
        try:
            return run_diagnostic(name, dc, rc, u, v, meta, seed)
        except (ConfigError, DataError):
            raise
        except ValueError as exc:
            raise DataError(f"diagnostic {name}: {exc}") from None

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        results = list(pool.map(one, jobs))
    return [ndjson(rec) for recs in results for rec in recs]


# ---------------------------------------------------------------- lemma sweeps


def _random_pl_field(rng: np.random.Generator, dim: int) -> ScalarField:
    if dim == 1:
        dom = make_domain(1, 1.0, 256)
        knots = np.linspace(-1.0, 1.0, int(rng.integers(3, 12)))
        vals = np.interp(dom.axis_centers(), knots, rng.normal(size=knots.size))
    else:
        dom = make_domain(2, 1.0, 64)
        x, y = np.meshgrid(dom.axis_centers(), dom.axis_centers(), indexing="ij")
        planes = rng.normal(size=(int(rng.integers(2, 6)), 3))
        vals = np.max([a * x + b * y + c for a, b, c in planes], axis=0)
    return ScalarField(dom, vals)


def sweep_geometric(rng: np.random.Generator, count: int) -> dict:
    failures = 0
    worst_iter = 0
    for _ in range(count):
        p = GeoIterParams(float(rng.uniform(1, 5)), float(rng.uniform(1.1, 16)), float(rng.uniform(0.1, 2)), float(rng.uniform(0.1, 2)))
        target = 0.99 * p.nu0
        split = float(rng.uniform(0, 1))
        X0 = split * target
        Y0 = ((1 - split) * target) ** (1 / (1 + p.kappa))
        r = fast_geometric_iterate(p, X0, Y0, 200)
        failures += not r["converged"]
        worst_iter = max(worst_iter, r["iterations"])
    worked = fast_geometric_iterate(GeoIterParams(1, 2, 1, 1), 1 / 32, 1 / 32, 200)
    return {
        "sweep": "fast_geometric",
        "count": count,
        "failures": failures,
        "max_iterations": worst_iter,
        "worked_instance_converged": worked["converged"],
        "passed": failures == 0 and worked["converged"],
    }


def sweep_isoperimetric(rng: np.random.Generator, count: int) -> dict:
    gammas = {1: [], 2: []}
    nonfinite = 0
    for i in range(count):
        dim = 1 + i % 2
        f = _random_pl_field(rng, dim)
        cube = Cube((0.0,) * dim, float(rng.uniform(0.3, 0.9)))
        block = f.values[cube_mask(f.domain, cube)]
        lo_q, hi_q = np.sort(rng.uniform(0.1, 0.9, 2))
        k, l = float(np.quantile(block, lo_q)), float(np.quantile(block, hi_q))
        if not k < l:
            continue
        g = isoperimetric_check(f, cube, k, l)["gamma_fit"]
        if g is None:
            continue
        if not math.isfinite(g):
            nonfinite += 1
            continue
        gammas[dim].append(g)
    g1 = max(gammas[1], default=0.0)
    g2 = max(gammas[2], default=0.0)
    # in 1D the clipped variation is at least l - k, and |{w<k}| |{w>l}| <= R^2/4
    return {
        "sweep": "isoperimetric",
        "count": count,
        "fitted": len(gammas[1]) + len(gammas[2]),
        "gamma_D": max(g1, g2),
        "gamma_D_1d": g1,
        "gamma_D_2d": g2,
        "nonfinite": nonfinite,
        "passed": nonfinite == 0 and g1 <= 0.25 + 1e-12,
    }


def sweep_embedding(rng: np.random.Generator, count: int) -> dict:
    worst = 0.0
    gammas = []
    for i in range(count):
        dim = 1 + i % 2
        dom = make_domain(dim, 1.0, 64 if dim == 1 else 32)
        cut = make_cutoff(0, 0.4, 1.0, domain=dom, static=True)
        eta = cut.spatial(dom)
        freq = rng.normal(size=dim)
        snaps = []
        for t in (0.1, 0.2, 0.3):
            phase = sum(np.sin(np.pi * f * x + t) for f, x in zip(freq, dom.centers()))
            snaps.append(ScalarField(dom, eta * (1.5 + phase), t))
        series = FieldSeries(snaps)
        cyl = IntrinsicCylinder(Cube((0.0,) * dim, 0.8), 0.3, 0.3 / 0.64)
        p, s = 2.0, 2.0
        lam = float(rng.uniform(0.1, 10))
        a = embedding_check(series, cyl, p, s)
        scaled = FieldSeries([ScalarField(dom, lam * f.values, f.time) for f in snaps])
        b = embedding_check(scaled, cyl, p, s)
        if a["gamma_estimate"] is not None:
            gammas.append(a["gamma_estimate"])
            worst = max(worst, abs(b["gamma_estimate"] / a["gamma_estimate"] - 1))
    return {
        "sweep": "embedding_scaling",
        "count": count,
        "max_relative_change": worst,
        "gamma_max": max(gammas, default=0.0),
        "passed": worst < 1e-10,
    }


def lemmas(seed: int, geo: int, iso: int, embed: int) -> list[dict]:
    rng = np.random.default_rng(seed)
    g_rng, i_rng, e_rng = rng.spawn(3)
    return [sweep_geometric(g_rng, geo), sweep_isoperimetric(i_rng, iso), sweep_embedding(e_rng, embed)]


# ---------------------------------------------------------------- convergence


def convergence(cfg: RunConfig, refinements: int) -> list[dict]:
    """Barenblatt study: rows ``(h, L1_error, observed_order)`` over ``refinements`` doublings."""
    if cfg.chi != 0:
        raise ConfigError("convergence study needs chi = 0 (the closed-form profile solves the uncoupled equation)")
    if refinements < 1:
        raise ConfigError("refinements must be at least 1")
    try:
        bp = BarenblattParams(cfg.m, cfg.dim, cfg.u0_mass, cfg.u0_t_offset)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    floor = cfg.u_floor if cfg.u_floor is not None else 1e-12
    rows = []
    for i in range(refinements):
        dom = make_domain(cfg.dim, cfg.extent, cfg.cells_per_dim * 2**i)
        u0 = barenblatt_field(bp, dom, 0.0, cfg.u0_center)
        v0 = ScalarField(dom, np.zeros(dom.shape))
        sc = dataclasses.replace(cfg.solver_config(), snapshot_interval=max(cfg.t_end, 1e-300), u_floor=floor)
        res = run(u0, v0, sc)
        exact = barenblatt_field(bp, dom, cfg.t_end, cfg.u0_center).values
        err = float(np.abs(res.u.snapshots[-1].values - exact).sum() * dom.cell_volume)
        order = math.log2(rows[-1]["L1_error"] / err) if rows else None
        rows.append({"h": dom.spacing, "L1_error": err, "observed_order": order})
    return rows


def convergence_csv(rows: list[dict]) -> str:
    lines = ["h,L1_error,observed_order"]
    for r in rows:
        o = "" if r["observed_order"] is None else _g17(r["observed_order"])
        lines.append(f"{_g17(r['h'])},{_g17(r['L1_error'])},{o}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------- entry point


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="chemoreg",
        description="Singular chemotaxis simulator and regularity diagnostics.",
        epilog=HELP_EPILOG,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, out_help):
        p.add_argument("--config", help="key = value configuration file")
        p.add_argument("--out", help=out_help)
        p.add_argument("--seed", type=int, default=None, help="random seed (overrides the config)")
        p.add_argument("--threads", type=int, default=1, help="worker threads; results do not depend on it")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override one config key")

    p = sub.add_parser("simulate", help="run the solver and write checkpoints and a step CSV", epilog=HELP_EPILOG,
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    common(p, "output directory")
    p = sub.add_parser("diagnose", help="emit NDJSON diagnostics for a simulate output", epilog=HELP_EPILOG,
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    common(p, "NDJSON output file (default stdout)")
    p.add_argument("run_dir", help="directory written by simulate")
    p = sub.add_parser("lemmas", help="randomized sweeps of the iteration, isoperimetric and embedding lemmas",
                       epilog=HELP_EPILOG, formatter_class=argparse.RawDescriptionHelpFormatter)
    common(p, "NDJSON summary file (default stdout)")
    p.add_argument("--counts", type=int, default=None, help="use this count for every sweep")
    p.add_argument("--geo", type=int, default=100)
    p.add_argument("--iso", type=int, default=1000)
    p.add_argument("--embed", type=int, default=50)
    p = sub.add_parser("convergence", help="Barenblatt refinement study, CSV of (h, L1 error, order)",
                       epilog=HELP_EPILOG, formatter_class=argparse.RawDescriptionHelpFormatter)
    common(p, "CSV output file (default stdout)")
    p.add_argument("--refinements", type=int, default=3)
    return ap


def _overrides(items: list[str]) -> dict[str, str]:
    out = {}
    for it in items:
        if "=" not in it:
            raise ConfigError(f"--set expects KEY=VALUE, got {it!r}")
        k, v = it.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    try:
        over = _overrides(args.set)
        if args.seed is not None and args.command == "simulate":
            over["seed"] = str(args.seed)
        if args.command == "simulate":
            cfg = load_config(RunConfig, args.config, over)
            out = args.out or cfg.out_dir
            if not out:
                raise ConfigError("simulate needs --out or out_dir")
            meta = simulate(cfg, Path(out))
            print(ndjson({"type": "simulate", "out": str(out), **meta}))
        elif args.command == "diagnose":
            dc = load_config(DiagConfig, args.config, over)
            seed = args.seed if args.seed is not None else 0
            lines = diagnose(Path(args.run_dir), dc, seed, args.threads)
            _emit("".join(line + "\n" for line in lines), args.out)
        elif args.command == "lemmas":
            seed = args.seed if args.seed is not None else 0
            geo, iso, emb = (args.counts,) * 3 if args.counts is not None else (args.geo, args.iso, args.embed)
            if min(geo, iso, emb) < 0:
                raise ConfigError("counts must be nonnegative")
            recs = lemmas(seed, geo, iso, emb)
            _emit("".join(ndjson({"type": "lemma_sweep", "seed": seed, **r}) + "\n" for r in recs), args.out)
            return EXIT_OK if all(r["passed"] for r in recs) else EXIT_NUMERIC
        elif args.command == "convergence":
            cfg = load_config(RunConfig, args.config, over)
            rows = convergence(cfg, args.refinements)
            _emit(convergence_csv(rows), args.out)
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (SolverError, FloatingPointError, ArithmeticError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
