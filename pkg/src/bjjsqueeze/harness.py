"""Scenarios, presets, sweeps and deterministic CSV/JSON output."""
from __future__ import annotations

import configparser
import csv
import io
import json
import math
import platform
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import __version__
from .control import adiabatic_schedule, sta1_schedule, sta2_schedule, zero_schedule
from .esta import DEFAULT_MODES, EstaEngine, esta_schedule
from .metrics import max_plane_squeezing, squeezing_record
from .robustness import sensitivity_report
from .spin_core import STEP_TOLERANCE, SystemParams, css_state, evolve, ground_state

DEFAULT_CHI = 2 * math.pi * 0.063
DEFAULT_RATIO = 0.1
GRID_POINTS = 20
GRID_SPAN = 8.0  # N * chi * t_f at the end of the default grid

SCHEMES = ("adiabatic", "sta1", "sta2", "esta", "oat_css", "oat_groundstate")
OUTPUTS = ("fidelity", "xi_N", "xi_S_dB", "xi_N_max", "sensitivity", "imperfection",
           "schedule_trace")

PARAM_COLUMNS = ("N", "chi", "lambda0", "omega_ratio", "t_f", "tf_chi", "scheme")


@dataclass(frozen=True)
class Options:
    poly_degree: int = 6
    plambda_rule: str = "min-norm"
    deltah_rule: str = "subtract"
    n_modes: int = DEFAULT_MODES


@dataclass(frozen=True)
class Scenario:
    name: str
    params: SystemParams
    schemes: tuple = ("adiabatic", "sta1", "sta2", "esta")
    tf_grid: tuple = ()
    outputs: tuple = ("fidelity", "xi_N", "xi_S_dB", "xi_N_max")
    sample_count: int = 0
    options: Options = field(default_factory=Options)

    def __post_init__(self):
        bad = set(self.schemes) - set(SCHEMES)
        if bad:
            raise ValueError(f"unknown schemes {sorted(bad)}")
        bad = set(self.outputs) - set(OUTPUTS)
        if bad:
            raise ValueError(f"unknown outputs {sorted(bad)}")
        if not self.tf_grid:
            object.__setattr__(self, "tf_grid", (self.params.t_f,))
        if any(t <= 0 for t in self.tf_grid):
            raise ValueError("t_f grid must be positive")


def tf_grid(N: int, chi: float = DEFAULT_CHI, points: int = GRID_POINTS,
            span: float = GRID_SPAN) -> tuple:
    """chi t_f = (k / points) * span / N for k = 1..points, returned in seconds."""
    return tuple(k / points * span / N / chi for k in range(1, points + 1))


def _params(N, lambda0, tf_chi, ratio=DEFAULT_RATIO, chi=DEFAULT_CHI):
    return SystemParams.from_dimensionless(N, lambda0, ratio, tf_chi, chi=chi)


def preset(name: str, chi: float = DEFAULT_CHI, points: int = GRID_POINTS) -> list[Scenario]:
    """Scenario list for fig2 .. fig6 (and fig5-text with Lambda_0 in {5, 20})."""
    all4 = ("adiabatic", "sta1", "sta2", "esta")
    series = ("fidelity", "xi_N", "xi_S_dB", "xi_N_max")
    if name == "fig2":
        return [Scenario("fig2", _params(50, 10.0, 0.16, chi=chi), all4,
                         outputs=series + ("schedule_trace",), sample_count=201)]
    if name == "fig3":
        return [Scenario("fig3", _params(400, 10.0, 0.004, chi=chi), all4,
                         outputs=series + ("schedule_trace",), sample_count=201)]
    if name == "fig4":
        out = []
        for lam in (10.0, 5.0, 2.5):
            for N in (50, 200, 400):
                grid = tf_grid(N, chi, points)
                out.append(Scenario(f"fig4_N{N}_L{lam:g}", _params(N, lam, grid[-1] * chi, chi=chi),
                                    all4, grid, ("fidelity",)))
        return out
    if name in ("fig5", "fig5-text"):
        lams = (2.5, 10.0) if name == "fig5" else (5.0, 20.0)
        grid = tf_grid(400, chi, points)
        return [Scenario(f"{name}_L{lam:g}", _params(400, lam, grid[-1] * chi, chi=chi),
                         ("sta1", "sta2", "esta"), grid,
                         ("fidelity", "sensitivity", "imperfection")) for lam in lams]
    if name == "fig6":
        grid = tf_grid(400, chi, points)
        return [Scenario(f"fig6_L{lam:g}", _params(400, lam, grid[-1] * chi, chi=chi),
                         ("sta1", "sta2", "esta", "oat_groundstate", "oat_css"), grid,
                         ("xi_N_max",)) for lam in (2.5, 10.0)]
    raise ValueError(f"unknown preset {name!r}")


PRESETS = ("fig2", "fig3", "fig4", "fig5", "fig5-text", "fig6")


def build_schedule(scheme: str, params: SystemParams, options: Options = Options()):
    if scheme == "adiabatic":
        return adiabatic_schedule(params)
    if scheme == "sta1":
        return sta1_schedule(params, options.poly_degree)
    if scheme == "sta2":
        return sta2_schedule(params, options.poly_degree)
    if scheme == "esta":
        return esta_schedule(params, n_modes=options.n_modes, poly_degree=options.poly_degree,
                             plambda_rule=options.plambda_rule, deltah_rule=options.deltah_rule)
    if scheme in ("oat_css", "oat_groundstate", "oat_zero"):
        return zero_schedule(params)
    raise ValueError(f"unknown scheme {scheme!r}")


def initial_state(scheme: str, params: SystemParams):
    if scheme == "oat_css":
        return css_state(params.N)
    return ground_state(params, params.omega0)


def param_row(params: SystemParams, scheme: str) -> dict:
    return {"N": params.N, "chi": params.chi, "lambda0": params.lambda0,
            "omega_ratio": params.omega_ratio, "t_f": params.t_f, "tf_chi": params.tau_f,
            "scheme": scheme}


def _cell(job) -> dict:
    """All requested tables for one (scheme, t_f) pair; failures become an error row."""
    scenario, scheme, t_f = job
    params = scenario.params.with_tf(t_f)
    base = param_row(params, scheme)
    tables: dict[str, list] = {}
    try:
        schedule = build_schedule(scheme, params, scenario.options)
        psi0 = initial_state(scheme, params)
        target = ground_state(params, params.omega_f)
        n_samples = max(scenario.sample_count, 0)
        times = np.linspace(0.0, t_f, n_samples) if n_samples >= 2 else np.array([t_f])
        prop = evolve(psi0, schedule, params, times)
        rec = squeezing_record(t_f, prop.states[-1], target)
        end = dict(base)
        end.update(fidelity=rec.fidelity, xi_N_sq=rec.xi_N_sq, xi_S_sq_dB=rec.xi_S_sq_dB,
                   xi_N_max_sq=rec.xi_N_max_sq, zeta=rec.zeta, n_steps=prop.n_steps, error="")
        tables["endpoint"] = [end]
        if n_samples >= 2:
            rows = []
            for t, st in zip(times, prop.states):
                r = squeezing_record(t, st, target)
                row = dict(base)
                row.update(t=r.t, tau=params.chi * r.t, fidelity=r.fidelity, xi_N_sq=r.xi_N_sq,
                           xi_S_sq_dB=r.xi_S_sq_dB, xi_N_max_sq=r.xi_N_max_sq, zeta=r.zeta)
                rows.append(row)
            tables["timeseries"] = rows
        if {"sensitivity", "imperfection"} & set(scenario.outputs):
            rep = sensitivity_report(schedule, params, psi0, target)
            row = dict(base)
            row.update(fidelity=rep.fidelity, S_m=rep.S_m, S_t=rep.S_t, eta=rep.eta,
                       fd_step=rep.fd_step, converged=int(rep.converged),
                       timeshift_asymmetric=int(rep.timeshift_asymmetric))
            tables["sensitivity"] = [row]
        if "schedule_trace" in scenario.outputs:
            tables["schedule"] = trace_rows(schedule, params, scheme, max(n_samples, 201))
    except Exception as exc:  # per-cell failure is data, the sweep goes on
        end = dict(base)
        end.update(error=f"{type(exc).__name__}: {exc}")
        tables = {"endpoint": [end]}
    return tables


def trace_rows(schedule, params: SystemParams, scheme: str, samples: int) -> list[dict]:
    ts = np.linspace(0.0, params.t_f, samples)
    om = schedule.trace(ts)
    base = param_row(params, scheme)
    rows = []
    for t, w in zip(ts, om):
        row = dict(base)
        row.update(t=float(t), tau=params.chi * float(t), omega=float(w),
                   omega_over_omega0=float(w) / params.omega0)
        rows.append(row)
    return rows


@dataclass
class ScenarioResult:
    scenario: Scenario
    tables: dict

    def errors(self) -> list[dict]:
        return [r for r in self.tables.get("endpoint", []) if r.get("error")]


def run_scenario(scenario: Scenario, workers: int = 1) -> ScenarioResult:
    """Evaluate every (scheme, t_f) cell; rows are ordered by scheme, then t_f."""
    jobs = [(scenario, s, t) for s in scenario.schemes for t in scenario.tf_grid]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            cells = list(pool.map(_cell, jobs))
    else:
        cells = [_cell(j) for j in jobs]
    tables: dict[str, list] = {}
    for cell in cells:
        for kind, rows in cell.items():
            tables.setdefault(kind, []).extend(rows)
    return ScenarioResult(scenario, tables)


def run_oat_comparison(params: SystemParams, tf_grid: Sequence[float],
                       initial: str = "groundstate") -> list[dict]:
    """max-plane number squeezing after OAT (Omega == 0) evolution for each t_f."""
    if initial not in ("css", "groundstate"):
        raise ValueError("initial is 'css' or 'groundstate'")
    grid = np.asarray(sorted(tf_grid), dtype=float)
    scheme = f"oat_{initial}"
    last = params.with_tf(float(grid[-1]))
    psi0 = css_state(params.N) if initial == "css" else ground_state(params, params.omega0)
    states = evolve(psi0, zero_schedule(last), last, grid).states
    rows = []
    for t, st in zip(grid, states):
        row = param_row(params.with_tf(float(t)), scheme)
        row["xi_N_max_sq"] = max_plane_squeezing(st)
        rows.append(row)
    return rows


def esta_diagnostics(params: SystemParams, options: Options = Options()) -> dict:
    engine = EstaEngine(params, poly_degree=options.poly_degree,
                        plambda_rule=options.plambda_rule, deltah_rule=options.deltah_rule)
    corr = engine.correction(n_modes=options.n_modes)
    report = corr.report()
    report["lambda_over_chi"] = [float(x) / params.chi for x in corr.lam]
    return report


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------

def format_value(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def to_csv(rows: Iterable[dict]) -> str:
    rows = list(rows)
    if not rows:
        return ""
    columns = list(PARAM_COLUMNS)
    for r in rows:
        columns.extend(k for k in r if k not in columns)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([format_value(r[c]) if c in r else "" for c in columns])
    return buf.getvalue()


def metadata(options: Options, extra: dict | None = None) -> dict:
    meta = {
        "package": "bjjsqueeze", "version": __version__,
        "numpy": np.__version__, "python": platform.python_version(),
        "step_tolerance": STEP_TOLERANCE,
        "poly_degree": options.poly_degree, "plambda_rule": options.plambda_rule,
        "deltah_rule": options.deltah_rule, "esta_modes": options.n_modes,
        "float_format": ".17g",
    }
    if extra:
        meta.update(extra)
    return meta


def write_table(out_dir: Path, stem: str, rows: list[dict], meta: dict) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / f"{stem}.csv"
    path.write_text(to_csv(rows))
    (out_dir / f"{stem}.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return path


def write_result(result: ScenarioResult, out_dir: Path) -> list[Path]:
    sc = result.scenario
    meta = metadata(sc.options, {"scenario": sc.name, "schemes": list(sc.schemes),
                                 "tf_grid": list(sc.tf_grid), "outputs": list(sc.outputs),
                                 "sample_count": sc.sample_count})
    return [write_table(out_dir, f"{sc.name}_{kind}", rows, dict(meta, table=kind))
            for kind, rows in sorted(result.tables.items())]


# ---------------------------------------------------------------------------
# config
# ---------------------------------------------------------------------------

CONFIG_KEYS = {
    "preset": str, "n": int, "chi": float, "lambda0": float, "omega_ratio": float,
    "tf_chi": str, "scheme": str, "poly_degree": int, "plambda_rule": str,
    "deltah_sign": str, "samples": int, "out": str, "workers": int,
}


def load_config(path) -> dict:
    """Flat ``key = value`` file; a leading section header is optional."""
    text = Path(path).read_text()
    parser = configparser.ConfigParser()
    if not text.lstrip().startswith("["):
        text = "[run]\n" + text
    parser.read_string(text)
    values = {}
    for section in parser.sections():
        for key, raw in parser.items(section):
            key = key.replace("-", "_")
            if key not in CONFIG_KEYS:
                raise ValueError(f"unknown config key {key!r}")
            values[key] = CONFIG_KEYS[key](raw)
    return values


def parse_list(text: str, cast=float) -> list:
    return [cast(x) for x in str(text).replace(";", ",").split(",") if x.strip()]


def custom_scenario(name: str, N: int, lambda0: float, omega_ratio: float,
                    tf_chi: Sequence[float], chi: float = DEFAULT_CHI,
                    schemes: Sequence[str] = ("adiabatic", "sta1", "sta2", "esta"),
                    outputs: Sequence[str] = ("fidelity",), sample_count: int = 0,
                    options: Options = Options()) -> Scenario:
    tf_chi = sorted(tf_chi)
    params = SystemParams.from_dimensionless(N, lambda0, omega_ratio, tf_chi[-1], chi=chi)
    return Scenario(name, params, tuple(schemes), tuple(t / chi for t in tf_chi),
                    tuple(outputs), sample_count, options)


def with_overrides(scenario: Scenario, **kw) -> Scenario:
    return replace(scenario, **kw)
