"""Command-line entry point: synthesize, evolve, sweep, esta-diag, oat."""
from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from . import harness
from .control import PLAMBDA_RULES
from .esta import DELTAH_RULES

DEFAULTS = {
    "n": 50, "chi": harness.DEFAULT_CHI, "lambda0": 10.0, "omega_ratio": harness.DEFAULT_RATIO,
    "tf_chi": "0.16", "poly_degree": 6, "plambda_rule": "min-norm", "deltah_sign": "subtract",
    "samples": 201, "out": "out", "workers": 1, "preset": None, "scheme": None,
}

DEFAULT_SCHEMES = {
    "synthesize": "adiabatic,sta1,sta2,esta",
    "evolve": "adiabatic,sta1,sta2,esta",
    "sweep": "sta1,sta2,esta",
    "esta-diag": "esta",
    "oat": "sta1,sta2,esta",
}


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value file; flags override it")
    common.add_argument("--preset", choices=harness.PRESETS)
    common.add_argument("--n", type=int, help="number of particles N")
    common.add_argument("--chi", type=float, help="nonlinear coupling chi in rad/s")
    common.add_argument("--lambda0", type=float)
    common.add_argument("--omega-ratio", type=float, help="Omega_f / Omega_0")
    common.add_argument("--tf-chi", help="comma-separated chi * t_f values")
    common.add_argument("--scheme", help="comma-separated schemes")
    common.add_argument("--poly-degree", type=int)
    common.add_argument("--plambda-rule", choices=PLAMBDA_RULES)
    common.add_argument("--deltah-sign", choices=DELTAH_RULES)
    common.add_argument("--samples", type=int, help="time samples per trajectory")
    common.add_argument("--workers", type=int, help="worker processes for sweep cells")
    common.add_argument("--out", help="output directory")

    p = argparse.ArgumentParser(prog="bjjsqueeze", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("synthesize", parents=[common], help="emit control traces Omega(t)")
    sub.add_parser("evolve", parents=[common], help="squeezing and fidelity time series")
    sub.add_parser("sweep", parents=[common], help="fidelity, sensitivities and imperfection vs t_f")
    sub.add_parser("esta-diag", parents=[common], help="G, K and lambda report")
    sub.add_parser("oat", parents=[common], help="max-plane squeezing against one-axis twisting")
    return p


def _settings(args) -> dict:
    cfg = dict(DEFAULTS)
    if args.config:
        cfg.update(harness.load_config(args.config))
    for key in DEFAULTS:
        value = getattr(args, key, None)
        if value is not None:
            cfg[key] = value
    if cfg["scheme"] is None:
        cfg["scheme"] = DEFAULT_SCHEMES[args.command]
    return cfg


def _explicit(args, key) -> bool:
    return getattr(args, key, None) is not None


def _scenarios(args, cfg, outputs, sample_count) -> list:
    options = harness.Options(poly_degree=cfg["poly_degree"], plambda_rule=cfg["plambda_rule"],
                              deltah_rule=cfg["deltah_sign"])
    schemes = tuple(harness.parse_list(cfg["scheme"], str))
    if cfg["preset"]:
        out = []
        for sc in harness.preset(cfg["preset"], chi=cfg["chi"]):
            kw = {"options": options, "outputs": tuple(outputs or sc.outputs),
                  "sample_count": sample_count if sample_count is not None else sc.sample_count}
            if _explicit(args, "scheme"):
                kw["schemes"] = schemes
            elif outputs is not None:
                kw["schemes"] = tuple(s for s in sc.schemes if not s.startswith("oat"))
            if _explicit(args, "tf_chi"):
                kw["tf_grid"] = tuple(t / cfg["chi"] for t in harness.parse_list(cfg["tf_chi"]))
            out.append(replace(sc, **kw))
        return out
    return [harness.custom_scenario(
        "custom", cfg["n"], cfg["lambda0"], cfg["omega_ratio"], harness.parse_list(cfg["tf_chi"]),
        chi=cfg["chi"], schemes=schemes, outputs=outputs or ("fidelity",),
        sample_count=sample_count or 0, options=options)]


def cmd_synthesize(args, cfg) -> list[Path]:
    written = []
    for sc in _scenarios(args, cfg, None, None):
        rows = []
        for scheme in sc.schemes:
            for t_f in sc.tf_grid:
                params = sc.params.with_tf(t_f)
                sched = harness.build_schedule(scheme, params, sc.options)
                rows.extend(harness.trace_rows(sched, params, scheme, cfg["samples"]))
        meta = harness.metadata(sc.options, {"scenario": sc.name, "table": "schedule"})
        written.append(harness.write_table(Path(cfg["out"]), f"{sc.name}_schedule", rows, meta))
    return written


def cmd_evolve(args, cfg) -> list[Path]:
    written = []
    outputs = ("fidelity", "xi_N", "xi_S_dB", "xi_N_max")
    for sc in _scenarios(args, cfg, outputs, cfg["samples"]):
        written += harness.write_result(harness.run_scenario(sc, cfg["workers"]), Path(cfg["out"]))
    return written


def cmd_sweep(args, cfg) -> list[Path]:
    written = []
    outputs = None if cfg["preset"] else ("fidelity", "sensitivity", "imperfection")
    for sc in _scenarios(args, cfg, outputs, 0):
        written += harness.write_result(harness.run_scenario(sc, cfg["workers"]), Path(cfg["out"]))
    return written


def cmd_esta_diag(args, cfg) -> list[Path]:
    written = []
    for sc in _scenarios(args, cfg, None, None):
        rows = []
        for t_f in sc.tf_grid:
            params = sc.params.with_tf(t_f)
            rep = harness.esta_diagnostics(params, sc.options)
            row = harness.param_row(params, "esta")
            for i, (lam, lam_chi) in enumerate(zip(rep["lambda"], rep["lambda_over_chi"]), 1):
                row[f"lambda{i}"] = lam
                row[f"lambda{i}_over_chi"] = lam_chi
            for n, (g, krow) in enumerate(zip(rep["G"], rep["K"]), 1):
                row[f"G{n}_re"], row[f"G{n}_im"] = g
                for i, k in enumerate(krow, 1):
                    row[f"K{n}{i}_re"], row[f"K{n}{i}_im"] = k
            row["degenerate"] = int(rep["degenerate"])
            row["tau_nodes"] = rep["tau_nodes"]
            row["z_nodes"] = rep["z_nodes"]
            rows.append(row)
        meta = harness.metadata(sc.options, {"scenario": sc.name, "table": "esta"})
        written.append(harness.write_table(Path(cfg["out"]), f"{sc.name}_esta", rows, meta))
    return written


def cmd_oat(args, cfg) -> list[Path]:
    written = []
    for sc in _scenarios(args, cfg, ("xi_N_max",), 0):
        controlled = tuple(s for s in sc.schemes if not s.startswith("oat"))
        res = harness.run_scenario(replace(sc, schemes=controlled), cfg["workers"])
        rows = [{k: r[k] for k in (*harness.PARAM_COLUMNS, "xi_N_max_sq", "error") if k in r}
                for r in res.tables.get("endpoint", [])]
        for initial in ("groundstate", "css"):
            for r in harness.run_oat_comparison(sc.params, sc.tf_grid, initial):
                rows.append(dict(r, error=""))
        meta = harness.metadata(sc.options, {"scenario": sc.name, "table": "oat"})
        written.append(harness.write_table(Path(cfg["out"]), f"{sc.name}_oat", rows, meta))
    return written


COMMANDS = {"synthesize": cmd_synthesize, "evolve": cmd_evolve, "sweep": cmd_sweep,
            "esta-diag": cmd_esta_diag, "oat": cmd_oat}


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = _settings(args)
        paths = COMMANDS[args.command](args, cfg)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for path in paths:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
