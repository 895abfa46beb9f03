"""Batch front end: read a TOML config, run chart -> corrections ->
spectra / dynamics pipelines, emit CSV tables and JSON summaries.

Outputs are deterministic for a given config (fixed grids, fixed seeds);
files are written atomically.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from . import csvio, dynamics, oracle
from . import expr as ex
from .spectra import (FHbar, QuantizationConfig, build_pipeline, compare,
                      convergence_study, quantize)


class ConfigError(ValueError):
    pass


def load_config(path):
    with open(path, "rb") as fh:
        cfg = tomllib.load(fh)
    sy = cfg.get("system", {})
    if "potential" not in sy:
        raise ConfigError("config needs [system] potential")
    if "name" not in sy:
        raise ConfigError("config needs [system] name")
    ch = cfg.get("chart", {})
    for key in ("e_min", "e_max"):
        if key not in ch:
            raise ConfigError(f"config needs [chart] {key}")
    # parse early so syntax errors carry file context
    try:
        ex.parse(sy["potential"])
        if "m" in sy:
            ex.parse(sy["m"])
    except ex.ExprError as e:
        raise ConfigError(f"bad expression in {path}: {e}") from e
    return cfg


def _threads(args):
    if args.threads:
        return args.threads
    return int(os.environ.get("QTORUS_THREADS", "1"))


def _pipeline(cfg):
    sy, ch = cfg["system"], cfg["chart"]
    return build_pipeline(
        sy["potential"], (ch["e_min"], ch["e_max"]),
        env=sy.get("params", {}), m_expr=sy.get("m"),
        n_tau=ch.get("n_tau", 256), n_s=ch.get("n_s", 96))


def _outdir(cfg, args):
    out = args.out or cfg.get("output", {}).get("dir", "out")
    os.makedirs(out, exist_ok=True)
    return out


def _hbars(cfg, args):
    if args.hbar:
        return [float(x) for x in args.hbar.split(",")]
    q = cfg.get("quantize", {})
    hb = q.get("hbar", [0.1])
    return [float(hb)] if np.isscalar(hb) else [float(x) for x in hb]


def cmd_spectrum(cfg, args):
    out = _outdir(cfg, args)
    name = cfg["system"]["name"]
    q = cfg.get("quantize", {})
    order = args.order if args.order is not None else q.get("order", 2)
    pipe = _pipeline(cfg)
    chart = pipe["chart"]
    summary = {"system": name, "order": order, "tables": []}
    threads = _threads(args)

    def solve(hb):
        n_max = int(q.get("n_max", 10))
        res = oracle.eigenlevels(chart.v_expr, hb, n_max + 3,
                                 m_expr=_m_potential(cfg))
        return hb, res

    hbars = _hbars(cfg, args)
    with ThreadPoolExecutor(max_workers=threads) as pool:
        results = list(pool.map(solve, hbars))
    for hb, res in results:
        qc = QuantizationConfig(hbar=hb, n_min=int(q.get("n_min", 0)),
                                n_max=int(q.get("n_max", 10)),
                                order=order,
                                mu_policy=q.get("mu_policy", "maslov"))
        st = quantize(pipe["ef"], pipe["ac"], qc,
                      oracle_levels=res.levels)
        rep = compare(st, res.levels)
        cols = [("N", st.n), ("s", st.s)]
        for o in sorted(st.energies):
            cols.append((f"E_order{o}", st.energies[o]))
        cols.append(("E_oracle", res.levels[st.n]))
        for o in sorted(st.energies):
            cols.append((f"err_order{o}", rep.errors_indexed[o]))
        path = os.path.join(out, f"spectrum_{name}_h{hb:g}.csv")
        csvio.write_csv(path, cols, meta={
            "system": name, "hbar": hb, "order": order, "mu": st.mu,
            "oracle_error": res.error, "root_route_defect": st.root_route_defect,
        })
        summary["tables"].append({
            "hbar": hb, "path": os.path.basename(path),
            "max_err": rep.max_err, "median_err": rep.median_err,
        })
    csvio.write_json(os.path.join(out, f"summary_{name}.json"), summary)
    print(f"wrote {len(results)} spectrum table(s) to {out}")
    return 0


def _m_potential(cfg):
    m = cfg.get("system", {}).get("m")
    if m is None:
        return None
    tree = ex.bind(ex.parse(m), cfg["system"].get("params", {}))
    if ex.free_vars(tree) - {"q1"}:
        raise ConfigError("the oracle supports hbar^2 symbol terms M(q) only")
    return tree


def cmd_converge(cfg, args):
    out = _outdir(cfg, args)
    name = cfg["system"]["name"]
    ch = cfg["chart"]
    hbars = _hbars(cfg, args)
    rep = convergence_study(
        cfg["system"]["potential"], (ch["e_min"], ch["e_max"]), hbars,
        orders=(0, 2), env=cfg["system"].get("params", {}),
        chart_kw={"n_tau": ch.get("n_tau", 256), "n_s": ch.get("n_s", 96)})
    payload = {
        "system": name,
        "hbar": list(map(float, rep.hbars)),
        "max_errors": {str(o): list(map(float, v))
                       for o, v in rep.max_errors.items()},
        "slopes": {str(o): {"slope": s[0], "intercept": s[1], "ci95": s[2]}
                   for o, s in rep.slopes.items()},
    }
    csvio.write_json(os.path.join(out, f"slopes_{name}.json"), payload)
    for o, s in rep.slopes.items():
        print(f"order {o}: slope {s[0]:.3f} +- {s[2]:.3f}")
    return 0


def cmd_dynamics(cfg, args):
    out = _outdir(cfg, args)
    name = cfg["system"]["name"]
    dy = cfg.get("dynamics", {})
    hb = float(dy.get("hbar", 0.1))
    n_torus = int(dy.get("n", 8))
    kmax = int(dy.get("k_max", 4))
    horizon = float(dy.get("horizon", 10.0 / hb))
    pipe = _pipeline(cfg)
    chart = pipe["chart"]
    prof = FHbar(chart, pipe["ac"], hb)
    res = oracle.eigenlevels(chart.v_expr, hb, n_torus + kmax + 3,
                             m_expr=_m_potential(cfg))
    state = dynamics.TorusState(n_torus, hb,
                                np.ones(2 * kmax + 1, dtype=complex)
                                / math.sqrt(2 * kmax + 1))
    times = np.linspace(horizon / 24, horizon, 24)
    rows = []
    for t in times:
        ph, inside = dynamics.mode_phases(state, prof, t)
        for i, k in enumerate(state.modes):
            if k == 0 or not inside[i] or n_torus + k < 0:
                continue
            oph = (t / hb) * (res.levels[n_torus + k] - res.levels[n_torus])
            rows.append((t, k, ph[i], 1.0 / math.sqrt(2 * kmax + 1),
                         oph, abs(ph[i] - oph)))
    cols = list(zip(*rows))
    path = os.path.join(out, f"dynamics_{name}_h{hb:g}.csv")
    csvio.write_csv(path, [
        ("t", cols[0]), ("mode", cols[1]), ("phase", cols[2]),
        ("abs_g", cols[3]), ("oracle_phase", cols[4]), ("error", cols[5]),
    ], meta={"system": name, "hbar": hb, "n": n_torus,
             "oracle_error": res.error})
    rep = dynamics.frontier_report(state, prof, times)
    csvio.write_json(os.path.join(out, f"frontier_{name}.json"), {
        "system": name, "hbar": hb, "omega": rep["omega"],
        "diffusion": rep["diffusion"],
        "frontier_times": {str(k): (v if math.isfinite(v) else None)
                           for k, v in rep["frontier_times"].items()},
    })
    print(f"wrote {path}")
    return 0


def cmd_verify(cfg, args):
    from . import moyal
    from . import polystar as ps
    from .qgeom import angle_correction

    checks = []

    def check(label, value, tol):
        ok = value < tol
        checks.append(ok)
        print(f"{'PASS' if ok else 'FAIL'}  {label}: residual {value:.3e} "
              f"(tol {tol:g})")

    # convention lock against the operator oracle
    a, b = ps.from_expr(ex.parse("q1^3")), ps.from_expr(ex.parse("p1^3"))
    cs = oracle.star_commutator(a, b)
    lam3 = ps.lambda_k(a, b, 3)
    defect = (cs[1] + moyal.DD_COEFF[0] * lam3).max_abs()
    check("commutator hbar^2 coefficient vs frozen 1/24", defect, 1e-10)
    cs5 = oracle.star_commutator(ps.from_expr(ex.parse("q1^5")),
                                 ps.from_expr(ex.parse("p1^5")))
    lam5 = ps.lambda_k(ps.from_expr(ex.parse("q1^5")),
                       ps.from_expr(ex.parse("p1^5")), 5)
    defect = (cs5[2] + moyal.DD_COEFF[1] * lam5).max_abs() / lam5.max_abs()
    check("commutator hbar^4 coefficient vs frozen -1/1920", defect, 1e-10)

    pipe = _pipeline(cfg)
    chart = pipe["chart"]
    check("chart canonicity |{s,tau}-1|", chart.canonicity(), 1e-8)
    check("area-action defect",
          float(np.max(np.abs(chart.area_action() - chart.s_levels))), 1e-9)
    gj = chart.grid_jets(3)
    check("jet route (a)/(b) mismatch", gj.mismatch, 1e-5)
    an = pipe["angle"]
    check("angle periodicity residual", an.periodicity_residual, 1e-5)
    q = cfg.get("quantize", {})
    hb = _hbars(cfg, args)[0]
    qc = QuantizationConfig(hbar=hb, n_min=int(q.get("n_min", 0)),
                            n_max=int(q.get("n_max", 8)), order=2)
    st = quantize(pipe["ef"], pipe["ac"], qc)
    check("closed-form vs implicit quantization", st.root_route_defect, 1e-9)
    ok = all(checks)
    print("verify:", "all checks passed" if ok else "FAILURES present")
    return 0 if ok else 1


def main(argv=None):
    ap = argparse.ArgumentParser(
        prog="qtorus",
        description="Torus quantization with hbar-deformed symplectic geometry")
    ap.add_argument("--config", required=True, help="TOML config path")
    ap.add_argument("--out", default=None, help="output directory")
    ap.add_argument("--order", type=int, default=None, choices=(0, 2, 4))
    ap.add_argument("--hbar", default=None,
                    help="comma-separated hbar list (overrides config)")
    ap.add_argument("--threads", type=int, default=None,
                    help="worker threads (default: QTORUS_THREADS or 1)")
    ap.add_argument("command", choices=("spectrum", "converge", "dynamics",
                                        "verify"))
    args = ap.parse_args(argv)
    try:
        cfg = load_config(args.config)
        fn = {"spectrum": cmd_spectrum, "converge": cmd_converge,
              "dynamics": cmd_dynamics, "verify": cmd_verify}[args.command]
        return fn(cfg, args)
    except (ConfigError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
