"""Command-line front end: ``evload <command> [config.yaml]``.

Each command reads a study config, runs its points (optionally on a process
pool), writes CSV tables with unit-bearing headers and finishes with
``manifest_<command>.json``.  Workers only compute; the parent process does every file
write, in the order the points were submitted, so output files do not
depend on ``--jobs``.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from importlib.metadata import PackageNotFoundError, version
from pathlib import Path

import numpy as np

from .config import StudyConfig, config_from_dict, parse_config
from .errors import EvLoadError, ValidationError

COMMANDS = ("charge", "sweep-static", "fit-static", "extract-vflm", "powerflow", "stability-sweep", "transient")
EV_MODELS = ("pq", "static", "detailed", "vflm")


def tool_version() -> str:
    try:
        return version("evload")
    except PackageNotFoundError:
        return "unknown"


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return "nan" if not math.isfinite(x) else f"{float(x):.10g}"
    return str(x)


class Run:
    """Output directory, stage timers and per-point status of one command."""

    def __init__(self, command: str, cfg: StudyConfig, outdir: Path, jobs: int, seed):
        self.command, self.cfg, self.outdir, self.jobs, self.seed = command, cfg, outdir, jobs, seed
        self.stages: list = []
        self.points: list = []
        self.files: list = []
        outdir.mkdir(parents=True, exist_ok=True)

    def stage(self, name: str):
        run = self

        class _Timer:
            def __enter__(self):
                self.t0 = time.perf_counter()

            def __exit__(self, *exc):
                run.stages.append({"stage": name, "seconds": round(time.perf_counter() - self.t0, 4)})
                return False

        return _Timer()

    def point(self, pid: str, ok: bool, message: str = ""):
        self.points.append({"point": pid, "converged": bool(ok), "message": message})

    def write_csv(self, name: str, header, rows) -> Path:
        path = self.outdir / name
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for r in rows:
                w.writerow([fmt(v) for v in r])
        self.files.append(name)
        return path

    def write_json(self, name: str, doc) -> Path:
        path = self.outdir / name
        path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
        self.files.append(name)
        return path

    @property
    def ok(self) -> bool:
        return all(p["converged"] for p in self.points)

    def finish(self) -> Path:
        doc = {
            "command": self.command,
            "config_sha256": self.cfg.digest(),
            "config": self.cfg.to_dict(),
            "version": tool_version(),
            "seed": self.seed,
            "jobs": self.jobs,
            "stages": self.stages,
            "points": self.points,
            "all_converged": self.ok,
            "files": sorted(set(self.files)),
        }
        final = self.outdir / f"manifest_{self.command}.json"
        tmp = final.with_suffix(".json.tmp")
        tmp.write_text(json.dumps(doc, indent=2) + "\n")
        os.replace(tmp, final)
        return final


def run_points(fn, args: list, jobs: int) -> list:
    """``[fn(*a) for a in args]``, optionally on a process pool; order is preserved."""
    if jobs <= 1 or len(args) <= 1:
        return [fn(*a) for a in args]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, *zip(*args)))


def _guard(fn, *args):
    """Run one point; failures become ``(False, message)`` instead of killing the pool."""
    try:
        return True, fn(*args)
    except (EvLoadError, np.linalg.LinAlgError, ArithmeticError) as exc:
        return False, f"{type(exc).__name__}: {exc}"


# ------------------------------------------------------------------ models
def make_ev(cfg_dict: dict, chemistry: str, mode: str, ki_pi1: float | None = None):
    from .control import ControlGains, PiParams
    from .detailed import DetailedEV
    from .station import StationParams

    st = cfg_dict["station"]
    station = StationParams(R_F=st["R_F"], L_F=st["L_F"], C_DC1=st["C_DC1"], L_DC=st["L_DC"], C_DC2=st["C_DC2"],
                            v_c_nom=st["v_c_nom"], P_ev_nom=cfg_dict["fleet"]["P_ev_nom"], omega=2 * math.pi * st["f_ac"])
    gains = ControlGains(PiParams(*st["pi1"]), PiParams(*st["pi2"]), PiParams(*st["pi3"]), PiParams(*st["pi4"]), PiParams(*st["cv"]))
    if ki_pi1 is not None:
        gains = gains.with_ki_pi1(ki_pi1)
    return DetailedEV(chemistry, mode, station=station, gains=gains, v_dc_ref=st["v_dc_ref"], Q_ref=st["Q_ref"],
                      P_batt_ref=st["P_batt_ref"])


def _case(cfg_dict):
    from .grid import load_case

    return load_case(cfg_dict["case"])


def _fleet_spec(cfg_dict):
    from .grid import FleetSpec

    f = cfg_dict["fleet"]
    return FleetSpec(f["representation"], f["chemistry"], f["mode"], f["soc0"], f["P_ev_nom"])


def _require_default_station(cfg: StudyConfig):
    """Network studies use the benchmark station; refuse overrides rather than ignore them."""
    if not cfg.station_is_default():
        raise ValidationError("station overrides apply to single-station commands only")
    if cfg.fleet.representation != "pq" and cfg.fleet.P_ev_nom != 50_000.0:
        raise ValidationError("fleet.P_ev_nom must stay 50000 W for station-based representations")


# ------------------------------------------------------------ point workers
def _charge_point(cfg_dict, chemistry, mode):
    from .analysis.simulate import simulate_charge

    c = cfg_dict["charge"]
    res = simulate_charge(make_ev(cfg_dict, chemistry, mode), c["soc0"], t_max=c["t_max"], n_samples=c["n_samples"], rtol=c["rtol"])
    cols = np.column_stack([res.t, res.soc, res.i_batt, res.v_batt, res.v_cell, res.P_batt, res.P_ev, res.phase])
    return cols, {"t_switch_s": res.t_switch, "reason": res.reason, "energy_in_J": res.energy_in,
                  "energy_stored_J": res.energy_stored, "energy_gap": res.energy_gap}


def _sweep_point(cfg_dict, chemistry, mode):
    from .analysis.studies import sweep_voltage_soc

    sw = cfg_dict["sweep"]
    ds = sweep_voltage_soc(make_ev(cfg_dict, chemistry, mode), sw["v_ratios"], sw["soc0s"])
    return np.column_stack([ds.v_ratio, ds.soc0, ds.p_norm]), ds.failures


def _eig_point(cfg_dict, lam, ki, representation):
    from dataclasses import replace

    from .analysis.stability import eigen_at

    spec = replace(_fleet_spec(cfg_dict), representation=representation)
    r = eigen_at(_case(cfg_dict), lam, spec, ki, vflm_order=cfg_dict["vflm"]["order"])
    crit = r.critical
    return float(r.sigma_M), complex(crit)


def _transient_point(cfg_dict, ki, representation):
    from dataclasses import replace

    from .analysis.transient import dominant_oscillation, transient_disturbance

    tr = cfg_dict["transient"]
    lam = tr["lam"] if tr["lam"] is not None else cfg_dict["fleet"]["lam"]
    spec = replace(_fleet_spec(cfg_dict), representation=representation)
    res = transient_disturbance(_case(cfg_dict), lam, spec, ki, load_bus=tr["load_bus"], size=tr["size"], duration=tr["duration"],
                                t_end=tr["t_end"], h=tr["h"], record_buses=tr["record_buses"], vflm_order=cfg_dict["vflm"]["order"])
    try:
        mode = dominant_oscillation(res, tr["record_buses"][0], tr["analyse_from"])
    except EvLoadError:
        mode = None
    devs = np.column_stack([res.deviation(b) for b in res.bus_ids])
    return res.t, devs, mode, lam


# ------------------------------------------------------------------ commands
def cmd_charge(run: Run):
    cfg = run.cfg
    pts = [(c, m) for c in cfg.sweep.chemistries for m in cfg.sweep.modes]
    with run.stage("simulate"):
        out = run_points(_guard, [(_charge_point, cfg.to_dict(), c, m) for c, m in pts], run.jobs)
    summary = []
    for (c, m), (ok, res) in zip(pts, out):
        run.point(f"{c}/{m}", ok, "" if ok else res)
        if not ok:
            continue
        cols, info = res
        run.write_csv(f"charge_{c.lower()}_{m.lower()}.csv",
                      ["t_s", "soc", "i_batt_A", "v_batt_V", "v_cell_V", "P_batt_W", "P_ev_W", "phase_cv"], cols)
        summary.append([c, m, info["t_switch_s"] if info["t_switch_s"] is not None else float("nan"), info["reason"],
                        info["energy_in_J"], info["energy_stored_J"], info["energy_gap"]])
    run.write_csv("charge_summary.csv", ["chemistry", "mode", "t_switch_s", "reason", "energy_in_J", "energy_stored_J", "energy_gap"], summary)


def cmd_sweep_static(run: Run):
    cfg = run.cfg
    pts = [(c, m) for c in cfg.sweep.chemistries for m in cfg.sweep.modes]
    with run.stage("sweep"):
        out = run_points(_guard, [(_sweep_point, cfg.to_dict(), c, m) for c, m in pts], run.jobs)
    spreads = []
    for (c, m), (ok, res) in zip(pts, out):
        if not ok:
            run.point(f"{c}/{m}", False, res)
            continue
        rows, failures = res
        for v, s, msg in failures:
            run.point(f"{c}/{m}/v={v:g}/soc0={s:g}", False, msg)
        run.point(f"{c}/{m}", not failures)
        run.write_csv(f"static_sweep_{c.lower()}_{m.lower()}.csv", ["v_ratio_pu", "soc0", "p_norm_pu"], rows)
        for v in np.unique(rows[:, 0]):
            sel = (rows[:, 0] == v) & np.isfinite(rows[:, 2])
            if np.any(sel):
                spreads.append([c, m, v, float(np.ptp(rows[sel, 2]))])
    run.write_csv("static_sweep_spread.csv", ["chemistry", "mode", "v_ratio_pu", "soc0_spread_pu"], spreads)


def _read_sweep(path: Path) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)


def cmd_fit_static(run: Run):
    from .loadmodels import write_model_file
    from .vfit import EV_STATIC_NAMES, EXP_NAMES, fit_static

    cfg = run.cfg
    pts = [(c, m) for c in cfg.sweep.chemistries for m in cfg.sweep.modes]
    missing = [(c, m) for c, m in pts if not (run.outdir / f"static_sweep_{c.lower()}_{m.lower()}.csv").exists()]
    computed = {}
    if missing:
        with run.stage("sweep"):
            out = run_points(_guard, [(_sweep_point, cfg.to_dict(), c, m) for c, m in missing], run.jobs)
        for key, (ok, res) in zip(missing, out):
            computed[key] = res[0] if ok else None
            if not ok:
                run.point(f"{key[0]}/{key[1]}/sweep", False, res)
    report = []
    with run.stage("fit"):
        for c, m in pts:
            rows = computed[(c, m)] if (c, m) in computed else _read_sweep(run.outdir / f"static_sweep_{c.lower()}_{m.lower()}.csv")
            if rows is None:
                continue
            rows = rows[np.isfinite(rows[:, 2])]
            v_nom, P_nom = cfg.station.v_c_nom, cfg.fleet.P_ev_nom
            data = np.column_stack([rows[:, 0] * v_nom, rows[:, 1], rows[:, 2] * P_nom])
            kind = "ev_static" if m.upper() == "CCCV" else "exp"
            try:
                params, rep = fit_static(data, kind, P_nom, v_nom)
            except EvLoadError as exc:
                run.point(f"{c}/{m}/fit", False, str(exc))
                continue
            run.point(f"{c}/{m}/fit", bool(rep.converged), rep.message)
            write_model_file(params, run.outdir / f"static_model_{c.lower()}_{m.lower()}.json",
                             {"chemistry": c, "mode": m, "rmse": rep.rmse})
            run.files.append(f"static_model_{c.lower()}_{m.lower()}.json")
            names = EV_STATIC_NAMES if kind == "ev_static" else EXP_NAMES
            report.append([kind, c, m, ";".join(f"{k}={getattr(params, k):.10g}" for k in names), rep.rmse, rep.converged])
    run.write_csv("static_fit.csv", ["kind", "chemistry", "mode", "params", "rmse_pu", "converged"], report)


def cmd_extract_vflm(run: Run):
    from .analysis.studies import extract_vflm
    from .loadmodels import vflm_power, write_model_file

    cfg, v = run.cfg, run.cfg.vflm
    f = cfg.fleet
    freqs = np.logspace(np.log10(v.f_min_hz), np.log10(v.f_max_hz), v.n_freq)
    with run.stage("extract"):
        ev = make_ev(cfg.to_dict(), f.chemistry, f.mode, f.ki_pi1[0])
        ex = extract_vflm(ev, f.soc0, tuple(v.orders), freqs, v.step)
    fit_rows, step_cols = [], [ex.record.t, ex.record.v, ex.record.P]
    freq_cols = [ex.response.omega / (2 * np.pi), ex.response.values.real, ex.response.values.imag]
    s = 1j * ex.response.omega
    for n in v.orders:
        m, rep = ex.models[n], ex.reports[n]
        run.point(f"order{n}", bool(rep.converged), rep.message)
        write_model_file(m, run.outdir / f"vflm_order{n}.json", {"chemistry": f.chemistry, "mode": f.mode, "soc0": f.soc0})
        run.files.append(f"vflm_order{n}.json")
        fit_rows.append([n, m.N_t, m.N_s, rep.rmse, " ".join(f"{p.real:.8g}{p.imag:+.8g}j" for p in m.G.poles)])
        step_cols.append(vflm_power(m, ex.record.t, ex.record.v))
        g = m.G(s)
        freq_cols += [g.real, g.imag]
    run.write_csv("vflm_fit.csv", ["order", "N_t", "N_s", "time_rmse_rel", "poles_per_s"], fit_rows)
    run.write_csv("vflm_step.csv", ["t_s", "v_pu", "P_detailed_W"] + [f"P_order{n}_W" for n in v.orders], np.column_stack(step_cols))
    run.write_csv("vflm_freq.csv", ["f_Hz", "G_re", "G_im"] + [h for n in v.orders for h in (f"G{n}_re", f"G{n}_im")],
                  np.column_stack(freq_cols))


def cmd_powerflow(run: Run):
    from .analysis.studies import overload_static_study
    from .grid import apply_overload, solve_power_flow, write_power_flow_csv

    cfg = run.cfg
    _require_default_station(cfg)
    case = _case(cfg.to_dict())
    with run.stage("powerflow"):
        c = apply_overload(case, cfg.fleet.lam, _fleet_spec(cfg.to_dict()))
        try:
            sol = solve_power_flow(c, tol=cfg.powerflow.tol, max_iter=cfg.powerflow.max_iter, ki_pi1=cfg.fleet.ki_pi1[0])
        except EvLoadError as exc:
            run.point(f"lam={cfg.fleet.lam:g}", False, str(exc))
            return
    run.point(f"lam={cfg.fleet.lam:g}", sol.converged, "; ".join(sol.notes))
    for p in write_power_flow_csv(c, sol, run.outdir).values():
        run.files.append(p.name)
    if cfg.powerflow.compare_variants:
        with run.stage("variants"):
            rows = overload_static_study(case, cfg.fleet.lam if cfg.fleet.lam > 0 else 0.2, tuple(cfg.sweep.chemistries),
                                         tuple(cfg.sweep.modes), tuple(cfg.sweep.soc0s))
        for r in rows:
            run.point(f"variant/{r.representation}/{r.chemistry}/{r.mode}/{r.soc0:g}", r.converged)
        run.write_csv("overload_variants.csv",
                      ["representation", "chemistry", "mode", "soc0", "i_line12_pu", "losses_MW", "current_change_rel", "loss_change_rel"],
                      [[r.representation, r.chemistry, r.mode, r.soc0, r.line_current, r.losses_mw, r.current_change, r.loss_change]
                       for r in rows])


def cmd_stability_sweep(run: Run):
    cfg = run.cfg
    _require_default_station(cfg)
    rep = cfg.fleet.representation
    lams, kis = cfg.sweep.lambdas, cfg.fleet.ki_pi1
    pts = [(lam, ki) for ki in kis for lam in lams]
    with run.stage("eigen"):
        out = run_points(_guard, [(_eig_point, cfg.to_dict(), lam, ki, rep) for lam, ki in pts], run.jobs)
    from .analysis.stability import SweepResult
    from .grid import Representation

    rows, sig = [], {ki: [] for ki in kis}
    for (lam, ki), (ok, res) in zip(pts, out):
        run.point(f"ki={ki:g}/lam={lam:g}", ok, "" if ok else res)
        s, crit = res if ok else (float("nan"), complex("nan"))
        sig[ki].append(s)
        rows.append([lam, ki, s, crit.real, abs(crit.imag) / (2 * math.pi), ok])
    run.write_csv(f"stability_{rep}.csv", ["lambda", "ki_pi1", "sigma_M_per_s", "critical_re_per_s", "critical_freq_Hz", "converged"], rows)
    thr = []
    for ki in kis:
        t = SweepResult(np.array(lams), np.array(sig[ki]), Representation.parse(rep), ki).threshold()
        thr.append([ki, float("nan") if t is None else t])
    run.write_csv(f"stability_{rep}_threshold.csv", ["ki_pi1", "lambda_star"], thr)


def cmd_transient(run: Run):
    cfg = run.cfg
    _require_default_station(cfg)
    rep = cfg.fleet.representation
    kis = cfg.fleet.ki_pi1
    with run.stage("integrate"):
        out = run_points(_guard, [(_transient_point, cfg.to_dict(), ki, rep) for ki in kis], run.jobs)
    modes = []
    for ki, (ok, res) in zip(kis, out):
        run.point(f"ki={ki:g}", ok, "" if ok else res)
        if not ok:
            continue
        t, devs, mode, lam = res
        run.write_csv(f"transient_{rep}_ki{ki:g}.csv", ["t_s"] + [f"dv_bus{b}_pu" for b in cfg.transient.record_buses],
                      np.column_stack([t, devs]))
        if mode is not None:
            modes.append([ki, lam, mode.sigma, mode.freq_hz, mode.amplitude, "growing" if mode.sigma > 0 else "decaying"])
    run.write_csv(f"transient_{rep}_modes.csv", ["ki_pi1", "lambda", "sigma_per_s", "freq_Hz", "amplitude_pu", "envelope"], modes)


HANDLERS = {
    "charge": cmd_charge,
    "sweep-static": cmd_sweep_static,
    "fit-static": cmd_fit_static,
    "extract-vflm": cmd_extract_vflm,
    "powerflow": cmd_powerflow,
    "stability-sweep": cmd_stability_sweep,
    "transient": cmd_transient,
}


def run_study(command: str, cfg: StudyConfig, outdir=None, jobs: int = 1, seed=None) -> tuple[int, Run]:
    """Execute one command; returns ``(exit status, run record)``.  Exit 0 only if every point converged."""
    if command not in HANDLERS:
        raise ValidationError(f"unknown command {command!r}")
    run = Run(command, cfg, Path(outdir or cfg.output_dir), max(1, jobs), seed)
    try:
        HANDLERS[command](run)
    except EvLoadError as exc:
        run.point("command", False, f"{type(exc).__name__}: {exc}")
    run.finish()
    return (0 if run.ok and run.points else 1), run


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="evload", description="EV charging-station load models and grid studies.")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("config", nargs="?", help="YAML study config (defaults apply when omitted)")
        p.add_argument("-o", "--out", help="output directory (overrides output_dir)")
        p.add_argument("-j", "--jobs", type=int, default=1, help="worker processes")
        p.add_argument("--seed", type=int, default=None, help="reserved; every algorithm is deterministic")
        p.add_argument("--ev-model", choices=EV_MODELS, help="fleet representation (overrides fleet.representation)")
        p.add_argument("--ki", type=float, action="append", help="PI1 integral gain; repeat for several (overrides fleet.ki_pi1)")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = parse_config(args.config) if args.config else config_from_dict({})
        if args.ev_model or args.ki:
            d = cfg.to_dict()
            if args.ev_model:
                d["fleet"]["representation"] = args.ev_model
            if args.ki:
                d["fleet"]["ki_pi1"] = args.ki
            cfg = config_from_dict(d)
    except EvLoadError as exc:
        print(f"evload: config error: {exc}", file=sys.stderr)
        return 2
    try:
        status, run = run_study(args.command, cfg, args.out, args.jobs, args.seed)
    except Exception:  # pragma: no cover - last-resort report
        traceback.print_exc()
        return 3
    bad = [p for p in run.points if not p["converged"]]
    for p in bad:
        print(f"evload: point {p['point']} failed: {p['message']}", file=sys.stderr)
    print(f"{args.command}: {len(run.points) - len(bad)}/{len(run.points)} points converged, output in {run.outdir}")
    return status


if __name__ == "__main__":
    sys.exit(main())
