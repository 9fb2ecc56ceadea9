"""Command-line front end.

Settings come from (highest first) command-line flags, a flat ``key = value``
config file given with ``--config``, and built-in defaults.  Every output is
written atomically; JSON is emitted with sorted keys so identical inputs give
identical bytes.  Wall-clock timestamps go to ``run.log`` only.
"""

from __future__ import annotations

import argparse
import datetime
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import diagnostics as dg
from . import energy as en
from . import exact1d as ex
from . import operators as ops
from .errors import ConfigInvalid, MaxIterExceeded, PVMError, UnknownFigure
from .fieldio import atomic_write_text, read_field, write_field
from .grid import GridSpec, ScalarField, project_mean_zero, random_field
from .mollifier import MollifierSpec, load_profile_csv, min0, min_eps, named_profile
from .solver import METHODS, SolveConfig, continuation_solve, solve, solve_eps

EXIT_OK, EXIT_MAXITER, EXIT_INVALID = 0, 2, 3

DEFAULTS = {
    "grid": "4,4,256",
    "periods": None,
    "constants": "",
    "mollifier": "bump",
    "eps": 0.0,
    "tol": None,
    "max_iter": 2000,
    "seed": 0,
    "out": "out",
    "mode": ops.DEFAULT_MODE,
    "method": METHODS[0],
    "preset": None,
    "M": None,
    "PV": None,
    "M_profile": None,
    "PV_profile": None,
    "p": None,
    "continuation": None,
    "eps_list": "0.2,0.1,0.05,0.025",
    "n_list": "64,128,256,512",
    "case": "baseball-cap",
    "trials": 100,
    "figure": None,
    "delta": 0.1,
    "random_start": False,
}

FIGURES = ("phase-figure", "regularisation-figure", "sharp-reg-figure")


# ---------------------------------------------------------------------------
# config handling

def read_config_file(path) -> dict:
    out = {}
    text = Path(path).read_text()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigInvalid(f"{path}:{lineno}: expected key = value")
        k, v = (s.strip() for s in line.split("=", 1))
        out[k.replace("-", "_")] = v
    bad = sorted(set(out) - set(DEFAULTS))
    if bad:
        raise ConfigInvalid(f"unknown config keys: {', '.join(bad)}")
    return out


def merge_settings(args: argparse.Namespace) -> dict:
    settings = dict(DEFAULTS)
    if getattr(args, "config", None):
        settings.update(read_config_file(args.config))
    for k in DEFAULTS:
        v = getattr(args, k, None)
        if v is not None and v is not False:
            settings[k] = v
    return settings


def _ints(s, what):
    try:
        return tuple(int(v) for v in str(s).split(","))
    except ValueError:
        raise ConfigInvalid(f"{what}: expected comma-separated integers, got {s!r}") from None


def _floats(s, what):
    try:
        return tuple(float(v) for v in str(s).split(","))
    except ValueError:
        raise ConfigInvalid(f"{what}: expected comma-separated numbers, got {s!r}") from None


def _float(s, what):
    try:
        return float(s)
    except (TypeError, ValueError):
        raise ConfigInvalid(f"{what}: expected a number, got {s!r}") from None


def build_grid(st) -> GridSpec:
    n = _ints(st["grid"], "grid")
    if len(n) != 3:
        raise ConfigInvalid("grid needs three sizes n1,n2,n3")
    L = _floats(st["periods"], "periods") if st["periods"] else (2 * math.pi,) * 3
    if len(L) != 3:
        raise ConfigInvalid("periods needs three values L1,L2,L3")
    try:
        return GridSpec(n, L)
    except ValueError as e:
        raise ConfigInvalid(f"grid: {e}") from None


def build_constants(st) -> en.PhysicalConstants:
    spec = st["constants"] or ""
    vals = {}
    for item in filter(None, (s.strip() for s in str(spec).split(","))):
        if "=" not in item:
            raise ConfigInvalid(f"constants: expected k=v, got {item!r}")
        k, v = (s.strip() for s in item.split("=", 1))
        if k not in en.PhysicalConstants.KEYS:
            raise ConfigInvalid(f"constants: unknown key {k!r}; expected {en.PhysicalConstants.KEYS}")
        vals[k] = _float(v, f"constants.{k}")
    try:
        return en.PhysicalConstants(**vals)
    except ValueError as e:
        raise ConfigInvalid(f"constants: {e}") from None


def build_mollifier(st) -> MollifierSpec:
    name = st["mollifier"]
    eps = _float(st["eps"], "eps")
    if eps < 0:
        raise ConfigInvalid("eps must be >= 0")
    if str(name).endswith(".csv"):
        if not Path(name).exists():
            raise ConfigInvalid(f"mollifier file not found: {name}")
        return MollifierSpec(load_profile_csv(name), eps)
    try:
        return MollifierSpec(named_profile(name), eps)
    except ValueError as e:
        raise ConfigInvalid(str(e)) from None


def build_solve_config(st) -> SolveConfig:
    tol = None if st["tol"] in (None, "") else _float(st["tol"], "tol")
    cont = None
    if st["continuation"]:
        cont = _floats(st["continuation"], "continuation")
    try:
        return SolveConfig(method=st["method"], tol_gap=tol, max_iter=int(st["max_iter"]),
                           continuation=cont, mode=st["mode"])
    except ValueError as e:
        raise ConfigInvalid(str(e)) from None


def _profile(name, n):
    if str(name).endswith(".csv"):
        if not Path(name).exists():
            raise ConfigInvalid(f"profile file not found: {name}")
        prof = ex.Profile1D.from_csv(name)
        if prof.n != n:
            raise ConfigInvalid(f"{name}: {prof.n} samples but n3 = {n}")
        return prof
    try:
        return ex.Profile1D.named(name, n)
    except ValueError as e:
        raise ConfigInvalid(str(e)) from None


def _read(path, what):
    if not Path(path).exists():
        raise ConfigInvalid(f"{what} file not found: {path}")
    try:
        return read_field(path)
    except ValueError as e:
        raise ConfigInvalid(f"{path}: {e}") from None


def build_data(st, grid, constants) -> tuple[en.InversionData, dict]:
    """Inversion data from a preset, field files, or x3 profiles."""
    info = {}
    if st["preset"]:
        if st["preset"] != "baseball-cap":
            raise ConfigInvalid(f"unknown preset {st['preset']!r}")
        data, _ = ex.baseball_cap(grid)
        info["preset"] = "baseball-cap"
        return data.with_constants(constants), info
    if st["M"] or st["PV"]:
        if not (st["M"] and st["PV"]):
            raise ConfigInvalid("both M and PV field files are required")
        M, PV = _read(st["M"], "M"), _read(st["PV"], "PV")
        try:
            return en.InversionData(M, PV, constants), info
        except ValueError as e:
            raise ConfigInvalid(str(e)) from None
    if st["M_profile"] or st["PV_profile"]:
        n3 = grid.n[2]
        M = _profile(st["M_profile"] or "zero", n3)
        PV = _profile(st["PV_profile"] or "zero", n3)
        if abs(PV.mean()) > 1e-10 * max(1.0, float(np.max(np.abs(PV.values)))):
            raise ConfigInvalid(f"PV profile has nonzero average {PV.mean():.3e}")
        return en.InversionData(M.extrude(grid), project_mean_zero(PV.extrude(grid)), constants), info
    raise ConfigInvalid("no input data: give --preset, --M/--PV files, or --M-profile/--PV-profile")


# ---------------------------------------------------------------------------
# output helpers

def _json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, default=_default) + "\n"


def _default(o):
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(f"cannot serialize {type(o)}")


def _sanitize(obj):
    """Replace non-finite floats by strings so the JSON stays standard."""
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    if isinstance(obj, dict):
        return {k: _sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_sanitize(v) for v in obj]
    return obj


def _write_json(out: Path, name: str, obj) -> Path:
    path = out / name
    atomic_write_text(path, _json(_sanitize(obj)))
    return path


def _csv(header, rows) -> str:
    lines = [",".join(header)]
    for r in rows:
        lines.append(",".join(repr(float(v)) if not isinstance(v, (int, np.integer)) else str(int(v)) for v in r))
    return "\n".join(lines) + "\n"


def _log(out: Path, command: str, status: int):
    stamp = datetime.datetime.now(datetime.timezone.utc).isoformat()
    path = out / "run.log"
    prev = path.read_text() if path.exists() else ""
    atomic_write_text(path, prev + f"{stamp} {command} exit={status}\n")


def _settings_record(st) -> dict:
    # the output directory is left out so reruns elsewhere give identical bytes
    return {k: st[k] for k in sorted(st) if st[k] is not None and k != "out"}


# ---------------------------------------------------------------------------
# commands

def _initial(st, grid):
    if st["p"]:
        return _read(st["p"], "initial p")
    if str(st["random_start"]).lower() in ("1", "true", "yes"):
        return random_field(grid, np.random.default_rng(int(st["seed"])))
    return ScalarField.zeros(grid)


def _phase_rows(ph: en.PhaseField):
    g = ph.H_u.grid
    x1, x2, x3 = g.mesh()
    return zip(x1.ravel(), x2.ravel(), x3.ravel(), ph.H_u.values.ravel(), ph.q.values.ravel(),
               ph.theta_e.values.ravel())


def cmd_solve(st) -> int:
    out = Path(st["out"])
    grid = build_grid(st)
    data, info = build_data(st, grid, build_constants(st))
    cfg = build_solve_config(st)
    moll = build_mollifier(st)
    p0 = _initial(st, grid)
    records = []
    status = EXIT_OK
    try:
        if cfg.continuation is not None:
            p, rep = continuation_solve(p0, data, moll, cfg, records.append)
        elif moll.eps > 0:
            p, rep = solve_eps(p0, data, moll, cfg, records.append)
        else:
            p, rep = solve(p0, data, cfg, records.append)
    except MaxIterExceeded as e:
        p, rep, status = e.best, e.report, EXIT_MAXITER
        print(f"error: {e}", file=sys.stderr)
    out.mkdir(parents=True, exist_ok=True)
    write_field(out / "solution.pqgf", p)
    ph = en.phases(p, data, cfg.mode)
    geo = dg.interface_extract(ph)
    atomic_write_text(out / "phases.csv", _csv(["x1", "x2", "x3", "H_u", "q", "theta_e"], _phase_rows(ph)))
    atomic_write_text(out / "interface.csv", geo.to_csv())
    atomic_write_text(out / "trace.jsonl", "".join(json.dumps(r, sort_keys=True) + "\n" for r in records))
    report = rep.to_dict()
    report.update({"status": status, "settings": _settings_record(st), "input": info,
                   "grid": {"n": list(grid.n), "L": list(grid.L)},
                   "constants": data.constants.as_dict(),
                   "interface_x3_column0": geo.column(0, 0).tolist()})
    _write_json(out, "report.json", report)
    _log(out, "solve", status)
    state = "converged" if status == EXIT_OK else "max-iter reached"
    print(f"{state}: {rep.iterations} iterations, certified distance bound {rep.final_gap_bound:.3e}")
    return status


def cmd_exact1d(st) -> int:
    out = Path(st["out"])
    grid = build_grid(st)
    constants = build_constants(st)
    n3 = grid.n[2]
    if st["preset"] == "baseball-cap" or (not st["M_profile"] and not st["PV_profile"] and not st["preset"]):
        M = ex.Profile1D.named("sin", n3)
        PV = ex.Profile1D.named("zero", n3)
        name = "baseball-cap"
    elif st["preset"]:
        raise ConfigInvalid(f"unknown preset {st['preset']!r}")
    else:
        M = _profile(st["M_profile"] or "zero", n3)
        PV = _profile(st["PV_profile"] or "zero", n3)
        name = "custom"
    try:
        sol = ex.build_exact(PV, M, constants)
    except ValueError as e:
        raise ConfigInvalid(str(e)) from None
    try:
        data = sol.data(grid)
    except ValueError as e:
        raise ConfigInvalid(str(e)) from None
    out.mkdir(parents=True, exist_ok=True)
    write_field(out / "M.pqgf", data.M)
    write_field(out / "PV.pqgf", data.PV)
    write_field(out / "p_exact.pqgf", sol.p_field(grid))
    rows = zip(M.x, M.values, sol.M_shifted.values, sol.PV.values, sol.p.values, sol.theta.values)
    atomic_write_text(out / "profile.csv", _csv(["x3", "M", "M_shifted", "PV", "p", "dp"], rows))
    resid = ops.norm_Hneg1(en.grad_energy(sol.p_field(grid), data, st["mode"]), st["mode"])
    _write_json(out, "exact1d.json", {"case": name, "c": sol.c, "constants": constants.as_dict(),
                                      "residual_Hneg1": resid, "settings": _settings_record(st),
                                      "note": "p solves the inversion for the data (PV, M - c/kappa)"})
    _log(out, "exact1d", EXIT_OK)
    print(f"c = {sol.c!r}; data written with M shifted by c")
    return EXIT_OK


def cmd_sweep_eps(st) -> int:
    out = Path(st["out"])
    grid = build_grid(st)
    constants = build_constants(st)
    if not (st["M"] or st["M_profile"] or st["preset"]):
        st = dict(st, preset="baseball-cap")
    data, info = build_data(st, grid, constants)
    eps_list = _floats(st["eps_list"], "eps_list")
    moll = build_mollifier(st)
    fit = dg.epsilon_sweep(data, moll, eps_list, build_solve_config(st))
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out, "sweep_eps.json", dict(fit.to_dict(), settings=_settings_record(st), C_phi=moll.C_phi))
    atomic_write_text(out / "sweep_eps.csv", fit.to_csv())
    _log(out, "sweep-eps", EXIT_OK)
    print(f"slope {fit.slope:.4f} (r2 {fit.r2:.4f}); envelope satisfied: {fit.bound_satisfied}")
    return EXIT_OK


def _mesh_generator(st, base_grid, constants):
    case = st["case"]
    n1, n2 = base_grid.n[0], base_grid.n[1]
    if case == "baseball-cap":
        def gen(n):
            return ex.baseball_cap(GridSpec((n1, n2, n), base_grid.L[:2] + (2 * math.pi,)))
        return gen
    if case == "manufactured":
        def gen(n):
            g = GridSpec((n1, n2, n), base_grid.L[:2] + (2 * math.pi,))
            sol = ex.build_exact(_profile(st["PV_profile"] or "cos", n),
                                 _profile(st["M_profile"] or "sin+shift:2", n), constants)
            return sol.data(g), sol.p_field(g)
        return gen
    raise ConfigInvalid(f"unknown refinement case {case!r}; expected baseball-cap or manufactured")


def cmd_sweep_mesh(st) -> int:
    out = Path(st["out"])
    grid = build_grid(st)
    gen = _mesh_generator(st, grid, build_constants(st))
    fit = dg.refinement_study(gen, _ints(st["n_list"], "n_list"), build_solve_config(st))
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out, "sweep_mesh.json", dict(fit.to_dict(), settings=_settings_record(st)))
    atomic_write_text(out / "sweep_mesh.csv", fit.to_csv())
    _log(out, "sweep-mesh", EXIT_OK)
    print(f"observed order {fit.slope:.4f} (r2 {fit.r2:.4f}); monotone: {fit.bound_satisfied}")
    return EXIT_OK


def cmd_audit(st, grid_given: bool) -> int:
    out = Path(st["out"])
    grid = build_grid(st) if grid_given else GridSpec.cube(16)
    constants = build_constants(st)
    data = None
    if st["preset"] or st["M"] or st["M_profile"]:
        data, _ = build_data(st, grid, constants)
    elif not constants.is_unit:
        data = en.random_data(grid, np.random.default_rng(int(st["seed"])), constants=constants)
    rep = dg.inequality_audit(data, int(st["trials"]), int(st["seed"]), grid=grid, mode=st["mode"],
                              mollifier=st["mollifier"])
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out, "audit.json", dict(rep.to_dict(), settings=_settings_record(st)))
    _log(out, "audit", EXIT_OK)
    for k, e in rep.entries.items():
        print(f"{'PASS' if e.passed else 'FAIL'} {k}: worst slack {e.worst_slack:.3e}")
    return EXIT_OK if rep.passed else 1


def plot_phase_figure(out: Path, st) -> list:
    """x1-x3 slice of the unsaturated indicator for a two-dimensional example."""
    g = GridSpec((32, 4, 64))
    x1, x2, x3 = g.mesh()
    M = ScalarField(g, np.sin(x3) + 0.5 * np.cos(x1) - 1.0 / math.pi)
    data = en.InversionData(M, ScalarField.zeros(g))
    p, _ = solve(ScalarField.zeros(g), data, SolveConfig(method=METHODS[1], max_iter=5000))
    ph = en.phases(p, data)
    rows = [(a, c, h) for a, c, h in zip(x1[:, 0, :].ravel(), x3[:, 0, :].ravel(), ph.H_u.values[:, 0, :].ravel())]
    path = out / "phase_figure.csv"
    atomic_write_text(path, _csv(["x1", "x3", "H_u"], rows))
    return [path]


def plot_regularisation_figure(out: Path, st) -> list:
    eps = _float(st["eps"], "eps") or 0.5
    m = build_mollifier(dict(st, eps=eps))
    x = np.linspace(-2.0, 2.0, 401)
    unit = m.with_eps(1.0)
    files = []
    for name, y in (("min0", min0(x)), ("F1", min_eps(x, unit)), ("Feps", min_eps(x, m))):
        path = out / f"regularisation_{name}.csv"
        atomic_write_text(path, _csv(["x", name], zip(x, y)))
        files.append(path)
    return files


def plot_sharp_reg_figure(out: Path, st) -> list:
    n = 512
    x = np.linspace(-math.pi, math.pi, n + 1)
    theta = ex.baseball_cap_dp(x)
    M = np.sin(x) - 1.0 / math.pi
    files = []
    for name, y in (("theta", theta), ("M", M)):
        path = out / f"sharp_reg_{name}.csv"
        atomic_write_text(path, _csv(["x3", name], zip(x, y)))
        files.append(path)
    return files


def cmd_plotdata(st) -> int:
    which = st["figure"]
    table = {"phase-figure": plot_phase_figure, "regularisation-figure": plot_regularisation_figure,
             "sharp-reg-figure": plot_sharp_reg_figure}
    if which not in table:
        raise UnknownFigure(f"unknown figure {which!r}; expected one of {FIGURES}")
    out = Path(st["out"])
    out.mkdir(parents=True, exist_ok=True)
    files = table[which](out, st)
    _log(out, f"plotdata {which}", EXIT_OK)
    for f in files:
        print(f)
    return EXIT_OK


def cmd_phases(st) -> int:
    out = Path(st["out"])
    grid = build_grid(st)
    data, _ = build_data(st, grid, build_constants(st))
    if not st["p"]:
        raise ConfigInvalid("phases needs a solution field via --p")
    p = _read(st["p"], "p")
    data.M.check_grid(p)
    ph = en.phases(p, data, st["mode"])
    geo = dg.interface_extract(ph)
    out.mkdir(parents=True, exist_ok=True)
    atomic_write_text(out / "phases.csv", _csv(["x1", "x2", "x3", "H_u", "q", "theta_e"], _phase_rows(ph)))
    atomic_write_text(out / "interface.csv", geo.to_csv())
    coef, cmin = en.agnostic_coefficient(p, data, en.LogisticStep(_float(st["delta"], "delta")), st["mode"])
    _write_json(out, "phases.json", {"unsaturated_fraction": ph.unsaturated_fraction,
                                     "saturated_fraction": ph.saturated_fraction,
                                     "interface_nodes": int(len(ph.interface_cells)),
                                     "agnostic_min_coefficient": cmin,
                                     "settings": _settings_record(st)})
    _log(out, "phases", EXIT_OK)
    print(f"unsaturated fraction {ph.unsaturated_fraction:.4f}; agnostic coefficient min {cmin:.4f}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing

def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="flat key = value settings file")
    p.add_argument("--grid", help="n1,n2,n3")
    p.add_argument("--periods", help="L1,L2,L3")
    p.add_argument("--constants", help="f=..,B_theta_e=..,B_q=..,C_theta_e=..,C_q=..")
    p.add_argument("--mollifier", help="bump, triangular-smoothed, or a y,phi CSV")
    p.add_argument("--eps", type=float, help="mollifier width (0 = no smoothing)")
    p.add_argument("--tol", type=float, help="target certified H1 distance")
    p.add_argument("--max-iter", dest="max_iter", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory")
    p.add_argument("--mode", choices=ops.MODES)
    p.add_argument("--method", choices=METHODS)


def _inputs(p: argparse.ArgumentParser):
    p.add_argument("--preset", help="named data set (baseball-cap)")
    p.add_argument("--M", help="M field file (.pqgf or .csv)")
    p.add_argument("--PV", help="PV field file (.pqgf or .csv)")
    p.add_argument("--M-profile", dest="M_profile", help="x3 profile for M, e.g. sin+shift:2")
    p.add_argument("--PV-profile", dest="PV_profile", help="x3 profile for PV, e.g. cos")


def make_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pvminv", description="PV-and-M inversion by convex energy minimization")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="minimize the inversion energy")
    _common(p)
    _inputs(p)
    p.add_argument("--p", help="initial guess field")
    p.add_argument("--random-start", dest="random_start", action="store_true")
    p.add_argument("--continuation", help="comma-separated eps schedule, e.g. 0.1,0.05,0")

    p = sub.add_parser("exact1d", help="build a closed-form x3-dependent solution")
    _common(p)
    _inputs(p)

    p = sub.add_parser("sweep-eps", help="distance between regularized and exact minimizers")
    _common(p)
    _inputs(p)
    p.add_argument("--eps-list", dest="eps_list")

    p = sub.add_parser("sweep-mesh", help="grid refinement study against exact solutions")
    _common(p)
    p.add_argument("--n-list", dest="n_list")
    p.add_argument("--case", choices=("baseball-cap", "manufactured"))
    p.add_argument("--M-profile", dest="M_profile")
    p.add_argument("--PV-profile", dest="PV_profile")

    p = sub.add_parser("audit", help="randomized check of the convexity inequalities")
    _common(p)
    _inputs(p)
    p.add_argument("--trials", type=int)

    p = sub.add_parser("plotdata", help="write curve data for the standard figures")
    _common(p)
    p.add_argument("figure", help=" | ".join(FIGURES))

    p = sub.add_parser("phases", help="phase split and interface of a given solution")
    _common(p)
    _inputs(p)
    p.add_argument("--p", help="solution field")
    p.add_argument("--delta", type=float, help="width of the logistic step for the agnostic probe")
    return ap


def main(argv=None) -> int:
    ap = make_parser()
    args = ap.parse_args(argv)
    try:
        st = merge_settings(args)
        cmd = args.command
        if cmd == "solve":
            return cmd_solve(st)
        if cmd == "exact1d":
            return cmd_exact1d(st)
        if cmd == "sweep-eps":
            return cmd_sweep_eps(st)
        if cmd == "sweep-mesh":
            return cmd_sweep_mesh(st)
        if cmd == "audit":
            grid_given = args.grid is not None or (args.config and "grid" in read_config_file(args.config))
            return cmd_audit(st, bool(grid_given))
        if cmd == "plotdata":
            return cmd_plotdata(st)
        if cmd == "phases":
            return cmd_phases(st)
    except MaxIterExceeded as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_MAXITER
    except (PVMError, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
