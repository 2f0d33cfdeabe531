"""Command-line driver: ``zollkit <command> --config run.toml --out results/``.

Exit codes: 0 when every case meets its threshold, 1 when some case misses
it, 2 for configuration errors, 3 when a case raises a numerical error.
"""

from __future__ import annotations

import argparse
import csv
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import disks as D
from . import twistor as T
from . import zoll as Z
from .config import COMMANDS, ExperimentConfig, linspace_spec, load_config
from .errors import ConfigError

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.17g}"
    return str(x)


@dataclass
class CaseResult:
    index: int
    name: str
    passed: bool
    metrics: dict = field(default_factory=dict)
    error: Optional[str] = None
    seconds: float = 0.0
    rows: list = field(default_factory=list)


@dataclass
class RunReport:
    command: str
    cases: list

    @property
    def exit_code(self) -> int:
        if any(c.error for c in self.cases):
            return EXIT_NUMERIC
        return EXIT_OK if all(c.passed for c in self.cases) else EXIT_FAIL

    def text(self) -> str:
        out = [f"command = {self.command}", f"cases = {len(self.cases)}",
               f"passed = {sum(c.passed for c in self.cases)}", f"exit_code = {self.exit_code}", ""]
        for c in self.cases:
            status = "ERROR" if c.error else ("PASS" if c.passed else "FAIL")
            out.append(f"[case {c.index}] {c.name}: {status}")
            for k, v in c.metrics.items():
                out.append(f"  {k} = {fmt(v)}")
            if c.error:
                out.append(f"  error = {c.error}")
            out.append(f"  seconds = {c.seconds:.3f}")
        return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# builders
# ---------------------------------------------------------------------------

def build_profile(cfg: ExperimentConfig) -> Z.AxisymProfiles:
    s = cfg.get("profile")
    fam = s["family"]
    if fam == "round":
        p = Z.AxisymProfiles.round()
    elif fam == "bump":
        p = Z.AxisymProfiles.bump(s["eps"], s["d"], s["delta"])
    elif fam == "table":
        if not s["csv"]:
            raise ConfigError("[profile] family = 'table' needs csv")
        p = Z.AxisymProfiles.from_csv(cfg.resolve(s["csv"]), s["delta0"])
    elif fam == "ansatz":
        p = Z.AxisymProfiles.from_ansatz(Z.AnsatzProfile.cubic(s["amplitude"]))
    else:
        raise ConfigError(f"unknown profile family {fam!r}")
    if s["variant"] not in Z.VARIANTS:
        raise ConfigError(f"unknown spray variant {s['variant']!r}")
    return p.with_variant(s["variant"])


def build_band(cfg: ExperimentConfig) -> D.BandEmbedding:
    s = cfg.get("band")
    if s["family"] == "zero":
        return D.BandEmbedding.zero(s["R"])
    if s["family"] == "bump":
        return D.BandEmbedding.bump(s["eps"], tuple(s["center"]), tuple(s["widths"]), s["R"], s["shape"])
    if s["family"] == "table":
        if not s["csv"]:
            raise ConfigError("[band] family = 'table' needs csv")
        return D.BandEmbedding.from_csv(cfg.resolve(s["csv"]), s["R"])
    raise ConfigError(f"unknown band family {s['family']!r}")


def build_slice(cfg: ExperimentConfig) -> T.RealSliceData:
    s = cfg.get("slice")
    if s["gamma"] not in ("round", "bump"):
        raise ConfigError(f"unknown gamma {s['gamma']!r}")
    if s["g"] not in ("none", "bump"):
        raise ConfigError(f"unknown g {s['g']!r}")
    amp = complex(s["amp_re"], s["amp_im"]) if s["gamma"] == "bump" else 0j
    g_amp = s["g_amp"] if s["g"] == "bump" else 0.0
    try:
        return T.RealSliceData.bumped(amp, s["center"], s["width"], g_amp, s["g_center"], s["g_width"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


BUILDERS: dict = {"profile": build_profile, "band": build_band, "slice": build_slice}


def initial_grid(cfg: ExperimentConfig):
    g = cfg.get("grid")
    phi = linspace_spec(g["phi"], "phi")
    psi = linspace_spec(g["psi"], "psi")
    return [(float(a), float(b)) for a in phi for b in psi]


# ---------------------------------------------------------------------------
# case workers (module level so they pickle)
# ---------------------------------------------------------------------------

def _closure_case(p, ic, opts):
    d = Z.closure_check(p, Z.ProjectedState(*ic), opts["tol"], opts["horizon_factor"])
    m = {"phi0": d.phi0, "psi0": d.psi0, "period": d.period, "closure_error": d.closure_error,
         "holonomy": d.theta_holonomy}
    row = [d.phi0, d.psi0, d.period, d.closure_error, d.theta_holonomy, float("nan")]
    return d.closure_error < opts["threshold"], m, [row]


def _conjugacy_case(p, ic, opts, horizon_factor):
    d = Z.closure_check(p, Z.ProjectedState(*ic), opts["tol"], horizon_factor)
    m = {"phi0": d.phi0, "psi0": d.psi0, "closure_error": d.closure_error}
    ok = True
    count = None
    if opts["method"] in ("variational", "both"):
        count = Z.zoll_conjugacy(p, d, opts["tol"])
        m["conjugacy_variational"] = count
        ok &= count == opts["expected"]
    if opts["method"] in ("kappa", "both"):
        ck, drift = Z.zoll_conjugacy_kappa(p, d, opts["tol"])
        m["conjugacy_kappa"] = ck
        m["wronskian_drift"] = drift
        ok &= ck == opts["expected"] and drift < opts["wronskian_threshold"]
        count = ck if count is None else count
    row = [d.phi0, d.psi0, d.period, d.closure_error, d.theta_holonomy, count]
    return bool(ok), m, [row]


def _portrait_case(p, ic, opts):
    rep = Z.integrate_projected_orbit(p, Z.ProjectedState(*ic), opts["tol"])
    t, y = rep.orbit.sample(opts["samples"])
    rows = [[ic[0], ic[1], t[k], y[0, k], y[1, k], y[2, k]] for k in range(t.size)]
    m = {"period": rep.orbit.period, "symmetry_error": rep.symmetry_error,
         "conserved_drift": rep.conserved_drift}
    return True, m, rows


class Built:
    """Picklable stand-in for a profile, band or slice; rebuilt from the config in workers."""

    _cache: dict = {}

    def __init__(self, kind: str, cfg: ExperimentConfig):
        self.kind = kind
        self.cfg = cfg
        self.key = (kind, repr(sorted(cfg.sections.items())), str(cfg.path))

    def get(self):
        obj = Built._cache.get(self.key)
        if obj is None:
            obj = BUILDERS[self.kind](self.cfg)
            Built._cache[self.key] = obj
        return obj

    def __getstate__(self):
        return {"kind": self.kind, "cfg": self.cfg, "key": self.key}


def built(kind: str, cfg: ExperimentConfig) -> Built:
    b = Built(kind, cfg)
    b.get()  # build in the parent so config errors surface before any work starts
    return b


def _run_case(args):
    index, name, fn, fargs = args
    t0 = time.perf_counter()
    try:
        fargs = [a.get() if isinstance(a, Built) else a for a in fargs]
        ok, m, rows = fn(*fargs)
        return CaseResult(index, name, bool(ok), m, None, time.perf_counter() - t0, rows)
    except Exception as exc:  # reported, mapped to exit code 3
        return CaseResult(index, name, False, {}, f"{type(exc).__name__}: {exc}",
                          time.perf_counter() - t0, [])


def _execute(tasks, jobs: int):
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            return list(ex.map(_run_case, tasks))
    return [_run_case(t) for t in tasks]


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(header)
        for r in rows:
            wr.writerow([fmt(x) if x is not None else "" for x in r])


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

DIAG_HEADER = ["phi0", "psi0", "period", "closure_error", "holonomy", "conjugacy"]


def cmd_closure(cfg, out: Path, jobs: int) -> RunReport:
    p = built("profile", cfg)
    opts = cfg.get("closure")
    tasks = [(i, f"ic({a:.6g},{b:.6g})", _closure_case, (p, (a, b), opts))
             for i, (a, b) in enumerate(initial_grid(cfg))]
    res = _execute(tasks, jobs)
    write_csv(out / "closure.csv", DIAG_HEADER, [r for c in res for r in c.rows])
    return RunReport("closure", res)


def cmd_conjugacy(cfg, out: Path, jobs: int) -> RunReport:
    p = built("profile", cfg)
    opts = cfg.get("conjugacy")
    hf = cfg.get("closure")["horizon_factor"]
    tasks = [(i, f"ic({a:.6g},{b:.6g})", _conjugacy_case, (p, (a, b), opts, hf))
             for i, (a, b) in enumerate(initial_grid(cfg))]
    res = _execute(tasks, jobs)
    write_csv(out / "conjugacy.csv", DIAG_HEADER, [r for c in res for r in c.rows])
    return RunReport("conjugacy", res)


def cmd_flow_portrait(cfg, out: Path, jobs: int) -> RunReport:
    p = built("profile", cfg)
    opts = cfg.get("flow_portrait")
    tasks = [(i, f"ic({a:.6g},{b:.6g})", _portrait_case, (p, (a, b), opts))
             for i, (a, b) in enumerate(initial_grid(cfg))]
    res = _execute(tasks, jobs)
    write_csv(out / "flow_portrait.csv", ["phi0", "psi0", "t", "phi", "theta", "psi"],
              [r for c in res for r in c.rows])
    return RunReport("flow-portrait", res)


def _disk_chain(band, w, opts):
    sol = D.solve_family(band, [w], opts["N"], opts["tol"], jacobian=opts["jacobian"],
                         c1_threshold=opts["c1_threshold"], w_max=opts["w_max"])[0]
    m = {"w_re": w.real, "w_im": w.imag, "residual": sol.residual_norm,
         "iterations": len(sol.history) - 1, "tail": sol.tail,
         "boundary_on_band": sol.boundary_on_band_error()}
    ok = sol.residual_norm < opts["threshold"] and m["boundary_on_band"] < opts["band_threshold"]
    if band.name == "zero":
        m["flat_match"] = D.compare_solutions(sol, D.flat_disk(w, opts["N"]))
        ok &= m["flat_match"] < opts["flat_threshold"]
    sol.band = None  # bands may hold closures; the parent reattaches its own copy
    return bool(ok), m, [sol]


def cmd_disks(cfg, out: Path, jobs: int) -> RunReport:
    band = built("band", cfg)
    opts = cfg.get("disks")
    ws = []
    for w in opts["w"]:
        if not (isinstance(w, list) and len(w) == 2):
            raise ConfigError("[disks] w entries must be [re, im] pairs")
        ws.append(complex(w[0], w[1]))
    tasks = [(i, f"w({w.real:.6g},{w.imag:.6g})", _disk_chain, (band, w, opts)) for i, w in enumerate(ws)]
    res = _execute(tasks, jobs)
    sols = [c.rows[0] for c in res if c.rows]
    for s in sols:
        s.band = band.get()
    coeff_rows = []
    for s in sols:
        for name, loop in (("u1", s.u1), ("u2", s.u2), ("F1", s.F1), ("F2", s.F2)):
            for mm, a in zip(loop.modes, loop.coeffs):
                if a != 0:
                    coeff_rows.append([s.w.real, s.w.imag, name, mm / 2, a.real, a.imag])
    write_csv(out / "disk_coefficients.csv", ["w_re", "w_im", "loop", "freq", "re", "im"], coeff_rows)
    D.export_points(sols, out / "disk_points.csv", opts["points"])
    for c in res:
        c.rows = []
    if opts["foliation"] and len(sols) == len(res) and len(sols) > 1:
        t0 = time.perf_counter()
        try:
            rep = D.foliation_check(sols)
            m = {"min_cloud_distance": rep.min_cloud_distance,
                 "max_intersections": int(np.max(np.abs(rep.intersections))),
                 "conic_counts": ",".join(map(str, rep.conic_counts)),
                 "min_band_distance": rep.min_band_distance}
            res.append(CaseResult(len(res), "foliation", rep.ok, m, None, time.perf_counter() - t0))
        except Exception as exc:
            res.append(CaseResult(len(res), "foliation", False, {}, f"{type(exc).__name__}: {exc}",
                                  time.perf_counter() - t0))
    return RunReport("disks", res)


def _twistor_phi_case(sl, phi, opts):
    res, step = opts["resolution"], opts["step"]
    m = T._cached_projection(sl, float(phi), res)
    a = T.a_of_phi(m)
    da = T.a_derivative(sl, phi, step, res)
    G1, G2 = T.gammas_from_a(a, da, phi)
    fit = T.p_from_diskmap(sl, phi, step=step, resolution=res)
    F = T.F_from_G(sl, phi, step=step, resolution=res)
    dev = max(abs(fit.gamma1 - G1), abs(fit.gamma2 - G2))
    metrics = {"phi": phi, "a_re": a.real, "a_im": a.imag, "Gamma1": G1, "Gamma2": G2,
               "fit_Gamma1": fit.gamma1, "fit_Gamma2": fit.gamma2, "roundtrip_deviation": dev,
               "F": F, "boundary_on_curve": T.boundary_on_curve_error(m)}
    beta = float(T.beta_from_a(a, G2))
    h = float(np.real(1 / a) / abs(np.cos(phi)))
    return dev < opts["threshold"], metrics, [[phi, a.real, a.imag, G1, G2, F, beta, h]]


def _spray_roundtrip_case(h_eps, variant, phis, threshold):
    p = Z.AxisymProfiles.bump(h_eps).with_variant(variant)
    rep = T.roundtrip_consistency(p, phis)
    m = {"variant": variant, "eps": h_eps, "max_deviation": rep.max_deviation,
         "gamma1": rep.gamma1, "gamma2": rep.gamma2, "beta": rep.beta}
    return rep.max_deviation < threshold, m, []


def cmd_twistor(cfg, out: Path, jobs: int) -> RunReport:
    sl = built("slice", cfg)
    opts = cfg.get("twistor")
    phis = linspace_spec(opts["phi"], "twistor.phi")
    tasks = []
    if opts["reconstruct"]:
        tasks = [(i, f"phi({ph:.6g})", _twistor_phi_case, (sl, float(ph), opts)) for i, ph in enumerate(phis)]
    grid = np.linspace(0.05, np.pi / 2 - 0.05, 64)
    tasks.append((len(tasks), "spray-roundtrip", _spray_roundtrip_case,
                  (opts["h_eps"], opts["variant"], grid, opts["threshold"])))
    res = _execute(tasks, jobs)
    write_csv(out / "twistor.csv", ["phi", "a_re", "a_im", "Gamma1", "Gamma2", "F", "beta", "h"],
              [r for c in res for r in c.rows])
    return RunReport("twistor", res)


def _lagrangian_case(sl, opts, phis):
    om = T.SymplecticData(opts["lam"], opts["sign"])
    thetas = np.linspace(0.0, 2 * np.pi, int(opts["theta"]), endpoint=False)
    r = T.lagrangian_residual(sl, phis, thetas, om)
    ok = r < opts["threshold"] if opts["expect"] == "lagrangian" else r > opts["threshold"]
    return ok, {"residual": r, "expect": opts["expect"]}, [[r]]


def _normalization_case(lam):
    val = T.normalization_integral(lam)
    err = abs(val - 4 * np.pi * lam)
    return err < 1e-6, {"integral": val, "target": 4 * np.pi * lam, "error": err}, []


def cmd_lagrangian(cfg, out: Path, jobs: int) -> RunReport:
    sl = built("slice", cfg)
    opts = cfg.get("lagrangian")
    if opts["expect"] not in ("lagrangian", "non-lagrangian"):
        raise ConfigError("[lagrangian] expect must be 'lagrangian' or 'non-lagrangian'")
    phis = linspace_spec(opts["phi"], "lagrangian.phi")
    tasks = [(0, "slice", _lagrangian_case, (sl, opts, phis)),
             (1, "normalization", _normalization_case, (opts["lam"],))]
    res = _execute(tasks, jobs)
    write_csv(out / "lagrangian.csv", ["residual"], res[0].rows)
    return RunReport("lagrangian", res)


COMMAND_TABLE: dict = {
    "closure": cmd_closure,
    "conjugacy": cmd_conjugacy,
    "flow-portrait": cmd_flow_portrait,
    "disks": cmd_disks,
    "twistor": cmd_twistor,
    "lagrangian": cmd_lagrangian,
}


def run(config_path, command: Optional[str] = None, out=None, jobs: int = 1,
        tol: Optional[float] = None) -> RunReport:
    cfg = load_config(config_path, command, tol)
    out = Path(out) if out else Path(config_path).parent / "results"
    out.mkdir(parents=True, exist_ok=True)
    report = COMMAND_TABLE[cfg.command](cfg, out, jobs)
    (out / "report.txt").write_text(report.text())
    return report


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="zollkit", description=__doc__.splitlines()[0])
    ap.add_argument("command", nargs="?", choices=COMMANDS,
                    help="experiment to run (defaults to 'command' in the config)")
    ap.add_argument("--config", required=True, help="TOML experiment file")
    ap.add_argument("--out", default=None, help="output directory (default: results/ next to the config)")
    ap.add_argument("--jobs", type=int, default=1, help="parallel cases")
    ap.add_argument("--tol", type=float, default=None, help="override every integrator/solver tolerance")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    if args.jobs < 1:
        print("error: --jobs must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        report = run(args.config, args.command, args.out, args.jobs, args.tol)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(report.text(), end="")
    return report.exit_code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
