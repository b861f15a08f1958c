"""Batch front-end: parse a run configuration, build the kernels, execute
the requested check suites, and write JSON/CSV artifacts plus rendered
figures for the plot-ready series.

Config grammar (documented in the README): UTF-8 text, flat `[section]`
headers, `key = value` lines, `#` comments.  Unknown keys and duplicate
keys are rejected; all validation errors are reported together.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import time
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from . import bounds as bounds_mod
from . import hypotheses as hyp_mod
from . import kernel as kernel_mod
from . import layer as layer_mod
from .ambient import KernelEvaluator
from .errors import ConfigurationError, HeatLayerError
from .geometry import DomainSpec, ManifoldModel

SCHEMA_VERSION = 1

CHECK_NAMES = ("ambient", "layer", "kernel", "hypotheses", "bounds",
               "pipeline")
# execution prerequisites (dependency closure, noted in the report)
CHECK_DEPS = {
    "layer": ("ambient",),
    "kernel": ("layer",),
    "hypotheses": (),
    "bounds": ("kernel",),
    "pipeline": ("kernel", "bounds"),
}

_SCHEMA = {
    "manifold": {"kind": str, "scale": str},
    "domain": {"shape": str, "params": str},
    "grids": {"time_count": int, "grading": float, "boundary_count": int,
              "volume_order": int, "t_floor": float, "horizon": float,
              "grid_nx": int, "grid_ny": int, "grid_nt": int},
    "checks": {"run": str},
    "tolerances": {"mass": float, "reproducing": float, "neumann": float,
                   "series_agreement": float},
    "run": {"seed": int, "out_dir": str, "workers": int,
            "dirichlet_oracle": bool},
}

_DEFAULTS = {
    "manifold": {"kind": "circle", "scale": "1.0"},
    "domain": {"shape": "arc", "params": "0.0, 1.5707963267948966"},
    "grids": {"time_count": 96, "grading": 2.0, "boundary_count": 32,
              "volume_order": 16, "t_floor": 0.02, "horizon": 1.0,
              "grid_nx": 8, "grid_ny": 8, "grid_nt": 5},
    "checks": {"run": "ambient, layer, kernel"},
    "tolerances": {"mass": 1e-3, "reproducing": 1e-2, "neumann": 1e-2,
                   "series_agreement": 1e-8},
    "run": {"seed": 0, "out_dir": "heatlayer-out", "workers": 1,
            "dirichlet_oracle": False},
}


@dataclass
class RunConfig:
    manifold: dict
    domain: dict
    grids: dict
    checks: list
    tolerances: dict
    run: dict

    def echo(self) -> dict:
        return {"manifold": self.manifold, "domain": self.domain,
                "grids": self.grids, "checks": self.checks,
                "tolerances": self.tolerances,
                "run": {k: v for k, v in self.run.items()}}


class ConfigErrors(ConfigurationError):
    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


def _coerce(raw: str, typ, where, errors):
    try:
        if typ is bool:
            low = raw.strip().lower()
            if low in ("true", "yes", "1", "on"):
                return True
            if low in ("false", "no", "0", "off"):
                return False
            raise ValueError(raw)
        return typ(raw.strip())
    except ValueError:
        errors.append(f"{where}: cannot parse {raw!r} as {typ.__name__}")
        return None


def parse_config(text: str, overrides=()) -> RunConfig:
    """Parse and validate; raises ConfigErrors listing every problem."""
    errors = []
    values = {}
    section = None
    seen = set()
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if stripped.startswith("[") and stripped.endswith("]"):
            section = stripped[1:-1].strip()
            if section not in _SCHEMA:
                errors.append(f"line {lineno}: unknown section "
                              f"[{section}]")
                section = None
            continue
        if "=" not in stripped:
            errors.append(f"line {lineno}: expected key = value")
            continue
        if section is None:
            errors.append(f"line {lineno}: key outside any [section]")
            continue
        key, raw = (s.strip() for s in stripped.split("=", 1))
        if key not in _SCHEMA[section]:
            errors.append(f"line {lineno}: unknown key {section}.{key}")
            continue
        if (section, key) in seen:
            errors.append(f"line {lineno}: duplicate key {section}.{key}")
            continue
        seen.add((section, key))
        val = _coerce(raw, _SCHEMA[section][key], f"line {lineno} "
                      f"({section}.{key})", errors)
        if val is not None:
            values.setdefault(section, {})[key] = val
    for ov in overrides:
        if "=" not in ov:
            errors.append(f"--set {ov!r}: expected section.key=value")
            continue
        path, raw = ov.split("=", 1)
        if "." not in path:
            errors.append(f"--set {ov!r}: expected section.key=value")
            continue
        sec, key = path.split(".", 1)
        if sec not in _SCHEMA or key not in _SCHEMA[sec]:
            errors.append(f"--set: unknown key {sec}.{key}")
            continue
        val = _coerce(raw, _SCHEMA[sec][key], f"--set {path}", errors)
        if val is not None:
            values.setdefault(sec, {})[key] = val

    merged = {sec: dict(defaults) for sec, defaults in _DEFAULTS.items()}
    for sec, kv in values.items():
        merged[sec].update(kv)

    checks = [c.strip() for c in merged["checks"]["run"].split(",")
              if c.strip()]
    for c in checks:
        if c not in CHECK_NAMES:
            errors.append(f"checks.run: unknown check {c!r} "
                          f"(expected subset of {list(CHECK_NAMES)})")
    cfg = RunConfig(merged["manifold"], merged["domain"], merged["grids"],
                    checks, merged["tolerances"], merged["run"])
    if not errors:
        try:
            build_geometry(cfg)
        except HeatLayerError as exc:
            errors.append(f"domain/manifold: {exc}")
        if cfg.grids["time_count"] < 8:
            errors.append("grids.time_count must be >= 8")
        if not (0 < cfg.grids["t_floor"] < cfg.grids["horizon"]):
            errors.append("grids.t_floor must lie in (0, horizon)")
    if errors:
        raise ConfigErrors(errors)
    return cfg


def build_geometry(cfg: RunConfig):
    kind = cfg.manifold["kind"]
    scale = [float(s) for s in str(cfg.manifold["scale"]).split(",")]
    if kind == "circle":
        m = ManifoldModel.circle(*scale)
    elif kind == "sphere2":
        m = ManifoldModel.sphere2(*scale)
    elif kind == "flat-torus2":
        m = ManifoldModel.flat_torus2(*scale)
    else:
        raise ConfigurationError(
            f"manifold.kind must be circle, sphere2 or flat-torus2, "
            f"got {kind!r}")
    params = [float(s) for s in str(cfg.domain["params"]).split(",")]
    omega = DomainSpec(m, (cfg.domain["shape"], *params))
    return m, omega


# ---------------------------------------------------------------------------
# runner
# ---------------------------------------------------------------------------

def _closure(checks):
    wanted = list(checks)
    added = []
    i = 0
    while i < len(wanted):
        for dep in CHECK_DEPS.get(wanted[i], ()):
            if dep not in wanted:
                wanted.append(dep)
                added.append(dep)
        i += 1
    ordered = [c for c in CHECK_NAMES if c in wanted]
    return ordered, added


def run(cfg: RunConfig) -> dict:
    """Execute the requested checks; returns the report dict (also
    written to out_dir/report.json with CSV artifacts)."""
    out = Path(cfg.run["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    ordered, auto_added = _closure(cfg.checks)
    m, omega = build_geometry(cfg)
    ev = KernelEvaluator(m)
    g = cfg.grids
    tg = layer_mod.TimeGrid(g["horizon"], g["time_count"], g["grading"])
    report = {"schema": SCHEMA_VERSION, "config": cfg.echo(),
              "auto_enabled": auto_added, "checks": {}, "timing": {}}
    state = {}

    runners = {
        "ambient": _check_ambient, "layer": _check_layer,
        "kernel": _check_kernel, "hypotheses": _check_hypotheses,
        "bounds": _check_bounds, "pipeline": _check_pipeline,
    }
    failed_stage = None
    for name in ordered:
        t0 = time.perf_counter()
        try:
            verdict = runners[name](cfg, m, omega, ev, tg, state, out)
        except HeatLayerError as exc:
            verdict = {"status": "fail",
                       "error": f"{type(exc).__name__}: {exc}"}
            failed_stage = failed_stage or name
        report["checks"][name] = verdict
        report["timing"][name] = round(time.perf_counter() - t0, 3)
    for name in CHECK_NAMES:
        if name not in ordered:
            report["checks"][name] = {"status": "skip",
                                      "reason": "not requested"}
    ok = all(v.get("status") != "fail" for v in report["checks"].values())
    report["pass"] = ok
    stable_blob = {k: v for k, v in report.items() if k != "timing"}
    (out / "report.json").write_text(
        json.dumps({**stable_blob, "timing": report["timing"]},
                   indent=2, sort_keys=True, default=_jsonable) + "\n")
    return report


def _jsonable(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.bool_):
        return bool(obj)
    raise TypeError(f"not JSON-serializable: {type(obj)}")


def _write_csv(path, header, rows):
    with open(path, "w", newline="\n") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(header)
        for row in rows:
            wr.writerow(row)


def _check_ambient(cfg, m, omega, ev, tg, state, out):
    from .geometry import manifold_quadrature
    pts, w = manifold_quadrature(m, 48)
    t = 0.5 * cfg.grids["horizon"]
    x0 = pts[len(pts) // 3]
    mass = float(np.dot(w, ev.p_matrix(pts, x0[None, :], t)[:, 0]))
    nd = ev.near_diag_lower(t_max=cfg.grids["horizon"])
    details = {"mass": mass, "mass_error": abs(mass - 1.0),
               "near_diag_eta": nd["eta"]}
    ok = abs(mass - 1.0) < 1e-6 and nd["pass"]
    if m.kind == "sphere2":
        reg = ev.antipodal_exponent()
        details["antipodal_slope"] = reg["slope"]
        ok = ok and abs(reg["slope"] + 1.5) < 0.05
        _write_csv(out / "antipodal.csv", ["log_t", "log_scaled_kernel"],
                   list(zip(np.log(reg["t_values"]), reg["log_values"])))
        state["antipodal"] = reg
    state["ambient_ok"] = ok
    return {"status": "pass" if ok else "fail", **details}


def _check_layer(cfg, m, omega, ev, tg, state, out):
    g = cfg.grids
    system = layer_mod.LayerSystem(ev, omega, None, tg, g["boundary_count"])
    state["system"] = system
    vol_pts, _ = omega.volume_quadrature(6)
    targets = vol_pts[:: max(1, len(vol_pts) // 3)]
    t_series = layer_mod.TimeGrid(min(0.5, g["horizon"]), g["time_count"],
                                  g["grading"])
    sys_half = layer_mod.LayerSystem(ev, omega, None, t_series,
                                     g["boundary_count"])
    tab_s = sys_half.series(targets)
    tab_m = sys_half.march(targets)
    denom = float(np.max(np.abs(tab_m.values))) or 1.0
    agree = float(np.max(np.abs(tab_s.values - tab_m.values))) / denom
    norms = tab_s.order_norms
    ratios = [norms[j + 1] / norms[j] for j in range(len(norms) - 1)]
    decay_ok = all(r < 1.0 for r in ratios[2:]) if len(ratios) > 2 else True
    ok = agree <= cfg.tolerances["series_agreement"] and decay_ok
    _write_csv(out / "series_decay.csv", ["order", "sup_norm"],
               list(enumerate(norms, start=1)))
    state["series_norms"] = norms
    return {"status": "pass" if ok else "fail",
            "series_march_agreement": agree,
            "decay_ratios": [float(r) for r in ratios]}


def _make_nk(cfg, ev, omega, tg):
    return kernel_mod.NeumannKernel(
        ev, omega, tg, cfg.grids["boundary_count"],
        cfg.grids["volume_order"])


def _dirichlet_profile(omega):
    """Wrong-boundary-condition oracle (arc domains only; test flag)."""
    kind = omega.shape[0]
    if kind != "arc":
        raise ConfigurationError(
            "dirichlet_oracle mode is defined for arc domains only")
    r = omega.manifold.scale[0]
    theta0 = omega.shape[1]
    length = (omega.shape[2] - omega.shape[1]) * r

    def prof(x, ys, t):
        xv = (float(np.asarray(x).ravel()[0]) - theta0) * r
        ys = np.atleast_2d(np.asarray(ys, float))
        return np.array([kernel_mod.exact_interval_dirichlet_kernel(
            length, xv, (float(y[0]) - theta0) * r, t) for y in ys])
    return prof


def _check_kernel(cfg, m, omega, ev, tg, state, out):
    nk = _make_nk(cfg, ev, omega, tg)
    state["nk"] = nk
    tol = cfg.tolerances
    horizon = cfg.grids["horizon"]
    nodes = nk.volume_nodes
    x0 = nodes[len(nodes) // 2]
    times = [0.1 * horizon, 0.5 * horizon, horizon]
    masses = [nk.mass(x0, t) for t in times]
    mass_err = max(abs(v - 1.0) for v in masses)
    pairs = [(nodes[len(nodes) // 4], nodes[3 * len(nodes) // 4]),
             (x0, nodes[len(nodes) // 5])]
    rv = kernel_mod.reproducing_check(nk, 0.4 * horizon, 0.2 * horizon,
                                      pairs, tolerance=tol["reproducing"])
    if m.dim == 1:
        psi = np.exp(-((nodes[:, 0] - x0[0]) / 0.2) ** 2)
    else:
        from .geometry import distance
        psi = np.exp(-(np.array([distance(m, y, x0) for y in nodes])
                       / 0.3) ** 2)
    q_fn = None
    if cfg.run["dirichlet_oracle"]:
        prof = _dirichlet_profile(omega)

        def q_fn(x, y, t):
            return float(prof(x, np.atleast_2d(np.asarray(y, float)), t)[0])
    nr = kernel_mod.neumann_residual(nk, psi, [0.3 * horizon], q_fn=q_fn,
                                     tolerance=tol["neumann"])
    verdicts = [rv, nr]
    kernel_mod.verdicts_to_json(verdicts, out / "kernel_checks.json")
    slice_t = 0.2 * horizon
    prof_vals = nk.q_profile(x0, nodes, slice_t)
    _write_csv(out / "kernel_slice.csv",
               [*(f"y{i}" for i in range(m.dim)), "q"],
               [list(y) + [v] for y, v in zip(nodes, prof_vals)])
    ok = mass_err <= tol["mass"] and rv.passed and nr.passed
    return {"status": "pass" if ok else "fail",
            "mass_error": mass_err,
            "reproducing_residual": rv.residual,
            "neumann_residual": nr.residual,
            "dirichlet_oracle": bool(cfg.run["dirichlet_oracle"])}


def _check_hypotheses(cfg, m, omega, ev, tg, state, out):
    seed = cfg.run["seed"]
    diam = math.sqrt(omega.volume) if m.dim == 2 else omega.volume
    radii = [0.1 * diam, 0.2 * diam, 0.4 * diam]
    vlb = hyp_mod.check_vlb(omega, radii, count=32, seed=seed)
    dp = hyp_mod.check_dp(omega, [(radii[0], radii[1]),
                                  (radii[1], radii[2])],
                          count=32, seed=seed)
    pts = hyp_mod.sample_domain(omega, 12, seed=seed + 1)
    cc = hyp_mod.check_cc(omega, list(zip(pts[:6], pts[6:])))
    sc = hyp_mod.check_strong_convexity(omega)
    cone = hyp_mod.check_interior_cone(omega, 0.25, 0.5 * radii[0],
                                       count=16, seed=seed)
    vgc = hyp_mod.check_vgc(m, radii, count=16, seed=seed)
    verdicts = [vlb, dp, cc, sc, cone, vgc]
    hyp_mod.verdicts_to_json(verdicts, out / "hypotheses.json")
    hyp_mod.ratios_to_csv(vlb, out / "vlb_ratios.csv")
    # strong convexity is descriptive (some domains are legitimately
    # non-convex); the gate is VLB/DP/CC/cone/vgc
    gate = [vlb, dp, cc, cone, vgc]
    ok = all(v.passed for v in gate)
    return {"status": "pass" if ok else "fail",
            **{v.name: bool(v.passed) for v in verdicts},
            "constants": {v.name: {k: vv for k, vv in v.constants.items()
                                   if np.isscalar(vv)} for v in verdicts}}


def _profile_for_bounds(cfg, state):
    if cfg.run["dirichlet_oracle"]:
        return _dirichlet_profile(state["nk"].omega)
    return state["nk"].q_profile


def _check_bounds(cfg, m, omega, ev, tg, state, out):
    g = cfg.grids
    prof = _profile_for_bounds(cfg, state)
    grid = bounds_mod.default_grid(omega, g["grid_nx"], g["grid_ny"],
                                   g["grid_nt"], g["horizon"], g["t_floor"])
    rep9 = bounds_mod.fit_bound(prof, omega,
                                bounds_mod.GaussianBoundSpec(
                                    "lower-vlb", g["horizon"]), grid)
    nd = bounds_mod.near_diag_fit(prof, omega,
                                  horizon=min(0.5, g["horizon"]),
                                  t_floor=g["t_floor"])
    up_prod, up_geo = bounds_mod.upper_volume_fit(prof, omega, grid)
    reports = [rep9, nd, up_prod, up_geo]
    bounds_mod.report_to_json(reports, out / "bounds.json")
    bounds_mod.margins_to_csv(rep9, out / "margins.csv")
    ok = rep9.constant > 1e-6 and nd.extras["C_flat"] > 0 \
        and math.isfinite(up_geo.constant)
    return {"status": "pass" if ok else "fail",
            "lower_vlb_c": rep9.constant,
            "near_diag_C_flat": nd.extras["C_flat"],
            "up_prodroduct_C": up_prod.constant,
            "up_geoeomean_C": up_geo.constant}


def _check_pipeline(cfg, m, omega, ev, tg, state, out):
    if cfg.run["dirichlet_oracle"]:
        return {"status": "skip",
                "reason": "pipeline needs the assembled kernel, not the "
                          "oracle substitute"}
    rep = bounds_mod.proof_pipeline_check(
        state["nk"], horizon=cfg.grids["horizon"],
        t_floor=cfg.grids["t_floor"])
    (Path(out) / "pipeline.json").write_text(
        json.dumps(rep.to_json(), indent=2, default=_jsonable) + "\n")
    return {"status": "pass" if rep.all_passed else "fail",
            "stages": {s.name: bool(s.passed) for s in rep.stages}}


# ---------------------------------------------------------------------------
# plot data
# ---------------------------------------------------------------------------

PLOT_SERIES = {
    "series-decay": ("series_decay.csv", "order", "sup_norm", True),
    "antipodal": ("antipodal.csv", "log_t", "log_scaled_kernel", False),
    "margins": ("margins.csv", "t", "min_log_margin", False),
    "kernel-slice": ("kernel_slice.csv", None, "q", False),
}


def export_plot_data(report_dir, which: str) -> Path:
    """Locate the plot-ready CSV for a named series and render it to a
    PNG figure next to it; returns the CSV path."""
    out = Path(report_dir)
    if not (out / "report.json").exists():
        raise ConfigurationError("no completed checks: report.json missing")
    if which not in PLOT_SERIES:
        raise ConfigurationError(
            f"unknown series {which!r}; available: "
            f"{sorted(PLOT_SERIES)}")
    fname, xcol, ycol, logy = PLOT_SERIES[which]
    path = out / fname
    if not path.exists():
        raise ConfigurationError(
            f"series {which!r} was not produced by this run "
            f"(missing {fname})")
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, data = rows[0], rows[1:]
    if not data:
        raise ConfigurationError(f"series {which!r} is empty")
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    fig, ax = plt.subplots(figsize=(6, 4))
    ys = np.array([float(r[header.index(ycol)]) for r in data])
    if xcol is not None:
        xs = np.array([float(r[header.index(xcol)]) for r in data])
    else:
        xs = np.arange(len(ys))
    ax.plot(xs, ys, marker="o", lw=1)
    if logy:
        ax.set_yscale("log")
    ax.set_xlabel(xcol or "index")
    ax.set_ylabel(ycol)
    ax.set_title(which)
    fig.tight_layout()
    fig.savefig(out / f"{which}.png", dpi=120)
    plt.close(fig)
    return path


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="heatlayer",
        description="boundary-corrected heat-kernel construction and "
                    "verification")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="execute a configured check run")
    p_run.add_argument("config", help="path to the config file")
    p_run.add_argument("--set", action="append", default=[],
                       metavar="SECTION.KEY=VALUE",
                       help="override a config key")
    p_run.add_argument("--out", default=None, help="output directory "
                       "(overrides run.out_dir)")
    p_plot = sub.add_parser("plot", help="render a plot-ready series")
    p_plot.add_argument("report_dir")
    p_plot.add_argument("series")
    args = parser.parse_args(argv)

    if args.command == "plot":
        try:
            path = export_plot_data(args.report_dir, args.series)
        except ConfigurationError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
        print(f"wrote {args.series}.png alongside {path}")
        return 0

    try:
        text = Path(args.config).read_text()
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return 2
    overrides = list(args.set)
    if args.out:
        overrides.append(f"run.out_dir={args.out}")
    try:
        cfg = parse_config(text, overrides)
    except ConfigErrors as exc:
        for e in exc.errors:
            print(f"config error: {e}", file=sys.stderr)
        return 2
    report = run(cfg)
    for name, verdict in report["checks"].items():
        status = verdict.get("status", "?")
        print(f"{name:12s} {status}")
    print(f"report: {Path(cfg.run['out_dir']) / 'report.json'}")
    return 0 if report["pass"] else 1


if __name__ == "__main__":
    sys.exit(main())
