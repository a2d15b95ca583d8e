"""Command-line entry point.

Commands write plain CSV/JSON into ``--out`` and return

* 0 when every check passed,
* 2 on bad input or a failed computation,
* 3 when a computed quantity breaks its tolerance.

Numbers are written with 12 significant digits. CSV bodies contain no
timestamps; the configuration of a run is saved as ``run.json`` next to
its outputs.

Class and point values (``--c``, ``--h``, ``--x``, ``--y``) are comma
separated lists; ``lo:hi:n`` expands to ``n`` evenly spaced values and
vector components are separated by ``;`` (``--c "0.5;1"``). Values that
start with a minus sign need the ``=`` form: ``--c=-2:2:41``.

CSV columns
-----------
alpha-sweep  c, alpha_<route>..., disagreement
beta         h, beta, c_max
mane-potential  x, y, c, k, phi, T, winding
peierls      x, y, c, alpha, h
sets         x0, v0, E, label, c0 (one file per set)
weak-kam     x, u, residual, kink
orbit        t, x_1, v_1, E
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import EnergyDriftExceeded, NotConverged, WeakKamError

EXIT_OK, EXIT_ERROR, EXIT_TOLERANCE = 0, 2, 3
DIGITS = 12
COMMANDS = ("alpha-sweep", "beta", "mane-potential", "peierls", "sets", "weak-kam", "orbit", "regression")


@dataclass
class RunConfig:
    """Everything needed to repeat a run."""
    command: str
    model: str = "pendulum"
    c: list = field(default_factory=list)
    h: list = field(default_factory=list)
    x: list = field(default_factory=list)
    y: list = field(default_factory=list)
    k: float | None = None
    grid: int | None = None
    out: str = "."
    workers: int = 1
    seed: int = 0
    route: str = "all"
    T: float = 10.0
    dt: float = 1e-3
    v0: list = field(default_factory=list)
    criteria: list = field(default_factory=list)
    list_only: bool = False

    def to_json(self):
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text):
        return cls(**json.loads(text))


class UsageError(ValueError):
    pass


def fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.{DIGITS}g}"
    return str(v)


def write_csv(path, head, rows):
    with open(path, "w") as fh:
        fh.write(",".join(head) + "\n")
        for r in rows:
            fh.write(",".join(fmt(v) for v in r) + "\n")


def parse_values(text):
    """``"0,0.5"``, ``"-2:2:21"`` or ``"0.5;1"`` (one vector) into a list of lists."""
    out = []
    if text is None or not text.strip():
        return out
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        if ":" in item:
            parts = item.split(":")
            if len(parts) != 3:
                raise UsageError(f"range {item!r} must be lo:hi:n")
            lo, hi, n = float(parts[0]), float(parts[1]), int(parts[2])
            if n < 1:
                raise UsageError(f"range {item!r} is empty")
            out.extend([[float(v)] for v in np.linspace(lo, hi, n)])
        else:
            out.append([float(v) for v in item.split(";")])
    return out


def _load(cfg):
    from .lagrangian import BUILTIN_MODELS, builtin_model, load_model

    if cfg.model in BUILTIN_MODELS:
        return builtin_model(cfg.model)
    p = Path(cfg.model)
    if not p.exists():
        raise UsageError(f"model {cfg.model!r} is neither a built-in ({', '.join(BUILTIN_MODELS)}) nor a file")
    return load_model(p)


def _need(values, what):
    if not values:
        raise UsageError(f"--{what} needs at least one value")
    return values


def _vec(v, dim, what):
    v = np.asarray(v, float)
    if v.shape != (dim,):
        raise UsageError(f"--{what} values need {dim} component(s), got {len(v)}")
    return v


def _out(cfg):
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "run.json").write_text(cfg.to_json() + "\n")
    return out


# commands ----------------------------------------------------------------------------


def cmd_alpha_sweep(cfg):
    from .duality import CROSS_TOL, ROUTES, AlphaTable, FLAT_TOL, flat_edge

    model = _load(cfg)
    cs = [_vec(c, model.dim, "c") for c in _need(cfg.c, "c")]
    routes = ROUTES if cfg.route == "all" else (cfg.route,)
    for r in routes:
        if r not in ROUTES:
            raise UsageError(f"unknown route {r!r}; choose from {', '.join(ROUTES)} or all")
    out = _out(cfg)
    tables = {r: AlphaTable(model, r, cs, workers=cfg.workers) for r in routes}
    rows, worst = [], 0.0
    for c in cs:
        vals = [tables[r](c) for r in routes]
        spread = max(vals) - min(vals)
        worst = max(worst, spread)
        rows.append([*c, *vals, spread])
    head = [f"c{i}" for i in range(model.dim)] + [f"alpha_{r}" for r in routes] + ["disagreement"]
    write_csv(out / "alpha.csv", head, rows)
    summary = {"max_disagreement": worst, "tolerance": CROSS_TOL}
    if model.dim == 1 and len(cs) >= 3:
        vals = np.array([r[model.dim] for r in rows])
        flat = np.nonzero(vals <= vals.min() + FLAT_TOL * 0.25)[0]
        if len(flat) >= 2:
            tab = tables[routes[0]]
            c0 = float(cs[flat[len(flat) // 2]][0])
            summary["flat"] = [flat_edge(tab, -1.0, c0), flat_edge(tab, 1.0, c0)]
            print("flat of alpha: [{}, {}]".format(*map(fmt, summary["flat"])))
    (out / "alpha-summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    print(f"max route disagreement {fmt(worst)} (tolerance {fmt(CROSS_TOL)})")
    return EXIT_OK if worst <= CROSS_TOL else EXIT_TOLERANCE


def cmd_beta(cfg):
    from .duality import AlphaTable, beta_search

    model = _load(cfg)
    if model.dim != 1:
        raise UsageError("the beta command searches classes in one dimension only")
    hs = [_vec(h, 1, "h")[0] for h in _need(cfg.h, "h")]
    route = "critical-value" if cfg.route == "all" else cfg.route
    tab = AlphaTable(model, route)
    rows = []
    for h in hs:
        b = beta_search(tab, h)
        rows.append([h, b.value, float(b.support_c[0])])
        print(f"beta({fmt(h)}) = {fmt(b.value)}")
    write_csv(_out(cfg) / "beta.csv", ["h", "beta", "c_max"], rows)
    return EXIT_OK


def _alpha_of(model, c):
    from .action import mane_critical_value
    from .lagrangian import OneForm

    return float(mane_critical_value(model, OneForm(c)))


def cmd_mane_potential(cfg):
    from .action import mane_potential
    from .lagrangian import OneForm

    model = _load(cfg)
    d = model.dim
    c = _vec(cfg.c[0], d, "c") if cfg.c else np.zeros(d)
    xs = [_vec(x, d, "x") for x in _need(cfg.x, "x")]
    ys = [_vec(y, d, "y") for y in _need(cfg.y, "y")]
    k = _alpha_of(model, c) if cfg.k is None else cfg.k
    rows = []
    for x in xs:
        for y in ys:
            pv = mane_potential(model, OneForm(c), k, x, y, seed=cfg.seed)
            w = "" if pv.winding is None else ";".join(str(int(a)) for a in pv.winding)
            rows.append([";".join(fmt(a) for a in x), ";".join(fmt(a) for a in y), ";".join(fmt(a) for a in c),
                         k, pv.value, pv.argmin_T if pv.argmin_T is not None else "", w])
            print(f"Phi({fmt(x[0])}, {fmt(y[0])}) = {fmt(pv.value)}")
    write_csv(_out(cfg) / "mane-potential.csv", ["x", "y", "c", "k", "phi", "T", "winding"], rows)
    return EXIT_OK


def cmd_peierls(cfg):
    from .action import peierls_barrier
    from .lagrangian import OneForm

    model = _load(cfg)
    d = model.dim
    c = _vec(cfg.c[0], d, "c") if cfg.c else np.zeros(d)
    xs = [_vec(x, d, "x") for x in _need(cfg.x, "x")]
    ys = [_vec(y, d, "y") for y in cfg.y] if cfg.y else xs
    a = _alpha_of(model, c)
    rows = []
    for x in xs:
        for y in ys:
            h = peierls_barrier(model, OneForm(c), a, x, y, seed=cfg.seed)
            rows.append([";".join(fmt(v) for v in x), ";".join(fmt(v) for v in y), ";".join(fmt(v) for v in c), a, h])
            print(f"h({fmt(x[0])}, {fmt(y[0])}) = {fmt(h)}")
    write_csv(_out(cfg) / "peierls.csv", ["x", "y", "c", "alpha", "h"], rows)
    return EXIT_OK


def cmd_sets(cfg):
    from .sets import (SET_GRID, aubry_set, check_connectivity, check_graph_property, check_inclusions,
                       kernel_tables, mane_set, mather_set, write_report)

    model = _load(cfg)
    if model.dim != 1:
        raise UsageError("the sets command supports one-dimensional models")
    c = _vec(_need(cfg.c, "c")[0], 1, "c")
    a = _alpha_of(model, c)
    nx = cfg.grid or SET_GRID
    tables = kernel_tables(model, c, n=max(256, nx))
    M = mather_set(model, c)
    A = aubry_set(model, c, a, nx=nx, tables=tables)
    N = mane_set(model, c, a, nx=nx, tables=tables)
    out = _out(cfg)
    for s in (M, A, N):
        head, rows = s.to_rows()
        write_csv(out / f"{s.label}.csv", head, rows)
    rep = {"alpha": a, "inclusions": check_inclusions(M, A, N, a),
           "graph": {s.label: check_graph_property(s) for s in (M, A, N)},
           "mane_connected": check_connectivity(N, nx),
           "sizes": {s.label: len(s) for s in (M, A, N)}}
    write_report(rep, out / "sets-report.json")
    print(f"alpha = {fmt(a)}; sizes mather {len(M)}, aubry {len(A)}, mane {len(N)}; "
          f"inclusions {'pass' if rep['inclusions']['pass'] else 'FAIL'}")
    return EXIT_OK if rep["inclusions"]["pass"] else EXIT_TOLERANCE


def cmd_weak_kam(cfg):
    from .lagrangian import OneForm
    from .weak_kam import GRID, solve_weak_kam, subsolution_residual

    model = _load(cfg)
    c = _vec(cfg.c[0], model.dim, "c") if cfg.c else np.zeros(model.dim)
    form = OneForm(c)
    try:
        sol = solve_weak_kam(model, form, n=cfg.grid or GRID)
    except NotConverged as exc:
        print(f"not converged: {exc}", file=sys.stderr)
        return EXIT_TOLERANCE
    out = _out(cfg)
    sol.to_csv(out / "weak-kam.csv", model, form, DIGITS)
    res, _, kink = subsolution_residual(model, form, sol.u, sol.alpha_estimate)
    summary = {"alpha_estimate": sol.alpha_estimate, "residual": sol.residual, "sweeps": sol.sweeps,
               "subsolution_residual": res, "kinks": int(kink.sum())}
    (out / "weak-kam-summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    print(f"alpha estimate {fmt(sol.alpha_estimate)}, residual {fmt(sol.residual)} after {sol.sweeps} sweeps")
    return EXIT_OK


def cmd_orbit(cfg):
    from .dynamics import integrate_el_flow

    model = _load(cfg)
    x0 = _vec(_need(cfg.x, "x")[0], model.dim, "x")
    v0 = _vec(_need(cfg.v0, "v0")[0], model.dim, "v0")
    if not (cfg.T > 0 and cfg.dt > 0):
        raise UsageError("--T and --dt must be positive")
    try:
        orb = integrate_el_flow(model, x0, v0, cfg.T, cfg.dt)
    except EnergyDriftExceeded as exc:
        print(f"energy drift: {exc}", file=sys.stderr)
        return EXIT_TOLERANCE
    orb.to_csv(_out(cfg) / "orbit.csv")
    print(f"{len(orb.t)} samples, energy drift {fmt(orb.drift)}")
    return EXIT_OK


def cmd_regression(cfg):
    from . import acceptance

    if cfg.list_only:
        for c in acceptance.list_criteria():
            print(f"{c['id']:2d}  {c['name']:<18s} {c['description']}")
        return EXIT_OK
    ids = None
    if cfg.criteria:
        ids = [int(v) if str(v).isdigit() else v for v in cfg.criteria]

    def log(r):
        print(f"{r.id:2d} {r.name:<18s} {'PASS' if r.passed else 'FAIL'}  {r.seconds:7.1f} s", flush=True)
        for ch in r.checks:
            if not ch["pass"]:
                print(f"     {ch['name']}: measured {fmt(ch['measured'])}, target {ch['target']}")
        if r.error:
            print("     error: " + r.error.splitlines()[0])

    settings = acceptance.Settings(grid=cfg.grid, workers=cfg.workers, seed=cfg.seed)
    results = acceptance.run(ids, settings, log)
    rep = acceptance.report(results)
    out = _out(cfg)
    (out / "regression.json").write_text(json.dumps(rep, indent=2, sort_keys=True, default=str) + "\n")
    print(f"{rep['n_pass']}/{rep['n']} criteria pass")
    return EXIT_OK if rep["pass"] else EXIT_TOLERANCE


HANDLERS = {"alpha-sweep": cmd_alpha_sweep, "beta": cmd_beta, "mane-potential": cmd_mane_potential,
            "peierls": cmd_peierls, "sets": cmd_sets, "weak-kam": cmd_weak_kam, "orbit": cmd_orbit,
            "regression": cmd_regression}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--model", default="pendulum", help="built-in name or model file (JSON/YAML)")
    common.add_argument("--c", default="", help="cohomology classes: list, lo:hi:n range, ';' for components (--c=-2:2:41)")
    common.add_argument("--h", default="", help="rotation vectors, same syntax as --c")
    common.add_argument("--grid", type=int, default=None, help="base-point grid resolution")
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("--workers", type=int, default=os.cpu_count() or 1,
                        help="worker processes for sweeps (default: all cores)")
    common.add_argument("--seed", type=int, default=0, help="seed for multistart perturbations")
    common.add_argument("--route", default="all", help="alpha route or 'all'")
    ap = argparse.ArgumentParser(prog="weakkam", description=__doc__,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, parents=[common], help=HANDLERS[name].__name__.replace("cmd_", ""))
        if name in ("mane-potential", "peierls", "orbit"):
            p.add_argument("--x", default="", help="points (orbit: initial position)")
        if name in ("mane-potential", "peierls"):
            p.add_argument("--y", default="", help="target points")
        if name == "mane-potential":
            p.add_argument("--k", type=float, default=None, help="energy level (default alpha(c))")
        if name == "orbit":
            p.add_argument("--v0", default="", help="initial velocity")
            p.add_argument("--T", type=float, default=10.0, help="duration")
            p.add_argument("--dt", type=float, default=1e-3, help="time step")
        if name == "regression":
            p.add_argument("--list", action="store_true", help="print the criteria and exit")
            p.add_argument("--criteria", default="", help="comma separated ids or names")
    return ap


def config_from_args(ns):
    return RunConfig(command=ns.command, model=ns.model, c=parse_values(ns.c), h=parse_values(ns.h),
                     x=parse_values(getattr(ns, "x", "")), y=parse_values(getattr(ns, "y", "")),
                     k=getattr(ns, "k", None), grid=ns.grid, out=ns.out, workers=ns.workers, seed=ns.seed,
                     route=ns.route, T=getattr(ns, "T", 10.0), dt=getattr(ns, "dt", 1e-3),
                     v0=parse_values(getattr(ns, "v0", "")),
                     criteria=[s.strip() for s in getattr(ns, "criteria", "").split(",") if s.strip()],
                     list_only=bool(getattr(ns, "list", False)))


def run_config(cfg):
    try:
        return HANDLERS[cfg.command](cfg)
    except (UsageError, WeakKamError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


def main(argv=None):
    ap = build_parser()
    ns = ap.parse_args(argv)
    try:
        cfg = config_from_args(ns)
    except (UsageError, ValueError) as exc:
        ap.print_usage(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    return run_config(cfg)


if __name__ == "__main__":
    sys.exit(main())
