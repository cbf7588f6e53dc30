"""fhom: batch front-end for the homogenization engine.

Exit codes: 0 success, 1 other runtime failure, 2 invalid configuration,
3 solver non-convergence, 4 audit failure under --strict.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import config as cfg
from . import fenchel, fields, surface
from .cell_problem import f_hom
from .errors import MagnetohomError, NonConvergence
from .materials import audit_assumptions
from .outputs import config_hash, write_csv, write_json

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG, EXIT_SOLVER, EXIT_AUDIT = 0, 1, 2, 3, 4
COMMANDS = ("eval", "table", "gamma", "project", "fenchel", "audit", "validate")


def log(level: str, stage: str, message: str) -> None:
    print(json.dumps({"level": level, "stage": stage, "message": message}), file=sys.stderr)


class Run:
    def __init__(self, rc: cfg.RunConfig, out_dir: Path, strict: bool):
        self.rc = rc
        out = rc.section("output")
        self.dir = out_dir
        self.stem = out.get("stem", rc.command)
        self.figures = out.get("figures", True)
        self.strict = strict
        self.hash = config_hash(rc.raw)
        self.exit = EXIT_OK

    def path(self, suffix: str) -> Path:
        return self.dir / f"{self.stem}{suffix}"

    def figure(self, fn, *args, suffix=".png", **kw):
        if self.figures:
            fn(*args, self.path(suffix), **kw)

    def audit_failed(self, what: str):
        log("warning", "audit", f"{what} failed")
        if self.strict:
            self.exit = EXIT_AUDIT


def _points(rc):
    return [(np.asarray(p["G"], float), np.asarray(p["B"], float)) for p in rc.raw["points"]]


def cmd_eval(run: Run):
    from .plotting import plot_field_slice

    rc = run.rc
    n = rc.numerics
    rows, records = [], []
    for i, (G, B) in enumerate(_points(rc)):
        res = f_hom(G, B, rc.model, N=n["N"], k_max=n["k_max"], solver=rc.solver)
        print(json.dumps({"fhom": res.value, "k_used": res.k_used}))
        rows.append([*G.ravel().tolist(), *B.tolist(), res.value, res.k_used, res.solution.grad_norm])
        records.append({"G": G.tolist(), "B": B.tolist(), **res.as_dict(),
                        "rigid_residual": res.solution.rigid_residual,
                        "div_residual": res.solution.div_residual})
        if i == 0:
            run.figure(plot_field_slice, res.solution.beta.values, suffix="_beta.png",
                       title="beta fluctuation, x3 = 1/2")
            run.figure(plot_field_slice, res.solution.phi.values, suffix="_phi.png",
                       title="phi fluctuation, x3 = 1/2")
    write_csv(run.path(".csv"), surface.CSV_HEADER, rows)
    write_json(run.path(".json"), {"config_hash": run.hash, "points": records})


def cmd_table(run: Run):
    from .plotting import plot_table

    rc = run.rc
    n, grid = rc.numerics, rc.raw["grid"]
    Gs, Bs = surface.axis_grid(grid["G_axes"], grid["G_values"], grid["B_values"])
    log("info", "table", f"{len(Gs) * len(Bs)} points at N={n['N']}")
    table = surface.tabulate(rc.model, Gs, Bs, N=n["N"], k_max=n["k_max"], solver=rc.solver,
                             threads=rc.threads, config=rc.raw)
    table.to_csv(run.path(".csv"))
    report = {"config_hash": table.config_hash, "model": table.model_id, "N": table.N,
              "n_points": len(table.points), "failed": table.failed}
    if len(table.points) - len(table.failed) >= 1:
        growth = surface.audit_growth_coercivity(table, rc.model)
        report["growth"] = growth.as_dict()
        if not growth.passed:
            run.audit_failed("growth/coercivity audit")
    if len(table.points) - len(table.failed) >= 2:
        report["lipschitz"] = surface.audit_lipschitz(table).as_dict()
    write_json(run.path(".json"), report)
    run.figure(plot_table, table, title=f"{table.model_id}, N={table.N}")
    if table.failed:
        log("error", "solve", f"{len(table.failed)} table points did not converge")
        run.exit = EXIT_SOLVER


def cmd_gamma(run: Run):
    from .plotting import plot_gamma

    rc = run.rc
    g = rc.raw["gamma"]
    rep = surface.gamma_check(rc.model, g["lambda"], g["B0"], g["epsilons"], N_micro=rc.numerics["N"],
                              solver=rc.solver, displacement_bc=g.get("displacement_bc", "dirichlet"))
    out = rep.as_dict()
    out["config_hash"] = run.hash
    write_json(run.path(".json"), out)
    run.figure(plot_gamma, rep)
    print(json.dumps({"target": rep.target, "gaps": rep.gaps}))


def cmd_project(run: Run):
    from .plotting import plot_field_slice

    p = run.rc.section("project")
    N, count, seed = p.get("N", 16), p.get("count", 100), run.rc.numerics["seed"]
    rep = fields.projection_suite(N, count, seed)
    rep["config_hash"] = run.hash
    write_json(run.path(".json"), rep)
    B = np.random.default_rng(seed).standard_normal((N, N, N, 3))
    run.figure(plot_field_slice, fields.project_div_free_array(B), title="projected field, x3 = 1/2")
    if not rep["passed"]:
        run.audit_failed("projection suite")
    print(json.dumps({k: rep[k] for k in ("max_div", "max_idempotence", "max_residual_ratio")}))


def cmd_fenchel(run: Run):
    from .plotting import plot_conjugate

    rc = run.rc
    f = rc.raw["fenchel"]
    theta = fenchel.BUILTINS[f["function"]](**f.get("params", {}))
    pts = f.get("points") or [{"B": [1.0] + [0.0] * (theta.d - 1), "G": [0.0] * theta.k}]
    rows, header = [], None
    for p in pts:
        G = np.asarray(p.get("G", [0.0] * theta.k), float)
        B = np.asarray(p["B"], float)
        if G.size != theta.k or B.size != theta.d:
            raise cfg.ConfigError(f"point dimensions must be k={theta.k}, d={theta.d}")
        r = fenchel.conjugate(theta, G, B)
        header = ([f"G{i + 1}" for i in range(theta.k)] + [f"B{i + 1}" for i in range(theta.d)]
                  + ["value"] + [f"M{i + 1}" for i in range(theta.d)] + ["radius", "kkt_residual"])
        rows.append([*G.tolist(), *B.tolist(), r.value, *np.asarray(r.argmax).tolist(),
                     r.search_radius_used, r.kkt_residual])
    write_csv(run.path(".csv"), header, rows)
    report = {"config_hash": run.hash, "function": theta.name, "n_points": len(rows)}
    ns = f.get("bounds_samples", 0)
    if ns and theta.growth is not None:
        b = fenchel.audit_fenchel_bounds(theta, samples=ns, seed=rc.numerics["seed"])
        report["bounds"] = b.as_dict()
        if not b.gc_ok:
            run.audit_failed("conjugate growth bounds")
    write_json(run.path(".json"), report)
    # radial profile along the first point's B direction
    G0 = np.asarray(pts[0].get("G", [0.0] * theta.k), float)
    u = np.asarray(pts[0]["B"], float)
    u = u / np.linalg.norm(u) if np.linalg.norm(u) > 0 else np.eye(theta.d)[0]
    radii = np.linspace(0, 2 * max(1.0, float(np.linalg.norm(pts[0]["B"]))), 21)
    vals = [fenchel.conjugate(theta, G0, t * u).value for t in radii]
    run.figure(plot_conjugate, radii, vals, label=f"{theta.name} conjugate")


def cmd_audit(run: Run):
    from .plotting import plot_audit

    rc = run.rc
    a = rc.section("audit")
    rep = audit_assumptions(rc.model, a.get("samples", 1000), a.get("box_radius", 5.0),
                            seed=rc.numerics["seed"])
    out = rep.as_dict()
    out["config_hash"] = run.hash
    out["model"] = rc.model.name
    write_json(run.path(".json"), out)
    run.figure(plot_audit, rep.ratios)
    print(json.dumps({"passed": rep.passed, "failures": rep.failures}))
    if not rep.passed:
        run.audit_failed("assumption audit (" + ", ".join(rep.failures) + ")")


HANDLERS = {"eval": cmd_eval, "table": cmd_table, "gamma": cmd_gamma, "project": cmd_project,
            "fenchel": cmd_fenchel, "audit": cmd_audit}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fhom", description="Homogenized magnetoelastic energy densities")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("-c", "--config", required=True, help="JSON run configuration")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="dotted-path override, e.g. numerics.N=16 (repeatable)")
        sp.add_argument("--out", help="output directory (overrides output.dir)")
        sp.add_argument("--threads", type=int, help="worker processes for tabulation")
        sp.add_argument("--strict", action="store_true", help="exit 4 when an audit fails")
        sp.add_argument("--seed", type=int, help="overrides numerics.seed")
    return ap


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        raw = cfg.load(args.config)
        if not isinstance(raw, dict):
            raise cfg.ConfigError("config must be a JSON object")
        overrides = list(args.set)
        if args.threads is not None:
            overrides.append(f"threads={args.threads}")
        if args.seed is not None:
            overrides.append(f"numerics.seed={args.seed}")
        raw = cfg.apply_overrides(raw, overrides)
        if args.command != "validate" and raw.get("command") != args.command:
            raw = {**raw, "command": args.command}
        rc = cfg.validate(raw)
    except (ValueError, MagnetohomError) as exc:
        log("error", "validate", f"{type(exc).__name__}: {exc}")
        return EXIT_CONFIG
    if args.command == "validate":
        log("info", "validate", f"{args.config} is valid (command {rc.command})")
        return EXIT_OK
    out_dir = Path(args.out or rc.section("output").get("dir", "fhom_out"))
    job = Run(rc, out_dir, args.strict)
    try:
        HANDLERS[rc.command](job)
    except NonConvergence as exc:
        log("error", "solve", f"{exc} (iterations={exc.iterations}, grad_norm={exc.grad_norm})")
        return EXIT_SOLVER
    except (ValueError, MagnetohomError) as exc:
        # parameter problems detected during the run are configuration errors
        code = EXIT_CONFIG if isinstance(exc, ValueError) else EXIT_RUNTIME
        log("error", rc.command, f"{type(exc).__name__}: {exc}")
        return code
    log("info", rc.command, f"outputs written to {out_dir}")
    return job.exit


def main(argv=None) -> None:
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
